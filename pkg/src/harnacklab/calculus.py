"""Discrete differential quantities of a positive field and pointwise checks.

All stencils are second order. Nodes where a stencil is undefined carry NaN
and are dropped by :func:`mask_for`.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .fields import ScalarField

QUANTITIES = ("grad_sq", "laplacian", "q", "hess_f_norm_sq", "lap_f", "u_log_u")

# tau = C_TOL * max(h, dt)^2 per model, from calibrate_c_tol on the reference
# scenarios (see tests/test_calculus.py::test_pinned_tolerances_cover_calibration)
C_TOL = {
    "ConformalCircle": 20.0,
    "ConformalTorus": 20.0,
    "ShrinkingSphere": 20.0,
    "StaticHyperbolic": 1.0,
}


@dataclass(frozen=True, eq=False)
class QuantityField:
    name: str
    values: np.ndarray
    order: int = 2


def tolerance(field: ScalarField) -> float:
    return C_TOL[field.model.kind] * max(field.grid.h_max, field.grid.dt) ** 2


def drift_tolerance(field: ScalarField) -> float:
    return C_TOL[field.model.kind] * (field.grid.h_max**2 + field.grid.dt**2)


def mask_for(field: ScalarField, *arrays, t_lo: float = 0.0) -> np.ndarray:
    return field.geometry.applicability(*arrays, t_lo=t_lo)


def masked_sup(values, mask) -> float:
    if not mask.any():
        raise ValueError("empty mask")
    return float(np.max(np.abs(values[mask])))


def differentiate(field: ScalarField, name: str) -> QuantityField:
    geom = field.geometry
    u = field.values
    if name == "grad_sq":
        vals = geom.grad_sq(u)
    elif name == "laplacian":
        vals = geom.laplacian(u)
    elif name == "q":
        vals = geom.grad_sq(u) / u
    elif name == "hess_f_norm_sq":
        vals = geom.hess_norm_sq(np.log(u))
    elif name == "lap_f":
        vals = geom.laplacian(np.log(u))
    elif name == "u_log_u":
        vals = u * np.log(u)
    else:
        raise ValueError(f"unsupported quantity {name!r}; choose from {QUANTITIES}")
    return QuantityField(name, vals)


def identity_residuals(field: ScalarField) -> tuple[QuantityField, QuantityField]:
    """Residuals of the two heat-equation identities for u log u and q = |grad u|^2/u.

    (1/2 Lap - d_t)(u log u) = 1/2 q
    (1/2 Lap - d_t) q = u |Hess f|^2 + R_t(grad u, grad u)/u,  f = log u
    """
    geom = field.geometry
    u = field.values
    if u.shape[0] < 3:
        raise ValueError("grid too coarse in time for the d/dt stencils")
    ulogu = u * np.log(u)
    q = geom.grad_sq(u) / u
    res1 = -geom.heat_drift(ulogu) - 0.5 * q
    rhs2 = u * geom.hess_norm_sq(np.log(u)) + geom.r_form(u) / u
    res2 = -geom.heat_drift(q) - rhs2
    return QuantityField("identity_u_log_u", res1), QuantityField("identity_q", res2)


def hessian_bound_check(field: ScalarField) -> QuantityField:
    """Slack of u|Hess f|^2 >= (u/n)(Lap f)^2."""
    u = field.values
    f = np.log(u)
    geom = field.geometry
    slack = u * geom.hess_norm_sq(f) - u / field.model.n * geom.laplacian(f) ** 2
    return QuantityField("hessian_bound_slack", slack)


def rt_lower_residual(field: ScalarField, k) -> QuantityField:
    """(1/2 Lap - d_t) q + k(t) q, nonnegative when R_t >= -k(t)."""
    geom = field.geometry
    u = field.values
    q = geom.grad_sq(u) / u
    kt = k(field.times) if callable(k) else np.full(field.times.shape, float(k))
    res = -geom.heat_drift(q) + geom.time_shape(kt) * q
    return QuantityField("rt_lower_residual", res)


def hess_dtg_inequality_check(field: ScalarField, alpha: float, a: float, b: float,
                              bounds) -> QuantityField:
    """Slack of |Hess f|^2 - alpha<dt g, Hess f> >= (a alpha/n)(Lap f)^2 - (alpha n/4b) max(k2,k3)^2."""
    if a <= 0 or b <= 0 or abs(a + b - 1.0 / alpha) > 1e-12 * max(1.0, 1.0 / alpha):
        raise ValueError("need a, b > 0 with a + b = 1/alpha")
    geom = field.geometry
    n = field.model.n
    f = np.log(field.values)
    kmax_sq = max(bounds.k2, bounds.k3) ** 2
    slack = (geom.hess_norm_sq(f) - alpha * geom.dtg_dot_hess(f)
             - a * alpha / n * geom.laplacian(f) ** 2 + alpha * n / (4 * b) * kmax_sq)
    return QuantityField("hess_dtg_slack", slack)


def bianchi_field(geom) -> np.ndarray:
    """div(dt g) - 1/2 grad tr_g(dt g) at every node, per unit sigma'/sigma.

    Uses dt g = sigma' g_hat; returns the covector for g_hat, shape (*space, n).
    """
    model = geom.model
    with np.errstate(invalid="ignore", divide="ignore"):
        e, de = model.unit_diag(geom.points)
    gam = geom.gamma
    n = geom.n
    ghat = e[..., :, None] * np.eye(n)
    dg = np.einsum("...ij,jk->...ijk", de, np.eye(n))  # [i, j, k] = d_i g_jk
    nabla = (dg - np.einsum("...mij,...mk->...ijk", gam, ghat)
             - np.einsum("...mik,...jm->...ijk", gam, ghat))
    div = np.einsum("...i,...iij->...j", 1.0 / e, nabla)
    # tr_g(dt g) = n sigma'/sigma is constant in space; keep the stencil for generality
    trace = np.sum(np.ones_like(e), axis=-1).astype(float)
    grad_tr = geom.unit_gradient(trace)
    return div - 0.5 * grad_tr


def laplacian_variation_check(model, field: ScalarField, delta: float | None = None) -> QuantityField:
    """d/dt (Lap_{g_t} v) at frozen v against -<dt g, Hess v> - <B, grad v>."""
    geom = field.geometry
    v = field.values
    t = field.times
    delta = field.grid.dt if delta is None else delta
    sig_p = np.asarray(model.scale(t + delta), float)
    sig_m = np.asarray(model.scale(t - delta), float)
    lhs = (geom.laplacian(v, sigma=sig_p) - geom.laplacian(v, sigma=sig_m)) / (2 * delta)
    ratio = geom.time_shape(geom.dsigma / geom.sigma)
    b_hat = bianchi_field(geom)
    grad = geom.unit_gradient(v)
    b_dot = ratio * np.sum(b_hat * grad / geom.e, axis=-1) / geom.time_shape(geom.sigma)
    rhs = -geom.dtg_dot_hess(v) - b_dot
    return QuantityField("laplacian_variation", lhs - rhs)


def q_two_ways(field: ScalarField) -> QuantityField:
    """|grad u|^2/u minus 4|grad sqrt(u)|^2."""
    geom = field.geometry
    u = field.values
    return QuantityField("q_difference", geom.grad_sq(u) / u - 4.0 * geom.grad_sq(np.sqrt(u)))


def residual_sup(field: ScalarField, quantity: QuantityField, t_lo: float = 0.0) -> float:
    mask = mask_for(field, quantity.values, t_lo=t_lo)
    return masked_sup(quantity.values, mask)


def calibrate_c_tol(make_field, levels: int = 3) -> dict:
    """Refinement study of the identity residuals.

    ``make_field(level)`` returns the field at refinement ``level`` (h halves
    per level). Returns the observed constants sup|res|/h^2 and the ratios.
    """
    sups, hs = [], []
    for level in range(levels):
        fld = make_field(level)
        r1, r2 = identity_residuals(fld)
        sups.append(max(residual_sup(fld, r1), residual_sup(fld, r2)))
        hs.append(max(fld.grid.h_max, fld.grid.dt))
    consts = [s / h**2 for s, h in zip(sups, hs)]
    ratios = [sups[i] / sups[i + 1] for i in range(levels - 1)]
    return {"sup": sups, "h": hs, "c": consts, "ratios": ratios, "c_max": max(consts)}
