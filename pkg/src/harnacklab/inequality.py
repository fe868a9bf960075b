"""Pointwise evaluation of the Hamilton- and Li-Yau-type gradient inequalities.

Every report carries lhs, rhs and slack = rhs - lhs on the space-time grid,
together with the mask of nodes where the inequality is claimed. A report
passes when no masked node has slack below -tau(h).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .bounds import (FOUR_MINUS_PI_SQ, BoundSet, CutoffProfile, cutoff_profile,
                     phi_grad_phi_sup)
from .calculus import C_TOL
from .drift import hamilton_weight
from .export import grid_csv
from .fields import ScalarField, sup_norm
from .geometry import StaticHyperbolic

PI = math.pi


@dataclass(frozen=True, eq=False)
class InequalityReport:
    theorem: str
    lhs: np.ndarray
    rhs: np.ndarray
    slack: np.ndarray
    mask: np.ndarray
    min_slack: float
    violations: int
    worst_node: tuple
    constants: dict
    tolerance: float
    grid: dict

    @property
    def passed(self) -> bool:
        return self.violations == 0

    def worst_time(self, times) -> float:
        return float(times[self.worst_node[0]])

    def to_dict(self) -> dict:
        return {"theorem": self.theorem, "constants": self.constants,
                "min_slack": self.min_slack, "violations": self.violations,
                "worst_node": list(self.worst_node), "tolerance": self.tolerance,
                "grid": self.grid, "pass": self.passed,
                "masked_nodes": int(np.count_nonzero(self.mask))}

    def to_csv(self, grid) -> str:
        return grid_csv(grid, {"lhs": self.lhs, "rhs": self.rhs, "slack": self.slack,
                               "mask": self.mask})


def _report(theorem, field: ScalarField, lhs, rhs, mask, constants) -> InequalityReport:
    slack = rhs - lhs
    mask = mask & np.isfinite(slack)
    if not mask.any():
        raise ValueError(f"{theorem}: applicability mask is empty")
    tol = C_TOL[field.model.kind] * max(field.grid.h_max, field.grid.dt) ** 2
    masked = np.where(mask, slack, np.inf)
    idx = np.unravel_index(int(np.argmin(masked)), masked.shape)
    return InequalityReport(
        theorem, lhs, rhs, slack, mask, float(masked[idx]),
        int(np.count_nonzero(slack[mask] < -tol)), tuple(int(i) for i in idx),
        constants, tol, field.grid.to_dict())


def _t_lo(field, t_lo):
    return 4 * field.grid.dt if t_lo is None else float(t_lo)


def _time_mask(field, t_lo, t_hi=None):
    geom = field.geometry
    mask = geom.applicability(t_lo=t_lo)
    if t_hi is not None:
        mask &= geom.time_shape(field.times <= t_hi + 1e-12)
    return mask


def _ratios(field):
    """|grad u|^2/u^2 and Laplace u / u."""
    geom = field.geometry
    u = field.values
    return geom.grad_sq(u) / u**2, geom.laplacian(u) / u


def _tgrid(field):
    t = field.geometry.time_shape(field.times)
    with np.errstate(divide="ignore"):
        return 1.0 / t


def _check_alpha(alpha):
    if alpha is None or not alpha > 1:
        raise ValueError(f"alpha must exceed 1 (got {alpha})")


def _local_profile(field, x0, rho):
    model = field.model
    if isinstance(model, StaticHyperbolic) and rho > model.R - 3 * field.grid.h[0]:
        raise ValueError("ball B_rho exits the radial chart")
    return cutoff_profile(field, x0, rho)


def _ball_sup_u(field, profile: CutoffProfile) -> float:
    """||u|| over the closed ball, all times."""
    return sup_norm(field, mask=(profile.dist <= profile.rho) & np.isfinite(profile.dist))


def _grad_sup(field, profile: CutoffProfile) -> float:
    ratio, _ = _ratios(field)
    mask = profile.inside & field.geometry.applicability(ratio, t_lo=0.0)
    return float(np.sqrt(np.max(ratio[mask])))


# ---------------------------------------------------------------------------
# Hamilton type


def hamilton_global(field: ScalarField, k=None, bounds: BoundSet | None = None,
                    t_lo: float | None = None) -> InequalityReport:
    """|grad u|^2/u^2 <= 2 / (int_0^t e^{-int_s^t k}) * log(||u|| / u)."""
    if k is None:
        if bounds is None:
            raise ValueError("hamilton_global needs k or a BoundSet certificate")
        k = bounds.k_sup if bounds.profile == "constant" else bounds.k
    u = field.values
    norm = sup_norm(field)
    lhs, _ = _ratios(field)
    with np.errstate(divide="ignore", invalid="ignore"):
        weight = 2.0 / hamilton_weight(k, field.times)
        rhs = field.geometry.time_shape(weight) * np.log(norm / u)
    mask = _time_mask(field, _t_lo(field, t_lo))
    consts = {"k": float(k) if not callable(k) else "profile", "sup_u": norm,
              "compact": not isinstance(field.model, StaticHyperbolic)}
    return _report("hamilton_global", field, lhs, rhs, mask, consts)


def hamilton_local(field: ScalarField, x0, rho: float, bounds: BoundSet,
                   t_lo: float | None = None) -> InequalityReport:
    n = field.model.n
    profile = _local_profile(field, x0, rho)
    norm = _ball_sup_u(field, profile)
    bracket_c = 4 * PI**2 * (n + 7) / (FOUR_MINUS_PI_SQ * rho**2) + (PI**2 + 16) * (bounds.k1 + bounds.k2) / FOUR_MINUS_PI_SQ
    lhs, _ = _ratios(field)
    rhs = 2.0 * (_tgrid(field) + bracket_c) * (4.0 + np.log(norm / field.values)) ** 2
    mask = _time_mask(field, _t_lo(field, t_lo)) & profile.half & profile.usable
    consts = {"rho": rho, "x0": list(profile.x0), "k1": bounds.k1, "k2": bounds.k2,
              "bracket_constant": bracket_c, "sup_u_ball": norm}
    return _report("hamilton_local", field, lhs, rhs, mask, consts)


def hamilton_local_general(field: ScalarField, profile: CutoffProfile, bounds: BoundSet,
                           t_lo: float | None = None) -> InequalityReport:
    """Cutoff form: 2(1/t + C7/phi^2 + k1 + k2)(4 + log(||u||_D/u))^2 on {phi > 0}."""
    c7 = profile.sup(profile.c_phi_field(7.0))
    norm = _ball_sup_u(field, profile)
    lhs, _ = _ratios(field)
    with np.errstate(divide="ignore", invalid="ignore"):
        rhs = 2.0 * (_tgrid(field) + c7 / profile.values**2 + bounds.k1 + bounds.k2) \
            * (4.0 + np.log(norm / field.values)) ** 2
    mask = _time_mask(field, _t_lo(field, t_lo)) & profile.inside & profile.usable & (profile.values > 0)
    consts = {"c_phi_7": c7, "k1": bounds.k1, "k2": bounds.k2, "sup_u_D": norm,
              "rho": profile.rho}
    return _report("hamilton_local_general", field, lhs, rhs, mask, consts)


# ---------------------------------------------------------------------------
# Li-Yau type


def _curvature_tail(bounds: BoundSet, alpha: float) -> float:
    return (max(bounds.k2, bounds.k3) + bounds.k3 + math.sqrt(2 * bounds.k4)
            + (bounds.k1 + bounds.k4) / (alpha - 1.0))


def liyau_global(field: ScalarField, alpha: float, bounds: BoundSet,
                 t_lo: float | None = None) -> InequalityReport:
    _check_alpha(alpha)
    n = field.model.n
    q, lap = _ratios(field)
    lhs = q - alpha * lap
    tail = _curvature_tail(bounds, alpha)
    rhs = n * alpha**2 * (2.0 * _tgrid(field) + tail) + 0 * lhs
    mask = _time_mask(field, _t_lo(field, t_lo))
    consts = {"alpha": alpha, **{k: getattr(bounds, k) for k in ("k1", "k2", "k3", "k4")},
              "curvature_tail": tail}
    return _report("liyau_global", field, lhs, rhs, mask, consts)


def liyau_local(field: ScalarField, alpha: float, x0, rho: float, bounds: BoundSet,
                t_lo: float | None = None) -> InequalityReport:
    _check_alpha(alpha)
    n = field.model.n
    profile = _local_profile(field, x0, rho)
    q, lap = _ratios(field)
    lhs = q - alpha * lap
    cutoff_c = (8 * PI**2 / (FOUR_MINUS_PI_SQ * rho**2) * (n + 3 + alpha**2 * n / (alpha - 1.0))
                + 16 * PI * (bounds.k1 + bounds.k2) / FOUR_MINUS_PI_SQ)
    tail = _curvature_tail(bounds, alpha)
    rhs = n * alpha**2 * (2.0 * _tgrid(field) + cutoff_c + tail) + 0 * lhs
    mask = _time_mask(field, _t_lo(field, t_lo)) & profile.half & profile.usable
    consts = {"alpha": alpha, "rho": rho, "x0": list(profile.x0), "cutoff_constant": cutoff_c,
              "curvature_tail": tail,
              **{k: getattr(bounds, k) for k in ("k1", "k2", "k3", "k4")}}
    return _report("liyau_local", field, lhs, rhs, mask, consts)


def liyau_local_general(field: ScalarField, alpha: float, profile: CutoffProfile,
                        bounds: BoundSet, t_lo: float | None = None) -> InequalityReport:
    _check_alpha(alpha)
    n = field.model.n
    c_alpha = profile.sup(profile.c_phi_field(3.0 + alpha**2 * n / (alpha - 1.0)))
    q, lap = _ratios(field)
    lhs = q - alpha * lap
    tail = _curvature_tail(bounds, alpha)
    with np.errstate(divide="ignore", invalid="ignore"):
        rhs = n * alpha**2 * (2.0 * _tgrid(field) + 2.0 * c_alpha / profile.values**2 + tail)
    mask = _time_mask(field, _t_lo(field, t_lo)) & profile.inside & profile.usable & (profile.values > 0)
    consts = {"alpha": alpha, "c_phi_alpha": c_alpha, "curvature_tail": tail, "rho": profile.rho}
    return _report("liyau_local_general", field, lhs, rhs, mask, consts)


def liyau_lower_order_local(field: ScalarField, x0, rho: float, bounds: BoundSet,
                            grad_sup: float | None = None,
                            t_lo: float | None = None) -> InequalityReport:
    n = field.model.n
    profile = _local_profile(field, x0, rho)
    g = _grad_sup(field, profile) if grad_sup is None else float(grad_sup)
    q, lap = _ratios(field)
    lhs = q - lap
    b = bounds
    const = (8 * n * PI**2 * (n + 3) / (FOUR_MINUS_PI_SQ * rho**2)
             + 16 * n * PI * (b.k1 + b.k2) / FOUR_MINUS_PI_SQ
             + max(b.k2, b.k3) * n + math.sqrt(2 * b.k4) * n)
    grad_coef = 8 * PI * n / (FOUR_MINUS_PI_SQ * rho) + math.sqrt(2 * n * (b.k1 + b.k4))
    rhs = 2 * n * _tgrid(field) + const + grad_coef * g + 0 * lhs
    mask = _time_mask(field, _t_lo(field, t_lo)) & profile.half & profile.usable
    consts = {"rho": rho, "x0": list(profile.x0), "grad_sup": g, "constant": const,
              "grad_coefficient": grad_coef,
              **{k: getattr(b, k) for k in ("k1", "k2", "k3", "k4")}}
    return _report("liyau_lower_order_local", field, lhs, rhs, mask, consts)


def liyau_lower_order_general(field: ScalarField, profile: CutoffProfile, bounds: BoundSet,
                              grad_sup: float | None = None,
                              t_lo: float | None = None) -> InequalityReport:
    n = field.model.n
    g = _grad_sup(field, profile) if grad_sup is None else float(grad_sup)
    c3 = profile.sup(profile.c_phi_field(3.0))
    pgp = phi_grad_phi_sup(profile)
    q, lap = _ratios(field)
    lhs = q - lap
    b = bounds
    with np.errstate(divide="ignore", invalid="ignore"):
        inv_phi_sq = 1.0 / profile.values**2
        rhs = (2 * n * _tgrid(field) + 2 * n * c3 * inv_phi_sq + max(b.k2, b.k3) * n
               + math.sqrt(2 * b.k4) * n
               + (4 * n * pgp * inv_phi_sq + math.sqrt(2 * n * (b.k1 + b.k4))) * g)
    mask = _time_mask(field, _t_lo(field, t_lo)) & profile.inside & profile.usable & (profile.values > 0)
    consts = {"c_phi_3": c3, "phi_grad_phi_sup": pgp, "grad_sup": g, "rho": profile.rho}
    return _report("liyau_lower_order_general", field, lhs, rhs, mask, consts)


# ---------------------------------------------------------------------------
# Ricci flow


def _require_ricci_flow(field):
    if not field.model.is_ricci_flow:
        raise ValueError(f"{field.model.kind} is not a Ricci flow (d/dt g != -Ric)")


def ricci_compact(field: ScalarField, k: float, t_lo: float | None = None,
                  t_hi: float | None = None) -> InequalityReport:
    """|grad u|^2/u^2 - Laplace u/u <= k n + 2n/t."""
    _require_ricci_flow(field)
    n = field.model.n
    q, lap = _ratios(field)
    lhs = q - lap
    rhs = k * n + 2 * n * _tgrid(field) + 0 * lhs
    mask = _time_mask(field, _t_lo(field, t_lo), t_hi)
    t_end = float(field.times[-1])
    consts = {"k": k, "n": n, "rhs_at_T": k * n + 2 * n / t_end,
              "comparison_2kn_plus_n_over_T": 2 * k * n + n / t_end}
    return _report("ricci_compact", field, lhs, rhs, mask, consts)


def ricci_local_pair(field: ScalarField, alpha: float, x0, rho: float, k: float,
                     t_lo: float | None = None) -> tuple[InequalityReport, InequalityReport]:
    _require_ricci_flow(field)
    _check_alpha(alpha)
    n = field.model.n
    profile = _local_profile(field, x0, rho)
    norm = _ball_sup_u(field, profile)
    q, lap = _ratios(field)
    mask = _time_mask(field, _t_lo(field, t_lo)) & profile.half & profile.usable
    inv_t = _tgrid(field)
    c_first = 4 * PI**2 * (n + 7) / (FOUR_MINUS_PI_SQ * rho**2) + 8 * k * PI / FOUR_MINUS_PI_SQ
    # first power of the log factor here, unlike hamilton_local
    rhs1 = 2.0 * (inv_t + c_first) * (4.0 + np.log(norm / field.values))
    first = _report("ricci_local_hamilton", field, q, rhs1, mask,
                    {"rho": rho, "k": k, "bracket_constant": c_first, "sup_u_ball": norm})
    c_second = (8 * alpha**2 * n * PI**2 * (n * (1 + alpha**2 / (alpha - 1)) + 3) / (FOUR_MINUS_PI_SQ * rho**2)
                + ((4 + PI) / (4 - PI)) ** 2 * alpha**2 * k * n + alpha**3 * k * n / (alpha - 1))
    rhs2 = 2 * alpha**2 * n * inv_t + c_second + 0 * q
    second = _report("ricci_local_liyau", field, q - alpha * lap, rhs2, mask,
                     {"rho": rho, "k": k, "alpha": alpha, "constant": c_second})
    return first, second


THEOREMS = ("hamilton_global", "hamilton_local", "hamilton_local_general", "liyau_global",
            "liyau_local", "liyau_local_general", "liyau_lower_order_local",
            "liyau_lower_order_general", "ricci_compact", "ricci_local_pair")
