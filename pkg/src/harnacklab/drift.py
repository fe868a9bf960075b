"""Functionals Phi(x, t) of a heat solution and the sign of their drift (d/dt - 1/2 Laplace) Phi.

A functional with nonpositive drift is a supermartingale along g-Brownian
motion run backwards in t; the grid check replaces the Ito computation.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import quad

from .bounds import BoundSet
from .calculus import C_TOL
from .fields import ScalarField
from .geometry import ShrinkingSphere

KINDS = ("H_hamilton", "S_tilde_liyau", "S_hat_ricci")


@dataclass(frozen=True)
class FunctionalSpec:
    """Which functional to build and the constants entering its profile h(t).

    k: constant or callable lower-bound profile (H_hamilton) or the Ricci
    bound k (S_hat_ricci). alpha is needed for S_tilde_liyau only.
    """

    kind: str
    T: float
    alpha: float | None = None
    k: object = 0.0
    c1: float = 2.0
    c2: float = 1.0
    bounds: BoundSet | None = field(default=None, compare=False)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown functional {self.kind!r}; choose from {KINDS}")
        if self.kind == "S_tilde_liyau":
            if self.alpha is None or self.alpha <= 1:
                raise ValueError("S_tilde_liyau needs alpha > 1")
            if self.bounds is None:
                raise ValueError("S_tilde_liyau needs a BoundSet")
        if self.T <= 0:
            raise ValueError("T must be positive")

    @property
    def beta(self) -> float:
        return self.alpha**2

    def rate_constant(self) -> float:
        """Constant part C of the rate Y(t) = c1/t + C."""
        if self.kind == "S_tilde_liyau":
            b, a = self.bounds, self.alpha
            return (max(b.k2, b.k3) + math.sqrt(2.0) * math.sqrt(b.k4) + b.k3
                    + (b.k1 + b.k4) / (a - 1.0))
        if self.kind == "S_hat_ricci":
            return self.c2 * float(self.k)
        raise ValueError("H_hamilton has a forward profile, not a rate")

    def rate(self, t):
        t = np.asarray(t, dtype=float)
        with np.errstate(divide="ignore"):
            return self.c1 / t + self.rate_constant()


def _k_callable(k):
    return k if callable(k) else (lambda t, _k=float(k): np.full(np.shape(t), _k))


def hamilton_weight(k, t):
    """int_0^t exp(-int_s^t k(r) dr) ds; k constant or callable."""
    t = np.asarray(t, dtype=float)
    if not callable(k):
        k = float(k)
        if k == 0.0:
            return t.copy()
        return -np.expm1(-k * t) / k
    kf = _k_callable(k)

    def one(tt):
        def inner(s):
            return math.exp(-quad(lambda r: float(kf(r)), s, tt, epsabs=0, epsrel=1e-12)[0])
        return quad(inner, 0.0, tt, epsabs=0, epsrel=1e-12)[0]

    return np.vectorize(one, otypes=[float])(t)


def h_profile(spec: FunctionalSpec, t):
    """h(t) and its derivative.

    H_hamilton: h = 1/2 int_0^t exp(-int_s^t k), h(0) = 0.
    Others: dh/dt = h Y, h(T) = 1 with Y = c1/t + C, i.e. h = (t/T)^c1 exp(-C (T - t)).
    """
    t = np.asarray(t, dtype=float)
    if spec.kind == "H_hamilton":
        k = spec.k
        if not callable(k):
            k = float(k)
            h = 0.5 * hamilton_weight(k, t)
            hdot = 0.5 * np.exp(-k * t)
            return h, hdot
        h = 0.5 * hamilton_weight(k, t)
        return h, 0.5 - _k_callable(k)(t) * h
    if np.any(t < 0) or np.any(t > spec.T + 1e-12):
        raise ValueError("profile requested outside [0, T]")
    C = spec.rate_constant()
    h = (t / spec.T) ** spec.c1 * np.exp(-C * (spec.T - t))
    with np.errstate(divide="ignore", invalid="ignore"):
        hdot = np.where(t > 0, h * spec.rate(t), 0.0)
    return h, hdot


def functional_field(spec: FunctionalSpec, field: ScalarField, bounds: BoundSet | None = None) -> np.ndarray:
    """Phi on the field's (time, *space) grid."""
    geom = field.geometry
    u = field.values
    n = field.model.n
    t = field.times
    h, hdot = h_profile(spec, t)
    ht = geom.time_shape(h)
    q = geom.grad_sq(u) / u
    if spec.kind == "H_hamilton":
        return ht * q + u * np.log(u)
    # h * Y without the 0 * inf at t = 0
    hy = geom.time_shape(hdot)
    lap = geom.laplacian(u)
    if spec.kind == "S_tilde_liyau":
        return ht * (q - spec.alpha * lap) - n * spec.beta * u * hy
    if not isinstance(field.model, ShrinkingSphere):
        raise ValueError("S_hat_ricci is defined for the shrinking sphere")
    return ht * (q - lap) - n * u * hy


@dataclass(frozen=True, eq=False)
class DriftReport:
    kind: str
    phi: np.ndarray
    drift: np.ndarray
    mask: np.ndarray
    masked_sup: float
    worst_node: tuple
    tolerance: float
    passed: bool

    def to_dict(self):
        return {"kind": self.kind, "masked_sup": self.masked_sup,
                "tolerance": self.tolerance, "pass": self.passed,
                "worst_node": list(self.worst_node)}


def drift_field(phi_values: np.ndarray, field: ScalarField, kind: str,
                t_lo: float | None = None) -> DriftReport:
    """(d/dt - 1/2 Laplace) Phi by finite differences; pass iff <= tau_drift on the mask."""
    geom = field.geometry
    grid = field.grid
    t_lo = 4 * grid.dt if t_lo is None else t_lo
    drift = geom.heat_drift(phi_values)
    mask = geom.applicability(phi_values, drift, t_lo=t_lo)
    if not mask.any():
        raise ValueError("drift mask is empty")
    masked = np.where(mask, drift, -np.inf)
    idx = np.unravel_index(int(np.argmax(masked)), masked.shape)
    sup = float(masked[idx])
    tol = C_TOL[field.model.kind] * (grid.h_max**2 + grid.dt**2)
    return DriftReport(kind, phi_values, drift, mask, sup,
                       tuple(int(i) for i in idx), tol, bool(sup <= tol))


def drift_report(spec: FunctionalSpec, field: ScalarField, bounds: BoundSet | None = None,
                 t_lo: float | None = None) -> DriftReport:
    return drift_field(functional_field(spec, field, bounds), field, spec.kind, t_lo)


def mean_drift_consistency(phi_values: np.ndarray, field: ScalarField) -> float:
    """Compare the step change of the g_hat-weighted mean of Phi with the integrated mean drift.

    On a closed grid the weighted sum of the divergence stencil vanishes, so
    d/dt mean(Phi) = mean(drift); returns the largest per-step mismatch.
    """
    geom = field.geometry
    w = geom.vol / geom.vol.sum()
    axes = tuple(range(1, phi_values.ndim))
    mean_phi = np.sum(phi_values * w, axis=axes)
    mean_drift = np.sum(geom.heat_drift(phi_values) * w, axis=axes)
    dt = field.grid.dt
    integrated = 0.5 * dt * (mean_drift[1:] + mean_drift[:-1])
    return float(np.max(np.abs(np.diff(mean_phi) - integrated)))


def restrict_system_check(alpha: float, a: float | None = None, b: float | None = None,
                          beta: float | None = None, c1: float = 2.0, c2: float | None = None,
                          c3: float = 1.0, c4: float = math.sqrt(2.0), c_phi: float = 1.0) -> dict:
    """Margins of the four constant constraints; all must be >= 0.

    Defaults are a = b = 1/(2 alpha), beta = alpha^2, c2 = 2 c_phi.
    """
    a = 0.5 / alpha if a is None else a
    b = 0.5 / alpha if b is None else b
    beta = alpha**2 if beta is None else beta
    c2 = 2.0 * c_phi if c2 is None else c2
    lead = beta - alpha / (4.0 * a)
    margins = {
        "c1": lead * c1**2 - beta * c1,
        "c2": lead * c2**2 - beta * c2 * c_phi,
        "c3": lead * c3**2 - alpha / (4.0 * b),
        "c4": lead * c4**2 - alpha**2,
    }
    scale = max(1.0, beta * max(c1, c2, c3, c4) ** 2)
    ok = all(m >= -1e-12 * scale for m in margins.values())
    return {"margins": margins, "a_plus_b": a + b, "pass": bool(ok and abs(a + b - 1 / alpha) < 1e-12)}
