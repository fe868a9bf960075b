"""Curvature constants on a region and the distance cutoff used by local estimates."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize_scalar

from .calculus import C_TOL
from .fields import ScalarField
from .geometry import (ConformalCircle, ConformalTorus, EvolvingModel, GeometryError,
                       ShrinkingSphere, StaticHyperbolic, dt_g_covariant_derivative,
                       metric_data, relative_eigenvalues)
from .stencils import PERIODIC

FOUR_MINUS_PI_SQ = (4.0 - math.pi) ** 2
VARIANTS = ("3", "7", "liyau")


@dataclass(frozen=True)
class Region:
    """Either the whole manifold (rho is None) or the moving ball B_{rho,T} about x0."""

    x0: tuple | None = None
    rho: float | None = None
    t_window: tuple[float, float] | None = None

    @property
    def is_global(self) -> bool:
        return self.rho is None

    def window(self, model: EvolvingModel) -> tuple[float, float]:
        lo, hi = self.t_window if self.t_window is not None else (0.0, model.T)
        return float(lo), float(hi)

    def to_dict(self):
        return {"x0": None if self.x0 is None else list(self.x0), "rho": self.rho,
                "t_window": None if self.t_window is None else list(self.t_window)}


@dataclass(frozen=True)
class BoundSet:
    """Constants with Ric >= -k1, -k2 <= dt g <= k3, |nabla dt g| <= k4, R_t >= -k(t).

    ``k_sup`` is the constant profile used by default; ``ric_sup`` bounds |Ric|
    and ``ric_min`` is the smallest Ricci eigenvalue (relative to g_t).
    """

    k1: float
    k2: float
    k3: float
    k4: float
    k_sup: float
    ric_sup: float
    ric_min: float
    region: Region = field(default_factory=Region)
    method: str = "analytic"
    profile: str = "constant"
    model: EvolvingModel | None = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        if min(self.k1, self.k2, self.k3, self.k4, self.k_sup) < 0:
            raise ValueError("curvature constants must be nonnegative")

    def k(self, t):
        t = np.asarray(t, dtype=float)
        if self.profile == "analytic" and self.model is not None:
            return np.maximum(0.0, -np.asarray(self.model.relative_r_tensor(t), float))
        return np.full(t.shape, self.k_sup)

    def to_dict(self):
        return {"k1": self.k1, "k2": self.k2, "k3": self.k3, "k4": self.k4,
                "k_sup": self.k_sup, "ric_sup": self.ric_sup, "ric_min": self.ric_min,
                "region": self.region.to_dict(), "method": self.method,
                "profile": self.profile}


def _extremes(fn, lo, hi, samples=4097):
    """min and max of a smooth scalar function of t on [lo, hi]."""
    ts = np.linspace(lo, hi, samples)
    vals = np.asarray(fn(ts), dtype=float) * np.ones_like(ts)
    out = []
    for sign in (1.0, -1.0):
        i = int(np.argmin(sign * vals))
        best = sign * vals[i]
        a, b = ts[max(i - 1, 0)], ts[min(i + 1, samples - 1)]
        if b > a:
            res = minimize_scalar(lambda s: sign * float(fn(s)), bounds=(a, b),
                                  method="bounded", options={"xatol": 1e-13})
            best = min(best, res.fun)
        out.append(sign * best)
    return out[0], out[1]


def sample_points(model: EvolvingModel, per_axis: int = 4) -> np.ndarray:
    """Deterministic lattice of chart points away from coordinate singularities."""
    n = model.n
    if isinstance(model, (ConformalCircle, ConformalTorus)):
        axes = [np.linspace(0.0, 2 * math.pi, per_axis, endpoint=False)] * n
    elif isinstance(model, ShrinkingSphere):
        pol = np.linspace(model.theta_min, math.pi - model.theta_min, per_axis + 2)[1:-1]
        axes = [pol] * (n - 1) + [np.linspace(0.0, 2 * math.pi, per_axis, endpoint=False)]
    elif isinstance(model, StaticHyperbolic):
        rad = np.linspace(model.r_min, model.R, per_axis)
        pol = np.linspace(0.1, math.pi - 0.1, per_axis)
        axes = [rad] + [pol] * (n - 2) + [np.linspace(0.0, 2 * math.pi, per_axis, endpoint=False)]
    else:
        raise TypeError(f"no sampling rule for {type(model).__name__}")
    mesh = np.meshgrid(*axes, indexing="ij")
    return np.stack([m.ravel() for m in mesh], axis=-1)


def extract_bounds(model: EvolvingModel, region: Region | None = None,
                   method: str = "analytic", profile: str = "constant",
                   per_axis: int = 3, n_time: int = 17) -> BoundSet:
    """Tightest constants on the region.

    All models are Einstein with d/dt g a multiple of g, so the analytic path
    reduces to extremes in t of scalar eigenvalues; the numeric path takes
    grid sups of pointwise eigenvalues instead.
    """
    region = Region() if region is None else region
    lo, hi = region.window(model)
    if lo < -1e-12 or hi > model.T + 1e-12 or hi <= lo:
        raise GeometryError(f"time window [{lo}, {hi}] outside [0, {model.T}]")
    validity = model.validity()
    if not validity.valid and validity.first_violation <= hi:
        raise GeometryError(validity.message)
    if region.rho is not None and region.rho <= 0:
        raise ValueError("rho must be positive")

    if method == "analytic":
        ric_lo, ric_hi = _extremes(model.relative_ricci, lo, hi)
        dtg_lo, dtg_hi = _extremes(model.relative_dt_g, lo, hi)
        r_lo, _ = _extremes(model.relative_r_tensor, lo, hi)
        k4 = 0.0
    elif method == "numeric":
        pts = sample_points(model, per_axis)
        ric, dtg, rt, k4s = [], [], [], []
        for t in np.linspace(lo, hi, n_time):
            for x in pts:
                md = metric_data(model, x, t)
                ev_ric = relative_eigenvalues(md.ricci, md.g)
                ev_dtg = relative_eigenvalues(md.dt_g, md.g)
                ev_r = relative_eigenvalues(md.ricci + md.dt_g, md.g)
                ric.extend(ev_ric)
                dtg.extend(ev_dtg)
                rt.extend(ev_r)
                nab = dt_g_covariant_derivative(model, x, t)
                gi = md.g_inv
                k4s.append(math.sqrt(max(0.0, float(np.einsum("ia,jb,kc,ijk,abc->", gi, gi, gi, nab, nab)))))
        ric_lo, ric_hi = min(ric), max(ric)
        dtg_lo, dtg_hi = min(dtg), max(dtg)
        r_lo = min(rt)
        # differencing noise below this level is not curvature
        k4 = max(k4s) if max(k4s) > 1e-6 else 0.0
    else:
        raise ValueError("method must be 'analytic' or 'numeric'")

    def clean(v):
        v = max(0.0, float(v))
        return 0.0 if v < 1e-13 else v

    return BoundSet(
        k1=clean(-ric_lo), k2=clean(-dtg_lo), k3=clean(dtg_hi), k4=k4,
        k_sup=clean(-r_lo), ric_sup=float(max(abs(ric_lo), abs(ric_hi))),
        ric_min=float(ric_lo), region=region, method=method, profile=profile,
        model=model)


def verify_bounds(model: EvolvingModel, bounds: BoundSet, per_axis: int = 4,
                  n_time: int = 33, rtol: float = 1e-9) -> list[str]:
    """Re-check the BoundSet invariants pointwise; returns violation messages."""
    lo, hi = bounds.region.window(model)
    out = []
    for t in np.linspace(lo, hi, n_time):
        kt = float(bounds.k(t))
        for x in sample_points(model, per_axis):
            md = metric_data(model, x, t)
            ev_ric = relative_eigenvalues(md.ricci, md.g)
            ev_dtg = relative_eigenvalues(md.dt_g, md.g)
            ev_r = relative_eigenvalues(md.ricci + md.dt_g, md.g)
            tol = rtol * (1.0 + np.max(np.abs(ev_ric)) + np.max(np.abs(ev_dtg)))
            checks = {
                "Ric >= -k1": ev_ric.min() >= -bounds.k1 - tol,
                "dt g >= -k2": ev_dtg.min() >= -bounds.k2 - tol,
                "dt g <= k3": ev_dtg.max() <= bounds.k3 + tol,
                "|nabla dt g| <= k4": md.grad_dt_g_norm <= bounds.k4 + tol,
                "R_t >= -k(t)": ev_r.min() >= -kt - tol,
                "|Ric| <= ric_sup": np.max(np.abs(ev_ric)) <= bounds.ric_sup + tol,
            }
            out.extend(f"{name} fails at x={x.tolist()}, t={t:.6g}"
                       for name, ok in checks.items() if not ok)
    return out


# ---------------------------------------------------------------------------
# cutoff


def phi(model: EvolvingModel, x0, rho: float, x, t):
    """cos(pi min(rho_t(x0, x), rho) / (2 rho))."""
    if rho <= 0:
        raise ValueError("rho must be positive")
    d = model.distance(np.asarray(x0, float), np.asarray(x, float), t)
    # exact zero on and outside the sphere (cos(pi/2) rounds to -1.6e-16)
    return np.where(d < rho, np.cos(math.pi * np.minimum(d, rho) / (2.0 * rho)), 0.0)


def _seam_band(field: ScalarField, x0_coords, band: int) -> np.ndarray:
    """True away from the cut locus of x0 (antipode or torus seams)."""
    grid = field.grid
    model = field.model
    ok = np.ones(grid.shape, dtype=bool)
    mesh = grid.mesh()
    for a, h in enumerate(grid.h):
        if grid.bc[a][0] == PERIODIC:
            d = np.abs(np.mod(mesh[a] - x0_coords[a] + math.pi, 2 * math.pi) - math.pi)
            ok &= d < math.pi - band * h - 1e-12
    if isinstance(model, ShrinkingSphere):
        ok &= mesh[0] < math.pi - band * grid.h[0]
    return ok


@dataclass(frozen=True, eq=False)
class CutoffProfile:
    """phi_t = cos(pi rho_t(x0, .) / 2 rho) sampled on a field's space-time grid.

    Derivatives act on the smooth extension cos(pi rho_t / 2 rho), which equals
    phi on the open ball, so the ball boundary kink never enters a stencil.
    """

    x0: tuple
    rho: float
    dist: np.ndarray
    values: np.ndarray
    grad_sq: np.ndarray
    heat_op: np.ndarray  # (Laplace - 2 d/dt) phi
    inside: np.ndarray
    half: np.ndarray
    usable: np.ndarray
    tolerance: float

    def c_phi_field(self, c: float) -> np.ndarray:
        return c * self.grad_sq - self.values * self.heat_op

    def sup(self, arr) -> float:
        mask = self.inside & self.usable & np.isfinite(arr)
        if not mask.any():
            raise ValueError("ball contains no usable grid nodes")
        return float(np.max(arr[mask]))


def cutoff_profile(field: ScalarField, x0, rho: float, band: int = 3) -> CutoffProfile:
    """Build the cutoff about ``x0`` (grid coordinates) with radius ``rho``."""
    if rho <= 0:
        raise ValueError("rho must be positive")
    model = field.model
    grid = field.grid
    x0 = tuple(float(v) for v in np.atleast_1d(x0))
    if len(x0) != grid.ndim:
        raise ValueError(f"x0 needs {grid.ndim} grid coordinates")
    if isinstance(model, (ShrinkingSphere, StaticHyperbolic)) and abs(x0[0]) > 1e-12:
        raise ValueError("zonal/radial grids need x0 at the pole/origin (coordinate 0)")
    geom = field.geometry
    p0 = model.chart_point(*x0)
    times = grid.times()
    dist = np.stack([model.distance(p0, geom.points, t) for t in times])
    smooth = np.cos(math.pi * dist / (2.0 * rho))
    usable = np.broadcast_to(_seam_band(field, x0, band), dist.shape)
    usable = usable & geom.applicability(t_lo=0.0)
    values = np.where(dist < rho, smooth, 0.0)
    grad_sq = geom.grad_sq(smooth)
    heat_op = geom.laplacian(smooth) - 2.0 * geom.dt(smooth)
    tol = C_TOL[model.kind] * max(grid.h_max, grid.dt) ** 2
    return CutoffProfile(x0, float(rho), dist, values, grad_sq, heat_op,
                         dist < rho, dist < 0.5 * rho, usable, tol)


def square_cutoff(field: ScalarField, x0, width: float, band: int = 3) -> CutoffProfile:
    """Product-cosine cutoff on the coordinate square |x_a - x0_a| < width (periodic grids).

    D = {phi > 0} is fixed in space; ``rho`` records the half-width.
    """
    grid = field.grid
    if any(b[0] != PERIODIC for b in grid.bc):
        raise ValueError("square cutoff is defined on periodic grids")
    if not 0 < width < math.pi:
        raise ValueError("width must lie in (0, pi)")
    geom = field.geometry
    mesh = grid.mesh()
    x0 = tuple(float(v) for v in np.atleast_1d(x0))
    smooth = np.ones(grid.shape)
    inside = np.ones(grid.shape, dtype=bool)
    cheb = np.zeros(grid.shape)
    for a in range(grid.ndim):
        d = np.mod(mesh[a] - x0[a] + math.pi, 2 * math.pi) - math.pi
        smooth = smooth * np.cos(math.pi * d / (2.0 * width))
        inside &= np.abs(d) < width
        cheb = np.maximum(cheb, np.abs(d))
    nt1 = grid.nt + 1
    smooth_t = np.broadcast_to(smooth, (nt1,) + grid.shape).copy()
    inside_t = np.broadcast_to(inside, smooth_t.shape)
    usable = np.broadcast_to(_seam_band(field, x0, band), smooth_t.shape) & geom.applicability(t_lo=0.0)
    values = np.where(inside_t, smooth_t, 0.0)
    tol = C_TOL[field.model.kind] * max(grid.h_max, grid.dt) ** 2
    return CutoffProfile(x0, float(width), np.broadcast_to(cheb, smooth_t.shape).copy(), values,
                         geom.grad_sq(smooth_t), geom.laplacian(smooth_t) - 2.0 * geom.dt(smooth_t),
                         inside_t, np.broadcast_to(cheb < 0.5 * width, smooth_t.shape), usable, tol)


def variant_coefficient(variant: str, n: int, alpha: float | None = None) -> float:
    if variant == "3":
        return 3.0
    if variant == "7":
        return 7.0
    if variant == "liyau":
        if alpha is None or alpha <= 1:
            raise ValueError("alpha > 1 required for the Li-Yau coefficient")
        return 3.0 + alpha**2 * n / (alpha - 1.0)
    raise ValueError(f"unknown variant {variant!r}; choose from {VARIANTS}")


def c_phi(profile: CutoffProfile, n: int, variant: str, bounds: BoundSet,
          alpha: float | None = None) -> dict:
    """Grid sup of c|grad phi|^2 - phi(Laplace - 2 d/dt)phi over the ball and its bound."""
    c = variant_coefficient(variant, n, alpha)
    numeric = profile.sup(profile.c_phi_field(c))
    analytic = math.pi**2 * (n + c) / (4.0 * profile.rho**2) + 0.5 * math.pi * (bounds.k1 + bounds.k2)
    return {"variant": variant, "coefficient": c, "numeric_sup": numeric,
            "analytic_bound": analytic, "tolerance": profile.tolerance,
            "pass": bool(numeric <= analytic + profile.tolerance)}


def grad_phi_bound_check(profile: CutoffProfile) -> dict:
    sup = math.sqrt(max(0.0, profile.sup(profile.grad_sq)))
    bound = math.pi / (2.0 * profile.rho)
    return {"sup_grad_phi": sup, "bound": bound, "tolerance": profile.tolerance,
            "pass": bool(sup <= bound + profile.tolerance)}


def half_ball_lower_bound_check(profile: CutoffProfile) -> dict:
    lower = 1.0 - math.pi / 4.0
    mask = profile.half & profile.usable
    violations = int(np.count_nonzero(profile.values[mask] < lower))
    return {"min_phi": float(profile.values[mask].min()) if mask.any() else None,
            "bound": lower, "violations": violations, "pass": violations == 0}


def phi_grad_phi_sup(profile: CutoffProfile) -> float:
    """|| phi |grad phi| || over the ball."""
    return profile.sup(profile.values * np.sqrt(np.maximum(profile.grad_sq, 0.0)))
