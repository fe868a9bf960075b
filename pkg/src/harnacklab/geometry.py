"""Closed-form evolving metric families on model manifolds.

Every model here has the form ``g_t = sigma(t) * g_hat`` where ``g_hat`` is a
fixed Einstein (or flat) metric written in a diagonal chart, so curvature,
metric velocity and distance are all available in closed form.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import ClassVar

import numpy as np


class GeometryError(ValueError):
    """Raised for out-of-window times or points outside the chart."""


# ---------------------------------------------------------------------------
# scale profiles for the conformal flat models


@dataclass(frozen=True)
class ScaleProfile:
    """Named analytic profile a(t) for the conformally flat models.

    ``constant``: a0; ``sin``: a0 + eps*sin(omega*t); ``linear``: a0 + rate*t.
    """

    name: str = "constant"
    a0: float = 1.0
    eps: float = 0.0
    omega: float = 1.0
    rate: float = 0.0

    def __post_init__(self):
        if self.name not in ("constant", "sin", "linear"):
            raise GeometryError(f"unknown scale profile {self.name!r}")

    def a(self, t):
        t = np.asarray(t, dtype=float)
        if self.name == "sin":
            return self.a0 + self.eps * np.sin(self.omega * t)
        if self.name == "linear":
            return self.a0 + self.rate * t
        return np.full_like(t, self.a0)

    def adot(self, t):
        t = np.asarray(t, dtype=float)
        if self.name == "sin":
            return self.eps * self.omega * np.cos(self.omega * t)
        if self.name == "linear":
            return np.full_like(t, self.rate)
        return np.zeros_like(t)

    def inv_sq_integral(self, t):
        """int_0^t a(s)^-2 ds, exact for constant/linear, Gauss-Legendre for sin."""
        t = np.asarray(t, dtype=float)
        if self.name == "constant":
            return t / self.a0**2
        if self.name == "linear":
            if self.rate == 0.0:
                return t / self.a0**2
            return (1.0 / self.a0 - 1.0 / (self.a0 + self.rate * t)) / self.rate
        nodes, weights = np.polynomial.legendre.leggauss(24)
        flat = t.ravel()
        out = np.empty_like(flat)
        for i, ti in enumerate(flat):
            panels = max(1, int(math.ceil(abs(ti) * max(self.omega, 1.0))))
            edges = np.linspace(0.0, ti, panels + 1)
            mid = 0.5 * (edges[1:] + edges[:-1])
            half = 0.5 * (edges[1:] - edges[:-1])
            s = mid[:, None] + half[:, None] * nodes[None, :]
            out[i] = np.sum(half[:, None] * weights[None, :] / self.a(s) ** 2)
        return out.reshape(t.shape)

    def to_dict(self):
        return {"name": self.name, "a0": self.a0, "eps": self.eps,
                "omega": self.omega, "rate": self.rate}


# ---------------------------------------------------------------------------
# metric data


@dataclass(frozen=True)
class MetricData:
    g: np.ndarray
    g_inv: np.ndarray
    sqrt_det: float
    christoffel: np.ndarray  # [i, j, k] = Gamma^i_{jk}
    ricci: np.ndarray
    dt_g: np.ndarray
    grad_dt_g_norm: float


@dataclass(frozen=True)
class ModelValidity:
    valid: bool
    first_violation: float | None
    message: str


def christoffel_from_diag(e, de):
    """Christoffel symbols of a diagonal metric.

    ``e[..., a]`` are the diagonal entries, ``de[..., k, a] = d_k e_a``.
    Returns ``gamma[..., i, j, k] = Gamma^i_{jk}``.
    """
    e = np.asarray(e, dtype=float)
    de = np.asarray(de, dtype=float)
    n = e.shape[-1]
    eye = np.eye(n)
    # d_j g_{ik} = delta_ik d_j e_i
    dg = np.einsum("...ji,ik->...jik", de, eye)  # [j, i, k] = d_j g_ik
    term = (np.swapaxes(dg, -3, -2)  # d_j g_ik as [i, j, k]
            + np.moveaxis(dg, -3, -1)  # d_k g_ij
            - dg)  # d_i g_jk
    return 0.5 * term / e[..., :, None, None]


def _polar_diag(angles):
    """Diagonal entries of the unit round metric on S^m in hyperspherical chart.

    ``angles[..., :m]`` = (psi_1, ..., psi_{m-1}, phi). Returns entries and
    their derivatives with respect to the angles.
    """
    angles = np.asarray(angles, dtype=float)
    m = angles.shape[-1]
    e = np.ones(angles.shape)
    de = np.zeros(angles.shape + (m,))
    for i in range(1, m):
        e[..., i] = e[..., i - 1] * np.sin(angles[..., i - 1]) ** 2
    for i in range(m):
        for k in range(min(i, m - 1)):
            de[..., k, i] = 2.0 * e[..., i] / np.tan(angles[..., k])
    return e, de


def _polar_embed(angles):
    """Unit vectors in R^{m+1} from hyperspherical angles on S^m."""
    angles = np.asarray(angles, dtype=float)
    m = angles.shape[-1]
    out = np.empty(angles.shape[:-1] + (m + 1,))
    prod = np.ones(angles.shape[:-1])
    for i in range(m):
        out[..., i] = prod * np.cos(angles[..., i])
        prod = prod * np.sin(angles[..., i])
    out[..., m] = prod
    return out


# ---------------------------------------------------------------------------
# models


class EvolvingModel:
    """Base class: g_t = sigma(t) * g_hat with g_hat diagonal in the chart."""

    kind: ClassVar[str]
    n: int
    T: float
    # Ric = ricci_factor * g_hat
    ricci_factor: float = 0.0
    axis_names: ClassVar[tuple[str, ...]]

    # --- time dependence
    def scale(self, t):
        raise NotImplementedError

    def dscale(self, t):
        raise NotImplementedError

    def check_time(self, t):
        t = np.asarray(t, dtype=float)
        if np.any(t < -1e-12) or np.any(t > self.T + 1e-12):
            raise GeometryError(f"time outside [0, {self.T}]")
        if np.any(self.scale(t) <= 0):
            raise GeometryError("metric degenerate at requested time")

    # --- chart
    def unit_diag(self, x):
        raise NotImplementedError

    def check_point(self, x):
        pass

    def chart_point(self, *coords):
        """Full chart point from the coordinates a field grid varies in."""
        raise NotImplementedError

    # --- derived
    def relative_ricci(self, t):
        """Eigenvalue of Ric_t relative to g_t (all models are Einstein)."""
        return self.ricci_factor / self.scale(t)

    def relative_dt_g(self, t):
        """Eigenvalue of d/dt g_t relative to g_t."""
        return self.dscale(t) / self.scale(t)

    def relative_r_tensor(self, t):
        return self.relative_ricci(t) + self.relative_dt_g(t)

    @property
    def is_ricci_flow(self) -> bool:
        """True when d/dt g = -Ric holds identically (so R_t = 0)."""
        ts = np.linspace(0.0, self.T, 65)
        return bool(np.allclose(self.relative_r_tensor(ts), 0.0, atol=1e-14))

    def distance(self, x0, x, t):
        raise NotImplementedError

    def validity(self) -> ModelValidity:
        raise NotImplementedError

    def to_dict(self) -> dict:
        raise NotImplementedError


@dataclass(frozen=True)
class ShrinkingSphere(EvolvingModel):
    """Round sphere under d/dt g = -Ric: g_t = c(t) g_unit, c = c0 - (n-1) t."""

    n: int = 2
    T: float = 0.5
    c0: float = 1.0
    theta_min: float = 0.05

    kind: ClassVar[str] = "ShrinkingSphere"
    axis_names: ClassVar[tuple[str, ...]] = ("theta",)

    def __post_init__(self):
        if self.n < 2:
            raise GeometryError("sphere needs n >= 2")
        if self.c0 <= 0 or self.T <= 0:
            raise GeometryError("c0 and T must be positive")

    @property
    def ricci_factor(self):
        return float(self.n - 1)

    def scale(self, t):
        return self.c0 - (self.n - 1) * np.asarray(t, dtype=float)

    def dscale(self, t):
        return np.full_like(np.asarray(t, dtype=float), -(self.n - 1.0))

    def unit_diag(self, x):
        return _polar_diag(x)

    def check_point(self, x):
        x = np.asarray(x, dtype=float)
        polar = x[..., : self.n - 1]
        lo, hi = self.theta_min, math.pi - self.theta_min
        if np.any(polar < lo) or np.any(polar > hi):
            raise GeometryError("point inside the pole exclusion band")

    def chart_point(self, theta):
        theta = np.asarray(theta, dtype=float)
        x = np.full(theta.shape + (self.n,), 0.5 * math.pi)
        x[..., 0] = theta
        x[..., -1] = 0.0
        return x

    def embed(self, x):
        return _polar_embed(x)

    def distance(self, x0, x, t):
        p, q = self.embed(x0), self.embed(x)
        angle = 2.0 * np.arctan2(np.linalg.norm(p - q, axis=-1),
                                 np.linalg.norm(p + q, axis=-1))
        return np.sqrt(self.scale(t)) * angle

    def validity(self):
        t_end = self.c0 / (self.n - 1)
        if t_end <= self.T:
            return ModelValidity(False, float(t_end),
                                 f"sphere collapses at t={t_end:g}")
        return ModelValidity(True, None, "c(t) > 0 on [0, T]")

    def to_dict(self):
        return {"kind": self.kind, "n": self.n, "T": self.T,
                "params": {"c0": self.c0, "theta_min": self.theta_min}}


@dataclass(frozen=True)
class _ConformalFlat(EvolvingModel):
    T: float = 1.0
    profile: ScaleProfile = field(default_factory=ScaleProfile)

    ricci_factor: ClassVar[float] = 0.0

    def scale(self, t):
        return self.profile.a(t) ** 2

    def dscale(self, t):
        return 2.0 * self.profile.a(t) * self.profile.adot(t)

    def unit_diag(self, x):
        x = np.asarray(x, dtype=float)
        return np.ones(x.shape), np.zeros(x.shape + (x.shape[-1],))

    def distance(self, x0, x, t):
        d = np.abs(np.asarray(x, dtype=float) - np.asarray(x0, dtype=float))
        d = np.mod(d, 2.0 * math.pi)
        d = np.minimum(d, 2.0 * math.pi - d)
        return self.profile.a(t) * np.sqrt(np.sum(d**2, axis=-1))

    def validity(self):
        ts = np.linspace(0.0, self.T, 20001)
        a = self.profile.a(ts)
        bad = np.nonzero(a <= 0)[0]
        if bad.size:
            return ModelValidity(False, float(ts[bad[0]]),
                                 "scale profile a(t) not positive")
        return ModelValidity(True, None, "a(t) > 0 on [0, T]")

    def to_dict(self):
        return {"kind": self.kind, "n": self.n, "T": self.T,
                "params": {"profile": self.profile.to_dict()}}


@dataclass(frozen=True)
class ConformalCircle(_ConformalFlat):
    n: int = 1
    kind: ClassVar[str] = "ConformalCircle"
    axis_names: ClassVar[tuple[str, ...]] = ("theta",)

    def __post_init__(self):
        if self.n != 1:
            raise GeometryError("circle has n = 1")

    def chart_point(self, theta):
        return np.asarray(theta, dtype=float)[..., None]


@dataclass(frozen=True)
class ConformalTorus(_ConformalFlat):
    n: int = 2
    kind: ClassVar[str] = "ConformalTorus"
    axis_names: ClassVar[tuple[str, ...]] = ("x", "y")

    def __post_init__(self):
        if self.n != 2:
            raise GeometryError("torus model is two-dimensional")

    def chart_point(self, x, y):
        x, y = np.broadcast_arrays(np.asarray(x, float), np.asarray(y, float))
        return np.stack([x, y], axis=-1)


@dataclass(frozen=True)
class StaticHyperbolic(EvolvingModel):
    """Hyperbolic space of curvature -kappa in geodesic polar coordinates."""

    n: int = 2
    T: float = 1.0
    kappa: float = 1.0
    R: float = 3.0
    r_min: float = 0.05

    kind: ClassVar[str] = "StaticHyperbolic"
    axis_names: ClassVar[tuple[str, ...]] = ("r",)

    def __post_init__(self):
        if self.n < 2:
            raise GeometryError("hyperbolic model needs n >= 2")
        if self.kappa <= 0 or self.R <= 0:
            raise GeometryError("kappa and R must be positive")

    @property
    def ricci_factor(self):
        return -(self.n - 1) * self.kappa

    def scale(self, t):
        return np.ones_like(np.asarray(t, dtype=float))

    def dscale(self, t):
        return np.zeros_like(np.asarray(t, dtype=float))

    def unit_diag(self, x):
        x = np.asarray(x, dtype=float)
        sk = math.sqrt(self.kappa)
        r = x[..., 0]
        warp = np.sinh(sk * r) / sk
        ang_e, ang_de = _polar_diag(x[..., 1:])
        n = self.n
        e = np.ones(x.shape)
        de = np.zeros(x.shape + (n,))
        e[..., 1:] = warp[..., None] ** 2 * ang_e
        coth = sk / np.tanh(sk * r)
        de[..., 0, 1:] = 2.0 * coth[..., None] * e[..., 1:]
        de[..., 1:, 1:] = warp[..., None, None] ** 2 * ang_de
        return e, de

    def check_point(self, x):
        r = np.asarray(x, dtype=float)[..., 0]
        if np.any(r <= 0) or np.any(r > self.R):
            raise GeometryError("radial coordinate outside (0, R]")

    def chart_point(self, r):
        r = np.asarray(r, dtype=float)
        x = np.full(r.shape + (self.n,), 0.5 * math.pi)
        x[..., 0] = r
        x[..., -1] = 0.0
        return x

    def embed(self, x):
        """Hyperboloid model coordinates (Minkowski, first entry timelike)."""
        x = np.asarray(x, dtype=float)
        sk = math.sqrt(self.kappa)
        r = x[..., 0]
        omega = _polar_embed(x[..., 1:])
        return np.concatenate([np.cosh(sk * r)[..., None],
                               np.sinh(sk * r)[..., None] * omega], axis=-1)

    def distance(self, x0, x, t):
        p, q = self.embed(x0), self.embed(x)
        inner = p[..., 0] * q[..., 0] - np.sum(p[..., 1:] * q[..., 1:], axis=-1)
        return np.arccosh(np.maximum(inner, 1.0)) / math.sqrt(self.kappa)

    def validity(self):
        return ModelValidity(True, None, "static metric")

    def to_dict(self):
        return {"kind": self.kind, "n": self.n, "T": self.T,
                "params": {"kappa": self.kappa, "R": self.R, "r_min": self.r_min}}


MODELS = {cls.kind: cls for cls in
          (ShrinkingSphere, ConformalCircle, ConformalTorus, StaticHyperbolic)}


def model_from_dict(spec: dict) -> EvolvingModel:
    """Build a model from its run-configuration sub-object."""
    try:
        cls = MODELS[spec["kind"]]
    except KeyError as exc:
        raise GeometryError(f"unknown model kind {spec.get('kind')!r}") from exc
    params = dict(spec.get("params", {}))
    kwargs = {"T": float(spec["T"])}
    if "n" in spec:
        kwargs["n"] = int(spec["n"])
    if issubclass(cls, _ConformalFlat):
        prof = params.pop("profile", {})
        if isinstance(prof, str):
            prof = {"name": prof}
        kwargs["profile"] = ScaleProfile(**prof)
    kwargs.update({k: float(v) for k, v in params.items()})
    try:
        return cls(**kwargs)
    except TypeError as exc:
        raise GeometryError(str(exc)) from exc


# ---------------------------------------------------------------------------
# operations


def metric_data(model: EvolvingModel, x, t: float) -> MetricData:
    model.check_time(t)
    x = np.asarray(x, dtype=float)
    if x.shape != (model.n,):
        raise GeometryError(f"chart point must have shape ({model.n},)")
    model.check_point(x)
    sigma = float(model.scale(t))
    dsigma = float(model.dscale(t))
    e, de = model.unit_diag(x)
    g = sigma * np.diag(e)
    return MetricData(
        g=g,
        g_inv=np.diag(1.0 / e) / sigma,
        sqrt_det=float(sigma ** (model.n / 2) * np.sqrt(np.prod(e))),
        christoffel=christoffel_from_diag(e, de),
        ricci=model.ricci_factor * np.diag(e),
        dt_g=dsigma * np.diag(e),
        # d/dt g is a constant multiple of g, and g is parallel
        grad_dt_g_norm=0.0,
    )


def r_tensor(model: EvolvingModel, x, t: float) -> np.ndarray:
    md = metric_data(model, x, t)
    return md.ricci + md.dt_g


def distance(model: EvolvingModel, x0, x, t):
    model.check_time(t)
    return model.distance(x0, x, t)


def model_validity(model: EvolvingModel) -> ModelValidity:
    return model.validity()


def relative_eigenvalues(tensor, g):
    """Eigenvalues of a symmetric 2-tensor relative to the metric g."""
    from scipy.linalg import eigh

    return eigh(np.asarray(tensor, float), np.asarray(g, float), eigvals_only=True)


# ---------------------------------------------------------------------------
# finite-difference oracles (independent of the analytic Christoffel/Ricci)


def _full_metric(model, x, t):
    e, _ = model.unit_diag(x)
    return float(model.scale(t)) * np.diag(e)


def _fd_christoffel(model, x, t, h):
    n = model.n
    g = _full_metric(model, x, t)
    g_inv = np.linalg.inv(g)
    dg = np.empty((n, n, n))  # [k, i, j] = d_k g_ij
    for k in range(n):
        step = np.zeros(n)
        step[k] = h
        dg[k] = (_full_metric(model, x + step, t) - _full_metric(model, x - step, t)) / (2 * h)
    # Gamma^i_jk = 1/2 g^il (d_j g_lk + d_k g_lj - d_l g_jk)
    lower = 0.5 * (np.einsum("jlk->ljk", dg) + np.einsum("klj->ljk", dg) - dg)
    return np.einsum("il,ljk->ijk", g_inv, lower)


def finite_difference_ricci(model: EvolvingModel, x, t: float, h: float = 1e-3):
    """Ricci tensor from nested central differences of the chart metric."""
    x = np.asarray(x, dtype=float)
    n = model.n
    gamma = _fd_christoffel(model, x, t, h)
    dgamma = np.empty((n, n, n, n))  # [m, i, j, k] = d_m Gamma^i_jk
    for m in range(n):
        step = np.zeros(n)
        step[m] = h
        dgamma[m] = (_fd_christoffel(model, x + step, t, h)
                     - _fd_christoffel(model, x - step, t, h)) / (2 * h)
    ric = (np.einsum("kkij->ij", dgamma)
           - np.einsum("jkik->ij", dgamma)
           + np.einsum("kkl,lij->ij", gamma, gamma)
           - np.einsum("kjl,lik->ij", gamma, gamma))
    return 0.5 * (ric + ric.T)


def dt_g_covariant_derivative(model: EvolvingModel, x, t: float, h: float = 1e-4):
    """(nabla_i dt_g)_{jk} by differencing the analytic dt_g in the chart."""
    x = np.asarray(x, dtype=float)
    n = model.n
    md = metric_data(model, x, t)
    dh = np.empty((n, n, n))
    for i in range(n):
        step = np.zeros(n)
        step[i] = h
        e_p, _ = model.unit_diag(x + step)
        e_m, _ = model.unit_diag(x - step)
        dh[i] = float(model.dscale(t)) * (np.diag(e_p) - np.diag(e_m)) / (2 * h)
    gam = md.christoffel
    hten = md.dt_g
    return (dh - np.einsum("mij,mk->ijk", gam, hten)
            - np.einsum("mik,jm->ijk", gam, hten))


def bianchi_one_form(model: EvolvingModel, x, t: float, h: float = 1e-4):
    """div(dt_g) - 1/2 d tr_g(dt_g), as a covector in chart components."""
    x = np.asarray(x, dtype=float)
    n = model.n
    md = metric_data(model, x, t)
    nabla = dt_g_covariant_derivative(model, x, t, h)
    div = np.einsum("ik,ikj->j", md.g_inv, nabla)
    dtr = np.empty(n)
    for j in range(n):
        step = np.zeros(n)
        step[j] = h
        tr_p = np.trace(metric_data(model, x + step, t).g_inv @ metric_data(model, x + step, t).dt_g)
        tr_m = np.trace(metric_data(model, x - step, t).g_inv @ metric_data(model, x - step, t).dt_g)
        dtr[j] = (tr_p - tr_m) / (2 * h)
    return div - 0.5 * dtr
