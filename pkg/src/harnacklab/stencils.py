"""Space-time grids and second-order stencils for g_t = sigma(t) g_hat.

Fields live on the coordinates a model's solutions actually vary in: the
angle on the circle, (x, y) on the torus, colatitude for zonal fields on the
sphere, and the radius for radial fields on hyperbolic space. The remaining
chart coordinates are frozen at a representative value; by symmetry every
quantity computed here is independent of that choice.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np
import scipy.sparse as sp

from .geometry import (ConformalCircle, ConformalTorus, EvolvingModel,
                       ShrinkingSphere, StaticHyperbolic, christoffel_from_diag)

PERIODIC, REFLECT, OPEN = "periodic", "reflect", "open"
MIN_RESOLUTION = 8


@dataclass(frozen=True)
class GridSpec:
    shape: tuple[int, ...]
    lower: tuple[float, ...]
    upper: tuple[float, ...]
    # per axis: (low side, high side) boundary kind
    bc: tuple[tuple[str, str], ...]
    nt: int
    T: float
    t0: float = 0.0

    def __post_init__(self):
        if any(s < MIN_RESOLUTION for s in self.shape):
            raise ValueError(f"spatial resolution must be >= {MIN_RESOLUTION}")
        if self.nt < 1 or not self.T > self.t0:
            raise ValueError("need nt >= 1 and T > t0")

    @property
    def ndim(self) -> int:
        return len(self.shape)

    @property
    def h(self) -> tuple[float, ...]:
        return tuple((hi - lo) / n for lo, hi, n in zip(self.lower, self.upper, self.shape))

    @property
    def h_max(self) -> float:
        return max(self.h)

    @property
    def dt(self) -> float:
        return (self.T - self.t0) / self.nt

    def axes(self) -> list[np.ndarray]:
        out = []
        for (lo, hi), n, h, (b_lo, _) in zip(zip(self.lower, self.upper), self.shape, self.h, self.bc):
            offset = 0.0 if b_lo == PERIODIC else 0.5
            out.append(lo + (np.arange(n) + offset) * h)
        return out

    def times(self) -> np.ndarray:
        return np.linspace(self.t0, self.T, self.nt + 1)

    def mesh(self) -> list[np.ndarray]:
        return np.meshgrid(*self.axes(), indexing="ij")

    def refined(self, times: int = 1) -> "GridSpec":
        f = 2**times
        return replace(self, shape=tuple(s * f for s in self.shape), nt=self.nt * f)

    def to_dict(self) -> dict:
        return {"shape": list(self.shape), "lower": list(self.lower),
                "upper": list(self.upper), "bc": [list(b) for b in self.bc],
                "nt": self.nt, "t0": self.t0, "T": self.T,
                "h": list(self.h), "dt": self.dt}


def grid_for(model: EvolvingModel, n_space: int, nt: int,
             T: float | None = None, t0: float = 0.0) -> GridSpec:
    """Standard chart grid for a model."""
    T = model.T if T is None else T
    two_pi = 2.0 * math.pi
    if isinstance(model, ConformalCircle):
        return GridSpec((n_space,), (0.0,), (two_pi,), ((PERIODIC, PERIODIC),), nt, T, t0)
    if isinstance(model, ConformalTorus):
        return GridSpec((n_space, n_space), (0.0, 0.0), (two_pi, two_pi),
                        ((PERIODIC, PERIODIC),) * 2, nt, T, t0)
    if isinstance(model, ShrinkingSphere):
        return GridSpec((n_space,), (0.0,), (math.pi,), ((REFLECT, REFLECT),), nt, T, t0)
    if isinstance(model, StaticHyperbolic):
        return GridSpec((n_space,), (0.0,), (model.R,), ((REFLECT, OPEN),), nt, T, t0)
    raise TypeError(f"no grid layout for {type(model).__name__}")


def _pad(v, axis, bc):
    """One ghost layer on each side of ``axis`` per boundary kind."""
    lo, hi = bc
    if lo == PERIODIC:
        return np.concatenate([np.take(v, [-1], axis=axis), v, np.take(v, [0], axis=axis)], axis=axis)
    parts = []
    for side, idx in ((lo, 0), (hi, -1)):
        ghost = np.take(v, [idx], axis=axis)
        if side == OPEN:
            ghost = np.full_like(ghost, np.nan)
        parts.append(ghost)
    return np.concatenate([parts[0], v, parts[1]], axis=axis)


def _interior(vp, axis, start, stop):
    sl = [slice(None)] * vp.ndim
    sl[axis] = slice(start, vp.shape[axis] + stop if stop <= 0 else stop)
    return vp[tuple(sl)]


class NodeGeometry:
    """Unit-metric data at grid nodes and faces; time enters only via sigma(t)."""

    def __init__(self, model: EvolvingModel, grid: GridSpec):
        self.model = model
        self.grid = grid
        self.n = model.n
        mesh = grid.mesh()
        self.points = model.chart_point(*mesh)
        self.e, de = model.unit_diag(self.points)
        self.gamma = christoffel_from_diag(self.e, de)
        self.vol = np.sqrt(np.prod(self.e, axis=-1))
        if grid.ndim == 1 and grid.bc[0][0] != PERIODIC:
            # cell averages of the volume density; point values lose accuracy in pole cells
            nodes, weights = np.polynomial.legendre.leggauss(8)
            h = grid.h[0]
            s = grid.axes()[0][:, None] + 0.5 * h * nodes[None, :]
            with np.errstate(invalid="ignore", divide="ignore"):
                es, _ = model.unit_diag(model.chart_point(s))
            self.vol = 0.5 * np.sum(np.sqrt(np.prod(es, axis=-1)) * weights, axis=-1)
        self.times = grid.times()
        self.sigma = np.asarray(model.scale(self.times), dtype=float)
        self.dsigma = np.asarray(model.dscale(self.times), dtype=float)
        # face coefficients vol * g_hat^{aa} at the low face of each node (+1 extra)
        self.face = []
        axes = grid.axes()
        for a, h in enumerate(grid.h):
            face_axes = list(axes)
            face_axes[a] = np.append(axes[a] - 0.5 * h, axes[a][-1] + 0.5 * h)
            fmesh = np.meshgrid(*face_axes, indexing="ij")
            fpts = model.chart_point(*fmesh)
            with np.errstate(invalid="ignore", divide="ignore"):
                fe, _ = model.unit_diag(fpts)
                coef = np.sqrt(np.prod(fe, axis=-1)) / fe[..., a]
            self.face.append(np.nan_to_num(coef, nan=0.0))

    # ------------------------------------------------------------------
    def time_shape(self, arr):
        """Broadcast a per-time vector against (time, *space) arrays."""
        return np.reshape(arr, (-1,) + (1,) * self.grid.ndim)

    def _space_axis(self, v, a):
        return v.ndim - self.grid.ndim + a

    def d1(self, v, a):
        ax = self._space_axis(v, a)
        vp = _pad(v, ax, self.grid.bc[a])
        return (_interior(vp, ax, 2, 0) - _interior(vp, ax, 0, -2)) / (2 * self.grid.h[a])

    def d2(self, v, a):
        ax = self._space_axis(v, a)
        vp = _pad(v, ax, self.grid.bc[a])
        h = self.grid.h[a]
        return (_interior(vp, ax, 2, 0) - 2 * v + _interior(vp, ax, 0, -2)) / h**2

    def unit_laplacian(self, v):
        """Divergence-form Laplace-Beltrami stencil of g_hat."""
        out = np.zeros_like(v, dtype=float)
        for a, h in enumerate(self.grid.h):
            ax = self._space_axis(v, a)
            vp = _pad(v, ax, self.grid.bc[a])
            diff = np.diff(vp, axis=ax)
            flux = self.face[a] * diff / h
            out = out + np.diff(flux, axis=ax) / h
        return out / self.vol

    def unit_gradient(self, v):
        """Chart partials, zero in the frozen directions. Shape (..., n)."""
        g = np.zeros(v.shape + (self.n,))
        for a in range(self.grid.ndim):
            g[..., a] = self.d1(v, a)
        return g

    def unit_second(self, v):
        sec = np.zeros(v.shape + (self.n, self.n))
        for a in range(self.grid.ndim):
            sec[..., a, a] = self.d2(v, a)
            for b in range(a + 1, self.grid.ndim):
                mixed = self.d1(self.d1(v, a), b)
                sec[..., a, b] = mixed
                sec[..., b, a] = mixed
        return sec

    def hessian(self, v):
        """Chart components of nabla^2 v (scale invariant)."""
        grad = self.unit_gradient(v)
        return self.unit_second(v) - np.einsum("...cab,...c->...ab", self.gamma, grad)

    # ------------------------------------------------------------------
    # physical quantities on (time, *space) arrays

    def grad_sq(self, v):
        grad = self.unit_gradient(v)
        return np.sum(grad**2 / self.e, axis=-1) / self.time_shape(self.sigma)

    def laplacian(self, v, sigma=None):
        sigma = self.sigma if sigma is None else sigma
        return self.unit_laplacian(v) / self.time_shape(sigma)

    def hess_norm_sq(self, v):
        hess = self.hessian(v)
        w = 1.0 / (self.e[..., :, None] * self.e[..., None, :])
        return np.sum(hess**2 * w, axis=(-2, -1)) / self.time_shape(self.sigma) ** 2

    def hess_trace(self, v):
        hess = self.hessian(v)
        diag = np.diagonal(hess, axis1=-2, axis2=-1)
        return np.sum(diag / self.e, axis=-1) / self.time_shape(self.sigma)

    def dtg_dot_hess(self, v):
        """<d/dt g, nabla^2 v>_g with d/dt g = sigma' g_hat."""
        hess = self.hessian(v)
        diag = np.diagonal(hess, axis1=-2, axis2=-1)
        s = self.time_shape(self.sigma)
        return self.time_shape(self.dsigma) * np.sum(diag / self.e, axis=-1) / s**2

    def r_form(self, v):
        """R_t(nabla v, nabla v) with R_t = Ric + d/dt g."""
        grad = self.unit_gradient(v)
        coeff = self.model.ricci_factor + self.time_shape(self.dsigma)
        return coeff * np.sum(grad**2 / self.e, axis=-1) / self.time_shape(self.sigma) ** 2

    def dt(self, v):
        if v.shape[0] < 3:
            raise ValueError("need at least three time levels for time stencils")
        return np.gradient(v, self.grid.dt, axis=0, edge_order=2)

    def heat_drift(self, v):
        """(d/dt - 1/2 Laplace_{g_t}) v on a space-time array."""
        return self.dt(v) - 0.5 * self.laplacian(v)

    # ------------------------------------------------------------------
    def degenerate_mask(self):
        """True at nodes usable for checks (outside pole/origin bands)."""
        model = self.model
        coord = self.grid.axes()[0]
        if isinstance(model, ShrinkingSphere):
            ok = (coord >= model.theta_min) & (coord <= math.pi - model.theta_min)
        elif isinstance(model, StaticHyperbolic):
            ok = coord >= model.r_min
        else:
            return np.ones(self.grid.shape, dtype=bool)
        return ok.reshape((-1,) + (1,) * (self.grid.ndim - 1)) & np.ones(self.grid.shape, bool)

    def applicability(self, *arrays, t_lo: float = 0.0):
        mask = np.broadcast_to(self.degenerate_mask(), (self.grid.nt + 1,) + self.grid.shape).copy()
        mask &= self.time_shape(self.times >= t_lo - 1e-12)
        for arr in arrays:
            mask &= np.isfinite(arr)
        return mask

    # ------------------------------------------------------------------
    def laplacian_matrix(self):
        """Sparse matrix of the g_hat divergence stencil (closed grids only)."""
        grid = self.grid
        shape = grid.shape
        size = int(np.prod(shape))
        idx = np.arange(size).reshape(shape)
        rows, cols, vals = [], [], []
        diag = np.zeros(size)
        vol = self.vol.ravel()
        for a, h in enumerate(grid.h):
            if OPEN in grid.bc[a]:
                raise ValueError("implicit solver needs a closed grid (no open boundary)")
            face = self.face[a]
            lo_face = np.take(face, np.arange(shape[a]), axis=a)
            hi_face = np.take(face, np.arange(1, shape[a] + 1), axis=a)
            periodic = grid.bc[a][0] == PERIODIC
            for coef, shift in ((hi_face, 1), (lo_face, -1)):
                nbr = np.roll(idx, -shift, axis=a)
                valid = np.ones(shape, dtype=bool)
                if not periodic:
                    edge = shape[a] - 1 if shift == 1 else 0
                    sl = [slice(None)] * grid.ndim
                    sl[a] = edge
                    valid[tuple(sl)] = False
                c = (coef / h**2).ravel() / vol
                v = valid.ravel()
                rows.append(idx.ravel()[v])
                cols.append(nbr.ravel()[v])
                vals.append(c[v])
                diag[v] -= c[v]
        rows.append(np.arange(size))
        cols.append(np.arange(size))
        vals.append(diag)
        return sp.csr_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                             shape=(size, size))
