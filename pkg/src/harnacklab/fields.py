"""Positive solutions of d/dt u = 1/2 Laplace_{g_t} u on the model manifolds."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Callable

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import splu
from scipy.special import eval_gegenbauer

from .geometry import (ConformalCircle, ConformalTorus, EvolvingModel,
                       ShrinkingSphere, StaticHyperbolic)
from .stencils import GridSpec, NodeGeometry, grid_for


class PositivityError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class ScalarField:
    """u on the nodes of ``grid``; ``values`` has shape (nt + 1, *grid.shape)."""

    values: np.ndarray
    grid: GridSpec
    model: EvolvingModel
    provenance: str
    meta: dict = field(default_factory=dict)
    exact: Callable | None = field(default=None, repr=False)

    def __post_init__(self):
        expected = (self.grid.nt + 1,) + self.grid.shape
        if self.values.shape != expected:
            raise ValueError(f"values shape {self.values.shape} != {expected}")
        if not np.all(self.values > 0):
            j, *i = np.unravel_index(np.argmin(self.values), self.values.shape)
            raise PositivityError(f"u not positive at time index {j}, node {tuple(i)}")

    @cached_property
    def geometry(self) -> NodeGeometry:
        return NodeGeometry(self.model, self.grid)

    @property
    def times(self) -> np.ndarray:
        return self.grid.times()


# ---------------------------------------------------------------------------
# exact eigenmode solutions


def legendre_function(nu: float, z, nodes: int = 512):
    """P_nu(z) for z >= 1 from the Laplace integral (1/pi) int (z + sqrt(z^2-1) cos s)^nu ds."""
    z = np.asarray(z, dtype=float)
    s = np.linspace(0.0, math.pi, nodes + 1)
    w = np.full(nodes + 1, math.pi / nodes)
    w[[0, -1]] *= 0.5
    root = np.sqrt(np.maximum(z**2 - 1.0, 0.0))
    vals = (z[..., None] + root[..., None] * np.cos(s)) ** nu
    return vals @ w / math.pi


@dataclass(frozen=True)
class ExactSolution:
    """u = 1 + eps * exp(-lambda(t)) * psi(x) for an eigenfunction psi."""

    model: EvolvingModel
    mode: object
    amplitude: float

    def __post_init__(self):
        model, mode = self.model, self.mode
        if isinstance(model, ConformalCircle):
            if int(mode) != mode or int(mode) < 0:
                raise ValueError("circle modes are integers m >= 0")
        elif isinstance(model, ConformalTorus):
            if len(tuple(mode)) != 2:
                raise ValueError("torus modes are pairs (m1, m2)")
        elif isinstance(model, ShrinkingSphere):
            if int(mode) != mode or int(mode) < 0:
                raise ValueError("sphere modes are zonal degrees l >= 0")
        elif isinstance(model, StaticHyperbolic):
            if model.n != 2:
                raise ValueError("radial closed forms implemented for n = 2 only")
            if not -1.0 < float(mode) <= 0.0:
                raise ValueError("hyperbolic mode nu must lie in (-1, 0]")
        else:
            raise ValueError(f"unsupported model {type(model).__name__}")
        if not abs(self.amplitude) < 1.0:
            raise PositivityError("|eps| < 1 required for a positive solution")

    @property
    def eigenvalue(self) -> float:
        """mu with Laplace_hat psi = -mu psi."""
        model, mode = self.model, self.mode
        if isinstance(model, ConformalCircle):
            return float(mode) ** 2
        if isinstance(model, ConformalTorus):
            m1, m2 = mode
            return float(m1**2 + m2**2)
        if isinstance(model, ShrinkingSphere):
            ell = int(mode)
            return float(ell * (ell + model.n - 1))
        nu = float(mode)
        return -model.kappa * nu * (nu + 1.0)

    def decay_exponent(self, t):
        """lambda(t) = (mu/2) int_0^t sigma(s)^-1 ds."""
        t = np.asarray(t, dtype=float)
        model, mu = self.model, self.eigenvalue
        if isinstance(model, (ConformalCircle, ConformalTorus)):
            return 0.5 * mu * model.profile.inv_sq_integral(t)
        if isinstance(model, ShrinkingSphere):
            c = model.scale(t)
            return mu / (2.0 * (model.n - 1)) * np.log(model.c0 / c)
        return 0.5 * mu * t

    def mode_function(self, *coords):
        model, mode = self.model, self.mode
        if isinstance(model, ConformalCircle):
            return np.cos(int(mode) * np.asarray(coords[0]))
        if isinstance(model, ConformalTorus):
            m1, m2 = mode
            return np.cos(m1 * np.asarray(coords[0])) * np.cos(m2 * np.asarray(coords[1]))
        if isinstance(model, ShrinkingSphere):
            alpha = 0.5 * (model.n - 1)
            ell = int(mode)
            return eval_gegenbauer(ell, alpha, np.cos(coords[0])) / eval_gegenbauer(ell, alpha, 1.0)
        sk = math.sqrt(model.kappa)
        return legendre_function(float(mode), np.cosh(sk * np.asarray(coords[0])))

    def __call__(self, t, *coords):
        t = np.asarray(t, dtype=float)
        return 1.0 + self.amplitude * np.exp(-self.decay_exponent(t)) * self.mode_function(*coords)


def closed_form_solution(model: EvolvingModel, mode, amplitude: float,
                         grid: GridSpec | None = None) -> ScalarField:
    if grid is None:
        grid = grid_for(model, 64, 64)
    sol = ExactSolution(model, mode, float(amplitude))
    times = grid.times()
    mesh = grid.mesh()
    decay = np.exp(-sol.decay_exponent(times))
    psi = sol.mode_function(*mesh)
    values = 1.0 + sol.amplitude * decay.reshape((-1,) + (1,) * grid.ndim) * psi[None]
    mode_meta = list(mode) if isinstance(mode, (tuple, list)) else mode
    return ScalarField(values, grid, model, "exact",
                       {"mode": mode_meta, "amplitude": float(amplitude),
                        "eigenvalue": sol.eigenvalue}, exact=sol)


# ---------------------------------------------------------------------------
# numerical solver


def solve_heat(model: EvolvingModel, initial, grid: GridSpec,
               enforce_max_principle: bool = False) -> ScalarField:
    """Implicit trapezoidal method of lines with the metric frozen at mid-step.

    ``initial`` is an array over the spatial grid or a callable of the grid
    coordinates. Aborts with PositivityError at the first non-positive node.
    """
    geom = NodeGeometry(model, grid)
    lap_hat = geom.laplacian_matrix()
    u0 = initial(*grid.mesh()) if callable(initial) else np.asarray(initial, dtype=float)
    u0 = np.broadcast_to(u0, grid.shape).astype(float)
    if not np.all(u0 > 0):
        raise PositivityError("initial profile must be strictly positive")

    dt = grid.dt
    times = grid.times()
    size = lap_hat.shape[0]
    eye = sp.identity(size, format="csc")
    diag_max = float(np.max(np.abs(lap_hat.diagonal())))
    out = np.empty((grid.nt + 1,) + grid.shape)
    out[0] = u0
    u = u0.ravel().copy()
    factor_cache = {}
    ratio = 0.0
    mp_ok = True
    mp_tol = 1e-12
    for j in range(grid.nt):
        sigma_mid = float(model.scale(times[j] + 0.5 * dt))
        s = 0.25 * dt / sigma_mid
        ratio = max(ratio, s * diag_max)
        key = round(s, 15)
        if key not in factor_cache:
            if len(factor_cache) > 4:
                factor_cache.clear()
            factor_cache[key] = splu((eye - s * lap_hat).tocsc())
        rhs = u + s * (lap_hat @ u)
        new = factor_cache[key].solve(rhs)
        if not np.all(new > 0):
            bad = int(np.argmin(new))
            raise PositivityError(
                f"positivity lost at t={times[j + 1]:.6g}, node {np.unravel_index(bad, grid.shape)}")
        scale = max(1.0, float(np.max(np.abs(u))))
        if new.min() < u.min() - mp_tol * scale or new.max() > u.max() + mp_tol * scale:
            mp_ok = False
        u = new
        out[j + 1] = u.reshape(grid.shape)
    if enforce_max_principle and ratio > 1.0:
        raise ValueError(f"time step too large for the discrete maximum principle (ratio {ratio:.3g} > 1)")
    meta = {
        "scheme": "implicit trapezoidal, metric frozen at mid-step",
        "unconditionally_stable": True,
        "max_principle_ratio": ratio,
        "max_principle_ok": mp_ok,
    }
    return ScalarField(out, grid, model, "numeric", meta)


def sup_norm(field: ScalarField, mask=None, t_window=None) -> float:
    """max |u| over the grid nodes of a region (mask and/or closed time window)."""
    region = np.ones(field.values.shape, dtype=bool)
    if mask is not None:
        region &= np.broadcast_to(mask, field.values.shape)
    if t_window is not None:
        lo, hi = t_window
        t = field.times
        sel = (t >= lo - 1e-9) & (t <= hi + 1e-9)
        region &= sel.reshape((-1,) + (1,) * field.grid.ndim)
    if not region.any():
        raise ValueError("region contains no grid nodes")
    return float(np.max(np.abs(field.values[region])))
