"""Brownian motion of the evolving metrics and statistical checks of the semigroup.

A path started at PDE time t* uses the metric g_{t* - r} at path-time r, so
E f(xi_{t*}) solves the heat equation at (x, t*) from initial data f, and a
functional Phi with nonpositive drift gives nondecreasing means of
N_r = Phi(xi_r, t* - r).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.interpolate import RegularGridInterpolator

from .drift import FunctionalSpec, functional_field
from .fields import ScalarField
from .geometry import (ConformalCircle, ConformalTorus, EvolvingModel, ShrinkingSphere,
                       StaticHyperbolic)
from .stencils import PERIODIC

# pinned first-order bias allowance for weak_error: |mean - ref| <= 3 SE + WEAK_C * dr
WEAK_C = 2.0
Z_THRESHOLD = 3.0
ROTATION_LIMIT = 0.01
BLOCK = 1024


@dataclass(frozen=True, eq=False)
class PathEnsemble:
    """Positions at checkpoints; ``positions`` has shape (m, n_paths, state_dim).

    State is the unwrapped angle(s) on circle and torus, the unit vector in
    R^{n+1} on the sphere (pole e0), and the point of the unit hyperboloid in
    Minkowski space on hyperbolic space (origin e0).
    """

    model: EvolvingModel
    t_star: float
    start: tuple
    dr: float
    n_paths: int
    seed: int
    checkpoints: np.ndarray
    positions: np.ndarray
    steps: int
    rotations: int = 0
    exits: int = 0
    meta: dict = field(default_factory=dict)

    @property
    def rotation_fraction(self) -> float:
        return self.rotations / max(1, self.steps * self.n_paths)

    @property
    def flagged(self) -> bool:
        return self.rotation_fraction >= ROTATION_LIMIT

    def grid_coords(self, j: int) -> tuple:
        """Field-grid coordinates of all paths at checkpoint j."""
        pos = self.positions[j]
        if isinstance(self.model, (ConformalCircle, ConformalTorus)):
            return tuple(np.mod(pos[:, a], 2 * math.pi) for a in range(pos.shape[1]))
        if isinstance(self.model, ShrinkingSphere):
            return (np.arccos(np.clip(pos[:, 0], -1.0, 1.0)),)
        return (np.arccosh(np.maximum(pos[:, 0], 1.0)) / math.sqrt(self.model.kappa),)

    def to_dict(self) -> dict:
        return {"model": self.model.to_dict(), "t_star": self.t_star, "start": list(self.start),
                "dr": self.dr, "n_paths": self.n_paths, "seed": self.seed,
                "checkpoints": self.checkpoints.tolist(), "steps": self.steps,
                "rotations": self.rotations, "rotation_fraction": self.rotation_fraction,
                "flagged": self.flagged, "exits": self.exits}


def path_streams(seed: int, start: int, stop: int):
    """Counter-based generator per path index."""
    return [np.random.Generator(np.random.Philox(np.random.SeedSequence(seed, spawn_key=(i,))))
            for i in range(start, stop)]


def _initial_state(model, x):
    x = tuple(float(v) for v in np.atleast_1d(x))
    if isinstance(model, ConformalCircle):
        return np.array([x[0]])
    if isinstance(model, ConformalTorus):
        return np.array(x[:2])
    if isinstance(model, ShrinkingSphere):
        v = np.zeros(model.n + 1)
        v[0], v[1] = math.cos(x[0]), math.sin(x[0])
        return v
    if isinstance(model, StaticHyperbolic):
        if not 0 <= x[0] < model.R:
            raise ValueError("start radius must lie in [0, R)")
        v = np.zeros(model.n + 1)
        r1 = math.sqrt(model.kappa) * x[0]
        v[0], v[1] = math.cosh(r1), math.sinh(r1)
        return v
    raise TypeError(f"no simulator for {type(model).__name__}")


def _noise_dim(model):
    if isinstance(model, ShrinkingSphere):
        return model.n + 1
    if isinstance(model, StaticHyperbolic):
        return model.n
    if isinstance(model, ConformalTorus):
        return 2
    return 1


def simulate(model: EvolvingModel, t_star: float, x, n_paths: int, dr: float, seed: int,
             checkpoints=None) -> PathEnsemble:
    """Euler-type paths of the diffusion with generator 1/2 Laplace_{g_{t* - r}}."""
    if not 0 < t_star <= model.T + 1e-12:
        raise ValueError(f"t* must lie in (0, {model.T}]")
    if n_paths < 1 or dr <= 0:
        raise ValueError("need n_paths >= 1 and dr > 0")
    steps = int(round(t_star / dr))
    if steps < 1 or abs(steps * dr - t_star) > 1e-9 * max(1.0, t_star):
        raise ValueError("t* must be a whole number of steps dr")
    cps = np.array([0.0, t_star] if checkpoints is None else checkpoints, dtype=float)
    if np.any(np.diff(cps) <= 0) or cps[0] < 0 or cps[-1] > t_star + 1e-12:
        raise ValueError("checkpoints must increase within [0, t*]")
    cp_idx = np.rint(cps / dr).astype(int)
    if np.any(np.abs(cp_idx * dr - cps) > 1e-9):
        raise ValueError("checkpoints must be multiples of dr")

    r = np.arange(steps + 1) * dr
    pde_t = t_star - r
    if isinstance(model, ShrinkingSphere):
        c = model.scale(pde_t)
        if np.any(c <= 0):
            raise ValueError("sphere collapsed inside the path window")
        # exact time change: d tau = dr / c(t* - r)
        dtau = np.log(c[1:] / c[:-1]) / (model.n - 1)
    elif isinstance(model, (ConformalCircle, ConformalTorus)):
        a = model.profile.a(pde_t[:-1])
        if np.any(a <= 0):
            raise ValueError("scale profile vanishes inside the path window")
        coef = 1.0 / a
    state0 = _initial_state(model, x)
    dim = _noise_dim(model)
    out = np.empty((len(cps), n_paths, state0.size))
    rotations = 0
    exits = 0
    band = getattr(model, "theta_min", 0.0)
    for lo in range(0, n_paths, BLOCK):
        hi = min(n_paths, lo + BLOCK)
        noise = np.stack([g.standard_normal((steps, dim)) for g in path_streams(seed, lo, hi)], axis=1)
        s = np.broadcast_to(state0, (hi - lo, state0.size)).copy()
        in_band = np.zeros(hi - lo, dtype=bool)
        ci = 0
        if cp_idx[0] == 0:
            out[0, lo:hi] = s
            ci = 1
        for k in range(steps):
            z = noise[k]
            if isinstance(model, ShrinkingSphere):
                proj = z - np.sum(z * s, axis=1, keepdims=True) * s
                s = s + math.sqrt(dtau[k]) * proj
                norm = np.linalg.norm(s, axis=1, keepdims=True)
                if np.any(norm < 0.5):
                    raise ValueError("step too large: tangential projection failed")
                s = s / norm
                theta = np.arccos(np.clip(s[:, 0], -1.0, 1.0))
                now = (theta < band) | (theta > math.pi - band)
                rotations += int(np.count_nonzero(now & ~in_band))
                in_band = now
            elif isinstance(model, StaticHyperbolic):
                s = _hyperboloid_step(s, math.sqrt(model.kappa * dr) * z)
            else:
                s = s + coef[k] * math.sqrt(dr) * z
            if ci < len(cp_idx) and k + 1 == cp_idx[ci]:
                out[ci, lo:hi] = s
                ci += 1
        if isinstance(model, StaticHyperbolic):
            r_out = np.arccosh(np.maximum(out[:, lo:hi, 0], 1.0)) / math.sqrt(model.kappa)
            exits += int(np.count_nonzero(r_out > model.R))
    start = tuple(float(v) for v in np.atleast_1d(x))
    return PathEnsemble(model, float(t_star), start, float(dr), int(n_paths), int(seed),
                        cps, out, steps, rotations, exits)


def _hyperboloid_step(x, w):
    """Geodesic step exp_x(L_x (0, w)) on the unit hyperboloid; L_x boosts e0 to x."""
    x0 = x[:, :1]
    xs = x[:, 1:]
    dot = np.sum(xs * w, axis=1, keepdims=True)
    v = np.concatenate([dot, w + xs * dot / (1.0 + x0)], axis=1)
    size = np.linalg.norm(w, axis=1, keepdims=True)
    with np.errstate(invalid="ignore", divide="ignore"):
        direction = np.where(size > 0, v / size, 0.0)
    new = np.cosh(size) * x + np.sinh(size) * direction
    # project back onto -x0^2 + |x'|^2 = -1
    new[:, 0] = np.sqrt(1.0 + np.sum(new[:, 1:] ** 2, axis=1))
    return new


@dataclass(frozen=True)
class MCReport:
    kind: str
    checkpoints: list
    means: list
    ses: list
    passed: bool
    z_scores: list = field(default_factory=list)
    weak_error: float | None = None
    reference: float | None = None
    details: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {"kind": self.kind, "checkpoints": self.checkpoints, "means": self.means,
                "ses": self.ses, "pass": self.passed, "z_scores": self.z_scores,
                "weak_error": self.weak_error, "reference": self.reference,
                "details": self.details}

    def to_csv(self) -> str:
        rows = ["checkpoint,mean,se"]
        rows += [f"{c!r},{m!r},{s!r}" for c, m, s in zip(self.checkpoints, self.means, self.ses)]
        return "\n".join(rows) + "\n"


def _mean_se(vals):
    vals = np.asarray(vals, dtype=float)
    mean = float(np.mean(vals))
    se = float(np.std(vals, ddof=1) / math.sqrt(vals.size)) if vals.size > 1 else 0.0
    return mean, se


def weak_error(ensemble: PathEnsemble, f, reference: float, C: float = WEAK_C,
               checkpoint: int = -1) -> MCReport:
    """Compare E f(xi) at a checkpoint with an exact expectation."""
    vals = np.broadcast_to(np.asarray(f(*ensemble.grid_coords(checkpoint)), dtype=float),
                           (ensemble.n_paths,))
    mean, se = _mean_se(vals)
    err = float(abs(mean - reference))
    allowance = Z_THRESHOLD * se + C * ensemble.dr
    return MCReport("weak_error", [float(ensemble.checkpoints[checkpoint])], [mean], [se],
                    bool(err <= allowance), weak_error=err, reference=float(reference),
                    details={"allowance": allowance, "C": C, "dr": ensemble.dr,
                             "n_paths": ensemble.n_paths, "flagged": ensemble.flagged})


def field_interpolator(values: np.ndarray, field: ScalarField):
    """Linear interpolation of a (time, *space) array with periodic wrap where needed."""
    grid = field.grid
    axes = [field.times]
    vals = values
    for a, ax in enumerate(grid.axes()):
        if grid.bc[a][0] == PERIODIC:
            ax = np.append(ax, grid.upper[a])
            vals = np.concatenate([vals, np.take(vals, [0], axis=a + 1)], axis=a + 1)
        axes.append(ax)
    return RegularGridInterpolator(axes, vals, bounds_error=False, fill_value=None)


def supermartingale_test(spec: FunctionalSpec, ensemble: PathEnsemble, field: ScalarField,
                         bounds=None, t_lo: float | None = None) -> MCReport:
    """Means of N_r = Phi(xi_r, t* - r) must not decrease beyond 3 paired SEs."""
    t_lo = 4 * field.grid.dt if t_lo is None else t_lo
    pde_t = ensemble.t_star - ensemble.checkpoints
    if np.any(pde_t <= t_lo):
        raise ValueError(f"checkpoint at PDE time <= t_lo = {t_lo:g}")
    if ensemble.t_star > field.grid.T + 1e-12:
        raise ValueError("field does not cover t*")
    phi = functional_field(spec, field, bounds)
    interp = field_interpolator(phi, field)
    samples = []
    for j, t in enumerate(pde_t):
        coords = ensemble.grid_coords(j)
        pts = np.column_stack([np.full(ensemble.n_paths, t)] + list(coords))
        samples.append(interp(pts))
    samples = np.array(samples)
    good = np.all(np.isfinite(samples), axis=0)
    if not good.any():
        raise ValueError("no path stays inside the field's domain")
    samples = samples[:, good]
    means, ses = zip(*(_mean_se(s) for s in samples))
    z, ok = [], True
    for j in range(len(samples) - 1):
        d_mean, d_se = _mean_se(samples[j + 1] - samples[j])
        zj = d_mean / d_se if d_se > 0 else 0.0
        z.append(zj)
        if d_mean < -Z_THRESHOLD * d_se - 1e-14:
            ok = False
    return MCReport(f"supermartingale_{spec.kind}", ensemble.checkpoints.tolist(), list(means),
                    list(ses), bool(ok), z_scores=z,
                    details={"paths_used": int(good.sum()), "pde_times": pde_t.tolist(),
                             "flagged": ensemble.flagged,
                             "rotation_fraction": ensemble.rotation_fraction})
