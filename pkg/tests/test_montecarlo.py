import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.integrate import quad

from harnacklab.drift import FunctionalSpec
from harnacklab.fields import closed_form_solution
from harnacklab.geometry import ConformalCircle, ConformalTorus, ScaleProfile, StaticHyperbolic
from harnacklab.montecarlo import (path_streams, simulate, supermartingale_test, weak_error)
from harnacklab.stencils import grid_for

CIRCLE = ConformalCircle(T=1.0)
TORUS_SIN1 = ConformalTorus(T=1.0, profile=ScaleProfile("sin", a0=1.0, eps=0.25, omega=1.0))
N_PATHS = 10_000
DR = 1e-3


def test_circle_variance_is_time():
    ens = simulate(CIRCLE, 1.0, [0.0], N_PATHS, 0.01, seed=3, checkpoints=[0.0, 0.5, 1.0])
    for j, r in enumerate(ens.checkpoints):
        x = ens.positions[j, :, 0]
        var = np.var(x, ddof=1)
        se = var * math.sqrt(2.0 / (N_PATHS - 1))
        assert abs(var - r) <= 3 * se + 1e-12


def test_single_path_deterministic():
    a = simulate(CIRCLE, 0.5, [0.1], 1, 0.01, seed=11)
    b = simulate(CIRCLE, 0.5, [0.1], 1, 0.01, seed=11)
    assert np.array_equal(a.positions, b.positions)
    c = simulate(CIRCLE, 0.5, [0.1], 1, 0.01, seed=12)
    assert not np.array_equal(a.positions, c.positions)


def test_streams_do_not_depend_on_block_layout():
    whole = np.concatenate([g.standard_normal(4) for g in path_streams(5, 0, 6)])
    split = np.concatenate([g.standard_normal(4) for g in path_streams(5, 0, 3)]
                           + [g.standard_normal(4) for g in path_streams(5, 3, 6)])
    assert np.array_equal(whole, split)


def test_circle_weak_error_reference():
    ens = simulate(CIRCLE, 1.0, [0.0], N_PATHS, DR, seed=2024)
    rep = weak_error(ens, np.cos, math.exp(-0.5))
    assert rep.reference == pytest.approx(0.60653, abs=1e-5)
    assert rep.passed, rep.to_dict()


def test_constant_observable_has_zero_se():
    ens = simulate(CIRCLE, 0.2, [0.0], 100, 0.01, seed=1)
    rep = weak_error(ens, lambda th: np.ones_like(th), 1.0)
    assert rep.means == [1.0] and rep.ses == [0.0] and rep.passed


def test_torus_weak_error_quadrature_reference():
    t_star = 1.0
    lam = 0.5 * quad(lambda s: (1 + 0.25 * math.sin(t_star - s)) ** -2, 0.0, t_star)[0]
    ens = simulate(TORUS_SIN1, t_star, [0.0, 0.0], N_PATHS, 0.002, seed=9)
    rep = weak_error(ens, lambda x, y: np.cos(x), math.exp(-lam))
    assert rep.passed, rep.to_dict()


def test_scheme_weak_error_first_order():
    # Gaussian increments make the scheme's E cos exactly exp(-1/2 dr sum a_k^-2)
    prof = ScaleProfile("sin", a0=1.0, eps=0.25, omega=1.0)
    exact = 0.5 * quad(lambda s: prof.a(1.0 - s) ** -2, 0.0, 1.0)[0]
    errs = []
    for dr in (0.02, 0.01, 0.005):
        r = np.arange(0.0, 1.0 - 1e-12, dr)
        errs.append(abs(math.exp(-0.5 * dr * np.sum(prof.a(1.0 - r) ** -2)) - math.exp(-exact)))
    ratios = [errs[i] / errs[i + 1] for i in range(2)]
    assert all(1.8 <= q <= 2.2 for q in ratios), ratios
    # the simulated variance follows the same left-point sum
    dr = 0.01
    ens = simulate(ConformalCircle(T=1.0, profile=prof), 1.0, [0.0], N_PATHS, dr, seed=4)
    r = np.arange(0.0, 1.0 - 1e-12, dr)
    var_scheme = dr * np.sum(prof.a(1.0 - r) ** -2)
    var = np.var(ens.positions[-1, :, 0], ddof=1)
    assert abs(var - var_scheme) <= 3 * var * math.sqrt(2.0 / (N_PATHS - 1))


def test_hyperbolic_weak_error(hyperbolic_field):
    sol = hyperbolic_field.exact
    r0, t_star = 0.5, 0.5
    ens = simulate(hyperbolic_field.model, t_star, [r0], 4000, 0.002, seed=5)
    rep = weak_error(ens, lambda r: sol(t_star - ens.checkpoints[-1], r), float(sol(t_star, r0)))
    assert rep.passed, rep.to_dict()


def test_supermartingale_circle_hamilton(circle_field):
    ens = simulate(CIRCLE, 1.0, [0.5 * math.pi], N_PATHS, DR, seed=7,
                   checkpoints=[0.0, 0.25, 0.5, 0.75])
    rep = supermartingale_test(FunctionalSpec("H_hamilton", 1.0, k=0.0), ens, circle_field)
    assert rep.passed, rep.to_dict()


def test_supermartingale_sphere_s_hat(sphere_field, sphere_bounds):
    model = sphere_field.model
    ens = simulate(model, 0.5, [0.3], 4000, 0.002, seed=8, checkpoints=[0.0, 0.2, 0.4])
    rep = supermartingale_test(FunctionalSpec("S_hat_ricci", 0.5, k=2.0), ens, sphere_field,
                               sphere_bounds)
    assert rep.passed and not ens.flagged
    assert rep.means[0] < rep.means[-1]


def test_supermartingale_constant_field_is_flat():
    one = closed_form_solution(CIRCLE, 1, 0.0, grid_for(CIRCLE, 32, 32))
    ens = simulate(CIRCLE, 1.0, [1.0], 500, 0.01, seed=1, checkpoints=[0.0, 0.5])
    rep = supermartingale_test(FunctionalSpec("H_hamilton", 1.0, k=0.0), ens, one)
    assert rep.means == [0.0, 0.0] and rep.passed


def test_checkpoint_too_close_to_zero_rejected(circle_field):
    ens = simulate(CIRCLE, 1.0, [0.0], 10, 0.01, seed=1, checkpoints=[0.0, 1.0])
    with pytest.raises(ValueError):
        supermartingale_test(FunctionalSpec("H_hamilton", 1.0, k=0.0), ens, circle_field)


def test_input_validation():
    with pytest.raises(ValueError):
        simulate(CIRCLE, 1.5, [0.0], 10, 0.01, seed=1)
    with pytest.raises(ValueError):
        simulate(CIRCLE, 1.0, [0.0], 10, 0.3, seed=1)
    with pytest.raises(ValueError):
        simulate(CIRCLE, 1.0, [0.0], 10, 0.01, seed=1, checkpoints=[0.5, 0.2])


@settings(max_examples=10, deadline=None)
@given(st.integers(0, 2**32), st.floats(0.0, 2 * math.pi))
def test_sphere_paths_stay_on_sphere(seed, theta):
    from harnacklab.geometry import ShrinkingSphere
    ens = simulate(ShrinkingSphere(n=2, c0=1.0, T=0.5), 0.5, [min(theta, math.pi)], 50, 0.01, seed)
    assert np.allclose(np.linalg.norm(ens.positions, axis=-1), 1.0)


@settings(max_examples=10, deadline=None)
@given(st.integers(0, 2**32))
def test_hyperboloid_constraint_preserved(seed):
    ens = simulate(StaticHyperbolic(n=2, kappa=1.0, R=3.0), 0.5, [0.4], 50, 0.01, seed)
    p = ens.positions
    mink = p[..., 0] ** 2 - np.sum(p[..., 1:] ** 2, axis=-1)
    assert np.allclose(mink, 1.0, atol=1e-9)
