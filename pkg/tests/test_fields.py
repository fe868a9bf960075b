import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.integrate import quad

from harnacklab.fields import (ExactSolution, PositivityError, ScalarField, closed_form_solution,
                               solve_heat, sup_norm)
from harnacklab.geometry import ConformalCircle, ConformalTorus, ScaleProfile, ShrinkingSphere
from harnacklab.stencils import grid_for

CIRCLE = ConformalCircle(T=1.0)
SPHERE = ShrinkingSphere(n=2, c0=1.0, T=0.5)
TORUS_SIN1 = ConformalTorus(T=1.0, profile=ScaleProfile("sin", a0=1.0, eps=0.25, omega=1.0))


def test_circle_closed_form_matches_formula(circle_field):
    theta = circle_field.grid.mesh()[0]
    t = circle_field.times[:, None]
    assert np.allclose(circle_field.values, 1 + 0.5 * np.exp(-t / 2) * np.cos(theta))


def test_zero_amplitude_is_constant():
    fld = closed_form_solution(SPHERE, 1, 0.0, grid_for(SPHERE, 16, 8))
    assert np.all(fld.values == 1.0)


def test_sphere_l1_decays_like_c_over_c0(sphere_field):
    theta = sphere_field.grid.mesh()[0]
    c = 1.0 - sphere_field.times[:, None]
    assert np.allclose(sphere_field.values, 1 + 0.3 * c * np.cos(theta), atol=1e-12)


def test_solver_keeps_constants():
    for model in (CIRCLE, SPHERE, TORUS_SIN1):
        grid = grid_for(model, 16, 8)
        fld = solve_heat(model, np.ones(grid.shape), grid)
        assert np.allclose(fld.values, 1.0, atol=1e-13)


def _circle_error(n):
    grid = grid_for(CIRCLE, n, n)
    fld = solve_heat(CIRCLE, lambda th: 1 + 0.5 * np.cos(th), grid)
    exact = 1 + 0.5 * math.exp(-0.5) * np.cos(grid.mesh()[0])
    return np.max(np.abs(fld.values[-1] - exact))


def test_solver_second_order_on_circle():
    errs = [_circle_error(n) for n in (32, 64, 128)]
    ratios = [errs[i] / errs[i + 1] for i in range(2)]
    assert all(3.5 <= r <= 4.5 for r in ratios), ratios


def test_solver_matches_torus_quadrature_oracle():
    # lambda(t) = 1/2 int_0^t a(s)^-2 ds for the mode cos x
    lam = 0.5 * quad(lambda s: (1 + 0.25 * math.sin(s)) ** -2, 0.0, 1.0)[0]
    errs = []
    for n in (24, 48):
        grid = grid_for(TORUS_SIN1, n, n)
        fld = solve_heat(TORUS_SIN1, lambda x, y: 1 + 0.2 * np.cos(x), grid)
        exact = 1 + 0.2 * math.exp(-lam) * np.cos(grid.mesh()[0])
        errs.append(np.max(np.abs(fld.values[-1] - exact)))
    assert errs[1] < 1e-3
    assert 3.0 < errs[0] / errs[1] < 5.0


def test_sup_norms(circle_field):
    assert sup_norm(circle_field) == pytest.approx(1.5)
    assert sup_norm(circle_field, t_window=(1.0, 1.0)) == pytest.approx(1 + 0.5 * math.exp(-0.5))
    one = closed_form_solution(CIRCLE, 1, 0.0, grid_for(CIRCLE, 16, 8))
    assert sup_norm(one) == 1.0


def test_nonpositive_field_rejected():
    grid = grid_for(CIRCLE, 16, 8)
    vals = np.ones((grid.nt + 1,) + grid.shape)
    vals[3, 2] = 0.0
    with pytest.raises(PositivityError):
        ScalarField(vals, grid, CIRCLE, "test")
    with pytest.raises(PositivityError):
        ExactSolution(CIRCLE, 1, 1.0)


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 4), st.floats(-0.9, 0.9))
def test_closed_form_solves_heat_equation_pointwise(m, eps):
    # du/dt = 1/2 Laplace u with d^2/dtheta^2 cos(m theta) = -m^2 cos(m theta)
    sol = ExactSolution(CIRCLE, m, eps)
    th, t, h = 0.7, 0.4, 1e-4
    dudt = (sol(t + h, th) - sol(t - h, th)) / (2 * h)
    lap = -(m**2) * eps * math.exp(-sol.decay_exponent(t)) * math.cos(m * th)
    assert dudt == pytest.approx(0.5 * lap, abs=1e-7)


@settings(max_examples=20, deadline=None)
@given(st.floats(-0.9, 0.9))
def test_solution_stays_positive_and_max_decays(eps):
    fld = closed_form_solution(SPHERE, 2, eps, grid_for(SPHERE, 16, 16))
    assert np.all(fld.values > 0)
    sups = np.max(fld.values, axis=1)
    assert np.all(np.diff(sups) <= 1e-12)
