import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from harnacklab.bounds import (BoundSet, Region, c_phi, cutoff_profile, extract_bounds,
                               grad_phi_bound_check, half_ball_lower_bound_check, phi,
                               phi_grad_phi_sup, square_cutoff, variant_coefficient,
                               verify_bounds)
from harnacklab.fields import closed_form_solution
from harnacklab.geometry import (ConformalCircle, ConformalTorus, GeometryError, ScaleProfile,
                                 ShrinkingSphere, StaticHyperbolic)
from harnacklab.stencils import grid_for

SPHERE = ShrinkingSphere(n=2, c0=1.0, T=0.5)
CIRCLE = ConformalCircle(T=1.0)
HYPER = StaticHyperbolic(n=2, kappa=1.0, R=3.0)
TORUS_OSC = ConformalTorus(T=1.0, profile=ScaleProfile("sin", a0=1.0, eps=0.25, omega=2.0))
FLAT_TORUS = ConformalTorus(T=1.0)
CENTER = (math.pi, math.pi)


def test_sphere_bounds():
    b = extract_bounds(SPHERE)
    assert (b.k1, b.k2, b.k3, b.k4, b.k_sup) == pytest.approx((0.0, 2.0, 0.0, 0.0, 0.0))
    # Ric eigenvalue 1/c(t) ranges over [1, 2]
    assert b.ric_min == pytest.approx(1.0)
    assert b.ric_sup == pytest.approx(2.0)


def test_circle_bounds_all_zero():
    b = extract_bounds(CIRCLE)
    assert (b.k1, b.k2, b.k3, b.k4, b.k_sup, b.ric_sup) == (0.0,) * 6


def test_hyperbolic_bounds():
    b = extract_bounds(HYPER)
    assert (b.k1, b.k2, b.k3, b.k4) == pytest.approx((1.0, 0.0, 0.0, 0.0))
    assert b.k(0.3) == pytest.approx(1.0)


def test_oscillating_torus_bounds_hand_values():
    # dt g / g = 2 adot / a with a = 1 + 0.25 sin 2t
    b = extract_bounds(TORUS_OSC)
    t = np.linspace(0, 1, 200001)
    rate = 2 * 0.5 * np.cos(2 * t) / (1 + 0.25 * np.sin(2 * t))
    assert b.k3 == pytest.approx(rate.max(), rel=1e-6)
    assert b.k2 == pytest.approx(-rate.min(), rel=1e-6)


@pytest.mark.parametrize("model", [SPHERE, CIRCLE, HYPER, TORUS_OSC])
def test_numeric_path_agrees_with_analytic(model):
    a = extract_bounds(model)
    n = extract_bounds(model, method="numeric")
    for name in ("k1", "k2", "k3", "k_sup", "ric_sup"):
        assert getattr(n, name) <= getattr(a, name) + 1e-9
        assert getattr(n, name) == pytest.approx(getattr(a, name), rel=0.02, abs=1e-6)
    assert verify_bounds(model, a) == []


def test_verify_flags_too_small_constants():
    good = extract_bounds(SPHERE)
    bad = BoundSet(good.k1, 1.0, good.k3, good.k4, good.k_sup, good.ric_sup, good.ric_min)
    assert any("dt g >= -k2" in v for v in verify_bounds(SPHERE, bad))


def test_region_window_outside_model_rejected():
    with pytest.raises(GeometryError):
        extract_bounds(SPHERE, Region(t_window=(0.0, 0.7)))
    with pytest.raises(ValueError):
        BoundSet(-1.0, 0, 0, 0, 0, 0, 0)


def test_phi_values():
    x0 = np.array([0.0])
    assert phi(CIRCLE, x0, 1.0, x0, 0.0) == pytest.approx(1.0)
    assert phi(CIRCLE, x0, 1.0, np.array([1.0]), 0.0) == pytest.approx(0.0, abs=1e-15)
    half = phi(CIRCLE, x0, 1.0, np.array([0.5]), 0.0)
    assert half == pytest.approx(math.cos(math.pi / 4))
    assert half >= 1 - math.pi / 4
    assert phi(CIRCLE, x0, 1.0, np.array([2.0]), 0.0) == pytest.approx(0.0, abs=1e-15)


@pytest.mark.parametrize("rho", [1.0, 2.0])
def test_grad_phi_bound(flat_torus_field, rho):
    rep = grad_phi_bound_check(cutoff_profile(flat_torus_field, CENTER, rho))
    assert rep["bound"] == pytest.approx(math.pi / (2 * rho))
    assert rep["pass"]


def test_grad_phi_matches_chain_rule_on_sphere(sphere_field):
    prof = cutoff_profile(sphere_field, (0.0,), 1.0)
    mask = prof.inside & prof.usable
    expected = (math.pi / 2) * np.abs(np.sin(math.pi * prof.dist / 2))
    assert np.max(np.abs(np.sqrt(prof.grad_sq[mask]) - expected[mask])) <= 10 * prof.tolerance


def test_c_phi_analytic_values(flat_torus_field):
    b = extract_bounds(FLAT_TORUS)
    prof = cutoff_profile(flat_torus_field, CENTER, 1.0)
    assert c_phi(prof, 2, "3", b)["analytic_bound"] == pytest.approx(math.pi**2 * 5 / 4)
    assert c_phi(prof, 2, "7", b)["analytic_bound"] == pytest.approx(math.pi**2 * 9 / 4)
    for v in ("3", "7"):
        assert c_phi(prof, 2, v, b)["pass"]
    assert c_phi(prof, 2, "liyau", b, alpha=2.0)["pass"]
    assert variant_coefficient("liyau", 2, 2.0) == pytest.approx(11.0)
    with pytest.raises(ValueError):
        variant_coefficient("liyau", 2, 1.0)


def test_laplacian_comparison_oracle_on_flat_torus(flat_torus_field):
    # static flat metric: -(Laplace - 2 dt) phi = (pi/2rho) sin(.) (n-1)/d + (pi/2rho)^2 cos(.)
    rho = 1.0
    prof = cutoff_profile(flat_torus_field, CENTER, rho)
    d = prof.dist
    with np.errstate(divide="ignore", invalid="ignore"):
        bound = (np.sin(math.pi * d / (2 * rho)) * (math.pi / (2 * rho)) / d
                 + math.pi**2 / (4 * rho**2))
    mask = prof.inside & prof.usable & (d > 3 * flat_torus_field.grid.h_max)
    assert np.all(-prof.heat_op[mask] <= bound[mask] + prof.tolerance)


def test_half_ball_lower_bound(sphere_field):
    rep = half_ball_lower_bound_check(cutoff_profile(sphere_field, (0.0,), 1.0))
    assert rep["pass"] and rep["min_phi"] >= 1 - math.pi / 4


def test_phi_grad_phi_sup(flat_torus_field):
    prof = cutoff_profile(flat_torus_field, CENTER, 1.0)
    assert phi_grad_phi_sup(prof) <= math.pi / 4 + prof.tolerance


def test_zonal_grid_requires_pole(sphere_field):
    with pytest.raises(ValueError):
        cutoff_profile(sphere_field, (0.5,), 1.0)


def test_square_cutoff(flat_torus_field, torus_field):
    prof = square_cutoff(flat_torus_field, CENTER, 1.0)
    assert prof.values.max() == pytest.approx(1.0)
    assert np.all(prof.values[~prof.inside] == 0.0)
    assert np.isfinite(prof.sup(prof.c_phi_field(7.0)))
    with pytest.raises(ValueError):
        square_cutoff(flat_torus_field, CENTER, 4.0)


@settings(max_examples=30, deadline=None)
@given(st.floats(0.2, 2.5), st.floats(0.0, 1.0), st.floats(-3.0, 3.0))
def test_phi_between_zero_and_one(rho, t, x):
    v = float(phi(TORUS_OSC, np.array([0.0, 0.0]), rho, np.array([x, 0.5 * x]), t))
    assert 0.0 <= v <= 1.0 + 1e-15


@settings(max_examples=30, deadline=None)
@given(st.floats(0.05, 0.45), st.floats(0.0, 0.45))
def test_bounds_monotone_in_window(t_hi, t_lo_frac):
    # a larger time window can only give larger constants
    lo = t_lo_frac * t_hi
    small = extract_bounds(SPHERE, Region(t_window=(lo, t_hi)))
    big = extract_bounds(SPHERE)
    for name in ("k1", "k2", "k3", "k_sup", "ric_sup"):
        assert getattr(small, name) <= getattr(big, name) + 1e-9
