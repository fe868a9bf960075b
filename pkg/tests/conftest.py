import pytest

from harnacklab.bounds import extract_bounds
from harnacklab.fields import closed_form_solution
from harnacklab.geometry import (ConformalCircle, ConformalTorus, ScaleProfile,
                                 ShrinkingSphere, StaticHyperbolic)
from harnacklab.stencils import grid_for

OSC = ScaleProfile("sin", a0=1.0, eps=0.25, omega=2.0)


@pytest.fixture(scope="session")
def circle_field():
    model = ConformalCircle(T=1.0)
    return closed_form_solution(model, 1, 0.5, grid_for(model, 64, 64))


@pytest.fixture(scope="session")
def sphere_field():
    model = ShrinkingSphere(n=2, c0=1.0, T=0.5)
    return closed_form_solution(model, 1, 0.3, grid_for(model, 64, 64))


@pytest.fixture(scope="session")
def torus_field():
    model = ConformalTorus(T=1.0, profile=OSC)
    return closed_form_solution(model, (1, 1), 0.5, grid_for(model, 48, 48))


@pytest.fixture(scope="session")
def flat_torus_field():
    model = ConformalTorus(T=1.0)
    return closed_form_solution(model, (1, 0), 0.5, grid_for(model, 48, 48))


@pytest.fixture(scope="session")
def hyperbolic_field():
    model = StaticHyperbolic(n=2, T=1.0, kappa=1.0, R=3.0)
    return closed_form_solution(model, -0.5, 0.5, grid_for(model, 96, 64))


@pytest.fixture(scope="session")
def sphere_bounds(sphere_field):
    return extract_bounds(sphere_field.model)


@pytest.fixture(scope="session")
def torus_bounds(torus_field):
    return extract_bounds(torus_field.model)
