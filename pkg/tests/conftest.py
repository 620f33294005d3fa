"""Session-scoped fixtures shared across the solver and verification tests.

Picard solves cost tens of seconds each, so the runs used by several test
modules (plain bump, rescaled-initial, perturbed data, homogeneous data) are
built once per session.
"""

import numpy as np
import pytest

from dynbc.fields import BoundaryField, FarField, HalfSpaceGrid, TimeGrid
from dynbc.operators import OperatorConfig, Workspace
from dynbc.params import ProblemParams, derive_exponents
from dynbc.solver import picard_solve


@pytest.fixture(scope="session")
def witness_params():
    return ProblemParams(n=3, p1=6.0, p2=3.5, mu=0.5)


@pytest.fixture(scope="session")
def witness_exps(witness_params):
    return derive_exponents(witness_params, q1=8.0, q2=6.0)


@pytest.fixture(scope="session")
def desk_ws():
    return Workspace(HalfSpaceGrid(), TimeGrid(), OperatorConfig())


@pytest.fixture(scope="session")
def phi_bump(desk_ws):
    grid = desk_ws.grid
    r2 = np.sum(grid.tan_points**2, axis=1).reshape(grid.tan_shape)
    return BoundaryField(grid, 0.1 * np.exp(-r2))


@pytest.fixture(scope="session")
def bump_solution(desk_ws, phi_bump, witness_params, witness_exps):
    rec = picard_solve(desk_ws, phi_bump, witness_params, witness_exps)
    assert rec.converged, rec.status
    return rec


@pytest.fixture(scope="session")
def phi_homogeneous(desk_ws, witness_params):
    # degree -1/(p2 - 1) profile, the trace of a self-similar solution
    grid = desk_ws.grid
    sigma = 1.0 / (witness_params.p2 - 1.0)
    amp = 0.08
    r = np.sqrt(np.sum(grid.tan_points**2, axis=1)).reshape(grid.tan_shape)
    return BoundaryField(grid, amp * r**-sigma, far_field=FarField(amp, sigma))


@pytest.fixture(scope="session")
def homogeneous_solution(desk_ws, phi_homogeneous, witness_params, witness_exps):
    rec = picard_solve(desk_ws, phi_homogeneous, witness_params, witness_exps)
    assert rec.converged, rec.status
    return rec


@pytest.fixture(scope="session")
def stability_report(desk_ws, phi_homogeneous, witness_params, witness_exps):
    from dynbc.verify import stability_experiment

    grid = desk_ws.grid
    d2 = np.sum((grid.tan_points - np.array([1.0, 0.5])) ** 2, axis=1)
    a = BoundaryField(grid, 0.02 * np.exp(-2.0 * d2).reshape(grid.tan_shape))
    return stability_experiment(
        desk_ws, phi_homogeneous, a, witness_params, witness_exps
    )


@pytest.fixture(scope="session")
def phi_perturbed(desk_ws, phi_bump):
    grid = desk_ws.grid
    d2 = np.sum((grid.tan_points - np.array([1.5, -0.5])) ** 2, axis=1)
    bump = np.exp(-2.0 * d2).reshape(grid.tan_shape)
    return BoundaryField(grid, phi_bump.values * (1.0 + 0.3 * bump))


@pytest.fixture(scope="session")
def perturbed_solution(desk_ws, phi_perturbed, witness_params, witness_exps):
    rec = picard_solve(desk_ws, phi_perturbed, witness_params, witness_exps)
    assert rec.converged, rec.status
    return rec
