import math

import numpy as np
import pytest
from numba import njit

from batchode import InvalidShape, OdeProblem
from batchode.problems import heat_grid, heat_spectral_radius, heat_stencil_matrix
from batchode.specrad import (
    MAX_ITERATIONS,
    gershgorin_bound,
    numerical_jacobian,
    power_method_spec_rad,
)

DIAG = np.array([-1.0, -10.0, -100.0])


@njit
def _diag_rhs(t, y, g):
    return g * y


@pytest.fixture(scope="module")
def diag_problem():
    # the diagonal is passed through the parameter vector
    return OdeProblem(3, _diag_rhs, param_dim=3)


def estimate(problem, y, g=None, v=None, h_max=1.0):
    y = np.asarray(y, dtype=float)
    gg = np.zeros(problem.param_dim) if g is None else np.asarray(g, dtype=float)
    F = problem.rhs(0.0, y, gg)
    v = np.zeros_like(y) if v is None else v
    return power_method_spec_rad(problem, 0.0, y, gg, F, h_max, v)


def test_diagonal(diag_problem):
    r = estimate(diag_problem, [1.0, 1.0, 1.0], DIAG, v=np.array([0.3, -0.2, 0.5]))
    assert 100.0 <= r.sigma <= 130.0
    assert r.converged and r.iterations <= MAX_ITERATIONS


@pytest.mark.parametrize("y", [[0.0, 0.0, 0.0], [1.0, 2.0, 3.0]])
@pytest.mark.parametrize("v", [[0.0, 0.0, 0.0], [1.0, 1.0, 1.0]])
def test_all_initialisation_branches(diag_problem, y, v):
    r = estimate(diag_problem, y, DIAG, v=np.array(v))
    assert 0.95 * 100 <= r.sigma <= 1.3 * 100


def test_zero_rhs_uses_kick():
    p = OdeProblem(3, lambda t, y, g: np.zeros_like(y))
    r = estimate(p, [1.0, 2.0, 3.0])
    assert r.sigma == 0.0
    assert r.converged


def test_heat_stencil(heat64):
    sigma_star = (4 * 65**2) * math.sin(64 * math.pi / 130) ** 2
    assert heat_spectral_radius(64) == pytest.approx(sigma_star, rel=1e-14)
    rng = np.random.default_rng(11)
    u0 = np.sin(math.pi * heat_grid(64))
    r = estimate(heat64, u0, v=rng.standard_normal(64), h_max=1.0)
    assert sigma_star <= r.sigma <= 1.35 * sigma_star
    assert r.sigma / 1.2 <= gershgorin_bound(heat_stencil_matrix(64))
    for _ in range(50):
        r = estimate(heat64, rng.standard_normal(64), v=rng.standard_normal(64))
        assert sigma_star <= r.sigma <= 1.35 * sigma_star


def test_eigenvector_start_stays_in_its_mode(heat64):
    # y = lowest mode and no warm vector: the probe never leaves that mode
    u0 = np.sin(math.pi * heat_grid(64))
    lam1 = 4 * 65**2 * math.sin(math.pi / 130) ** 2
    assert estimate(heat64, u0).sigma == pytest.approx(1.2 * lam1, rel=1e-3)


def test_inputs_not_mutated(diag_problem):
    y = np.array([1.0, 2.0, 3.0])
    v = np.array([0.1, 0.2, 0.3])
    F = diag_problem.rhs(0.0, y, DIAG)
    keep = (y.copy(), v.copy(), F.copy())
    power_method_spec_rad(diag_problem, 0.0, y, DIAG, F, 1.0, v)
    for a, b in zip((y, v, F), keep):
        assert a.tobytes() == b.tobytes()


def test_warm_start_saves_iterations():
    rng = np.random.default_rng(2024)
    n = 12
    q, _ = np.linalg.qr(rng.standard_normal((n, n)))
    lam = -np.concatenate([[1000.0, 400.0], rng.uniform(1.0, 300.0, n - 2)])
    A = (q * lam) @ q.T

    @njit
    def rhs(t, y, g):
        return A @ y

    p = OdeProblem(n, rhs)
    wins = 0
    for _ in range(20):
        y = rng.standard_normal(n)
        first = estimate(p, y, v=rng.standard_normal(n))
        y2 = y + 0.01 * rng.standard_normal(n)
        warm = estimate(p, y2, v=first.eigenvector)
        cold = estimate(p, y2, v=rng.standard_normal(n))
        wins += warm.iterations < cold.iterations
    assert wins >= 15


def test_gershgorin_examples():
    assert gershgorin_bound(np.diag(DIAG)) == 100.0
    assert gershgorin_bound([[-2.0, 1.0], [1.0, -2.0]]) == 3.0
    assert gershgorin_bound(heat_stencil_matrix(64)) == pytest.approx(4 * 65**2)
    with pytest.raises(InvalidShape):
        gershgorin_bound(np.zeros((2, 3)))


def test_never_exceeds_gershgorin(diag_problem):
    rng = np.random.default_rng(5)
    for _ in range(10):
        d = -rng.uniform(1.0, 50.0, 3)
        r = estimate(diag_problem, rng.standard_normal(3), d, v=rng.standard_normal(3))
        bound = gershgorin_bound(numerical_jacobian(diag_problem, 0.0, np.ones(3), d))
        assert r.sigma <= 1.2 * bound * 1.01
