import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import linalg

from penreflect.base_system import (HeatGrid, LinearSystem, build_heat_grid, heat_laplacian,
                                    sample_base_gaussian, semigroup_action)

SYSTEMS = [LinearSystem([[-0.5]]), LinearSystem([[-1.0, 0.3], [0.3, -0.7]]),
           LinearSystem(np.diag([-1.0, -2.0, -5.0]), inner_weight=0.5)]


@pytest.mark.parametrize("sys", SYSTEMS, ids=repr)
def test_covariance_solves_lyapunov(sys):
    # A Q + Q A^T + I = 0 as an operator; coordinates divide by the weight
    Q = linalg.solve_continuous_lyapunov(sys.drift_matrix, -np.eye(sys.dim))
    assert np.allclose(sys.covariance, Q, atol=1e-12)
    assert np.allclose(sys.coordinate_covariance, Q / sys.inner_weight, atol=1e-12)


@pytest.mark.parametrize("sys", SYSTEMS, ids=repr)
def test_transition_factor_is_expm(sys):
    assert np.allclose(sys.transition_factor(0.37), linalg.expm(0.37 * sys.drift_matrix))


@pytest.mark.parametrize("sys", SYSTEMS, ids=repr)
def test_transition_covariance_integral(sys):
    t = 0.8
    s, w = np.polynomial.legendre.leggauss(40)
    s = 0.5 * t * (s + 1)
    w = 0.5 * t * w
    ref = sum(wi * linalg.expm(2 * si * sys.drift_matrix) for si, wi in zip(s, w))
    assert np.allclose(sys.transition_covariance(t), ref / sys.inner_weight, atol=1e-12)
    # the OU noise factor reproduces the same covariance over one step
    S = sys.ou_noise_factor(t)
    assert np.allclose(S @ S.T * t / sys.inner_weight, sys.transition_covariance(t), atol=1e-12)


def test_stationary_increment_covariance_1d():
    sys = LinearSystem([[-2.0]])
    tau = 0.3
    # E (X_tau - X_0)^2 = 2 q (1 - e^{-omega tau}), q = 1/(2 omega)
    assert np.isclose(sys.stationary_increment_covariance(tau)[0, 0], (1 - np.exp(-0.6)) / 2.0)


def test_omega_and_spectral_radius():
    sys = SYSTEMS[2]
    assert sys.omega == 1.0
    assert sys.spectral_radius == 5.0


def test_rejects_unstable_and_asymmetric():
    with pytest.raises(ValueError):
        LinearSystem([[0.5]])
    with pytest.raises(ValueError):
        LinearSystem([[-1.0, 0.5], [0.0, -1.0]])
    with pytest.raises(ValueError):
        LinearSystem([[0.0]])
    free = LinearSystem([[0.0]], require_stable=False)
    assert not free.stable and free.covariance is None


def test_free_system_transition_covariance_is_brownian():
    free = LinearSystem([[0.0]], require_stable=False)
    assert np.isclose(free.transition_covariance(2.5)[0, 0], 2.5)


def test_semigroup_action():
    sys = SYSTEMS[1]
    x = np.array([1.0, -2.0])
    assert np.allclose(semigroup_action(sys, 0.0, x), x)
    assert np.allclose(semigroup_action(sys, 1.2, x), linalg.expm(1.2 * sys.drift_matrix) @ x)
    with pytest.raises(ValueError):
        semigroup_action(sys, -1.0, x)


def test_base_gaussian_sampler_covariance():
    sys = SYSTEMS[1]
    x = sample_base_gaussian(sys, 200_000, np.random.default_rng(3))
    se = np.sqrt((np.outer(np.diag(sys.coordinate_covariance), np.diag(sys.coordinate_covariance))
                  + sys.coordinate_covariance ** 2) / len(x))
    assert np.all(np.abs(np.cov(x.T) - sys.coordinate_covariance) < 4 * se)


@given(st.lists(st.floats(-10, 10, allow_nan=False), min_size=3, max_size=3))
@settings(max_examples=50, deadline=None)
def test_norm_equivalence(h):
    sys = LinearSystem(np.diag([-1.0, -2.0, -3.0]), norm_weights=[0.5, 1.0, 4.0])
    assert sys.check_norm_equivalence(np.array(h)) <= 1e-12


def test_heat_laplacian_eigenvalues():
    grid = HeatGrid(16, 0.1)
    ev = np.sort(np.linalg.eigvalsh(grid.laplacian))
    assert np.allclose(ev, np.sort(grid.laplacian_eigenvalues()))
    with pytest.raises(ValueError):
        heat_laplacian(1)


def test_heat_grid_trace_tends_to_one_twelfth():
    # trace of (-2 Laplacian)^{-1} on L^2(0, 1) is sum 1/(2 pi^2 k^2) = 1/12
    traces = [build_heat_grid(d, 0.0, 0)[1].trace_covariance for d in (16, 64, 256)]
    gaps = [abs(t - 1 / 12) for t in traces]
    assert gaps[0] > gaps[1] > gaps[2]
    assert gaps[2] < 1e-3


def test_heat_grid_envelope():
    grid, sys, env = build_heat_grid(8, 0.2, 5.0)
    x = np.full(8, -0.5)
    assert np.isclose(env.value(x)[()], grid.penalty_value(x, 5.0))
    assert np.allclose(env.gradient(x), -2 * 5.0 * 0.3)
    assert build_heat_grid(8, 0.2, 0)[2] is None
    with pytest.raises(ValueError):
        build_heat_grid(8, 0.2, -1.0)
