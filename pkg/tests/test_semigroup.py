import csv

import numpy as np
import pytest

from penreflect import observables as ob
from penreflect.base_system import LinearSystem, build_heat_grid
from penreflect.measures import GibbsMeasure, sample_gibbs, sample_restricted_gaussian
from penreflect.potential import NonnegativeCone, YosidaEnvelope
from penreflect.semigroup import (ConvergenceTable, convergence_study, estimate_path_functional,
                                  estimate_resolvent, estimate_semigroup, exact_increment_moment,
                                  feller_lipschitz_check, kolmogorov_moment_check, moment_constant,
                                  moment_weights, simulate_process, stationary_law_convergence)

OU = LinearSystem([[-0.5]])
OU1 = LinearSystem([[-1.0]])
OU2 = LinearSystem([[-1.0, 0.3], [0.3, -0.7]])
FREE = LinearSystem([[0.0]], require_stable=False)
HALF = NonnegativeCone(1)


def within(est, target, slack=0.0, sigmas=4.0):
    return abs(est.value - target) <= sigmas * est.std_error + slack


# -- semigroup estimates ---------------------------------------------------------------------------

def test_time_zero_is_exact():
    e = estimate_semigroup(OU, YosidaEnvelope(HALF, 10.0), [0.3], 0.0, ob.cosine([1.0]), 100, 0)
    assert e.value == np.cos(0.3) and e.std_error == 0.0
    # the oracle starts from the projection of x
    e = estimate_semigroup(OU, HALF, [-0.4], 0.0, ob.coordinate(0), 100, 0)
    assert e.value == 0.0


def test_linear_mean_is_exact_ou_mean():
    x = np.array([1.0, -0.5])
    for i in range(2):
        e = estimate_semigroup(OU2, None, x, 0.8, ob.coordinate(i), 50_000, 3)
        assert within(e, (OU2.transition_factor(0.8) @ x)[i])


def test_reflected_bm_mean():
    e = estimate_semigroup(FREE, HALF, [0.0], 1.0, ob.coordinate(0), 100_000, 5, dt=0.01)
    assert e.n == "oracle"
    assert within(e, np.sqrt(2 / np.pi))


def test_unit_mass_and_positivity():
    env = YosidaEnvelope(HALF, 50.0)
    e = estimate_semigroup(OU, env, [0.2], 0.5, ob.constant(1.0), 1000, 1)
    assert e.value == 1.0 and e.std_error == 0.0
    e = estimate_semigroup(OU, env, [0.2], 0.5, ob.product(ob.cosine([1.0]), ob.cosine([1.0])),
                           1000, 1)
    assert e.value >= 0.0


def test_fresh_seed_rerun_agrees():
    env = YosidaEnvelope(HALF, 64.0)
    a = estimate_semigroup(OU, env, [0.1], 0.5, ob.cosine([1.0]), 20_000, 10)
    b = estimate_semigroup(OU, env, [0.1], 0.5, ob.cosine([1.0]), 20_000, 11)
    assert abs(a.value - b.value) <= 4 * np.hypot(a.std_error, b.std_error)
    assert a.seeds != b.seeds


def test_tower_property_penalized():
    # P_{t+s} phi(x) = E[P_s phi(X_t)] by nested simulation
    env = YosidaEnvelope(HALF, 32.0)
    phi = ob.cosine([1.5])
    direct = estimate_semigroup(OU, env, [0.2], 0.8, phi, 100_000, 21)
    outer = simulate_process(OU, env, [0.2], [0.3], 2000, 22)
    starts = np.repeat(outer.paths[:, -1], 50, axis=0)
    inner = simulate_process(OU, env, starts, [0.5], len(starts), 23)
    per_outer = phi.f(inner.paths[:, -1]).reshape(2000, 50).mean(axis=1)
    nested, se = per_outer.mean(), per_outer.std(ddof=1) / np.sqrt(2000)
    assert abs(nested - direct.value) <= 4 * np.hypot(se, direct.std_error)


def test_two_time_functional():
    b = simulate_process(OU, None, [0.0], [0.5, 1.0], 50_000, 4)
    v, se = estimate_path_functional(b, lambda p: p[:, 0, 0] * p[:, 1, 0])
    # Cov(X_0.5, X_1) from 0 = e^{-0.25} (1 - e^{-0.5})
    assert abs(v - np.exp(-0.25) * (1 - np.exp(-0.5))) <= 4 * se


# -- resolvent ----------------------------------------------------------------------------------

@pytest.mark.parametrize("lam", [0.5, 2.0])
def test_resolvent_of_constant(lam):
    r = estimate_resolvent(OU, YosidaEnvelope(HALF, 16.0), lam, [0.0], ob.constant(1.0), 10, 0)
    assert r.std_error < 1e-12
    # lambda R_lambda 1 = 1 up to the truncation bias and the time quadrature
    assert abs(lam * r.value - 1.0) <= lam * r.bias_bound + 1e-4
    assert r.bias_bound <= 1e-3


def test_resolvent_identity_for_constants():
    a = estimate_resolvent(OU, None, 1.0, [0.0], ob.constant(1.0), 10, 0, bias=1e-6)
    b = estimate_resolvent(OU, None, 3.0, [0.0], ob.constant(1.0), 10, 0, bias=1e-6)
    assert np.isclose(a.value - b.value, 2.0 * a.value * b.value, rtol=1e-3)


def test_resolvent_linear_coordinate():
    x, lam = 0.8, 1.5
    r = estimate_resolvent(OU1, None, lam, [x], ob.coordinate(0), 40_000, 6, horizon=12.0)
    assert abs(r.value - x / (lam + 1)) <= 4 * r.std_error + 1e-3


def test_resolvent_large_lambda_band():
    x = 0.4
    r = estimate_resolvent(OU, YosidaEnvelope(HALF, 16.0), 50.0, [x], ob.cosine([1.0]), 5000, 7)
    assert abs(50.0 * r.value / np.cos(x) - 1.0) < 0.1


def test_resolvent_requires_positive_lambda():
    with pytest.raises(ValueError):
        estimate_resolvent(OU, None, 0.0, [0.0], ob.constant(1.0), 10, 0)
    with pytest.raises(ValueError):
        estimate_resolvent(OU, None, 1.0, [0.0], ob.coordinate(0), 10, 0)


# -- convergence in n ----------------------------------------------------------------------------

def test_convergence_against_itself_is_noise():
    tab = convergence_study(OU, HALF, [1.0], [0.5], [0.5], [ob.cosine([1.0])], 20_000, 3,
                            envelope_factory=lambda n: HALF, dt=1e-3)
    assert tab.final_within("cos([1.0],0)", 0.5)


def test_convergence_trend_halfline():
    phi = ob.cosine([1.0])
    tab = convergence_study(OU, HALF, [4.0, 16.0, 64.0, 256.0], [0.0], [0.5], [phi], 20_000, 8,
                            two_time=[(0.25, 0.5)], dt=1e-3)
    gaps = [r["gap"] for r in tab.series(phi.name, 0.5)]
    assert tab.decreasing(phi.name, 0.5)
    assert gaps[-1] < gaps[0] / 3
    assert (phi.name + "@2", "0.25,0.5") in tab.keys()


def test_convergence_table_csv(tmp_path):
    tab = ConvergenceTable([{"n": 4.0, "t": 0.5, "phi": "cos", "x_id": 0, "gap": 0.1,
                             "std_error": 0.01}])
    tab.to_csv(tmp_path / "c.csv")
    rows = list(csv.reader((tmp_path / "c.csv").open()))
    assert rows[0] == ["n", "t", "phi", "x_id", "gap", "std_error"]
    assert rows[1] == ["4.0", "0.5", "cos", "0", "0.1", "0.01"]


# -- Feller-Lipschitz ------------------------------------------------------------------------------

def test_feller_identical_points():
    rep = feller_lipschitz_check(OU, None, [([0.3], [0.3])], [0.5], [ob.coordinate(0)], 100, 0)
    assert rep.passed and rep.rows[0]["diff"] == 0.0


def test_feller_linear_exact_bound():
    rep = feller_lipschitz_check(OU2, None, [([1.0, 0.0], [0.0, 1.0])], [0.2, 1.0],
                                 [ob.coordinate(0), ob.coordinate(1)], 200, 1)
    assert rep.passed
    # synchronous coupling makes the linear difference exact
    for r in rep.rows:
        assert r["std_error"] < 1e-12


def test_feller_penalized_and_oracle():
    pairs = [([0.5], [-0.5]), ([2.0], [0.1])]
    obs = [ob.cosine([1.0]), ob.sine([2.0])]
    assert feller_lipschitz_check(OU, YosidaEnvelope(HALF, 64.0), pairs, [0.1, 0.5, 1.0], obs,
                                  2000, 2).passed
    assert feller_lipschitz_check(OU, HALF, pairs, [0.1, 0.5, 1.0], obs, 2000, 3).passed


# -- moments --------------------------------------------------------------------------------------

def test_moment_weights_and_constant():
    _, sys, _ = build_heat_grid(8, 0.0, 0)
    w = moment_weights(sys)
    slowest = np.argmax(sys.eigenvalues)
    assert w[slowest] == 1.0 and np.isclose(np.sort(w)[0], 1 / 64)
    assert np.isclose(moment_constant(sys, w), np.sqrt(np.sum(1 / np.arange(1, 9) ** 2)))
    assert np.all(moment_weights(OU2) == 1.0)
    with pytest.raises(ValueError):
        moment_weights(OU2, "bogus")


def test_exact_increment_moment_1d():
    # E(X_t - X_s)^2 = (1/omega)(1 - e^{-omega tau}) with omega = 1/2
    assert np.isclose(exact_increment_moment(OU, np.ones(1), 0.3), 2 * (1 - np.exp(-0.15)))


def test_moment_check_stationary_ou():
    x0 = np.random.default_rng(0).standard_normal((40_000, 1))
    lags = [2.0 ** -k for k in range(8)]
    rep = kolmogorov_moment_check(OU, None, 2, [0.0] + lags, 40_000, 1, x0, dt=2 ** -9)
    assert rep.passed and rep.kappa == 1.0
    assert rep.rows[0]["ratio"] == 0.0
    for r in rep.rows[1:]:
        assert r["exact_ratio"] <= 1.0
        assert abs(r["ratio"] - r["exact_ratio"]) <= 4 * r["std_error"]


def test_moment_check_heat_grid_flat():
    _, sys, _ = build_heat_grid(16, 0.0, 0)
    x0 = np.random.default_rng(1).multivariate_normal(np.zeros(16), sys.coordinate_covariance,
                                                      20_000)
    lags = [2.0 ** -k for k in range(8)]
    rep = kolmogorov_moment_check(sys, None, 2, lags, 20_000, 2, x0, dt=2 ** -10)
    assert rep.passed
    ratios = [r["ratio"] for r in rep.rows]
    # the exact ratio decreases in the lag, so the shortest lag carries the constant
    assert max(ratios) <= rep.kappa and np.argmax(ratios) == 0
    for r in rep.rows:
        assert abs(r["ratio"] - r["exact_ratio"]) <= 4 * r["std_error"]


def test_moment_check_fourth_moment_and_shape():
    x0 = np.zeros((100, 1))
    rep = kolmogorov_moment_check(OU, YosidaEnvelope(HALF, 8.0), 4, [0.5, 1.0], 100, 1, x0)
    assert all(np.isfinite(r["ratio"]) for r in rep.rows)
    with pytest.raises(ValueError):
        kolmogorov_moment_check(OU, None, 3, [0.5], 100, 1, x0)
    with pytest.raises(ValueError):
        kolmogorov_moment_check(OU, None, 2, [0.5], 50, 1, x0)


# -- stationary laws ------------------------------------------------------------------------------

def _penalized_sampler(n, count, seed):
    return sample_gibbs(GibbsMeasure(YosidaEnvelope(HALF, n), "gaussian", OU), count, seed,
                        burn_in=300)


def test_stationary_initial_law_matches_quadrature():
    count = 20_000
    rows = stationary_law_convergence(
        OU, HALF, [16.0], _penalized_sampler, sample_restricted_gaussian(OU, HALF, count, 9),
        {"X0": lambda p: p[:, 0, 0]}, [], count, 3)
    r = rows[0]
    exact_n = GibbsMeasure(YosidaEnvelope(HALF, 16.0), "gaussian", OU).expect(lambda x: x[:, 0])
    assert abs(r["estimate"] - exact_n) <= 4 * r["std_error"]
    assert abs(r["oracle"] - np.sqrt(2 / np.pi)) <= 4 * r["std_error"]


def test_stationary_time_shift_invariance():
    env = YosidaEnvelope(HALF, 16.0)
    x0 = _penalized_sampler(16.0, 40_000, 5)
    b = simulate_process(OU, env, x0, [0.5, 1.0, 1.5], 40_000, 6)
    a, sa = estimate_path_functional(b, lambda p: p[:, 0, 0] * p[:, 1, 0])
    c, sc = estimate_path_functional(b, lambda p: p[:, 1, 0] * p[:, 2, 0])
    assert abs(a - c) <= 4 * np.hypot(sa, sc)
