import csv

import numpy as np
import pytest

from penreflect.base_system import LinearSystem, build_heat_grid
from penreflect.dynamics import (BLOCK_SIZE, IntegratorSpec, coupled_contraction, simulate_batch,
                                 simulate_reflected_oracle, step_penalized)
from penreflect.exceptions import DivergenceError
from penreflect.potential import Ball, Box, NonnegativeCone, YosidaEnvelope

OU = LinearSystem([[-0.5]])
OU2 = LinearSystem([[-1.0, 0.3], [0.3, -0.7]])
FREE = LinearSystem([[0.0]], require_stable=False)


def test_spec_validation():
    with pytest.raises(ValueError):
        IntegratorSpec("rk4", 0.1, 1.0)
    with pytest.raises(ValueError):
        IntegratorSpec("explicit_euler", 0.1, 1.0, n=10)
    with pytest.raises(ValueError):
        IntegratorSpec("splitting_prox", 0.1, 1.0, record_times=(0.5, 0.2))
    spec = IntegratorSpec("splitting_prox", 0.1, 1.0, n=100, record_times=(0.0, 0.33, 1.0))
    assert list(spec.record_steps) == [0, 3, 10]
    assert spec.n_steps == 10


def test_explicit_euler_rejects_stiff_linear_part():
    _, sys, env = build_heat_grid(32, 0.1, 4)
    spec = IntegratorSpec("explicit_euler", 1e-3, 0.01, n=4)
    with pytest.raises(ValueError):
        simulate_batch(sys, env, spec, np.zeros(32), 4, 0)


def test_unpenalized_splitting_is_exact_ou():
    # one exact step: mean e^{tA} x, variance (1 - e^{2tA}) / (-2A)
    spec = IntegratorSpec("splitting_prox", 0.7, 0.7)
    b = simulate_batch(OU, None, spec, [2.0], 200_000, 11)
    x = b.paths[:, -1, 0]
    mean, var = 2.0 * np.exp(-0.35), 1 - np.exp(-0.7)
    assert abs(x.mean() - mean) < 4 * np.sqrt(var / len(x))
    assert abs(x.var() - var) < 4 * var * np.sqrt(2 / len(x))


def test_explicit_euler_mean_first_order():
    spec = IntegratorSpec("explicit_euler", 1e-3, 1.0)
    b = simulate_batch(OU, None, spec, [1.0], 50_000, 3, inject_noise=True)
    x = b.paths[:, -1, 0]
    assert abs(x.mean() - np.exp(-0.5)) < 4 * x.std() / np.sqrt(len(x)) + 1e-3


def test_deterministic_flow_without_noise():
    spec = IntegratorSpec("splitting_prox", 0.01, 1.0)
    b = simulate_batch(OU2, None, spec, [1.0, -1.0], 3, 0, inject_noise=False)
    assert np.allclose(b.paths[:, -1], OU2.transition_factor(1.0) @ [1.0, -1.0])


def test_thread_count_does_not_change_output():
    env = YosidaEnvelope(Ball([0, 0], 1.0), 50.0)
    spec = IntegratorSpec("splitting_prox", 0.01, 0.5, n=50.0, record_times=(0.25, 0.5))
    count = 2 * BLOCK_SIZE + 17
    a = simulate_batch(OU2, env, spec, [0.5, 0.5], count, 99, threads=1)
    b = simulate_batch(OU2, env, spec, [0.5, 0.5], count, 99, threads=3)
    assert np.array_equal(a.paths, b.paths)
    assert a.seed_lineage == b.seed_lineage
    c = simulate_batch(OU2, env, spec, [0.5, 0.5], count, 100, threads=1)
    assert not np.array_equal(a.paths, c.paths)


def test_full_blocks_independent_of_count():
    # streams are keyed by block, so complete blocks do not depend on the total count
    spec = IntegratorSpec("splitting_prox", 0.05, 0.1)
    a = simulate_batch(OU, None, spec, [0.0], BLOCK_SIZE, 5)
    b = simulate_batch(OU, None, spec, [0.0], BLOCK_SIZE + 5, 5)
    assert np.array_equal(a.paths, b.paths[:BLOCK_SIZE])


def test_reflected_bm_expected_abs():
    # E|W_1| = sqrt(2/pi)
    spec = IntegratorSpec("splitting_prox", 0.01, 1.0)
    b = simulate_reflected_oracle(FREE, NonnegativeCone(1), spec, [0.0], 200_000, 17)
    assert b.meta["oracle"] == "exact_reflection"
    x = b.paths[:, -1, 0]
    assert abs(x.mean() - np.sqrt(2 / np.pi)) < 4 * x.std() / np.sqrt(len(x))
    assert np.all(x >= 0)


def test_projected_euler_agrees_with_exact_reflection():
    spec = IntegratorSpec("splitting_prox", 1e-4, 0.5)
    exact = simulate_reflected_oracle(OU, NonnegativeCone(1), spec, [0.3], 20_000, 1)
    proj = simulate_reflected_oracle(OU, NonnegativeCone(1), spec, [0.3], 20_000, 2, exact=False)
    assert proj.meta["oracle"] == "projected_euler"
    a, b = exact.paths[:, -1, 0], proj.paths[:, -1, 0]
    se = np.hypot(a.std(), b.std()) / np.sqrt(len(a))
    # projected Euler carries an O(sqrt(dt)) bias of about 0.006 here
    assert abs(a.mean() - b.mean()) < 4 * se + 0.01


def test_reflected_oracle_stays_in_set():
    K = Box([-1, -1], [1, 1])
    spec = IntegratorSpec("explicit_euler", 0.01, 1.0, record_times=(0.5, 1.0))
    b = simulate_reflected_oracle(OU2, K, spec, [3.0, 0.0], 500, 4)
    assert np.all(K.contains(b.paths.reshape(-1, 2)))
    with pytest.raises(ValueError):
        simulate_reflected_oracle(OU2, K, spec, [0.0, 0.0], 5, 0, exact=True)


def test_penalization_push_tracks_drift():
    env = YosidaEnvelope(NonnegativeCone(1), 100.0)
    spec = IntegratorSpec("splitting_prox", 1e-3, 1.0, n=100.0)
    b = simulate_batch(OU, env, spec, [0.0], 2000, 8)
    assert np.all(b.penalization >= 0)
    assert b.penalization.mean() > 0


def test_penalized_schemes_agree():
    env = YosidaEnvelope(NonnegativeCone(1), 16.0)
    s1 = IntegratorSpec("explicit_euler", 1e-3, 1.0, n=16.0)
    s2 = IntegratorSpec("splitting_prox", 1e-3, 1.0, n=16.0)
    a = simulate_batch(OU, env, s1, [0.2], 50_000, 1).paths[:, -1, 0]
    b = simulate_batch(OU, env, s2, [0.2], 50_000, 2).paths[:, -1, 0]
    assert abs(a.mean() - b.mean()) < 4 * np.hypot(a.std(), b.std()) / np.sqrt(len(a)) + 5e-3


def test_step_penalized_explicit_formula():
    env = YosidaEnvelope(NonnegativeCone(1), 10.0)
    spec = IntegratorSpec("explicit_euler", 0.01, 1.0, n=10.0)
    x = np.array([[-0.5]])
    y = step_penalized(OU, env, spec, x, np.array([[0.1]]))
    assert np.allclose(y, -0.5 + 0.01 * (0.25 + 10.0) + 0.1)


def test_step_penalized_divergence():
    spec = IntegratorSpec("explicit_euler", 0.01, 1.0)
    with pytest.raises(DivergenceError):
        step_penalized(OU, None, spec, np.array([[np.inf]]), np.zeros((1, 1)), 7)


def test_contraction_under_coupling():
    for scheme in ("explicit_euler", "splitting_prox"):
        env = YosidaEnvelope(Ball([0, 0], 0.5), 20.0)
        spec = IntegratorSpec(scheme, 1e-3, 1.0, n=20.0, record_times=(0.1, 0.5, 1.0))
        rep = coupled_contraction(OU2, env, spec, [2.0, 0.0], [-1.0, 1.0], 500, 3)
        assert rep.passed


def test_contraction_identical_starts():
    spec = IntegratorSpec("splitting_prox", 1e-2, 0.5)
    rep = coupled_contraction(OU, None, spec, [1.0], [1.0], 10, 3)
    assert np.all(rep.max_ratio == 0)


def test_csv_layout(tmp_path):
    spec = IntegratorSpec("splitting_prox", 0.1, 0.2, record_times=(0.0, 0.2))
    b = simulate_batch(OU2, None, spec, [0.0, 1.0], 2, 0)
    path = tmp_path / "t.csv"
    b.to_csv(path)
    raw = path.read_bytes()
    assert b"\r" not in raw
    rows = list(csv.reader(path.open()))
    assert rows[0] == ["path_id", "time", "x_0", "x_1"]
    assert len(rows) == 1 + 2 * 2
    assert float(rows[1][3]) == 1.0
