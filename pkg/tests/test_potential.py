import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import optimize

from penreflect.exceptions import InfeasibleSetError, ProxConvergenceError, UnsupportedBodyError
from penreflect.potential import (Ball, Box, Halfspaces, NonnegativeCone, Quadratic, SumPotential,
                                  YosidaEnvelope, dykstra_projection, project, yosida_gradient,
                                  yosida_value)

coords = st.floats(-5, 5, allow_nan=False)
pts2 = st.tuples(coords, coords).map(np.array)
ns = st.sampled_from([0.5, 1.0, 3.0, 16.0, 250.0])

TRIANGLE = Halfspaces([[-1, 0], [0, -1], [1, 1]], [0.5, 0.5, 1.0])
SHAPES = [Box([-1, -0.5], [1, 0.5]), Ball([0.2, -0.1], 1.3), NonnegativeCone(2, shift=0.3), TRIANGLE,
          Quadratic([1.5, 0.5], [0.2, -0.4])]


def brute_projection(K, x):
    """Nearest point of ``K`` by SLSQP, used as an independent oracle."""
    cons = []
    if isinstance(K, Halfspaces):
        cons = [{"type": "ineq", "fun": lambda y: K.offsets - K.normals @ y}]
    elif isinstance(K, Ball):
        cons = [{"type": "ineq", "fun": lambda y: K.radius ** 2 - np.sum((y - K.center) ** 2)}]
    bounds = list(zip(K.lower, K.upper)) if isinstance(K, Box) else None
    bounds = [(None if not np.isfinite(a) else a, None if not np.isfinite(b) else b)
              for a, b in bounds] if bounds else None
    res = optimize.minimize(lambda y: np.sum((y - x) ** 2), np.zeros_like(x), method="SLSQP",
                            constraints=cons, bounds=bounds, options={"ftol": 1e-14, "maxiter": 500})
    return res.x


# -- projections ---------------------------------------------------------------------------------

@pytest.mark.parametrize("K", SHAPES[:4], ids=repr)
def test_projection_matches_constrained_minimization(K):
    rng = np.random.default_rng(0)
    for x in rng.uniform(-3, 3, (20, 2)):
        assert np.allclose(K.project(x)[0] if K.project(x).ndim > 1 else K.project(x),
                           brute_projection(K, x), atol=1e-6)


def test_box_projection_is_clipping():
    K = Box([-1], [1])
    assert np.allclose(K.project(np.array([[3.0], [-7.0], [0.2]])), [[1.0], [-1.0], [0.2]])


def test_ball_projection_radial():
    K = Ball([0.0, 0.0], 2.0)
    assert np.allclose(K.project(np.array([3.0, 4.0])), [1.2, 1.6])


def test_points_inside_are_fixed():
    K = TRIANGLE
    x = np.array([[0.0, 0.0], [0.2, 0.3], [-0.4, -0.4]])
    assert np.allclose(K.project(x), x)


def test_dykstra_on_two_halfspaces_wedge():
    # wedge {y <= x, y <= -x}: the projection of (0, 1) is the apex (0, 0)
    p = dykstra_projection(np.array([[-1.0, 1.0], [1.0, 1.0]]), np.zeros(2), np.array([0.0, 1.0]))
    assert np.allclose(p, [0.0, 0.0], atol=1e-9)


def test_dykstra_iteration_cap():
    normals = np.array([[-1.0, 1.0], [1.0, 1.0]])
    with pytest.raises(ProxConvergenceError):
        dykstra_projection(normals, np.zeros(2), np.array([0.3, 5.0]), tol=0.0, max_iter=3)


def test_infeasible_halfspaces():
    with pytest.raises(InfeasibleSetError):
        Halfspaces([[1.0, 0.0], [-1.0, 0.0]], [-1.0, -1.0])


def test_project_requires_set():
    with pytest.raises(TypeError):
        project(Quadratic(1.0), np.zeros(1))


@given(pts2, pts2)
@settings(max_examples=60, deadline=None)
def test_projection_firmly_nonexpansive(x, y):
    for K in SHAPES[:4]:
        px, py = K.project(x), K.project(y)
        assert np.sum((px - py) ** 2) <= (px - py) @ (x - y) + 1e-8


# -- envelopes ------------------------------------------------------------------------------------

def test_indicator_envelope_is_scaled_squared_distance():
    K = Box([-1], [1])
    x = np.array([[2.0], [0.5], [-3.0]])
    env = YosidaEnvelope(K, 4.0)
    assert np.allclose(env.value(x), [4.0, 0.0, 16.0])
    assert np.allclose(env.gradient(x), [[8.0], [0.0], [-16.0]])


def test_quadratic_envelope_closed_form():
    q = Quadratic(2.0, [0.5])
    x = np.linspace(-3, 3, 11)[:, None]
    n = 3.0
    direct = np.array([optimize.minimize_scalar(lambda y: 2 * (y - 0.5) ** 2 + n * (xi - y) ** 2).fun
                       for xi in x[:, 0]])
    assert np.allclose(YosidaEnvelope(q, n).value(x), direct, atol=1e-10)
    assert np.allclose(YosidaEnvelope(q, n).value(x), 2 * n / (2 + n) * (x[:, 0] - 0.5) ** 2)


def test_heat_grid_envelope_weighting():
    K = NonnegativeCone(3, shift=0.1)
    env = YosidaEnvelope(K, 10.0, weight=0.25)
    x = np.array([-0.3, 0.2, -0.1])
    # n * w * sum(((x + alpha)^-)^2) and H-gradient -2n (x + alpha)^-
    assert np.isclose(env.value(x), 10 * 0.25 * 0.04)
    assert np.allclose(env.gradient(x), [[-4.0, 0.0, 0.0]])
    assert np.allclose(env.euclidean_gradient(x), 0.25 * env.gradient(x))


@given(pts2, ns)
@settings(max_examples=80, deadline=None)
def test_envelope_monotone_in_n_and_below_u(x, n):
    for U in SHAPES:
        a = YosidaEnvelope(U, n).value(x)
        b = YosidaEnvelope(U, 2 * n).value(x)
        assert a <= b + 1e-12
        assert b <= U.value(x[None])[0] + 1e-12


@given(pts2, ns)
@settings(max_examples=60, deadline=None)
def test_gradient_matches_finite_differences(x, n):
    for U in SHAPES:
        env = YosidaEnvelope(U, n)
        eps = 1e-6
        fd = np.array([(env.value(x + eps * e) - env.value(x - eps * e)) / (2 * eps)
                       for e in np.eye(2)])
        assert np.allclose(np.ravel(env.gradient(x)), fd.ravel(), atol=1e-5 * max(1.0, n))


@given(pts2, pts2, ns)
@settings(max_examples=60, deadline=None)
def test_gradient_lipschitz_2n(x, y, n):
    for U in SHAPES:
        env = YosidaEnvelope(U, n)
        d = np.linalg.norm(x - y)
        if d > 0:
            assert np.linalg.norm(env.gradient(x) - env.gradient(y)) <= 2 * n * d * (1 + 1e-9) + 1e-9


def test_prox_optimality_by_direct_minimization():
    U = Quadratic([1.0, 3.0], [0.5, -0.5])
    x = np.array([1.0, 2.0])
    n = 2.0
    res = optimize.minimize(lambda y: U.value(y[None])[0] + n * np.sum((x - y) ** 2), x)
    assert np.allclose(YosidaEnvelope(U, n).prox(x), res.x, atol=1e-6)


@given(pts2, st.sampled_from([1e-3, 0.05, 1.0]), ns)
@settings(max_examples=60, deadline=None)
def test_resolvent_solves_implicit_step(y, dt, n):
    for U in SHAPES:
        env = YosidaEnvelope(U, n)
        z = env.resolvent(y, dt)
        assert np.allclose(z + dt * env.gradient(z), y, atol=1e-8)


def test_functional_aliases():
    env = YosidaEnvelope(Box([0], [1]), 2.0)
    x = np.array([[2.0]])
    assert yosida_value(env, x) == env.value(x)
    assert np.array_equal(yosida_gradient(env, x), env.gradient(x))


def test_envelope_rejects_bad_n():
    with pytest.raises(ValueError):
        YosidaEnvelope(Box([0], [1]), 0.0)


# -- sums --------------------------------------------------------------------------------------

def test_sum_of_indicators_projects_onto_intersection():
    K = Box([-1, -1], [1, 1]) + Ball([1.0, 0.0], 1.0)
    x = np.array([2.5, 1.5])
    oracle = optimize.minimize(
        lambda y: np.sum((y - x) ** 2), np.zeros(2), method="SLSQP",
        bounds=[(-1, 1), (-1, 1)],
        constraints=[{"type": "ineq", "fun": lambda y: 1 - np.sum((y - [1.0, 0.0]) ** 2)}],
        options={"ftol": 1e-14}).x
    assert np.allclose(K.prox(x, 1.0), oracle, atol=1e-6)


def test_sum_prox_quadratic_plus_box():
    U = SumPotential([Quadratic(1.0, [2.0]), Box([-1], [1])])
    n = 1.5
    for x0 in [-3.0, 0.0, 0.7, 4.0]:
        res = optimize.minimize_scalar(lambda y: (y - 2) ** 2 + n * (x0 - y) ** 2,
                                       bounds=(-1, 1), method="bounded",
                                       options={"xatol": 1e-12})
        assert np.isclose(U.prox(np.array([x0]), n)[0], res.x, atol=1e-7)


# -- geometry -------------------------------------------------------------------------------------

def test_volumes_and_facets():
    assert np.isclose(Box([-1, -1], [1, 1]).volume(), 4.0)
    assert np.isclose(Ball([0, 0], 1).volume(), np.pi)
    assert np.isclose(Ball([0, 0, 0], 2).volume(), 4 / 3 * np.pi * 8)
    assert np.isclose(Ball([0, 0], 1).surface_area(), 2 * np.pi)
    assert np.isclose(TRIANGLE.volume(), 0.5 * 2.0 * 2.0)
    assert np.isclose(sum(m for _, m in TRIANGLE.facet_table()), 4 + 2 * np.sqrt(2))
    facets = Box([-1, -1], [1, 1]).facet_table()
    assert len(facets) == 4 and all(np.isclose(m, 2.0) for _, m in facets)


def test_unbounded_volume_raises():
    with pytest.raises(UnsupportedBodyError):
        NonnegativeCone(2).volume()


@pytest.mark.parametrize("K", [Box([-1, -2], [1, 0.5]), Ball([0.3, 0.1], 0.8), TRIANGLE], ids=repr)
def test_boundary_rule_divergence_theorem(K):
    # int_{dK} <x, n> dS = d |K|
    pts, nrm, w = K.boundary_rule()
    assert np.isclose(np.sum(w * np.sum(pts * nrm, axis=1)), 2 * K.volume(), rtol=1e-10)


def test_line_interval():
    t = Ball([0, 0], 1).line_interval(np.array([0.0, 0.0]), np.array([1.0, 0.0]))
    assert np.allclose(t, (-1, 1))
    lo, hi = Box([0, 0], [1, 1]).line_interval(np.array([5.0, 5.0]), np.array([1.0, 0.0]))
    assert lo > hi
