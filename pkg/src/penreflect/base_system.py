"""Linear drift, Gaussian reference measure and heat-equation grids.

A :class:`LinearSystem` describes ``dX = A X dt + dW`` on ``R^d`` equipped
with the inner product ``<u, v> = inner_weight * u @ v``.  The Wiener
process is cylindrical for that inner product, so in coordinates each
component receives noise of variance ``dt / inner_weight``.  The Gaussian
reference measure is ``N(0, Q)`` with ``Q = (-2A)^{-1}`` as an operator;
its coordinate covariance matrix is ``Q / inner_weight``.
"""

from dataclasses import dataclass, field

import numpy as np

from .potential import NonnegativeCone, YosidaEnvelope

__all__ = ["LinearSystem", "HeatGrid", "semigroup_action", "sample_base_gaussian",
           "build_heat_grid", "heat_laplacian"]


class LinearSystem:
    """Symmetric drift matrix together with its spectral data.

    Parameters
    ----------
    drift_matrix : array_like, shape (d, d)
        Symmetric matrix ``A``.  With ``require_stable`` (default) all its
        eigenvalues must be strictly negative.
    norm_weights : array_like, optional
        Positive weights of a second norm ``|h|_w^2 = sum w_i h_i^2`` (times
        ``inner_weight``) that must be equivalent to the ambient norm.
    inner_weight : float
        Scalar metric factor of the ambient inner product.
    require_stable : bool
        Set to False to allow ``A`` with zero eigenvalues (e.g. ``A = 0``);
        such a system has no Gaussian reference measure.
    """

    def __init__(self, drift_matrix, norm_weights=None, inner_weight=1.0,
                 require_stable=True, name=None):
        A = np.atleast_2d(np.asarray(drift_matrix, dtype=float))
        if A.shape[0] != A.shape[1]:
            raise ValueError("drift matrix must be square")
        if not np.allclose(A, A.T, rtol=1e-12, atol=1e-12 * max(1.0, np.abs(A).max())):
            raise ValueError("drift matrix must be symmetric")
        A = 0.5 * (A + A.T)
        lam, V = np.linalg.eigh(A)
        if lam[-1] > 0 or (require_stable and lam[-1] >= 0):
            raise ValueError(
                f"drift must be negative definite; largest eigenvalue {lam[-1]:.3e}")
        if not inner_weight > 0:
            raise ValueError("inner_weight must be positive")
        self.drift_matrix = A
        self.dim = A.shape[0]
        self.eigenvalues = lam
        self.eigenvectors = V
        self.omega = float(-lam[-1])
        self.inner_weight = float(inner_weight)
        self.noise_scale = 1.0 / np.sqrt(self.inner_weight)
        self.name = name
        self.stable = bool(lam[-1] < 0)
        if self.stable:
            q = 1.0 / (-2.0 * lam)
            self.covariance = (V * q) @ V.T
            self.trace_covariance = float(np.sum(q))
            self.coordinate_covariance = self.covariance / self.inner_weight
            self._sqrt_cov = V * np.sqrt(q / self.inner_weight)
        else:
            self.covariance = None
            self.trace_covariance = np.inf
            self.coordinate_covariance = None
            self._sqrt_cov = None
        if norm_weights is None:
            self.norm_weights = None
            self.equivalence_constant = 1.0
        else:
            w = np.broadcast_to(np.asarray(norm_weights, dtype=float), (self.dim,)).copy()
            if np.any(w <= 0):
                raise ValueError("norm weights must be positive")
            self.norm_weights = w
            self.equivalence_constant = float(max(1.0, np.sqrt(w.max()), 1 / np.sqrt(w.min())))

    def __repr__(self):
        return f"LinearSystem(dim={self.dim}, omega={self.omega:.6g}, inner_weight={self.inner_weight})"

    @property
    def spectral_radius(self):
        return float(-self.eigenvalues[0])

    def inner(self, u, v):
        return self.inner_weight * np.sum(np.asarray(u) * np.asarray(v), axis=-1)

    def norm(self, x):
        return np.sqrt(self.inner(x, x))

    def weighted_norm(self, x):
        """The ``H_n`` norm given by ``norm_weights`` (ambient norm if none)."""
        if self.norm_weights is None:
            return self.norm(x)
        x = np.asarray(x, dtype=float)
        return np.sqrt(self.inner_weight * np.sum(self.norm_weights * x * x, axis=-1))

    def check_norm_equivalence(self, samples):
        """Largest violation of ``|h|/c <= |h|_w <= c |h|`` on ``samples`` (<= 0 is fine)."""
        h = np.atleast_2d(samples)
        a = self.norm(h)
        b = self.weighted_norm(h)
        c = self.equivalence_constant
        return float(max(np.max(a / c - b), np.max(b - c * a)))

    def transition_factor(self, t):
        """Matrix ``e^{tA}``."""
        V, lam = self.eigenvectors, self.eigenvalues
        return (V * np.exp(t * lam)) @ V.T

    def ou_noise_factor(self, dt):
        """Matrix ``S`` with ``S S^T dt = int_0^dt e^{2sA} ds`` (exact OU increment)."""
        V, lam = self.eigenvectors, self.eigenvalues
        x = 2.0 * lam * dt
        ratio = np.where(x != 0, np.expm1(x) / np.where(x != 0, x, 1.0), 1.0)
        return (V * np.sqrt(ratio)) @ V.T

    def transition_covariance(self, t):
        """Coordinate covariance of ``X_t`` for the unpenalized system started at a point."""
        V, lam = self.eigenvectors, self.eigenvalues
        x = 2.0 * lam * t
        var = np.where(lam != 0, np.expm1(x) / np.where(lam != 0, 2.0 * lam, 1.0), t)
        return (V * var) @ V.T / self.inner_weight

    def stationary_increment_covariance(self, tau):
        """Coordinate covariance of ``X_{s+tau} - X_s`` in the stationary linear system."""
        if not self.stable:
            raise ValueError("no stationary law for a system with zero eigenvalues")
        V, lam = self.eigenvectors, self.eigenvalues
        var = -np.expm1(lam * abs(tau)) / (-lam)
        return (V * var) @ V.T / self.inner_weight


def semigroup_action(sys, t, x):
    """Apply ``e^{tA}`` to a point or batch of points."""
    if t < 0:
        raise ValueError("time must be nonnegative")
    x = np.asarray(x, dtype=float)
    if t == 0:
        return x.copy()
    return x @ sys.transition_factor(t).T


def sample_base_gaussian(sys, count, rng):
    """Draw ``count`` i.i.d. points from ``N(0, Q)`` (coordinate covariance ``Q / inner_weight``)."""
    if not sys.stable:
        raise ValueError("system has no Gaussian reference measure")
    z = rng.standard_normal((count, sys.dim))
    return z @ sys._sqrt_cov.T


def heat_laplacian(d):
    """Dirichlet second-difference matrix on ``d`` interior nodes of (0, 1), scaled by ``1/dx^2``."""
    if d < 2:
        raise ValueError("need at least two interior grid points")
    dx = 1.0 / (d + 1)
    L = (np.diag(np.full(d, -2.0)) + np.diag(np.ones(d - 1), 1)
         + np.diag(np.ones(d - 1), -1)) / dx ** 2
    return L


@dataclass(frozen=True)
class HeatGrid:
    """Finite-difference grid for the stochastic heat equation on (0, 1)."""

    d: int
    alpha: float
    mesh: float = field(init=False)
    laplacian: np.ndarray = field(init=False, repr=False)
    noise_scale: float = field(init=False)

    def __post_init__(self):
        if self.d < 2:
            raise ValueError("need at least two interior grid points")
        if self.alpha < 0:
            raise ValueError("alpha must be nonnegative")
        object.__setattr__(self, "mesh", 1.0 / (self.d + 1))
        object.__setattr__(self, "laplacian", heat_laplacian(self.d))
        object.__setattr__(self, "noise_scale", 1.0 / np.sqrt(self.mesh))

    @property
    def theta(self):
        return self.mesh * np.arange(1, self.d + 1)

    def laplacian_eigenvalues(self):
        k = np.arange(1, self.d + 1)
        return -(2.0 / self.mesh ** 2) * (1.0 - np.cos(k * np.pi * self.mesh))

    def penalty_value(self, x, n):
        """``n dx sum ((x_i + alpha)^-)^2``."""
        neg = np.maximum(-(np.asarray(x) + self.alpha), 0.0)
        return n * self.mesh * np.sum(neg ** 2, axis=-1)


def build_heat_grid(d, alpha, n):
    """Grid, linear system and penalization envelope for the reflected heat SPDE.

    The ambient inner product is the discrete ``L^2(0, 1)`` product (weight
    ``dx``), so the envelope of the indicator of ``{x >= -alpha}`` is
    ``n dx sum ((x_i + alpha)^-)^2`` and its gradient is ``-2n (x + alpha)^-``.
    ``n = 0`` returns ``None`` for the envelope (no penalization).
    """
    if n < 0:
        raise ValueError("penalty index must be nonnegative")
    grid = HeatGrid(d, float(alpha))
    sys = LinearSystem(grid.laplacian, inner_weight=grid.mesh, name=f"heat_grid_{d}")
    env = None
    if n > 0:
        env = YosidaEnvelope(NonnegativeCone(d, shift=alpha), n, weight=grid.mesh)
    return grid, sys, env
