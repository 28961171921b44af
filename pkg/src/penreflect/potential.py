"""Convex potentials, their Moreau-Yosida envelopes and proximal maps.

Penalty parametrization: the envelope of ``U`` with index ``n`` is

    U_n(x) = inf_y { U(y) + n |x - y|^2 }

so ``prox(x, n)`` is the minimizer of ``U(y) + n |x - y|^2``.  In the
conventional ``|x - y|^2 / (2 lam)`` scaling this is ``lam = 1 / (2 n)``.

Points are numpy arrays whose last axis is the spatial dimension; leading
axes are treated as a batch.
"""

import numpy as np
from scipy import optimize
from scipy.spatial import ConvexHull, HalfspaceIntersection

from .exceptions import (InfeasibleSetError, ProxConvergenceError,
                         UnsupportedBodyError)

__all__ = [
    "ConvexPotential", "ConvexSet", "Box", "NonnegativeCone", "Ball",
    "Halfspaces", "Quadratic", "SumPotential", "YosidaEnvelope",
    "yosida_value", "yosida_gradient", "project", "dykstra_projection",
]

DYKSTRA_TOL = 1e-10
DYKSTRA_MAX_ITER = 10_000


def _points(x, dim):
    x = np.asarray(x, dtype=float)
    if x.ndim == 0:
        x = x[None]
    if x.shape[-1] != dim:
        raise ValueError(f"expected points of dimension {dim}, got shape {x.shape}")
    return x


def _gauss_legendre(a, b, order):
    t, w = np.polynomial.legendre.leggauss(order)
    return 0.5 * (b - a) * t + 0.5 * (a + b), 0.5 * (b - a) * w


class ConvexPotential:
    """A convex lower semicontinuous function ``U: R^d -> (-inf, +inf]``.

    Subclasses implement :meth:`value` and :meth:`prox`.  The pair
    ``lower_bound_params = (A, B)`` certifies ``U(x) >= A - B |x|``.
    """

    dim = 1
    lower_bound_params = (0.0, 0.0)

    def value(self, x):
        raise NotImplementedError

    def prox(self, x, n):
        raise NotImplementedError

    def contains(self, x):
        """Membership in the effective domain ``K = {U < inf}``."""
        return np.isfinite(self.value(x))

    def envelope(self, x, n):
        """Moreau-Yosida envelope value, evaluated through the prox."""
        x = _points(x, self.dim)
        p = self.prox(x, n)
        return self.value(p) + n * np.sum((x - p) ** 2, axis=-1)

    def kinks(self, axis):
        """Coordinates along ``axis`` where the envelope loses smoothness."""
        return np.empty(0)

    def core_box(self):
        """A box where most of the mass of ``exp(-2 U)`` sits."""
        return -np.ones(self.dim), np.ones(self.dim)

    def __add__(self, other):
        return SumPotential([self, other])


class ConvexSet(ConvexPotential):
    """Indicator potential of a nonempty closed convex set ``K``.

    ``U = 0`` on ``K`` and ``+inf`` outside; the prox is the metric
    projection and the envelope is ``n dist(x, K)^2``.
    """

    def project(self, x):
        raise NotImplementedError

    def contains(self, x, tol=1e-12):
        raise NotImplementedError

    def value(self, x):
        x = _points(x, self.dim)
        return np.where(self.contains(x), 0.0, np.inf)

    def prox(self, x, n):
        return self.project(x)

    def distance(self, x):
        x = _points(x, self.dim)
        return np.linalg.norm(x - self.project(x), axis=-1)

    def envelope(self, x, n):
        x = _points(x, self.dim)
        return n * np.sum((x - self.project(x)) ** 2, axis=-1)

    def line_interval(self, y, u):
        """Parameter interval ``{t : y + t u in K}`` as ``(lo, hi)``.

        Empty intersections are returned with ``lo > hi``.
        """
        raise NotImplementedError

    @property
    def is_bounded(self):
        lo, hi = self.bounding_box()
        return bool(np.all(np.isfinite(lo)) and np.all(np.isfinite(hi)))

    def bounding_box(self):
        raise NotImplementedError

    def core_box(self):
        lo, hi = self.bounding_box()
        lo = np.where(np.isfinite(lo), lo, np.where(np.isfinite(hi), hi - 1.0, -1.0))
        hi = np.where(np.isfinite(hi), hi, lo + 1.0 + np.abs(lo))
        return lo, hi

    def volume(self):
        raise UnsupportedBodyError(f"{type(self).__name__} has no volume routine")

    def boundary_rule(self, order=20, clip=None):
        """Quadrature rule on the boundary surface.

        Returns ``(points, outer_normals, surface_weights)``.  ``clip`` is an
        optional box ``(lo, hi)`` used to truncate unbounded faces.
        """
        raise UnsupportedBodyError(f"{type(self).__name__} has no boundary rule")

    def facet_table(self):
        """Exact facet list ``[(outer_normal, facet_measure), ...]`` (polytopes)."""
        raise UnsupportedBodyError(f"{type(self).__name__} is not a polytope")


class Box(ConvexSet):
    """Axis-aligned box ``{lower <= x <= upper}``; bounds may be infinite."""

    def __init__(self, lower, upper):
        self.lower = np.atleast_1d(np.asarray(lower, dtype=float))
        self.upper = np.atleast_1d(np.asarray(upper, dtype=float))
        if self.lower.shape != self.upper.shape or self.lower.ndim != 1:
            raise ValueError("lower and upper must be 1-d arrays of equal length")
        if np.any(self.lower > self.upper):
            raise InfeasibleSetError("box with lower > upper")
        self.dim = self.lower.size

    def __repr__(self):
        return f"Box(lower={self.lower.tolist()}, upper={self.upper.tolist()})"

    def project(self, x):
        return np.clip(_points(x, self.dim), self.lower, self.upper)

    def contains(self, x, tol=1e-12):
        x = _points(x, self.dim)
        return np.all((x >= self.lower - tol) & (x <= self.upper + tol), axis=-1)

    def kinks(self, axis):
        b = np.array([self.lower[axis], self.upper[axis]])
        return b[np.isfinite(b)]

    def bounding_box(self):
        return self.lower.copy(), self.upper.copy()

    def line_interval(self, y, u):
        y = np.asarray(y, dtype=float)
        u = np.asarray(u, dtype=float)
        lo, hi = -np.inf, np.inf
        for i in range(self.dim):
            if u[i] == 0.0:
                if not self.lower[i] <= y[i] <= self.upper[i]:
                    return np.inf, -np.inf
                continue
            a = (self.lower[i] - y[i]) / u[i]
            b = (self.upper[i] - y[i]) / u[i]
            lo = max(lo, min(a, b))
            hi = min(hi, max(a, b))
        return lo, hi

    def volume(self):
        if not self.is_bounded:
            raise UnsupportedBodyError("unbounded box")
        return float(np.prod(self.upper - self.lower))

    def facet_table(self):
        if not self.is_bounded:
            raise UnsupportedBodyError("unbounded box")
        sides = self.upper - self.lower
        out = []
        for i in range(self.dim):
            measure = float(np.prod(np.delete(sides, i)))
            e = np.zeros(self.dim)
            e[i] = 1.0
            out.append((e, measure))
            out.append((-e, measure))
        return out

    def boundary_rule(self, order=20, clip=None):
        lo, hi = self.lower.copy(), self.upper.copy()
        if clip is not None:
            lo = np.maximum(lo, clip[0])
            hi = np.minimum(hi, clip[1])
        if not (np.all(np.isfinite(lo)) and np.all(np.isfinite(hi))):
            raise UnsupportedBodyError("unbounded box face needs a clip box")
        pts, nrm, wts = [], [], []
        for i in range(self.dim):
            others = [j for j in range(self.dim) if j != i]
            if others:
                rules = [_gauss_legendre(lo[j], hi[j], order) for j in others]
                grids = np.meshgrid(*[r[0] for r in rules], indexing="ij")
                wgrid = np.meshgrid(*[r[1] for r in rules], indexing="ij")
                face = np.stack([g.ravel() for g in grids], axis=-1)
                fw = np.prod(np.stack([g.ravel() for g in wgrid], axis=-1), axis=-1)
            else:
                face = np.empty((1, 0))
                fw = np.ones(1)
            for side, sign in ((self.lower, -1.0), (self.upper, 1.0)):
                if not np.isfinite(side[i]):
                    continue
                p = np.empty((face.shape[0], self.dim))
                p[:, others] = face
                p[:, i] = side[i]
                e = np.zeros(self.dim)
                e[i] = sign
                pts.append(p)
                nrm.append(np.tile(e, (face.shape[0], 1)))
                wts.append(fw)
        if not pts:
            return np.empty((0, self.dim)), np.empty((0, self.dim)), np.empty(0)
        return np.concatenate(pts), np.concatenate(nrm), np.concatenate(wts)


class NonnegativeCone(Box):
    """The orthant ``{x >= 0}``, optionally shifted to ``{x >= -shift}``."""

    def __init__(self, dim, shift=0.0):
        super().__init__(np.full(dim, -float(shift)), np.full(dim, np.inf))
        self.shift = float(shift)

    def __repr__(self):
        return f"NonnegativeCone(dim={self.dim}, shift={self.shift})"


class Ball(ConvexSet):
    """Closed Euclidean ball."""

    def __init__(self, center, radius):
        self.center = np.atleast_1d(np.asarray(center, dtype=float))
        self.radius = float(radius)
        if self.radius <= 0:
            raise InfeasibleSetError("ball radius must be positive")
        self.dim = self.center.size

    def __repr__(self):
        return f"Ball(center={self.center.tolist()}, radius={self.radius})"

    def project(self, x):
        x = _points(x, self.dim)
        v = x - self.center
        r = np.linalg.norm(v, axis=-1, keepdims=True)
        scale = np.where(r > self.radius, self.radius / np.where(r > 0, r, 1.0), 1.0)
        return self.center + v * scale

    def contains(self, x, tol=1e-12):
        x = _points(x, self.dim)
        return np.linalg.norm(x - self.center, axis=-1) <= self.radius + tol

    def kinks(self, axis):
        c = self.center[axis]
        return np.array([c - self.radius, c + self.radius])

    def bounding_box(self):
        return self.center - self.radius, self.center + self.radius

    def line_interval(self, y, u):
        v = np.asarray(y, dtype=float) - self.center
        u = np.asarray(u, dtype=float)
        a = u @ u
        b = 2 * (u @ v)
        c = v @ v - self.radius ** 2
        disc = b * b - 4 * a * c
        if disc < 0:
            return np.inf, -np.inf
        s = np.sqrt(disc)
        return (-b - s) / (2 * a), (-b + s) / (2 * a)

    def volume(self):
        from scipy.special import gamma
        d = self.dim
        return float(np.pi ** (d / 2) / gamma(d / 2 + 1) * self.radius ** d)

    def surface_area(self):
        from scipy.special import gamma
        d = self.dim
        return float(2 * np.pi ** (d / 2) / gamma(d / 2) * self.radius ** (d - 1))

    def boundary_rule(self, order=256, clip=None):
        if self.dim == 1:
            pts = np.array([[self.center[0] - self.radius], [self.center[0] + self.radius]])
            return pts, np.array([[-1.0], [1.0]]), np.ones(2)
        if self.dim != 2:
            raise UnsupportedBodyError("ball boundary rule is available for d <= 2")
        # periodic trapezoid in the angle: spectrally accurate for smooth integrands
        theta = 2 * np.pi * np.arange(order) / order
        nrm = np.stack([np.cos(theta), np.sin(theta)], axis=-1)
        pts = self.center + self.radius * nrm
        return pts, nrm, np.full(order, 2 * np.pi * self.radius / order)


class Halfspaces(ConvexSet):
    """Intersection of halfspaces ``{x : normals @ x <= offsets}``.

    Projection uses Dykstra's alternating projections, stopped when a full
    sweep moves the iterate by less than ``tol`` (or after ``max_iter``
    sweeps, which raises :class:`ProxConvergenceError`).
    """

    def __init__(self, normals, offsets, tol=DYKSTRA_TOL, max_iter=DYKSTRA_MAX_ITER):
        self.normals = np.atleast_2d(np.asarray(normals, dtype=float))
        self.offsets = np.atleast_1d(np.asarray(offsets, dtype=float))
        if self.normals.shape[0] != self.offsets.size:
            raise ValueError("one offset per normal required")
        if np.any(np.linalg.norm(self.normals, axis=1) == 0):
            raise ValueError("zero normal vector")
        self.dim = self.normals.shape[1]
        self.tol = tol
        self.max_iter = max_iter
        res = optimize.linprog(np.zeros(self.dim), A_ub=self.normals, b_ub=self.offsets,
                               bounds=[(None, None)] * self.dim, method="highs")
        if res.status == 2:
            raise InfeasibleSetError("halfspace system has empty intersection")
        self._feasible_point = res.x
        self._box = None
        self._polygon = None

    def __repr__(self):
        return f"Halfspaces(normals={self.normals.tolist()}, offsets={self.offsets.tolist()})"

    def project(self, x):
        x = _points(x, self.dim)
        if self.dim == 2 and self.is_bounded:
            return self._project_polygon(x)
        return dykstra_projection(self.normals, self.offsets, x, self.tol, self.max_iter)

    def _project_polygon(self, x):
        # exact: points outside go to the nearest point of the nearest edge segment
        v = self.polygon()
        a, b = v, np.roll(v, -1, axis=0)
        e = b - a
        flat = x.reshape(-1, 2)
        t = np.einsum("mek,ek->me", flat[:, None, :] - a, e) / np.sum(e * e, axis=1)
        cand = a + np.clip(t, 0.0, 1.0)[..., None] * e
        dist = np.sum((cand - flat[:, None, :]) ** 2, axis=-1)
        best = cand[np.arange(len(flat)), np.argmin(dist, axis=1)]
        inside = self.contains(flat, tol=0.0)
        return np.where(inside[:, None], flat, best).reshape(x.shape)

    def contains(self, x, tol=1e-9):
        x = _points(x, self.dim)
        return np.all(x @ self.normals.T <= self.offsets + tol, axis=-1)

    def bounding_box(self):
        if self._box is None:
            lo, hi = np.empty(self.dim), np.empty(self.dim)
            for i in range(self.dim):
                c = np.zeros(self.dim)
                c[i] = 1.0
                for sign, store in ((1.0, lo), (-1.0, hi)):
                    res = optimize.linprog(sign * c, A_ub=self.normals, b_ub=self.offsets,
                                           bounds=[(None, None)] * self.dim, method="highs")
                    store[i] = res.x[i] if res.status == 0 else -sign * np.inf
            self._box = (lo, hi)
        return self._box[0].copy(), self._box[1].copy()

    def line_interval(self, y, u):
        a_u = self.normals @ np.asarray(u, dtype=float)
        slack = self.offsets - self.normals @ np.asarray(y, dtype=float)
        lo, hi = -np.inf, np.inf
        for au, s in zip(a_u, slack):
            if au == 0.0:
                if s < 0:
                    return np.inf, -np.inf
            elif au > 0:
                hi = min(hi, s / au)
            else:
                lo = max(lo, s / au)
        return lo, hi

    def polygon(self, clip=None):
        """Counter-clockwise vertices of the (clipped) 2-d polygon."""
        if self.dim != 2:
            raise UnsupportedBodyError("polygon vertices need d == 2")
        if clip is None and self._polygon is not None:
            return self._polygon.copy()
        normals, offsets = self.normals, self.offsets
        if clip is not None:
            eye = np.eye(2)
            normals = np.vstack([normals, eye, -eye])
            offsets = np.concatenate([offsets, clip[1], -np.asarray(clip[0])])
        elif not self.is_bounded:
            raise UnsupportedBodyError("unbounded polygon needs a clip box")
        halfspaces = np.hstack([normals, -offsets[:, None]])
        norm = np.linalg.norm(normals, axis=1)
        # Chebyshev center as strictly interior point
        res = optimize.linprog(np.r_[0.0, 0.0, -1.0],
                               A_ub=np.hstack([normals, norm[:, None]]), b_ub=offsets,
                               bounds=[(None, None), (None, None), (0, None)], method="highs")
        if res.status != 0 or res.x[2] <= 1e-12:
            raise UnsupportedBodyError("polygon has empty interior")
        hsi = HalfspaceIntersection(halfspaces, res.x[:2])
        hull = ConvexHull(hsi.intersections)
        verts = hsi.intersections[hull.vertices]
        if clip is None:
            self._polygon = verts.copy()
        return verts

    def volume(self):
        if self.dim == 1:
            lo, hi = self.bounding_box()
            if not np.isfinite(lo[0]) or not np.isfinite(hi[0]):
                raise UnsupportedBodyError("unbounded interval")
            return float(hi[0] - lo[0])
        if not self.is_bounded:
            raise UnsupportedBodyError("unbounded polytope")
        return float(ConvexHull(self._vertices()).volume)

    def _vertices(self):
        if self.dim == 2:
            return self.polygon()
        halfspaces = np.hstack([self.normals, -self.offsets[:, None]])
        norm = np.linalg.norm(self.normals, axis=1)
        res = optimize.linprog(np.r_[np.zeros(self.dim), -1.0],
                               A_ub=np.hstack([self.normals, norm[:, None]]), b_ub=self.offsets,
                               bounds=[(None, None)] * self.dim + [(0, None)], method="highs")
        return HalfspaceIntersection(halfspaces, res.x[:-1]).intersections

    def facet_table(self):
        if self.dim != 2:
            raise UnsupportedBodyError("facet table implemented for polygons")
        verts = self.polygon()
        out = []
        for a, b in zip(verts, np.roll(verts, -1, axis=0)):
            edge = b - a
            nrm = np.array([edge[1], -edge[0]])
            nrm /= np.linalg.norm(nrm)
            out.append((nrm, float(np.linalg.norm(edge))))
        return out

    def boundary_rule(self, order=20, clip=None):
        if self.dim == 1:
            lo, hi = self.bounding_box()
            pts, nrm = [], []
            if np.isfinite(lo[0]):
                pts.append([lo[0]])
                nrm.append([-1.0])
            if np.isfinite(hi[0]):
                pts.append([hi[0]])
                nrm.append([1.0])
            return np.array(pts), np.array(nrm), np.ones(len(pts))
        verts = self.polygon(clip if not self.is_bounded else None)
        pts, nrm, wts = [], [], []
        for a, b in zip(verts, np.roll(verts, -1, axis=0)):
            edge = b - a
            length = np.linalg.norm(edge)
            if length < 1e-14:
                continue
            s, w = _gauss_legendre(0.0, 1.0, order)
            pts.append(a + s[:, None] * edge)
            normal = np.array([edge[1], -edge[0]]) / length
            nrm.append(np.tile(normal, (order, 1)))
            wts.append(w * length)
        return np.concatenate(pts), np.concatenate(nrm), np.concatenate(wts)


def dykstra_projection(normals, offsets, x, tol=DYKSTRA_TOL, max_iter=DYKSTRA_MAX_ITER):
    """Project (a batch of) points onto ``{normals @ y <= offsets}``."""
    x = np.asarray(x, dtype=float)
    sq = np.sum(normals ** 2, axis=1)
    y = x.copy()
    incs = np.zeros((normals.shape[0],) + x.shape)
    move = np.inf
    for it in range(1, max_iter + 1):
        y_prev = y
        for i, (a, b) in enumerate(zip(normals, offsets)):
            z = y + incs[i]
            viol = np.maximum(z @ a - b, 0.0)
            y = z - (viol / sq[i])[..., None] * a
            incs[i] = z - y
        move = float(np.max(np.abs(y - y_prev))) if y.size else 0.0
        if move < tol:
            return y
    raise ProxConvergenceError(max_iter, move)


class Quadratic(ConvexPotential):
    """``U(x) = sum_i c_i (x_i - m_i)^2`` with ``c_i >= 0``."""

    def __init__(self, curvature, center=None, dim=None):
        c = np.atleast_1d(np.asarray(curvature, dtype=float))
        if dim is None and center is not None:
            dim = np.atleast_1d(np.asarray(center)).size
        if dim is not None and c.size == 1:
            c = np.full(dim, c[0])
        if np.any(c < 0):
            raise ValueError("curvature must be nonnegative")
        self.curvature = c
        self.dim = c.size
        self.center = np.zeros(self.dim) if center is None else np.broadcast_to(
            np.asarray(center, dtype=float), (self.dim,)).copy()

    def __repr__(self):
        return f"Quadratic(curvature={self.curvature.tolist()}, center={self.center.tolist()})"

    def value(self, x):
        x = _points(x, self.dim)
        return np.sum(self.curvature * (x - self.center) ** 2, axis=-1)

    def prox(self, x, n):
        x = _points(x, self.dim)
        c = self.curvature
        return (c * self.center + n * x) / (c + n)

    def envelope(self, x, n):
        x = _points(x, self.dim)
        c = self.curvature
        return np.sum(c * n / (c + n) * (x - self.center) ** 2, axis=-1)

    def gradient(self, x):
        return 2.0 * self.curvature * (_points(x, self.dim) - self.center)

    def core_box(self):
        s = 1.0 / np.sqrt(np.maximum(self.curvature, 1e-300))
        s = np.minimum(s, 1e3)
        return self.center - s, self.center + s


class SumPotential(ConvexPotential):
    """Finite sum of convex potentials.

    The prox of a sum is computed by the Dykstra-like proximal splitting
    of Bauschke and Combettes, nested pairwise; for sums of indicators this
    reduces to Dykstra's projection algorithm.
    """

    def __init__(self, terms, tol=DYKSTRA_TOL, max_iter=DYKSTRA_MAX_ITER):
        flat = []
        for t in terms:
            flat.extend(t.terms if isinstance(t, SumPotential) else [t])
        if not flat:
            raise ValueError("empty sum")
        dims = {t.dim for t in flat}
        if len(dims) != 1:
            raise ValueError("terms have different dimensions")
        self.terms = flat
        self.dim = dims.pop()
        self.tol = tol
        self.max_iter = max_iter
        self.lower_bound_params = (sum(t.lower_bound_params[0] for t in flat),
                                   sum(t.lower_bound_params[1] for t in flat))

    def __repr__(self):
        return f"SumPotential({self.terms!r})"

    def value(self, x):
        return sum(t.value(x) for t in self.terms)

    def prox(self, x, n):
        x = _points(x, self.dim)
        return self._prox_terms(self.terms, x, n)

    def _prox_terms(self, terms, x, n):
        if len(terms) == 1:
            return terms[0].prox(x, n)
        half = len(terms) // 2
        f = lambda z: self._prox_terms(terms[:half], z, n)
        g = lambda z: self._prox_terms(terms[half:], z, n)
        xk = x.copy()
        p = np.zeros_like(x)
        q = np.zeros_like(x)
        move = np.inf
        for _ in range(self.max_iter):
            yk = g(xk + p)
            p = xk + p - yk
            x_new = f(yk + q)
            q = yk + q - x_new
            move = float(np.max(np.abs(x_new - xk))) if x_new.size else 0.0
            xk = x_new
            if move < self.tol:
                return xk
        raise ProxConvergenceError(self.max_iter, move)

    def kinks(self, axis):
        return np.unique(np.concatenate([t.kinks(axis) for t in self.terms]))

    def core_box(self):
        boxes = [t.core_box() for t in self.terms]
        lo = np.max([b[0] for b in boxes], axis=0)
        hi = np.min([b[1] for b in boxes], axis=0)
        bad = lo >= hi
        lo = np.where(bad, boxes[0][0], lo)
        hi = np.where(bad, boxes[0][1], hi)
        return lo, hi


class YosidaEnvelope:
    """Moreau-Yosida envelope ``U_n`` of a convex potential.

    ``weight`` is a scalar metric factor: the ambient inner product is
    ``<u, v> = weight * u @ v``.  It is 1 for plain ``R^d`` and the mesh
    width for grid discretizations of ``L^2(0, 1)``.  :meth:`gradient`
    returns the gradient with respect to that inner product, which is
    ``2 n (x - prox(x))`` irrespective of ``weight``.
    """

    def __init__(self, base, n, weight=1.0):
        if not n > 0:
            raise ValueError("penalty index n must be positive")
        if not weight > 0:
            raise ValueError("metric weight must be positive")
        self.base = base
        self.n = float(n)
        self.weight = float(weight)
        self.dim = base.dim

    def __repr__(self):
        return f"YosidaEnvelope({self.base!r}, n={self.n}, weight={self.weight})"

    @property
    def lower_bound_params(self):
        return self.base.lower_bound_params

    def with_n(self, n):
        return YosidaEnvelope(self.base, n, self.weight)

    def prox(self, x):
        return self.base.prox(x, self.n * self.weight)

    def value(self, x):
        return self.base.envelope(x, self.n * self.weight)

    def gradient(self, x):
        x = _points(x, self.dim)
        return 2.0 * self.n * (x - self.prox(x))

    def euclidean_gradient(self, x):
        """Gradient with respect to the plain dot product."""
        return self.weight * self.gradient(x)

    def resolvent(self, y, dt):
        """Solve ``z + dt * gradient(z) = y`` for ``z``.

        Uses ``(I + tau grad env_gamma U)^{-1} = I + tau/(gamma+tau) (prox_{gamma+tau} - I)``
        with ``gamma = 1 / (2 n)``.
        """
        y = _points(y, self.dim)
        a = 2.0 * self.n * dt
        n_eff = self.n / (1.0 + a)
        p = self.base.prox(y, n_eff * self.weight)
        return y + a / (1.0 + a) * (p - y)

    def kinks(self, axis):
        return self.base.kinks(axis)

    def core_box(self):
        return self.base.core_box()


def yosida_value(env, x):
    """``U_n(x) = U(p) + n |x - p|^2`` with ``p = prox(x, n)``; always finite."""
    return env.value(x)


def yosida_gradient(env, x):
    """``grad U_n(x) = 2 n (x - prox(x, n))``."""
    return env.gradient(x)


def project(K, x):
    """Metric projection onto the convex set ``K``."""
    if not isinstance(K, ConvexSet):
        raise TypeError("project needs an indicator-type convex set")
    return K.project(x)
