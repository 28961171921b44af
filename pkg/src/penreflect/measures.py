"""Gibbs measures, integration-by-parts measures and their total variations.

A :class:`GibbsMeasure` is ``nu(dx) = exp(-2 U(x)) base(dx) / Z`` where the
base is Lebesgue measure or the Gaussian ``N(0, Q)`` of a
:class:`~penreflect.base_system.LinearSystem`.  ``U`` is either a smooth
potential (typically a :class:`~penreflect.potential.YosidaEnvelope`) or a
raw indicator, in which case ``nu`` is the base restricted to ``K``.

The signed measure ``Sigma_h`` satisfies ``int d_h phi dnu = -int phi dSigma_h``.
For smooth ``U`` it has the density ``2 (<x, A h> - <grad U(x), h>)``
(Gaussian base) or ``-2 <grad U(x), h>`` (Lebesgue base) with respect to
``nu``.  For indicators a surface term ``-<n(x), h> rho_nu(x) dS`` appears on
the boundary of ``K``.
"""

from collections import namedtuple
from dataclasses import dataclass, field

import numpy as np
from scipy import integrate, optimize, special

from .dynamics import block_generator
from .exceptions import TruncationError, TuningError, UnsupportedBodyError
from .potential import Ball, Box, ConvexSet, Halfspaces, Quadratic, YosidaEnvelope
from .quadrature import (gl_panels, golden_section_min, bracket_minimum, graded_breaks,
                         polar_rule, polygon_collar_rule, polygon_rule, tensor_rule)

__all__ = ["GibbsMeasure", "SignedMeasureEstimate", "normalize", "sample_gibbs",
           "sample_restricted_gaussian", "sigma_n", "sigma_limit", "sigma_limit_convex_body",
           "tv_by_min_formula", "ibp_residual", "weak_convergence_report", "ks_distance",
           "IBPResidual"]

IBPResidual = namedtuple("IBPResidual", ["value", "std_error"])

_LOG_DROP = 40.0


class GibbsMeasure:
    """Probability measure proportional to ``exp(-2 U) base``.

    Parameters
    ----------
    potential : YosidaEnvelope, ConvexPotential or ConvexSet
        ``U``.  A bare :class:`ConvexSet` gives the restriction of the base to ``K``.
    base : {"lebesgue", "gaussian"}
    system : LinearSystem, required for the Gaussian base.
    order : Gauss-Legendre order per panel.
    panels : panels per axis before refinement around kinks.
    truncation_sigmas : half-width of the Gaussian truncation box, in standard deviations.
    """

    def __init__(self, potential, base="lebesgue", system=None, order=20, panels=None,
                 truncation_sigmas=9.0, n_theta=256, mc_samples=400_000, seed=0):
        if base not in ("lebesgue", "gaussian"):
            raise ValueError("base must be 'lebesgue' or 'gaussian'")
        self.potential = potential
        self.base = base
        self.system = system
        self.dim = potential.dim
        self.order = order
        self.panels = panels if panels is not None else (64 if self.dim == 1 else 24)
        self.truncation_sigmas = float(truncation_sigmas)
        self.n_theta = n_theta
        self.mc_samples = mc_samples
        self.seed = seed
        self.is_limit = isinstance(potential, ConvexSet)
        if base == "gaussian":
            if system is None or not system.stable:
                raise ValueError("gaussian base needs a stable LinearSystem")
            if system.dim != self.dim:
                raise ValueError("system and potential dimensions differ")
            self.weight = system.inner_weight
            S = system.coordinate_covariance
            self._S = S
            self._S_inv = np.linalg.inv(S)
            self._log_norm = -0.5 * np.linalg.slogdet(2 * np.pi * S)[1]
        else:
            self.weight = 1.0
        self._Z = None
        self.Z_std_error = 0.0
        self._rule_cache = None
        self._box = None

    def __repr__(self):
        return f"GibbsMeasure({self.potential!r}, base={self.base!r})"

    @property
    def geometry(self):
        """The convex set whose boundary carries kinks, if any."""
        p = self.potential
        if isinstance(p, YosidaEnvelope):
            p = p.base
        return p if isinstance(p, ConvexSet) else None

    # -- pointwise quantities -------------------------------------------------

    def U(self, x):
        if self.is_limit:
            return np.where(self.potential.contains(x), 0.0, np.inf)
        return self.potential.value(x)

    def grad_U(self, x):
        """Gradient of ``U`` for the ambient inner product."""
        x = np.asarray(x, dtype=float)
        p = self.potential
        if self.is_limit:
            return np.zeros_like(x)
        if isinstance(p, YosidaEnvelope):
            return p.gradient(x)
        if hasattr(p, "gradient"):
            return p.gradient(x) / self.weight
        raise TypeError(f"{type(p).__name__} has no gradient")

    def euclidean_grad_U(self, x):
        return self.weight * self.grad_U(x)

    def log_base(self, x):
        x = np.asarray(x, dtype=float)
        if self.base == "lebesgue":
            return np.zeros(x.shape[:-1])
        return self._log_norm - 0.5 * np.sum((x @ self._S_inv) * x, axis=-1)

    def grad_log_base(self, x):
        x = np.asarray(x, dtype=float)
        if self.base == "lebesgue":
            return np.zeros_like(x)
        return -x @ self._S_inv

    def log_density(self, x):
        """Unnormalized log density with respect to Lebesgue measure."""
        return self.log_base(x) - 2.0 * self.U(x)

    # -- quadrature -------------------------------------------------------------

    def truncation_box(self):
        if self._box is not None:
            return self._box
        if self.base == "gaussian":
            half = self.truncation_sigmas * np.sqrt(np.diag(self._S))
            lo, hi = -half, half
            if self.is_limit:
                klo, khi = self.potential.bounding_box()
                lo, hi = np.maximum(lo, klo), np.minimum(hi, khi)
        elif self.is_limit:
            if not self.potential.is_bounded:
                raise TruncationError("Lebesgue measure of an unbounded set is not finite")
            lo, hi = self.potential.bounding_box()
        else:
            lo, hi = self._expand_lebesgue_box()
        self._box = (np.asarray(lo, dtype=float), np.asarray(hi, dtype=float))
        return self._box

    def _expand_lebesgue_box(self):
        clo, chi = self.potential.core_box()
        clo, chi = np.asarray(clo, float), np.asarray(chi, float)
        probe = _box_grid(clo, chi, 33)
        peak = np.max(self.log_density(probe))
        m = 0.25 * float(np.max(chi - clo))
        while m <= 1e4:
            lo, hi = clo - m, chi + m
            faces = _box_faces(lo, hi, 65)
            inner = _box_grid(lo, hi, 33)
            peak = max(peak, float(np.max(self.log_density(inner))))
            if np.max(self.log_density(faces)) <= peak - _LOG_DROP:
                return lo, hi
            m *= 2.0
        raise TruncationError("density mass outside every truncation box exceeds tolerance")

    def _kink_width(self):
        p = self.potential
        if isinstance(p, YosidaEnvelope):
            return 0.25 / np.sqrt(p.n * p.weight)
        return None

    def rule(self, extra_breaks=None):
        """Quadrature nodes and unnormalized weights (density included).

        ``extra_breaks`` (1-d only) adds panel breaks, e.g. sign changes of an
        integrand.
        """
        if extra_breaks is None and self._rule_cache is not None:
            return self._rule_cache
        if self.dim > 2:
            raise UnsupportedBodyError("tensor quadrature is limited to d <= 2; use Monte Carlo")
        pts, w = self._geometric_rule(extra_breaks)
        logd = self.log_density(pts)
        with np.errstate(over="ignore"):
            dens = np.where(np.isfinite(logd), np.exp(logd), 0.0)
        out = (pts, w * dens)
        if extra_breaks is None:
            self._rule_cache = out
        return out

    def _geometric_rule(self, extra_breaks=None):
        lo, hi = self.truncation_box()
        K = self.geometry
        width = self._kink_width()
        if self.is_limit:
            if self.dim == 2 and isinstance(K, Ball):
                r = graded_breaks(0.0, K.radius, h_max=K.radius / self.panels)
                return polar_rule(K.center, r, self.order, self.n_theta)
            if self.dim == 2 and isinstance(K, Halfspaces):
                verts = K.polygon(clip=(lo, hi))
                return polygon_rule(verts, self.order, subdivisions=max(1, self.panels // 4))
            rules = []
            for i in range(self.dim):
                kinks = [] if extra_breaks is None else extra_breaks
                b = graded_breaks(lo[i], hi[i], kinks, h_max=(hi[i] - lo[i]) / self.panels)
                rules.append(gl_panels(b, self.order))
            return tensor_rule(rules)
        if self.dim == 2 and isinstance(K, Ball):
            corners = _box_grid(lo, hi, 2)
            R = float(np.max(np.linalg.norm(corners - K.center, axis=1)))
            r = graded_breaks(0.0, R, [K.radius], width, h_max=R / self.panels)
            return polar_rule(K.center, r, self.order, self.n_theta)
        if (self.dim == 2 and isinstance(K, Halfspaces) and K.is_bounded
                and isinstance(self.potential, YosidaEnvelope)):
            p = self.potential
            verts = K.polygon()
            inner = polygon_rule(verts, self.order, subdivisions=max(1, self.panels // 4))
            band = np.sqrt(0.5 * _LOG_DROP / (p.n * p.weight))
            outer = polygon_collar_rule(verts, band, self.order, panels=4)
            return np.concatenate([inner[0], outer[0]]), np.concatenate([inner[1], outer[1]])
        rules = []
        for i in range(self.dim):
            kinks = list(self.potential.kinks(i))
            if extra_breaks is not None:
                kinks += list(extra_breaks)
            h_max = (hi[i] - lo[i]) / self.panels
            b = graded_breaks(lo[i], hi[i], kinks, width, h_max=h_max)
            rules.append(gl_panels(b, self.order))
        return tensor_rule(rules)

    def normalize(self):
        """Normalization constant ``Z`` (cached).

        Quadrature for ``d <= 2``; otherwise Monte Carlo over the base measure
        with the standard error stored in ``Z_std_error``.
        """
        if self._Z is None:
            if self.dim <= 2:
                if self.is_limit and self.base == "lebesgue":
                    try:
                        self._Z = self.potential.volume()
                    except UnsupportedBodyError:
                        self._Z = float(np.sum(self.rule()[1]))
                else:
                    self._Z = float(np.sum(self.rule()[1]))
            else:
                self._Z, self.Z_std_error = self._normalize_mc()
            if not self._Z > 0:
                raise TruncationError("normalization constant vanished")
        return self._Z

    def _normalize_mc(self):
        rng = block_generator(self.seed, 0)
        N = self.mc_samples
        if self.base == "gaussian":
            x = rng.standard_normal((N, self.dim)) @ np.linalg.cholesky(self._S).T
            vals = np.exp(-2.0 * self.U(x))
            return float(vals.mean()), float(vals.std(ddof=1) / np.sqrt(N))
        lo, hi = self.truncation_box()
        vol = float(np.prod(hi - lo))
        x = lo + (hi - lo) * rng.random((N, self.dim))
        vals = vol * np.exp(-2.0 * self.U(x))
        return float(vals.mean()), float(vals.std(ddof=1) / np.sqrt(N))

    def expect(self, f, rule=None):
        """``int f dnu`` by quadrature; ``f`` maps an (N, d) array to (N,) or (N, k)."""
        pts, w = self.rule() if rule is None else rule
        vals = np.asarray(f(pts))
        Z = self.normalize()
        return np.tensordot(w, vals, axes=(0, 0)) / Z

    def density(self, x):
        """Normalized Lebesgue density of ``nu``."""
        with np.errstate(over="ignore"):
            return np.exp(self.log_density(x)) / self.normalize()

    def marginal_cdf(self, axis=0):
        """Tabulated marginal CDF ``(nodes, cdf)`` from a tensor rule."""
        pts, w = self.rule()
        x = pts[:, axis]
        order = np.argsort(x, kind="stable")
        xs, ws = x[order], w[order]
        uniq, inv = np.unique(xs, return_inverse=True)
        mass = np.bincount(inv, weights=ws)
        cdf = np.cumsum(mass) / self.normalize()
        # midpoint convention: node mass splits evenly across the node
        mid = cdf - 0.5 * mass / self.normalize()
        return uniq, mid


def _box_grid(lo, hi, m):
    axes = [np.linspace(a, b, m) for a, b in zip(lo, hi)]
    g = np.meshgrid(*axes, indexing="ij")
    return np.stack([x.ravel() for x in g], axis=-1)


def _box_faces(lo, hi, m):
    d = len(lo)
    out = []
    for i in range(d):
        for v in (lo[i], hi[i]):
            l2, h2 = lo.copy(), hi.copy()
            l2[i] = h2[i] = v
            out.append(_box_grid(l2, h2, m if d > 1 else 1))
    return np.concatenate(out)


def normalize(g):
    """Normalization constant ``Z`` of a Gibbs measure."""
    return g.normalize()


# -- signed measures -------------------------------------------------------------


@dataclass
class SignedMeasureEstimate:
    """Numerical representation of ``Sigma_h``.

    ``density`` is a function giving the weight against ``measure``;
    ``surface_points``/``surface_weights`` are atoms of a boundary quadrature.
    ``facets`` lists exact per-facet data where available.
    """

    h: np.ndarray
    measure: GibbsMeasure = None
    density: object = None
    surface_points: np.ndarray = None
    surface_weights: np.ndarray = None
    tv: float = 0.0
    tv_std_error: float = 0.0
    density_tv: float = 0.0
    surface_tv: float = 0.0
    facets: list = field(default_factory=list)

    def integrate(self, f):
        """``int f dSigma`` (quadrature for the density part)."""
        total = 0.0
        if self.density is not None and self.measure is not None:
            total += float(self.measure.expect(lambda x: f(x) * self.density(x)))
        if self.surface_points is not None and len(self.surface_points):
            total += float(np.sum(self.surface_weights * f(self.surface_points)))
        return total


def _density_fn(g, h):
    h = np.asarray(h, dtype=float)
    w = g.weight
    if g.base == "gaussian":
        Ah = g.system.drift_matrix @ h
        if g.is_limit:
            return lambda x: 2.0 * w * (np.asarray(x) @ Ah)
        return lambda x: 2.0 * w * (np.asarray(x) @ Ah - g.grad_U(x) @ h)
    if g.is_limit:
        return None
    return lambda x: -2.0 * w * (g.grad_U(x) @ h)


def _l1_density(g, density):
    if density is None:
        return 0.0
    if g.dim == 1:
        pts, w = g.rule()
        x = pts[:, 0]
        order = np.argsort(x)
        xs = x[order]
        vals = density(xs[:, None])
        roots = []
        s = np.sign(vals)
        for i in np.nonzero(s[:-1] * s[1:] < 0)[0]:
            a, b = xs[i], xs[i + 1]
            roots.append(optimize.brentq(lambda t: float(density(np.array([[t]]))[0]), a, b,
                                         xtol=1e-15, rtol=4 * np.finfo(float).eps))
        rule = g.rule(extra_breaks=roots) if roots else g.rule()
        return float(g.expect(lambda x: np.abs(density(x)), rule=rule))
    return _l1_density_2d(g, density)


def _sign_roots(f, xs, vals):
    roots = []
    s = np.sign(vals)
    for i in np.nonzero(s[:-1] * s[1:] < 0)[0]:
        # scalar re-evaluation can disagree in sign with the batch one at round-off level
        if f(xs[i]) * f(xs[i + 1]) < 0:
            roots.append(optimize.brentq(f, xs[i], xs[i + 1], xtol=1e-14,
                                         rtol=4 * np.finfo(float).eps))
    return roots


def _line_kinks(g, c):
    """Points on the vertical line ``x_0 = c`` where the envelope gradient kinks."""
    K = g.geometry
    out = list(g.potential.kinks(1)) if hasattr(g.potential, "kinks") else []
    if K is None:
        return out
    lo, hi = K.line_interval(np.array([c, 0.0]), np.array([0.0, 1.0]))
    out += [t for t in (lo, hi) if np.isfinite(t) and lo <= hi]
    if isinstance(K, Halfspaces) and K.is_bounded:
        # boundaries of the vertex normal cones
        for v in K.polygon():
            for nrm in K.normals:
                if nrm[0] != 0.0:
                    s = (c - v[0]) / nrm[0]
                    if s >= 0:
                        out.append(v[1] + s * nrm[1])
    return out


def _l1_density_2d(g, density):
    """Iterated Gauss-Legendre integral of ``|density|`` against ``g``.

    Inner panels along the second axis break at the envelope kinks and at the
    sign changes of the integrand, so that each panel sees a smooth function.
    """
    lo, hi = g.truncation_box()
    width = g._kink_width()
    K = g.geometry
    outer_kinks = list(g.potential.kinks(0)) if hasattr(g.potential, "kinks") else []
    if isinstance(K, Halfspaces) and K.is_bounded:
        outer_kinks += list(K.polygon()[:, 0])
    xo, wo = gl_panels(graded_breaks(lo[0], hi[0], outer_kinks, width,
                                     h_max=(hi[0] - lo[0]) / g.panels), g.order)
    h_max = (hi[1] - lo[1]) / g.panels
    total = 0.0
    for c, wc in zip(xo, wo):
        def on_line(t, c=c):
            t = np.atleast_1d(t)
            return np.column_stack([np.full(t.size, c), t])
        kinks = _line_kinks(g, c)
        t, w = gl_panels(graded_breaks(lo[1], hi[1], kinks, width, h_max=h_max), g.order)
        roots = _sign_roots(lambda s: float(density(on_line(s))[0]), t, density(on_line(t)))
        if roots:
            t, w = gl_panels(graded_breaks(lo[1], hi[1], kinks + roots, width, h_max=h_max),
                             g.order)
        pts = on_line(t)
        logd = g.log_density(pts)
        base = np.where(np.isfinite(logd), np.exp(logd), 0.0)
        total += wc * np.sum(w * base * np.abs(density(pts)))
    return float(total / g.normalize())


def sigma_n(g, h):
    """``Sigma_h`` for a Gibbs measure ``g`` with its total variation.

    For smooth ``U`` only the density part is present; bare indicators are
    routed to :func:`sigma_limit`.
    """
    h = np.atleast_1d(np.asarray(h, dtype=float))
    if g.is_limit:
        return sigma_limit(g, h)
    dens = _density_fn(g, h)
    if not np.any(h):
        return SignedMeasureEstimate(h, g, dens, tv=0.0)
    if g.dim <= 2:
        tv = _l1_density(g, dens)
        return SignedMeasureEstimate(h, g, dens, tv=tv, density_tv=tv)
    tv, se = _mc_l1(g, dens)
    return SignedMeasureEstimate(h, g, dens, tv=tv, tv_std_error=se, density_tv=tv)


def _mc_l1(g, dens):
    rng = block_generator(g.seed, 1)
    N = g.mc_samples
    if g.base == "gaussian":
        x = rng.standard_normal((N, g.dim)) @ np.linalg.cholesky(g._S).T
        wts = np.exp(-2.0 * g.U(x))
    else:
        lo, hi = g.truncation_box()
        x = lo + (hi - lo) * rng.random((N, g.dim))
        wts = np.prod(hi - lo) * np.exp(-2.0 * g.U(x))
    vals = wts * np.abs(dens(x))
    Z = wts.mean()
    est = vals.mean() / Z
    # delta method for the ratio estimator
    resid = (vals - est * wts) / Z
    return float(est), float(resid.std(ddof=1) / np.sqrt(N))


def sigma_limit(g, h, boundary_order=None):
    """``Sigma_h`` of a measure restricted to a convex set (density plus surface part)."""
    if not g.is_limit:
        raise ValueError("sigma_limit needs a measure built on a bare convex set")
    h = np.atleast_1d(np.asarray(h, dtype=float))
    K = g.potential
    dens = _density_fn(g, h)
    density_tv = _l1_density(g, dens) if (dens is not None and np.any(h)) else 0.0
    clip = g.truncation_box() if not K.is_bounded else None
    kwargs = {} if boundary_order is None else {"order": boundary_order}
    pts, nrm, dS = K.boundary_rule(clip=clip, **kwargs)
    Z = g.normalize()
    rho = np.exp(g.log_base(pts)) / Z if len(pts) else np.empty(0)
    weights = -(nrm @ h) * rho * dS
    surface_tv = float(np.sum(np.abs(weights)))
    facets = []
    if g.base == "lebesgue":
        try:
            vol = K.volume()
            for normal, measure in K.facet_table():
                facets.append({"normal": normal, "measure": measure,
                               "weight": -float(normal @ h) * measure / vol})
            surface_tv = float(sum(abs(f["weight"]) for f in facets))
        except UnsupportedBodyError:
            if isinstance(K, Ball):
                surface_tv = _ball_surface_tv(K, h)
    return SignedMeasureEstimate(h, g, dens, pts, weights, tv=density_tv + surface_tv,
                                 density_tv=density_tv, surface_tv=surface_tv, facets=facets)


def _ball_surface_tv(K, h, order=64):
    """``(1/|K|) int_{dK} |<n, h>| dS`` by Gauss-Legendre over the latitude angle."""
    d = K.dim
    hn = float(np.linalg.norm(h))
    if d == 1:
        return 2.0 * hn / K.volume()
    t1, w1 = gl_panels([0.0, np.pi / 2, np.pi], order)
    lat = float(np.sum(w1 * np.abs(np.cos(t1)) * np.sin(t1) ** (d - 2)))
    sphere = 2.0 * np.pi ** ((d - 1) / 2) / special.gamma((d - 1) / 2)
    return hn * K.radius ** (d - 1) * sphere * lat / K.volume()


def sigma_limit_convex_body(K, h):
    """Boundary measure ``-(1/|K|) <n, h> dS`` of the uniform law on a convex body.

    Total variation is exact for boxes and polygons (facet sums) and uses a
    latitude quadrature for balls.
    """
    if not isinstance(K, ConvexSet):
        raise UnsupportedBodyError("need a convex set")
    if not K.is_bounded:
        raise UnsupportedBodyError("convex body must be bounded")
    if isinstance(K, Ball) and K.dim > 2:
        return _ball_latitude_tv(K, h)
    return sigma_limit(GibbsMeasure(K, "lebesgue"), h)


def _ball_latitude_tv(K, h):
    # |S^{d-2}| R^{d-1} |h| int_0^pi |cos t| sin^{d-2} t dt over the ball volume
    h = np.atleast_1d(np.asarray(h, dtype=float))
    d = K.dim
    sphere = 2 * np.pi ** ((d - 1) / 2) / special.gamma((d - 1) / 2)
    lat = 2 * integrate.quad(lambda t: np.cos(t) * np.sin(t) ** (d - 2), 0, np.pi / 2,
                             epsabs=1e-14, epsrel=1e-14)[0]
    tv = sphere * K.radius ** (d - 1) * np.linalg.norm(h) * lat / K.volume()
    return SignedMeasureEstimate(h, GibbsMeasure(K, "lebesgue"), None, tv=float(tv),
                                 surface_tv=float(tv))


# -- total variation through one-dimensional minimization --------------------------


def _line_min(g, y, u, quadratic_term, tol):
    """``min_t 2 U(y + t u) + q t^2/2`` for a batch of base points ``y``."""
    y = np.atleast_2d(y)
    if g.is_limit:
        K = g.potential
        out = np.empty(len(y))
        for i, yi in enumerate(y):
            lo, hi = K.line_interval(yi, u)
            if lo > hi:
                out[i] = np.inf
            elif quadratic_term:
                t = min(max(0.0, lo), hi)
                out[i] = 0.5 * t * t
            else:
                out[i] = 0.0
        return out
    q = 0.5 if quadratic_term else 0.0

    def v(t):
        t = np.asarray(t, dtype=float)
        pts = y + t[:, None] * u
        return 2.0 * g.U(pts) + q * t * t

    lo, hi = bracket_minimum(v, np.zeros(len(y)))
    _, vmin = golden_section_min(v, lo, hi, tol)
    return vmin


def tv_by_min_formula(g, h, tol=1e-10, outer_order=20, outer_panels=48, mc_samples=200_000):
    """Total variation ``|Sigma_h|(H)`` through the line-minimum formula.

    Gaussian base (``<-2Ah, h> = 1`` required)::

        (1/Z) int sqrt(2/pi) exp(-min_t [2 U(h t + y) + t^2/2]) N(0, Q - h h)(dy)

    Lebesgue base::

        (|h|/Z) int_{h-perp} 2 exp(-min_t 2 U(y + t h/|h|)) dy

    Each inner minimum is found by golden-section search on a doubling
    bracket.  Returns ``(value, std_error)``; the error is zero unless the
    outer integral had to be done by Monte Carlo.
    """
    h = np.atleast_1d(np.asarray(h, dtype=float))
    Z = g.normalize()
    if g.base == "gaussian":
        A = g.system.drift_matrix
        q = -2.0 * g.weight * float(h @ A @ h)
        if abs(q - 1.0) > 1e-9:
            raise ValueError(f"direction must satisfy <-2Ah,h> = 1 (got {q:.12g})")
        C = g._S - np.outer(h, h)
        lam, V = np.linalg.eigh(0.5 * (C + C.T))
        keep = lam > 1e-12 * max(1.0, lam.max())
        dirs = V[:, keep] * np.sqrt(lam[keep])
        pref = np.sqrt(2.0 / np.pi)
        f = lambda y: pref * np.exp(-_line_min(g, y, h, True, tol))
        val, se = _gaussian_outer(f, dirs, g.dim, outer_order, outer_panels, mc_samples, g.seed)
        return val / Z, se / Z
    hn = float(np.linalg.norm(h))
    if hn == 0:
        return 0.0, 0.0
    u = h / hn
    f = lambda y: 2.0 * np.exp(-_line_min(g, y, u, False, tol))
    val, se = _lebesgue_outer(g, f, u, outer_order, outer_panels, mc_samples)
    return hn * val / Z, hn * se / Z


def _gaussian_outer(f, dirs, d, order, panels, mc_samples, seed, r=9.0):
    k = dirs.shape[1]
    if k == 0:
        return float(f(np.zeros((1, d)))[0]), 0.0
    if k == 1:
        v = dirs[:, 0]
        phi = lambda u: np.exp(-0.5 * u * u) / np.sqrt(2 * np.pi)
        val, _ = integrate.quad(lambda u: phi(u) * float(f((u * v)[None])[0]), -r, r,
                                epsabs=1e-13, epsrel=1e-12, limit=400)
        return val, 0.0
    if k == 2:
        b = np.linspace(-r, r, panels + 1)
        nodes, w = gl_panels(b, order)
        U, wt = tensor_rule([(nodes, w), (nodes, w)])
        dens = np.exp(-0.5 * np.sum(U ** 2, axis=1)) / (2 * np.pi)
        y = U @ dirs.T
        return float(np.sum(wt * dens * f(y))), 0.0
    rng = block_generator(seed, 2)
    y = rng.standard_normal((mc_samples, k)) @ dirs.T
    vals = f(y)
    return float(vals.mean()), float(vals.std(ddof=1) / np.sqrt(mc_samples))


def _lebesgue_outer(g, f, u, order, panels, mc_samples):
    d = g.dim
    if d == 1:
        return float(f(np.zeros((1, 1)))[0]), 0.0
    lo, hi = g.truncation_box()
    corners = _box_grid(lo, hi, 2)
    if d == 2:
        perp = np.array([-u[1], u[0]])
        s = corners @ perp
        K = g.geometry
        pts = []
        if K is not None:
            if isinstance(K, Ball):
                c = float(K.center @ perp)
                pts = [c - K.radius, c + K.radius]
            elif K.is_bounded:
                klo, khi = K.bounding_box()
                verts = K.polygon() if isinstance(K, Halfspaces) else _box_grid(klo, khi, 2)
                pts = sorted(set(float(p) for p in verts @ perp))
        pts = [p for p in pts if s.min() < p < s.max()]
        val, _ = integrate.quad(lambda t: float(f((t * perp)[None])[0]), s.min(), s.max(),
                                points=pts or None, epsabs=1e-13, epsrel=1e-12, limit=400)
        return val, 0.0
    # d >= 3: Monte Carlo over a square patch of the hyperplane orthogonal to u
    basis = np.linalg.svd(np.eye(d) - np.outer(u, u))[0][:, :d - 1]
    R = float(np.max(np.linalg.norm(corners, axis=1)))
    rng = block_generator(g.seed, 3)
    c = (2 * R) * rng.random((mc_samples, d - 1)) - R
    vals = f(c @ basis.T) * (2 * R) ** (d - 1)
    return float(vals.mean()), float(vals.std(ddof=1) / np.sqrt(mc_samples))


# -- integration by parts and weak convergence ----------------------------------------


def ibp_residual(g, sigma, phi, h=None, samples=None):
    """``int d_h phi dnu + int phi dSigma_h``; zero when the pair satisfies the IBP formula.

    Quadrature for ``d <= 2``.  With ``samples`` drawn from ``nu`` the density
    part is estimated by Monte Carlo and a standard error is attached.
    """
    h = sigma.h if h is None else np.atleast_1d(np.asarray(h, dtype=float))
    if samples is None:
        lhs = float(g.expect(lambda x: phi.grad(x) @ h))
        return IBPResidual(lhs + sigma.integrate(phi.f), 0.0)
    x = np.asarray(samples, dtype=float)
    terms = phi.grad(x) @ h
    if sigma.density is not None:
        terms = terms + phi.f(x) * sigma.density(x)
    surf = 0.0
    if sigma.surface_points is not None and len(sigma.surface_points):
        surf = float(np.sum(sigma.surface_weights * phi.f(sigma.surface_points)))
    return IBPResidual(float(terms.mean()) + surf, float(terms.std(ddof=1) / np.sqrt(len(x))))


def weak_convergence_report(measures, limit, observables, h=None, radii=()):
    """Gaps ``|E_{nu^n} phi - E_nu phi|`` per measure and the tail of ``|Sigma_h^n|``.

    Returns a list of row dicts with keys ``n``, ``quantity``, ``value``,
    ``std_error``.  Tail rows report ``|Sigma_h^n|(|x| > R)``.
    """
    rows = []
    ref = {phi.name: float(limit.expect(phi.f)) for phi in observables}
    for g in measures:
        n = getattr(g.potential, "n", np.inf)
        for phi in observables:
            gap = abs(float(g.expect(phi.f)) - ref[phi.name])
            rows.append({"n": n, "quantity": f"gap[{phi.name}]", "value": gap, "std_error": 0.0})
        if h is not None:
            sig = sigma_n(g, h)
            for R in radii:
                outside = lambda x, R=R: np.abs(sig.density(x)) * (np.linalg.norm(x, axis=-1) > R)
                tail = float(g.expect(outside))
                rows.append({"n": n, "quantity": f"tail_tv[R={R:g}]", "value": tail,
                             "std_error": 0.0})
    return rows


# -- sampling ------------------------------------------------------------------------


def sample_restricted_gaussian(system, K, count, master_seed, max_rounds=1000):
    """I.i.d. draws from ``N(0, Q)`` conditioned on ``K``, by rejection."""
    rng = block_generator(master_seed, 0)
    L = np.linalg.cholesky(system.coordinate_covariance)
    out = []
    have = 0
    for _ in range(max_rounds):
        x = rng.standard_normal((max(count, 1024), system.dim)) @ L.T
        x = x[K.contains(x)]
        out.append(x)
        have += len(x)
        if have >= count:
            return np.concatenate(out)[:count]
    raise TuningError("rejection sampler acceptance too low")


def sample_gibbs(g, count, master_seed, burn_in=2000, per_chain=1, thin=20, step=None,
                 target_acceptance=0.574, return_info=False):
    """MALA draws from ``g`` (preconditioned by the base covariance if Gaussian).

    ``count / per_chain`` independent chains are run; each is adapted during
    ``burn_in`` (Robbins-Monro on the log step towards ``target_acceptance``)
    and then frozen, after which ``per_chain`` states spaced ``thin`` steps
    apart are kept.
    """
    if g.is_limit:
        raise ValueError("MALA needs a finite potential; use sample_restricted_gaussian")
    d = g.dim
    chains = int(np.ceil(count / per_chain))
    rng = block_generator(master_seed, 0)
    if g.base == "gaussian":
        C = g._S
        L = np.linalg.cholesky(C)
    else:
        C = np.eye(d)
        L = np.eye(d)
    x, init_rate = _initial_states(g, chains, rng, L)
    Linv = np.linalg.inv(L)

    def logpi(z):
        return g.log_base(z) - 2.0 * g.U(z)

    def drift(z):
        gl = g.grad_log_base(z) - 2.0 * g.euclidean_grad_U(z)
        return gl @ C.T

    if step is None:
        step = 0.5 / np.sqrt(d)
    log_eps = np.log(step)
    lp = logpi(x)
    dr = drift(x)
    acc_hist = []

    def mh_step(x, lp, dr, eps, adapt):
        xi = rng.standard_normal(x.shape)
        y = x + 0.5 * eps ** 2 * dr + eps * xi @ L.T
        lpy = logpi(y)
        dry = drift(y)
        fwd = -0.5 * np.sum(xi ** 2, axis=1)
        back_res = (x - y - 0.5 * eps ** 2 * dry) @ Linv.T / eps
        bwd = -0.5 * np.sum(back_res ** 2, axis=1)
        log_a = lpy - lp + bwd - fwd
        u = rng.random(len(x))
        acc = np.log(u) < log_a
        x = np.where(acc[:, None], y, x)
        lp = np.where(acc, lpy, lp)
        dr = np.where(acc[:, None], dry, dr)
        return x, lp, dr, acc.mean()

    for k in range(burn_in):
        x, lp, dr, a = mh_step(x, lp, dr, np.exp(log_eps), True)
        if k < burn_in // 2:
            log_eps += (a - target_acceptance) / np.sqrt(k + 1.0)
        acc_hist.append(a)
    eps = float(np.exp(log_eps))
    out = []
    rates = []
    for j in range(per_chain):
        for _ in range(thin if j else 1):
            x, lp, dr, a = mh_step(x, lp, dr, eps, False)
            rates.append(a)
        out.append(x.copy())
    tail = acc_hist[burn_in // 2:] + rates
    rate = float(np.mean(tail)) if tail else float(np.mean(rates))
    if not 0.05 <= rate <= 0.95:
        raise TuningError(f"MALA acceptance {rate:.3f} outside [0.05, 0.95]")
    samples = np.concatenate(out)[:count] if per_chain > 1 else out[0][:count]
    if per_chain > 1:
        samples = np.stack(out, axis=1).reshape(-1, d)[:count]
    if return_info:
        return samples, {"step": eps, "acceptance": rate, "chains": chains,
                         "initial_acceptance": init_rate}
    return samples


def _initial_states(g, chains, rng, L, min_rate=1e-3, max_draws=50_000_000):
    """Starting points for the MALA chains.

    When ``U >= 0`` on the proposals, draws from the base (Gaussian, or
    uniform on the truncation box) are accepted with probability
    ``exp(-2 U)``, which yields exact draws from ``g``; the chains then
    start in equilibrium.  If that acceptance rate is below ``min_rate`` the
    proposals are used as they are and burn-in has to do the work.
    """
    d = g.dim
    if g.base == "gaussian":
        def propose(m):
            return rng.standard_normal((m, d)) @ L.T
    else:
        lo, hi = g.truncation_box()

        def propose(m):
            return lo + (hi - lo) * rng.random((m, d))
    out, have, drawn = [], 0, 0
    batch = max(chains, 4096)
    while have < chains:
        y = propose(batch)
        u = g.U(y)
        drawn += batch
        if np.any(u < 0):
            return y[:chains], 0.0
        keep = y[rng.random(batch) < np.exp(-2.0 * u)]
        out.append(keep)
        have += len(keep)
        rate = have / drawn
        if rate < min_rate or drawn > max_draws:
            return propose(chains), rate
        batch = int(min(max_draws, max(4096, 1.2 * (chains - have) / max(rate, min_rate))))
    return np.concatenate(out)[:chains], have / drawn


def ks_distance(samples, g, axis=0):
    """Kolmogorov-Smirnov distance between a sample marginal and the quadrature CDF."""
    nodes, cdf = g.marginal_cdf(axis)
    s = np.sort(np.asarray(samples)[:, axis])
    F = np.interp(s, nodes, cdf, left=0.0, right=1.0)
    m = len(s)
    upper = np.arange(1, m + 1) / m - F
    lower = F - np.arange(0, m) / m
    return float(max(upper.max(), lower.max()))
