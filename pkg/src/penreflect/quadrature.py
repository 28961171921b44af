"""Composite Gauss-Legendre rules on panels, plus polar and triangle rules.

Integrands met here are smooth except across known kink lines (faces of
convex sets, where ``exp(-2 U_n)`` is only C^1).  Aligning panel breaks
with those kinks keeps every panel analytic, so modest orders reach
near machine precision.
"""

from functools import lru_cache

import numpy as np

__all__ = ["gl_panels", "graded_breaks", "tensor_rule", "polar_rule", "polygon_rule", "polygon_collar_rule",
           "golden_section_min", "bracket_minimum", "minimize_convex_1d"]

PHI_RATIO = 2.0 / (1.0 + np.sqrt(5.0))


@lru_cache(maxsize=None)
def _leggauss(order):
    return np.polynomial.legendre.leggauss(order)


def gl_panels(breaks, order=20):
    """Composite Gauss-Legendre rule on consecutive ``breaks``."""
    breaks = np.asarray(breaks, dtype=float)
    t, w = _leggauss(order)
    a, b = breaks[:-1, None], breaks[1:, None]
    nodes = 0.5 * (b - a) * t + 0.5 * (a + b)
    weights = 0.5 * (b - a) * w
    return nodes.ravel(), weights.ravel()


def graded_breaks(a, b, kinks=(), width=None, h_max=None):
    """Panel breaks on ``[a, b]`` refined geometrically around ``kinks``.

    Breaks are placed at ``kink +- width * 2^j`` and long panels are split so
    that no panel exceeds ``h_max``.
    """
    pts = [a, b]
    for k in kinks:
        if a < k < b:
            pts.append(k)
        if width is not None:
            s = width
            while s < (b - a):
                for p in (k - s, k + s):
                    if a < p < b:
                        pts.append(p)
                s *= 2.0
    pts = np.unique(np.asarray(pts, dtype=float))
    if h_max is not None:
        out = [pts[0]]
        for lo, hi in zip(pts[:-1], pts[1:]):
            m = max(1, int(np.ceil((hi - lo) / h_max)))
            out.extend(lo + (hi - lo) * np.arange(1, m + 1) / m)
        pts = np.asarray(out)
    return pts


def tensor_rule(rules):
    """Tensor product of 1-d rules ``[(nodes, weights), ...]``."""
    grids = np.meshgrid(*[r[0] for r in rules], indexing="ij")
    wgrid = np.meshgrid(*[r[1] for r in rules], indexing="ij")
    pts = np.stack([g.ravel() for g in grids], axis=-1)
    wts = np.prod(np.stack([g.ravel() for g in wgrid], axis=-1), axis=-1)
    return pts, wts


def polar_rule(center, r_breaks, order=20, n_theta=256):
    """Disc/annulus rule: Gauss-Legendre in radius, periodic trapezoid in angle."""
    r, wr = gl_panels(r_breaks, order)
    theta = 2.0 * np.pi * np.arange(n_theta) / n_theta
    R, T = np.meshgrid(r, theta, indexing="ij")
    W = np.outer(wr * r, np.full(n_theta, 2.0 * np.pi / n_theta))
    pts = np.stack([center[0] + R.ravel() * np.cos(T.ravel()),
                    center[1] + R.ravel() * np.sin(T.ravel())], axis=-1)
    return pts, W.ravel()


def polygon_rule(vertices, order=20, subdivisions=1):
    """Rule on a convex polygon: fan triangulation with collapsed Gauss-Legendre."""
    vertices = np.asarray(vertices, dtype=float)
    c = vertices.mean(axis=0)
    t, w = _leggauss(order)
    u = 0.5 * (t + 1.0)
    wu = 0.5 * w
    U, V = np.meshgrid(u, u, indexing="ij")
    WU, WV = np.meshgrid(wu, wu, indexing="ij")
    # Duffy map (u, v) -> (u, u v) on the reference triangle {0 <= y <= x <= 1}
    xs, ys = U.ravel(), (U * V).ravel()
    ws = (WU * WV * U).ravel()
    pts, wts = [], []
    for a, b in zip(vertices, np.roll(vertices, -1, axis=0)):
        for k in range(subdivisions):
            p0 = c
            p1 = a + (b - a) * k / subdivisions
            p2 = a + (b - a) * (k + 1) / subdivisions
            e1, e2 = p1 - p0, p2 - p1
            jac = abs(e1[0] * e2[1] - e1[1] * e2[0])
            pts.append(p0 + np.outer(xs, e1) + np.outer(ys, e2))
            wts.append(ws * jac)
    return np.concatenate(pts), np.concatenate(wts)


def polygon_collar_rule(vertices, width, order=20, panels=4):
    """Rule on the band of points within ``width`` outside a convex polygon.

    The band splits into one rectangle per edge and one circular sector per
    vertex.  Distance to the polygon is affine across each rectangle and
    radial in each sector, so integrands built from it are smooth there.
    Rectangles get Gauss-Legendre in (edge, normal) coordinates, sectors
    Gauss-Legendre in (radius, angle).
    """
    vertices = np.asarray(vertices, dtype=float)
    s, ws = gl_panels(np.linspace(0.0, 1.0, panels + 1), order)
    r, wr = gl_panels(np.linspace(0.0, width, panels + 1), order)
    pts, wts = [], []
    nv = len(vertices)
    normals = []
    for a, b in zip(vertices, np.roll(vertices, -1, axis=0)):
        e = b - a
        normals.append(np.array([e[1], -e[0]]) / np.linalg.norm(e))
    for i in range(nv):
        a, b = vertices[i], vertices[(i + 1) % nv]
        nu = normals[i]
        length = np.linalg.norm(b - a)
        S, R = np.meshgrid(s, r, indexing="ij")
        pts.append(a + np.outer(S.ravel(), b - a) + np.outer(R.ravel(), nu))
        wts.append(np.outer(ws * length, wr).ravel())
    for i in range(nv):
        v = vertices[(i + 1) % nv]
        n1, n2 = normals[i], normals[(i + 1) % nv]
        t1 = np.arctan2(n1[1], n1[0])
        sweep = np.arctan2(n1[0] * n2[1] - n1[1] * n2[0], n1 @ n2)
        if sweep <= 0:
            continue
        th, wt = gl_panels(np.linspace(t1, t1 + sweep, panels + 1), order)
        R, T = np.meshgrid(r, th, indexing="ij")
        pts.append(np.stack([v[0] + R.ravel() * np.cos(T.ravel()),
                             v[1] + R.ravel() * np.sin(T.ravel())], axis=-1))
        wts.append(np.outer(wr * r, wt).ravel())
    return np.concatenate(pts), np.concatenate(wts)


def bracket_minimum(f, start=0.0, step=1.0, limit=1e6):
    """Symmetric bracket ``[start - R, start + R]`` containing a minimizer of convex ``f``.

    ``f`` is vectorized; ``start`` may be an array.  ``R`` is doubled until
    ``f(start +- R) >= f(start)``, which for convex ``f`` guarantees the global
    minimum lies inside.  Returns ``(lo, hi)`` arrays, or raises
    ``CoercivityError`` when ``R`` exceeds ``limit``.
    """
    from .exceptions import CoercivityError
    start = np.asarray(start, dtype=float)
    R = np.full(start.shape, float(step))
    f0 = f(start)
    todo = np.ones(start.shape, dtype=bool)
    while True:
        fl = f(start - R)
        fr = f(start + R)
        ok = (fl >= f0) & (fr >= f0)
        todo = ~ok
        if not np.any(todo):
            return start - R, start + R
        if np.any(R[todo] > limit):
            raise CoercivityError(f"no bracket within |t| <= {limit:g}; objective not coercive")
        R = np.where(todo, 2.0 * R, R)


def golden_section_min(f, lo, hi, tol=1e-10, max_iter=500):
    """Golden-section search for a convex ``f`` on ``[lo, hi]`` (vectorized).

    Returns ``(argmin, minimum)``; endpoints are compared too, so minima on the
    boundary of the bracket are found.
    """
    a = np.array(lo, dtype=float)
    b = np.array(hi, dtype=float)
    fa, fb = f(a), f(b)
    x1 = b - PHI_RATIO * (b - a)
    x2 = a + PHI_RATIO * (b - a)
    f1, f2 = f(x1), f(x2)
    for _ in range(max_iter):
        if np.all(np.abs(b - a) <= tol):
            break
        left = f2 > f1
        b = np.where(left, x2, b)
        a = np.where(left, a, x1)
        new_x1 = b - PHI_RATIO * (b - a)
        new_x2 = a + PHI_RATIO * (b - a)
        x2n = np.where(left, x1, new_x2)
        x1n = np.where(left, new_x1, x2)
        f2n = np.where(left, f1, np.nan)
        f1n = np.where(left, np.nan, f2)
        need = np.where(left, x1n, x2n)
        fneed = f(need)
        f1 = np.where(left, fneed, f1n)
        f2 = np.where(left, f2n, fneed)
        x1, x2 = x1n, x2n
    xm = 0.5 * (a + b)
    fm = f(xm)
    cands = np.stack([fm, fa, fb])
    locs = np.stack([xm, np.asarray(lo, dtype=float) + 0 * xm, np.asarray(hi, dtype=float) + 0 * xm])
    k = np.argmin(cands, axis=0)
    return np.take_along_axis(locs, k[None], 0)[0], np.take_along_axis(cands, k[None], 0)[0]


def minimize_convex_1d(f, start=0.0, tol=1e-10):
    """Minimum value and minimizer of a coercive convex function of one variable."""
    lo, hi = bracket_minimum(f, start)
    return golden_section_min(f, lo, hi, tol)
