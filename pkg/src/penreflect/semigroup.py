"""Monte Carlo transition semigroups, resolvents and convergence studies.

``P_t phi(x) = E phi(X_t(x))`` is estimated from ensembles produced by
:mod:`penreflect.dynamics`.  A *process* argument selects the dynamics:

* a :class:`~penreflect.potential.YosidaEnvelope` gives the penalized
  equation with that envelope,
* ``None`` gives the unpenalized linear equation,
* a :class:`~penreflect.potential.ConvexSet` gives the reflected process in
  that set (exact in the 1-d half-line cases, projected Euler otherwise).

Every estimate carries the standard error ``sd / sqrt(count)`` and the seed
lineage needed to replay it.
"""

import csv
from dataclasses import dataclass, field

import numpy as np

from .dynamics import IntegratorSpec, simulate_batch, simulate_reflected_oracle
from .potential import ConvexSet

__all__ = ["SemigroupEstimate", "ResolventEstimate", "ConvergenceTable", "MomentReport",
           "FellerReport", "simulate_process", "estimate_semigroup", "estimate_path_functional",
           "estimate_resolvent", "convergence_study", "feller_lipschitz_check",
           "kolmogorov_moment_check", "moment_weights", "exact_increment_moment",
           "moment_constant", "stationary_law_convergence", "write_csv"]


@dataclass
class SemigroupEstimate:
    x: np.ndarray
    t: float
    phi: str
    n: object
    value: float
    std_error: float
    count: int
    seeds: dict = field(default_factory=dict)


@dataclass
class ResolventEstimate:
    lam: float
    x: np.ndarray
    phi: str
    n: object
    value: float
    std_error: float
    horizon: float
    nodes: int
    bias_bound: float
    seeds: dict = field(default_factory=dict)


def _label(process):
    if process is None:
        return 0
    if isinstance(process, ConvexSet):
        return "oracle"
    return process.n


def _default_spec(process, times, dt, scheme):
    times = tuple(float(t) for t in np.atleast_1d(times))
    n = getattr(process, "n", None) if not isinstance(process, ConvexSet) else None
    if scheme == "explicit_euler" and n:
        dt = min(dt, 1.0 / (4.0 * n))
    return IntegratorSpec(scheme, dt, max(times), n=n, record_times=times)


def simulate_process(sys, process, x, times, count, master_seed, dt=1e-3,
                     scheme="splitting_prox", threads=1):
    """Simulate ``count`` paths of the selected process, recording at ``times``."""
    spec = _default_spec(process, times, dt, scheme)
    if isinstance(process, ConvexSet):
        return simulate_reflected_oracle(sys, process, spec, x, count, master_seed, threads)
    return simulate_batch(sys, process, spec, x, count, master_seed, threads)


def _mean_se(vals):
    vals = np.asarray(vals, dtype=float)
    if len(vals) < 2:
        return float(vals.mean()), 0.0
    return float(vals.mean()), float(vals.std(ddof=1) / np.sqrt(len(vals)))


def estimate_semigroup(sys, process, x, t, phi, count, master_seed, dt=1e-3,
                       scheme="splitting_prox", threads=1):
    """Monte Carlo ``P_t phi(x)``; exact (zero error) at ``t = 0``."""
    x = np.atleast_1d(np.asarray(x, dtype=float))
    if t < 0:
        raise ValueError("time must be nonnegative")
    if t == 0:
        x0 = process.project(x) if isinstance(process, ConvexSet) else x
        return SemigroupEstimate(x, 0.0, phi.name, _label(process), float(phi.f(x0[None])[0]),
                                 0.0, count, {"master_seed": int(master_seed)})
    batch = simulate_process(sys, process, x, [t], count, master_seed, dt, scheme, threads)
    value, se = _mean_se(phi.f(batch.paths[:, -1]))
    return SemigroupEstimate(x, float(t), phi.name, _label(process), value, se, count,
                             batch.seed_lineage)


def estimate_path_functional(batch, F):
    """``E F(X_{t_1}, ..., X_{t_k})`` over the recorded times of ``batch``.

    ``F`` receives an array of shape (count, k, d).
    """
    return _mean_se(F(batch.paths))


# -- resolvent ---------------------------------------------------------------------------


def estimate_resolvent(sys, process, lam, x, phi, count, master_seed, horizon=None, bias=1e-3,
                       dt=1e-3, record_dt=None, scheme="splitting_prox", threads=1):
    """``R_lam phi(x) = int_0^inf e^{-lam t} P_t phi(x) dt`` on ``[0, horizon]``.

    One ensemble is simulated; each path contributes a trapezoid sum of
    ``e^{-lam t} phi(X_t)`` over its recorded times.  ``horizon`` defaults to
    the smallest ``T`` with ``e^{-lam T} sup|phi| / lam <= bias``.
    """
    if not lam > 0:
        raise ValueError("lambda must be positive")
    sup = phi.sup_norm
    if horizon is None:
        if not np.isfinite(sup):
            raise ValueError("unbounded phi needs an explicit horizon")
        horizon = max(np.log(max(sup, 1e-300) / (lam * bias)), 0.0) / lam
        horizon = max(horizon, dt)
    record_dt = record_dt if record_dt is not None else max(dt, min(0.01, 0.05 / lam))
    m = max(2, int(np.ceil(horizon / record_dt)))
    k = max(1, int(round(horizon / (m * dt))))
    times = dt * k * np.arange(m + 1)
    x = np.atleast_1d(np.asarray(x, dtype=float))
    batch = simulate_process(sys, process, x, times, count, master_seed, dt, scheme, threads)
    tt = batch.times
    vals = phi.f(batch.paths) * np.exp(-lam * tt)
    trapezoid = getattr(np, "trapezoid", None) or np.trapz
    per_path = trapezoid(vals, tt, axis=1)
    value, se = _mean_se(per_path)
    bias_bound = float(np.exp(-lam * tt[-1]) * sup / lam)
    return ResolventEstimate(lam, x, phi.name, _label(process), value, se, float(tt[-1]),
                             len(tt), bias_bound, batch.seed_lineage)


# -- convergence in n ---------------------------------------------------------------------


@dataclass
class ConvergenceTable:
    """Rows ``(n, t, phi, x_id, gap, std_error, value, oracle_value)``."""

    rows: list

    def series(self, phi, t):
        r = [row for row in self.rows if row["phi"] == phi and row["t"] == t]
        r.sort(key=lambda row: row["n"])
        return r

    def keys(self):
        return sorted({(row["phi"], row["t"]) for row in self.rows}, key=str)

    def decreasing(self, phi, t, sigmas=4.0):
        """Gaps never increase by more than ``sigmas`` combined errors along the n-list."""
        r = self.series(phi, t)
        for a, b in zip(r, r[1:]):
            slack = sigmas * np.hypot(a["std_error"], b["std_error"])
            if b["gap"] > a["gap"] + slack:
                return False
        return True

    def final_within(self, phi, t, sigmas=4.0):
        last = self.series(phi, t)[-1]
        return bool(last["gap"] <= sigmas * last["std_error"])

    def to_csv(self, path):
        write_csv(path, ["n", "t", "phi", "x_id", "gap", "std_error"], self.rows)


def convergence_study(sys, K, n_list, x, times, observables, count, master_seed,
                      envelope_factory=None, two_time=None, dt=1e-3, scheme="splitting_prox",
                      oracle_dt=None, threads=1, x_id=0):
    """Gaps ``|P^n_t phi(x_n) - P_t phi(x)|`` against the reflected oracle in ``K``.

    The penalized processes live on the whole space, so ``x_n = x``; the
    oracle starts from the projection of ``x`` onto ``K``.  ``two_time``
    optionally lists pairs ``(t1, t2)`` for the product functional
    ``E[phi(X_t1) phi(X_t2)]``.  Penalized runs and the oracle use
    independent seeds, and errors are combined in quadrature.
    """
    from .potential import YosidaEnvelope

    if envelope_factory is None:
        def envelope_factory(n):
            return YosidaEnvelope(K, n, weight=sys.inner_weight)
    times = sorted({float(t) for t in times} | {float(t) for p in (two_time or ()) for t in p})
    x = np.atleast_1d(np.asarray(x, dtype=float))
    oracle = simulate_process(sys, K, x, times, count, master_seed + 1,
                              oracle_dt if oracle_dt is not None else dt, scheme, threads)

    def stats(batch):
        out = {}
        for phi in observables:
            for t in times:
                i = int(np.argmin(np.abs(batch.times - t)))
                out[(phi.name, t)] = _mean_se(phi.f(batch.paths[:, i]))
            for t1, t2 in two_time or ():
                i1 = int(np.argmin(np.abs(batch.times - t1)))
                i2 = int(np.argmin(np.abs(batch.times - t2)))
                vals = phi.f(batch.paths[:, i1]) * phi.f(batch.paths[:, i2])
                out[(f"{phi.name}@2", f"{t1:g},{t2:g}")] = _mean_se(vals)
        return out

    ref = stats(oracle)
    rows = []
    for k, n in enumerate(n_list):
        batch = simulate_process(sys, envelope_factory(n), x, times, count,
                                 master_seed + 2 + k, dt, scheme, threads)
        est = stats(batch)
        for (name, t), (v, se) in est.items():
            rv, rse = ref[(name, t)]
            rows.append({"n": n, "t": t, "phi": name, "x_id": x_id, "gap": abs(v - rv),
                         "std_error": float(np.hypot(se, rse)), "value": v, "oracle_value": rv})
    return ConvergenceTable(rows)


# -- Feller-Lipschitz -------------------------------------------------------------------------


@dataclass
class FellerReport:
    rows: list

    @property
    def passed(self):
        return all(r["ok"] for r in self.rows)


def feller_lipschitz_check(sys, process, pairs, times, observables, count, master_seed,
                           dt=1e-3, scheme="splitting_prox", c=1.0, threads=1):
    """Check ``|P_t phi(x) - P_t phi(y)| <= c e^{-omega t} [phi]_Lip |x - y|``.

    Paths from ``x`` and ``y`` share their noise (synchronous coupling), so
    the difference of the two estimates has a small standard error; the
    check allows ``4`` of those errors of slack and the explicit time-step
    factor ``1 + 5 dt omega``.
    """
    rows = []
    for j, (x, y) in enumerate(pairs):
        x = np.atleast_1d(np.asarray(x, dtype=float))
        y = np.atleast_1d(np.asarray(y, dtype=float))
        bx = simulate_process(sys, process, x, times, count, master_seed, dt, scheme, threads)
        by = simulate_process(sys, process, y, times, count, master_seed, dt, scheme, threads)
        dist = float(sys.norm(x - y))
        for i, t in enumerate(bx.times):
            for phi in observables:
                diff, se = _mean_se(phi.f(bx.paths[:, i]) - phi.f(by.paths[:, i]))
                bound = (c * np.exp(-sys.omega * t) * (1 + 5 * dt * sys.omega)
                         * phi.lipschitz * dist / np.sqrt(sys.inner_weight))
                rows.append({"pair": j, "t": float(t), "phi": phi.name, "diff": abs(diff),
                             "std_error": se, "bound": float(bound),
                             "ok": bool(abs(diff) <= bound + 4 * se)})
    return FellerReport(rows)


# -- stationary moment bound ------------------------------------------------------------------


def moment_weights(sys, kind="auto"):
    """Mode weights of the ``H^(1)`` surrogate norm, ordered like ``sys.eigenvalues``.

    ``"inverse_square"`` gives ``1/k^2`` with ``k = 1`` the slowest mode;
    ``"identity"`` gives ones.  ``"auto"`` uses the former for ``d > 2``.
    """
    if kind == "auto":
        kind = "inverse_square" if sys.dim > 2 else "identity"
    if kind == "identity":
        return np.ones(sys.dim)
    if kind != "inverse_square":
        raise ValueError(f"unknown weight kind {kind!r}")
    rank = np.empty(sys.dim)
    rank[np.argsort(-sys.eigenvalues)] = np.arange(1, sys.dim + 1)
    return 1.0 / rank ** 2


def _surrogate_sq_norm(sys, weights, x):
    """``sum_k w_k <x, e_k>^2`` with ``e_k`` orthonormal eigenvectors for the ambient product."""
    coeffs = np.sqrt(sys.inner_weight) * (x @ sys.eigenvectors)
    return np.sum(weights * coeffs ** 2, axis=-1)


def moment_constant(sys, weights):
    """``kappa = sqrt(sum_k w_k)``: ``E|X_t - X_s|^2 <= kappa^2 |t - s|`` for stationary starts."""
    return float(np.sqrt(np.sum(weights)))


def exact_increment_moment(sys, weights, tau):
    """``E|X_{s+tau} - X_s|^2`` of the stationary unpenalized system, mode by mode."""
    lam = sys.eigenvalues
    return float(np.sum(weights * (-np.expm1(lam * abs(tau))) / (-lam)))


@dataclass
class MomentReport:
    p: int
    rows: list
    kappa: float
    constant: float

    @property
    def passed(self):
        return all(r["ok"] for r in self.rows)

    def to_csv(self, path):
        write_csv(path, ["p", "t", "s", "ratio"], self.rows)


def kolmogorov_moment_check(sys, process, p, lags, count, master_seed, initial, anchor=0.0,
                            weights="auto", dt=1e-3, scheme="splitting_prox", threads=1):
    """Ratios ``(E|X_t - X_s|^p)^(1/p) / |t - s|^(1/2)`` from stationary starts.

    ``initial`` holds ``count`` draws from the stationary law (for instance
    from :func:`~penreflect.measures.sample_gibbs`).  Each ratio is
    compared with ``kappa (1 + 4 rel_err)`` for ``p = 2``; for ``p = 4``
    only finiteness is checked and the largest ratio is reported.
    """
    if p not in (2, 4):
        raise ValueError("p must be 2 or 4")
    w = moment_weights(sys, weights) if isinstance(weights, str) else np.asarray(weights)
    kappa = moment_constant(sys, w)
    lags = sorted(float(l) for l in lags)
    times = sorted({anchor} | {anchor + l for l in lags})
    x0 = np.asarray(initial, dtype=float)
    if x0.shape != (count, sys.dim):
        raise ValueError("initial must have shape (count, dim)")
    batch = simulate_process(sys, process, x0, times, count, master_seed, dt, scheme, threads)
    i0 = int(np.argmin(np.abs(batch.times - anchor)))
    rows = []
    for lag in lags:
        i = int(np.argmin(np.abs(batch.times - anchor - lag)))
        tau = float(batch.times[i] - batch.times[i0])
        sq = _surrogate_sq_norm(sys, w, batch.paths[:, i] - batch.paths[:, i0])
        m, se = _mean_se(sq ** (p // 2))
        if tau == 0:
            rows.append({"p": p, "t": float(batch.times[i]), "s": float(batch.times[i0]),
                         "ratio": 0.0, "std_error": 0.0, "moment": m, "ok": m == 0})
            continue
        ratio = m ** (1.0 / p) / np.sqrt(tau)
        rel = se / m / p if m > 0 else 0.0
        ok = np.isfinite(ratio) and (p != 2 or ratio <= kappa * (1 + 4 * rel))
        row = {"p": p, "t": float(batch.times[i]), "s": float(batch.times[i0]),
               "ratio": float(ratio), "std_error": float(ratio * rel), "moment": m, "ok": bool(ok)}
        if process is None and sys.stable:
            row["exact_ratio"] = np.sqrt(exact_increment_moment(sys, w, tau) / tau)
        rows.append(row)
    const = max((r["ratio"] for r in rows), default=0.0)
    return MomentReport(p, rows, kappa, const)


def stationary_law_convergence(sys, K, n_list, initial_sampler, oracle_initial, functionals,
                               times, count, master_seed, dt=1e-3, scheme="splitting_prox",
                               threads=1):
    """Gaps in ``E F(X_0, X_t1, ...)`` between stationary penalized runs and the oracle.

    ``initial_sampler(n, count, seed)`` returns stationary starts for the
    penalized process of index ``n``; ``oracle_initial`` holds starts for
    the reflected process.  ``functionals`` maps names to ``F`` acting on
    arrays (count, len(times), d).
    """
    from .potential import YosidaEnvelope

    times = sorted({0.0} | {float(t) for t in times})
    ob = simulate_process(sys, K, oracle_initial, times, count, master_seed + 1, dt, scheme,
                          threads)
    ref = {name: estimate_path_functional(ob, F) for name, F in functionals.items()}
    rows = []
    for k, n in enumerate(n_list):
        x0 = initial_sampler(n, count, master_seed + 100 + k)
        env = YosidaEnvelope(K, n, weight=sys.inner_weight)
        b = simulate_process(sys, env, x0, times, count, master_seed + 2 + k, dt, scheme, threads)
        for name, F in functionals.items():
            v, se = estimate_path_functional(b, F)
            rv, rse = ref[name]
            rows.append({"n": n, "quantity": name, "value": abs(v - rv),
                         "std_error": float(np.hypot(se, rse)), "estimate": v, "oracle": rv})
    return rows


def write_csv(path, columns, rows):
    """CSV with a header, ``,`` separator, LF line ends and ``repr`` floats."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for r in rows:
            w.writerow([_fmt(r[c]) for c in columns])


def _fmt(v):
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, (np.integer,)):
        return str(int(v))
    return str(v)
