"""Command-line front end: ``penreflect run <config.json>`` and ``penreflect list``.

A config is one JSON document validated against :data:`CONFIG_SCHEMA`;
unknown keys are errors.  Each run writes CSV reports and a
``manifest.json`` echoing the resolved config into the output directory.

Exit status: 0 on success, 2 when a checked invariant fails, 1 on an
operational error (bad config, numerical failure).
"""

import argparse
import hashlib
import json
import os
import sys
from pathlib import Path

import jsonschema
import numpy as np

from . import __version__
from . import observables as obs
from .base_system import LinearSystem, build_heat_grid
from .dynamics import IntegratorSpec, simulate_batch
from .exceptions import PenreflectError
from .measures import (GibbsMeasure, ibp_residual, sample_gibbs, sample_restricted_gaussian,
                       sigma_n, tv_by_min_formula)
from .potential import Ball, Box, Halfspaces, NonnegativeCone, Quadratic, YosidaEnvelope
from .semigroup import (convergence_study, estimate_resolvent, kolmogorov_moment_check,
                        stationary_law_convergence, write_csv)

__all__ = ["CONFIG_SCHEMA", "EXPERIMENTS", "run", "list_experiments", "main", "load_config"]

_num = {"type": "number"}
_vec = {"type": "array", "items": _num, "minItems": 1}
_mat = {"type": "array", "items": _vec, "minItems": 1}


def _block(props, required=()):
    return {"type": "object", "properties": props, "required": list(required),
            "additionalProperties": False}


_OBSERVABLE = _block({
    "kind": {"enum": ["coordinate", "cosine", "sine", "constant"]},
    "index": {"type": "integer", "minimum": 0},
    "clip": _num,
    "h": _vec,
    "phase": _num,
    "value": _num,
}, ["kind"])

CONFIG_SCHEMA = _block({
    "experiment": {"type": "string"},
    "master_seed": {"type": "integer", "minimum": 0, "maximum": 2 ** 64 - 1},
    "output_dir": {"type": "string"},
    "system": _block({
        "kind": {"enum": ["matrix", "heat_grid"]},
        "drift": _mat,
        "inner_weight": {"type": "number", "exclusiveMinimum": 0},
        "d": {"type": "integer", "minimum": 2},
        "alpha": {"type": "number", "minimum": 0},
    }, ["kind"]),
    "potential": _block({
        "kind": {"enum": ["none", "box", "cone", "ball", "halfspaces", "quadratic"]},
        "lower": _vec, "upper": _vec,
        "dim": {"type": "integer", "minimum": 1},
        "shift": _num,
        "center": _vec, "radius": {"type": "number", "exclusiveMinimum": 0},
        "normals": _mat, "offsets": _vec,
        "curvature": _vec,
        "n": {"type": "number", "minimum": 0},
        "n_list": {"type": "array", "items": {"type": "number", "exclusiveMinimum": 0}},
    }, ["kind"]),
    "integrator": _block({
        "scheme": {"enum": ["explicit_euler", "splitting_prox"]},
        "dt": {"type": "number", "exclusiveMinimum": 0},
        "t_final": {"type": "number", "minimum": 0},
        "record_times": _vec,
        "oracle_dt": {"type": "number", "exclusiveMinimum": 0},
    }),
    "mc": _block({
        "count": {"type": "integer", "minimum": 1},
        "threads": {"type": "integer", "minimum": 1},
    }),
    "measures": _block({
        "base": {"enum": ["lebesgue", "gaussian"]},
        "quadrature_points": {"type": "integer", "minimum": 2},
        "truncation_sigmas": {"type": "number", "exclusiveMinimum": 0},
        "mcmc_steps": {"type": "integer", "minimum": 1},
        "directions": _mat,
        "tolerance": {"type": "number", "exclusiveMinimum": 0},
        "expected_tv": _num,
        "include_limit": {"type": "boolean"},
    }),
    "semigroup": _block({
        "x": _vec,
        "times": _vec,
        "two_time": {"type": "array", "items": {"type": "array", "items": _num,
                                                  "minItems": 2, "maxItems": 2}},
        "observables": {"type": "array", "items": _OBSERVABLE},
        "lambdas": _vec,
        "lags": _vec,
        "p": {"enum": [2, 4]},
        "anchor": _num,
        "sigmas": {"type": "number", "exclusiveMinimum": 0},
    }),
    "scan": _block({
        "lo": _vec, "hi": _vec,
        "points": {"type": "integer", "minimum": 2},
        "pairs": {"type": "integer", "minimum": 1},
    }),
}, ["experiment", "master_seed"])

EXPERIMENTS = {
    "yosida_scan": ("Envelope monotonicity in n, gradient check and 2n-Lipschitz ratio on a grid "
                    "[Moreau-Yosida approximation]", ["potential", "scan"]),
    "simulate": ("Simulate a penalized ensemble and write its trajectories [penalized equation]",
                 ["system", "potential", "integrator", "mc"]),
    "semigroup_converge": ("Penalized semigroups against the reflected oracle along n "
                           "[semigroup convergence]", ["system", "potential", "semigroup", "mc"]),
    "ibp_check": ("Integration-by-parts residuals of Gibbs measures [boundary measures]",
                  ["potential", "measures"]),
    "tv_formula": ("Total variation by the line-minimum formula versus direct quadrature "
                   "[total variation of Sigma_h]", ["potential", "measures"]),
    "spde_reflect": ("Penalized stochastic heat equation: penetration below -alpha and "
                     "covariance check [reflected SPDE]", ["system", "potential", "integrator", "mc"]),
    "stationary_moments": ("Stationary increment moments and stationary-law gaps "
                           "[Kolmogorov moment bound]", ["system", "potential", "semigroup", "mc"]),
}


class InvariantFailure(Exception):
    """A checked band was violated (exit status 2)."""


def list_experiments():
    lines = []
    for name, (desc, keys) in EXPERIMENTS.items():
        lines.append(f"{name:20s} {desc}")
        lines.append(f"{'':20s} required: experiment, master_seed, {', '.join(keys)}")
    return "\n".join(lines)


def _validate(cfg):
    v = jsonschema.Draft202012Validator(CONFIG_SCHEMA)
    problems = []
    for e in sorted(v.iter_errors(cfg), key=lambda e: list(e.absolute_path)):
        where = "/".join(str(p) for p in e.absolute_path) or "<root>"
        problems.append(f"{where}: {e.message}")
    exp = cfg.get("experiment") if isinstance(cfg, dict) else None
    if exp is not None and exp not in EXPERIMENTS:
        problems.append(f"experiment: unknown experiment {exp!r}; valid options: "
                        + ", ".join(EXPERIMENTS))
    elif exp is not None:
        for key in EXPERIMENTS[exp][1]:
            if key not in cfg:
                problems.append(f"<root>: experiment {exp!r} requires block {key!r}")
    return problems


def load_config(path):
    from .exceptions import ConfigError
    with open(path, encoding="utf-8") as fh:
        cfg = json.load(fh)
    problems = _validate(cfg)
    if problems:
        raise ConfigError(problems)
    return cfg


# -- builders --------------------------------------------------------------------------------


def _system(cfg):
    s = cfg["system"]
    if s["kind"] == "heat_grid":
        d = s.get("d", 64)
        alpha = s.get("alpha", 0.0)
        grid, sys_, _ = build_heat_grid(d, alpha, 0)
        return sys_, grid
    if "drift" not in s:
        raise _config_error("system/drift: required for kind 'matrix'")
    return LinearSystem(s["drift"], inner_weight=s.get("inner_weight", 1.0),
                        require_stable=False), None


def _config_error(msg):
    from .exceptions import ConfigError
    return ConfigError([msg])


def _convex_set(p, dim=None, grid=None):
    k = p["kind"]
    if grid is not None:
        return NonnegativeCone(grid.d, shift=grid.alpha)
    if k == "box":
        return Box(p["lower"], p["upper"])
    if k == "cone":
        return NonnegativeCone(p.get("dim", dim or 1), shift=p.get("shift", 0.0))
    if k == "ball":
        return Ball(p["center"], p["radius"])
    if k == "halfspaces":
        return Halfspaces(p["normals"], p["offsets"])
    return None


def _base_potential(p, dim=None, grid=None):
    if p["kind"] == "quadratic":
        return Quadratic(p["curvature"], p.get("center"))
    if p["kind"] == "none":
        return None
    return _convex_set(p, dim, grid)


def _n_list(p):
    if "n_list" in p:
        return [float(n) for n in p["n_list"]]
    if "n" in p:
        return [float(p["n"])]
    raise _config_error("potential: needs 'n' or 'n_list'")


def _observables(specs, dim):
    out = []
    for o in specs:
        k = o["kind"]
        if k == "coordinate":
            out.append(obs.coordinate(o.get("index", 0), o.get("clip")))
        elif k == "cosine":
            out.append(obs.cosine(o.get("h", [1.0] * dim), o.get("phase", 0.0)))
        elif k == "sine":
            out.append(obs.sine(o.get("h", [1.0] * dim), o.get("phase", 0.0)))
        else:
            out.append(obs.constant(o.get("value", 1.0)))
    return out


def _mc(cfg, threads):
    m = cfg.get("mc", {})
    return m.get("count", 1000), threads or m.get("threads", 1)


def _fmt_n(n):
    return "limit" if n == np.inf else repr(float(n))


# -- experiments -------------------------------------------------------------------------------


def _yosida_scan(cfg, out, threads):
    p = cfg["potential"]
    U = _base_potential(p)
    if U is None:
        raise _config_error("potential: yosida_scan needs a potential")
    sc = cfg["scan"]
    lo, hi = np.asarray(sc["lo"], float), np.asarray(sc["hi"], float)
    m = sc.get("points", 1000)
    rng = np.random.default_rng(np.random.SeedSequence(cfg["master_seed"]))
    x = lo + (hi - lo) * rng.random((m, U.dim))
    ns = sorted(_n_list(p))
    rows, ok = [], True
    prev = None
    for n in ns:
        env = YosidaEnvelope(U, n)
        v = env.value(x)
        viol = 0 if prev is None else int(np.sum(v < prev))
        ok &= viol == 0
        prev = v
        # central differences against the analytic gradient
        eps = 1e-6
        g = env.gradient(x)
        fd = np.stack([(env.value(x + eps * e) - env.value(x - eps * e)) / (2 * eps)
                       for e in np.eye(U.dim)], axis=-1)
        gerr = float(np.max(np.abs(fd - g)))
        k = sc.get("pairs", 1000)
        a = lo + (hi - lo) * rng.random((k, U.dim))
        b = lo + (hi - lo) * rng.random((k, U.dim))
        lip = np.linalg.norm(env.gradient(a) - env.gradient(b), axis=1) / np.linalg.norm(a - b, axis=1)
        lratio = float(np.max(lip) / (2 * n))
        ok &= lratio <= 1 + 1e-9
        rows += [{"n": n, "quantity": "monotonicity_violations", "value": viol, "std_error": 0.0},
                 {"n": n, "quantity": "mean_value", "value": float(v.mean()), "std_error": 0.0},
                 {"n": n, "quantity": "gradient_fd_error", "value": gerr, "std_error": 0.0},
                 {"n": n, "quantity": "lipschitz_ratio_over_2n", "value": lratio, "std_error": 0.0}]
    write_csv(out / "yosida_scan.csv", ["n", "quantity", "value", "std_error"], rows)
    return ok


def _simulate(cfg, out, threads):
    sys_, grid = _system(cfg)
    p = cfg["potential"]
    base = _base_potential(p, sys_.dim, grid)
    n = _n_list(p)[0] if base is not None else None
    env = YosidaEnvelope(base, n, weight=sys_.inner_weight) if base is not None else None
    spec = _spec(cfg, n)
    count, threads = _mc(cfg, threads)
    x0 = np.asarray(cfg.get("semigroup", {}).get("x", [0.0] * sys_.dim), float)
    batch = simulate_batch(sys_, env, spec, x0, count, cfg["master_seed"], threads)
    batch.to_csv(out / "trajectories.csv")
    return bool(np.all(np.isfinite(batch.paths)))


def _spec(cfg, n):
    it = cfg.get("integrator", {})
    scheme = it.get("scheme", "splitting_prox")
    dt = it.get("dt", 1e-3)
    t_final = it.get("t_final", 1.0)
    rec = it.get("record_times")
    return IntegratorSpec(scheme, dt, t_final, n=n, record_times=rec)


def _semigroup_converge(cfg, out, threads):
    sys_, grid = _system(cfg)
    p = cfg["potential"]
    K = _convex_set(p, sys_.dim, grid)
    if K is None:
        raise _config_error("potential: semigroup_converge needs a convex set")
    sg = cfg["semigroup"]
    it = cfg.get("integrator", {})
    count, threads = _mc(cfg, threads)
    phis = _observables(sg.get("observables", [{"kind": "cosine"}]), sys_.dim)
    x = sg.get("x", [0.0] * sys_.dim)
    two = [tuple(t) for t in sg.get("two_time", [])]
    table = convergence_study(sys_, K, _n_list(p), x, sg.get("times", [1.0]), phis, count,
                              cfg["master_seed"], two_time=two, dt=it.get("dt", 1e-3),
                              scheme=it.get("scheme", "splitting_prox"),
                              oracle_dt=it.get("oracle_dt"), threads=threads)
    table.to_csv(out / "semigroup_convergence.csv")
    sig = sg.get("sigmas", 4.0)
    ok = all(table.decreasing(*k, sigmas=sig) and table.final_within(*k, sigmas=sig)
             for k in table.keys())
    if "lambdas" in sg:
        rows = []
        env = YosidaEnvelope(K, max(_n_list(p)), weight=sys_.inner_weight)
        for lam in sg["lambdas"]:
            r = estimate_resolvent(sys_, env, lam, x, phis[0], count, cfg["master_seed"] + 50,
                                   dt=it.get("dt", 1e-3), threads=threads)
            rows.append({"lambda": lam, "value": r.value, "std_error": r.std_error,
                         "bias_bound": r.bias_bound})
        write_csv(out / "resolvent.csv", ["lambda", "value", "std_error", "bias_bound"], rows)
    return ok


def _measure(cfg, n, grid=None):
    p = cfg["potential"]
    m = cfg["measures"]
    base = m.get("base", "lebesgue")
    sys_ = _system(cfg)[0] if base == "gaussian" else None
    U = _base_potential(p, sys_.dim if sys_ else None, grid)
    w = sys_.inner_weight if sys_ is not None else 1.0
    pot = U if n == np.inf else (YosidaEnvelope(U, n, weight=w) if not isinstance(U, Quadratic)
                                 else YosidaEnvelope(U, n, weight=w))
    return GibbsMeasure(pot, base, sys_, order=m.get("quadrature_points", 20),
                        truncation_sigmas=m.get("truncation_sigmas", 9.0))


def _ibp_check(cfg, out, threads):
    m = cfg["measures"]
    ns = _n_list(cfg["potential"]) + ([np.inf] if m.get("include_limit") else [])
    tol = m.get("tolerance", 1e-6)
    rows, ok = [], True
    for n in ns:
        g = _measure(cfg, n)
        d = g.dim
        phis = [obs.coordinate(i) for i in range(d)] + [obs.cosine(np.full(d, 0.7), 0.3),
                                                        obs.product(obs.sine(np.arange(1, d + 1) * 0.5),
                                                                    obs.cosine(np.ones(d)))]
        for j, h in enumerate(m.get("directions", [list(np.eye(d)[0])])):
            sig = sigma_n(g, h)
            for phi in phis:
                r = ibp_residual(g, sig, phi)
                ok &= abs(r.value) <= tol
                rows.append({"n": _fmt_n(n), "quantity": f"ibp[h{j},{phi.name}]",
                             "value": r.value, "std_error": r.std_error})
    write_csv(out / "ibp.csv", ["n", "quantity", "value", "std_error"], rows)
    return ok


def _tv_formula(cfg, out, threads):
    m = cfg["measures"]
    ns = _n_list(cfg["potential"]) if cfg["potential"]["kind"] != "none" else []
    if m.get("include_limit") or not ns:
        ns = ns + [np.inf]
    tol = m.get("tolerance", 1e-6)
    rows, ok = [], True
    prev = -np.inf
    for n in ns:
        if cfg["potential"]["kind"] == "none":
            g = _zero_potential_measure(cfg)
        else:
            g = _measure(cfg, n)
        h = m.get("directions", [list(np.eye(g.dim)[0])])[0]
        tv, se = tv_by_min_formula(g, h)
        direct = sigma_n(g, h).tv
        rows += [{"n": _fmt_n(n), "quantity": "tv_min_formula", "value": tv, "std_error": se},
                 {"n": _fmt_n(n), "quantity": "tv_direct", "value": direct, "std_error": 0.0}]
        ok &= abs(tv - direct) <= tol + 4 * se or n == np.inf
        ok &= tv >= prev - tol
        prev = tv
        if "expected_tv" in m and n == ns[-1]:
            ok &= abs(tv - m["expected_tv"]) <= tol + 4 * se
    write_csv(out / "tv.csv", ["n", "quantity", "value", "std_error"], rows)
    return ok


def _zero_potential_measure(cfg):
    sys_ = _system(cfg)[0]
    # U = 0 is the zero-curvature quadratic
    return GibbsMeasure(Quadratic(0.0, dim=sys_.dim), cfg["measures"].get("base", "gaussian"),
                        sys_, order=cfg["measures"].get("quadrature_points", 20))


def spde_penetration(grid, sys_, n_list, spec, count, master_seed, threads=1):
    """Per-n mean and extreme penetration below ``-alpha`` plus the ensembles."""
    out = {}
    for k, n in enumerate(n_list):
        env = YosidaEnvelope(NonnegativeCone(grid.d, shift=grid.alpha), n, weight=grid.mesh)
        b = simulate_batch(sys_, env, spec, np.zeros(grid.d), count, master_seed + k, threads)
        mins = b.paths.min(axis=(1, 2))
        pen = np.maximum(-grid.alpha - mins, 0.0)
        out[n] = {"min": float(mins.min()), "mean_penetration": float(pen.mean()),
                  "penetration_se": float(pen.std(ddof=1) / np.sqrt(count)), "batch": b}
    return out


def covariance_check(grid, sys_, spec, count, master_seed, threads=1):
    """Entrywise z-scores of the unpenalized sample covariance at ``t_final``.

    Returns ``(max_abs_z, n_beyond_3, m_entries)`` over the upper triangle;
    the reference is the Lyapunov solution ``int_0^t e^{sA} e^{sA} ds``.
    """
    b = simulate_batch(sys_, None, spec, np.zeros(grid.d), count, master_seed, threads)
    x = b.paths[:, -1]
    C = sys_.transition_covariance(float(b.times[-1]))
    xc = x - x.mean(axis=0)
    S = xc.T @ xc / (count - 1)
    var = (np.outer(np.diag(C), np.diag(C)) + C ** 2) / count
    iu = np.triu_indices(grid.d)
    z = (S - C)[iu] / np.sqrt(var[iu])
    return float(np.max(np.abs(z))), int(np.sum(np.abs(z) > 3.0)), len(z)


def familywise_threshold(m, sigmas=3.0):
    """``z`` with ``P(max of m |N(0,1)| <= z) = P(|N(0,1)| <= sigmas)`` (Sidak)."""
    from scipy.special import erf, erfinv
    level = erf(sigmas / np.sqrt(2.0))
    return float(np.sqrt(2.0) * erfinv(level ** (1.0 / m)))


def _spde_reflect(cfg, out, threads):
    sys_, grid = _system(cfg)
    if grid is None:
        raise _config_error("system: spde_reflect needs kind 'heat_grid'")
    ns = sorted(_n_list(cfg["potential"]))
    spec = _spec(cfg, None)
    count, threads = _mc(cfg, threads)
    res = spde_penetration(grid, sys_, ns, spec, count, cfg["master_seed"], threads)
    rows = []
    for n in ns:
        r = res[n]
        rows += [{"n": n, "quantity": "space_time_min", "value": r["min"], "std_error": 0.0},
                 {"n": n, "quantity": "mean_penetration", "value": r["mean_penetration"],
                  "std_error": r["penetration_se"]}]
    zmax, beyond, m = covariance_check(grid, sys_, spec, count, cfg["master_seed"] + 1000, threads)
    rows += [{"n": 0, "quantity": "covariance_max_abs_z", "value": zmax, "std_error": 0.0},
             {"n": 0, "quantity": "covariance_entries_beyond_3sigma", "value": beyond,
              "std_error": 0.0}]
    write_csv(out / "spde_reflect.csv", ["n", "quantity", "value", "std_error"], rows)
    pens = [res[n]["mean_penetration"] for n in ns]
    ok = res[ns[-1]]["min"] >= -grid.alpha - 0.2
    ok &= all(a > b for a, b in zip(pens, pens[1:]))
    ok &= zmax <= familywise_threshold(m)
    return ok


def _stationary_moments(cfg, out, threads):
    sys_, grid = _system(cfg)
    p = cfg["potential"]
    K = _convex_set(p, sys_.dim, grid)
    sg = cfg["semigroup"]
    it = cfg.get("integrator", {})
    count, threads = _mc(cfg, threads)
    steps = cfg.get("measures", {}).get("mcmc_steps", 2000)
    seed = cfg["master_seed"]
    lags = sg.get("lags", [2.0 ** -k for k in range(8)])
    dt = it.get("dt", 2.0 ** -10)
    rows, ok = [], True
    ns = _n_list(p) if K is not None else [0.0]
    for k, n in enumerate(ns):
        if K is None or n == 0:
            env = None
            x0 = _base_draws(sys_, count, seed + 10 + k)
        else:
            env = YosidaEnvelope(K, n, weight=sys_.inner_weight)
            x0 = sample_gibbs(GibbsMeasure(env, "gaussian", sys_), count, seed + 10 + k,
                              burn_in=steps)
        rep = kolmogorov_moment_check(sys_, env, sg.get("p", 2), lags, count, seed + 20 + k, x0,
                                      anchor=sg.get("anchor", 0.0), dt=dt, threads=threads)
        ok &= rep.passed
        rows += rep.rows
    write_csv(out / "moments.csv", ["p", "t", "s", "ratio"], rows)
    if K is not None and sys_.dim == 1 and "times" in sg:
        t = sg["times"][-1]

        def sampler(n, c, s):
            env = YosidaEnvelope(K, n, weight=sys_.inner_weight)
            return sample_gibbs(GibbsMeasure(env, "gaussian", sys_), c, s, burn_in=steps)

        oracle0 = sample_restricted_gaussian(sys_, K, count, seed + 30)
        F = {"X0": lambda P: P[:, 0, 0], f"X0*Xt[{t:g}]": lambda P: P[:, 0, 0] * P[:, -1, 0]}
        law = stationary_law_convergence(sys_, K, _n_list(p), sampler, oracle0, F, [t], count,
                                         seed + 40, dt=dt, threads=threads)
        write_csv(out / "stationary_law.csv", ["n", "quantity", "value", "std_error"], law)
        top = max(_n_list(p))
        ok &= all(r["value"] <= 4 * r["std_error"] for r in law if r["n"] == top)
    return ok


def _base_draws(sys_, count, seed):
    from .base_system import sample_base_gaussian
    from .dynamics import block_generator
    return sample_base_gaussian(sys_, count, block_generator(seed, 0))


_RUNNERS = {
    "yosida_scan": _yosida_scan,
    "simulate": _simulate,
    "semigroup_converge": _semigroup_converge,
    "ibp_check": _ibp_check,
    "tv_formula": _tv_formula,
    "spde_reflect": _spde_reflect,
    "stationary_moments": _stationary_moments,
}


def run(config, threads=None, output_dir=None):
    """Run one experiment; returns the exit status (0, 1 or 2).

    ``config`` is a path or an already-parsed dict.  ``EXPERIMENT_SEED``
    in the environment overrides ``master_seed``.
    """
    from .exceptions import ConfigError
    try:
        if isinstance(config, (str, os.PathLike)):
            cfg = load_config(config)
        else:
            cfg = json.loads(json.dumps(config))
            problems = _validate(cfg)
            if problems:
                raise ConfigError(problems)
        if os.environ.get("EXPERIMENT_SEED"):
            cfg["master_seed"] = int(os.environ["EXPERIMENT_SEED"])
        if output_dir is not None:
            cfg["output_dir"] = str(output_dir)
        out = Path(cfg.get("output_dir", "out"))
        out.mkdir(parents=True, exist_ok=True)
        ok = _RUNNERS[cfg["experiment"]](cfg, out, threads)
        artifacts = {}
        for f in sorted(out.glob("*.csv")):
            artifacts[f.name] = hashlib.sha256(f.read_bytes()).hexdigest()
        resolved = {k: v for k, v in cfg.items() if k != "output_dir"}
        manifest = {"artifact_version": __version__, "config": resolved,
                    "status": "pass" if ok else "invariant_failure", "outputs": artifacts}
        with open(out / "manifest.json", "w", encoding="utf-8", newline="\n") as fh:
            json.dump(manifest, fh, indent=2, sort_keys=True)
            fh.write("\n")
    except ConfigError as e:
        print("config error:\n  " + "\n  ".join(e.problems), file=sys.stderr)
        return 1
    except (PenreflectError, ValueError, OSError, json.JSONDecodeError) as e:
        print(f"error: {type(e).__name__}: {e}", file=sys.stderr)
        return 1
    if not ok:
        print(f"{cfg['experiment']}: invariant band violated (see {out})", file=sys.stderr)
        return 2
    print(f"{cfg['experiment']}: ok ({out})")
    return 0


def main(argv=None):
    ap = argparse.ArgumentParser(prog="penreflect",
                                 description="Penalized and reflected diffusion experiments.")
    sub = ap.add_subparsers(dest="command", required=True)
    r = sub.add_parser("run", help="run an experiment from a JSON config")
    r.add_argument("config")
    r.add_argument("--threads", type=int, default=None)
    r.add_argument("--output-dir", default=None)
    sub.add_parser("list", help="list experiments")
    args = ap.parse_args(argv)
    if args.command == "list":
        print(list_experiments())
        return 0
    return run(args.config, threads=args.threads, output_dir=args.output_dir)


if __name__ == "__main__":
    sys.exit(main())
