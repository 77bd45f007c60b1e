"""Command-line entry point.

Every command writes its documented files plus a manifest echoing the
fully resolved configuration.  Exit codes: 0 success, 2 configuration
error, 3 convergence/capacity error, 4 failed acceptance check (with
--check).  Errors print a single machine-parsable line on stderr.
"""

import argparse
import csv
import dataclasses
import json
import os
import sys
import time

import numpy as np

from . import __version__
from .corrector import solve_corrector
from .environments import (
    EnvironmentSpec,
    drift_field,
    generate_environment,
    load_environment,
    parse_distribution,
    save_environment,
)
from .errors import (
    CapacityError,
    CheckFailure,
    ConfigurationError,
    ConvergenceError,
    RccltError,
    SegmentRangeError,
    UsageError,
)
from .experiments import (
    check_mc_result,
    chi_tail_experiment,
    clt_experiment,
    phi_moment_experiment,
    rate_fit,
    sigma_convergence_experiment,
    spatial_average_variance,
)
from .spectral import build_generator, phi_second_moment_exact, spectral_measure, variance_decay_curve
from .utils import resolve_threads
from .walks import McConfig, run_monte_carlo

_DEFAULT_L = {1: 512, 2: 32, 3: 16, 4: 8}


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        print(f"rcclt: config-error: {message}", file=sys.stderr)
        raise SystemExit(2)


def _add_common(p, seed_default=0):
    p.add_argument("--out", default=None, help="output directory (default $RCCLT_OUT or .)")
    p.add_argument("--threads", type=int, default=None,
                   help="worker threads (default $RCCLT_THREADS or cpu count)")
    p.add_argument("--seed", type=int, default=seed_default, help="master seed")
    p.add_argument("--check", action="store_true",
                   help="run the command's acceptance checks; exit 4 on failure")


def _add_env_args(p, need_L=True):
    p.add_argument("--d", type=int, required=True, help="lattice dimension (1..4)")
    if need_L:
        p.add_argument("--L", type=int, required=True, help="torus side (even)")
    else:
        p.add_argument("--L", type=int, default=None,
                       help="torus side (default depends on d)")
    p.add_argument("--dist", required=True,
                   help="conductance law: constant:c | twopoint:M:p | uniform:M")


def _floats(text):
    return [float(x) for x in text.split(",") if x]


def _ints(text):
    return [int(x) for x in text.split(",") if x]


def build_parser():
    parser = _Parser(prog="rcclt", description=__doc__)
    parser.add_argument("--version", action="version", version=f"rcclt {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-env", help="generate and store one environment")
    _add_env_args(p)
    _add_common(p)

    p = sub.add_parser("solve-corrector", help="solve the regularized corrector")
    _add_env_args(p)
    p.add_argument("--mu", type=float, required=True)
    p.add_argument("--xi", type=_floats, default=None, help="direction, comma floats")
    p.add_argument("--tol", type=float, default=1e-10)
    p.add_argument("--max-iter", type=int, default=None)
    _add_common(p)

    p = sub.add_parser("simulate", help="Monte Carlo over (environment, walk) pairs")
    _add_env_args(p)
    p.add_argument("--t", type=float, required=True, help="horizon")
    p.add_argument("--mu", type=float, default=None, help="regularization (default 1/t)")
    p.add_argument("--n-env", type=int, default=64)
    p.add_argument("--n-walks", type=int, default=64)
    p.add_argument("--xi", type=_floats, default=None)
    p.add_argument("--stationary-start", action="store_true",
                   help="draw the start site uniformly (stationary environment law)")
    _add_common(p)

    p = sub.add_parser("spectral", help="spectral measure of the drift field")
    _add_env_args(p)
    p.add_argument("--xi", type=_floats, default=None)
    _add_common(p)

    p = sub.add_parser("clt", help="Kolmogorov distance along a horizon grid")
    _add_env_args(p, need_L=False)
    p.add_argument("--t", type=_floats, required=True, help="horizon grid, comma floats")
    p.add_argument("--n-env", type=int, default=64)
    p.add_argument("--n-walks", type=int, default=64)
    p.add_argument("--xi", type=_floats, default=None)
    _add_common(p)

    p = sub.add_parser("sigma", help="sigma_mu^2 along a mu grid")
    _add_env_args(p)
    p.add_argument("--mu", type=_floats, required=True, help="mu grid, comma floats")
    p.add_argument("--n-env", type=int, default=64)
    p.add_argument("--xi", type=_floats, default=None)
    _add_common(p)

    p = sub.add_parser("decay", help="semigroup variance decay of the QV density")
    _add_env_args(p)
    p.add_argument("--mu", type=float, required=True)
    p.add_argument("--t", type=_floats, required=True, help="time grid, comma floats")
    p.add_argument("--n-env", type=int, default=100)
    p.add_argument("--xi", type=_floats, default=None)
    _add_common(p)

    p = sub.add_parser("boxvar", help="box-average variance of the energy density")
    _add_env_args(p)
    p.add_argument("--mu", type=float, required=True)
    p.add_argument("--n", type=_ints, required=True, help="box sizes, comma ints")
    p.add_argument("--n-env", type=int, default=100)
    p.add_argument("--xi", type=_floats, default=None)
    _add_common(p)

    p = sub.add_parser("moments", help="E[phi_mu^p] along a mu grid")
    _add_env_args(p)
    p.add_argument("--mu", type=_floats, required=True)
    p.add_argument("--p", type=int, default=4)
    p.add_argument("--n-env", type=int, default=100)
    p.add_argument("--xi", type=_floats, default=None)
    _add_common(p)

    p = sub.add_parser("chi-tail", help="tail of the explicit 1d corrector")
    p.add_argument("--dist", required=True)
    p.add_argument("--eps", type=float, required=True)
    p.add_argument("--n", type=_ints, required=True)
    p.add_argument("--paths", type=int, default=10_000)
    _add_common(p)

    p = sub.add_parser("rate-fit", help="log-log OLS fit of a report column")
    p.add_argument("--in", dest="infile", required=True)
    p.add_argument("--x", required=True, help="abscissa column name")
    p.add_argument("--y", required=True, help="ordinate column name")
    _add_common(p)
    return parser


def _out_dir(args):
    out = args.out or os.environ.get("RCCLT_OUT") or "."
    os.makedirs(out, exist_ok=True)
    return out


def _spec_from_args(args):
    if args.d not in _DEFAULT_L:
        raise ConfigurationError("d", "lattice dimension must be in 1..4")
    L = getattr(args, "L", None)
    if L is None:
        L = _DEFAULT_L[args.d]
    return EnvironmentSpec(
        d=args.d, L=L, distribution=parse_distribution(args.dist), seed=args.seed,
    )


def _xi(args, d):
    if getattr(args, "xi", None) is None:
        return np.eye(d)[0]
    xi = np.asarray(args.xi, dtype=np.float64)
    if xi.shape != (d,):
        raise ConfigurationError("xi", f"expected {d} comma-separated floats")
    return xi


def _write_manifest(out, command, config, outputs, t0, extra=None):
    manifest = {
        "command": command,
        "config": config,
        "master_seed": config.get("seed"),
        "outputs": sorted(outputs),
        "wall_time_s": time.time() - t0,
        "versions": {"rcclt": __version__, "numpy": np.__version__},
    }
    try:
        import numba
        manifest["versions"]["numba"] = numba.__version__
    except ImportError:
        pass
    if extra:
        manifest.update(extra)
    path = os.path.join(out, "manifest.json")
    with open(path, "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True, default=str)
        fh.write("\n")
    return manifest


def _report_checks(checks):
    """Print one line per check; raise CheckFailure if any failed."""
    failed = [name for name, ok, _ in checks if not ok]
    for name, ok, detail in checks:
        print(f"check {name}: {'PASS' if ok else 'FAIL'} ({detail})")
    if failed:
        raise CheckFailure(f"checks failed: {', '.join(failed)}")


def _cmd_gen_env(args):
    t0 = time.time()
    out = _out_dir(args)
    spec = _spec_from_args(args)
    env = generate_environment(spec)
    path = os.path.join(out, "env.rcc1")
    save_environment(env, path)
    config = {"d": spec.d, "L": spec.L, "dist": str(spec.distribution), "seed": spec.seed}
    _write_manifest(out, "gen-env", config, [path, path + ".json"], t0)
    if args.check:
        again = generate_environment(spec)
        checks = [
            ("determinism", env == again, "two generations compared"),
            ("ellipticity",
             bool(env.conductances.min() >= 1.0
                  and env.conductances.max() <= spec.distribution.ceiling),
             f"range [{env.conductances.min():g}, {env.conductances.max():g}]"),
        ]
        _report_checks(checks)
    return 0


def _cmd_solve_corrector(args):
    t0 = time.time()
    out = _out_dir(args)
    spec = _spec_from_args(args)
    xi = _xi(args, spec.d)
    env = generate_environment(spec)
    corr = solve_corrector(env, args.mu, xi, tol=args.tol, max_iter=args.max_iter)
    csv_path = os.path.join(out, "corrector.csv")
    with open(csv_path, "w") as fh:
        fh.write("site_index,phi\n")
        for i, value in enumerate(corr.phi):
            fh.write(f"{i},{value!r}\n")
    meta_path = os.path.join(out, "corrector.json")
    with open(meta_path, "w") as fh:
        json.dump({"mu": corr.mu, "xi": list(corr.xi), "residual": corr.residual_norm,
                   "iterations": corr.iterations}, fh, indent=2, sort_keys=True)
        fh.write("\n")
    config = {"d": spec.d, "L": spec.L, "dist": str(spec.distribution), "seed": spec.seed,
              "mu": args.mu, "xi": list(map(float, xi)), "tol": args.tol}
    _write_manifest(out, "solve-corrector", config, [csv_path, meta_path], t0)
    if args.check:
        checks = [("residual", corr.residual_norm <= args.tol * max(1.0, np.abs(
            drift_field(env, xi).values).max()), f"sup residual {corr.residual_norm:.2e}")]
        if spec.n_sites <= 4096:
            gen = build_generator(env)
            dense = np.linalg.solve(
                args.mu * np.eye(spec.n_sites) - gen.matrix, drift_field(env, xi).values)
            gap = float(np.abs(corr.phi - dense).max())
            checks.append(("dense-oracle", gap <= 1e-8, f"sup difference {gap:.2e}"))
            sm = spectral_measure(gen, drift_field(env, xi))
            exact = phi_second_moment_exact(sm, args.mu)
            mc = float(np.mean(corr.phi ** 2))
            rel = abs(mc - exact) / max(abs(exact), 1e-300)
            checks.append(("resolvent-identity", rel <= 1e-8, f"relative gap {rel:.2e}"))
        _report_checks(checks)
    return 0


def _cmd_simulate(args):
    t0 = time.time()
    out = _out_dir(args)
    spec = _spec_from_args(args)
    xi = _xi(args, spec.d)
    cfg = McConfig(
        n_env=args.n_env, n_walks_per_env=args.n_walks, horizon=args.t,
        mu=args.mu, master_seed=args.seed, stationary_start=args.stationary_start,
    )
    res = run_monte_carlo(cfg, spec, xi=xi, threads=args.threads)
    csv_path = os.path.join(out, "samples.csv")
    res.write_csv(csv_path)
    config = {"d": spec.d, "L": spec.L, "dist": str(spec.distribution), "seed": args.seed,
              "t": args.t, "mu": cfg.resolved_mu(), "n_env": args.n_env,
              "n_walks": args.n_walks, "xi": list(map(float, xi)),
              "stationary_start": args.stationary_start}
    extra = {
        "total_jumps": res.total_jumps(),
        "domination_violations": res.violations,
        "sigma_mu_sq_mean": res.pooled_sigma_sq(),
    }
    _write_manifest(out, "simulate", config, [csv_path], t0, extra)
    if args.check:
        _report_checks(check_mc_result(res))
    return 0


def _cmd_spectral(args):
    t0 = time.time()
    out = _out_dir(args)
    spec = _spec_from_args(args)
    xi = _xi(args, spec.d)
    env = generate_environment(spec)
    gen = build_generator(env)
    field = drift_field(env, xi)
    sm = spectral_measure(gen, field)
    csv_path = os.path.join(out, "spectral.csv")
    with open(csv_path, "w") as fh:
        fh.write("lambda,weight\n")
        for lam, wgt in zip(sm.lambdas, sm.weights):
            fh.write(f"{lam!r},{wgt!r}\n")
    config = {"d": spec.d, "L": spec.L, "dist": str(spec.distribution), "seed": spec.seed,
              "xi": list(map(float, xi))}
    _write_manifest(out, "spectral", config, [csv_path], t0)
    if args.check:
        mass = sm.total()
        mean_sq = float(np.mean(field.values ** 2))
        rel = abs(mass - mean_sq) / max(mean_sq, 1e-300)
        w0 = float(sm.weights[0])
        zero_gap = abs(w0 - field.mean() ** 2)
        _report_checks([
            ("parseval", rel <= 1e-10, f"relative gap {rel:.2e}"),
            ("zero-mode-weight", zero_gap <= 1e-10 * max(1.0, mean_sq),
             f"weight at lambda=0 gap {zero_gap:.2e}"),
        ])
    return 0


def _cmd_clt(args):
    t0 = time.time()
    out = _out_dir(args)
    spec = _spec_from_args(args)
    report = clt_experiment(spec, args.t, args.n_env, args.n_walks,
                            xi=_xi(args, spec.d), threads=args.threads)
    csv_path = os.path.join(out, "report.csv")
    report.write_csv(csv_path)
    config = {"d": spec.d, "L": spec.L, "dist": str(spec.distribution), "seed": args.seed,
              "t": list(args.t), "n_env": args.n_env, "n_walks": args.n_walks}
    extra = {"fit": dataclasses.asdict(report.fit)}
    _write_manifest(out, "clt", config, [csv_path], t0, extra)
    if args.check:
        _report_checks(report.check())
    return 0


def _cmd_sigma(args):
    t0 = time.time()
    out = _out_dir(args)
    spec = _spec_from_args(args)
    rows = sigma_convergence_experiment(spec, args.mu, args.n_env,
                                        xi=_xi(args, spec.d), threads=args.threads)
    csv_path = os.path.join(out, "sigma.csv")
    rows.write_csv(csv_path)
    config = {"d": spec.d, "L": spec.L, "dist": str(spec.distribution), "seed": args.seed,
              "mu": list(args.mu), "n_env": args.n_env}
    extra = {"sigma_sq_exact": rows.sigma_sq_exact}
    _write_manifest(out, "sigma", config, [csv_path], t0, extra)
    if args.check:
        _report_checks(rows.check())
    return 0


def _cmd_decay(args):
    t0 = time.time()
    out = _out_dir(args)
    spec = _spec_from_args(args)
    curve = variance_decay_curve(spec, args.n_env, args.mu, args.t,
                                 xi=_xi(args, spec.d), threads=args.threads)
    csv_path = os.path.join(out, "decay.csv")
    curve.write_csv(csv_path)
    config = {"d": spec.d, "L": spec.L, "dist": str(spec.distribution), "seed": args.seed,
              "mu": args.mu, "t": list(args.t), "n_env": args.n_env}
    extra = {"spectral_gap_mean": curve.mean_gap(), "knee_time": curve.knee_time()}
    _write_manifest(out, "decay", config, [csv_path], t0, extra)
    if args.check:
        _report_checks(curve.check())
    return 0


def _cmd_boxvar(args):
    t0 = time.time()
    out = _out_dir(args)
    spec = _spec_from_args(args)
    rows = spatial_average_variance(spec, args.n_env, args.mu, args.n,
                                    xi=_xi(args, spec.d), threads=args.threads)
    csv_path = os.path.join(out, "boxvar.csv")
    rows.write_csv(csv_path)
    config = {"d": spec.d, "L": spec.L, "dist": str(spec.distribution), "seed": args.seed,
              "mu": args.mu, "n": list(args.n), "n_env": args.n_env}
    _write_manifest(out, "boxvar", config, [csv_path], t0)
    if args.check:
        _report_checks(rows.check())
    return 0


def _cmd_moments(args):
    t0 = time.time()
    out = _out_dir(args)
    spec = _spec_from_args(args)
    rows = phi_moment_experiment(spec, args.mu, p=args.p, n_env=args.n_env,
                                 xi=_xi(args, spec.d), threads=args.threads)
    csv_path = os.path.join(out, "moments.csv")
    rows.write_csv(csv_path)
    config = {"d": spec.d, "L": spec.L, "dist": str(spec.distribution), "seed": args.seed,
              "mu": list(args.mu), "p": args.p, "n_env": args.n_env}
    _write_manifest(out, "moments", config, [csv_path], t0)
    if args.check:
        _report_checks(rows.check())
    return 0


def _cmd_chi_tail(args):
    t0 = time.time()
    out = _out_dir(args)
    dist = parse_distribution(args.dist)
    rows = chi_tail_experiment(dist, args.n, args.eps, n_paths=args.paths,
                               master_seed=args.seed)
    csv_path = os.path.join(out, "chi_tail.csv")
    rows.write_csv(csv_path)
    config = {"dist": str(dist), "eps": args.eps, "n": list(args.n),
              "paths": args.paths, "seed": args.seed}
    _write_manifest(out, "chi-tail", config, [csv_path], t0)
    if args.check:
        _report_checks(rows.check())
    return 0


def _cmd_rate_fit(args):
    t0 = time.time()
    out = _out_dir(args)
    with open(args.infile) as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or args.x not in reader.fieldnames \
                or args.y not in reader.fieldnames:
            raise ConfigurationError("columns", f"{args.infile} lacks {args.x!r}/{args.y!r}")
        pts = [(float(row[args.x]), float(row[args.y])) for row in reader]
    fit = rate_fit(pts)
    path = os.path.join(out, "fit.json")
    with open(path, "w") as fh:
        json.dump(dataclasses.asdict(fit), fh, indent=2, sort_keys=True)
        fh.write("\n")
    config = {"in": args.infile, "x": args.x, "y": args.y, "seed": args.seed}
    _write_manifest(out, "rate-fit", config, [path], t0)
    print(f"slope={fit.slope!r} intercept={fit.intercept!r} r2={fit.r2!r}")
    return 0


_COMMANDS = {
    "gen-env": _cmd_gen_env,
    "solve-corrector": _cmd_solve_corrector,
    "simulate": _cmd_simulate,
    "spectral": _cmd_spectral,
    "clt": _cmd_clt,
    "sigma": _cmd_sigma,
    "decay": _cmd_decay,
    "boxvar": _cmd_boxvar,
    "moments": _cmd_moments,
    "chi-tail": _cmd_chi_tail,
    "rate-fit": _cmd_rate_fit,
}


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return exc.code if exc.code is not None else 0
    if getattr(args, "threads", None) is not None and args.threads < 1:
        print("rcclt: config-error: threads: must be >= 1", file=sys.stderr)
        return 2
    try:
        return _COMMANDS[args.command](args)
    except (ConfigurationError, UsageError) as exc:
        print(f"rcclt: config-error: {exc}", file=sys.stderr)
        return 2
    except (ConvergenceError, CapacityError, SegmentRangeError) as exc:
        print(f"rcclt: solver-error: {exc}", file=sys.stderr)
        return 3
    except CheckFailure as exc:
        print(f"rcclt: check-failure: {exc}", file=sys.stderr)
        return 4
    except OSError as exc:
        print(f"rcclt: io-error: {exc}", file=sys.stderr)
        return 2
    except RccltError as exc:
        print(f"rcclt: error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
