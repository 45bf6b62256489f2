"""Command-line interface.

Exit status: 0 on success, 1 on input or usage errors, 2 when a bound
certificate fails. Every run that writes a file also writes
``<file>.meta.json`` with the version, seed and numerical tolerances; runs
writing to stdout send that record to stderr instead.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
from pathlib import Path

import numpy as np

from . import __version__
from . import asymptotics, bounds, experiments, io
from .errors import InputError, NumericError
from .estimators import ridge_shrinkage, flow_shrinkage
from .risk import (
    ESTIMATION,
    FLAVOR_KINDS,
    OUT_OF_SAMPLE,
    GRID_HI,
    GRID_LO,
    GRID_N,
    PriorModel,
    RiskFlavor,
    log_grid,
    risk_curve,
)
from .spectral import decompose

COMMANDS = ("riskcurve", "bounds", "asymptotic", "simulate", "calibrate", "heatmap", "constants")

TOLERANCES = {
    "rank_threshold": "p * machine_epsilon * s_max",
    "bound_slack": bounds.SLACK,
    "calibration_rtol": 1e-10,
    "mp_quadrature_nodes": asymptotics.DEFAULT_NODES,
    "transform_tol": asymptotics.TRANSFORM_TOL,
    "optimal_t_rtol": 1e-6,
}


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: error: {message}\n{self.format_usage()}")


# -- argument groups ------------------------------------------------------------


def _add_grid(p):
    g = p.add_argument_group("tuning grid")
    g.add_argument("--grid-lo", type=float, default=GRID_LO, help="smallest grid value (default 2^-10)")
    g.add_argument("--grid-hi", type=float, default=GRID_HI, help="largest grid value (default 2^10)")
    g.add_argument("--grid-n", type=int, default=GRID_N, help="number of log-spaced grid points (default 200)")


def _add_model(p):
    g = p.add_argument_group("model")
    g.add_argument("--sigma2", type=float, default=1.0, help="noise variance (default 1)")
    g.add_argument("--r2", type=float, default=1.0, help="prior signal strength r^2 (default 1)")
    g.add_argument("--flavor", choices=FLAVOR_KINDS, default=ESTIMATION, help="risk flavor (default estimation)")


def _add_design(p, fixed=True):
    g = p.add_argument_group("design", "read X from --design, or draw a synthetic one from the other flags")
    g.add_argument("--design", metavar="CSV", help="design matrix CSV (one optional header line)")
    g.add_argument("--cov", metavar="CSV", help="population covariance for out-of-sample risk with --design (default I)")
    g.add_argument("--dist", choices=experiments.DISTRIBUTIONS, default="gaussian", help="entry distribution")
    g.add_argument("--n", type=int, default=100, help="synthetic sample count (default 100)")
    g.add_argument("--p", type=int, default=50, help="synthetic feature count (default 50)")
    g.add_argument("--rho", type=float, default=0.0, help="synthetic equicorrelation (default 0)")
    g.add_argument("--seed", type=int, default=0, help="seed for the synthetic design (default 0)")
    if fixed:
        g.add_argument("--beta0", metavar="CSV", help="fixed coefficient vector; Bayes risk when omitted")
        g.add_argument(
            "--exploratory",
            action="store_true",
            help="allow fixed-beta0 out-of-sample pathwise ratios (reported, never asserted)",
        )


def _add_common(p):
    p.add_argument("-o", "--output", metavar="PATH", help="output file (default stdout)")
    p.add_argument("--config", metavar="FILE", help="flat 'key = value' file; keys mirror the long flags")
    p.add_argument("--threads", type=int, default=1, help="worker cap for independent runs (default 1)")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="gfridge", description="Risk curves and bound certificates for gradient flow vs. ridge.")
    parser.add_argument("--version", action="version", version=f"gfridge {__version__}")
    sub = parser.add_subparsers(dest="command", metavar="COMMAND", parser_class=_Parser)

    p = sub.add_parser("riskcurve", help="finite-sample risk curves as CSV")
    _add_common(p)
    _add_design(p)
    _add_model(p)
    _add_grid(p)
    p.add_argument(
        "--estimator",
        choices=("both", "flow", "ridge"),
        default="both",
        help="'both' writes flow rows at t then ridge rows at lambda = 1/t (default)",
    )

    p = sub.add_parser("bounds", help="bound certificates as JSON")
    _add_common(p)
    _add_design(p)
    _add_model(p)
    _add_grid(p)
    p.add_argument("--curve", metavar="CSV", help="check the pathwise bound on a riskcurve CSV instead of a design")
    p.add_argument(
        "--bound",
        choices=("pathwise", "optimal", "scalar", "all"),
        default="all",
        help="which certificates to produce (default all)",
    )

    p = sub.add_parser("asymptotic", help="Marchenko-Pastur limiting risk curves as CSV")
    _add_common(p)
    _add_model(p)
    _add_grid(p)
    p.add_argument("--gamma", type=float, required=False, default=0.5, help="aspect ratio p/n (default 0.5)")
    p.add_argument("--estimator", choices=("both", "flow", "ridge"), default="both", help="as for riskcurve")

    p = sub.add_parser("simulate", help="run a synthetic experiment: curves for both calibrations plus a summary")
    _add_common(p)
    g = p.add_argument_group("experiment")
    g.add_argument("--dist", choices=experiments.DISTRIBUTIONS, default="gaussian", help="entry distribution")
    g.add_argument("--n", type=int, default=500, help="sample count (default 500)")
    g.add_argument("--p", type=int, default=1000, help="feature count (default 1000)")
    g.add_argument("--rho", type=float, default=0.0, help="equicorrelation (default 0)")
    g.add_argument("--seed", type=int, default=0, help="design seed (default 0)")
    g.add_argument("--seeds", help="comma-separated seeds; overrides --seed and adds an aggregate summary")
    g.add_argument("--limits", choices=("auto", "on", "off"), default="auto", help="MP overlays (auto: when rho = 0)")
    g.add_argument("--outdir", default=".", help="directory for CSV and JSON outputs (default .)")
    _add_model(p)
    _add_grid(p)

    p = sub.add_parser("calibrate", help="pair flow times with ridge lambdas of equal expected l2 norm")
    _add_common(p)
    _add_design(p, fixed=False)
    _add_model(p)
    _add_grid(p)

    p = sub.add_parser("heatmap", help="shrinkage maps over (s, kappa): g_ridge at lambda = 1/kappa, g_flow at t = kappa")
    _add_common(p)
    p.add_argument("--s-lo", type=float, default=0.0, help="smallest eigenvalue (default 0)")
    p.add_argument("--s-hi", type=float, default=4.0, help="largest eigenvalue (default 4)")
    p.add_argument("--s-n", type=int, default=101, help="eigenvalue points, linear spacing (default 101)")
    p.add_argument("--kappa-lo", type=float, default=2.0**-5, help="smallest kappa (default 2^-5)")
    p.add_argument("--kappa-hi", type=float, default=2.0**5, help="largest kappa (default 2^5)")
    p.add_argument("--kappa-n", type=int, default=101, help="kappa points, log spacing (default 101)")

    p = sub.add_parser("constants", help="recompute the bound constants and compare with the published values")
    _add_common(p)
    p.add_argument("--json", action="store_true", help="emit JSON instead of a text table")
    return parser


# -- config files ------------------------------------------------------------------


def _apply_config(parser, argv):
    """Fold ``--config`` values into the subcommand defaults; explicit flags still win."""
    ns, _ = _prescan(argv)
    if ns is None:
        return
    cmd, cfg_path = ns
    values = io.read_config(cfg_path)
    sub = _subparser(parser, cmd)
    actions = {a.dest: a for a in sub._actions}
    defaults = {}
    for key, raw in values.items():
        act = actions.get(key)
        if act is None or key in ("config", "help"):
            raise InputError(f"{cfg_path}: unknown key {key!r}")
        if isinstance(act, argparse._StoreTrueAction):
            low = raw.strip().lower()
            if low not in ("true", "false", "1", "0", "yes", "no"):
                raise InputError(f"{cfg_path}: {key} must be a boolean")
            defaults[key] = low in ("true", "1", "yes")
        else:
            defaults[key] = raw.strip()
            if act.choices is not None and defaults[key] not in act.choices:
                raise InputError(f"{cfg_path}: {key} must be one of {list(act.choices)}")
    sub.set_defaults(**defaults)


def _prescan(argv):
    if not argv or argv[0] not in COMMANDS:
        return None, None
    for i, a in enumerate(argv):
        if a == "--config" and i + 1 < len(argv):
            return (argv[0], argv[i + 1]), None
        if a.startswith("--config="):
            return (argv[0], a.split("=", 1)[1]), None
    return None, None


def _subparser(parser, cmd):
    for act in parser._actions:
        if isinstance(act, argparse._SubParsersAction):
            return act.choices[cmd]
    raise KeyError(cmd)


# -- helpers ---------------------------------------------------------------------


def _grid(args):
    if args.grid_n < 1:
        raise InputError("--grid-n must be at least 1")
    if not (0 < args.grid_lo <= args.grid_hi):
        raise InputError("need 0 < --grid-lo <= --grid-hi")
    return log_grid(args.grid_lo, args.grid_hi, args.grid_n)


def _inverse(grid):
    return [math.inf if t == 0 else 1.0 / t for t in grid]


def _load_design(args):
    """Returns ``(X, population_cov or None, seed or None)``."""
    if args.design:
        X, _ = io.read_design_csv(args.design)
        cov = None
        if args.cov:
            cov, _ = io.read_design_csv(args.cov)
            if cov.shape != (X.shape[1], X.shape[1]):
                raise InputError(f"--cov must be {X.shape[1]}x{X.shape[1]}")
        return X, cov, None
    cfg = experiments.ExperimentConfig(dist=args.dist, n=args.n, p=args.p, rho=args.rho, seed=args.seed)
    return experiments.generate_design(cfg), cfg.population_cov() if args.rho != 0 else None, args.seed


def _flavor(args, p, cov):
    if args.flavor == OUT_OF_SAMPLE:
        return RiskFlavor(OUT_OF_SAMPLE, np.eye(p) if cov is None else cov)
    return RiskFlavor(args.flavor)


def _beta0(args, p):
    if not getattr(args, "beta0", None):
        return None
    b = io.read_vector(args.beta0)
    if b.size != p:
        raise InputError(f"--beta0 has length {b.size}, expected p = {p}")
    return b


def _meta(args, argv, seed=None, extra=None) -> dict:
    out = {
        "version": __version__,
        "command": args.command,
        "argv": list(argv),
        "seed": seed,
        "tolerances": TOLERANCES,
    }
    if extra:
        out.update(extra)
    return out


def _emit_csv(args, argv, rows, columns=None, seed=None, extra=None):
    meta = _meta(args, argv, seed, extra)
    if args.output:
        if columns is None:
            io.write_curve_csv(args.output, rows)
        else:
            io.write_rows(args.output, rows, columns)
        io.write_json(args.output + ".meta.json", meta)
    else:
        import csv

        rows = list(rows)
        if columns is None:
            columns = list(io.CURVE_COLUMNS)
            if any(io.LIMIT_COLUMN in r for r in rows):
                columns.append(io.LIMIT_COLUMN)
        w = csv.writer(sys.stdout, lineterminator="\n")
        w.writerow(columns)
        for r in rows:
            w.writerow([io.format_value(r.get(c, "")) for c in columns])
        sys.stderr.write(json.dumps(meta, default=str) + "\n")


def _emit_json(args, argv, obj, seed=None):
    if args.output:
        io.write_json(args.output, obj)
        io.write_json(args.output + ".meta.json", _meta(args, argv, seed))
    else:
        sys.stdout.write(io.dumps(obj))


# -- subcommands -------------------------------------------------------------------


def cmd_riskcurve(args, argv) -> int:
    X, cov, seed = _load_design(args)
    sd = decompose(X)
    prior = PriorModel(args.sigma2, args.r2, sd.n, sd.p)
    flavor = _flavor(args, sd.p, cov)
    beta0 = _beta0(args, sd.p)
    grid = _grid(args)
    rows = []
    if args.estimator == "both":
        rows += risk_curve(sd, prior, "flow", grid, flavor, beta0, calibration="inverse").rows()
        rows += risk_curve(sd, prior, "ridge", _inverse(grid), flavor, beta0, calibration="inverse").rows()
    else:
        rows += risk_curve(sd, prior, args.estimator, grid, flavor, beta0).rows()
    extra = {"risk": "bayes" if beta0 is None else "fixed", "flavor": flavor.kind}
    _emit_csv(args, argv, rows, seed=seed, extra=extra)
    return 0


def _certificates_from_curve(args) -> list:
    rows = [r for r in io.read_curve_csv(args.curve) if not r.get(io.LIMIT_COLUMN, False)]
    meta_path = Path(args.curve + ".meta.json")
    if meta_path.exists():
        meta = json.loads(meta_path.read_text(encoding="utf-8"))
        if meta.get("risk") == "fixed" and meta.get("flavor") == OUT_OF_SAMPLE and not args.exploratory:
            raise InputError(
                "the pathwise bound is only established for Bayes out-of-sample risk; "
                "rerun with --exploratory to report fixed-beta0 out-of-sample ratios"
            )
        asserted = not (meta.get("risk") == "fixed" and meta.get("flavor") == OUT_OF_SAMPLE)
    else:
        asserted = True
    flow = [r for r in rows if r["estimator"] == "flow"]
    ridge = [r for r in rows if r["estimator"] == "ridge"]
    if not flow or len(flow) != len(ridge):
        raise InputError("curve CSV needs matching flow and ridge rows (write it with --estimator both)")
    for f, r in zip(flow, ridge):
        expect = math.inf if f["tuning"] == 0 else 1.0 / f["tuning"]
        if r["tuning"] != expect:
            raise InputError(f"ridge row at lambda={r['tuning']} is not paired with t={f['tuning']} by lambda = 1/t")
    ratios = []
    for f, r in zip(flow, ridge):
        if r["total"] <= 0:
            raise InputError(f"ridge risk is zero at lambda = {r['tuning']}")
        ratios.append(f["total"] / r["total"])
    tunings = [f["tuning"] for f in flow]
    return [bounds.certificate_from_ratios("pathwise-1.6862", tunings, ratios, asserted)]


def cmd_bounds(args, argv) -> int:
    seed = None
    if args.curve:
        if args.bound not in ("pathwise", "all"):
            raise InputError("--curve supports only the pathwise bound")
        certs = _certificates_from_curve(args)
    else:
        certs = []
        if args.bound in ("pathwise", "optimal", "all"):
            X, cov, seed = _load_design(args)
            sd = decompose(X)
            prior = PriorModel(args.sigma2, args.r2, sd.n, sd.p)
            flavor = _flavor(args, sd.p, cov)
            beta0 = _beta0(args, sd.p)
            if args.bound in ("pathwise", "all"):
                certs.append(bounds.pathwise_ratio_check(sd, prior, flavor, _grid(args), beta0, args.exploratory))
            if args.bound in ("optimal", "all"):
                if beta0 is not None:
                    raise InputError("the optimal-tuning bound is stated for Bayes risk; drop --beta0")
                certs.append(bounds.optimal_ratio_check(sd, prior, flavor))
        if args.bound in ("scalar", "all"):
            certs += bounds.constant_certificates()
    _emit_json(args, argv, [c.to_json() for c in certs], seed)
    return 2 if any(c.holds is False for c in certs) else 0


def cmd_asymptotic(args, argv) -> int:
    law = asymptotics.MPLaw(args.gamma)
    if args.sigma2 <= 0 or args.r2 <= 0:
        raise InputError("--sigma2 and --r2 must be positive")
    alpha0 = args.r2 / (args.sigma2 * law.gamma)
    grid = _grid(args)
    kind = ESTIMATION if args.flavor == OUT_OF_SAMPLE else args.flavor
    rows = []
    if args.estimator == "both":
        parts = [("flow", grid, "inverse"), ("ridge", _inverse(grid), "inverse")]
    else:
        parts = [(args.estimator, grid, "none")]
    for est, tunings, cal in parts:
        for row in asymptotics.limiting_rows(law, alpha0, args.sigma2, est, tunings, kind, cal):
            rows.append(dict(row, flavor=args.flavor))
    _emit_csv(args, argv, rows, extra={"gamma": law.gamma, "alpha0": alpha0})
    return 0


def _experiment_config(args, seed):
    return experiments.ExperimentConfig(
        dist=args.dist,
        n=args.n,
        p=args.p,
        rho=args.rho,
        sigma2=args.sigma2,
        r2=args.r2,
        seed=seed,
        flavor=args.flavor,
        grid_lo=args.grid_lo,
        grid_hi=args.grid_hi,
        grid_n=args.grid_n,
    )


def _parse_seeds(text):
    try:
        seeds = [int(s) for s in text.split(",") if s.strip()]
    except ValueError:
        raise InputError(f"--seeds must be comma-separated integers, got {text!r}") from None
    if not seeds:
        raise InputError("--seeds is empty")
    return seeds


def cmd_simulate(args, argv) -> int:
    _grid(args)
    seeds = _parse_seeds(args.seeds) if args.seeds else [args.seed]
    base = _experiment_config(args, seeds[0])
    limits = {"auto": None, "on": True, "off": False}[args.limits]
    if limits and base.rho != 0:
        raise InputError("MP overlays need rho = 0 (identity covariance)")
    outdir = Path(args.outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    configs = [_experiment_config(args, s) for s in seeds]
    if args.threads > 1 and len(configs) > 1:
        from concurrent.futures import ThreadPoolExecutor

        with ThreadPoolExecutor(max_workers=args.threads) as pool:
            results = list(pool.map(lambda c: experiments.run_experiment(c, limits), configs))
    else:
        results = [experiments.run_experiment(c, limits) for c in configs]
    summaries = []
    for cfg, res in zip(configs, results):
        stem = outdir / f"{cfg.dist}_n{cfg.n}_p{cfg.p}_rho{cfg.rho:g}_{cfg.flavor}_seed{cfg.seed}"
        io.write_curve_csv(f"{stem}_inverse.csv", res.inverse_rows())
        io.write_curve_csv(f"{stem}_l2.csv", res.l2_rows())
        io.write_json(f"{stem}_summary.json", res.summary.to_json())
        io.write_json(f"{stem}.meta.json", _meta(args, argv, cfg.seed))
        summaries.append(res.summary.to_json())
    out = summaries[0] if len(summaries) == 1 else {"runs": summaries, "aggregate": _aggregate(summaries)}
    if len(summaries) > 1:
        io.write_json(outdir / "aggregate_summary.json", out)
    if args.output:
        io.write_json(args.output, out)
    else:
        sys.stdout.write(io.dumps(out))
    return 0


def _aggregate(summaries):
    agg = {}
    for key in ("max_pathwise_ratio", "ratio_of_minima", "max_l2calibrated_ratio"):
        v = np.array([s[key] for s in summaries], dtype=float)
        agg[key] = {"mean": float(np.mean(v)), "std": float(np.std(v, ddof=1)), "min": float(v.min()), "max": float(v.max())}
    return agg


def cmd_calibrate(args, argv) -> int:
    X, cov, seed = _load_design(args)
    sd = decompose(X)
    prior = PriorModel(args.sigma2, args.r2, sd.n, sd.p)
    flavor = _flavor(args, sd.p, cov)
    flow = risk_curve(sd, prior, "flow", _grid(args), flavor)
    rows = [r.to_dict() for r in experiments.calibrate_by_l2(flow, sd, prior, flavor)]
    cols = ["t", "lambda", "l2_norm", "risk_flow", "risk_ridge", "ratio", "matched"]
    _emit_csv(args, argv, rows, cols, seed=seed)
    return 0


def cmd_heatmap(args, argv) -> int:
    if args.s_n < 1 or args.kappa_n < 1:
        raise InputError("grid sizes must be positive")
    if not (0 <= args.s_lo <= args.s_hi) or not (0 < args.kappa_lo <= args.kappa_hi):
        raise InputError("need 0 <= s-lo <= s-hi and 0 < kappa-lo <= kappa-hi")
    s = np.linspace(args.s_lo, args.s_hi, args.s_n)
    rows = []
    for kappa in np.geomspace(args.kappa_lo, args.kappa_hi, args.kappa_n):
        gr = ridge_shrinkage(s, 1.0 / kappa)
        gf = flow_shrinkage(s, kappa)
        rows += [{"s": a, "kappa": kappa, "g_ridge": b, "g_flow": c} for a, b, c in zip(s, gr, gf)]
    _emit_csv(args, argv, rows, ["s", "kappa", "g_ridge", "g_flow"])
    return 0


def cmd_constants(args, argv) -> int:
    c = bounds.recompute_constants()
    table = [
        {"name": key, "published": bounds.PUBLISHED[key], "recomputed": c[key], "abs_diff": abs(c[key] - bounds.PUBLISHED[key])}
        for key in ("c1", "C", "c1_squared", "one_plus_C_squared")
    ]
    certs = bounds.constant_certificates(c)
    if args.json:
        _emit_json(args, argv, {"constants": table, "certificates": [x.to_json() for x in certs]})
    else:
        lines = [f"{'name':<20}{'published':>12}{'recomputed':>14}{'abs_diff':>12}"]
        for r in table:
            lines.append(f"{r['name']:<20}{r['published']:>12.4f}{r['recomputed']:>14.7f}{r['abs_diff']:>12.2e}")
        text = "\n".join(lines) + "\n"
        if args.output:
            Path(args.output).write_text(text, encoding="utf-8")
            io.write_json(args.output + ".meta.json", _meta(args, argv))
        else:
            sys.stdout.write(text)
    return 2 if any(x.holds is False for x in certs) else 0


HANDLERS = {
    "riskcurve": cmd_riskcurve,
    "bounds": cmd_bounds,
    "asymptotic": cmd_asymptotic,
    "simulate": cmd_simulate,
    "calibrate": cmd_calibrate,
    "heatmap": cmd_heatmap,
    "constants": cmd_constants,
}


def run(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        _apply_config(parser, argv)
        args = parser.parse_args(argv)
        if args.command is None:
            raise UsageError(parser.format_usage() + "gfridge: error: a subcommand is required\n")
        if getattr(args, "threads", 1) < 1:
            raise InputError("--threads must be at least 1")
        return HANDLERS[args.command](args, argv)
    except SystemExit as exc:  # --help / --version
        return int(exc.code or 0)
    except UsageError as exc:
        sys.stderr.write(str(exc))
        return 1
    except (InputError, NumericError, OSError) as exc:
        sys.stderr.write(f"gfridge: error: {exc}\n")
        return 1


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
