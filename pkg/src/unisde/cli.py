"""Command-line entry point.

Subcommands: validate-boundary, simulate, moments, verify, transition.
Every run that writes files also writes a ``<out>.meta.json`` sidecar with
the fully resolved options (replayable via ``--config``), the tool version
and a timestamp; the data files themselves carry no timestamps so reruns
are byte-identical.

Exit codes: 0 success, 1 configuration error (nothing written), 2 a
verification suite failed (reports still written).
"""
from __future__ import annotations

import argparse
import datetime
import json
import sys

from . import __version__, analysis, moments
from .boundary import BoundaryError, parse_boundary
from .processes import ProcessError, parse_process
from .simulate import (
    ConfigError,
    Marginals,
    SimConfig,
    TimeGrid,
    default_threads,
    euler_simulate,
    parse_initial,
    parse_store,
)


class CliError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise CliError(message)


def _fmt(x: float) -> str:
    return format(x, ".17g")


def _float_list(text: str):
    try:
        return [float(v) for v in str(text).split(",") if str(v).strip()]
    except ValueError:
        raise CliError(f"expected a comma-separated list of numbers, got {text!r}")


def _int_list(text: str):
    try:
        return [int(v) for v in str(text).split(",") if str(v).strip()]
    except ValueError:
        raise CliError(f"expected a comma-separated list of integers, got {text!r}")


def _build_parser():
    parser = _Parser(prog="unisde",
                     description="Diffusions with uniform marginal laws: "
                                 "simulate, evaluate exact moments, verify.")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="subcommand", required=True)

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON file (or a run sidecar) supplying "
                                         "defaults for any flag")
    common.add_argument("--threads", type=int, default=None,
                        help="worker-thread cap (results do not depend on it)")

    p = sub.add_parser("validate-boundary", parents=[common],
                       help="classify a boundary's solvability regime")
    p.add_argument("--boundary")
    p.add_argument("--horizon", type=float, default=None)

    p = sub.add_parser("simulate", parents=[common],
                       help="Monte Carlo simulation to CSV")
    p.add_argument("--process")
    p.add_argument("--boundary", default="")
    p.add_argument("--t0", type=float, default=None)
    p.add_argument("--t-end", type=float, default=None)
    p.add_argument("--dt", type=float, default=None)
    p.add_argument("--paths", type=int, default=None)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--initial", default=None,
                   help="uniform | point:X0 | cond:s=S,z=Z (default: regime-appropriate)")
    p.add_argument("--store", default=None,
                   help="full | terminal | marginals:t1,t2,...")
    p.add_argument("--sampler", choices=["euler", "time-change"], default=None)
    p.add_argument("--out")

    p = sub.add_parser("moments", parents=[common],
                       help="exact conditional moments (table or coefficient matrix)")
    p.add_argument("--alpha", type=int, default=None,
                   help="print the order-N coefficient matrix as exact fractions")
    p.add_argument("--n", type=int, default=None, help="largest order in the table")
    p.add_argument("--boundary", default=None)
    p.add_argument("--s", type=float, default=None)
    p.add_argument("--t", type=float, default=None)
    p.add_argument("--z", type=float, default=None)
    p.add_argument("--oracle", choices=["ode", "none"], default=None)
    p.add_argument("--substeps", type=int, default=None)
    p.add_argument("--mc", type=int, default=None,
                   help="optionally add a Monte Carlo column with this many paths")
    p.add_argument("--dt", type=float, default=None)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out", default=None, help="CSV path (default: stdout)")

    p = sub.add_parser("verify", parents=[common],
                       help="run a statistical verification suite")
    p.add_argument("--suite", choices=["marginals", "moments", "activity",
                                       "occupation", "limitlaw"])
    p.add_argument("--process", default=None)
    p.add_argument("--boundary", default=None)
    p.add_argument("--t", dest="t_list", default=None,
                   help="comma-separated evaluation times")
    p.add_argument("--t0", type=float, default=None)
    p.add_argument("--t-end", type=float, default=None)
    p.add_argument("--dt", type=float, default=None)
    p.add_argument("--paths", type=int, default=None)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--s", type=float, default=None)
    p.add_argument("--z", type=float, default=None)
    p.add_argument("--orders", default=None, help="comma-separated moment orders")
    p.add_argument("--delta", type=float, default=None)
    p.add_argument("--epsilons", default=None,
                   help="comma-separated edge-collar widths")
    p.add_argument("--bins", type=int, default=None)
    p.add_argument("--out")
    p.add_argument("--csv-out", default=None,
                   help="auxiliary CSV (histograms or moment trajectories)")

    p = sub.add_parser("transition", parents=[common],
                       help="conditional-start transition study (histograms + KS)")
    p.add_argument("--process", default=None)
    p.add_argument("--boundary", default=None)
    p.add_argument("--s", type=float, default=None)
    p.add_argument("--z", type=float, default=None)
    p.add_argument("--t", dest="t_list", default=None)
    p.add_argument("--dt", type=float, default=None)
    p.add_argument("--paths", type=int, default=None)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--bins", type=int, default=None)
    p.add_argument("--out")
    return parser


def _resolve(args, defaults, required=()):
    """Layer hard defaults < config file < explicit flags; return a dict."""
    from_file = {}
    if getattr(args, "config", None):
        try:
            with open(args.config) as fp:
                loaded = json.load(fp)
        except (OSError, json.JSONDecodeError) as exc:
            raise CliError(f"cannot read config {args.config!r}: {exc}")
        from_file = loaded.get("options", loaded)
    resolved = {}
    for key, hard in defaults.items():
        val = getattr(args, key, None)
        if val is None:
            val = from_file.get(key, hard)
        resolved[key] = val
    missing = [k for k in required if resolved.get(k) is None]
    if missing:
        raise CliError("missing required options: "
                       + ", ".join("--" + k.replace("_", "-") for k in missing))
    return resolved


def _now():
    return datetime.datetime.now(datetime.timezone.utc).isoformat()


def _write_sidecar(out_path, subcommand, options, outputs, extra=None):
    meta = {
        "tool": "unisde",
        "version": __version__,
        "subcommand": subcommand,
        "options": options,
        "outputs": outputs,
        "timestamp": _now(),
    }
    if extra:
        meta.update(extra)
    with open(out_path + ".meta.json", "w") as fp:
        json.dump(meta, fp, indent=2, sort_keys=True)
        fp.write("\n")


def _parse_process_opt(opt, boundary_token):
    boundary = parse_boundary(boundary_token) if boundary_token else None
    return parse_process(opt, boundary)


def _cmd_validate_boundary(args):
    opts = _resolve(args, {"boundary": None, "horizon": 1.0},
                    required=("boundary",))
    spec = parse_boundary(opts["boundary"])
    cls = spec.classify(horizon=opts["horizon"])
    print(f"boundary: {spec.spec_token()}")
    print(f"regime:   {cls.regime.value}")
    for reason in cls.reasons:
        print(f"  - {reason}")
    return 0


def _write_paths_csv(path, pathset):
    with open(path, "w") as fp:
        fp.write(",".join(_fmt(t) for t in pathset.times) + "\n")
        for row in pathset.values:
            fp.write(",".join(_fmt(v) for v in row) + "\n")


def _cmd_simulate(args):
    defaults = {"process": None, "boundary": "", "t0": None, "t_end": None,
                "dt": None, "paths": None, "seed": None, "initial": None,
                "store": None, "sampler": "euler", "out": None,
                "threads": None}
    opts = _resolve(args, defaults,
                    required=("process", "t_end", "dt", "paths", "seed", "out"))
    process = _parse_process_opt(opts["process"], opts["boundary"])
    store = parse_store(opts["store"]) if opts["store"] else Marginals((opts["t_end"],))
    t0 = opts["t0"]
    if t0 is None:
        t0, initial = analysis._auto_start(process, None, opts["dt"])
    elif opts["initial"] is None:
        t0, initial = analysis._auto_start(process, t0, opts["dt"])
    if opts["initial"] is not None:
        initial = parse_initial(opts["initial"])
    cfg = SimConfig(
        process=process,
        grid=TimeGrid(t0, opts["t_end"], opts["dt"]),
        n_paths=opts["paths"],
        seed=opts["seed"],
        initial=initial,
        store=store,
    )
    if opts["sampler"] == "time-change":
        from .simulate import time_change_simulate

        pathset = time_change_simulate(cfg, threads=opts["threads"])
    else:
        pathset = euler_simulate(cfg, threads=opts["threads"])
    _write_paths_csv(opts["out"], pathset)
    opts["t0"] = t0
    opts["initial"] = initial.spec_token()
    opts["store"] = store.spec_token()
    _write_sidecar(opts["out"], "simulate", opts, [opts["out"]],
                   {"config": cfg.to_dict(),
                    "rng_fingerprint": pathset.rng_fingerprint,
                    "clamp_fraction": pathset.clamp_fraction})
    return 0


def _cmd_moments(args):
    defaults = {"alpha": None, "n": None, "boundary": None, "s": None,
                "t": None, "z": None, "oracle": "none", "substeps": 2000,
                "mc": None, "dt": 0.01, "seed": 20160404, "out": None,
                "threads": None}
    opts = _resolve(args, defaults)
    if opts["alpha"] is not None:
        print(moments.alpha_matrix(opts["alpha"]))
        return 0
    for key in ("n", "boundary", "s", "t", "z"):
        if opts[key] is None:
            raise CliError("moments table needs --n, --boundary, --s, --t, --z "
                           "(or --alpha N for the coefficient matrix)")
    boundary = parse_boundary(opts["boundary"])
    n_max, s, t, z = opts["n"], opts["s"], opts["t"], opts["z"]
    orders = list(range(1, n_max + 1))
    mc_col = {}
    se_col = {}
    if opts["mc"]:
        from .processes import MeanRevertingUniform
        from .simulate import Conditional

        cfg = SimConfig(
            process=MeanRevertingUniform(boundary),
            grid=TimeGrid(s, t, opts["dt"]),
            n_paths=opts["mc"],
            seed=opts["seed"],
            initial=Conditional(s, z),
            store=Marginals((t,)),
        )
        sample = euler_simulate(cfg, threads=opts["threads"]).marginal(t)
        import numpy as np

        for m in orders:
            powers = sample ** m
            mc_col[m] = float(np.mean(powers))
            se_col[m] = float(np.std(powers, ddof=1) / np.sqrt(sample.size))
    lines = []
    header = ["order", "exact"]
    if opts["oracle"] == "ode":
        header.append("ode")
    if mc_col:
        header += ["mc", "se"]
    lines.append(",".join(header))
    for m in orders:
        q = moments.MomentQuery(m, s, t, z, boundary)
        row = [str(m), _fmt(moments.conditional_moment(q))]
        if opts["oracle"] == "ode":
            row.append(_fmt(moments.conditional_moment_via_ode(q, opts["substeps"])))
        if mc_col:
            row += [_fmt(mc_col[m]), _fmt(se_col[m])]
        lines.append(",".join(row))
    text = "\n".join(lines) + "\n"
    if opts["out"]:
        with open(opts["out"], "w") as fp:
            fp.write(text)
        _write_sidecar(opts["out"], "moments", opts, [opts["out"]])
    else:
        sys.stdout.write(text)
    return 0


_SUITE_DEFAULTS = {
    "marginals": {"process": "x", "boundary": "power:k=1,alpha=1",
                  "t_list": "1", "t0": None, "dt": 0.01, "paths": 100000,
                  "seed": 1, "bins": 100},
    "moments": {"boundary": "power:k=2,alpha=1.5", "s": 2.0, "z": -0.95,
                "orders": "2,3,4,5,6,7,8", "t_list": "3,5,10", "dt": 0.005,
                "paths": 200000, "seed": 1},
    "activity": {"boundary": "power:k=1,alpha=1", "t_list": "1,2,4,8",
                 "delta": 1.0, "dt": 0.01, "paths": 200000, "seed": 1},
    "occupation": {"boundary": "power:k=1,alpha=1", "epsilons": "0.04,0.02,0.01",
                   "t_end": 1.0, "dt": 0.01, "paths": 100000, "seed": 1},
    "limitlaw": {"process": "x", "boundary": "power:k=1,alpha=1", "s": 90.0,
                 "z": 0.0, "t_list": "100,400", "dt": 0.05, "paths": 200000,
                 "seed": 1},
}


def _cmd_verify(args):
    suite = args.suite
    if suite is None:
        raise CliError("--suite is required")
    defaults = dict(_SUITE_DEFAULTS[suite])
    defaults.update({"out": None, "threads": None, "csv_out": None})
    opts = _resolve(args, defaults, required=("out",))
    threads = opts["threads"]
    csv_rows = []
    pattern_ok = None
    if suite == "marginals":
        process = _parse_process_opt(opts["process"], opts["boundary"])
        reports, csv_rows = analysis.suite_marginals(
            process, _float_list(opts["t_list"]), opts["dt"], opts["paths"],
            opts["seed"], t0=opts["t0"], bins=opts["bins"], threads=threads)
        csv_writer = analysis.write_histogram_csv
    elif suite == "moments":
        reports, csv_rows = analysis.suite_moments(
            parse_boundary(opts["boundary"]), opts["s"], opts["z"],
            _int_list(opts["orders"]), _float_list(opts["t_list"]),
            opts["dt"], opts["paths"], opts["seed"], threads=threads)
        csv_writer = analysis.write_moment_trajectory_csv
    elif suite == "activity":
        reports, csv_rows = analysis.suite_activity(
            parse_boundary(opts["boundary"]), _float_list(opts["t_list"]),
            opts["delta"], opts["dt"], opts["paths"], opts["seed"],
            threads=threads)
        csv_writer = None
    elif suite == "occupation":
        reports, csv_rows = analysis.suite_occupation(
            parse_boundary(opts["boundary"]), _float_list(opts["epsilons"]),
            opts["t_end"], opts["dt"], opts["paths"], opts["seed"],
            threads=threads)
        csv_writer = None
    else:
        process = _parse_process_opt(opts["process"], opts["boundary"])
        reports, csv_rows = analysis.suite_limitlaw(
            process, opts["s"], opts["z"], _float_list(opts["t_list"]),
            opts["dt"], opts["paths"], opts["seed"], threads=threads)
        pattern_ok = analysis.limitlaw_pattern_ok(reports)
        csv_writer = None

    if pattern_ok is None:
        passed = all(r.passed for r in reports)
    else:
        passed = pattern_ok
    payload = {
        "suite": suite,
        "passed": passed,
        "reports": [r.to_dict() for r in reports],
    }
    if pattern_ok is not None:
        payload["expected_pattern"] = "fail near the start time, pass far out"
    with open(opts["out"], "w") as fp:
        json.dump(payload, fp, indent=2, sort_keys=True)
        fp.write("\n")
    outputs = [opts["out"]]
    if opts["csv_out"] and csv_writer is not None and csv_rows:
        with open(opts["csv_out"], "w") as fp:
            csv_writer(fp, csv_rows)
        outputs.append(opts["csv_out"])
    _write_sidecar(opts["out"], "verify", opts, outputs)
    for r in reports:
        print(f"{'PASS' if r.passed else 'FAIL'} {r.test_name} "
              f"stat={r.statistic:.6g} thr={r.threshold:.6g}")
    print(f"suite {suite}: {'PASS' if passed else 'FAIL'}")
    return 0 if passed else 2


def _cmd_transition(args):
    defaults = {"process": "x", "boundary": "power:k=1,alpha=1", "s": 90.0,
                "z": 0.0, "t_list": "100,400", "dt": 0.05, "paths": 200000,
                "seed": 1, "bins": 100, "out": None, "threads": None}
    opts = _resolve(args, defaults, required=("out",))
    process = _parse_process_opt(opts["process"], opts["boundary"])
    t_list = sorted(_float_list(opts["t_list"]))
    from .simulate import Conditional

    cfg = SimConfig(
        process=process,
        grid=TimeGrid(opts["s"], t_list[-1], opts["dt"]),
        n_paths=opts["paths"],
        seed=opts["seed"],
        initial=Conditional(opts["s"], opts["z"]),
        store=Marginals(tuple(t_list)),
    )
    paths = euler_simulate(cfg, threads=opts["threads"])
    import numpy as np

    rows = []
    reports = []
    for t in t_list:
        sample = paths.marginal(t)
        support = process.support(t)
        counts, _ = analysis.histogram(sample, opts["bins"], support)
        edges = np.linspace(support[0], support[1], opts["bins"] + 1)
        rows.extend((t, edges[i], edges[i + 1], int(counts[i]))
                    for i in range(opts["bins"]))
        reports.append(analysis.ks_uniform(
            sample, support, name=f"transition-ks@t={format(t, 'g')}"))
    with open(opts["out"], "w") as fp:
        analysis.write_histogram_csv(fp, rows)
    _write_sidecar(opts["out"], "transition", opts, [opts["out"]],
                   {"reports": [r.to_dict() for r in reports],
                    "rng_fingerprint": paths.rng_fingerprint})
    for r in reports:
        print(f"{'PASS' if r.passed else 'FAIL'} {r.test_name} "
              f"stat={r.statistic:.6g} thr={r.threshold:.6g}")
    return 0


_COMMANDS = {
    "validate-boundary": _cmd_validate_boundary,
    "simulate": _cmd_simulate,
    "moments": _cmd_moments,
    "verify": _cmd_verify,
    "transition": _cmd_transition,
}


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
        return _COMMANDS[args.subcommand](args)
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (BoundaryError, ProcessError, ConfigError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
