"""``frogsim`` command line.

Exit codes: 0 success, 1 validation failure, 2 configuration error,
3 runtime error (capped trials). Progress goes to stderr, data to stdout or
to the requested files. ``--threads`` (default ``$FROGSIM_THREADS`` or 1)
changes speed only, never results.
"""

from __future__ import annotations

import argparse
import json
import sys
import time

import jsonschema

from . import __version__
from .dists import EtaSpec
from .errors import ConfigError
from .exact_oracle import (
    OffspringPmf, branching_extinction, coupon_tau_moments, exact_vinf_distribution, write_oracle_json,
)
from .experiments import Event, SweepConfig, estimate_event, phase_sweep, write_metadata, write_results
from .model import SimParams
from .trials import default_threads

EXIT_OK, EXIT_VALIDATION, EXIT_CONFIG, EXIT_RUNTIME = 0, 1, 2, 3

ETA_SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "required": ["kind", "params"],
    "properties": {
        "kind": {"enum": ["constant", "bernoulli", "poisson", "geometric", "table"]},
        "params": {"type": "object"},
    },
}
EVENT_SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "required": ["kind"],
    "properties": {
        "kind": {"enum": ["full_coverage", "proportion"]},
        "epsilon": {"type": "number", "exclusiveMinimum": 0, "exclusiveMaximum": 1},
    },
}
SWEEP_SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "required": ["n_values", "alpha_values", "eta", "seed"],
    "properties": {
        "n_values": {"type": "array", "minItems": 1, "items": {"type": "integer", "minimum": 2}},
        "alpha_values": {"type": "array", "minItems": 1, "items": {"type": "number", "exclusiveMinimum": 0}},
        "eta": ETA_SCHEMA,
        "seed": {"type": "integer", "minimum": 0},
        "trials": {"type": ["integer", "null"], "minimum": 1},
        "event": EVENT_SCHEMA,
        "conditional_root": {"type": "boolean"},
        "output": {"type": "string"},
        "format": {"enum": ["csv", "json"]},
    },
}
RUN_SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "required": ["m", "p", "eta", "trials", "seed"],
    "properties": {
        "m": {"type": "integer", "minimum": 1},
        "p": {"type": "number", "minimum": 0, "maximum": 1},
        "eta": ETA_SCHEMA,
        "trials": {"type": "integer", "minimum": 1},
        "seed": {"type": "integer", "minimum": 0},
        "event": EVENT_SCHEMA,
        "conditional_root": {"type": "boolean"},
        "output": {"type": "string"},
        "format": {"enum": ["csv", "json"]},
    },
}


def _err(msg: str):
    print(f"frogsim: error: {msg}", file=sys.stderr)


def load_config(path: str, schema: dict) -> dict:
    """Read and schema-validate a JSON config; errors are ConfigError naming the field."""
    try:
        with open(path) as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError("config", f"cannot read {path}: {exc.strerror or exc}") from None
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError("config", f"malformed JSON in {path} at line {exc.lineno}, column {exc.colno}: "
                                    f"{exc.msg}") from None
    try:
        jsonschema.validate(data, schema)
    except jsonschema.ValidationError as exc:
        where = ".".join(str(p) for p in exc.absolute_path) or "<root>"
        raise ConfigError(where, exc.message) from None
    return data


def _event_from(kind: str, epsilon: float | None) -> Event:
    return Event("full_coverage" if kind == "full" else kind, epsilon)


def _summary(row) -> str:
    alpha = "" if row.alpha is None else f" alpha={row.alpha:g}"
    return (f"n={row.n}{alpha} p={row.p_n:.9g} {row.event}: {row.successes}/{row.trials} "
            f"p_hat={row.p_hat:.6f} 95% CI [{row.ci_low:.6f}, {row.ci_high:.6f}]"
            + ("" if row.valid else f" INVALID ({row.capped} capped trials)"))


def cmd_run(args) -> int:
    if args.config:
        cfg = load_config(args.config, RUN_SCHEMA)
        eta = EtaSpec.from_dict(cfg["eta"])
        ev = cfg.get("event", {"kind": "full_coverage"})
        event = _event_from(ev["kind"], ev.get("epsilon"))
        params = SimParams(cfg["m"], cfg["p"], eta, cfg["seed"], 0, cfg.get("conditional_root", False))
        trials, seed = cfg["trials"], cfg["seed"]
        out, fmt = cfg.get("output", args.out), cfg.get("format", args.format)
    else:
        for name in ("m", "p", "eta", "trials", "seed"):
            if getattr(args, name) is None:
                raise ConfigError(name, "required (or pass --config)")
        if args.trials < 1:
            raise ConfigError("trials", f"must be >= 1, got {args.trials}")
        event = _event_from(args.event, args.epsilon)
        params = SimParams(args.m, args.p, EtaSpec.parse(args.eta), args.seed, 0, args.conditional_root)
        trials, seed, out, fmt = args.trials, args.seed, args.out, args.format
    row = estimate_event(params, event, trials, seed, args.threads)
    print(_summary(row), file=sys.stderr if out == "-" else sys.stdout)
    write_results([row], out, fmt, include_timing=args.record_timing)
    if not row.valid:
        _err(f"{row.capped} trial(s) hit the round cap; the estimate is unusable")
        return EXIT_RUNTIME
    return EXIT_OK


def cmd_sweep(args) -> int:
    cfg = load_config(args.config, SWEEP_SCHEMA)
    ev = cfg.get("event", {"kind": "full_coverage"})
    sweep = SweepConfig(cfg["n_values"], cfg["alpha_values"], EtaSpec.from_dict(cfg["eta"]),
                        seed=cfg["seed"], trials=cfg.get("trials"),
                        event=_event_from(ev["kind"], ev.get("epsilon")),
                        conditional_root=cfg.get("conditional_root", False))
    out = args.out or cfg.get("output")
    if not out:
        raise ConfigError("output", "give --out or an 'output' key in the config")
    fmt = args.format or cfg.get("format", "csv")
    t0 = time.perf_counter()
    rows = phase_sweep(sweep, args.threads, progress=lambda r: print(_summary(r), file=sys.stderr))
    write_results(rows, out, fmt, include_timing=args.record_timing)
    meta = (out if out != "-" else "sweep") + ".meta.json"
    write_metadata(meta, sweep.to_dict(), rows, time.perf_counter() - t0, args.threads or default_threads())
    print(f"wrote {len(rows)} rows to {out} (metadata: {meta})", file=sys.stderr)
    if not all(r.valid for r in rows):
        _err("some points had capped trials; see the metadata file")
        return EXIT_RUNTIME
    return EXIT_OK


def cmd_oracle(args) -> int:
    if args.what == "vinf":
        eta = EtaSpec.parse(args.eta)
        d = exact_vinf_distribution(args.m, args.p, eta, args.conditional_root, args.a0)
        for v, x in enumerate(d.masses, start=1):
            print(f"{v}\t{x:.15g}")
        if args.json:
            write_oracle_json([d.to_record(args.p, eta)], args.json)
    elif args.what == "coupon":
        mean, var = coupon_tau_moments(args.n)
        print(f"mean\t{mean:.15g}\nvariance\t{var:.15g}")
        if args.json:
            write_oracle_json([{"n": args.n, "mean": mean, "variance": var}], args.json)
    else:
        try:
            masses = [float(x) for x in args.pmf.split(",")]
        except ValueError:
            raise ConfigError("pmf", f"expected comma-separated numbers, got {args.pmf!r}") from None
        q = branching_extinction(OffspringPmf(tuple(masses)))
        print(f"{q:.15g}")
        if args.json:
            write_oracle_json([{"pmf": masses, "extinction": q}], args.json)
    return EXIT_OK


def cmd_validate(args) -> int:
    from .validation import Battery, report_dict

    battery = Battery(quick=args.quick, seed=args.seed, threads=args.threads)
    results = battery.run(progress=lambda r: print(r.line(), file=sys.stderr))
    report = report_dict(results, args.quick, args.seed)
    with open(args.report, "w") as fh:
        json.dump(report, fh, indent=2)
        fh.write("\n")
    failed = [r.name for r in results if not r.passed]
    if failed:
        _err("failed checks: " + ", ".join(failed))
        return EXIT_VALIDATION
    print(f"all {len(results)} checks passed (report: {args.report})")
    return EXIT_OK


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        _err(message)
        raise SystemExit(EXIT_CONFIG)


def build_parser() -> argparse.ArgumentParser:
    ap = _Parser(prog="frogsim", description=__doc__.splitlines()[0])
    ap.add_argument("--version", action="version", version=f"frogsim {__version__}")
    sub = ap.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def threads_arg(p):
        p.add_argument("--threads", type=int, default=None,
                       help="worker threads (default $FROGSIM_THREADS or 1); never changes results")

    run = sub.add_parser("run", help="estimate one coverage probability")
    run.add_argument("--config", help="JSON run config (replaces the flags below)")
    run.add_argument("--m", type=int, help="vertex count")
    run.add_argument("--p", type=float, help="survival probability in [0, 1]")
    run.add_argument("--eta", help="eta law, kind:param[,param...] (e.g. bernoulli:0.5)")
    run.add_argument("--event", choices=["full", "full_coverage", "proportion"], default="full")
    run.add_argument("--epsilon", type=float, help="epsilon for --event proportion")
    run.add_argument("--trials", type=int)
    run.add_argument("--seed", type=int)
    run.add_argument("--conditional-root", action="store_true",
                     help="no extra root particle; condition on eta_o >= 1")
    run.add_argument("--out", default="-", help="result file ('-' for stdout)")
    run.add_argument("--format", choices=["csv", "json"], default="csv")
    run.add_argument("--record-timing", action="store_true", help="fill the wall_time_ms column")
    threads_arg(run)
    run.set_defaults(func=cmd_run)

    sw = sub.add_parser("sweep", help="phase-transition sweep over (n, alpha) from a JSON config")
    sw.add_argument("config")
    sw.add_argument("--out", help="result file (overrides the config's 'output')")
    sw.add_argument("--format", choices=["csv", "json"])
    sw.add_argument("--record-timing", action="store_true", help="fill the wall_time_ms column")
    threads_arg(sw)
    sw.set_defaults(func=cmd_sweep)

    orc = sub.add_parser("oracle", help="exact values")
    osub = orc.add_subparsers(dest="what", required=True, parser_class=_Parser)
    vinf = osub.add_parser("vinf", help="exact law of V_infinity (m <= 16, eta bounded by 4)")
    vinf.add_argument("--m", type=int, required=True)
    vinf.add_argument("--p", type=float, required=True)
    vinf.add_argument("--eta", required=True)
    vinf.add_argument("--conditional-root", action="store_true")
    vinf.add_argument("--a0", type=int, help="fix the initial number of active particles")
    coup = osub.add_parser("coupon", help="mean and variance of the coupon collector time")
    coup.add_argument("--n", type=int, required=True)
    ext = osub.add_parser("extinct", help="extinction probability of a branching process")
    ext.add_argument("--pmf", required=True, help="offspring masses q0,q1,...")
    for p in (vinf, coup, ext):
        p.add_argument("--json", help="also write the result as JSON")
    orc.set_defaults(func=cmd_oracle)

    val = sub.add_parser("validate", help="run the validation battery")
    val.add_argument("--quick", action="store_true", help="sub-minute subset")
    val.add_argument("--seed", type=int, default=20240701)
    val.add_argument("--report", default="validation_report.json")
    threads_arg(val)
    val.set_defaults(func=cmd_validate)
    return ap


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        if getattr(args, "threads", None) is not None and args.threads < 1:
            raise ConfigError("threads", f"must be >= 1, got {args.threads}")
        return args.func(args)
    except ConfigError as exc:
        _err(str(exc))
        return EXIT_CONFIG
    except OSError as exc:
        _err(str(exc))
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
