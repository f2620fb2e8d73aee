"""Command-line entry point: ``mixest run | verify-theorems | sweep | plot``.

Exit codes: 0 success, 2 configuration error, 3 runtime error.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from .bench import emit_outputs, load_config, read_record, run_experiment, sweep, verify_theorems
from .errors import ConfigError, MixestError

log = logging.getLogger("mixest")

EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME = 0, 2, 3


def _summary_lines(record: dict):
    for name in record["estimators"]:
        for metric, s in record["summary"][name].items():
            yield f"{name:>16s}  {metric:<22s} N={record['checkpoints'][-1]:<7d} mean={s['mean'][-1]:.6g}"
    for name in record["baselines"]:
        for metric, s in record["summary"][name].items():
            yield f"{name:>16s}  {metric:<22s} N={record['baseline_checkpoints'][-1]:<7d} mean={s['mean'][-1]:.6g}"


def _cmd_run(args):
    cfg = load_config(args.config)
    if args.output_dir:
        cfg.output_dir = args.output_dir
    record = run_experiment(cfg, jobs=args.jobs)
    for line in _summary_lines(record):
        print(line)
    print(f"wrote {cfg.formats} to {cfg.output_dir}")


def _cmd_verify(args):
    cfg = load_config(args.config)
    report = verify_theorems(cfg, jobs=args.jobs)
    for c in report["checks"]:
        extra = ", ".join(f"{k}={v:.4g}" for k, v in c.items() if isinstance(v, float))
        print(f"{'PASS' if c['passed'] else 'FAIL'}  {c['name']:<20s} {c['estimator']:<12s} {extra}")
    if args.output:
        out = {k: v for k, v in report.items() if k != "record"}
        Path(args.output).write_text(json.dumps(out, indent=1))
    return EXIT_OK if report["passed"] else EXIT_RUNTIME


def _cmd_sweep(args):
    cfg = load_config(args.config)
    values = [v.strip() for v in args.values.split(",") if v.strip()]
    if not values:
        raise ConfigError("--values is empty")
    for value, record in zip(values, sweep(cfg, args.param, values, jobs=args.jobs)):
        print(f"[{args.param}={value}]")
        for line in _summary_lines(record):
            print(line)


def _cmd_plot(args):
    record = read_record(args.record)
    out = args.output_dir or str(Path(args.record).parent)
    for p in emit_outputs(record, ["svg"], out):
        print(f"wrote {p}")


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="mixest", description="Mixture-weight SMD experiments.")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="run an experiment config")
    r.add_argument("config")
    r.add_argument("--jobs", type=int, default=1, help="worker processes for trial blocks")
    r.add_argument("--output-dir", help="override output_dir from the config")
    r.set_defaults(func=_cmd_run)

    v = sub.add_parser("verify-theorems", help="check the theorem bounds and rates empirically")
    v.add_argument("config")
    v.add_argument("--jobs", type=int, default=1)
    v.add_argument("--output", help="write the report as JSON")
    v.set_defaults(func=_cmd_verify)

    s = sub.add_parser("sweep", help="rerun a config over values of one parameter")
    s.add_argument("config")
    s.add_argument("--param", required=True, help="dotted config path, e.g. estimators.0.schedule.gamma0")
    s.add_argument("--values", required=True, help="comma-separated values")
    s.add_argument("--jobs", type=int, default=1)
    s.set_defaults(func=_cmd_sweep)

    pl = sub.add_parser("plot", help="render SVG figures from a record.json")
    pl.add_argument("record")
    pl.add_argument("--output-dir")
    pl.set_defaults(func=_cmd_plot)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        code = args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (MixestError, OSError, ValueError, ArithmeticError) as exc:
        print(f"runtime error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    return EXIT_OK if code is None else code


if __name__ == "__main__":
    sys.exit(main())
