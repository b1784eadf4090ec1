"""Command line entry point: ``cgflow run | converge | compare``.

Exit status: 0 success, 1 numerical failure, 2 configuration error.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .config import ConfigError, parse_config
from .io import CsvSeriesWriter
from .runner import EXIT_CONFIG, EXIT_NUMERICAL, EXIT_OK, run
from .studies import StudyAborted, compare_approaches, run_convergence_study

__all__ = ["main"]


def _floats(text: str) -> list[float]:
    try:
        vals = [float(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None
    if not vals:
        raise argparse.ArgumentTypeError("empty list")
    return vals


def _approaches(text: str) -> list:
    out = []
    for x in text.split(","):
        x = x.strip()
        if x:
            out.append(int(x) if x.isdigit() else x)
    if not out:
        raise argparse.ArgumentTypeError("empty approach list")
    return out


def _parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="cgflow", description="Constraint-preserving gradient-flow simulations.")
    sub = ap.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="integrate one configuration")
    r.add_argument("--config", required=True, type=Path)
    r.add_argument("--out", required=True, type=Path)

    c = sub.add_parser("converge", help="time-step convergence study against a reference run")
    c.add_argument("--config", required=True, type=Path)
    c.add_argument("--dts", required=True, type=_floats)
    c.add_argument("--ref-dt", required=True, type=float)
    c.add_argument("--out", required=True, type=Path)
    c.add_argument("--workers", type=int, default=1)

    m = sub.add_parser("compare", help="run several multiplier approaches on one problem")
    m.add_argument("--config", required=True, type=Path)
    m.add_argument("--approaches", required=True, type=_approaches)
    m.add_argument("--out", required=True, type=Path)
    m.add_argument("--workers", type=int, default=1)
    return ap


def _write_json(path: Path, obj) -> None:
    path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def _converge(cfg, args) -> int:
    args.out.mkdir(parents=True, exist_ok=True)
    try:
        rep = run_convergence_study(cfg, args.dts, args.ref_dt, workers=args.workers)
    except StudyAborted as exc:
        with CsvSeriesWriter(args.out / "convergence.csv", ["dt", "error"]) as w:
            for d, e in exc.partial.items():
                w.write({"dt": d, "error": e})
        _write_json(args.out / "failure.json", exc.failure)
        print(f"convergence study aborted: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    with CsvSeriesWriter(args.out / "convergence.csv", ["dt", "error", "used"]) as w:
        for d, e, u in zip(rep.dts, rep.errors, rep.used):
            w.write({"dt": d, "error": e, "used": u})
    _write_json(
        args.out / "convergence.json",
        {"observed_order": rep.observed_order, "status": rep.status, "floor": rep.floor, "reference_dt": rep.reference_dt},
    )
    print(f"observed order {rep.observed_order:.4f} ({rep.status})")
    return EXIT_OK


def _compare(cfg, args) -> int:
    args.out.mkdir(parents=True, exist_ok=True)
    bundle = compare_approaches(cfg, args.approaches, workers=args.workers)
    for a, s in bundle.series.items():
        with CsvSeriesWriter(args.out / f"series_{a}.csv", s.columns) as w:
            for row in s.rows():
                w.write(row)
    summary = {
        "lambda_scale": bundle.lambda_scale,
        "lambda_discrepancy": {f"{a}-{b}": v for (a, b), v in bundle.lambda_discrepancy.items()},
        "constraint_drift": {str(a): d for a, d in bundle.constraint_drift.items()},
        "failures": {str(a): f for a, f in bundle.failures.items()},
    }
    _write_json(args.out / "comparison.json", summary)
    for a, f in bundle.failures.items():
        print(f"approach {a} failed at step {f['step']}: {f['message']}", file=sys.stderr)
    if len(bundle.failures) == len(bundle.series):
        return EXIT_NUMERICAL
    return EXIT_OK


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    try:
        text = args.config.read_text(encoding="utf-8")
    except OSError as exc:
        print(f"cannot read config: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        cfg = parse_config(text)
        if args.command == "run":
            status = run(cfg, args.out)
            if status == EXIT_CONFIG:
                err = json.loads((args.out / "config_error.json").read_text(encoding="utf-8"))
                raise ConfigError(err["violations"])
            if status == EXIT_NUMERICAL:
                fail = json.loads((args.out / "failure.json").read_text(encoding="utf-8"))
                print(f"numerical failure at step {fail['step']}: {fail['message']}", file=sys.stderr)
            return status
        if args.command == "converge":
            return _converge(cfg, args)
        return _compare(cfg, args)
    except ConfigError as exc:
        for v in exc.violations:
            print(f"config error: {v}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
