"""Command-line front end.

Three subcommands:

* ``bench``     - run an objective across seeds in sequential and/or
                  parallel mode, emit summary records as CSV or JSON
* ``threshold`` - find and optionally apply an image threshold
* ``report``    - join sequential/parallel bench records into a speedup table

Exit codes: 0 success, 1 failed self-check, 2 usage or data validation,
3 I/O failure, 4 image parse failure. Output files are written to a
temporary name and renamed into place, so a failing command never leaves
a partial artifact behind.
"""

from __future__ import annotations

import argparse
import contextlib
import csv
import io
import json
import math
import os
import sys
import tempfile
from statistics import fmean
from typing import List, Optional

from .core import ApoConfig, ConfigError
from .engine import PARALLEL, SEQUENTIAL, EngineMode, benchmark
from .imaging import (
    apply_threshold,
    apo_threshold,
    brute_force_otsu,
    histogram,
    ImageFormatError,
    load_image_file,
    write_pgm,
)
from .objectives import Bounds, FUNCTION_NAMES, get_objective

_BENCH_COLUMNS = (
    "function", "ps", "dim", "iters", "runs", "seed",
    "mode", "workers", "avg_best_fit", "avg_seconds",
)
_RUN_COLUMNS = (
    "function", "ps", "dim", "iters", "mode", "workers",
    "run_seed", "best_fit", "seconds",
)
_REPORT_COLUMNS = (
    "function", "ps", "dim", "iters", "seed", "runs",
    "seq_avg_best_fit", "seq_avg_seconds",
    "par_avg_best_fit", "par_avg_seconds", "speedup",
)


class ReportError(ValueError):
    """Bench records that cannot be joined into a report."""


def format_number(value: float) -> str:
    """Render with 6 significant digits.

    Scientific notation kicks in at |v| >= 1e6 or below 1e-3 so tables
    stay aligned across wildly different magnitudes. Zero is plain "0".
    """
    v = float(value)
    if v == 0.0:
        return "0"
    if math.isnan(v):
        return "nan"
    if math.isinf(v):
        return "inf" if v > 0 else "-inf"
    if abs(v) >= 1e6 or abs(v) < 1e-3:
        return f"{v:.5E}"
    return f"{v:.6g}"


def _positive_int(text: str) -> int:
    try:
        value = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected an integer, got {text!r}")
    if value < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {value}")
    return value


def _nonnegative_int(text: str) -> int:
    try:
        value = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected an integer, got {text!r}")
    if value < 0:
        raise argparse.ArgumentTypeError(f"expected a non-negative integer, got {value}")
    return value


def _seed_value(text: str) -> int:
    try:
        value = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected an integer seed, got {text!r}")
    if not 0 <= value < 2**64:
        raise argparse.ArgumentTypeError("seed must fit in an unsigned 64-bit word")
    return value


def _workers_value(text: str):
    if text == "auto":
        return "auto"
    try:
        value = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected a worker count or 'auto', got {text!r}")
    if value < 1:
        raise argparse.ArgumentTypeError(f"worker count must be >= 1, got {value}")
    return value


def _resolve_seed(flag_value: Optional[int]) -> int:
    """Flag beats the PROTOZOA_SEED environment variable beats 0."""
    if flag_value is not None:
        return flag_value
    env = os.environ.get("PROTOZOA_SEED")
    if env is None:
        return 0
    try:
        value = int(env)
    except ValueError:
        raise ConfigError(f"PROTOZOA_SEED must be an integer, got {env!r}")
    if not 0 <= value < 2**64:
        raise ConfigError("PROTOZOA_SEED must fit in an unsigned 64-bit word")
    return value


def _atomic_write(path, payload) -> None:
    """Write bytes/text to ``path`` via a temp file + rename."""
    data = payload if isinstance(payload, bytes) else payload.encode("utf-8")
    directory = os.path.dirname(os.path.abspath(os.fspath(path))) or "."
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".partial-")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        with contextlib.suppress(OSError):
            os.unlink(tmp)
        raise


def _modes_for(engine: str, workers) -> List[EngineMode]:
    modes: List[EngineMode] = []
    if engine in ("seq", "both"):
        modes.append(EngineMode.sequential())
    if engine in ("par", "both"):
        modes.append(EngineMode.parallel(workers if workers is not None else "auto"))
    return modes


# ---------------------------------------------------------------------------
# bench


def _bench_records(args, seed: int, result) -> List[dict]:
    records = []
    for kind in (SEQUENTIAL, PARALLEL):
        if kind not in result.per_mode:
            continue
        agg = result.per_mode[kind]
        records.append({
            "function": result.objective_name,
            "ps": int(args.ps),
            "dim": int(args.dim),
            "iters": int(args.iters),
            "runs": int(result.runs),
            "seed": int(seed),
            "mode": agg.mode,
            "workers": int(agg.workers),
            "avg_best_fit": float(agg.avg_best_fitness),
            "avg_seconds": float(agg.avg_seconds),
            "per_run": [
                {
                    "run_seed": int(seed + r),
                    "best_fit": float(agg.best_fitness[r]),
                    "seconds": float(agg.seconds[r]),
                }
                for r in range(result.runs)
            ],
        })
    return records


def _bench_csv(records: List[dict]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(_BENCH_COLUMNS)
    for rec in records:
        writer.writerow([
            rec["function"], rec["ps"], rec["dim"], rec["iters"], rec["runs"],
            rec["seed"], rec["mode"], rec["workers"],
            format_number(rec["avg_best_fit"]), format_number(rec["avg_seconds"]),
        ])
    return buf.getvalue()


def _runs_csv(records: List[dict]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(_RUN_COLUMNS)
    for rec in records:
        for row in rec["per_run"]:
            writer.writerow([
                rec["function"], rec["ps"], rec["dim"], rec["iters"],
                rec["mode"], rec["workers"], row["run_seed"],
                format_number(row["best_fit"]), format_number(row["seconds"]),
            ])
    return buf.getvalue()


def _bench_json(records: List[dict]) -> str:
    return json.dumps({"records": records}, indent=2, sort_keys=True) + "\n"


def cmd_bench(args) -> int:
    seed = _resolve_seed(args.seed)
    if not args.lower < args.upper:
        raise ConfigError(f"--lower must be below --upper, got [{args.lower}, {args.upper}]")
    cfg = ApoConfig(
        ps=args.ps,
        dim=args.dim,
        bounds=Bounds(args.lower, args.upper, args.dim),
        max_iterations=args.iters,
        seed=seed,
    )
    objective = get_objective(args.function)
    result = benchmark(cfg, objective, args.runs, modes=_modes_for(args.engine, args.workers))
    records = _bench_records(args, seed, result)

    fmt = args.format
    if fmt is None:
        fmt = "json" if args.out is not None and str(args.out).endswith(".json") else "csv"
    if fmt == "json":
        text = _bench_json(records)
        if args.out is None:
            sys.stdout.write(text)
        else:
            _atomic_write(args.out, text)
    else:
        if args.out is None:
            sys.stdout.write(_bench_csv(records))
        else:
            _atomic_write(args.out, _bench_csv(records))
            stem, ext = os.path.splitext(os.fspath(args.out))
            _atomic_write(stem + "_runs" + (ext or ".csv"), _runs_csv(records))
    return 0


# ---------------------------------------------------------------------------
# threshold


def cmd_threshold(args) -> int:
    seed = _resolve_seed(args.seed)
    img = load_image_file(args.image)
    modes = _modes_for(args.engine, args.workers)
    mismatches = 0
    oracle = brute_force_otsu(histogram(img)) if args.check_oracle else None
    last = None
    for mode in modes:
        thresholds = []
        seconds = []
        for r in range(args.runs):
            res = apo_threshold(img, ps=args.ps, iterations=args.iters, seed=seed + r, mode=mode)
            thresholds.append(res.threshold)
            seconds.append(res.run.wall_clock_seconds)
            last = res
            print(
                f"{mode.kind} run {r + 1}: seed={seed + r} threshold={res.threshold} "
                f"variance={format_number(res.variance)} seconds={format_number(res.run.wall_clock_seconds)}"
            )
            if oracle is not None and res.variance != oracle[1]:
                mismatches += 1
                print(
                    f"oracle mismatch: {mode.kind} run {r + 1} reached {res.variance!r}, "
                    f"exhaustive search reaches {oracle[1]!r} at t={oracle[0]}",
                    file=sys.stderr,
                )
        print(
            f"{mode.kind} Avg. Best Th. {fmean(thresholds):.2f}  "
            f"Avg. Time (s) {format_number(fmean(seconds))}"
        )
    if args.emit is not None and last is not None:
        black_white = apply_threshold(img, last.threshold)
        _atomic_write(args.emit, write_pgm(black_white, binary=args.emit_format == "p5"))
    if oracle is not None:
        if mismatches:
            return 1
        print(f"oracle check: ok (t={oracle[0]}, variance={format_number(oracle[1])})")
    return 0


# ---------------------------------------------------------------------------
# report


def _load_bench_records(path) -> List[dict]:
    with open(path, "r", encoding="utf-8") as fh:
        text = fh.read()
    head = text.lstrip()[:1]
    if head in ("{", "["):
        payload = json.loads(text)
        rows = payload.get("records", []) if isinstance(payload, dict) else payload
    else:
        rows = list(csv.DictReader(io.StringIO(text)))
    records = []
    for row in rows:
        try:
            records.append({
                "function": str(row["function"]),
                "ps": int(row["ps"]),
                "dim": int(row["dim"]),
                "iters": int(row["iters"]),
                "runs": int(row["runs"]),
                "seed": int(row["seed"]),
                "mode": str(row["mode"]),
                "avg_best_fit": float(row["avg_best_fit"]),
                "avg_seconds": float(row["avg_seconds"]),
            })
        except (KeyError, TypeError, ValueError) as exc:
            raise ReportError(f"{path}: not a bench record ({exc!r})")
    return records


def _joined_rows(records: List[dict]) -> List[dict]:
    by_key: dict = {}
    for rec in records:
        key = (rec["function"], rec["ps"], rec["dim"], rec["iters"], rec["seed"])
        slot = by_key.setdefault(key, {})
        if rec["mode"] not in (SEQUENTIAL, PARALLEL):
            raise ReportError(f"unknown mode {rec['mode']!r} for {key}")
        if rec["mode"] in slot:
            raise ReportError(f"duplicate {rec['mode']} record for {key}")
        slot[rec["mode"]] = rec
    rows = []
    for key in sorted(by_key):
        pair = by_key[key]
        if SEQUENTIAL not in pair or PARALLEL not in pair:
            present = SEQUENTIAL if SEQUENTIAL in pair else PARALLEL
            print(
                f"report: skipping function={key[0]} ps={key[1]} dim={key[2]} "
                f"iters={key[3]} seed={key[4]}: only a {present} record",
                file=sys.stderr,
            )
            continue
        seq, par = pair[SEQUENTIAL], pair[PARALLEL]
        if seq["runs"] != par["runs"]:
            raise ReportError(
                f"run counts differ for {key}: sequential {seq['runs']} vs parallel {par['runs']}"
            )
        speedup = seq["avg_seconds"] / par["avg_seconds"] if par["avg_seconds"] else math.inf
        rows.append({
            "function": key[0], "ps": key[1], "dim": key[2], "iters": key[3],
            "seed": key[4], "runs": seq["runs"],
            "seq_avg_best_fit": seq["avg_best_fit"], "seq_avg_seconds": seq["avg_seconds"],
            "par_avg_best_fit": par["avg_best_fit"], "par_avg_seconds": par["avg_seconds"],
            "speedup": speedup,
        })
    return rows


def _report_markdown(rows: List[dict]) -> str:
    lines = [
        "| No. | Function | PS | Seq Fit | Seq Time | Par Fit | Par Time | Speedup |",
        "| --- | --- | --- | --- | --- | --- | --- | --- |",
    ]
    for n, row in enumerate(rows, start=1):
        lines.append(
            f"| {n} | {row['function']} | {row['ps']} "
            f"| {format_number(row['seq_avg_best_fit'])} | {format_number(row['seq_avg_seconds'])} "
            f"| {format_number(row['par_avg_best_fit'])} | {format_number(row['par_avg_seconds'])} "
            f"| {row['speedup']:.2f} |"
        )
    return "\n".join(lines) + "\n"


def _report_csv(rows: List[dict]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(_REPORT_COLUMNS)
    for row in rows:
        writer.writerow([
            row["function"], row["ps"], row["dim"], row["iters"], row["seed"], row["runs"],
            format_number(row["seq_avg_best_fit"]), format_number(row["seq_avg_seconds"]),
            format_number(row["par_avg_best_fit"]), format_number(row["par_avg_seconds"]),
            f"{row['speedup']:.2f}",
        ])
    return buf.getvalue()


def cmd_report(args) -> int:
    records: List[dict] = []
    for path in args.inputs:
        records.extend(_load_bench_records(path))
    rows = _joined_rows(records)
    text = _report_markdown(rows) if args.format == "markdown" else _report_csv(rows)
    if args.out is None:
        sys.stdout.write(text)
    else:
        _atomic_write(args.out, text)
    return 0


# ---------------------------------------------------------------------------
# wiring


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="protozoa",
        description="Protozoa-foraging optimizer: benchmarks, image thresholding, speedup reports.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    bench = sub.add_parser("bench", help="benchmark one objective across seeds and engine modes")
    bench.add_argument("--function", required=True, choices=FUNCTION_NAMES,
                       help="objective to minimize")
    bench.add_argument("--ps", type=_positive_int, default=1000, help="population size")
    bench.add_argument("--dim", type=_positive_int, default=1000, help="problem dimension")
    bench.add_argument("--iters", type=_nonnegative_int, default=1000, help="iteration budget")
    bench.add_argument("--runs", type=_positive_int, default=5,
                       help="seed sweep length; seeds are seed, seed+1, ...")
    bench.add_argument("--seed", type=_seed_value, default=None,
                       help="base seed (default: $PROTOZOA_SEED or 0)")
    bench.add_argument("--engine", choices=("seq", "par", "both"), default="both")
    bench.add_argument("--workers", type=_workers_value, default=None,
                       help="parallel worker count or 'auto'")
    bench.add_argument("--lower", type=float, default=-100.0, help="lower bound, every dimension")
    bench.add_argument("--upper", type=float, default=100.0, help="upper bound, every dimension")
    bench.add_argument("--out", default=None, help="output path (default: stdout)")
    bench.add_argument("--format", choices=("csv", "json"), default=None,
                       help="output format (default: by --out extension, else csv)")
    bench.set_defaults(handler=cmd_bench)

    threshold = sub.add_parser("threshold", help="search an image threshold and optionally binarize")
    threshold.add_argument("--image", required=True, help="PGM (P2/P5) or PPM (P3/P6) input")
    threshold.add_argument("--ps", type=_positive_int, default=100)
    threshold.add_argument("--iters", type=_nonnegative_int, default=50)
    threshold.add_argument("--runs", type=_positive_int, default=5)
    threshold.add_argument("--seed", type=_seed_value, default=None,
                           help="base seed (default: $PROTOZOA_SEED or 0)")
    threshold.add_argument("--engine", choices=("seq", "par", "both"), default="seq")
    threshold.add_argument("--workers", type=_workers_value, default=None)
    threshold.add_argument("--emit", default=None, help="write the binarized last run here")
    threshold.add_argument("--emit-format", choices=("p5", "p2"), default="p5")
    threshold.add_argument("--check-oracle", action="store_true",
                           help="verify every run against the exhaustive search; exit 1 on mismatch")
    threshold.set_defaults(handler=cmd_threshold)

    report = sub.add_parser("report", help="join bench records into a speedup table")
    report.add_argument("--in", dest="inputs", nargs="+", required=True,
                        help="bench CSV/JSON files")
    report.add_argument("--format", choices=("markdown", "csv"), default="markdown")
    report.add_argument("--out", default=None, help="output path (default: stdout)")
    report.set_defaults(handler=cmd_report)
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.handler(args)
    except ImageFormatError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 4
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
