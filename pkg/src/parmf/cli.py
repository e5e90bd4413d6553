"""
Command-line interface: ``parmf {split,train,bench,eval}``.

Every flag can also be set through an environment variable named
``PARMF_`` plus the flag name in upper case with dashes turned into
underscores (``--outer-iters`` -> ``PARMF_OUTER_ITERS``).  Flags given on
the command line win over the environment.

Exit codes: 0 success, 1 usage error, 2 data error, 3 runtime failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import math
import os
import sys
from pathlib import Path

from . import als, ccd, data
from .errors import (
    DataFormatError,
    DimensionError,
    DuplicateEntryError,
    EvaluationError,
    ParameterError,
)
from .model import load_model, rmse, save_model
from .report import rows_to_dicts, speedup_rows, speedup_table
from .runtime import Runtime, default_workers

ENV_PREFIX = "PARMF_"

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_RUNTIME = 3

_log = logging.getLogger("parmf")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _env(flag: str, default):
    return os.environ.get(ENV_PREFIX + flag.lstrip("-").replace("-", "_").upper(), default)


def _add(p, flag, **kw):
    kw["default"] = _env(flag, kw.get("default"))
    p.add_argument(flag, **kw)


def _positive_int(s):
    v = int(s)
    if v < 1:
        raise argparse.ArgumentTypeError(f"must be >= 1, got {v}")
    return v


def _worker_list(s):
    try:
        out = [int(x) for x in str(s).split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {s!r}") from None
    if not out or min(out) < 1:
        raise argparse.ArgumentTypeError(f"worker counts must be >= 1, got {s!r}")
    return out


def _training_flags(p):
    _add(p, "--algorithm", choices=["als", "ccd", "ccdpp"], default="ccdpp")
    _add(p, "--k", type=_positive_int, default=5, help="rank (default 5)")
    _add(p, "--lambda", dest="lam", type=float, default=0.1, help="regularization (default 0.1)")
    _add(p, "--outer-iters", type=_positive_int, default=15)
    _add(p, "--inner-iters", type=_positive_int, default=15, help="CCD++ inner iterations")
    _add(p, "--precision", choices=["single", "double"], default="double")
    _add(p, "--seed", type=int, default=0)
    _add(p, "--train", type=Path, help="training ratings file")
    _add(p, "--probe", type=Path, help="probe ratings file")
    _add(p, "--split-ratio", type=float, help="hold out this fraction of --train as probe")
    _add(p, "--out", type=Path, help="output directory")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="parmf", description="Parallel matrix factorization (ALS, CCD, CCD++).")
    parser.add_argument("-v", "--verbose", action="count", default=0)
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("split", help="split a ratings file into train and probe files")
    p.add_argument("input", type=Path)
    _add(p, "--split-ratio", type=float, default=0.2)
    _add(p, "--seed", type=int, default=0)
    _add(p, "--out", type=Path, default=Path("."))

    p = sub.add_parser("train", help="train a model and write model + report")
    _training_flags(p)
    _add(p, "--workers", type=_positive_int, default=default_workers())

    p = sub.add_parser("bench", help="train once per worker count and print a speedup table")
    _training_flags(p)
    _add(p, "--worker-list", type=_worker_list, default="1," + str(default_workers()))

    p = sub.add_parser("eval", help="RMSE of a saved model on a probe file")
    _add(p, "--model", type=Path, required=_env("--model", None) is None)
    _add(p, "--probe", type=Path, required=_env("--probe", None) is None)
    _add(p, "--mapping", type=Path, help="ID mapping (default: mapping.json next to the model)")
    return parser


def _load_training(args):
    if args.train is None:
        raise UsageError("--train is required")
    if args.probe is not None and args.split_ratio is not None:
        raise UsageError("use either --probe or --split-ratio, not both")
    table = data.read_ratings(args.train)
    probe_table = None
    if args.probe is not None:
        probe_table = data.read_ratings(args.probe)
    elif args.split_ratio is not None:
        train_mask, probe_mask = data.split(table, args.split_ratio, args.seed)
        table, probe_table = table.take(train_mask), table.take(probe_mask)
    a, ids = data.to_matrix(table)
    probe = data.to_probe(probe_table, ids) if probe_table is not None and len(probe_table) else None
    return a, ids, probe


def _run_training(args, a, probe, workers):
    if args.algorithm == "als":
        cfg = als.AlsConfig(args.k, args.lam, args.outer_iters, workers, args.precision, args.seed)
        with Runtime(workers) as rt:
            return als.als_train(cfg, a, probe, rt)
    cfg = ccd.CcdConfig(args.k, args.lam, args.outer_iters, args.inner_iters, workers, args.precision,
                        args.algorithm, args.seed)
    with Runtime(1 if args.algorithm == "ccd" else workers) as rt:
        return ccd.train(cfg, a, probe, rt)


def cmd_split(args) -> int:
    train, probe = data.split_file(args.input, args.split_ratio, args.seed, args.out)
    print(f"wrote {train} and {probe}")
    return EXIT_OK


def cmd_train(args) -> int:
    a, ids, probe = _load_training(args)
    model, report = _run_training(args, a, probe, args.workers)
    if args.out is not None:
        args.out.mkdir(parents=True, exist_ok=True)
        save_model(args.out / "model.bin", model)
        ids.save(args.out / "mapping.json")
        report.write_jsonl(args.out / "report.jsonl")
        (args.out / "report.txt").write_text(report.table() + "\n")
        (args.out / "summary.json").write_text(json.dumps(report.summary(), indent=2) + "\n")
    print(report.table())
    final = "n/a" if report.final_rmse is None else _format_rmse(report.final_rmse)
    print(f"final RMSE {final}, total time {report.train_seconds:.3f}s")
    return EXIT_OK


def cmd_bench(args) -> int:
    if 1 not in args.worker_list:
        raise UsageError("--worker-list must include 1 (the baseline)")
    a, _, probe = _load_training(args)
    reports = [_run_training(args, a, probe, p)[1] for p in args.worker_list]
    rows = speedup_rows(reports)
    table = speedup_table(rows, f"{args.algorithm} ({args.precision}) k={args.k} lambda={args.lam}")
    if args.out is not None:
        args.out.mkdir(parents=True, exist_ok=True)
        (args.out / "bench.txt").write_text(table + "\n")
        with open(args.out / "bench.jsonl", "w") as f:
            for d in rows_to_dicts(rows):
                f.write(json.dumps(d) + "\n")
    print(table)
    return EXIT_OK


def _format_rmse(x: float) -> str:
    # at least 6 significant digits, fixed-point
    digits = 6
    if 0 < x < 0.1:
        digits = 5 - math.floor(math.log10(x))
    return f"{x:.{digits}f}"


def cmd_eval(args) -> int:
    model = load_model(args.model)
    mapping = args.mapping or args.model.parent / "mapping.json"
    table = data.read_ratings(args.probe)
    if Path(mapping).exists():
        probe = data.to_probe(table, data.IdMap.load(mapping))
    else:
        probe = data.ProbeSet(table.users, table.items, table.ratings)
    print(_format_rmse(rmse(model, probe)))
    return EXIT_OK


COMMANDS = {"split": cmd_split, "train": cmd_train, "bench": cmd_bench, "eval": cmd_eval}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2),
                        format="%(asctime)s %(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except (UsageError, ParameterError) as e:
        print(f"parmf {args.command}: usage error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except (DataFormatError, DimensionError, DuplicateEntryError, EvaluationError, FileNotFoundError,
            IsADirectoryError) as e:
        print(f"parmf {args.command}: data error: {e}", file=sys.stderr)
        return EXIT_DATA
    except MemoryError:
        print(f"parmf {args.command}: out of memory; the input is too large for this host", file=sys.stderr)
        return EXIT_RUNTIME
    except Exception as e:  # noqa: BLE001
        _log.debug("unhandled failure", exc_info=True)
        print(f"parmf {args.command}: failed: {type(e).__name__}: {e}", file=sys.stderr)
        return EXIT_RUNTIME
