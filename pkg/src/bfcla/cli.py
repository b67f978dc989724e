"""Command line interface: ``bfcla test|solve|simulate``.

Exit codes: 0 success, 1 internal error, 2 invalid or degenerate input,
3 configuration error.
"""

import argparse
import csv
import hashlib
import io
import json
import math
import os
import sys
from dataclasses import asdict, dataclass, field
from datetime import datetime, timezone

import numpy as np

from . import __version__
from .errors import (ConfigError, DegenerateSample, InputError, NonFinite, NotPositiveDefinite,
                     ParseError, RaggedRows)
from .mltests import DEFAULT_ALPHAS, run_tests
from .montecarlo import (StudyConfig, discrepancy_study, power_study, size_study,
                         timing_study)
from .solvers import run_cla, run_da
from .stats_core import summarize

SCHEMA_VERSION = 1
EXIT_OK, EXIT_INTERNAL, EXIT_INPUT, EXIT_CONFIG = 0, 1, 2, 3
TIDY_COLUMNS = ("test", "alpha", "delta", "rate", "stderr", "reps", "seed")
TIMING_COLUMNS = ("algorithm", "mean_iterations", "mean_seconds", "reps", "seed")
DESK_MAX_D = 100
DESK_MAX_REPS = 100_000

# (d, N1) cells of the size table up to d = 100, with N2 = 2 N1
SIZE_GRID = tuple((d, k * d) for d in (2, 5, 10) for k in (5, 10, 20)) + tuple(
    (d, k * d) for d in (25, 50, 75, 100) for k in (5, 10, 20))


# ---------------------------------------------------------------- ingestion

def _is_number(text):
    try:
        float(text)
    except ValueError:
        return False
    return True


def ingest_csv(path):
    """Read a rectangular numeric CSV (one observation per row) into an N x d array.

    A first row containing any non-numeric cell is taken as a header.
    """
    with open(path, newline="") as fh:
        rows = [(i + 1, row) for i, row in enumerate(csv.reader(fh))]
    rows = [(i, [c.strip() for c in row]) for i, row in rows if any(c.strip() for c in row)]
    if rows and not all(_is_number(c) for c in rows[0][1]):
        rows = rows[1:]
    if not rows:
        raise ParseError(f"{path}: no numeric rows")
    width = len(rows[0][1])
    data = np.empty((len(rows), width))
    for k, (line, row) in enumerate(rows):
        if len(row) != width:
            raise RaggedRows(f"{path}: row {line} has {len(row)} columns, expected {width}")
        for j, cell in enumerate(row):
            try:
                value = float(cell)
            except ValueError:
                raise ParseError(f"{path}: row {line}, column {j + 1}: "
                                 f"cannot parse {cell!r} as a number") from None
            if not math.isfinite(value):
                raise NonFinite(f"{path}: row {line}, column {j + 1}: non-finite value {cell!r}")
            data[k, j] = value
    return data


def file_digest(path):
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 16), b""):
            h.update(block)
    return h.hexdigest()


# ---------------------------------------------------------------- manifest and output

def _now():
    return datetime.now(timezone.utc).isoformat()


@dataclass
class RunManifest:
    subcommand: str
    config: dict
    seed: int | None = None
    input_digests: dict = field(default_factory=dict)
    tool_version: str = __version__
    started_at: str = field(default_factory=_now)
    finished_at: str | None = None

    def finish(self):
        self.finished_at = _now()
        return self


def _clean(obj):
    """JSON-ready copy: numpy scalars and arrays unwrapped, non-finite floats to null."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_clean(v) for v in obj.tolist()]
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        value = float(obj)
        return value if math.isfinite(value) else None
    return obj


def dumps_json(payload):
    # float repr is the shortest string that round-trips exactly
    return json.dumps(_clean(payload), indent=2, sort_keys=False) + "\n"


def _csv_cell(value):
    if isinstance(value, (bool, np.bool_)):
        return "true" if value else "false"
    if isinstance(value, (float, np.floating)):
        return format(float(value), ".17g")
    if value is None:
        return ""
    return str(value)


def dumps_csv(columns, rows):
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(columns)
    for row in rows:
        writer.writerow([_csv_cell(row.get(c)) for c in columns])
    return buf.getvalue()


def _write(path, text):
    directory = os.path.dirname(path)
    if directory:
        os.makedirs(directory, exist_ok=True)
    with open(path, "w", newline="") as fh:
        fh.write(text)


def _emit(args, manifest, payload, columns, rows):
    """Write ``payload`` as JSON or the tidy rows as CSV, to ``--out`` or stdout."""
    manifest.finish()
    document = {"schema_version": SCHEMA_VERSION, "manifest": asdict(manifest), **payload}
    if args.format == "csv":
        text = dumps_csv(columns, rows)
        if args.out:
            _write(args.out, text)
            _write(args.out + ".manifest.json",
                   dumps_json({"schema_version": SCHEMA_VERSION, "manifest": asdict(manifest),
                               "data_file": os.path.basename(args.out)}))
        else:
            sys.stdout.write(text)
    else:
        text = dumps_json(document)
        if args.out:
            _write(args.out, text)
        else:
            sys.stdout.write(text)


# ---------------------------------------------------------------- test / solve

def _load_pair(args):
    x = ingest_csv(args.x)
    y = ingest_csv(args.y)
    if x.shape[1] != y.shape[1]:
        raise InputError(f"dimension mismatch: {args.x} has {x.shape[1]} columns, "
                         f"{args.y} has {y.shape[1]}")
    digests = {args.x: file_digest(args.x), args.y: file_digest(args.y)}
    return summarize(x, y), digests


def cmd_test(args):
    summary, digests = _load_pair(args)
    alphas = tuple(args.alpha) if args.alpha else DEFAULT_ALPHAS
    config = {"epsilon": args.epsilon, "alphas": list(alphas), "relative": args.relative}
    manifest = RunManifest("test", config, input_digests=digests)
    solution = run_cla(summary, args.epsilon, relative=args.relative)
    report = run_tests(summary, args.epsilon, alphas, solution=solution)
    rows = [{"statistic": name, "alpha": alpha, "value": report.statistic(name),
             "p_value": report.p_values[name], "reject": report.decisions[(name, alpha)]}
            for name in ("W", "LR0", "LR", "LM", "B") for alpha in report.alphas]
    _emit(args, manifest, {"report": report.to_dict()},
          ("statistic", "alpha", "value", "p_value", "reject"), rows)
    return EXIT_OK


def _solution_dict(sol, trace):
    out = {
        "algorithm": sol.algorithm, "epsilon": sol.epsilon, "mu_hat": sol.mu_hat,
        "u1": sol.u1, "u2": sol.u2, "f_star": sol.f_star, "lower_bound": sol.lower_bound,
        "gap": sol.gap, "iterations": sol.iterations, "source": sol.source, "ties": sol.ties,
    }
    if trace:
        out["trace"] = list(sol.trace)
    return out


TRACE_COLUMNS = ("iteration", "u1", "u2", "f", "f_hat", "f_best", "gap")
SOLVE_COLUMNS = ("algorithm", "epsilon", "u1", "u2", "f_star", "lower_bound", "gap",
                 "iterations", "source")


def cmd_solve(args):
    summary, digests = _load_pair(args)
    config = {"epsilon": args.epsilon, "algorithm": args.algorithm, "relative": args.relative}
    manifest = RunManifest("solve", config, input_digests=digests)
    if args.algorithm == "da":
        sol = run_da(summary, args.epsilon)
    else:
        sol = run_cla(summary, args.epsilon, relative=args.relative)
    payload = {"solution": _solution_dict(sol, args.trace)}
    if args.trace:
        columns, rows = TRACE_COLUMNS, list(sol.trace)
    else:
        columns, rows = SOLVE_COLUMNS, [_solution_dict(sol, False)]
    _emit(args, manifest, payload, columns, rows)
    return EXIT_OK


# ---------------------------------------------------------------- simulate

def _study_config(args, d, n1, n2):
    return StudyConfig(d=d, n1=n1, n2=n2, reps=args.reps,
                       alphas=tuple(args.alpha) if args.alpha else DEFAULT_ALPHAS,
                       epsilon=args.epsilon, seed=args.seed, delta_grid=tuple(args.deltas),
                       algorithm=args.algorithm, threads=args.threads)


def _config_record(config):
    record = config.to_dict()
    record.pop("threads")  # execution detail; results do not depend on it
    return record


def _run_study(kind, config, args):
    if kind == "size":
        return size_study(config)
    if kind == "power":
        return power_study(config)
    if kind == "discrepancy":
        return discrepancy_study(config, successes=args.successes, alpha=args.level,
                                 max_reps=args.max_reps)
    return timing_study(config, include_da=not args.no_da)


def _result_payload(result):
    out = result.to_dict()
    out["config"] = _config_record(result.config)
    return out


def _timing_rows(result):
    return [{"algorithm": name, "mean_iterations": stats["mean_iterations"],
             "mean_seconds": stats["mean_seconds"], "reps": result.reps_used,
             "seed": result.config.seed}
            for name, stats in result.extra.items()]


def _summary_table(result):
    lines = [f"{result.kind} study  d={result.config.d} n1={result.config.n1} "
             f"n2={result.config.n2} reps={result.reps_used} seed={result.config.seed}"]
    if result.kind == "timing":
        lines.append(f"{'algorithm':<10}{'iterations':>12}{'seconds':>14}")
        for row in _timing_rows(result):
            lines.append(f"{row['algorithm']:<10}{row['mean_iterations']:>12.2f}"
                         f"{row['mean_seconds']:>14.6f}")
        return "\n".join(lines)
    lines.append(f"{'test':<8}{'alpha':>8}{'delta':>10}{'rate':>10}{'stderr':>10}")
    for row in result.rows():
        lines.append(f"{row['test']:<8}{row['alpha']:>8.3f}{row['delta']:>10.4g}"
                     f"{row['rate']:>10.4f}{row['stderr']:>10.4f}")
    return "\n".join(lines)


def _simulate_cells(args):
    if args.d is not None:
        if args.n1 is None:
            raise ConfigError("--n1 is required with --d")
        return [(args.d, args.n1, args.n2)]
    if args.full_scale and args.kind in ("size", "timing"):
        return [(d, n1, None) for d, n1 in SIZE_GRID]
    raise ConfigError("--d and --n1 are required (or use --full-scale for the size grid)")


def cmd_simulate(args):
    cells = _simulate_cells(args)
    configs = [_study_config(args, d, n1, n2) for d, n1, n2 in cells]
    if not args.full_scale:
        for c in configs:
            if c.d > DESK_MAX_D:
                raise ConfigError(f"d={c.d} exceeds {DESK_MAX_D}; pass --full-scale to allow it")
            if c.reps > DESK_MAX_REPS:
                raise ConfigError(f"reps={c.reps} exceeds {DESK_MAX_REPS}; "
                                  "pass --full-scale to allow it")
    print(f"seed = {args.seed}", file=sys.stderr)
    single = len(configs) == 1
    for config in configs:
        manifest = RunManifest(f"simulate {args.kind}", _config_record(config), seed=config.seed)
        if args.kind == "discrepancy":
            manifest.config.update(successes=args.successes, level=args.level,
                                   max_reps=args.max_reps)
        result = _run_study(args.kind, config, args)
        # the table shares stdout only when the document goes to files
        print(_summary_table(result), file=sys.stdout if args.out else sys.stderr)
        if args.kind == "timing":
            columns, rows = TIMING_COLUMNS, _timing_rows(result)
        else:
            columns, rows = TIDY_COLUMNS, result.rows()
        manifest.finish()
        document = {"schema_version": SCHEMA_VERSION, "manifest": asdict(manifest),
                    "result": _result_payload(result)}
        if args.out:
            base = args.out
            for suffix in (".json", ".csv"):
                if base.endswith(suffix):
                    base = base[: -len(suffix)]
            if not single:
                base = f"{base}_d{config.d}_n{config.n1}"
            _write(base + ".json", dumps_json(document))
            _write(base + ".csv", dumps_csv(columns, rows))
            _write(base + ".csv.manifest.json",
                   dumps_json({"schema_version": SCHEMA_VERSION, "manifest": asdict(manifest),
                               "data_file": os.path.basename(base + ".csv")}))
        elif args.format == "csv":
            sys.stdout.write(dumps_csv(columns, rows))
        else:
            sys.stdout.write(dumps_json(document))
    return EXIT_OK


# ---------------------------------------------------------------- parser

class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_CONFIG, f"{self.prog}: error: {message}\n")


def _positive_float(text):
    value = float(text)
    if not value > 0.0 or not math.isfinite(value):
        raise argparse.ArgumentTypeError(f"must be a positive number, got {text}")
    return value


def _level(text):
    value = float(text)
    if not 0.0 < value < 1.0:
        raise argparse.ArgumentTypeError(f"must lie in (0, 1), got {text}")
    return value


def _delta_list(text):
    try:
        values = [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a comma separated list of numbers: {text}")
    if not values or any(v < 0 or not math.isfinite(v) for v in values):
        raise argparse.ArgumentTypeError(f"deltas must be nonnegative numbers: {text}")
    return values


def build_parser():
    parser = _Parser(prog="bfcla", description="Global likelihood solutions and tests for "
                     "the two-sample Gaussian mean problem with unequal covariances.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(p, default_eps):
        p.add_argument("--epsilon", "--eps", type=_positive_float, default=default_eps,
                       help="optimality tolerance of the solver")
        p.add_argument("--alpha", type=_level, action="append",
                       help="test level; repeatable (default 0.01 0.05 0.10)")
        p.add_argument("--out", help="output path (default: standard output)")
        p.add_argument("--format", choices=("json", "csv"), default="json")

    p = sub.add_parser("test", help="W, LR0, LR, LM and B tests on two samples")
    p.add_argument("x", help="CSV file of the X sample")
    p.add_argument("y", help="CSV file of the Y sample")
    common(p, 1e-8)
    p.add_argument("--relative", action="store_true", help="treat epsilon as relative")
    p.set_defaults(func=cmd_test)

    p = sub.add_parser("solve", help="maximum likelihood common mean with a certificate")
    p.add_argument("x")
    p.add_argument("y")
    common(p, 1e-8)
    p.add_argument("--algorithm", choices=("cla", "da"), default="cla")
    p.add_argument("--trace", action="store_true", help="include per-iteration trace")
    p.add_argument("--relative", action="store_true", help="treat epsilon as relative")
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("simulate", help="seeded Monte Carlo studies")
    p.add_argument("kind", choices=("size", "power", "discrepancy", "timing"))
    common(p, 1e-6)
    p.add_argument("--d", type=int)
    p.add_argument("--n1", type=int)
    p.add_argument("--n2", type=int, help="default 2 * n1")
    p.add_argument("--reps", type=int, default=2000)
    p.add_argument("--deltas", type=_delta_list, default=[0.0], help="comma list (power)")
    p.add_argument("--seed", type=int, default=42)
    p.add_argument("--threads", type=int, default=1)
    p.add_argument("--algorithm", choices=("cla", "da"), default="cla")
    p.add_argument("--trace", action="store_true", help=argparse.SUPPRESS)
    p.add_argument("--successes", type=int, help="discrepancy: stop after this many LR0 "
                   "discrepancies")
    p.add_argument("--max-reps", type=int, help="discrepancy: cap with --successes")
    p.add_argument("--level", type=_level, default=0.05, help="discrepancy test level")
    p.add_argument("--no-da", action="store_true", help="timing: skip the grid algorithm")
    p.add_argument("--full-scale", action="store_true",
                   help="allow d > 100 and huge reps; without --d run the size grid")
    p.set_defaults(func=cmd_simulate)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (InputError, DegenerateSample, NotPositiveDefinite) as exc:
        print(f"input error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except OSError as exc:
        print(f"input error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except Exception as exc:  # noqa: BLE001
        print(f"internal error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
