"""Command-line interface: ``pcplus fit | cv | bench | plotdata``.

Exit codes: 0 success, 2 I/O error, 3 parse error, 4 numerical failure,
5 invalid input (too few observations, unknown scenario or method).
"""

from __future__ import annotations

import argparse
import csv
import datetime as _dt
import io
import json
import math
import os
import sys
from importlib import resources
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from . import __version__
from .bench import METHODS, results_to_csv, results_to_json, run_bench
from .cv import cv_fit, cross_validate, make_grid
from .lasso import ConvergenceError
from .model import INFINITE, FitResult, olshen_signal, shifted_cosine_signal, standard_signals
from .pipeline import PipelineConfig, fit

EXIT_OK = 0
EXIT_IO = 2
EXIT_PARSE = 3
EXIT_NUMERIC = 4
EXIT_INVALID = 5

SCENARIOS = ("olshen", "shifted_cosine", "blocks", "heavisine")
PLOT_HEADER = ("index", "y", "f_hat", "g_hat", "h_hat")


class CliError(Exception):
    def __init__(self, code: int, message: str):
        super().__init__(message)
        self.code = code


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise CliError(EXIT_PARSE, f"{self.prog}: error: {message}")


# ---------------------------------------------------------------------------
# I/O helpers


def schema(name: str) -> dict:
    """Published JSON schema for ``fit``, ``cv`` or ``bench`` output, with the
    manifest reference inlined."""
    base = resources.files("pcplus") / "schemas"
    doc = json.loads((base / f"{name}.schema.json").read_text(encoding="utf-8"))
    manifest = json.loads((base / "manifest.schema.json").read_text(encoding="utf-8"))
    manifest.pop("$schema", None)
    manifest.pop("$id", None)
    doc["properties"]["manifest"] = manifest
    return doc


def read_series(path: str) -> np.ndarray:
    """Read the ``value`` column of a UTF-8 CSV with a header row."""
    try:
        text = Path(path).read_text(encoding="utf-8")
    except (OSError, UnicodeDecodeError) as exc:
        raise CliError(EXIT_IO, f"cannot read {path}: {exc}") from exc
    reader = csv.DictReader(io.StringIO(text))
    if reader.fieldnames is None or "value" not in [f.strip() for f in reader.fieldnames]:
        raise CliError(EXIT_PARSE, f"{path}: header must contain a 'value' column")
    key = next(f for f in reader.fieldnames if f.strip() == "value")
    vals = []
    for lineno, row in enumerate(reader, start=2):
        raw = (row.get(key) or "").strip()
        try:
            v = float(raw)
        except ValueError:
            raise CliError(EXIT_PARSE, f"{path}:{lineno}: non-numeric value {raw!r}") from None
        if not math.isfinite(v):
            raise CliError(EXIT_PARSE, f"{path}:{lineno}: non-finite value {raw!r}")
        vals.append(v)
    if len(vals) < 3:
        raise CliError(EXIT_INVALID, f"{path}: need at least 3 observations, got {len(vals)}")
    return np.array(vals)


def _write(text: str, out: Optional[str]) -> None:
    if out is None or out == "-":
        sys.stdout.write(text)
        return
    try:
        Path(out).write_text(text, encoding="utf-8")
    except OSError as exc:
        raise CliError(EXIT_IO, f"cannot write {out}: {exc}") from exc


def _bw_out(h: float):
    return "inf" if math.isinf(h) else float(h)


def _parse_bandwidth(text: str) -> float:
    if text.strip().lower() in ("inf", "infinite", "infinity"):
        return INFINITE
    try:
        h = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"bandwidth must be a positive number or 'inf', got {text!r}") from None
    if not h > 0:
        raise argparse.ArgumentTypeError("bandwidth must be positive")
    return h


def _timestamp() -> str:
    """UTC time of the run; ``SOURCE_DATE_EPOCH`` pins it for byte-identical reruns."""
    pinned = os.environ.get("SOURCE_DATE_EPOCH")
    if pinned is not None:
        try:
            when = _dt.datetime.fromtimestamp(int(pinned), _dt.timezone.utc)
        except (ValueError, OverflowError, OSError):
            raise CliError(EXIT_INVALID, f"SOURCE_DATE_EPOCH must be an integer, got {pinned!r}") from None
    else:
        when = _dt.datetime.now(_dt.timezone.utc)
    return when.isoformat(timespec="seconds")


def _manifest(command: str, source: str, args: argparse.Namespace) -> dict:
    skip = {"func", "output", "command"}
    cfg = {}
    for k, v in sorted(vars(args).items()):
        if k in skip:
            continue
        cfg[k] = _bw_out(v) if isinstance(v, float) and math.isinf(v) else v
    return {
        "command": command,
        "source": source,
        "config": cfg,
        "version": __version__,
        "timestamp": _timestamp(),
        "schema_version": 1,
    }


def _dump(doc: dict) -> str:
    return json.dumps(doc, indent=2, allow_nan=False) + "\n"


# ---------------------------------------------------------------------------
# commands


def fit_document(y: np.ndarray, res: FitResult, smoother: str) -> dict:
    f = res.f_hat
    return {
        "n": int(y.size),
        "y": y.tolist(),
        "change_indices": f.change_indices.tolist(),
        "jump_sizes": f.jump_sizes.tolist(),
        "levels": f.levels.tolist(),
        "f_hat": f.to_vector().tolist(),
        "g_hat": res.g_hat.tolist(),
        "h_hat": res.h_hat.tolist(),
        "bandwidth": _bw_out(res.bandwidth),
        "lambda": float(res.lam),
        "cv_score": None if res.cv_score is None else float(res.cv_score),
        "smoother": smoother,
    }


def cmd_fit(args) -> int:
    y = read_series(args.input)
    if args.bandwidth is not None and args.lam is not None:
        cfg = PipelineConfig(bandwidth=args.bandwidth, lam=args.lam, smoother_kind=args.smoother, kernel=args.kernel)
        res = fit(y, cfg)
    else:
        # a lone --bandwidth fixes h and cross-validates lambda only
        bws = None if args.bandwidth is None else [args.bandwidth]
        res, _ = cv_fit(
            y, V=args.folds, n_h=args.nh, n_lambda=args.nlambda, loss=args.loss,
            smoother_kind=args.smoother, kernel=args.kernel, bandwidths=bws, threads=args.threads,
        )
    doc = {"manifest": _manifest("fit", args.input, args)}
    doc.update(fit_document(y, res, args.smoother))
    _write(_dump(doc), args.output)
    return EXIT_OK


def cmd_cv(args) -> int:
    y = read_series(args.input)
    grid = make_grid(y.size, args.nh, args.nlambda, y, smoother_kind=args.smoother, kernel=args.kernel)
    rep = cross_validate(y, grid, args.folds, loss=args.loss, kernel=args.kernel, threads=args.threads)
    scores = [[None if not math.isfinite(s) else float(s) for s in row] for row in rep.scores]
    h, lam = rep.selected
    doc = {
        "manifest": _manifest("cv", args.input, args),
        "n": int(y.size),
        "bandwidths": [_bw_out(float(b)) for b in grid.bandwidths],
        "lambdas": [np.asarray(l, dtype=float).tolist() for l in grid.lambdas],
        "scores": scores,
        "selected": {"bandwidth": _bw_out(h), "lambda": float(lam), "score": rep.best_score, "index": list(rep.selected_index)},
        "loss": args.loss,
        "folds": args.folds,
    }
    _write(_dump(doc), args.output)
    return EXIT_OK


def make_scenario(name: str, a: Optional[float], b: float, n: Optional[int]):
    """``a`` defaults to 0 for olshen/shifted_cosine and to a signal-to-noise
    ratio of 4 for blocks/heavisine."""
    if name == "olshen":
        return olshen_signal(0.0 if a is None else a, b)
    if name == "shifted_cosine":
        return shifted_cosine_signal(0.0 if a is None else a)
    if name in ("blocks", "heavisine"):
        return standard_signals(name, 2048 if n is None else n, 4.0 if a is None else a)
    raise CliError(EXIT_INVALID, f"unknown scenario {name!r}; choose from {', '.join(SCENARIOS)}")


def cmd_bench(args) -> int:
    methods = [m.strip() for m in args.methods.split(",") if m.strip()]
    unknown = [m for m in methods if m not in METHODS]
    if not methods or unknown:
        raise CliError(EXIT_INVALID, f"unknown method(s) {', '.join(unknown) or '(none)'}; choose from {', '.join(METHODS)}")
    try:
        sc = make_scenario(args.scenario, args.a, args.b, args.n)
    except ValueError as exc:
        raise CliError(EXIT_INVALID, str(exc)) from exc
    results = run_bench(sc, methods, args.reps, args.seed, threads=args.threads)
    man = _manifest("bench", args.scenario, args)
    if args.format == "json":
        _write(_dump({"manifest": man, "results": results_to_json(results)}), args.output)
    else:
        _write("# manifest: " + json.dumps(man, sort_keys=True) + "\n" + results_to_csv(results), args.output)
    return EXIT_OK


def plotdata_rows(doc: dict) -> str:
    try:
        y = [float(v) for v in doc["y"]]
        f = [float(v) for v in doc["f_hat"]]
        g = [float(v) for v in doc["g_hat"]]
    except (KeyError, TypeError, ValueError) as exc:
        raise CliError(EXIT_PARSE, f"fit JSON lacks numeric y/f_hat/g_hat arrays: {exc}") from exc
    if not (len(y) == len(f) == len(g)):
        raise CliError(EXIT_PARSE, "fit JSON arrays have different lengths")
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(PLOT_HEADER)
    for i, (yi, fi, gi) in enumerate(zip(y, f, g), start=1):
        w.writerow([i, repr(yi), repr(fi), repr(gi), repr(fi + gi)])
    return buf.getvalue()


def cmd_plotdata(args) -> int:
    try:
        text = Path(args.input).read_text(encoding="utf-8")
    except (OSError, UnicodeDecodeError) as exc:
        raise CliError(EXIT_IO, f"cannot read {args.input}: {exc}") from exc
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise CliError(EXIT_PARSE, f"{args.input}: malformed JSON: {exc}") from exc
    if not isinstance(doc, dict):
        raise CliError(EXIT_PARSE, f"{args.input}: expected a JSON object")
    _write(plotdata_rows(doc), args.output)
    return EXIT_OK


# ---------------------------------------------------------------------------


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--folds", type=int, default=5, help="number of CV folds (default 5)")
    p.add_argument("--loss", choices=("l1", "l2"), default="l1", help="CV loss (default l1)")
    p.add_argument("--kernel", choices=("epanechnikov",), default="epanechnikov")
    p.add_argument("--smoother", choices=("kernel", "spline"), default="kernel")
    p.add_argument("--nh", type=int, default=30, help="finite bandwidths on the CV grid (default 30)")
    p.add_argument("--nlambda", type=int, default=30, help="lambdas per bandwidth (default 30)")
    p.add_argument("--seed", type=int, default=0, help="master seed (fit/cv are deterministic regardless)")
    p.add_argument("--threads", type=int, default=1, help="concurrent CV cells or replications")
    p.add_argument("-o", "--output", default=None, help="output path (default stdout)")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="pcplus", description="Piecewise constant plus smooth regression.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("fit", help="fit a series from CSV, cross-validating unless both tuning values are given")
    p.add_argument("input", help="CSV file with a 'value' column")
    p.add_argument("--bandwidth", type=_parse_bandwidth, default=None, help="bandwidth h or 'inf'")
    p.add_argument("--lambda", dest="lam", type=float, default=None, help="fused-Lasso penalty")
    _common(p)
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("cv", help="report the full cross-validation score grid")
    p.add_argument("input", help="CSV file with a 'value' column")
    _common(p)
    p.set_defaults(func=cmd_cv)

    p = sub.add_parser("bench", help="Monte-Carlo benchmark on a built-in scenario")
    p.add_argument("--scenario", required=True, help=f"one of {', '.join(SCENARIOS)}")
    p.add_argument("--a", type=float, default=None, help="scenario parameter a")
    p.add_argument("--b", type=float, default=0.0, help="scenario parameter b (olshen only)")
    p.add_argument("--n", type=int, default=None, help="length for blocks/heavisine (default 2048)")
    p.add_argument("--reps", type=int, default=200)
    p.add_argument("--methods", default="pcplus,pelt", help=f"comma list from {', '.join(METHODS)}")
    p.add_argument("--format", choices=("csv", "json"), default="csv")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--threads", type=int, default=1)
    p.add_argument("-o", "--output", default=None)
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("plotdata", help="turn fit JSON into index,y,f_hat,g_hat,h_hat CSV")
    p.add_argument("input", help="JSON written by 'pcplus fit'")
    p.add_argument("-o", "--output", default=None)
    p.set_defaults(func=cmd_plotdata)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if getattr(args, "folds", 5) < 2:
            raise CliError(EXIT_INVALID, "--folds must be at least 2")
        if getattr(args, "reps", 1) < 1:
            raise CliError(EXIT_INVALID, "--reps must be at least 1")
        if getattr(args, "lam", None) is not None and not args.lam >= 0:
            raise CliError(EXIT_INVALID, "--lambda must be nonnegative")
        return args.func(args)
    except CliError as exc:
        print(str(exc), file=sys.stderr)
        return exc.code
    except (ConvergenceError, np.linalg.LinAlgError, FloatingPointError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except ValueError as exc:
        print(f"invalid input: {exc}", file=sys.stderr)
        return EXIT_INVALID


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
