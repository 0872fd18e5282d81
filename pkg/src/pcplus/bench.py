"""Monte-Carlo evaluation: averaged MSE and change-point detection summaries."""

from __future__ import annotations

import csv
import io
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable, Dict, List, Sequence

import numpy as np

from .cv import cross_validate_smoother, cv_fit, loocv_kernel_bandwidth
from .model import INFINITE, Scenario, StepFunction, simulate
from .pelt import PeltConfig, pelt, sic_penalty
from .pipeline import PipelineConfig, make_smoother
from .smoother import apply_smoother

__all__ = [
    "HIST_BINS",
    "METHODS",
    "DetectionSummary",
    "BenchResult",
    "amse",
    "detection_tolerance",
    "match_changes",
    "detection_metrics",
    "aggregate_detection",
    "run_bench",
    "replication_seeds",
    "results_to_csv",
    "results_to_json",
    "CSV_COLUMNS",
]

HIST_BINS = ("<-2", "-2", "-1", "0", "1", "2", ">2")


@dataclass(frozen=True)
class DetectionSummary:
    mean_bias: float
    histogram: tuple  # proportions over HIST_BINS
    pct_detected: float

    def as_dict(self) -> dict:
        return {"mean_bias": self.mean_bias, "histogram": dict(zip(HIST_BINS, self.histogram)), "pct_detected": self.pct_detected}


@dataclass(frozen=True)
class BenchResult:
    scenario: str
    method: str
    amse: float
    detection: DetectionSummary
    reps: int
    seed: int
    params: tuple = ()
    seconds: float = 0.0

    def __post_init__(self):
        if self.reps < 1:
            raise ValueError("reps must be at least 1")


def amse(h_hat, h_true) -> float:
    """``(1/n) sum (h_hat_i - h_i)^2``."""
    a = np.asarray(h_hat, dtype=float)
    b = np.asarray(h_true, dtype=float)
    if a.shape != b.shape:
        raise ValueError(f"length mismatch: {a.shape} vs {b.shape}")
    return float(np.mean((a - b) ** 2))


def detection_tolerance(truth) -> int:
    """``min(3, floor(min gap / 2))`` in index units; 3 for a single change.

    Never below 1, so an exact hit always counts under the strict test.
    """
    t = np.asarray(truth, dtype=np.int64)
    if t.size < 2:
        return 3
    return int(max(1, min(3, np.diff(t).min() // 2)))


def match_changes(est, truth, tol: int) -> list:
    """Greedy one-to-one nearest matching of estimates to true changes with
    distance strictly below ``tol``; returns ``(true, estimate)`` pairs."""
    est = np.asarray(est, dtype=np.int64)
    truth = np.asarray(truth, dtype=np.int64)
    pairs = sorted(
        (abs(int(e) - int(t)), int(t), int(e)) for t in truth for e in est if abs(int(e) - int(t)) < tol
    )
    used_t, used_e, out = set(), set(), []
    for _, t, e in pairs:
        if t not in used_t and e not in used_e:
            used_t.add(t)
            used_e.add(e)
            out.append((t, e))
    return out


def _bin(diff: int) -> int:
    if diff < -2:
        return 0
    if diff > 2:
        return 6
    return diff + 3


def detection_metrics(est, truth, tol=None) -> DetectionSummary:
    """Summary for one estimate; ``est`` is a StepFunction or change indices."""
    if isinstance(est, StepFunction):
        est = est.change_indices
    est = np.asarray(est, dtype=np.int64)
    truth = np.asarray(truth, dtype=np.int64)
    tol = detection_tolerance(truth) if tol is None else tol
    diff = int(est.size - truth.size)
    hist = [0.0] * len(HIST_BINS)
    hist[_bin(diff)] = 1.0
    pct = 100.0 if truth.size == 0 else 100.0 * len(match_changes(est, truth, tol)) / truth.size
    return DetectionSummary(mean_bias=float(diff), histogram=tuple(hist), pct_detected=pct)


def aggregate_detection(items: Sequence[DetectionSummary]) -> DetectionSummary:
    m = len(items)
    if m == 0:
        raise ValueError("nothing to aggregate")
    hist = np.sum([d.histogram for d in items], axis=0) / m
    return DetectionSummary(
        mean_bias=float(np.mean([d.mean_bias for d in items])),
        histogram=tuple(float(x) for x in hist),
        pct_detected=float(np.mean([d.pct_detected for d in items])),
    )


# ---------------------------------------------------------------------------
# methods: each maps observations to (h_hat, estimated change indices or None)


def _method_pcplus(y, sc):
    res, _ = cv_fit(y)
    return res.h_hat, res.f_hat.change_indices


def _method_pelt(y, sc):
    f = pelt(y, PeltConfig(sic_penalty(y)))
    return f.to_vector(), f.change_indices


def _method_fl(y, sc):
    res, _ = cv_fit(y, bandwidths=[INFINITE], post_filter=False)
    return res.h_hat, res.f_hat.change_indices


def _method_kern_vfold(y, sc):
    _, h = cross_validate_smoother(y)
    S = make_smoother(y.size, PipelineConfig(bandwidth=h, lam=0.0))
    return apply_smoother(S, y), None


def _method_kern_loocv(y, sc):
    _, h = loocv_kernel_bandwidth(y)
    S = make_smoother(y.size, PipelineConfig(bandwidth=h, lam=0.0))
    return apply_smoother(S, y), None


def _method_oracle(y, sc):
    return np.array(sc.signal), sc.true_changes


METHODS: Dict[str, Callable] = {
    "pcplus": _method_pcplus,
    "pelt": _method_pelt,
    "fl": _method_fl,
    "kernsmooth_vfold": _method_kern_vfold,
    "kernsmooth_loocv": _method_kern_loocv,
    "oracle": _method_oracle,
}


def replication_seeds(seed: int, reps: int) -> List[int]:
    """Per-replication seeds derived from the master seed."""
    return [int(s.generate_state(1)[0]) for s in np.random.SeedSequence(seed).spawn(reps)]


def _one_rep(sc: Scenario, methods, rep_seed: int):
    y = simulate(sc, rep_seed).values
    out = {}
    for m in methods:
        t0 = time.perf_counter()
        h_hat, cps = METHODS[m](y, sc)
        out[m] = (amse(h_hat, sc.signal), None if cps is None else detection_metrics(cps, sc.true_changes), time.perf_counter() - t0)
    return out


def run_bench(
    sc: Scenario,
    methods: Sequence[str],
    reps: int = 200,
    seed: int = 0,
    *,
    threads: int = 1,
    progress: Callable = None,
) -> List[BenchResult]:
    """Evaluate ``methods`` on ``reps`` noisy replications of ``sc``.

    Kernel smoothers report no change-points; their detection summary treats
    the estimate as empty.
    """
    if reps < 1:
        raise ValueError("reps must be at least 1")
    methods = list(methods)
    unknown = [m for m in methods if m not in METHODS]
    if unknown:
        raise ValueError(f"unknown method(s): {', '.join(unknown)}; choose from {', '.join(METHODS)}")
    seeds = replication_seeds(seed, reps)
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as ex:
            per_rep = list(ex.map(lambda s: _one_rep(sc, methods, s), seeds))
    else:
        per_rep = []
        for i, s in enumerate(seeds):
            per_rep.append(_one_rep(sc, methods, s))
            if progress is not None:
                progress(i + 1, reps)
    results = []
    empty = detection_metrics([], sc.true_changes)
    for m in methods:
        errs = [r[m][0] for r in per_rep]
        dets = [r[m][1] if r[m][1] is not None else empty for r in per_rep]
        results.append(
            BenchResult(
                scenario=sc.name,
                method=m,
                amse=float(np.mean(errs)),
                detection=aggregate_detection(dets),
                reps=reps,
                seed=seed,
                params=tuple(sorted(sc.params.items())),
                seconds=float(sum(r[m][2] for r in per_rep)),
            )
        )
    return results


CSV_COLUMNS = (
    "scenario", "params", "method", "reps", "seed", "amse", "mean_bias",
    "lt_m2", "m2", "m1", "zero", "p1", "p2", "gt_p2", "pct_detected",
)


def _row(r: BenchResult) -> list:
    params = ";".join(f"{k}={v}" for k, v in r.params)
    return [r.scenario, params, r.method, r.reps, r.seed, repr(r.amse), repr(r.detection.mean_bias)] + [
        repr(x) for x in r.detection.histogram
    ] + [repr(r.detection.pct_detected)]


def results_to_csv(results: Sequence[BenchResult]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_COLUMNS)
    for r in results:
        w.writerow(_row(r))
    return buf.getvalue()


def results_to_json(results: Sequence[BenchResult]) -> list:
    out = []
    for r in results:
        d = {
            "scenario": r.scenario,
            "params": dict(r.params),
            "method": r.method,
            "reps": r.reps,
            "seed": r.seed,
            "amse": r.amse,
            "detection": r.detection.as_dict(),
        }
        out.append(d)
    return out
