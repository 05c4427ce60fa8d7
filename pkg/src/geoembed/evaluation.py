"""Error metrics, pair sampling and query benchmarking.

Distances are compared over a fixed, seeded set of ordered vertex pairs.
Exact reference values come from one single-source propagation per distinct
source vertex, so a sample of many pairs costs far fewer propagations than
pairs.
"""

from __future__ import annotations

import csv
import json
import math
import time
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .geodesic import distance_matrix
from .mesh import Mesh, VertexClassification
from .query import QueryContext, query_distance, query_pairs

BIN_WIDTH = 0.005
N_BINS = 10
WARMUP_QUERIES = 100
TRUTH_CHUNK = 64

Source = Callable[[np.ndarray, np.ndarray], np.ndarray]


@dataclass(frozen=True, eq=False)
class PairSample:
    """Ordered vertex pairs ``(u, v)`` with ``u != v``.

    Attributes
    ----------
    pairs : ndarray of int64, shape (count, 2)
    seed : int
        Seed the pairs were drawn with.
    """

    pairs: np.ndarray
    seed: int

    def __post_init__(self):
        p = np.asarray(self.pairs, dtype=np.int64).reshape(-1, 2)
        if np.any(p[:, 0] == p[:, 1]):
            raise ValueError("a pair sample may not contain (v, v)")
        p.setflags(write=False)
        object.__setattr__(self, "pairs", p)

    def __len__(self):
        return len(self.pairs)

    @property
    def us(self) -> np.ndarray:
        return self.pairs[:, 0]

    @property
    def vs(self) -> np.ndarray:
        return self.pairs[:, 1]


def sample_pairs(mesh: Mesh | int, count: int, seed: int = 0) -> PairSample:
    """Draw ``count`` distinct ordered pairs uniformly without replacement.

    Parameters
    ----------
    mesh : Mesh or int
        The mesh, or just its vertex count.
    count : int
    seed : int

    Raises
    ------
    ValueError
        If the mesh has fewer than two vertices or ``count`` exceeds
        ``n * (n - 1)``.
    """
    n = mesh if isinstance(mesh, (int, np.integer)) else mesh.n_vertices
    n = int(n)
    count = int(count)
    if n < 2:
        raise ValueError("sampling pairs needs at least two vertices")
    total = n * (n - 1)
    if not 0 <= count <= total:
        raise ValueError(f"cannot draw {count} distinct pairs from {total}")
    rng = np.random.default_rng(seed)
    if 2 * count >= total:
        codes = rng.permutation(total)[:count]
    else:
        # rejection keeps memory proportional to count, not to n^2
        codes = np.empty(0, dtype=np.int64)
        while len(codes) < count:
            draw = np.concatenate([codes, rng.integers(0, total, size=2 * (count - len(codes)))])
            _, first = np.unique(draw, return_index=True)
            codes = draw[np.sort(first)][:count]
    u = codes // (n - 1)
    r = codes % (n - 1)
    v = r + (r >= u)
    return PairSample(np.stack([u, v], axis=1), int(seed))


def relative_error(approx: float, truth: float) -> float:
    """``|approx - truth| / truth``.

    Returns 0 when both are zero and NaN (an undefined pair) when only the
    truth is zero.
    """
    if truth < 0 or math.isnan(truth):
        raise ValueError(f"reference distance must be non-negative, got {truth}")
    if truth == 0:
        return 0.0 if approx == 0 else math.nan
    return abs(approx - truth) / truth


def relative_errors(approx, truth) -> np.ndarray:
    """Vectorised :func:`relative_error`; NaN marks undefined pairs."""
    approx = np.asarray(approx, dtype=np.float64)
    truth = np.asarray(truth, dtype=np.float64)
    if approx.shape != truth.shape:
        raise ValueError("approx and truth must have the same shape")
    if np.any(truth < 0) or np.any(np.isnan(truth)):
        raise ValueError("reference distances must be non-negative")
    out = np.full(truth.shape, np.nan)
    pos = truth > 0
    out[pos] = np.abs(approx[pos] - truth[pos]) / truth[pos]
    out[(truth == 0) & (approx == 0)] = 0.0
    return out


def histogram_edges() -> np.ndarray:
    """Bins of width 0.5% up to 5% and one overflow bin."""
    return np.append(np.arange(N_BINS + 1) * BIN_WIDTH, np.inf)


@dataclass(frozen=True)
class TimingStats:
    """Per-query wall-clock statistics in seconds."""

    mean: float
    median: float
    p99: float
    n_queries: int
    case_mix: dict[str, int]

    def to_dict(self) -> dict:
        return {"mean_s": self.mean, "median_s": self.median, "p99_s": self.p99,
                "n_queries": self.n_queries}


@dataclass(eq=False)
class ErrorReport:
    """Mean relative error over a pair sample.

    Attributes
    ----------
    mean_relative_error : float
        Mean of the defined per-pair errors.
    errors : ndarray
        Per-pair relative errors, NaN for undefined pairs.
    excluded : int
        Number of undefined pairs.
    hist_edges, hist_counts : ndarray
        Histogram of the defined errors; the last bin is the overflow.
    """

    sample: PairSample
    approx: np.ndarray
    truth: np.ndarray
    errors: np.ndarray
    mean_relative_error: float
    excluded: int
    hist_edges: np.ndarray
    hist_counts: np.ndarray
    timing: TimingStats | None = None
    case_mix: dict[str, int] = field(default_factory=dict)

    def to_dict(self) -> dict:
        edges = [float(e) if math.isfinite(e) else None for e in self.hist_edges]
        return {
            "mean_relative_error": self.mean_relative_error,
            "histogram": {"edges": edges, "counts": [int(c) for c in self.hist_counts]},
            "timing": None if self.timing is None else self.timing.to_dict(),
            "case_mix": dict(self.case_mix),
            "n_pairs": len(self.sample),
            "excluded": self.excluded,
            "seed": self.sample.seed,
        }

    def to_json(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh, indent=2, sort_keys=True)
            fh.write("\n")

    def to_csv(self, path) -> None:
        """One row per pair: ``u, v, approx, truth, relative_error``."""
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["u", "v", "approx", "truth", "relative_error"])
            for (u, v), a, t, e in zip(self.sample.pairs, self.approx, self.truth, self.errors):
                w.writerow([int(u), int(v), repr(float(a)), repr(float(t)), repr(float(e))])


def _values(source, sample: PairSample) -> np.ndarray:
    vals = source(sample.us, sample.vs) if callable(source) else source
    vals = np.asarray(vals, dtype=np.float64)
    if vals.shape != (len(sample),):
        raise ValueError(f"source returned shape {vals.shape}, expected ({len(sample)},)")
    return vals


def mean_relative_error(sample: PairSample, approx, truth,
                        timing: TimingStats | None = None,
                        case_mix: dict[str, int] | None = None) -> ErrorReport:
    """Mean relative error of ``approx`` against ``truth`` over ``sample``.

    Parameters
    ----------
    sample : PairSample
    approx, truth : array-like or callable
        Either one value per pair or a function ``f(us, vs) -> distances``.
    """
    a = _values(approx, sample)
    t = _values(truth, sample)
    errors = relative_errors(a, t)
    ok = ~np.isnan(errors)
    mean = float(errors[ok].mean()) if ok.any() else math.nan
    edges = histogram_edges()
    counts, _ = np.histogram(errors[ok], bins=edges)
    if case_mix is None and timing is not None:
        case_mix = timing.case_mix
    return ErrorReport(sample, a, t, errors, mean, int((~ok).sum()), edges, counts,
                       timing, dict(case_mix or {}))


def exact_source(mesh: Mesh, classification: VertexClassification | None = None,
                 threads: int = 1) -> Source:
    """Exact pair distances, one propagation per distinct first vertex."""

    def source(us, vs):
        us = np.asarray(us, dtype=np.int64)
        vs = np.asarray(vs, dtype=np.int64)
        out = np.empty(len(us))
        uniq, inverse = np.unique(us, return_inverse=True)
        for lo in range(0, len(uniq), TRUTH_CHUNK):
            rows = distance_matrix(mesh, uniq[lo:lo + TRUTH_CHUNK], classification, threads)
            sel = (inverse >= lo) & (inverse < lo + TRUTH_CHUNK)
            out[sel] = rows[inverse[sel] - lo, vs[sel]]
        return out

    return source


def query_source(ctx: QueryContext) -> Source:
    """Approximate pair distances from a query context."""
    return lambda us, vs: query_pairs(ctx, us, vs).distances


def benchmark_queries(ctx: QueryContext, sample: PairSample, repetitions: int = 1,
                      warmup: int = WARMUP_QUERIES) -> TimingStats:
    """Time individual :func:`query_distance` calls on a monotonic clock.

    The first ``warmup`` queries are run untimed. The case mix counts each
    sampled pair once.
    """
    if repetitions < 1:
        raise ValueError("repetitions must be at least 1")
    us = [int(u) for u in sample.us]
    vs = [int(v) for v in sample.vs]
    if not us:
        raise ValueError("cannot benchmark an empty sample")
    for k in range(warmup):
        query_distance(ctx, us[k % len(us)], vs[k % len(vs)])
    clock = time.perf_counter
    times = np.empty(len(us) * repetitions)
    i = 0
    for _ in range(repetitions):
        for u, v in zip(us, vs):
            t0 = clock()
            query_distance(ctx, u, v)
            times[i] = clock() - t0
            i += 1
    mix = query_pairs(ctx, sample.us, sample.vs).case_mix()
    return TimingStats(float(times.mean()), float(np.median(times)),
                       float(np.percentile(times, 99)), len(times), mix)
