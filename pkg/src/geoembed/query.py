"""Vertex-to-vertex geodesic distance queries.

Saddle pairs are answered from the embedding alone. A pair with at least
one non-saddle end goes through four cases, in this order:

1. ``DIRECT``: the pair is an edge of the saddle vertex graph.
2. ``NEAR``: the pair shares graph neighbours; the best two-edge relay wins.
3. ``FAR``: relay through the saddle neighbours of the non-saddle end(s),
   with the embedding bridging saddle to saddle.
4. ``FALLBACK``: Dijkstra over the whole graph, for vertices without saddle
   neighbours.

Every answer is clamped below by the Euclidean chord.
"""

from __future__ import annotations

import enum
import heapq
import math
from dataclasses import dataclass

import numpy as np
from numba import njit

from .embedding import Embedding
from .errors import GeoEmbedError, InvalidVertexError, VertexClassError
from .mesh import Mesh, VertexClassification
from .svg import Svg


class Case(enum.IntEnum):
    IDENTITY = 0
    DIRECT = 1
    NEAR = 2
    FAR = 3
    FALLBACK = 4
    EMBEDDING = 5


class ContextMismatchError(GeoEmbedError, ValueError):
    """Graph, embedding and mesh do not belong together."""


@dataclass(frozen=True)
class QueryResult:
    distance: float
    case: Case
    clamped: bool


@dataclass(frozen=True, eq=False)
class QueryBatch:
    """Answers to many queries with per-query case codes and clamp flags."""

    distances: np.ndarray
    cases: np.ndarray
    clamped: np.ndarray

    def case_mix(self) -> dict[str, int]:
        counts = np.bincount(self.cases, minlength=len(Case))
        return {c.name.lower(): int(counts[c]) for c in Case}

    @property
    def n_clamped(self) -> int:
        return int(self.clamped.sum())


@dataclass(eq=False)
class QueryContext:
    """Read-only bundle of everything a query needs."""

    mesh: Mesh
    classification: VertexClassification
    svg: Svg
    embedding: Embedding

    def __post_init__(self):
        n = self.mesh.n_vertices
        if self.svg.n_vertices != n or len(self.classification.is_saddle) != n:
            raise ContextMismatchError("graph or classification has the wrong vertex count")
        if not np.array_equal(self.svg.is_saddle, self.classification.is_saddle):
            raise ContextMismatchError("graph was built for a different classification")
        if not np.array_equal(self.embedding.saddle_vertices,
                              np.asarray(self.classification.saddle_set)):
            raise ContextMismatchError("embedding rows do not match the saddle set")
        self._kernel = (
            np.ascontiguousarray(self.svg.indptr, dtype=np.int64),
            np.ascontiguousarray(self.svg.indices, dtype=np.int64),
            np.ascontiguousarray(self.svg.weights, dtype=np.float64),
            np.ascontiguousarray(self.classification.saddle_rank, dtype=np.int64),
            np.ascontiguousarray(self.embedding.euclidean, dtype=np.float64),
            np.ascontiguousarray(self.embedding.s_block, dtype=np.float64),
            np.ascontiguousarray(self.embedding.t_block, dtype=np.float64),
            np.ascontiguousarray(self.mesh.vertices, dtype=np.float64),
        )

    @property
    def kernel_data(self) -> tuple:
        return self._kernel

    def check(self, v) -> int:
        return self.mesh.check_vertex(v)


# ----------------------------------------------------------------------
# kernels


@njit(cache=True, nogil=True)
def _chord(pos, u, v):
    dx = pos[u, 0] - pos[v, 0]
    dy = pos[u, 1] - pos[v, 1]
    dz = pos[u, 2] - pos[v, 2]
    return math.sqrt(dx * dx + dy * dy + dz * dz)


@njit(cache=True, nogil=True)
def _embed(Q, S, T, i, j):
    if i == j:
        return 0.0
    acc = 0.0
    for k in range(Q.shape[1]):
        d = Q[i, k] - Q[j, k]
        acc += d * d
    f = math.sqrt(acc)
    for k in range(S.shape[1]):
        d = S[i, k] - S[j, k]
        f -= d * d
    for k in range(T.shape[1]):
        d = T[i, k] - T[j, k]
        f += d * d
    return f


@njit(cache=True, nogil=True)
def _relay(Q, S, T, pos, sv, i, j):
    """Saddle-to-saddle leg of a far relay, never shorter than the chord."""
    f = _embed(Q, S, T, i, j)
    c = _chord(pos, sv[i], sv[j])
    return f if f > c else c


@njit(cache=True, nogil=True)
def _find(indices, lo, hi, v):
    k = np.searchsorted(indices[lo:hi], v) + lo
    if k < hi and indices[k] == v:
        return k
    return -1


@njit(cache=True, nogil=True)
def _common_neighbour(indptr, indices, weights, u, v):
    i, iend = indptr[u], indptr[u + 1]
    j, jend = indptr[v], indptr[v + 1]
    best = np.inf
    while i < iend and j < jend:
        a = indices[i]
        b = indices[j]
        if a == b:
            d = weights[i] + weights[j]
            if d < best:
                best = d
            i += 1
            j += 1
        elif a < b:
            i += 1
        else:
            j += 1
    return best


@njit(cache=True, nogil=True)
def _dijkstra(indptr, indices, weights, u, v):
    n = indptr.shape[0] - 1
    dist = np.full(n, np.inf)
    dist[u] = 0.0
    heap = [(0.0, u)]
    while len(heap) > 0:
        d, x = heapq.heappop(heap)
        if x == v:
            return d
        if d > dist[x]:
            continue
        for k in range(indptr[x], indptr[x + 1]):
            y = indices[k]
            nd = d + weights[k]
            if nd < dist[y]:
                dist[y] = nd
                heapq.heappush(heap, (nd, y))
    return np.inf


@njit(cache=True, nogil=True)
def _query(u, v, indptr, indices, weights, rank, Q, S, T, pos, sv):
    """Distance, case code and clamp flag for a valid vertex pair."""
    if u == v:
        return 0.0, 0, False
    ru = rank[u]
    rv = rank[v]
    # fixed argument order makes the result exactly symmetric
    if ru >= 0 and rv < 0:
        u, v = v, u
        ru, rv = rv, ru
    elif (ru >= 0) == (rv >= 0) and v < u:
        u, v = v, u
        ru, rv = rv, ru
    chord = _chord(pos, u, v)

    if ru >= 0:
        d = _embed(Q, S, T, ru, rv)
        case = 5
    else:
        k = _find(indices, indptr[u], indptr[u + 1], v)
        if k >= 0:
            d = weights[k]
            case = 1
        else:
            d = _common_neighbour(indptr, indices, weights, u, v)
            case = 2
            if d == np.inf:
                case = 3
                if rv >= 0:
                    # u non-saddle, v saddle: relay through u's saddle neighbours
                    for a in range(indptr[u], indptr[u + 1]):
                        ra = rank[indices[a]]
                        if ra >= 0:
                            x = weights[a] + _relay(Q, S, T, pos, sv, ra, rv)
                            if x < d:
                                d = x
                else:
                    for a in range(indptr[u], indptr[u + 1]):
                        ra = rank[indices[a]]
                        if ra < 0:
                            continue
                        wa = weights[a]
                        for b in range(indptr[v], indptr[v + 1]):
                            rb = rank[indices[b]]
                            if rb >= 0:
                                x = wa + _relay(Q, S, T, pos, sv, ra, rb) + weights[b]
                                if x < d:
                                    d = x
                if d == np.inf:
                    d = _dijkstra(indptr, indices, weights, u, v)
                    case = 4
    if d < chord:
        return chord, case, True
    return d, case, False


@njit(cache=True, nogil=True)
def query_many(us, vs, indptr, indices, weights, rank, Q, S, T, pos, sv, out, cases, clamped):
    for i in range(us.shape[0]):
        d, c, cl = _query(us[i], vs[i], indptr, indices, weights, rank, Q, S, T, pos, sv)
        out[i] = d
        cases[i] = c
        clamped[i] = cl


# ----------------------------------------------------------------------
# public API


def _run(ctx: QueryContext, u: int, v: int) -> QueryResult:
    indptr, indices, weights, rank, Q, S, T, pos = ctx.kernel_data
    d, case, clamped = _query(u, v, indptr, indices, weights, rank, Q, S, T, pos,
                              ctx.embedding.saddle_vertices)
    return QueryResult(float(d), Case(case), bool(clamped))


def query_with_case(ctx: QueryContext, u: int, v: int) -> QueryResult:
    """Distance between ``u`` and ``v`` with the case that produced it."""
    return _run(ctx, ctx.check(u), ctx.check(v))


def query_distance(ctx: QueryContext, u: int, v: int) -> float:
    """Approximate geodesic distance between any two vertices.

    Raises
    ------
    InvalidVertexError
        If either index is out of range.
    """
    return query_with_case(ctx, u, v).distance


def _require(ctx: QueryContext, v: int, saddle: bool) -> int:
    v = ctx.check(v)
    if bool(ctx.classification.is_saddle[v]) != saddle:
        kind = "saddle" if saddle else "non-saddle"
        raise VertexClassError(f"vertex {v} is not a {kind} vertex")
    return v


def ss_distance(ctx: QueryContext, s: int, t: int) -> float:
    """Distance between two saddles, from their embedding vectors."""
    s = _require(ctx, s, True)
    t = _require(ctx, t, True)
    return _run(ctx, s, t).distance


def nn_distance(ctx: QueryContext, u: int, v: int) -> float:
    """Distance between two distinct non-saddle vertices."""
    u = _require(ctx, u, False)
    v = _require(ctx, v, False)
    if u == v:
        raise ValueError("nn_distance needs two distinct vertices")
    return _run(ctx, u, v).distance


def ns_distance(ctx: QueryContext, u: int, s: int) -> float:
    """Distance from a non-saddle vertex ``u`` to a saddle ``s``."""
    u = _require(ctx, u, False)
    s = _require(ctx, s, True)
    return _run(ctx, u, s).distance


def query_pairs(ctx: QueryContext, us, vs) -> QueryBatch:
    """Answer ``(us[i], vs[i])`` for every ``i`` in one compiled loop."""
    us = np.ascontiguousarray(us, dtype=np.int64)
    vs = np.ascontiguousarray(vs, dtype=np.int64)
    if us.shape != vs.shape or us.ndim != 1:
        raise ValueError("us and vs must be 1-D and of equal length")
    n = ctx.mesh.n_vertices
    bad = (us < 0) | (us >= n) | (vs < 0) | (vs >= n)
    if bad.any():
        i = int(np.argmax(bad))
        raise InvalidVertexError(f"pair {i} ({us[i]}, {vs[i]}) has an index outside [0, {n})")
    out = np.empty(len(us))
    cases = np.empty(len(us), dtype=np.int64)
    clamped = np.empty(len(us), dtype=np.bool_)
    indptr, indices, weights, rank, Q, S, T, pos = ctx.kernel_data
    query_many(us, vs, indptr, indices, weights, rank, Q, S, T, pos,
               ctx.embedding.saddle_vertices, out, cases, clamped)
    return QueryBatch(out, cases, clamped)


def single_source(ctx: QueryContext, source: int) -> np.ndarray:
    """Distances from ``source`` to every vertex, one query per target."""
    source = ctx.check(source)
    n = ctx.mesh.n_vertices
    return query_pairs(ctx, np.full(n, source), np.arange(n)).distances
