"""Degree-capped saddle vertex graph.

Every vertex is linked to its nearest vertices reached by *direct* geodesics
(paths through no saddle). Long geodesics decompose into such edges relayed
at saddles, so shortest paths in this sparse graph approximate geodesic
distance from above.
"""

from __future__ import annotations

import enum
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
from scipy.sparse.csgraph import dijkstra

from . import _ich
from .errors import InvalidVertexError
from .geodesic import kernel_mesh
from .mesh import Mesh, VertexClassification


class Tier(str, enum.Enum):
    """Edge class by the saddle status of its endpoints."""

    SS = "SS"
    NS = "NS"
    NN = "NN"


@dataclass(frozen=True)
class SvgParams:
    """Neighbour caps for the local propagations.

    Parameters
    ----------
    K : int
        Maximum number of direct neighbours collected per vertex.
    K_S : int
        Propagation also stops once this many direct saddle neighbours are found.
    """

    K: int = 60
    K_S: int = 20

    def __post_init__(self):
        if self.K < 1:
            raise ValueError("K must be at least 1")
        if not 1 <= self.K_S <= self.K:
            raise ValueError("K_S must lie in [1, K]")


@dataclass(frozen=True, eq=False)
class Svg:
    """Undirected weighted graph in CSR layout with rows sorted by neighbour.

    Attributes
    ----------
    indptr : ndarray of int64, shape (n + 1,)
    indices : ndarray of int64
        Neighbour ids, ascending within each row.
    weights : ndarray of float64
        Exact geodesic length of each edge; ``(u, v)`` and ``(v, u)`` carry
        the same value.
    is_saddle : ndarray of bool, shape (n,)
    params : SvgParams
    """

    indptr: np.ndarray
    indices: np.ndarray
    weights: np.ndarray
    is_saddle: np.ndarray
    params: SvgParams

    @property
    def n_vertices(self) -> int:
        return len(self.indptr) - 1

    @property
    def n_edges(self) -> int:
        """Number of undirected edges."""
        return len(self.indices) // 2

    def degree(self, v: int) -> int:
        return int(self.indptr[v + 1] - self.indptr[v])

    def degrees(self) -> np.ndarray:
        return np.diff(self.indptr)

    def row(self, v: int):
        """Neighbour ids and weights of ``v`` as array views."""
        lo, hi = self.indptr[v], self.indptr[v + 1]
        return self.indices[lo:hi], self.weights[lo:hi]

    def _check(self, v) -> int:
        if isinstance(v, (bool, np.bool_)) or not isinstance(v, (int, np.integer)):
            raise TypeError(f"vertex index must be an integer, got {type(v).__name__}")
        if not 0 <= v < self.n_vertices:
            raise InvalidVertexError(f"vertex {v} out of range [0, {self.n_vertices})")
        return int(v)

    def to_scipy(self):
        n = self.n_vertices
        return sp.csr_matrix((self.weights, self.indices, self.indptr), shape=(n, n))


def tier_of(is_saddle: np.ndarray, u: int, v: int) -> Tier:
    su, sv = bool(is_saddle[u]), bool(is_saddle[v])
    if su and sv:
        return Tier.SS
    if su or sv:
        return Tier.NS
    return Tier.NN


def _directed_edges(mesh: Mesh, classification: VertexClassification, params: SvgParams,
                    threads: int):
    pseudo = np.asarray(classification.is_saddle | mesh.is_boundary_vertex)
    is_saddle = np.asarray(classification.is_saddle)
    km = kernel_mesh(mesh)
    n = mesh.n_vertices

    def work(sources):
        indptr = np.empty(len(sources) + 1, dtype=np.int64)
        nbr, wgt = _ich.direct_neighbors_many(sources, pseudo, is_saddle, params.K, params.K_S,
                                              km, indptr)
        src = np.repeat(sources, np.diff(indptr))
        return src, nbr, wgt

    all_sources = np.arange(n, dtype=np.int64)
    if threads <= 1:
        return work(all_sources)
    # interleaved chunks balance the load between cheap and costly regions
    chunks = [all_sources[i::threads * 4] for i in range(threads * 4)]
    with ThreadPoolExecutor(threads) as pool:
        parts = list(pool.map(work, chunks))
    return tuple(np.concatenate([p[k] for p in parts]) for k in range(3))


def symmetrize(n: int, src, dst, wgt):
    """CSR arrays of the undirected closure of a directed edge list.

    When both directions were found with (numerically) different lengths
    the smaller one is kept for both.
    """
    rows = np.concatenate([src, dst]).astype(np.int64)
    cols = np.concatenate([dst, src]).astype(np.int64)
    w = np.concatenate([wgt, wgt]).astype(np.float64)
    keep = rows != cols
    rows, cols, w = rows[keep], cols[keep], w[keep]
    order = np.lexsort((w, cols, rows))
    rows, cols, w = rows[order], cols[order], w[order]
    first = np.ones(len(rows), dtype=bool)
    first[1:] = (rows[1:] != rows[:-1]) | (cols[1:] != cols[:-1])
    rows, cols, w = rows[first], cols[first], w[first]
    indptr = np.zeros(n + 1, dtype=np.int64)
    np.cumsum(np.bincount(rows, minlength=n), out=indptr[1:])
    return indptr, cols, w


def build_svg(mesh: Mesh, classification: VertexClassification,
              params: SvgParams | None = None, threads: int = 1) -> Svg:
    """Run one capped local propagation per vertex and symmetrise the result."""
    params = params or SvgParams()
    src, dst, wgt = _directed_edges(mesh, classification, params, max(1, int(threads)))
    indptr, indices, weights = symmetrize(mesh.n_vertices, src, dst, wgt)
    for a in (indptr, indices, weights):
        a.setflags(write=False)
    is_saddle = np.asarray(classification.is_saddle).copy()
    is_saddle.setflags(write=False)
    return Svg(indptr, indices, weights, is_saddle, params)


def neighbors(svg: Svg, v: int) -> list[tuple[int, float, Tier]]:
    """``(neighbour, weight, tier)`` triples of ``v`` sorted by neighbour id."""
    v = svg._check(v)
    idx, w = svg.row(v)
    return [(int(u), float(x), tier_of(svg.is_saddle, v, int(u))) for u, x in zip(idx, w)]


def edge_weight(svg: Svg, u: int, v: int) -> float | None:
    """Weight of edge ``(u, v)`` by binary search, or None if absent."""
    u = svg._check(u)
    v = svg._check(v)
    idx, w = svg.row(u)
    k = int(np.searchsorted(idx, v))
    if k < len(idx) and idx[k] == v:
        return float(w[k])
    return None


def shortest_path_lengths(svg: Svg, source: int) -> np.ndarray:
    """Dijkstra over the whole graph from ``source``."""
    source = svg._check(source)
    return dijkstra(svg.to_scipy(), directed=True, indices=source)
