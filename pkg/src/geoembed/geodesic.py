"""Single-source geodesic distances on triangle meshes.

:func:`ssad_exact` is the production oracle (window propagation).
:func:`ssad_reference` is an independent, deliberately simple check used by
the tests: Dijkstra over mesh vertices plus Steiner points on every edge.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
from scipy.sparse.csgraph import dijkstra

from . import _ich
from .mesh import Mesh, VertexClassification, classify_vertices


@dataclass(frozen=True)
class DistanceField:
    source: int
    distances: np.ndarray

    def save(self, path) -> None:
        """Write one ``index distance`` pair per line."""
        write_distance_field(path, self.distances)


@dataclass(frozen=True)
class DirectNeighborList:
    """Vertices reached from ``source`` by geodesics through no saddle.

    ``vertices``, ``distances`` and ``is_saddle`` are parallel arrays sorted
    by distance.
    """

    source: int
    vertices: np.ndarray
    distances: np.ndarray
    is_saddle: np.ndarray

    @property
    def entries(self) -> list[tuple[int, float, bool]]:
        return [(int(v), float(d), bool(s))
                for v, d, s in zip(self.vertices, self.distances, self.is_saddle)]

    def __len__(self):
        return len(self.vertices)


def write_distance_field(path, distances) -> None:
    with open(path, "w") as fh:
        for i, d in enumerate(distances):
            fh.write(f"{i} {float(d)!r}\n")


def read_distance_field(path) -> np.ndarray:
    rows = np.loadtxt(path, ndmin=2)
    out = np.empty(len(rows))
    out[rows[:, 0].astype(np.int64)] = rows[:, 1]
    return out


def kernel_mesh(mesh: Mesh) -> tuple:
    """Connectivity arrays in the layout the propagation kernel expects."""
    return (mesh.he_src, mesh.he_dst, mesh.he_opposite, mesh.he_length, mesh.he_third,
            mesh.vertex_he_indptr, mesh.vertex_he)


def _pseudosources(mesh: Mesh, classification: VertexClassification | None):
    if classification is None:
        classification = classify_vertices(mesh)
    return np.asarray(classification.is_saddle | mesh.is_boundary_vertex), classification


def ssad_exact(mesh: Mesh, source: int,
               classification: VertexClassification | None = None) -> DistanceField:
    """Exact polyhedral geodesic distance from ``source`` to every vertex."""
    source = mesh.check_vertex(source)
    pseudo, cls = _pseudosources(mesh, classification)
    dist, _, _, _, _ = _ich.propagate(source, pseudo, np.asarray(cls.is_saddle), -1, -1,
                                      kernel_mesh(mesh))
    return DistanceField(source, dist)


def ssad_exact_with_roots(mesh: Mesh, source: int,
                          classification: VertexClassification | None = None):
    """Like :func:`ssad_exact` but also return each vertex's last relay.

    ``root[v] == source`` marks a direct geodesic; otherwise ``root[v]`` is the
    saddle (or boundary) vertex the geodesic bent around last.
    """
    source = mesh.check_vertex(source)
    pseudo, cls = _pseudosources(mesh, classification)
    dist, root, _, _, _ = _ich.propagate(source, pseudo, np.asarray(cls.is_saddle), -1, -1,
                                         kernel_mesh(mesh))
    return DistanceField(source, dist), root


def local_direct_geodesics(mesh: Mesh, classification: VertexClassification, source: int,
                           K: int, K_S: int) -> DirectNeighborList:
    """Nearest direct-geodesic neighbours of ``source``, capped at ``K`` (or ``K_S`` saddles)."""
    if K < 1:
        raise ValueError("K must be at least 1")
    if not 1 <= K_S <= K:
        raise ValueError("K_S must lie in [1, K]")
    source = mesh.check_vertex(source)
    pseudo, cls = _pseudosources(mesh, classification)
    is_saddle = np.asarray(cls.is_saddle)
    dist, _, direct, count, _ = _ich.propagate(source, pseudo, is_saddle, K, K_S,
                                               kernel_mesh(mesh))
    verts = direct[:count].copy()
    return DirectNeighborList(source, verts, dist[verts], is_saddle[verts])


def distance_matrix(mesh: Mesh, sources, classification: VertexClassification | None = None,
                    threads: int = 1) -> np.ndarray:
    """Rows of exact distances, one per source; shape (len(sources), n)."""
    sources = np.asarray(sources, dtype=np.int64)
    pseudo, _ = _pseudosources(mesh, classification)
    out = np.empty((len(sources), mesh.n_vertices))
    km = kernel_mesh(mesh)
    if threads <= 1 or len(sources) < 2:
        _ich.all_distances(sources, pseudo, km, out)
        return out
    chunks = np.array_split(np.arange(len(sources)), threads)

    def work(idx):
        buf = np.empty((len(idx), mesh.n_vertices))
        _ich.all_distances(sources[idx], pseudo, km, buf)
        return idx, buf

    with ThreadPoolExecutor(threads) as pool:
        for idx, buf in pool.map(work, chunks):
            out[idx] = buf
    return out


# ----------------------------------------------------------------------
# reference oracle

def steiner_graph(mesh: Mesh, splits: int) -> sp.csr_matrix:
    """Vertices plus ``splits`` evenly spaced points per edge, linked within faces.

    Points on the same edge are chained; every pair of points on different
    edges of a face is joined by a straight segment.
    """
    if splits < 0:
        raise ValueError("splits must be non-negative")
    V = mesh.vertices
    n = mesh.n_vertices
    edges = mesh.edges
    ne = len(edges)
    ts = np.arange(1, splits + 1) / (splits + 1)
    pts = (V[edges[:, 0], None, :] * (1 - ts)[None, :, None]
           + V[edges[:, 1], None, :] * ts[None, :, None]).reshape(-1, 3)
    coords = np.concatenate([V, pts])

    # chain along each edge: a, p1, ..., pk, b
    chain = np.empty((ne, splits + 2), dtype=np.int64)
    chain[:, 0] = edges[:, 0]
    chain[:, -1] = edges[:, 1]
    chain[:, 1:-1] = n + np.arange(ne * splits).reshape(ne, splits)
    rows = [chain[:, :-1].ravel()]
    cols = [chain[:, 1:].ravel()]

    if splits > 0:
        F = mesh.faces
        key = edges[:, 0] * n + edges[:, 1]
        order = np.argsort(key)

        def edge_index(u, w):
            lo = np.minimum(u, w)
            hi = np.maximum(u, w)
            return order[np.searchsorted(key[order], lo * n + hi)]

        e = [edge_index(F[:, k], F[:, (k + 1) % 3]) for k in range(3)]
        interior = [chain[ei, 1:-1] for ei in e]  # (nf, splits) each
        for k in range(3):
            # opposite vertex of edge k is F[:, (k + 2) % 3]
            opp = np.repeat(F[:, (k + 2) % 3], splits)
            rows.append(opp)
            cols.append(interior[k].ravel())
            for j in range(k + 1, 3):
                a = np.repeat(interior[k], splits, axis=1).ravel()
                b = np.tile(interior[j], (1, splits)).ravel()
                rows.append(a)
                cols.append(b)
    r = np.concatenate(rows)
    c = np.concatenate(cols)
    w = np.linalg.norm(coords[r] - coords[c], axis=1)
    size = len(coords)
    return sp.csr_matrix((w, (r, c)), shape=(size, size))


def ssad_reference(mesh: Mesh, source: int, splits: int) -> DistanceField:
    """Shortest paths in the Steiner graph; an upper bound on geodesic distance."""
    source = mesh.check_vertex(source)
    g = steiner_graph(mesh, splits)
    d = dijkstra(g, directed=False, indices=source)
    return DistanceField(source, d[: mesh.n_vertices])
