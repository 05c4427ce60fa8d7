"""Indexed triangle meshes: loading, connectivity, angle sums and saddle classification."""

from __future__ import annotations

import logging
import math
from collections import deque
from dataclasses import dataclass
from functools import cached_property
from pathlib import Path

import numpy as np

from .errors import InvalidVertexError, MeshParseError, TopologyError

logger = logging.getLogger(__name__)

#: Angle sums must exceed 2*pi by more than this to count as saddles.
ANGLE_TOLERANCE = 1e-9


class Mesh:
    """Immutable connected triangle mesh with halfedge connectivity.

    Halfedge ``3*f + k`` runs from ``faces[f, k]`` to ``faces[f, (k+1) % 3]``
    and belongs to face ``f``. Faces are reoriented on construction so that
    every interior edge is traversed once in each direction.

    Parameters
    ----------
    vertices : array_like, shape (n, 3)
    faces : array_like, shape (f, 3)
        Zero-based vertex indices.

    Raises
    ------
    TopologyError
        Out-of-range or repeated indices, zero-area faces, non-manifold or
        non-orientable edges, unreferenced vertices, or more than one
        connected component.
    """

    def __init__(self, vertices, faces):
        v = np.ascontiguousarray(vertices, dtype=np.float64)
        f = np.array(faces, dtype=np.int64, copy=True)
        if v.ndim != 2 or v.shape[1] != 3:
            raise TopologyError(f"vertices must have shape (n, 3), got {v.shape}")
        if f.ndim != 2 or f.shape[1] != 3:
            raise TopologyError(f"faces must have shape (f, 3), got {f.shape}")
        if len(f) == 0:
            raise TopologyError("mesh has no faces")
        if not np.all(np.isfinite(v)):
            raise TopologyError("non-finite vertex coordinate")
        n = len(v)
        if f.min() < 0 or f.max() >= n:
            raise TopologyError("face index out of range")
        if np.any((f[:, 0] == f[:, 1]) | (f[:, 1] == f[:, 2]) | (f[:, 0] == f[:, 2])):
            raise TopologyError("face with repeated vertex index")

        scale = float(np.linalg.norm(v.max(axis=0) - v.min(axis=0)))
        e1 = v[f[:, 1]] - v[f[:, 0]]
        e2 = v[f[:, 2]] - v[f[:, 0]]
        area2 = np.linalg.norm(np.cross(e1, e2), axis=1)
        bad = np.flatnonzero(area2 <= 1e-14 * scale * scale)
        if len(bad):
            raise TopologyError(f"degenerate (zero-area) face {int(bad[0])}")

        used = np.zeros(n, dtype=bool)
        used[f.ravel()] = True
        if not used.all():
            raise TopologyError(f"vertex {int(np.flatnonzero(~used)[0])} belongs to no face")

        f = _orient_consistently(f, n)

        self._vertices = v
        self._faces = f
        self._vertices.setflags(write=False)
        self._faces.setflags(write=False)
        self._build_halfedges()
        self._check_connected()

    # ------------------------------------------------------------------
    @property
    def vertices(self) -> np.ndarray:
        return self._vertices

    @property
    def faces(self) -> np.ndarray:
        return self._faces

    @property
    def n_vertices(self) -> int:
        return len(self._vertices)

    @property
    def n_faces(self) -> int:
        return len(self._faces)

    @cached_property
    def scale(self) -> float:
        """Bounding-box diagonal, used to make tolerances unit-free."""
        return float(np.linalg.norm(self._vertices.max(axis=0) - self._vertices.min(axis=0)))

    def check_vertex(self, v) -> int:
        iv = int(v)
        if iv != v or not 0 <= iv < self.n_vertices:
            raise InvalidVertexError(f"vertex index {v!r} out of range [0, {self.n_vertices})")
        return iv

    # ------------------------------------------------------------------
    def _build_halfedges(self):
        f = self._faces
        nf = len(f)
        src = f.ravel()
        dst = f[:, [1, 2, 0]].ravel()
        n = self.n_vertices

        key = src * n + dst
        rkey = dst * n + src
        order = np.argsort(key, kind="stable")
        sorted_keys = key[order]
        pos = np.searchsorted(sorted_keys, rkey)
        pos = np.minimum(pos, len(sorted_keys) - 1)
        found = sorted_keys[pos] == rkey
        opposite = np.where(found, order[pos], -1).astype(np.int64)

        lengths = np.linalg.norm(self._vertices[dst] - self._vertices[src], axis=1)

        # planar frame of each halfedge: tail at origin, head on +x,
        # third vertex of the owning face in the upper half plane
        third = f[:, [2, 0, 1]].ravel()
        d = self._vertices[dst] - self._vertices[src]
        w = self._vertices[third] - self._vertices[src]
        ux = d / lengths[:, None]
        tx = np.einsum("ij,ij->i", w, ux)
        ty = np.linalg.norm(w - tx[:, None] * ux, axis=1)

        self.he_src = src
        self.he_dst = dst
        self.he_opposite = opposite
        self.he_length = lengths
        self.he_third = np.column_stack([tx, ty])
        self.is_boundary_vertex = np.zeros(n, dtype=bool)
        self.is_boundary_vertex[src[opposite < 0]] = True
        self.is_boundary_vertex[dst[opposite < 0]] = True

        # corner angles: corner k of face f sits at faces[f, k]
        a = self._vertices[f]
        angles = np.empty((nf, 3))
        for k in range(3):
            p = a[:, k]
            e_next = a[:, (k + 1) % 3] - p
            e_prev = a[:, (k + 2) % 3] - p
            cr = np.linalg.norm(np.cross(e_next, e_prev), axis=1)
            dt = np.einsum("ij,ij->i", e_next, e_prev)
            angles[:, k] = np.arctan2(cr, dt)
        self.corner_angles = angles

        # vertex -> incident corners (as halfedge ids leaving the vertex)
        order = np.argsort(src, kind="stable")
        counts = np.bincount(src, minlength=n)
        self.vertex_he_indptr = np.concatenate([[0], np.cumsum(counts)]).astype(np.int64)
        self.vertex_he = order.astype(np.int64)

        und = np.unique(np.sort(np.column_stack([src, dst]), axis=1), axis=0)
        self.edges = und
        for arr in (self.he_src, self.he_dst, self.he_opposite, self.he_length,
                    self.he_third, self.corner_angles, self.vertex_he_indptr,
                    self.vertex_he, self.edges, self.is_boundary_vertex):
            arr.setflags(write=False)

    def _check_connected(self):
        nf = self.n_faces
        seen = np.zeros(nf, dtype=bool)
        seen[0] = True
        queue = deque([0])
        opp = self.he_opposite
        while queue:
            face = queue.popleft()
            for k in range(3):
                o = opp[3 * face + k]
                if o >= 0 and not seen[o // 3]:
                    seen[o // 3] = True
                    queue.append(o // 3)
        if not seen.all():
            raise TopologyError("mesh is not edge-connected")

    # ------------------------------------------------------------------
    @cached_property
    def angle_sums(self) -> np.ndarray:
        sums = np.zeros(self.n_vertices)
        np.add.at(sums, self._faces.ravel(), self.corner_angles.ravel())
        sums.setflags(write=False)
        return sums

    def vertex_neighbors(self, v: int) -> np.ndarray:
        v = self.check_vertex(v)
        hes = self.vertex_he[self.vertex_he_indptr[v]:self.vertex_he_indptr[v + 1]]
        nbrs = np.concatenate([self.he_dst[hes], self.he_src[hes - hes % 3 + (hes + 2) % 3]])
        return np.unique(nbrs)

    def euler_characteristic(self) -> int:
        return self.n_vertices - len(self.edges) + self.n_faces

    @cached_property
    def checksum(self) -> int:
        """64-bit digest of vertex coordinates and face indices."""
        import hashlib

        h = hashlib.blake2b(digest_size=8)
        h.update(np.asarray(self._vertices, dtype="<f8").tobytes())
        h.update(np.asarray(self._faces, dtype="<i8").tobytes())
        return int.from_bytes(h.digest(), "little")

    def __repr__(self):
        return f"Mesh(n_vertices={self.n_vertices}, n_faces={self.n_faces})"


def _orient_consistently(faces: np.ndarray, n: int) -> np.ndarray:
    """Flip faces so that neighbouring faces traverse shared edges oppositely."""
    nf = len(faces)
    edge_faces: dict[tuple[int, int], list[int]] = {}
    for fi in range(nf):
        a, b, c = faces[fi]
        for u, w in ((a, b), (b, c), (c, a)):
            key = (u, w) if u < w else (w, u)
            edge_faces.setdefault(key, []).append(fi)
    for key, fl in edge_faces.items():
        if len(fl) > 2:
            raise TopologyError(f"non-manifold edge {key} shared by {len(fl)} faces")

    def has_directed(face, u, w):
        a, b, c = face
        return (a, b) == (u, w) or (b, c) == (u, w) or (c, a) == (u, w)

    flipped = np.zeros(nf, dtype=bool)
    visited = np.zeros(nf, dtype=bool)
    out = faces.copy()
    for start in range(nf):
        if visited[start]:
            continue
        visited[start] = True
        queue = deque([start])
        while queue:
            fi = queue.popleft()
            a, b, c = out[fi]
            for u, w in ((a, b), (b, c), (c, a)):
                key = (u, w) if u < w else (w, u)
                for gj in edge_faces[key]:
                    if gj == fi:
                        continue
                    if not visited[gj]:
                        visited[gj] = True
                        if has_directed(out[gj], u, w):
                            flipped[gj] = True
                            out[gj] = out[gj][[0, 2, 1]]
                        queue.append(gj)
                    elif has_directed(out[gj], u, w):
                        raise TopologyError("mesh is not orientable")
    if flipped.any():
        logger.info("reoriented %d faces for consistent winding", int(flipped.sum()))
    return out


# ----------------------------------------------------------------------
# file formats

def load_mesh(path) -> Mesh:
    """Read an ASCII OFF or OBJ triangle mesh.

    The format is chosen from the file extension. Vertex and face order are
    preserved; OBJ's 1-based (or negative relative) indices become 0-based.
    """
    path = Path(path)
    try:
        text = path.read_text()
    except UnicodeDecodeError as exc:
        raise MeshParseError(f"{path}: not a text file") from exc
    suffix = path.suffix.lower()
    if suffix == ".off":
        vertices, faces = _parse_off(text, path)
    elif suffix == ".obj":
        vertices, faces = _parse_obj(text, path)
    else:
        raise MeshParseError(f"{path}: unsupported mesh format {suffix!r} (expected .off or .obj)")
    return Mesh(vertices, faces)


def _parse_off(text: str, path) -> tuple[np.ndarray, np.ndarray]:
    tokens = []
    for line in text.splitlines():
        line = line.split("#", 1)[0].strip()
        if line:
            tokens.append(line.split())
    if not tokens or not tokens[0][0].endswith("OFF"):
        raise MeshParseError(f"{path}: missing OFF header")
    head = tokens[0][1:]
    rows = tokens[1:]
    if not head:
        if not rows:
            raise MeshParseError(f"{path}: missing OFF counts")
        head, rows = rows[0], rows[1:]
    try:
        nv, nf = int(head[0]), int(head[1])
    except (ValueError, IndexError) as exc:
        raise MeshParseError(f"{path}: bad OFF counts line") from exc
    if len(rows) < nv + nf:
        raise MeshParseError(f"{path}: expected {nv} vertices and {nf} faces, file is short")
    try:
        vertices = np.array([[float(x) for x in r[:3]] for r in rows[:nv]])
        if nv and vertices.shape != (nv, 3):
            raise ValueError
    except ValueError as exc:
        raise MeshParseError(f"{path}: malformed vertex line") from exc
    faces = []
    for i, r in enumerate(rows[nv:nv + nf]):
        try:
            k = int(r[0])
            idx = [int(x) for x in r[1:1 + k]]
        except (ValueError, IndexError) as exc:
            raise MeshParseError(f"{path}: malformed face line {i}") from exc
        if len(idx) != k:
            raise MeshParseError(f"{path}: face {i} lists fewer indices than declared")
        if k != 3:
            raise TopologyError(f"{path}: face {i} has {k} vertices; only triangles are supported")
        faces.append(idx)
    return vertices.reshape(-1, 3), np.array(faces, dtype=np.int64).reshape(-1, 3)


def _parse_obj(text: str, path) -> tuple[np.ndarray, np.ndarray]:
    vertices = []
    faces = []
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        if parts[0] == "v":
            try:
                vertices.append([float(x) for x in parts[1:4]])
            except ValueError as exc:
                raise MeshParseError(f"{path}:{lineno}: malformed vertex") from exc
            if len(vertices[-1]) != 3:
                raise MeshParseError(f"{path}:{lineno}: vertex needs 3 coordinates")
        elif parts[0] == "f":
            refs = parts[1:]
            if len(refs) != 3:
                raise TopologyError(
                    f"{path}:{lineno}: face has {len(refs)} vertices; only triangles are supported")
            idx = []
            for ref in refs:
                try:
                    i = int(ref.split("/")[0])
                except ValueError as exc:
                    raise MeshParseError(f"{path}:{lineno}: malformed face index {ref!r}") from exc
                if i == 0:
                    raise MeshParseError(f"{path}:{lineno}: OBJ indices are 1-based")
                idx.append(i - 1 if i > 0 else len(vertices) + i)
            faces.append(idx)
    if not vertices:
        raise MeshParseError(f"{path}: no vertices")
    return np.array(vertices, dtype=np.float64), np.array(faces, dtype=np.int64).reshape(-1, 3)


def save_off(path, vertices, faces) -> None:
    vertices = np.asarray(vertices)
    faces = np.asarray(faces)
    with open(path, "w") as fh:
        fh.write(f"OFF\n{len(vertices)} {len(faces)} 0\n")
        for x, y, z in vertices:
            fh.write(f"{float(x)!r} {float(y)!r} {float(z)!r}\n")
        for a, b, c in faces:
            fh.write(f"3 {a} {b} {c}\n")


def save_obj(path, vertices, faces) -> None:
    with open(path, "w") as fh:
        for x, y, z in np.asarray(vertices):
            fh.write(f"v {float(x)!r} {float(y)!r} {float(z)!r}\n")
        for a, b, c in np.asarray(faces):
            fh.write(f"f {a + 1} {b + 1} {c + 1}\n")


# ----------------------------------------------------------------------
# classification

def vertex_angle_sum(mesh: Mesh, v: int) -> float:
    """Sum of the triangle angles incident to vertex ``v`` (radians)."""
    return float(mesh.angle_sums[mesh.check_vertex(v)])


@dataclass(frozen=True)
class VertexClassification:
    """Partition of the vertices into saddles and the rest.

    ``saddle_rank[v]`` is the row of ``v`` in ``saddle_set`` or -1.
    """

    saddle_set: np.ndarray
    non_saddle_set: np.ndarray
    saddle_rank: np.ndarray

    @property
    def is_saddle(self) -> np.ndarray:
        return self.saddle_rank >= 0

    @property
    def n_saddles(self) -> int:
        return len(self.saddle_set)

    @classmethod
    def from_mask(cls, mask) -> "VertexClassification":
        mask = np.asarray(mask, dtype=bool)
        saddles = np.flatnonzero(mask).astype(np.int64)
        rank = np.full(len(mask), -1, dtype=np.int64)
        rank[saddles] = np.arange(len(saddles))
        others = np.flatnonzero(~mask).astype(np.int64)
        for arr in (saddles, others, rank):
            arr.setflags(write=False)
        return cls(saddles, others, rank)


def classify_vertices(mesh: Mesh, tolerance: float = ANGLE_TOLERANCE) -> VertexClassification:
    """Saddle iff the angle sum exceeds ``2*pi + tolerance``.

    Boundary vertices follow the same rule.
    """
    return VertexClassification.from_mask(mesh.angle_sums > 2.0 * math.pi + tolerance)
