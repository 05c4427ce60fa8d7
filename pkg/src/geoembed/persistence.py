"""Versioned binary file for a precomputation.

Layout, all little-endian and fixed width::

    header   magic "GEPC", u32 version, u64 mesh checksum, u64 n, u64 |V_S|,
             u32 m, u32 l, u32 K, u32 K_S, u64 nnz, u64 metadata bytes
    bitmap   ceil(n / 8) bytes, bit v (LSB first) set iff v is a saddle
    saddles  u32 x |V_S|
    Q        f8 x |V_S| x m, row-major
    S, T     f8 x |V_S| x l each
    offsets  u64 x (n + 1)
    indices  u32 x nnz
    weights  f8 x nnz
    history  f8 x (l + 1) objective, then f8 x (l + 1) mean relative error
    metadata UTF-8 JSON
    trailer  u32 CRC-32 of every preceding byte

The mesh is not stored; its checksum binds the file to it.
"""

from __future__ import annotations

import json
import os
import struct
import tempfile
import zlib
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .embedding import Embedding
from .errors import (BadMagicError, ChecksumMismatchError, CorruptFileError,
                     TruncatedFileError, UnsupportedVersionError)
from .mesh import Mesh, VertexClassification
from .query import QueryContext
from .svg import Svg, SvgParams

MAGIC = b"GEPC"
VERSION = 1
HEADER = struct.Struct("<4sIQQQIIIIQQ")
TRAILER = struct.Struct("<I")


@dataclass(frozen=True)
class Header:
    version: int
    mesh_checksum: int
    n: int
    n_saddles: int
    m: int
    l: int  # noqa: E741
    K: int
    K_S: int
    nnz: int
    metadata_bytes: int

    def section_sizes(self) -> list[tuple[str, int]]:
        N, n = self.n_saddles, self.n
        return [
            ("bitmap", (n + 7) // 8),
            ("saddles", 4 * N),
            ("Q", 8 * N * self.m),
            ("S", 8 * N * self.l),
            ("T", 8 * N * self.l),
            ("offsets", 8 * (n + 1)),
            ("indices", 4 * self.nnz),
            ("weights", 8 * self.nnz),
            ("objective", 8 * (self.l + 1)),
            ("error", 8 * (self.l + 1)),
            ("metadata", self.metadata_bytes),
        ]

    def file_size(self) -> int:
        return HEADER.size + sum(s for _, s in self.section_sizes()) + TRAILER.size

    def to_dict(self) -> dict:
        return {"version": self.version, "mesh_checksum": f"{self.mesh_checksum:016x}",
                "n": self.n, "n_saddles": self.n_saddles, "m": self.m, "l": self.l,
                "K": self.K, "K_S": self.K_S, "nnz": self.nnz}


def _metadata_json(svg: Svg, embedding: Embedding, metadata: dict | None) -> bytes:
    doc = {
        "embedding": embedding.metadata,
        "svg": {"K": svg.params.K, "K_S": svg.params.K_S},
        "user": metadata or {},
    }
    return json.dumps(doc, sort_keys=True, separators=(",", ":")).encode("utf-8")


def encode_precomputation(mesh: Mesh, classification: VertexClassification, svg: Svg,
                          embedding: Embedding, metadata: dict | None = None) -> bytes:
    """The file contents as bytes; see the module docstring for the layout."""
    QueryContext(mesh, classification, svg, embedding)  # raises on inconsistent inputs
    n = mesh.n_vertices
    if n >= 2**32:
        raise ValueError("vertex indices do not fit the 32-bit index fields")
    meta = _metadata_json(svg, embedding, metadata)
    head = HEADER.pack(MAGIC, VERSION, mesh.checksum, n, embedding.n_saddles, embedding.m,
                       embedding.l, svg.params.K, svg.params.K_S, len(svg.indices), len(meta))
    parts = [
        head,
        np.packbits(np.asarray(classification.is_saddle, dtype=bool), bitorder="little").tobytes(),
        np.asarray(embedding.saddle_vertices, dtype="<u4").tobytes(),
        np.ascontiguousarray(embedding.euclidean, dtype="<f8").tobytes(),
        np.ascontiguousarray(embedding.s_block, dtype="<f8").tobytes(),
        np.ascontiguousarray(embedding.t_block, dtype="<f8").tobytes(),
        np.asarray(svg.indptr, dtype="<u8").tobytes(),
        np.asarray(svg.indices, dtype="<u4").tobytes(),
        np.asarray(svg.weights, dtype="<f8").tobytes(),
        np.asarray(embedding.objective_history, dtype="<f8").tobytes(),
        np.asarray(embedding.error_history, dtype="<f8").tobytes(),
        meta,
    ]
    body = b"".join(parts)
    return body + TRAILER.pack(zlib.crc32(body))


def _umask() -> int:
    mask = os.umask(0)
    os.umask(mask)
    return mask


def save_precomputation(path, mesh: Mesh, classification: VertexClassification, svg: Svg,
                        embedding: Embedding, metadata: dict | None = None) -> None:
    """Write the precomputation atomically (temporary file, then rename).

    Raises
    ------
    ContextMismatchError
        If the parts do not belong together.
    OSError
        On I/O failure; an existing file at ``path`` is left untouched.
    """
    data = encode_precomputation(mesh, classification, svg, embedding, metadata)
    path = Path(path)
    fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", suffix=".tmp", dir=path.parent or ".")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
            fh.flush()
            os.fsync(fh.fileno())
        os.chmod(tmp, 0o666 & ~_umask())
        os.replace(tmp, path)
    except BaseException:
        try:
            os.unlink(tmp)
        except FileNotFoundError:
            pass
        raise


def parse_header(data: bytes) -> Header:
    """Check magic, version and overall length; no payload validation."""
    if len(data) < len(MAGIC):
        raise TruncatedFileError(f"file is {len(data)} bytes, too short for a header")
    if data[:len(MAGIC)] != MAGIC:
        raise BadMagicError(f"bad magic {data[:len(MAGIC)]!r}, expected {MAGIC!r}")
    if len(data) < HEADER.size:
        raise TruncatedFileError(f"file is {len(data)} bytes, header needs {HEADER.size}")
    _, version, checksum, n, N, m, l, K, K_S, nnz, meta = HEADER.unpack_from(data)
    if version != VERSION:
        raise UnsupportedVersionError(f"format version {version} is not supported "
                                      f"(this build reads version {VERSION})")
    h = Header(version, checksum, n, N, m, l, K, K_S, nnz, meta)
    expected = h.file_size()
    if len(data) < expected:
        raise TruncatedFileError(f"file is {len(data)} bytes, header promises {expected}")
    if len(data) > expected:
        raise CorruptFileError(f"{len(data) - expected} unexpected bytes after the payload")
    (crc,) = TRAILER.unpack_from(data, expected - TRAILER.size)
    if zlib.crc32(memoryview(data)[:expected - TRAILER.size]) != crc:
        raise CorruptFileError("CRC-32 mismatch, the file is damaged")
    return h


def _sections(data: bytes, h: Header) -> dict[str, memoryview]:
    view = memoryview(data)
    out, pos = {}, HEADER.size
    for name, size in h.section_sizes():
        out[name] = view[pos:pos + size]
        pos += size
    return out


def _array(buf, dtype, shape=None) -> np.ndarray:
    a = np.frombuffer(buf, dtype=dtype).astype(np.dtype(dtype).newbyteorder("="))
    if shape is not None:
        a = a.reshape(shape)
    a.setflags(write=False)
    return a


def _require(cond: bool, message: str) -> None:
    if not cond:
        raise CorruptFileError(message)


def decode_precomputation(data: bytes, mesh: Mesh) -> QueryContext:
    """Validate ``data`` against ``mesh`` and build a query context."""
    h = parse_header(data)
    if h.mesh_checksum != mesh.checksum:
        raise ChecksumMismatchError(f"file was built for mesh {h.mesh_checksum:016x}, "
                                    f"got mesh {mesh.checksum:016x}")
    _require(h.n == mesh.n_vertices, "vertex count does not match the mesh")
    sec = _sections(data, h)
    n, N = h.n, h.n_saddles

    bits = np.unpackbits(np.frombuffer(sec["bitmap"], dtype=np.uint8), bitorder="little")
    _require(not bits[n:].any(), "padding bits of the saddle bitmap are set")
    mask = bits[:n].astype(bool)
    saddles = _array(sec["saddles"], "<u4").astype(np.int64)
    _require(np.array_equal(saddles, np.flatnonzero(mask)),
             "saddle list does not match the saddle bitmap")
    classification = VertexClassification.from_mask(mask)

    indptr = _array(sec["offsets"], "<u8").astype(np.int64)
    indices = _array(sec["indices"], "<u4").astype(np.int64)
    weights = _array(sec["weights"], "<f8")
    _require(indptr[0] == 0 and indptr[-1] == h.nnz and np.all(np.diff(indptr) >= 0),
             "graph offsets are not monotone")
    _require(bool(np.all(indices < n)), "graph neighbour index out of range")
    row = np.repeat(np.arange(n), np.diff(indptr))
    same_row = row[1:] == row[:-1]
    _require(bool(np.all(indices[1:][same_row] > indices[:-1][same_row])),
             "graph rows are not sorted ascending")
    _require(bool(np.all(np.isfinite(weights) & (weights > 0))), "graph weights must be positive")
    try:
        params = SvgParams(h.K, h.K_S)
    except ValueError as exc:
        raise CorruptFileError(f"invalid graph parameters: {exc}") from None
    for a in (indptr, indices):
        a.setflags(write=False)
    is_saddle = mask.copy()
    is_saddle.setflags(write=False)
    svg = Svg(indptr, indices, weights, is_saddle, params)

    objective = _array(sec["objective"], "<f8")
    error = _array(sec["error"], "<f8")
    _require(bool(np.all(np.diff(objective) <= 0)), "objective history is not non-increasing")
    try:
        meta = json.loads(bytes(sec["metadata"]).decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CorruptFileError(f"metadata block is not valid JSON: {exc}") from None
    _require(isinstance(meta, dict), "metadata block is not a JSON object")
    saddles.setflags(write=False)
    embedding = Embedding(
        _array(sec["Q"], "<f8", (N, h.m)),
        _array(sec["S"], "<f8", (N, h.l)),
        _array(sec["T"], "<f8", (N, h.l)),
        saddles, objective, error, meta.get("embedding", {}),
    )
    return QueryContext(mesh, classification, svg, embedding)


def load_precomputation(path, mesh: Mesh) -> QueryContext:
    """Read and validate a precomputation file for ``mesh``.

    Raises
    ------
    BadMagicError, UnsupportedVersionError
        Not a file of this format, or a version this build cannot read.
    TruncatedFileError
        The file is shorter than its header promises.
    CorruptFileError
        CRC mismatch or an invalid payload.
    ChecksumMismatchError
        The file was built for a different mesh.
    """
    return decode_precomputation(Path(path).read_bytes(), mesh)


def read_header(path) -> tuple[Header, dict]:
    """Header and metadata of a file without needing its mesh."""
    data = Path(path).read_bytes()
    h = parse_header(data)
    try:
        meta = json.loads(bytes(_sections(data, h)["metadata"]).decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CorruptFileError(f"metadata block is not valid JSON: {exc}") from None
    return h, meta


def dump_json(path, ctx: QueryContext) -> None:
    """Lossy human-readable summary for debugging; never read back."""
    emb, svg = ctx.embedding, ctx.svg
    deg = svg.degrees()
    doc = {
        "n": ctx.mesh.n_vertices,
        "n_saddles": emb.n_saddles,
        "m": emb.m,
        "l": emb.l,
        "K": svg.params.K,
        "K_S": svg.params.K_S,
        "mesh_checksum": f"{ctx.mesh.checksum:016x}",
        "graph": {"edges": svg.n_edges, "degree_min": int(deg.min()),
                  "degree_mean": float(deg.mean()), "degree_max": int(deg.max())},
        "objective_history": emb.objective_history.tolist(),
        "error_history": emb.error_history.tolist(),
        "saddle_vertices": emb.saddle_vertices.tolist(),
        "euclidean": emb.euclidean.tolist(),
        "metadata": emb.metadata,
    }
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=1, sort_keys=True)
        fh.write("\n")
