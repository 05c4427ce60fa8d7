import json
import os
import struct

import numpy as np
import pytest
from hypothesis import HealthCheck, given, settings
from hypothesis import strategies as st

from geoembed import shapes
from geoembed.embedding import Embedding
from geoembed.errors import (BadMagicError, ChecksumMismatchError, CorruptFileError, FormatError,
                             TruncatedFileError, UnsupportedVersionError)
from geoembed.mesh import Mesh
from geoembed.persistence import (HEADER, decode_precomputation, dump_json, encode_precomputation,
                                  load_precomputation, read_header, save_precomputation)
from geoembed.query import ContextMismatchError, query_pairs


@pytest.fixture(scope="module")
def saved(small_pipeline, tmp_path_factory):
    p = small_pipeline
    path = tmp_path_factory.mktemp("pre") / "t.gepc"
    save_precomputation(path, p.mesh, p.classification, p.svg, p.embedding, {"seed": 0})
    return path


@pytest.fixture(scope="module")
def blob(saved):
    return saved.read_bytes()


class TestRoundTrip:
    def test_bit_identical_payload(self, small_pipeline, saved):
        ctx = load_precomputation(saved, small_pipeline.mesh)
        a, b = ctx.embedding, small_pipeline.embedding
        for x, y in [(a.euclidean, b.euclidean), (a.s_block, b.s_block), (a.t_block, b.t_block),
                     (a.objective_history, b.objective_history),
                     (a.error_history, b.error_history)]:
            assert x.tobytes() == y.tobytes()
        np.testing.assert_array_equal(a.saddle_vertices, b.saddle_vertices)
        np.testing.assert_array_equal(ctx.svg.indptr, small_pipeline.svg.indptr)
        np.testing.assert_array_equal(ctx.svg.indices, small_pipeline.svg.indices)
        assert ctx.svg.weights.tobytes() == small_pipeline.svg.weights.tobytes()
        np.testing.assert_array_equal(ctx.classification.is_saddle,
                                      small_pipeline.classification.is_saddle)
        assert ctx.svg.params == small_pipeline.svg.params
        assert a.metadata == json.loads(json.dumps(b.metadata))

    def test_same_answers(self, small_pipeline, saved):
        ctx = load_precomputation(saved, small_pipeline.mesh)
        rng = np.random.default_rng(0)
        us, vs = rng.integers(0, 384, 1000), rng.integers(0, 384, 1000)
        a = query_pairs(ctx, us, vs)
        b = query_pairs(small_pipeline.ctx, us, vs)
        np.testing.assert_array_equal(a.distances, b.distances)
        np.testing.assert_array_equal(a.cases, b.cases)

    def test_file_size(self, small_pipeline, saved):
        p = small_pipeline
        N, m, l = p.embedding.n_saddles, p.embedding.m, p.embedding.l
        h, _ = read_header(saved)
        payload = 8 * N * (m + 2 * l) + 12 * p.svg.degrees().sum()
        overhead = os.path.getsize(saved) - payload
        expected = (HEADER.size + (384 + 7) // 8 + 4 * N + 8 * 385 + 16 * (l + 1)
                    + h.metadata_bytes + 4)
        assert overhead == expected

    def test_deterministic_bytes(self, small_pipeline, blob):
        p = small_pipeline
        again = encode_precomputation(p.mesh, p.classification, p.svg, p.embedding, {"seed": 0})
        assert again == blob

    def test_header(self, small_pipeline, saved):
        h, meta = read_header(saved)
        assert (h.n, h.n_saddles, h.m, h.l, h.K, h.K_S) == (
            384, small_pipeline.classification.n_saddles, 8, 6, 60, 20)
        assert h.mesh_checksum == small_pipeline.mesh.checksum
        assert meta["user"] == {"seed": 0}

    def test_json_dump(self, small_pipeline, tmp_path):
        dump_json(tmp_path / "d.json", small_pipeline.ctx)
        doc = json.loads((tmp_path / "d.json").read_text())
        assert doc["n"] == 384 and doc["l"] == 6
        assert len(doc["objective_history"]) == 7


class TestErrors:
    def test_wrong_mesh(self, saved):
        other = Mesh(*shapes.torus(24, 16, noise=0.3, seed=1))
        with pytest.raises(ChecksumMismatchError):
            load_precomputation(saved, other)

    @pytest.mark.parametrize("cut", [0, 3, 10, HEADER.size, 1000, -1])
    def test_truncated(self, small_pipeline, blob, cut):
        with pytest.raises(TruncatedFileError):
            decode_precomputation(blob[:cut], small_pipeline.mesh)

    def test_bad_magic(self, small_pipeline, blob):
        with pytest.raises(BadMagicError):
            decode_precomputation(b"GEPX" + blob[4:], small_pipeline.mesh)

    def test_bad_version(self, small_pipeline, blob):
        data = blob[:4] + struct.pack("<I", 99) + blob[8:]
        with pytest.raises(UnsupportedVersionError):
            decode_precomputation(data, small_pipeline.mesh)

    def test_trailing_bytes(self, small_pipeline, blob):
        with pytest.raises(CorruptFileError):
            decode_precomputation(blob + b"\0", small_pipeline.mesh)

    def test_flipped_byte(self, small_pipeline, blob):
        data = bytearray(blob)
        data[len(data) // 2] ^= 0x40
        with pytest.raises(CorruptFileError):
            decode_precomputation(bytes(data), small_pipeline.mesh)

    @settings(max_examples=60, deadline=None, suppress_health_check=[HealthCheck.function_scoped_fixture])
    @given(st.data())
    def test_any_damage_is_structured(self, small_pipeline, blob, data):
        mode = data.draw(st.sampled_from(["truncate", "flip"]))
        if mode == "truncate":
            damaged = blob[:data.draw(st.integers(0, len(blob) - 1))]
        else:
            pos = data.draw(st.integers(0, len(blob) - 1))
            bit = data.draw(st.integers(0, 7))
            damaged = bytearray(blob)
            damaged[pos] ^= 1 << bit
            damaged = bytes(damaged)
        with pytest.raises(FormatError):
            decode_precomputation(damaged, small_pipeline.mesh)

    def test_unsorted_rows_detected(self, small_pipeline):
        p = small_pipeline
        from geoembed.svg import Svg

        idx = p.svg.indices.copy()
        lo = p.svg.indptr[0]
        idx[lo], idx[lo + 1] = idx[lo + 1], idx[lo]
        svg = Svg(p.svg.indptr, idx, p.svg.weights, p.svg.is_saddle, p.svg.params)
        data = encode_precomputation(p.mesh, p.classification, svg, p.embedding)
        with pytest.raises(CorruptFileError):
            decode_precomputation(data, p.mesh)

    def test_increasing_history_detected(self, small_pipeline):
        p = small_pipeline
        e = p.embedding
        hist = e.objective_history.copy()
        hist[-1] = hist[0] * 2
        bad = Embedding(e.euclidean, e.s_block, e.t_block, e.saddle_vertices, hist,
                        e.error_history, e.metadata)
        data = encode_precomputation(p.mesh, p.classification, p.svg, bad)
        with pytest.raises(CorruptFileError):
            decode_precomputation(data, p.mesh)

    def test_inconsistent_inputs(self, small_pipeline, tmp_path):
        p = small_pipeline
        e = p.embedding
        bad = Embedding(e.euclidean[1:], e.s_block[1:], e.t_block[1:], e.saddle_vertices[1:],
                        e.objective_history, e.error_history)
        with pytest.raises(ContextMismatchError):
            save_precomputation(tmp_path / "x.gepc", p.mesh, p.classification, p.svg, bad)
        assert not list(tmp_path.iterdir())

    def test_failed_write_keeps_old_file(self, small_pipeline, saved, tmp_path, monkeypatch):
        p = small_pipeline
        target = tmp_path / "keep.gepc"
        target.write_bytes(b"old")

        def boom(*args):
            raise OSError("disk full")

        monkeypatch.setattr(os, "replace", boom)
        with pytest.raises(OSError):
            save_precomputation(target, p.mesh, p.classification, p.svg, p.embedding)
        assert target.read_bytes() == b"old"
        assert [f.name for f in tmp_path.iterdir()] == ["keep.gepc"]

    def test_missing_file(self, small_pipeline, tmp_path):
        with pytest.raises(FileNotFoundError):
            load_precomputation(tmp_path / "none.gepc", small_pipeline.mesh)
