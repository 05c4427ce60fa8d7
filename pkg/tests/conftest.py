from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np
import pytest

from geoembed import shapes
from geoembed.embedding import Embedding, geodesic_embedding, ground_truth_saddle_distances
from geoembed.mesh import Mesh, VertexClassification, classify_vertices
from geoembed.query import QueryContext
from geoembed.svg import Svg, SvgParams, build_svg

ACCEPTANCE_LINES: dict[int, str] = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE_LINES):
        terminalreporter.write_line(ACCEPTANCE_LINES[k])


@pytest.fixture
def acceptance():
    """``record(n, ok, detail)`` stores one summary line per criterion."""

    def record(n: int, ok: bool, detail: str) -> None:
        line = f"criterion {n:2d}: {'PASS' if ok else 'FAIL'}  {detail}"
        ACCEPTANCE_LINES[n] = line
        print(line)

    return record


@dataclass(eq=False)
class Pipeline:
    mesh: Mesh
    classification: VertexClassification
    svg: Svg
    embedding: Embedding
    D: np.ndarray
    ctx: QueryContext
    seconds: float = 0.0


def build_pipeline(mesh: Mesh, m: int = 8, l: int = 46, params: SvgParams | None = None) -> Pipeline:  # noqa: E741
    t0 = time.perf_counter()
    cls = classify_vertices(mesh)
    svg = build_svg(mesh, cls, params or SvgParams())
    D = ground_truth_saddle_distances(mesh, cls)
    emb = geodesic_embedding(mesh, cls, m=m, l=l, D=D)
    return Pipeline(mesh, cls, svg, emb, D, QueryContext(mesh, cls, svg, emb),
                    time.perf_counter() - t0)


@pytest.fixture(scope="session")
def cube() -> Mesh:
    return Mesh(*shapes.unit_cube())


@pytest.fixture(scope="session")
def icosa() -> Mesh:
    return Mesh(*shapes.icosahedron())


@pytest.fixture(scope="session")
def bumpy() -> Mesh:
    return Mesh(*shapes.bumpy_sphere(3))


@pytest.fixture(scope="session")
def small_torus() -> Mesh:
    return Mesh(*shapes.torus(24, 16, noise=0.3))


@pytest.fixture(scope="session")
def small_pipeline(small_torus) -> Pipeline:
    """384 vertices, a few cascade rounds; cheap enough for unit tests."""
    return build_pipeline(small_torus, m=8, l=6)


@pytest.fixture(scope="session")
def torus_2k() -> Mesh:
    """2000 vertices, about 57% saddles."""
    return Mesh(*shapes.torus(50, 40, noise=0.3))


@pytest.fixture(scope="session")
def torus_2k_pipeline(torus_2k) -> Pipeline:
    return build_pipeline(torus_2k, m=8, l=50)
