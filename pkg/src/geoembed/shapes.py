"""Procedural meshes used by the tests, the acceptance suite and the CLI demo.

All generators return ``(vertices, faces)`` arrays; wrap them in
:class:`geoembed.mesh.Mesh` to get connectivity.
"""

from __future__ import annotations

import numpy as np


def icosahedron(radius: float = 1.0):
    """Regular icosahedron with 12 vertices and 20 faces."""
    phi = (1.0 + 5 ** 0.5) / 2.0
    v = np.array([
        [-1, phi, 0], [1, phi, 0], [-1, -phi, 0], [1, -phi, 0],
        [0, -1, phi], [0, 1, phi], [0, -1, -phi], [0, 1, -phi],
        [phi, 0, -1], [phi, 0, 1], [-phi, 0, -1], [-phi, 0, 1],
    ], dtype=np.float64)
    v *= radius / np.linalg.norm(v[0])
    f = np.array([
        [0, 11, 5], [0, 5, 1], [0, 1, 7], [0, 7, 10], [0, 10, 11],
        [1, 5, 9], [5, 11, 4], [11, 10, 2], [10, 7, 6], [7, 1, 8],
        [3, 9, 4], [3, 4, 2], [3, 2, 6], [3, 6, 8], [3, 8, 9],
        [4, 9, 5], [2, 4, 11], [6, 2, 10], [8, 6, 7], [9, 8, 1],
    ], dtype=np.int64)
    return v, f


def unit_cube():
    """Axis-aligned unit cube, each square split into two triangles."""
    v = np.array([[x, y, z] for x in (0.0, 1.0) for y in (0.0, 1.0) for z in (0.0, 1.0)])
    # vertex index = 4x + 2y + z
    quads = [
        (0, 1, 3, 2),  # x = 0
        (4, 6, 7, 5),  # x = 1
        (0, 4, 5, 1),  # y = 0
        (2, 3, 7, 6),  # y = 1
        (0, 2, 6, 4),  # z = 0
        (1, 5, 7, 3),  # z = 1
    ]
    f = []
    for a, b, c, d in quads:
        f.append((a, b, c))
        f.append((a, c, d))
    return v, np.array(f, dtype=np.int64)


def flat_grid(nx: int, ny: int, spacing: float = 1.0, jitter: float = 0.0, seed: int = 0):
    """Planar ``nx`` x ``ny`` vertex grid in z = 0.

    ``jitter`` moves interior vertices in-plane by up to that fraction of the
    spacing, which keeps the surface flat but breaks the lattice symmetry.
    """
    xs, ys = np.meshgrid(np.arange(nx, dtype=float), np.arange(ny, dtype=float), indexing="ij")
    v = np.column_stack([xs.ravel(), ys.ravel(), np.zeros(nx * ny)]) * spacing
    if jitter:
        rng = np.random.default_rng(seed)
        interior = (xs.ravel() > 0) & (xs.ravel() < nx - 1) & (ys.ravel() > 0) & (ys.ravel() < ny - 1)
        v[interior, :2] += rng.uniform(-jitter, jitter, (interior.sum(), 2)) * spacing
    idx = np.arange(nx * ny).reshape(nx, ny)
    a = idx[:-1, :-1].ravel()
    b = idx[1:, :-1].ravel()
    c = idx[1:, 1:].ravel()
    d = idx[:-1, 1:].ravel()
    f = np.concatenate([np.column_stack([a, b, c]), np.column_stack([a, c, d])])
    return v, f


def icosphere(subdivisions: int, radius: float = 1.0):
    """Loop-style subdivided icosahedron projected onto a sphere (10*4^k + 2 vertices)."""
    v, f = icosahedron()
    verts = [tuple(p) for p in v]
    faces = f
    for _ in range(subdivisions):
        cache: dict[tuple[int, int], int] = {}

        def midpoint(i, j):
            key = (i, j) if i < j else (j, i)
            if key not in cache:
                p = (np.asarray(verts[i]) + np.asarray(verts[j])) / 2.0
                verts.append(tuple(p / np.linalg.norm(p)))
                cache[key] = len(verts) - 1
            return cache[key]

        nf = []
        for a, b, c in faces:
            ab, bc, ca = midpoint(a, b), midpoint(b, c), midpoint(c, a)
            nf += [(a, ab, ca), (b, bc, ab), (c, ca, bc), (ab, bc, ca)]
        faces = np.array(nf, dtype=np.int64)
    v = np.array(verts) * radius
    return v, faces


def torus(n_major: int, n_minor: int, major_radius: float = 1.0, minor_radius: float = 0.4,
          noise: float = 0.0, seed: int = 0):
    """Torus; the inner half of the tube has negative curvature.

    ``noise`` displaces each vertex along the tube normal by up to that
    fraction of the mean edge length, scattering saddles over the whole
    surface.
    """
    u = 2 * np.pi * np.arange(n_major) / n_major
    w = 2 * np.pi * np.arange(n_minor) / n_minor
    uu, ww = np.meshgrid(u, w, indexing="ij")
    edge = 0.5 * (2 * np.pi * major_radius / n_major + 2 * np.pi * minor_radius / n_minor)
    tube = minor_radius + noise * edge * np.random.default_rng(seed).uniform(-0.5, 0.5, uu.shape)
    ring = major_radius + tube * np.cos(ww)
    v = np.column_stack([
        (ring * np.cos(uu)).ravel(),
        (ring * np.sin(uu)).ravel(),
        (tube * np.sin(ww)).ravel(),
    ])
    idx = np.arange(n_major * n_minor).reshape(n_major, n_minor)
    a = idx.ravel()
    b = np.roll(idx, -1, axis=0).ravel()
    c = np.roll(np.roll(idx, -1, axis=0), -1, axis=1).ravel()
    d = np.roll(idx, -1, axis=1).ravel()
    f = np.concatenate([np.column_stack([a, b, c]), np.column_stack([a, c, d])])
    return v, f


def bumpy_sphere(subdivisions: int = 4, amplitude: float = 0.15, lobes: int = 12,
                 noise: float = 0.25, seed: int = 0):
    """Icosphere with smooth random lobes and per-vertex radial noise.

    The lobes give long geodesics something to bend around; ``noise`` (a
    fraction of the mean edge length) roughens the surface the way scanned
    models are rough, which turns roughly half of the vertices into saddles.
    """
    rng = np.random.default_rng(seed)
    v, f = icosphere(subdivisions)
    centers = rng.normal(size=(lobes, 3))
    centers /= np.linalg.norm(centers, axis=1, keepdims=True)
    heights = rng.uniform(-1.0, 1.0, lobes)
    widths = rng.uniform(0.25, 0.6, lobes)
    cosang = v @ centers.T
    field = (heights * np.exp(-(1.0 - cosang) / widths ** 2)).sum(axis=1)
    edge = np.mean(np.linalg.norm(v[f[:, 0]] - v[f[:, 1]], axis=1))
    r = 1.0 + amplitude * field + noise * edge * rng.uniform(-0.5, 0.5, len(v))
    return v * r[:, None], f


def studded_sphere(subdivisions: int = 5, stud_level: int = 2, height: float = 0.02):
    """Icosphere whose coarse-level vertices are raised into small studs.

    The vertices inherited from subdivision level ``stud_level`` are pushed
    out by the fraction ``height`` of the radius. Each stud is surrounded by
    a ring of saddles, so saddles are spread evenly but sparsely: level 5
    with studs at level 2 gives 10242 vertices and 960 saddles.
    """
    if not 0 <= stud_level <= subdivisions:
        raise ValueError("stud_level must lie in [0, subdivisions]")
    v, f = icosphere(subdivisions)
    # subdivision appends new vertices, so coarse levels come first
    k = 10 * 4 ** stud_level + 2
    v[:k] *= 1.0 + height
    return v, f
