"""Procedural test objects: subdivided boxes, seeded blob clouds, and an
exactly four-fold symmetric point set.

These stand in for scanned models so experiments and tests run without
asset files. Dimensions are millimeters, chosen so default objects
comfortably clear the 80 mm diameter regime where a one tenth diameter
threshold is meaningful at VGA-like intrinsics.
"""

from __future__ import annotations

import numpy as np

from .mesh_io import PointCloud, TriangleMesh


def box_mesh(extents: tuple[float, float, float] = (90.0, 70.0, 50.0),
             divisions: int = 4) -> TriangleMesh:
    """Axis-aligned box centered at the origin, each face a divisions x
    divisions triangle grid. Shared edge vertices are deduplicated."""
    if divisions < 1:
        raise ValueError("divisions must be >= 1")
    half = np.asarray(extents, dtype=np.float64) / 2.0
    if not np.all(half > 0):
        raise ValueError("extents must be positive")

    verts = []
    faces = []
    d = divisions
    for axis in range(3):
        u_axis, v_axis = (axis + 1) % 3, (axis + 2) % 3
        for sign in (-1.0, 1.0):
            base = len(verts)
            for i in range(d + 1):
                for j in range(d + 1):
                    p = np.zeros(3)
                    p[axis] = sign * half[axis]
                    p[u_axis] = -half[u_axis] + 2.0 * half[u_axis] * i / d
                    p[v_axis] = -half[v_axis] + 2.0 * half[v_axis] * j / d
                    verts.append(p)
            for i in range(d):
                for j in range(d):
                    a = base + i * (d + 1) + j
                    b = a + 1
                    c = a + (d + 1)
                    e = c + 1
                    faces.append((a, b, c))
                    faces.append((b, e, c))

    verts = np.array(verts)
    unique, inverse = np.unique(verts, axis=0, return_inverse=True)
    faces = inverse[np.array(faces, dtype=np.int64)]
    return TriangleMesh(PointCloud(unique), faces)


def blob_cloud(n: int = 200, scale: float = 50.0, seed: int = 0) -> PointCloud:
    """Seeded isotropic Gaussian point cloud (std = scale, mm)."""
    rng = np.random.Generator(np.random.PCG64(seed))
    return PointCloud(rng.normal(scale=scale, size=(n, 3)))


def four_fold_points(radii: tuple[float, ...] = (30.0, 45.0, 60.0),
                     heights: tuple[float, ...] = (-20.0, 0.0, 20.0)) -> np.ndarray:
    """Point set exactly invariant under a 90 degree rotation about z.

    Every point is replicated at all four quarter turns using exact
    coordinate swaps, so rotating the set by pi/2 permutes it with zero
    floating point error. Useful as a symmetric fixture where ADD is
    large but ADD-S vanishes.
    """
    pts = []
    for r in radii:
        for h in heights:
            x, y = r, 0.37 * r  # off-axis so the only symmetry is 4-fold
            for _ in range(4):
                pts.append((x, y, h))
                x, y = -y, x  # exact quarter turn
    return np.array(pts, dtype=np.float64)
