"""3D keypoint selection: farthest point sampling and curvature scoring.

Farthest point sampling (FPS) greedily adds the point with the largest
minimum distance to the already-selected set, which spreads keypoints
uniformly over the model. Curvature point sampling (CPS) ranks points by
local-PCA curvature weighted by distance from the object centroid and
takes the top k; because it is a pure top-k with no suppression it tends
to cluster keypoints on the most curved regions.

All comparisons are done on squared distances; ties always resolve to
the lowest point index, which makes both samplers fully deterministic.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InsufficientPoints, InvalidK
from .mesh_io import PointCloud, TriangleMesh, centroid

# brute-force kNN beyond this size is replaced by a tree-accelerated path
# that must return identical indices
_KNN_BRUTE_MAX = 50_000

DEFAULT_K_KEYPOINTS = 50

# vertex counts below this are considered too sparse for stable curvature;
# meshes get densified by surface sampling before CPS
_CPS_MIN_VERTICES = 5_000
_CPS_DENSIFY_TARGET = 10_000


@dataclass(frozen=True)
class CurvatureParams:
    """Local-PCA neighborhood size and the zero-division guard epsilon."""

    k_neighbors: int = 16
    epsilon: float = 1e-8

    def __post_init__(self):
        if self.k_neighbors < 4:
            raise ValueError(f"k_neighbors must be >= 4, got {self.k_neighbors}")
        if not self.epsilon > 0:
            raise ValueError(f"epsilon must be > 0, got {self.epsilon}")


@dataclass(frozen=True, eq=False)
class KeypointSet:
    """k selected model keypoints plus their indices into the source cloud."""

    object_id: str
    strategy: str  # "fps" | "cps"
    points: np.ndarray
    source_indices: np.ndarray

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=np.float64).reshape(-1, 3)
        idx = np.asarray(self.source_indices, dtype=np.int64).reshape(-1)
        if len(pts) != len(idx):
            raise ValueError("points and source_indices length mismatch")
        if len(np.unique(idx)) != len(idx):
            raise ValueError("source indices must be unique")
        pts.setflags(write=False)
        idx.setflags(write=False)
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "source_indices", idx)

    def __len__(self):
        return len(self.points)

    def to_dict(self) -> dict:
        return {
            "object_id": self.object_id,
            "points": [[float(v) for v in p] for p in self.points],
        }


# --- k-nearest neighbors ----------------------------------------------------

def _knn_brute(pts: np.ndarray, k: int) -> np.ndarray:
    """Exact kNN indices (self included), ties broken by lowest index."""
    n = len(pts)
    out = np.empty((n, k), dtype=np.int64)
    chunk = max(1, (1 << 23) // max(n, 1))
    for i in range(0, n, chunk):
        block = pts[i:i + chunk]
        d2 = ((block[:, None, :] - pts[None, :, :]) ** 2).sum(axis=2)
        out[i:i + chunk] = np.argsort(d2, axis=1, kind="stable")[:, :k]
    return out


def _knn_tree(pts: np.ndarray, k: int) -> np.ndarray:
    """Tree-accelerated kNN that reranks candidates with the brute-force
    metric so results are identical to _knn_brute."""
    from scipy.spatial import cKDTree

    tree = cKDTree(pts)
    dist, _ = tree.query(pts, k=k)
    kth = dist[:, -1] if k > 1 else dist
    out = np.empty((len(pts), k), dtype=np.int64)
    for i, p in enumerate(pts):
        cand = np.asarray(tree.query_ball_point(p, float(kth[i]) * (1.0 + 1e-12)),
                          dtype=np.int64)
        if len(cand) < k:  # fp disagreement safety net
            d2 = ((pts - p) ** 2).sum(axis=1)
            out[i] = np.argsort(d2, kind="stable")[:k]
            continue
        d2 = ((pts[cand] - p) ** 2).sum(axis=1)
        order = np.lexsort((cand, d2))
        out[i] = cand[order[:k]]
    return out


def knn_indices(pts: np.ndarray, k: int, brute_max: int = _KNN_BRUTE_MAX) -> np.ndarray:
    if len(pts) <= brute_max:
        return _knn_brute(pts, k)
    return _knn_tree(pts, k)


# --- samplers ---------------------------------------------------------------

def fps(pc: PointCloud, k: int, start: int = 0, seed: int | None = None,
        object_id: str = "") -> KeypointSet:
    """Greedy farthest point sampling.

    Each added point maximizes the minimum (squared) distance to the
    selected set; ties resolve to the lowest index. The start point
    defaults to index 0 for reproducibility; pass `seed` to draw it from
    a seeded generator instead.
    """
    pts = pc.points
    n = len(pts)
    if k < 1 or k > n:
        raise InvalidK(f"k must be in [1, {n}], got {k}")
    if seed is not None:
        start = int(np.random.Generator(np.random.PCG64(seed)).integers(n))
    if not 0 <= start < n:
        raise InvalidK(f"start index {start} out of range for {n} points")

    selected = np.empty(k, dtype=np.int64)
    selected[0] = start
    min_d2 = ((pts - pts[start]) ** 2).sum(axis=1)
    for i in range(1, k):
        nxt = int(np.argmax(min_d2))  # argmax returns the lowest tied index
        selected[i] = nxt
        min_d2 = np.minimum(min_d2, ((pts - pts[nxt]) ** 2).sum(axis=1))
    return KeypointSet(object_id, "fps", pts[selected], selected)


def curvature(pc: PointCloud, params: CurvatureParams | None = None, *,
              k_neighbors: int | None = None, epsilon: float | None = None,
              brute_max: int = _KNN_BRUTE_MAX) -> np.ndarray:
    """Per-point curvature lam0 / (lam0 + lam1 + lam2 + eps) in [0, 1/3].

    lam0 <= lam1 <= lam2 are the eigenvalues of the covariance of each
    point's k nearest neighbors (the point itself counts as a neighbor).
    Keyword overrides exist so experiments can probe epsilon = 0, which
    CurvatureParams itself forbids.
    """
    params = params or CurvatureParams()
    k = k_neighbors if k_neighbors is not None else params.k_neighbors
    eps = epsilon if epsilon is not None else params.epsilon
    pts = pc.points
    if len(pts) <= k:
        raise InsufficientPoints(f"need more than {k} points, got {len(pts)}")

    nbr = knn_indices(pts, k, brute_max=brute_max)  # (n, k)
    nb = pts[nbr]                                   # (n, k, 3)
    centered = nb - nb.mean(axis=1, keepdims=True)
    cov = np.einsum("nki,nkj->nij", centered, centered) / k
    lam = np.linalg.eigvalsh(cov)                   # ascending
    lam = np.clip(lam, 0.0, None)                   # covariances are PSD
    return lam[:, 0] / (lam.sum(axis=1) + eps)


def cps_scores(pc: PointCloud, params: CurvatureParams | None = None) -> np.ndarray:
    """Curvature weighted by distance from the centroid."""
    kappa = curvature(pc, params)
    dist = np.linalg.norm(pc.points - centroid(pc), axis=1)
    return kappa * dist


def cps(pc: PointCloud, k: int, params: CurvatureParams | None = None,
        object_id: str = "") -> KeypointSet:
    """Top-k points by curvature-times-center-distance score.

    Ties resolve to the lowest index; no non-maximum suppression is
    applied, so high-curvature regions can dominate the selection.
    """
    pts = pc.points
    n = len(pts)
    if k < 1 or k > n:
        raise InvalidK(f"k must be in [1, {n}], got {k}")
    scores = cps_scores(pc, params)
    order = np.lexsort((np.arange(n), -scores))
    selected = order[:k]
    return KeypointSet(object_id, "cps", pts[selected], selected)


def surface_sample(mesh: TriangleMesh, n: int, seed: int = 0) -> PointCloud:
    """Uniform area-weighted sampling of points on the mesh surface."""
    if len(mesh.faces) == 0:
        raise InsufficientPoints("mesh has no faces to sample")
    v = mesh.vertices.points
    a, b, c = v[mesh.faces[:, 0]], v[mesh.faces[:, 1]], v[mesh.faces[:, 2]]
    areas = 0.5 * np.linalg.norm(np.cross(b - a, c - a), axis=1)
    total = areas.sum()
    if total <= 0:
        raise InsufficientPoints("mesh has zero surface area")
    cdf = np.cumsum(areas) / total

    rng = np.random.Generator(np.random.PCG64(seed))
    tri = np.minimum(np.searchsorted(cdf, rng.random(n), side="right"),
                     len(areas) - 1)
    # sqrt trick gives uniform barycentric coordinates
    s = np.sqrt(rng.random(n))[:, None]
    t = rng.random(n)[:, None]
    pts = a[tri] * (1 - s) + b[tri] * (s * (1 - t)) + c[tri] * (s * t)
    return PointCloud(pts)


def select_keypoints(model: TriangleMesh | PointCloud, strategy: str, k: int,
                     object_id: str = "", params: CurvatureParams | None = None,
                     start: int = 0, seed: int = 0) -> KeypointSet:
    """Strategy dispatch used by the CLI and the simulator.

    For CPS, meshes with fewer than 5000 vertices are densified by
    seeded surface sampling to 10000 points first; curvature on sparse
    vertex sets is unstable.
    """
    if strategy not in ("fps", "cps"):
        raise ValueError(f"unknown strategy {strategy!r}")
    cloud = model.vertices if isinstance(model, TriangleMesh) else model
    if strategy == "fps":
        return fps(cloud, k, start=start, object_id=object_id)
    if (isinstance(model, TriangleMesh) and len(model.faces) > 0
            and len(cloud) < _CPS_MIN_VERTICES):
        cloud = surface_sample(model, _CPS_DENSIFY_TARGET, seed=seed)
    return cps(cloud, k, params=params, object_id=object_id)


def min_pairwise_distance(points: np.ndarray) -> float:
    """Smallest distance between any two points (coverage spread statistic)."""
    pts = np.asarray(points, dtype=float)
    d2 = ((pts[:, None, :] - pts[None, :, :]) ** 2).sum(axis=2)
    d2[np.diag_indices(len(pts))] = np.inf
    return float(np.sqrt(d2.min()))
