"""Perspective-n-point pose recovery from 2D-3D correspondences.

The pipeline is a direct linear transform (DLT) over normalized camera
coordinates for initialization, followed by Levenberg-Marquardt (LM)
minimization of the pixel reprojection error. Robust estimation wraps
both in a RANSAC loop with 6-point minimal samples drawn by a seeded
Fisher-Yates shuffle, so a given seed always explores the same sample
sequence.

Thresholds and errors are in pixels; translations in millimeters.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DegenerateConfiguration, InsufficientPoints, NoConsensus, ShapeMismatch
from .geometry import (CameraIntrinsics, Pose, nearest_rotation,
                       rotation_from_axis_angle, transform_points)

MIN_POINTS = 6

# singular value ratio below which the DLT system is rank deficient
# (collinear or coplanar object points, repeated observations)
_RANK_TOL = 1e-9

_LM_INITIAL_DAMPING = 1e-3
_LM_MAX_ITERATIONS = 100
_LM_RELATIVE_TOL = 1e-10


@dataclass(frozen=True, eq=False)
class CorrespondenceSet:
    """Paired 3D model points and 2D pixel observations."""

    object_points: np.ndarray  # (N, 3) mm, model frame
    image_points: np.ndarray   # (N, 2) px

    def __post_init__(self):
        obj = np.asarray(self.object_points, dtype=np.float64)
        img = np.asarray(self.image_points, dtype=np.float64)
        if obj.ndim != 2 or obj.shape[1] != 3:
            raise ShapeMismatch(f"object_points must be (N, 3), got {obj.shape}")
        if img.ndim != 2 or img.shape[1] != 2:
            raise ShapeMismatch(f"image_points must be (N, 2), got {img.shape}")
        if len(obj) != len(img):
            raise ShapeMismatch(
                f"{len(obj)} object points vs {len(img)} image points")
        if not (np.all(np.isfinite(obj)) and np.all(np.isfinite(img))):
            raise ValueError("correspondences must be finite")
        obj = obj.copy()
        img = img.copy()
        obj.setflags(write=False)
        img.setflags(write=False)
        object.__setattr__(self, "object_points", obj)
        object.__setattr__(self, "image_points", img)

    def __len__(self):
        return len(self.object_points)

    def subset(self, index) -> "CorrespondenceSet":
        return CorrespondenceSet(self.object_points[index],
                                 self.image_points[index])


@dataclass(frozen=True)
class RansacConfig:
    max_iterations: int = 300
    reproj_threshold: float = 3.0  # px
    min_inliers: int = 6
    confidence: float = 0.999
    seed: int = 0

    def __post_init__(self):
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be >= 1")
        if not self.reproj_threshold > 0:
            raise ValueError("reproj_threshold must be > 0")
        if self.min_inliers < MIN_POINTS:
            raise ValueError(f"min_inliers must be >= {MIN_POINTS}")
        if not 0 < self.confidence < 1:
            raise ValueError("confidence must be in (0, 1)")


@dataclass(frozen=True, eq=False)
class PoseEstimate:
    """RANSAC result: refit pose plus its consensus bookkeeping."""

    pose: Pose
    inlier_mask: np.ndarray      # (N,) bool, against the refit pose
    reprojection_error: float    # mean px error over inliers
    iterations: int              # RANSAC hypotheses evaluated
    converged: bool              # LM refinement reached its tolerance

    def __post_init__(self):
        mask = np.asarray(self.inlier_mask, dtype=bool).copy()
        mask.setflags(write=False)
        object.__setattr__(self, "inlier_mask", mask)

    @property
    def n_inliers(self) -> int:
        return int(self.inlier_mask.sum())


def reprojection_errors(pose: Pose, corr: CorrespondenceSet,
                        intr: CameraIntrinsics) -> np.ndarray:
    """Pixel distance between each observation and its projection.

    Points at non-positive depth get +inf instead of raising, so RANSAC
    can score arbitrary hypotheses.
    """
    cam = transform_points(pose, corr.object_points)
    z = cam[:, 2]
    err = np.full(len(z), np.inf)
    ok = z > 0
    u = intr.fx * cam[ok, 0] / z[ok] + intr.cx
    v = intr.fy * cam[ok, 1] / z[ok] + intr.cy
    err[ok] = np.hypot(u - corr.image_points[ok, 0],
                       v - corr.image_points[ok, 1])
    return err


# --- DLT initialization -----------------------------------------------------

def _hartley_2d(pts: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    c = pts.mean(axis=0)
    m = np.linalg.norm(pts - c, axis=1).mean()
    if m < 1e-12:
        raise DegenerateConfiguration("image points are all identical")
    s = np.sqrt(2.0) / m
    T = np.array([[s, 0.0, -s * c[0]], [0.0, s, -s * c[1]], [0.0, 0.0, 1.0]])
    return (pts - c) * s, T


def _hartley_3d(pts: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    c = pts.mean(axis=0)
    m = np.linalg.norm(pts - c, axis=1).mean()
    if m < 1e-12:
        raise DegenerateConfiguration("object points are all identical")
    s = np.sqrt(3.0) / m
    U = np.eye(4)
    U[:3, :3] *= s
    U[:3, 3] = -s * c
    return (pts - c) * s, U


def _dlt(corr: CorrespondenceSet, intr: CameraIntrinsics) -> Pose:
    """Linear pose initialization.

    Observations are mapped to normalized camera coordinates, both point
    sets get Hartley normalization, and the 2Nx12 homogeneous system is
    solved by SVD. Rank-deficient systems (collinear or coplanar object
    points) raise DegenerateConfiguration.
    """
    xn = np.stack([(corr.image_points[:, 0] - intr.cx) / intr.fx,
                   (corr.image_points[:, 1] - intr.cy) / intr.fy], axis=1)
    x2, T = _hartley_2d(xn)
    x3, U = _hartley_3d(corr.object_points)

    n = len(corr)
    X = np.hstack([x3, np.ones((n, 1))])  # (N, 4)
    A = np.zeros((2 * n, 12))
    A[0::2, 4:8] = -X
    A[0::2, 8:12] = x2[:, 1:2] * X
    A[1::2, 0:4] = X
    A[1::2, 8:12] = -x2[:, 0:1] * X
    _, s, vt = np.linalg.svd(A)
    if s[10] <= _RANK_TOL * s[0]:
        raise DegenerateConfiguration(
            "correspondences do not constrain a unique projection "
            "(collinear or coplanar object points)")
    P = vt[-1].reshape(3, 4)

    # undo both normalizations: x2 ~ Pn * x3  =>  xn ~ (T^-1 Pn U) Xh
    P = np.linalg.solve(T, P) @ U

    M = P[:, :3]
    det = np.linalg.det(M)
    if det < 0:
        P = -P
        M = P[:, :3]
        det = -det
    if det <= 0:
        raise DegenerateConfiguration("projection matrix is singular")
    scale = det ** (1.0 / 3.0)
    R = nearest_rotation(M / scale)
    t = P[:, 3] / scale
    if np.mean(corr.object_points @ R.T[:, 2] + t[2]) <= 0:
        raise DegenerateConfiguration("object points resolve behind the camera")
    return Pose(R, t)


# --- Levenberg-Marquardt refinement -----------------------------------------

def _residuals(R, t, obj, img, intr):
    cam = obj @ R.T + t
    z = cam[:, 2]
    if np.any(z <= 0):
        return None
    u = intr.fx * cam[:, 0] / z + intr.cx
    v = intr.fy * cam[:, 1] / z + intr.cy
    return np.stack([u - img[:, 0], v - img[:, 1]], axis=1).ravel()


def _jacobian(R, t, obj, intr):
    n = len(obj)
    cam = obj @ R.T + t
    x, y, z = cam[:, 0], cam[:, 1], cam[:, 2]
    # d(u,v)/d(cam point)
    duv = np.zeros((n, 2, 3))
    duv[:, 0, 0] = intr.fx / z
    duv[:, 0, 2] = -intr.fx * x / z ** 2
    duv[:, 1, 1] = intr.fy / z
    duv[:, 1, 2] = -intr.fy * y / z ** 2
    # cam point under R <- R exp([dw]x):  d(cam)/d(dw) = -R [X]x
    cross = np.zeros((n, 3, 3))
    cross[:, 0, 1] = -obj[:, 2]
    cross[:, 0, 2] = obj[:, 1]
    cross[:, 1, 0] = obj[:, 2]
    cross[:, 1, 2] = -obj[:, 0]
    cross[:, 2, 0] = -obj[:, 1]
    cross[:, 2, 1] = obj[:, 0]
    dcam = np.empty((n, 3, 6))
    dcam[:, :, :3] = -np.einsum("ij,njk->nik", R, cross)
    dcam[:, :, 3:] = np.eye(3)
    return np.einsum("nij,njk->nik", duv, dcam).reshape(2 * n, 6)


def _lm_refine(pose: Pose, corr: CorrespondenceSet, intr: CameraIntrinsics,
               max_iterations: int = _LM_MAX_ITERATIONS):
    """Damped Gauss-Newton descent on the summed squared pixel error.

    The rotation update is a local axis-angle step applied on the right,
    which keeps the iterate exactly orthonormal. Returns
    (pose, converged, iterations).
    """
    R = np.array(pose.rotation)
    t = np.array(pose.translation)
    obj, img = corr.object_points, corr.image_points
    r = _residuals(R, t, obj, img, intr)
    if r is None:
        return pose, False, 0
    cost = float(r @ r)
    lam = _LM_INITIAL_DAMPING
    converged = False
    iters = 0
    for iters in range(1, max_iterations + 1):
        J = _jacobian(R, t, obj, intr)
        H = J.T @ J
        g = J.T @ r
        D = np.diag(np.maximum(np.diag(H), 1e-12))
        try:
            step = np.linalg.solve(H + lam * D, -g)
        except np.linalg.LinAlgError:
            lam *= 10.0
            continue
        R_new = R @ rotation_from_axis_angle(step[:3])
        t_new = t + step[3:]
        r_new = _residuals(R_new, t_new, obj, img, intr)
        if r_new is None or float(r_new @ r_new) >= cost:
            lam *= 10.0
            if lam > 1e12:
                break
            continue
        new_cost = float(r_new @ r_new)
        R, t, r = R_new, t_new, r_new
        lam *= 0.1
        if cost - new_cost <= _LM_RELATIVE_TOL * max(cost, 1e-300):
            cost = new_cost
            converged = True
            break
        cost = new_cost
    return Pose(nearest_rotation(R), t), converged, iters


def solve_pnp(corr: CorrespondenceSet, intr: CameraIntrinsics,
              refine: bool = True) -> Pose:
    """DLT followed by LM refinement. Needs at least 6 correspondences."""
    if len(corr) < MIN_POINTS:
        raise InsufficientPoints(
            f"need at least {MIN_POINTS} correspondences, got {len(corr)}")
    pose = _dlt(corr, intr)
    if refine:
        pose, _, _ = _lm_refine(pose, corr, intr)
    return pose


# --- RANSAC -----------------------------------------------------------------

def _draw_sample(rng: np.random.Generator, pool: np.ndarray, k: int) -> np.ndarray:
    """Partial Fisher-Yates shuffle; mutates pool, returns its first k slots.

    Implemented with plain integer draws so the sequence depends only on
    the seeded bit stream, not on library-version sampling internals.
    """
    n = len(pool)
    for j in range(k):
        r = j + int(rng.integers(0, n - j))
        pool[j], pool[r] = pool[r], pool[j]
    return pool[:k].copy()


def solve_pnp_ransac(corr: CorrespondenceSet, intr: CameraIntrinsics,
                     config: RansacConfig | None = None) -> PoseEstimate:
    """Robust pose fit with 6-point hypotheses and an adaptive iteration cap.

    Inliers are observations with reprojection error strictly below the
    threshold. The loop exits early once enough hypotheses have been
    tried to hit the configured confidence for the best inlier ratio
    seen so far. The best consensus set is refit with the full solver;
    the reported mask and error are measured against the refit pose.
    Raises NoConsensus when no hypothesis reaches min_inliers.
    """
    config = config or RansacConfig()
    n = len(corr)
    if n < max(MIN_POINTS, config.min_inliers):
        raise InsufficientPoints(
            f"need at least {max(MIN_POINTS, config.min_inliers)} "
            f"correspondences, got {n}")

    rng = np.random.Generator(np.random.PCG64(config.seed))
    pool = np.arange(n)
    best_mask = None
    best_pose = None
    best_count = 0
    iterations = 0
    max_needed = config.max_iterations
    for iterations in range(1, config.max_iterations + 1):
        sample = _draw_sample(rng, pool, MIN_POINTS)
        try:
            hypo = _dlt(corr.subset(sample), intr)
        except DegenerateConfiguration:
            continue
        mask = reprojection_errors(hypo, corr, intr) < config.reproj_threshold
        count = int(mask.sum())
        if count > best_count:
            best_count = count
            best_mask = mask
            best_pose = hypo
            w = count / n
            p_sample = w ** MIN_POINTS
            if p_sample >= 1.0 - 1e-15:
                max_needed = iterations
            else:
                max_needed = int(np.ceil(np.log(1.0 - config.confidence)
                                         / np.log(1.0 - p_sample)))
        if iterations >= max_needed:
            break

    if best_mask is None or best_count < config.min_inliers:
        raise NoConsensus(
            f"best consensus has {best_count} inliers, "
            f"need {config.min_inliers}")

    try:
        refit = _dlt(corr.subset(best_mask), intr)
    except DegenerateConfiguration:
        refit = best_pose  # consensus set unusable for a fresh linear fit
    refit, converged, _ = _lm_refine(refit, corr.subset(best_mask), intr)
    errors = reprojection_errors(refit, corr, intr)
    final_mask = errors < config.reproj_threshold
    if int(final_mask.sum()) < config.min_inliers:
        final_mask = best_mask  # refit drifted; keep the consensus mask
    mean_err = float(errors[final_mask].mean())
    return PoseEstimate(refit, final_mask, mean_err, iterations, converged)
