"""Rigid transforms, pinhole projection, and ROI coordinate chains.

Conventions used throughout the toolkit:

* Pixel coordinates are continuous, (0, 0) is the center of the top-left
  pixel, x grows rightward and y downward. Keypoint positions stay
  real-valued; quantization happens only when heatmaps are rasterized.
* Rotations are stored as 3x3 matrices. Axis-angle and quaternion
  conversions are provided as helpers for solvers that need a minimal
  parameterization.
* Translations and 3D points are in millimeters, camera frame.
* No lens distortion is modeled.

All operations here are pure functions on immutable values and are safe
for concurrent use.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import NonPositiveDepth

_ORTHO_TOL = 1e-9


def _frozen_array(values, shape, dtype=np.float64) -> np.ndarray:
    arr = np.array(values, dtype=dtype).reshape(shape)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class Pose:
    """Rigid transform: x_cam = rotation @ x_model + translation.

    rotation must be orthonormal with determinant +1 (tolerance 1e-9);
    translation is in millimeters.
    """

    rotation: np.ndarray
    translation: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "rotation", _frozen_array(self.rotation, (3, 3)))
        object.__setattr__(self, "translation", _frozen_array(self.translation, (3,)))
        err = np.abs(self.rotation.T @ self.rotation - np.eye(3)).max()
        det = np.linalg.det(self.rotation)
        if err >= _ORTHO_TOL or abs(det - 1.0) >= _ORTHO_TOL:
            raise ValueError(
                f"rotation is not orthonormal: |R^T R - I|_max={err:.3e}, det={det:.12f}"
            )

    @staticmethod
    def identity() -> "Pose":
        return Pose(np.eye(3), np.zeros(3))

    def to_dict(self) -> dict:
        return {
            "rotation": [float(v) for v in self.rotation.ravel()],
            "translation": [float(v) for v in self.translation],
        }

    @staticmethod
    def from_dict(d: dict) -> "Pose":
        return Pose(np.asarray(d["rotation"], dtype=float).reshape(3, 3),
                    np.asarray(d["translation"], dtype=float))


@dataclass(frozen=True)
class CameraIntrinsics:
    """Pinhole parameters: focal lengths and principal point, in pixels."""

    fx: float
    fy: float
    cx: float
    cy: float

    def __post_init__(self):
        if not (self.fx > 0 and self.fy > 0):
            raise ValueError(f"focal lengths must be positive, got fx={self.fx}, fy={self.fy}")

    def to_dict(self) -> dict:
        return {"fx": self.fx, "fy": self.fy, "cx": self.cx, "cy": self.cy}

    @staticmethod
    def from_dict(d: dict) -> "CameraIntrinsics":
        return CameraIntrinsics(float(d["fx"]), float(d["fy"]), float(d["cx"]), float(d["cy"]))


@dataclass(frozen=True, eq=False)
class RoiTransform:
    """Affine chain original image <-> square crop <-> heatmap grid.

    bbox_origin/bbox_size describe the detector box in original-image
    pixels; the box is resampled to crop_size and heatmaps are predicted
    at heatmap_size. Only coordinates are transformed here, never pixels.
    """

    bbox_origin: np.ndarray
    bbox_size: np.ndarray
    crop_size: tuple = (256, 256)
    heatmap_size: tuple = (64, 64)

    def __post_init__(self):
        object.__setattr__(self, "bbox_origin", _frozen_array(self.bbox_origin, (2,)))
        object.__setattr__(self, "bbox_size", _frozen_array(self.bbox_size, (2,)))
        if not np.all(self.bbox_size > 0):
            raise ValueError(f"bbox size must be positive, got {self.bbox_size}")

    def to_dict(self) -> dict:
        return {
            "bbox_origin": [float(v) for v in self.bbox_origin],
            "bbox_size": [float(v) for v in self.bbox_size],
            "crop_size": list(self.crop_size),
            "heatmap_size": list(self.heatmap_size),
        }

    @staticmethod
    def from_dict(d: dict) -> "RoiTransform":
        return RoiTransform(
            np.asarray(d["bbox_origin"], dtype=float),
            np.asarray(d["bbox_size"], dtype=float),
            tuple(d.get("crop_size", (256, 256))),
            tuple(d.get("heatmap_size", (64, 64))),
        )


def transform_point(pose: Pose, p) -> np.ndarray:
    """Apply the rigid transform: R @ p + t."""
    return pose.rotation @ np.asarray(p, dtype=float) + pose.translation


def transform_points(pose: Pose, pts) -> np.ndarray:
    """Vectorized transform of an (N, 3) array of points."""
    pts = np.asarray(pts, dtype=float)
    return pts @ pose.rotation.T + pose.translation


def project(intr: CameraIntrinsics, p_cam) -> np.ndarray:
    """Project one camera-frame point to pixel coordinates.

    Raises NonPositiveDepth if the point is on or behind the image plane.
    """
    p = np.asarray(p_cam, dtype=float)
    if p[2] <= 0:
        raise NonPositiveDepth(f"point depth must be positive, got z={p[2]}")
    return np.array([intr.fx * p[0] / p[2] + intr.cx,
                     intr.fy * p[1] / p[2] + intr.cy])


def project_points(intr: CameraIntrinsics, pts) -> np.ndarray:
    """Project (N, 3) camera-frame points; raises if any depth <= 0."""
    pts = np.asarray(pts, dtype=float)
    z = pts[:, 2]
    if np.any(z <= 0):
        bad = int(np.argmax(z <= 0))
        raise NonPositiveDepth(f"point {bad} has depth z={z[bad]}")
    out = np.empty((len(pts), 2))
    out[:, 0] = intr.fx * pts[:, 0] / z + intr.cx
    out[:, 1] = intr.fy * pts[:, 1] / z + intr.cy
    return out


def heatmap_to_original(roi: RoiTransform, p_hm) -> np.ndarray:
    """Map heatmap-grid coordinates to original-image pixels.

    Exact affine composition (heatmap -> crop -> original), no rounding.
    Points outside the heatmap bounds are transformed identically.
    """
    p = np.asarray(p_hm, dtype=float)
    crop = np.asarray(roi.crop_size, dtype=float)
    hm = np.asarray(roi.heatmap_size, dtype=float)
    p_crop = p * (crop / hm)
    return roi.bbox_origin + p_crop * (roi.bbox_size / crop)


def original_to_heatmap(roi: RoiTransform, p_img) -> np.ndarray:
    """Exact inverse of heatmap_to_original."""
    p = np.asarray(p_img, dtype=float)
    crop = np.asarray(roi.crop_size, dtype=float)
    hm = np.asarray(roi.heatmap_size, dtype=float)
    p_crop = (p - roi.bbox_origin) / (roi.bbox_size / crop)
    return p_crop / (crop / hm)


def compose(outer: Pose, inner: Pose) -> Pose:
    """Pose applying `inner` first, then `outer`."""
    return Pose(outer.rotation @ inner.rotation,
                outer.rotation @ inner.translation + outer.translation)


def inverse(pose: Pose) -> Pose:
    return Pose(pose.rotation.T, -(pose.rotation.T @ pose.translation))


# --- rotation parameterization helpers -----------------------------------

def rotation_from_axis_angle(w) -> np.ndarray:
    """Rodrigues formula: rotation matrix from an axis-angle 3-vector."""
    w = np.asarray(w, dtype=float)
    theta = np.linalg.norm(w)
    K = np.array([[0, -w[2], w[1]],
                  [w[2], 0, -w[0]],
                  [-w[1], w[0], 0]])
    if theta < 1e-12:
        # second-order series keeps the result orthonormal to machine precision
        return np.eye(3) + K + 0.5 * (K @ K)
    a = np.sin(theta) / theta
    b = (1.0 - np.cos(theta)) / (theta * theta)
    return np.eye(3) + a * K + b * (K @ K)


def axis_angle_from_rotation(R) -> np.ndarray:
    """Inverse of rotation_from_axis_angle; angle in [0, pi]."""
    R = np.asarray(R, dtype=float)
    cos_theta = np.clip((np.trace(R) - 1.0) / 2.0, -1.0, 1.0)
    theta = np.arccos(cos_theta)
    if theta < 1e-12:
        return np.array([R[2, 1] - R[1, 2], R[0, 2] - R[2, 0], R[1, 0] - R[0, 1]]) / 2.0
    if np.pi - theta < 1e-6:
        # near pi the off-diagonal extraction degrades; recover the axis from
        # the symmetric part: (R + I)/2 = axis axis^T at theta = pi
        A = (R + np.eye(3)) / 2.0
        i = int(np.argmax(np.diag(A)))
        axis = A[i] / np.sqrt(A[i, i])
        axis = axis / np.linalg.norm(axis)
        return axis * theta
    v = np.array([R[2, 1] - R[1, 2], R[0, 2] - R[2, 0], R[1, 0] - R[0, 1]])
    return v / (2.0 * np.sin(theta)) * theta


def rotation_from_quaternion(q) -> np.ndarray:
    """Rotation matrix from a (w, x, y, z) quaternion (normalized first)."""
    q = np.asarray(q, dtype=float)
    q = q / np.linalg.norm(q)
    w, x, y, z = q
    return np.array([
        [1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
        [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
        [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)],
    ])


def nearest_rotation(M) -> np.ndarray:
    """Orthogonal projection of a 3x3 matrix onto SO(3)."""
    U, _, Vt = np.linalg.svd(np.asarray(M, dtype=float))
    R = U @ Vt
    if np.linalg.det(R) < 0:
        R = U @ np.diag([1.0, 1.0, -1.0]) @ Vt
    return R


def rot_x(angle: float) -> np.ndarray:
    c, s = np.cos(angle), np.sin(angle)
    return np.array([[1, 0, 0], [0, c, -s], [0, s, c]], dtype=float)


def rot_y(angle: float) -> np.ndarray:
    c, s = np.cos(angle), np.sin(angle)
    return np.array([[c, 0, s], [0, 1, 0], [-s, 0, c]], dtype=float)


def rot_z(angle: float) -> np.ndarray:
    c, s = np.cos(angle), np.sin(angle)
    return np.array([[c, -s, 0], [s, c, 0], [0, 0, 1]], dtype=float)


def rotation_angle(Ra, Rb) -> float:
    """Geodesic angle in radians between two rotation matrices."""
    cos_theta = np.clip((np.trace(np.asarray(Ra).T @ np.asarray(Rb)) - 1.0) / 2.0, -1.0, 1.0)
    return float(np.arccos(cos_theta))
