"""Gaussian keypoint heatmaps: rendering, argmax decoding, focal loss,
and the packed binary stack format.

A heatmap stack is a (K, H, W) array, one channel per keypoint, indexed
[channel, row, column]. Pixel (x, y) means column x, row y, so channel
values live at channels[k, y, x]. Peaks are normalized to 1 at the
keypoint (the rendered map is not a probability mass).

File format ("HMAP"): 4 magic bytes b"HMAP", then K, H, W as unsigned
32-bit little-endian integers, then K*H*W IEEE float32 little-endian
values in channel-major, row-major order.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from .errors import ParseError, ShapeMismatch

_MAGIC = b"HMAP"
_HEADER = struct.Struct("<4sIII")

# rendered values below this are stored as exact zeros
_TRUNCATION = 1e-12

# predictions are clamped away from {0, 1} before taking logs
_CLAMP = 1e-6

# targets at least this close to 1 count as positive pixels
_POSITIVE_TOL = 1e-9

DEFAULT_HEATMAP_SHAPE = (64, 64)


@dataclass(frozen=True)
class GaussianParams:
    sigma: float = 2.0

    def __post_init__(self):
        if not self.sigma > 0:
            raise ValueError(f"sigma must be > 0, got {self.sigma}")


@dataclass(frozen=True)
class FocalParams:
    """Exponents of the heatmap focal loss: gamma focuses on hard pixels,
    beta down-weights pixels near (but not at) a peak."""

    gamma: float = 2.0
    beta: float = 4.0

    def __post_init__(self):
        if self.gamma < 0 or self.beta < 0:
            raise ValueError("gamma and beta must be >= 0")


@dataclass(frozen=True, eq=False)
class HeatmapStack:
    """(K, H, W) float64 stack of per-keypoint heatmaps."""

    channels: np.ndarray

    def __post_init__(self):
        ch = np.asarray(self.channels, dtype=np.float64)
        if ch.ndim != 3 or min(ch.shape) < 1:
            raise ShapeMismatch(f"expected (K, H, W) with K,H,W >= 1, got {ch.shape}")
        if not np.all(np.isfinite(ch)):
            raise ValueError("heatmap values must be finite")
        ch = ch.copy()
        ch.setflags(write=False)
        object.__setattr__(self, "channels", ch)

    @property
    def shape(self) -> tuple[int, int, int]:
        return self.channels.shape

    def __len__(self):
        return self.channels.shape[0]


def render(points: np.ndarray, shape: tuple[int, int] = DEFAULT_HEATMAP_SHAPE,
           params: GaussianParams | None = None) -> HeatmapStack:
    """Render one peak-normalized Gaussian channel per (x, y) point.

    Centers may be continuous and may lie outside the grid; values below
    1e-12 are written as exact zeros so far-away channels stay sparse.
    """
    params = params or GaussianParams()
    pts = np.asarray(points, dtype=np.float64)
    if pts.ndim != 2 or pts.shape[1] != 2:
        raise ShapeMismatch(f"expected (K, 2) points, got {pts.shape}")
    h, w = shape
    ys = np.arange(h, dtype=np.float64)
    xs = np.arange(w, dtype=np.float64)
    dx2 = (xs[None, :] - pts[:, 0, None]) ** 2          # (K, W)
    dy2 = (ys[None, :] - pts[:, 1, None]) ** 2          # (K, H)
    d2 = dy2[:, :, None] + dx2[:, None, :]              # (K, H, W)
    ch = np.exp(-d2 / (2.0 * params.sigma ** 2))
    ch[ch < _TRUNCATION] = 0.0
    return HeatmapStack(ch)


def decode(stack: HeatmapStack) -> tuple[np.ndarray, np.ndarray]:
    """Per-channel argmax.

    Returns integer (x, y) coordinates, shape (K, 2), and the peak value
    of each channel. Ties resolve to the first maximum in row-major
    order.
    """
    k, h, w = stack.shape
    flat = stack.channels.reshape(k, h * w)
    idx = np.argmax(flat, axis=1)
    peaks = flat[np.arange(k), idx]
    coords = np.stack([idx % w, idx // w], axis=1).astype(np.int64)
    return coords, peaks


def focal_loss(pred: np.ndarray, target: np.ndarray,
               params: FocalParams | None = None) -> float:
    """Penalty-reduced pixel-wise focal loss, averaged over all pixels.

    Pixels whose target is 1 contribute (1-p)^gamma * log(p); all others
    contribute (1-y)^beta * p^gamma * log(1-p). The sum is negated and
    divided by the total pixel count, so lower is better and the loss is
    nonnegative. Predictions are clamped to [1e-6, 1 - 1e-6] before the
    logs.
    """
    params = params or FocalParams()
    p = np.asarray(pred, dtype=np.float64)
    y = np.asarray(target, dtype=np.float64)
    if p.shape != y.shape:
        raise ShapeMismatch(f"pred {p.shape} vs target {y.shape}")
    p = np.clip(p, _CLAMP, 1.0 - _CLAMP)
    pos = y >= 1.0 - _POSITIVE_TOL
    term = np.where(
        pos,
        (1.0 - p) ** params.gamma * np.log(p),
        (1.0 - y) ** params.beta * p ** params.gamma * np.log(1.0 - p),
    )
    return float(-term.mean())


def write_hmap(stack: HeatmapStack, path) -> None:
    k, h, w = stack.shape
    payload = np.ascontiguousarray(stack.channels, dtype="<f4").tobytes()
    with open(path, "wb") as f:
        f.write(_HEADER.pack(_MAGIC, k, h, w))
        f.write(payload)


def read_hmap(path) -> HeatmapStack:
    with open(path, "rb") as f:
        data = f.read()
    if len(data) < _HEADER.size:
        raise ParseError("truncated header", offset=len(data))
    magic, k, h, w = _HEADER.unpack_from(data, 0)
    if magic != _MAGIC:
        raise ParseError(f"bad magic {magic!r}, expected {_MAGIC!r}", offset=0)
    if min(k, h, w) < 1:
        raise ParseError(f"dimensions must be >= 1, got {(k, h, w)}",
                         offset=4)
    expected = _HEADER.size + 4 * k * h * w
    if len(data) != expected:
        raise ParseError(
            f"payload size mismatch: file has {len(data)} bytes, "
            f"dimensions {(k, h, w)} require {expected}",
            offset=min(len(data), expected))
    ch = np.frombuffer(data, dtype="<f4", offset=_HEADER.size).reshape(k, h, w)
    return HeatmapStack(ch.astype(np.float64))
