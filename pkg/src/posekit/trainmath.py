"""Activation functions, their exact gradients, and learning rate
schedules, all as plain numpy so they can be unit tested against finite
differences without any framework."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import StepOutOfRange

SCHEDULE_KINDS = ("constant", "poly", "onecycle")

# reference training recipe for the heatmap regressor
DEFAULT_TRAINING = {
    "keypoints": 50,
    "heatmap_shape": (50, 64, 64),
    "crop_size": (256, 256),
    "sigma": 2.0,
    "base_lr": 1e-4,
    "epochs": 30,
    "batch_size": 16,
    "activation": "mish",
    "schedule": "onecycle",
}


def _sigmoid(x: np.ndarray) -> np.ndarray:
    # two-branch form avoids overflow in exp for large |x|
    out = np.empty_like(x, dtype=np.float64)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    e = np.exp(x[~pos])
    out[~pos] = e / (1.0 + e)
    return out


def relu(x) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    return np.maximum(x, 0.0)


def relu_grad(x) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    return (x > 0).astype(np.float64)


def silu(x) -> np.ndarray:
    """x * sigmoid(x)."""
    x = np.asarray(x, dtype=np.float64)
    return x * _sigmoid(x)


def silu_grad(x) -> np.ndarray:
    """d/dx silu = sigmoid(x) * (1 + x * (1 - sigmoid(x)))."""
    x = np.asarray(x, dtype=np.float64)
    s = _sigmoid(x)
    return s * (1.0 + x * (1.0 - s))


def mish(x) -> np.ndarray:
    """x * tanh(softplus(x)), softplus computed as log(1 + e^x) without
    overflow via logaddexp."""
    x = np.asarray(x, dtype=np.float64)
    return x * np.tanh(np.logaddexp(0.0, x))


def mish_grad(x) -> np.ndarray:
    """d/dx mish = tanh(sp) + x * sech^2(sp) * sigmoid(x), sp = softplus(x)."""
    x = np.asarray(x, dtype=np.float64)
    sp = np.logaddexp(0.0, x)
    th = np.tanh(sp)
    return th + x * (1.0 - th ** 2) * _sigmoid(x)


ACTIVATIONS = {
    "relu": (relu, relu_grad),
    "silu": (silu, silu_grad),
    "mish": (mish, mish_grad),
}


@dataclass(frozen=True)
class ScheduleConfig:
    """Learning rate schedule over integer steps 0..total_steps inclusive.

    kinds:
      constant   base_lr everywhere
      poly       base_lr * (1 - step/total)^2, quadratic decay to zero
      onecycle   cosine ramp from max_lr/div_factor up to max_lr over the
                 warmup fraction, then cosine anneal down to final_lr

    max_lr and final_lr default to 10 * base_lr and base_lr / 1e4.
    """

    kind: str = "constant"
    base_lr: float = 1e-4
    total_steps: int = 1000
    warmup_fraction: float = 0.3
    div_factor: float = 25.0
    max_lr: float | None = None
    final_lr: float | None = None

    def __post_init__(self):
        if self.kind not in SCHEDULE_KINDS:
            raise ValueError(f"kind must be one of {SCHEDULE_KINDS}, got {self.kind!r}")
        if not self.base_lr > 0:
            raise ValueError("base_lr must be > 0")
        if self.total_steps < 1:
            raise ValueError("total_steps must be >= 1")
        if not 0 < self.warmup_fraction < 1:
            raise ValueError("warmup_fraction must be in (0, 1)")
        if not self.div_factor > 1:
            raise ValueError("div_factor must be > 1")
        if self.max_lr is None:
            object.__setattr__(self, "max_lr", 10.0 * self.base_lr)
        if self.final_lr is None:
            object.__setattr__(self, "final_lr", self.base_lr / 1e4)
        if not self.max_lr > 0 or not self.final_lr > 0:
            raise ValueError("max_lr and final_lr must be > 0")


def lr_at(step: int, config: ScheduleConfig) -> float:
    """Learning rate at an integer step in [0, total_steps]."""
    if not 0 <= step <= config.total_steps:
        raise StepOutOfRange(
            f"step {step} outside [0, {config.total_steps}]")
    if config.kind == "constant":
        return config.base_lr
    if config.kind == "poly":
        frac = step / config.total_steps
        return config.base_lr * (1.0 - frac) ** 2
    warmup = config.warmup_fraction * config.total_steps
    start = config.max_lr / config.div_factor
    if step <= warmup:
        phase = step / warmup
        return float(start + (config.max_lr - start)
                     * 0.5 * (1.0 - np.cos(np.pi * phase)))
    phase = (step - warmup) / (config.total_steps - warmup)
    return float(config.final_lr + (config.max_lr - config.final_lr)
                 * 0.5 * (1.0 + np.cos(np.pi * phase)))


def schedule_values(config: ScheduleConfig) -> np.ndarray:
    """lr_at evaluated at every step, length total_steps + 1."""
    return np.array([lr_at(s, config) for s in range(config.total_steps + 1)])
