"""Sparse group lasso on first-layer weight columns, and its proximal map.

Each input feature ``j`` owns the group ``theta_1[:, j]`` (the weights
leaving that input).  The penalty on a group is

    Omega_alpha(v) = (1 - alpha) * ||v||_1 + alpha * ||v||_2

and the proximal map of ``c * Omega_alpha`` is soft-thresholding by
``c * (1 - alpha)`` followed by group soft-scaling by ``c * alpha``.
Groups that are shrunk away come out as exact zeros.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .exceptions import ValidationError
from .network import NetworkArchitecture, NetworkParameters, Dataset, evaluate_smooth, smooth_loss


@dataclass(frozen=True)
class PenaltyConfig:
    """Ridge weight ``lambda0``, sparse group lasso weight ``lam`` and balance ``alpha``."""

    lambda0: float = 0.001
    lam: float = 0.0
    alpha: float = 0.5

    def __post_init__(self):
        for name in ("lambda0", "lam", "alpha"):
            v = float(getattr(self, name))
            if not np.isfinite(v):
                raise ValidationError(f"{name} must be finite, got {v}")
            object.__setattr__(self, name, v)
        if self.lambda0 < 0 or self.lam < 0:
            raise ValidationError(
                f"penalty weights must be nonnegative (lambda0={self.lambda0}, lam={self.lam})"
            )
        if not 0.0 <= self.alpha <= 1.0:
            raise ValidationError(f"alpha must lie in [0, 1], got {self.alpha}")

    def to_dict(self) -> dict:
        return {"lambda0": self.lambda0, "lambda": self.lam, "alpha": self.alpha}

    @classmethod
    def from_dict(cls, d) -> "PenaltyConfig":
        return cls(
            lambda0=d.get("lambda0", 0.001),
            lam=d.get("lambda", d.get("lam", 0.0)),
            alpha=d.get("alpha", 0.5),
        )


def omega_alpha(theta, alpha: float) -> float:
    theta = np.asarray(theta, dtype=float)
    return float((1.0 - alpha) * np.sum(np.abs(theta)) + alpha * np.sqrt(np.sum(theta * theta)))


def column_omegas(theta1, alpha: float) -> np.ndarray:
    """Vector of ``Omega_alpha`` values, one per column of ``theta1``."""
    theta1 = np.asarray(theta1, dtype=float)
    l1 = np.sum(np.abs(theta1), axis=0)
    l2 = np.sqrt(np.sum(theta1 * theta1, axis=0))
    return (1.0 - alpha) * l1 + alpha * l2


def soft_threshold(z, c: float) -> np.ndarray:
    if c < 0:
        raise ValidationError(f"threshold must be nonnegative, got {c}")
    z = np.asarray(z, dtype=float)
    mag = np.abs(z) - c
    # np.where keeps shrunk entries at +0.0 rather than sign * 0 = -0.0
    return np.where(mag > 0, np.sign(z) * mag, 0.0)


def group_soft_scale(v, c: float) -> np.ndarray:
    """Scale ``v`` by ``(1 - c / ||v||_2)_+``; the zero vector maps to itself."""
    if c < 0:
        raise ValidationError(f"scale threshold must be nonnegative, got {c}")
    v = np.asarray(v, dtype=float)
    norm = float(np.sqrt(np.sum(v * v)))
    if norm <= c:
        return np.zeros_like(v)
    return (1.0 - c / norm) * v


def sgl_prox(theta1, step: float, lam: float, alpha: float) -> np.ndarray:
    """Proximal map of ``step * lam * sum_j Omega_alpha(theta1[:, j])``."""
    if step <= 0:
        raise ValidationError(f"step must be positive, got {step}")
    theta1 = np.asarray(theta1, dtype=float)
    if lam == 0:
        return theta1.copy()
    out = soft_threshold(theta1, step * lam * (1.0 - alpha))
    c = step * lam * alpha
    if c > 0:
        norms = np.sqrt(np.sum(out * out, axis=0))
        keep = norms > c
        scale = np.zeros_like(norms)
        scale[keep] = 1.0 - c / norms[keep]
        out = out * scale
        out[:, ~keep] = 0.0  # avoid -0.0 from negative entries times 0.0
    return out


def sgl_penalty(theta1, lam: float, alpha: float) -> float:
    if lam == 0:
        return 0.0
    return float(lam * np.sum(column_omegas(theta1, alpha)))


def full_objective(params: NetworkParameters, arch: NetworkArchitecture,
                   data: Dataset, penalty: PenaltyConfig) -> float:
    """Smooth loss plus the sparse group lasso on the first layer."""
    return smooth_loss(params, arch, data, penalty.lambda0) + sgl_penalty(
        params.first_layer, penalty.lam, penalty.alpha
    )


def evaluate_objective(params, arch, data, penalty: PenaltyConfig):
    """Full objective plus the forward-pass cache; non-finite values pass through."""
    value, cache = evaluate_smooth(params, arch, data, penalty.lambda0)
    return value + sgl_penalty(params.first_layer, penalty.lam, penalty.alpha), cache
