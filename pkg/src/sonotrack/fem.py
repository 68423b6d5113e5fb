"""Frequency enhancement of search features.

A depthwise Laplacian branch (scaled by ``alpha``) sharpens texture and
contours, a depthwise Gaussian branch with learnable width ``sigma`` keeps
smooth regions, and both are added back onto the input features.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .errors import ConfigError, DomainError
from .tensor import depthwise_conv2d

LAPLACIAN_INIT = np.array([[-1.0, -1.0, -1.0],
                           [-1.0, 8.0, -1.0],
                           [-1.0, -1.0, -1.0]])
LOW_KSIZE = 5
SIGMA_MIN = 1e-3


@dataclass(frozen=True)
class FemParams:
    alpha: float = 1.0
    sigma: float = 1.0
    high_kernel: np.ndarray = field(default_factory=lambda: LAPLACIAN_INIT[None].copy())

    @classmethod
    def init(cls, channels: int) -> "FemParams":
        return cls(1.0, 1.0, np.repeat(LAPLACIAN_INIT[None], channels, axis=0))

    @property
    def channels(self) -> int:
        return self.high_kernel.shape[0]

    @property
    def effective_sigma(self) -> float:
        return max(float(self.sigma), SIGMA_MIN)

    def with_updates(self, **changes) -> "FemParams":
        return replace(self, **changes)


def _offsets_sq(ksize: int) -> np.ndarray:
    if ksize < 1 or ksize % 2 == 0:
        raise ConfigError(f"ksize must be odd, got {ksize}")
    r = np.arange(ksize, dtype=np.float64) - ksize // 2
    return r[:, None] ** 2 + r[None, :] ** 2


def gaussian_kernel(sigma: float, ksize: int = LOW_KSIZE) -> np.ndarray:
    """Isotropic Gaussian sampled at integer offsets, normalized to sum 1."""
    if sigma <= 0:
        raise DomainError(f"sigma must be positive, got {sigma}")
    u = np.exp(-_offsets_sq(ksize) / (2.0 * sigma * sigma))
    return u / u.sum()


def gaussian_kernel_grad_sigma(sigma: float, ksize: int = LOW_KSIZE) -> np.ndarray:
    """d(normalized kernel)/d(sigma), by the quotient rule over the normalizer."""
    if sigma <= 0:
        raise DomainError(f"sigma must be positive, got {sigma}")
    r2 = _offsets_sq(ksize)
    u = np.exp(-r2 / (2.0 * sigma * sigma))
    du = u * r2 / sigma ** 3
    s = u.sum()
    return (du * s - u * du.sum()) / (s * s)


def fem_branches(x, p: FemParams) -> tuple[np.ndarray, np.ndarray]:
    """Return ``(X_high, X_low)`` for feature map ``x``."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 3 or x.shape[0] != p.channels:
        raise DomainError(f"features {x.shape} do not match {p.channels} FEM channels")
    high = p.alpha * depthwise_conv2d(x, p.high_kernel)
    g = gaussian_kernel(p.effective_sigma, LOW_KSIZE)
    low = depthwise_conv2d(x, np.broadcast_to(g, (p.channels, LOW_KSIZE, LOW_KSIZE)))
    return high, low


def fem_forward(x, p: FemParams) -> np.ndarray:
    high, low = fem_branches(x, p)
    return np.asarray(x, dtype=np.float64) + high + low
