"""Small dense kernels for the feature-level modules.

Feature maps are ``(C, H, W)`` float arrays and token matrices are
``(tokens, dim)`` arrays.  Tokens of a feature map are taken in row-major
spatial order.
"""

from __future__ import annotations

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .errors import DomainError


def _feature(x) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 3:
        raise DomainError(f"expected a (C, H, W) feature map, got shape {x.shape}")
    return x


def _tokens(m) -> np.ndarray:
    m = np.asarray(m, dtype=np.float64)
    if m.ndim != 2:
        raise DomainError(f"expected a (tokens, dim) matrix, got shape {m.shape}")
    return m


def to_tokens(x) -> np.ndarray:
    """(C, H, W) -> (H*W, C)."""
    x = _feature(x)
    c = x.shape[0]
    return x.reshape(c, -1).T.copy()


def from_tokens(t, height: int, width: int) -> np.ndarray:
    """(H*W, C) -> (C, H, W)."""
    t = _tokens(t)
    if t.shape[0] != height * width:
        raise DomainError(f"{t.shape[0]} tokens cannot fill a {height}x{width} grid")
    return t.T.reshape(t.shape[1], height, width).copy()


def _windows(x: np.ndarray, kh: int, kw: int) -> np.ndarray:
    if kh % 2 == 0 or kw % 2 == 0:
        raise DomainError(f"kernel size must be odd, got {kh}x{kw}")
    xp = np.pad(x, ((0, 0), (kh // 2, kh // 2), (kw // 2, kw // 2)))
    return sliding_window_view(xp, (kh, kw), axis=(1, 2))


def conv2d(x, kernel, bias=None) -> np.ndarray:
    """Same-padded stride-1 cross-correlation (no kernel flip) with zero padding.

    ``kernel`` has shape ``(out_c, in_c, kh, kw)``.
    """
    x = _feature(x)
    kernel = np.asarray(kernel, dtype=np.float64)
    if kernel.ndim != 4 or kernel.shape[1] != x.shape[0]:
        raise DomainError(f"kernel {kernel.shape} does not match input channels {x.shape[0]}")
    win = _windows(x, kernel.shape[2], kernel.shape[3])
    out = np.einsum("chwij,ocij->ohw", win, kernel)
    if bias is not None:
        bias = np.asarray(bias, dtype=np.float64)
        if bias.shape != (kernel.shape[0],):
            raise DomainError(f"bias shape {bias.shape} does not match {kernel.shape[0]} outputs")
        out = out + bias[:, None, None]
    return out


def depthwise_conv2d(x, kernels) -> np.ndarray:
    """Per-channel same-padded correlation; ``kernels`` is ``(C, kh, kw)``."""
    x = _feature(x)
    kernels = np.asarray(kernels, dtype=np.float64)
    if kernels.ndim != 3 or kernels.shape[0] != x.shape[0]:
        raise DomainError(f"depthwise kernels {kernels.shape} do not match {x.shape[0]} channels")
    win = _windows(x, kernels.shape[1], kernels.shape[2])
    return np.einsum("chwij,cij->chw", win, kernels)


def softmax_rows(m) -> np.ndarray:
    m = _tokens(m)
    z = m - m.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def attention(q, k, v, scale: float | None = None) -> np.ndarray:
    """Single-head scaled dot-product attention ``softmax(scale * q k^T) v``."""
    q, k, v = _tokens(q), _tokens(k), _tokens(v)
    if q.shape[1] != k.shape[1]:
        raise DomainError(f"query dim {q.shape[1]} != key dim {k.shape[1]}")
    if k.shape[0] != v.shape[0]:
        raise DomainError(f"{k.shape[0]} keys but {v.shape[0]} values")
    if scale is None:
        scale = 1.0 / np.sqrt(q.shape[1])
    return softmax_rows(scale * (q @ k.T)) @ v


def linear(x, weight, bias=None) -> np.ndarray:
    """Per-token affine map; ``weight`` is ``(out_dim, in_dim)``."""
    x = _tokens(x)
    weight = np.asarray(weight, dtype=np.float64)
    if weight.ndim != 2 or weight.shape[1] != x.shape[1]:
        raise DomainError(f"weight {weight.shape} does not accept inputs of dim {x.shape[1]}")
    out = x @ weight.T
    if bias is not None:
        out = out + np.asarray(bias, dtype=np.float64)
    return out


def pool_channel(x) -> np.ndarray:
    """Mean over channels -> (1, H, W)."""
    return _feature(x).mean(axis=0, keepdims=True)


def pool_spatial(x) -> np.ndarray:
    """Global mean over H x W -> length-C vector."""
    return _feature(x).mean(axis=(1, 2))


def patchify(img, patch: int = 16) -> np.ndarray:
    """(H, W) image -> (H/p * W/p, p*p) matrix of flattened patches, row-major."""
    img = np.asarray(img, dtype=np.float64)
    h, w = img.shape
    if h % patch or w % patch:
        raise DomainError(f"image {h}x{w} is not divisible into {patch}px patches")
    gh, gw = h // patch, w // patch
    return img.reshape(gh, patch, gw, patch).transpose(0, 2, 1, 3).reshape(gh * gw, patch * patch)


def patch_embed(img, weight, bias=None, patch: int = 16) -> np.ndarray:
    """Embed non-overlapping patches of a 0..255 image into ``dim`` channels.

    Pixels are scaled to [0, 1] before the projection ``weight`` of shape
    ``(dim, patch*patch)``.  Returns ``(dim, H/patch, W/patch)``.
    """
    img = np.asarray(img, dtype=np.float64)
    tokens = linear(patchify(img, patch) / 255.0, weight, bias)
    return from_tokens(tokens, img.shape[0] // patch, img.shape[1] // patch)
