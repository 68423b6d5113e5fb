"""Deterministic stand-in for the learned backbone and head.

The response map comes from zero-normalized cross-correlation of the pixel
template against the search crop, evaluated on the stride grid (one cell per
16 px search patch).  The learned feature modules still act on it:

* the fused template's token norms weight each template patch in the
  correlation, so the template fusion changes which pixels matter;
* each cell score is multiplied by ``1 + tanh(delta)``, ``delta`` being the
  relative L2-norm change of that cell's search token under frequency
  enhancement.
"""

from __future__ import annotations

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from scipy import ndimage

from .errors import DomainError
from .fem import FemParams, fem_forward
from .imaging import as_image, block_mean
from .otcm import ResponseMap

_VAR_EPS = 1e-6


def zoom_about_center(img: np.ndarray, factor: float) -> np.ndarray:
    """Magnify (factor > 1) or shrink the image content about its center, same canvas.

    Shrinking replicates the border so a flat template stays flat.
    """
    if factor == 1.0:
        return img
    h, w = img.shape
    rows = (np.arange(h) + 0.5 - h / 2.0) / factor + h / 2.0 - 0.5
    cols = (np.arange(w) + 0.5 - w / 2.0) / factor + w / 2.0 - 0.5
    rr, cc = np.meshgrid(rows, cols, indexing="ij")
    return ndimage.map_coordinates(img, [rr, cc], order=1, mode="nearest")


def weighted_zncc_grid(search: np.ndarray, template: np.ndarray, weights: np.ndarray,
                       first: int, step: int, count: int) -> np.ndarray:
    """ZNCC of ``template`` against windows of ``search`` (edge-replicated).

    Window ``(i, j)`` is centered at pixel coordinate ``first + step * (i or j)``
    of the unpadded search image.  Zero-variance windows score 0.
    """
    m = template.shape[0]
    half = m // 2
    w = weights / weights.sum()
    t = template - np.sum(w * template)
    var_t = np.sum(w * t * t)
    if var_t <= _VAR_EPS:
        return np.zeros((count, count))
    padded = np.pad(search, half, mode="edge")
    starts = slice(first, first + step * (count - 1) + 1, step)
    win = sliding_window_view(padded, (m, m))[starts, starts]
    mu = np.einsum("ijab,ab->ij", win, w)
    second = np.einsum("ijab,ab->ij", win * win, w)
    var_s = second - mu * mu
    cov = np.einsum("ijab,ab->ij", win, w * t)
    ok = var_s > _VAR_EPS
    out = np.zeros((count, count))
    out[ok] = cov[ok] / np.sqrt(var_s[ok] * var_t)
    return np.clip(out, -1.0, 1.0)


def ncc_response(search, template, stride: int = 16, scales=(0.95, 1.0, 1.05),
                 weights=None, downscale: int = 4, scale_penalty: float = 1.0,
                 base_size: tuple[float, float] | None = None):
    """Multi-scale response map of ``template`` over ``search``.

    Cell ``j`` along each axis is centered at search pixel ``stride/2 + stride*j``.
    Per cell the best scale wins (non-unity scales multiplied by
    ``scale_penalty``); negative correlations are clipped to 0.

    Returns ``(ResponseMap, best_scale)``; when ``base_size`` is given the map
    carries per-cell size estimates ``base_size * best_scale``.
    """
    search = as_image(search)
    template = as_image(template)
    if search.shape[0] != search.shape[1] or template.shape[0] != template.shape[1]:
        raise DomainError("search and template must be square")
    if stride % 2 or (stride // 2) % downscale:
        raise DomainError(f"downscale {downscale} must divide half the stride {stride}")
    count = search.shape[0] // stride
    s_ds = block_mean(search, downscale)
    t_ds = block_mean(template, downscale)
    m = t_ds.shape[0]
    if weights is None:
        w = np.ones((m, m))
    else:
        weights = np.asarray(weights, dtype=np.float64)
        if m % weights.shape[0]:
            raise DomainError(f"weights grid {weights.shape} does not tile a {m}px template")
        rep = m // weights.shape[0]
        w = np.kron(weights, np.ones((rep, rep)))
    first = stride // 2 // downscale
    step = stride // downscale
    best = np.full((count, count), -np.inf)
    best_scale = np.ones((count, count))
    # scales are visited unity-first so a tie never leaves the unity scale
    order = sorted(scales, key=lambda s: (s != 1.0, s))
    for s in order:
        score = weighted_zncc_grid(s_ds, zoom_about_center(t_ds, s), w, first, step, count)
        score = np.maximum(score, 0.0)
        if s != 1.0:
            score = score * scale_penalty
        better = score > best
        best = np.where(better, score, best)
        best_scale = np.where(better, s, best_scale)
    sizes = None
    if base_size is not None:
        sizes = np.stack([base_size[0] * best_scale, base_size[1] * best_scale], axis=-1)
    rmap = ResponseMap(best, stride=stride, origin=(stride / 2.0, stride / 2.0), sizes=sizes)
    return rmap, best_scale


def fem_modulation(x_search: np.ndarray, params: FemParams) -> np.ndarray:
    """Per-token ``1 + tanh(relative norm change)`` under frequency enhancement."""
    before = np.linalg.norm(x_search, axis=0)
    after = np.linalg.norm(fem_forward(x_search, params), axis=0)
    delta = np.zeros_like(before)
    nz = before > 1e-12
    delta[nz] = (after[nz] - before[nz]) / before[nz]
    return np.maximum(1.0 + np.tanh(delta), 0.0)


def template_weights(fused: np.ndarray) -> np.ndarray:
    """Token-norm weights of the fused template, normalized to mean 1."""
    norms = np.linalg.norm(fused, axis=0)
    mean = norms.mean()
    if not np.isfinite(mean) or mean <= 1e-12:
        return np.ones_like(norms)
    return norms / mean


def cosine_window(count: int, center: int) -> np.ndarray:
    """Raised-cosine window peaking at cell ``center``; strictly positive on the grid."""
    span = max(center, count - 1 - center) + 1
    d = (np.arange(count) - center) / span
    w = 0.5 * (1.0 + np.cos(np.pi * d))
    return np.outer(w, w)
