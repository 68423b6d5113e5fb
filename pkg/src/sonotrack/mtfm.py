"""Multi-view template fusion.

The dynamic template is seen twice, as intensities and as a binary
foreground view.  Both embeddings are fused, re-weighted along the channel
and spatial axes, attended against the dynamic template, and finally fused
with the fixed template through a second cross-attention and a linear
projection.  The result only depends on the three template embeddings, so
the tracker computes it once per template update and caches it.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DomainError
from .imaging import binarize
from .tensor import (attention, conv2d, from_tokens, linear, pool_channel,
                     pool_spatial, to_tokens)

BINARY_THRESHOLD = 30


@dataclass(frozen=True)
class CrossAttnParams:
    wq: np.ndarray
    wk: np.ndarray
    wv: np.ndarray
    wo: np.ndarray
    bo: np.ndarray


@dataclass(frozen=True)
class MtfmParams:
    fuse_w: np.ndarray   # (C, 2C, 1, 1)
    ce_w: float          # 1x1 conv on the channel-pooled plane
    ce_b: float
    se_w1: np.ndarray    # (C//4, C)
    se_b1: np.ndarray
    se_w2: np.ndarray    # (C, C//4)
    se_b2: np.ndarray
    attn1: CrossAttnParams
    attn2: CrossAttnParams
    out_w: np.ndarray    # (C, C)
    out_b: np.ndarray

    @property
    def channels(self) -> int:
        return self.fuse_w.shape[0]


def _uniform(rng: np.random.Generator, shape, fan_in: int) -> np.ndarray:
    bound = 1.0 / np.sqrt(fan_in)
    return rng.uniform(-bound, bound, size=shape)


def _init_attn(rng: np.random.Generator, c: int) -> CrossAttnParams:
    return CrossAttnParams(
        wq=_uniform(rng, (c, c), c),
        wk=_uniform(rng, (c, c), c),
        wv=_uniform(rng, (c, c), c),
        wo=_uniform(rng, (c, c), c),
        bo=np.zeros(c),
    )


def init_mtfm(channels: int, rng: np.random.Generator) -> MtfmParams:
    """Seeded initialization: weights ~ U(-1/sqrt(fan_in), 1/sqrt(fan_in)), zero biases."""
    c = channels
    hidden = max(1, c // 4)
    return MtfmParams(
        fuse_w=_uniform(rng, (c, 2 * c, 1, 1), 2 * c),
        ce_w=float(_uniform(rng, (), 1)),
        ce_b=0.0,
        se_w1=_uniform(rng, (hidden, c), c),
        se_b1=np.zeros(hidden),
        se_w2=_uniform(rng, (c, hidden), hidden),
        se_b2=np.zeros(c),
        attn1=_init_attn(rng, c),
        attn2=_init_attn(rng, c),
        out_w=_uniform(rng, (c, c), c),
        out_b=np.zeros(c),
    )


def make_binary_template(z_d) -> np.ndarray:
    return binarize(z_d, BINARY_THRESHOLD)


def _check_same(*maps: np.ndarray) -> None:
    shape = maps[0].shape
    if len(shape) != 3:
        raise DomainError(f"expected (C, H, W) features, got {shape}")
    for m in maps[1:]:
        if m.shape != shape:
            raise DomainError(f"feature shapes differ: {shape} vs {m.shape}")


def cross_attention(queries, context, p: CrossAttnParams) -> np.ndarray:
    """Attend from ``queries`` tokens to ``context`` tokens; both ``(tokens, C)``."""
    out = attention(queries @ p.wq.T, context @ p.wk.T, context @ p.wv.T)
    return linear(out, p.wo, p.bo)


def multiview_enhance(z_d, z_db, p: MtfmParams) -> np.ndarray:
    z_d = np.asarray(z_d, dtype=np.float64)
    z_db = np.asarray(z_db, dtype=np.float64)
    _check_same(z_d, z_db)
    if z_d.shape[0] != p.channels:
        raise DomainError(f"features have {z_d.shape[0]} channels, params expect {p.channels}")
    z_f = conv2d(np.concatenate([z_d, z_db], axis=0), p.fuse_w)
    plane = p.ce_w * pool_channel(z_f) + p.ce_b
    z_ce = plane * z_f
    hidden = np.maximum(p.se_w1 @ pool_spatial(z_f) + p.se_b1, 0.0)
    gate = p.se_w2 @ hidden + p.se_b2
    z_se = gate[:, None, None] * z_f
    return z_ce + z_se


def fuse_dynamic(z_d, z_d_cs, p: MtfmParams) -> np.ndarray:
    """Z_mv: dynamic template attending to its multi-view enhancement, plus residual."""
    z_d = np.asarray(z_d, dtype=np.float64)
    z_d_cs = np.asarray(z_d_cs, dtype=np.float64)
    _check_same(z_d, z_d_cs)
    _, h, w = z_d.shape
    out = cross_attention(to_tokens(z_d), to_tokens(z_d_cs), p.attn1)
    return from_tokens(out, h, w) + z_d


def fuse_templates(z, z_mv, z_d, p: MtfmParams) -> np.ndarray:
    """Fixed template attends to the multi-view dynamic template; linear head on top."""
    z, z_mv, z_d = (np.asarray(a, dtype=np.float64) for a in (z, z_mv, z_d))
    _check_same(z, z_mv, z_d)
    _, h, w = z.shape
    z_cross = from_tokens(cross_attention(to_tokens(z), to_tokens(z_mv), p.attn2), h, w) + z_d + z_mv
    projected = from_tokens(linear(to_tokens(z_cross), p.out_w, p.out_b), h, w)
    return projected + z_d + z_mv


def mtfm_forward(z, z_d, z_db, p: MtfmParams) -> np.ndarray:
    """Full fusion from the fixed, dynamic and binary-dynamic template embeddings."""
    z_cs = multiview_enhance(z_d, z_db, p)
    z_mv = fuse_dynamic(z_d, z_cs, p)
    return fuse_templates(z, z_mv, z_d, p)
