"""End-to-end tracking loop.

Per frame: high-frequency enhancement, search crop around the previous box,
response map from the appearance surrogate (modulated by frequency
enhancement), Kalman prior, trajectory correction, back-projection, and a
periodic dynamic-template refresh through template fusion.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .appearance import cosine_window, fem_modulation, ncc_response, template_weights
from .config import TrackerConfig
from .errors import DomainError
from .geometry import BBox, clip_to_frame
from .imaging import as_image, binarize, crop_resize, high_freq_enhance, mean_in_box
from .model import PATCH, Model
from .mtfm import make_binary_template, mtfm_forward
from .otcm import (KalmanParams, KalmanState, ResponseMap, best_candidate, correct,
                   extract_candidates, kf_init, kf_predict, kf_update, rank_cells,
                   score_candidates)
from .tensor import patch_embed


@dataclass(frozen=True)
class TemplateSet:
    fixed: np.ndarray
    fixed_feat: np.ndarray
    dynamic: np.ndarray
    dynamic_feat: np.ndarray
    dynamic_binary: np.ndarray
    dynamic_binary_feat: np.ndarray
    fused: np.ndarray | None
    ncc_weights: np.ndarray | None

    @property
    def pixels(self) -> np.ndarray:
        return 0.5 * (self.fixed + self.dynamic)


@dataclass(frozen=True)
class TrackerState:
    templates: TemplateSet
    prev_box: BBox
    prev_target_mean: float
    kalman: KalmanState
    frame_index: int
    frame_shape: tuple[int, int]
    last_score: float = 1.0


@dataclass(frozen=True)
class StepInfo:
    """Diagnostics from one step; useful for tests and ablations."""

    response: ResponseMap
    raw: np.ndarray
    b_kf: BBox
    b_mr: BBox
    output_search: BBox
    chosen_index: int
    used_otcm: bool


def kalman_params(cfg: TrackerConfig) -> KalmanParams:
    return KalmanParams(cfg.otcm.pos_std, cfg.otcm.vel_std, cfg.otcm.meas_std)


def enhance(frame: np.ndarray, cfg: TrackerConfig) -> np.ndarray:
    if not cfg.enhance.enabled:
        return frame
    return high_freq_enhance(frame, cfg.enhance.sigma, cfg.enhance.ksize or None, cfg.enhance.gain)


def _embed(model: Model, img: np.ndarray) -> np.ndarray:
    return patch_embed(img, model.embed_w, model.embed_b, PATCH)


def _fuse(model: Model, fixed_feat, dyn_feat, bin_feat):
    if not model.config.mtfm:
        return None, None
    fused = mtfm_forward(fixed_feat, dyn_feat, bin_feat, model.mtfm)
    return fused, template_weights(fused)


def _dynamic_views(model: Model, crop: np.ndarray):
    binary = make_binary_template(crop)
    return binary, _embed(model, crop), _embed(model, binary)


def init(frame, box: BBox, model: Model) -> TrackerState:
    """Set up templates, the fused template and the Kalman track from the first frame."""
    cfg = model.config
    frame = as_image(frame)
    h, w = frame.shape
    if box.is_absent() or box.w <= 0 or box.h <= 0:
        raise DomainError("initial box must be present with positive size")
    if not (0 <= box.cx <= w and 0 <= box.cy <= h):
        raise DomainError(f"initial box {box.as_tuple()} lies outside the {w}x{h} frame")
    enhanced = enhance(frame, cfg)
    crop, _ = crop_resize(enhanced, box, cfg.template_context, cfg.template_size)
    feat = _embed(model, crop)
    binary, dyn_feat, bin_feat = _dynamic_views(model, crop)
    fused, weights = _fuse(model, feat, dyn_feat, bin_feat)
    templates = TemplateSet(crop, feat, crop, dyn_feat, binary, bin_feat, fused, weights)
    return TrackerState(
        templates=templates,
        prev_box=box,
        prev_target_mean=mean_in_box(enhanced, box) * 255.0,
        kalman=kf_init(box, kalman_params(cfg)),
        frame_index=0,
        frame_shape=(h, w),
    )


def search_region(enhanced: np.ndarray, prev_box: BBox, cfg: TrackerConfig):
    """Search crop placed so the previous center falls on the central cell's center."""
    side = cfg.search_context * math.sqrt(prev_box.w * prev_box.h)
    scale = cfg.search_size / side
    center_cell = cfg.search_grid // 2
    target_px = cfg.stride / 2.0 + cfg.stride * center_cell
    shift = (target_px - cfg.search_size / 2.0) / scale
    return crop_resize(enhanced, prev_box, cfg.search_context, cfg.search_size,
                       center=(prev_box.cx - shift, prev_box.cy - shift))


def response_map(search: np.ndarray, state: TrackerState, prev_search: BBox, model: Model):
    """Surrogate head output: ``(ResponseMap, raw correlation per cell)``."""
    cfg = model.config
    weights = state.templates.ncc_weights if cfg.mtfm else None
    rmap, _ = ncc_response(search, state.templates.pixels, cfg.stride, cfg.scales,
                           weights=weights, downscale=cfg.ncc_downscale,
                           scale_penalty=cfg.scale_penalty,
                           base_size=(prev_search.w, prev_search.h))
    raw = rmap.scores
    scores = raw
    if cfg.fem:
        scores = scores * fem_modulation(_embed(model, search), model.fem)
    if cfg.window:
        scores = scores * cosine_window(cfg.search_grid, cfg.search_grid // 2)
    return replace(rmap, scores=scores), raw


def step(state: TrackerState, frame, model: Model) -> tuple[TrackerState, BBox, StepInfo]:
    cfg = model.config
    frame = as_image(frame)
    h, w = frame.shape
    index = state.frame_index + 1
    enhanced = enhance(frame, cfg)
    search, tf = search_region(enhanced, state.prev_box, cfg)
    prev_search = tf.to_crop(state.prev_box)
    rmap, raw = response_map(search, state, prev_search, model)

    kp = kalman_params(cfg)
    kalman, b_kf_frame = kf_predict(state.kalman, kp)
    b_kf = tf.to_crop(b_kf_frame)

    top = int(rank_cells(rmap.scores)[0])
    b_mr = rmap.cell_box(top, prev_search)
    out_search, chosen = b_mr, top
    used_otcm = cfg.otcm.enabled and index > cfg.otcm.warmup
    if used_otcm:
        cands = extract_candidates(rmap, prev_search, cfg.otcm.k)
        mask = binarize(search, state.prev_target_mean)
        scored = score_candidates(cands, b_kf, mask)
        out_search = correct(scored, b_mr, cfg.otcm.iob_thresh)
        if out_search is not b_mr:
            chosen = best_candidate(scored).index

    out = clip_to_frame(tf.to_frame(out_search), w, h)
    kalman = kf_update(kalman, out, kp)
    score = float(raw.ravel()[chosen])

    templates = state.templates
    if index % cfg.update.interval == 0 and score >= cfg.update.min_score:
        templates = refresh_dynamic(templates, enhanced, out, model)

    new_state = TrackerState(
        templates=templates,
        prev_box=out,
        prev_target_mean=mean_in_box(enhanced, out) * 255.0,
        kalman=kalman,
        frame_index=index,
        frame_shape=(h, w),
        last_score=score,
    )
    info = StepInfo(rmap, raw, b_kf, b_mr, out_search, chosen, used_otcm)
    return new_state, out, info


def refresh_dynamic(templates: TemplateSet, enhanced: np.ndarray, box: BBox, model: Model) -> TemplateSet:
    """New dynamic template at ``box``; the fused template is recomputed once here."""
    cfg = model.config
    crop, _ = crop_resize(enhanced, box, cfg.template_context, cfg.template_size)
    binary, dyn_feat, bin_feat = _dynamic_views(model, crop)
    fused, weights = _fuse(model, templates.fixed_feat, dyn_feat, bin_feat)
    return replace(templates, dynamic=crop, dynamic_feat=dyn_feat, dynamic_binary=binary,
                   dynamic_binary_feat=bin_feat, fused=fused, ncc_weights=weights)


class SonarTracker:
    """Stateful wrapper around :func:`init` / :func:`step` for one sequence."""

    def __init__(self, model: Model | None = None):
        self.model = model or Model.from_seed()
        self.state: TrackerState | None = None
        self.last_info: StepInfo | None = None

    def initialize(self, frame, box: BBox) -> None:
        self.state = init(frame, box, self.model)

    def track(self, frame) -> BBox:
        if self.state is None:
            raise DomainError("tracker used before initialize()")
        self.state, box, self.last_info = step(self.state, frame, self.model)
        return box
