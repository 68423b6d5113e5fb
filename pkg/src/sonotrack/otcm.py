"""Trajectory correction on top of the response map.

A constant-velocity Kalman filter over ``(cx, cy, w, h)`` supplies a motion
prior box.  The top-k response cells become candidates scored by
``IoU(prior, candidate) * response * brightness``, where brightness is the
foreground fraction of the candidate in a binarized search image.  When the
winner mostly sits inside the max-response box it is treated as a
near-duplicate and the max-response box is returned instead.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Optional

import numpy as np

from .errors import DomainError
from .geometry import BBox, iob, iou
from .imaging import mean_in_box

IOB_THRESHOLD = 0.6


@dataclass(frozen=True)
class KalmanParams:
    # stds are fractions of the current box height, per frame
    pos_std: float = 1.0 / 20
    vel_std: float = 1.0 / 160
    meas_std: float = 1.0 / 20
    init_pos_factor: float = 2.0
    init_vel_factor: float = 10.0


@dataclass(frozen=True)
class KalmanState:
    mean: np.ndarray        # (cx, cy, w, h, vcx, vcy, vw, vh)
    cov: np.ndarray         # 8 x 8
    age: int = 0
    time_since_update: int = 0

    def box(self) -> BBox:
        cx, cy, w, h = self.mean[:4]
        return BBox.from_center(cx, cy, max(w, 0.0), max(h, 0.0))


_F = np.eye(8)
_F[:4, 4:] = np.eye(4)
_H = np.eye(4, 8)


def _clamp_size(mean: np.ndarray) -> np.ndarray:
    mean = mean.copy()
    mean[2:4] = np.maximum(mean[2:4], 1.0)
    return mean


def kf_init(box: BBox, params: KalmanParams = KalmanParams()) -> KalmanState:
    if box.is_absent():
        raise DomainError("cannot start a Kalman track from the absent box")
    mean = np.array([box.cx, box.cy, box.w, box.h, 0.0, 0.0, 0.0, 0.0])
    h = box.h
    std = np.r_[np.full(4, params.init_pos_factor * params.pos_std * h),
                np.full(4, params.init_vel_factor * params.vel_std * h)]
    return KalmanState(mean, np.diag(std ** 2))


def _process_noise(h: float, params: KalmanParams) -> np.ndarray:
    std = np.r_[np.full(4, params.pos_std * h), np.full(4, params.vel_std * h)]
    return np.diag(std ** 2)


def kf_predict(s: KalmanState, params: KalmanParams = KalmanParams()) -> tuple[KalmanState, BBox]:
    mean = _F @ s.mean
    cov = _F @ s.cov @ _F.T + _process_noise(s.mean[3], params)
    cov = 0.5 * (cov + cov.T)
    out = KalmanState(mean, cov, s.age + 1, s.time_since_update + 1)
    return out, out.box()


def kf_update(s: KalmanState, obs: BBox, params: KalmanParams = KalmanParams()) -> KalmanState:
    if obs.is_absent():
        raise DomainError("cannot update the Kalman filter with the absent box")
    z = np.array([obs.cx, obs.cy, obs.w, obs.h])
    r = np.eye(4) * (params.meas_std * s.mean[3]) ** 2
    innovation_cov = _H @ s.cov @ _H.T + r
    gain = np.linalg.solve(innovation_cov, _H @ s.cov).T
    mean = s.mean + gain @ (z - _H @ s.mean)
    # Joseph form keeps the covariance symmetric PSD
    ikh = np.eye(8) - gain @ _H
    cov = ikh @ s.cov @ ikh.T + gain @ r @ gain.T
    cov = 0.5 * (cov + cov.T)
    return KalmanState(_clamp_size(mean), cov, s.age, 0)


# ---------------------------------------------------------------------------
# candidates

@dataclass(frozen=True)
class ResponseMap:
    """Response grid over a search image.

    Cell ``(i, j)`` is centered at search pixel
    ``(origin[0] + stride * j, origin[1] + stride * i)``.  ``sizes`` optionally
    holds a per-cell ``(w, h)`` estimate in search pixels.
    """

    scores: np.ndarray
    stride: float = 16
    origin: tuple[float, float] = (8.0, 8.0)
    sizes: Optional[np.ndarray] = None

    def __post_init__(self):
        if self.scores.ndim != 2:
            raise DomainError(f"response map must be 2-D, got {self.scores.shape}")
        if not np.all(np.isfinite(self.scores)):
            raise DomainError("response map has non-finite scores")

    @property
    def height(self) -> int:
        return self.scores.shape[0]

    @property
    def width(self) -> int:
        return self.scores.shape[1]

    def cell_center(self, flat_index: int) -> tuple[float, float]:
        i, j = divmod(int(flat_index), self.width)
        return self.origin[0] + self.stride * j, self.origin[1] + self.stride * i

    def cell_box(self, flat_index: int, prev_box: BBox) -> BBox:
        cx, cy = self.cell_center(flat_index)
        if self.sizes is not None:
            i, j = divmod(int(flat_index), self.width)
            w, h = self.sizes[i, j]
        else:
            w, h = prev_box.w, prev_box.h
        return BBox.from_center(cx, cy, float(w), float(h))


@dataclass(frozen=True)
class Candidate:
    box: BBox
    score: float
    index: int
    brightness: float = 0.0
    iou_score: float = 0.0

    @property
    def combined(self) -> float:
        return self.iou_score * self.brightness


def rank_cells(scores: np.ndarray) -> np.ndarray:
    """Flat indices by descending score; ties keep the lower flat index first."""
    return np.argsort(-scores.ravel(), kind="stable")


def extract_candidates(m: ResponseMap, prev_box: BBox, k: int) -> list[Candidate]:
    if k < 1:
        raise DomainError(f"k must be >= 1, got {k}")
    flat = m.scores.ravel()
    order = rank_cells(m.scores)[: min(k, flat.size)]
    return [Candidate(m.cell_box(idx, prev_box), float(flat[idx]), int(idx)) for idx in order]


def max_response_box(m: ResponseMap, prev_box: BBox) -> BBox:
    return extract_candidates(m, prev_box, 1)[0].box


def score_candidates(cands: list[Candidate], b_kf: BBox, mask) -> list[Candidate]:
    """Attach the motion-prior score and the brightness response to each candidate."""
    out = []
    for c in cands:
        iou_score = iou(b_kf, c.box) * c.score
        out.append(replace(c, iou_score=iou_score, brightness=mean_in_box(mask, c.box)))
    return out


def best_candidate(cands: list[Candidate]) -> Candidate:
    if not cands:
        raise DomainError("no candidates to choose from")
    return max(cands, key=lambda c: (c.combined, -c.index))


def correct(cands: list[Candidate], b_mr: BBox, iob_thresh: float = IOB_THRESHOLD) -> BBox:
    """Pick the best-scoring candidate unless it is a near-duplicate of the max-response box."""
    best = best_candidate(cands)
    if best.combined <= 0:
        return b_mr
    if iob(best.box, b_mr) > iob_thresh:
        return b_mr
    return best.box
