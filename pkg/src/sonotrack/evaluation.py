"""One-pass evaluation: metrics, per-attribute aggregation and the text report.

Frame conventions
-----------------
* Frames whose ground truth is the (0,0,0,0) sentinel are left out of PR, NPR,
  SR and OP; they only matter to F1, where a reported box there is a false
  positive.
* An absent prediction counts as a miss (infinite distance, zero overlap).
* Success and overlap precision use a strict ``IoU > threshold``.
"""

from __future__ import annotations

import csv
import logging
import os
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .dataset import ATTRIBUTES, SequenceRecord, read_boxes
from .errors import FormatError
from .geometry import BBox

log = logging.getLogger(__name__)

PR_THRESHOLD = 20.0
PRECISION_THRESHOLDS = np.arange(51, dtype=np.float64)            # 0..50 px
NORM_PRECISION_THRESHOLDS = np.linspace(0.0, 0.5, 51)
SUCCESS_THRESHOLDS = np.linspace(0.0, 1.0, 21)
F1_IOU = 0.5
METRICS = ("pr", "npr", "sr", "op50", "op75", "f1")
REPORT_HEADER = "# SONOTRACK-REPORT v1"


def _as_array(boxes) -> np.ndarray:
    arr = np.array([tuple(b) for b in boxes], dtype=np.float64).reshape(-1, 4)
    return arr


def _pairs(preds, gts):
    p, g = _as_array(preds), _as_array(gts)
    if p.shape != g.shape:
        raise ValueError(f"{len(p)} predictions for {len(g)} ground-truth boxes")
    gt_present = ~np.all(g == 0, axis=1)
    pred_present = ~np.all(p == 0, axis=1)
    return p, g, gt_present, pred_present


def _centers(b):
    return b[:, 0] + b[:, 2] / 2.0, b[:, 1] + b[:, 3] / 2.0


def overlaps(preds, gts) -> np.ndarray:
    """Per-frame IoU; 0 wherever either box is absent."""
    p, g, gp, pp = _pairs(preds, gts)
    iw = np.minimum(p[:, 0] + p[:, 2], g[:, 0] + g[:, 2]) - np.maximum(p[:, 0], g[:, 0])
    ih = np.minimum(p[:, 1] + p[:, 3], g[:, 1] + g[:, 3]) - np.maximum(p[:, 1], g[:, 1])
    inter = np.clip(iw, 0, None) * np.clip(ih, 0, None)
    union = p[:, 2] * p[:, 3] + g[:, 2] * g[:, 3] - inter
    out = np.zeros(len(p))
    ok = gp & pp & (union > 0)
    # clamp: rounding can push identical boxes a hair above 1, which would pass theta = 1
    out[ok] = np.minimum(inter[ok] / union[ok], 1.0)
    return out


def center_errors(preds, gts, normalized: bool = False) -> np.ndarray:
    p, g, gp, pp = _pairs(preds, gts)
    pcx, pcy = _centers(p)
    gcx, gcy = _centers(g)
    dx, dy = pcx - gcx, pcy - gcy
    if normalized:
        with np.errstate(divide="ignore", invalid="ignore"):
            dx, dy = dx / g[:, 2], dy / g[:, 3]
    d = np.hypot(dx, dy)
    d[~pp | np.isnan(d)] = np.inf
    return d


def _present_or_warn(gp: np.ndarray) -> bool:
    if not gp.any():
        warnings.warn("no frame has a ground-truth box; metric defined as 0", RuntimeWarning, stacklevel=3)
        return False
    return True


def precision_curve(preds, gts, thresholds=PRECISION_THRESHOLDS) -> np.ndarray:
    _, _, gp, _ = _pairs(preds, gts)
    if not _present_or_warn(gp):
        return np.zeros(len(thresholds))
    d = center_errors(preds, gts)[gp]
    return (d[None, :] <= np.asarray(thresholds)[:, None]).mean(axis=1)


def precision_rate(preds, gts, tau: float = PR_THRESHOLD) -> float:
    return 100.0 * float(precision_curve(preds, gts, [tau])[0])


def normalized_precision_curve(preds, gts) -> np.ndarray:
    _, g, gp, _ = _pairs(preds, gts)
    if not _present_or_warn(gp):
        return np.zeros(len(NORM_PRECISION_THRESHOLDS))
    d = center_errors(preds, gts, normalized=True)[gp]
    return (d[None, :] <= NORM_PRECISION_THRESHOLDS[:, None]).mean(axis=1)


def normalized_precision_rate(preds, gts) -> float:
    """Area under the normalized precision curve on [0, 0.5], scaled so perfect = 100."""
    return 100.0 * float(normalized_precision_curve(preds, gts).mean())


def success_curve(preds, gts) -> np.ndarray:
    _, _, gp, _ = _pairs(preds, gts)
    if not _present_or_warn(gp):
        return np.zeros(len(SUCCESS_THRESHOLDS))
    o = overlaps(preds, gts)[gp]
    return (o[None, :] > SUCCESS_THRESHOLDS[:, None]).mean(axis=1)


def success_rate(preds, gts) -> tuple[float, np.ndarray]:
    curve = success_curve(preds, gts)
    return 100.0 * float(curve.mean()), curve


def op_at(preds, gts, theta: float) -> float:
    _, _, gp, _ = _pairs(preds, gts)
    if not _present_or_warn(gp):
        return 0.0
    return 100.0 * float((overlaps(preds, gts)[gp] > theta).mean())


def f1_score(preds, gts) -> float:
    _, _, gp, pp = _pairs(preds, gts)
    good = overlaps(preds, gts) >= F1_IOU
    tp = int(np.sum(gp & pp & good))
    fp = int(np.sum(pp & (~gp | ~good)))
    fn = int(np.sum(gp & (~pp | ~good)))
    p = tp / (tp + fp) if tp + fp else 0.0
    r = tp / (tp + fn) if tp + fn else 0.0
    return 2 * p * r / (p + r) if p + r > 0 else 0.0


# ---------------------------------------------------------------------------
# per-sequence / aggregate results

@dataclass
class SequenceResult:
    name: str
    format: str
    attributes: frozenset
    frames: int
    metrics: dict
    curves: dict


@dataclass
class EvalResult:
    sequences: list[SequenceResult]
    overall: dict = field(default_factory=dict)
    splits: dict = field(default_factory=dict)
    per_attribute: dict = field(default_factory=dict)

    def by_name(self, name: str) -> SequenceResult:
        for s in self.sequences:
            if s.name == name:
                return s
        raise KeyError(name)


def sequence_metrics(preds, gts) -> tuple[dict, dict]:
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        sr, s_curve = success_rate(preds, gts)
        metrics = {
            "pr": precision_rate(preds, gts),
            "npr": normalized_precision_rate(preds, gts),
            "sr": sr,
            "op50": op_at(preds, gts, 0.5),
            "op75": op_at(preds, gts, 0.75),
            "f1": f1_score(preds, gts),
        }
        curves = {
            "precision": precision_curve(preds, gts),
            "normalized_precision": normalized_precision_curve(preds, gts),
            "success": s_curve,
        }
    return metrics, curves


def _mean(results: list[SequenceResult]) -> dict:
    out = {"sequences": len(results)}
    for m in METRICS:
        out[m] = float(np.mean([r.metrics[m] for r in results])) if results else 0.0
    return out


def aggregate(results: list[SequenceResult]) -> EvalResult:
    """Unweighted means over sequences, overall, per format split and per attribute."""
    ev = EvalResult(results, overall=_mean(results))
    for fmt in sorted({r.format for r in results}):
        ev.splits[fmt] = _mean([r for r in results if r.format == fmt])
    for a in ATTRIBUTES:
        members = [r for r in results if a in r.attributes]
        if members:
            ev.per_attribute[a] = _mean(members)
    return ev


# ---------------------------------------------------------------------------
# running trackers

class ModelTrackerFactory:
    """Picklable factory building a :class:`SonarTracker` per sequence."""

    def __init__(self, model):
        self.model = model

    def __call__(self, record: SequenceRecord):
        from .tracker import SonarTracker

        return SonarTracker(self.model)


def track_sequence(record: SequenceRecord, factory: Callable) -> list[BBox]:
    """Init on frame 1 with its ground truth and run once over the rest (no re-init)."""
    tracker = factory(record)
    first = record.annotations[0]
    tracker.initialize(record.frame(0), first)
    preds = [first]
    for i in range(1, len(record)):
        preds.append(tracker.track(record.frame(i)))
    return preds


def _run_one(args):
    record, factory = args
    return track_sequence(record, factory)


def _usable(records: Sequence[SequenceRecord]) -> list[SequenceRecord]:
    out = []
    for r in records:
        if not r.annotations or r.annotations[0].is_absent():
            warnings.warn(f"sequence {r.name}: target absent in frame 1, skipped", RuntimeWarning, stacklevel=3)
            continue
        out.append(r)
    return out


def run_ope(records: Sequence[SequenceRecord], factory: Callable | None = None, model=None,
            out: Optional[str] = None, workers: int = 1, curves_csv: Optional[str] = None) -> EvalResult:
    """Track every sequence once and score it.

    Either ``factory`` (record -> tracker with ``initialize``/``track``) or
    ``model`` must be given.  Results do not depend on ``workers``.
    """
    if factory is None:
        if model is None:
            raise ValueError("run_ope needs a tracker factory or a model")
        factory = ModelTrackerFactory(model)
    records = _usable(records)
    jobs = [(r, factory) for r in records]
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            trajectories = list(pool.map(_run_one, jobs))
    else:
        trajectories = [_run_one(j) for j in jobs]
    return score(records, trajectories, out=out, curves_csv=curves_csv)


def score(records: Sequence[SequenceRecord], trajectories: Sequence[Sequence[BBox]],
          out: Optional[str] = None, curves_csv: Optional[str] = None) -> EvalResult:
    results = []
    for rec, preds in zip(records, trajectories):
        if len(preds) != len(rec):
            raise FormatError(f"sequence {rec.name}: {len(preds)} predicted boxes for {len(rec)} frames")
        metrics, curves = sequence_metrics(preds, rec.annotations)
        results.append(SequenceResult(rec.name, rec.format, rec.attributes, len(rec), metrics, curves))
    ev = aggregate(results)
    if out:
        write_report(ev, out)
    if curves_csv:
        write_curves_csv(ev, curves_csv)
    return ev


def score_trajectory_dir(records: Sequence[SequenceRecord], results_dir: str, **kw) -> EvalResult:
    """Score precomputed ``<results_dir>/<seq>.txt`` trajectory files."""
    records = _usable(records)
    trajectories = []
    for rec in records:
        path = os.path.join(results_dir, rec.name + ".txt")
        if not os.path.exists(path):
            raise FormatError(f"{path}: missing trajectory for sequence {rec.name}")
        trajectories.append(read_boxes(path))
    return score(records, trajectories, **kw)


# ---------------------------------------------------------------------------
# report serialization

def _fmt(v) -> str:
    if isinstance(v, (int, np.integer)) and not isinstance(v, bool):
        return str(int(v))
    return f"{float(v):.6f}"


def _section(lines: list, title: str, items: dict) -> None:
    lines.append(f"[{title}]")
    for k in sorted(items):
        lines.append(f"{k} = {items[k]}")
    lines.append("")


def _metric_items(d: dict) -> dict:
    return {k: _fmt(v) for k, v in d.items()}


def format_report(ev: EvalResult) -> str:
    lines = [REPORT_HEADER, ""]
    _section(lines, "overall", _metric_items(ev.overall))
    for fmt in sorted(ev.splits):
        _section(lines, f"split.{fmt}", _metric_items(ev.splits[fmt]))
    for a in ATTRIBUTES:
        if a in ev.per_attribute:
            _section(lines, f"attribute.{a}", _metric_items(ev.per_attribute[a]))
    for s in sorted(ev.sequences, key=lambda r: r.name):
        items = _metric_items(s.metrics)
        items["attributes"] = ",".join(a for a in ATTRIBUTES if a in s.attributes)
        items["format"] = s.format
        items["frames"] = str(s.frames)
        _section(lines, f"sequence.{s.name}", items)
    for s in sorted(ev.sequences, key=lambda r: r.name):
        _section(lines, f"curves.{s.name}",
                 {k: ",".join(_fmt(x) for x in v) for k, v in s.curves.items()})
    return "\n".join(lines)


def write_report(ev: EvalResult, path: str) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(format_report(ev))


def read_report(path: str):
    import configparser

    cp = configparser.ConfigParser(interpolation=None)
    with open(path, encoding="utf-8") as fh:
        text = fh.read()
    cp.read_string(text)
    return cp


def write_curves_csv(ev: EvalResult, path: str) -> None:
    thresholds = {
        "precision": PRECISION_THRESHOLDS,
        "normalized_precision": NORM_PRECISION_THRESHOLDS,
        "success": SUCCESS_THRESHOLDS,
    }
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["sequence", "curve", "threshold", "value"])
        for s in sorted(ev.sequences, key=lambda r: r.name):
            for name in sorted(s.curves):
                for t, v in zip(thresholds[name], s.curves[name]):
                    w.writerow([s.name, name, _fmt(t), _fmt(v)])
