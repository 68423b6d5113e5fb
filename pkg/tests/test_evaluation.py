import warnings

import numpy as np
import pytest

import oracles
from sonotrack.dataset import SynthSpec, load_dataset, synth_generate
from sonotrack.errors import FormatError
from sonotrack.evaluation import (METRICS, aggregate, f1_score, normalized_precision_rate, op_at,
                                  precision_curve, precision_rate, read_report, run_ope, score,
                                  score_trajectory_dir, sequence_metrics, success_curve, success_rate,
                                  write_report)
from sonotrack.dataset import write_boxes
from sonotrack.geometry import BBox


def boxes(rows):
    return [BBox(*r) for r in rows]


GT = boxes([(10, 10, 20, 20), (30, 15, 10, 30), (0, 5, 5, 8)])


def test_perfect_tracker():
    assert precision_rate(GT, GT) == 100.0
    assert normalized_precision_rate(GT, GT) == 100.0
    assert np.isclose(success_rate(GT, GT)[0], 100.0 * 20 / 21, atol=1e-12)
    assert op_at(GT, GT, 0.5) == 100.0 and op_at(GT, GT, 0.75) == 100.0
    assert f1_score(GT, GT) == 1.0


def test_half_within_threshold():
    gts = boxes([(0, 0, 10, 10)] * 4)
    preds = boxes([(0, 0, 10, 10), (20, 0, 10, 10), (0, 20.5, 10, 10), (100, 100, 10, 10)])
    assert precision_rate(preds, gts) == 50.0
    assert precision_rate(preds, gts) == oracles.metric_pr([p.as_tuple() for p in preds],
                                                           [g.as_tuple() for g in gts])


def test_npr_offset_by_width_is_zero():
    gts = boxes([(10, 10, 8, 5), (40, 40, 12, 4)])
    preds = [BBox(g.x + g.w, g.y, g.w, g.h) for g in gts]
    assert normalized_precision_rate(preds, gts) == 0.0


def test_all_miss_sr_zero():
    gts = boxes([(0, 0, 10, 10)] * 3)
    assert success_rate(boxes([(50, 50, 10, 10)] * 3), gts)[0] == 0.0


def test_single_frame_iou_06():
    gt = [BBox(0, 0, 10, 10)]
    pred = [BBox(0, 0, 6, 10)]                     # IoU exactly 0.6
    assert np.isclose(success_rate(pred, gt)[0], 1200 / 21, atol=1e-12)
    curve = success_curve(pred, gt)
    assert curve[:12].tolist() == [1.0] * 12 and curve[12:].tolist() == [0.0] * 9


def test_op_is_strict():
    gt = [BBox(0, 0, 10, 10)]
    half = [BBox(0, 0, 5, 10)]                     # IoU exactly 0.5
    assert op_at(half, gt, 0.5) == 0.0
    assert op_at(half, gt, 0.49) == 100.0


def test_f1_half():
    gts = boxes([(0, 0, 10, 10)] * 4)
    preds = boxes([(0, 0, 10, 10), (0, 0, 10, 10), (50, 50, 10, 10), (50, 50, 10, 10)])
    assert np.isclose(f1_score(preds, gts), 0.5)
    assert np.isclose(oracles.metric_f1([p.as_tuple() for p in preds], [g.as_tuple() for g in gts]), 0.5)


def test_all_gt_absent():
    gts = [BBox.absent()] * 3
    preds = boxes([(1, 1, 4, 4)] * 3)
    with pytest.warns(RuntimeWarning):
        assert precision_rate(preds, gts) == 0.0
    with pytest.warns(RuntimeWarning):
        assert success_rate(preds, gts)[0] == 0.0
    assert f1_score(preds, gts) == 0.0


def test_absent_gt_frames_excluded():
    gts = boxes([(0, 0, 10, 10), (0, 0, 0, 0)])
    preds = boxes([(0, 0, 10, 10), (50, 50, 10, 10)])
    assert precision_rate(preds, gts) == 100.0
    assert np.isclose(success_rate(preds, gts)[0], 100 * 20 / 21)
    assert np.isclose(f1_score(preds, gts), 2 / 3)           # the second report is a false positive


def test_length_mismatch():
    with pytest.raises(ValueError):
        precision_rate(GT, GT[:2])


def test_metrics_match_oracles_on_random_instances():
    rng = np.random.default_rng(0)
    for _ in range(1000):
        preds, gts = oracles.random_metric_case(rng)
        p, g = [BBox(*b) for b in preds], [BBox(*b) for b in gts]
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", RuntimeWarning)
            assert abs(precision_rate(p, g) - oracles.metric_pr(preds, gts)) < 1e-9
            assert abs(normalized_precision_rate(p, g) - oracles.metric_npr(preds, gts)) < 1e-9
            assert abs(success_rate(p, g)[0] - oracles.metric_sr(preds, gts)) < 1e-9
            assert abs(op_at(p, g, 0.5) - oracles.metric_op(preds, gts, 0.5)) < 1e-9
            assert abs(op_at(p, g, 0.75) - oracles.metric_op(preds, gts, 0.75)) < 1e-9
            assert abs(f1_score(p, g) - oracles.metric_f1(preds, gts)) < 1e-9


def test_curve_monotonicity():
    rng = np.random.default_rng(1)
    for _ in range(50):
        preds, gts = oracles.random_metric_case(rng, 30)
        p, g = [BBox(*b) for b in preds], [BBox(*b) for b in gts]
        _, curves = sequence_metrics(p, g)
        assert np.all(np.diff(curves["precision"]) >= 0)
        assert np.all(np.diff(curves["normalized_precision"]) >= 0)
        assert np.all(np.diff(curves["success"]) <= 0)
        assert all(np.all(np.isfinite(c)) for c in curves.values())


@pytest.mark.parametrize("c", [0.25, 3.0, 10.0])
def test_sr_scale_invariant_pr_not(c):
    gts = boxes([(10, 10, 20, 20)] * 5)
    preds = boxes([(22, 14, 20, 20), (11, 10, 20, 20), (5, 5, 20, 20), (30, 30, 20, 20), (10, 28, 20, 20)])
    scaled = lambda bs: [BBox(b.x * c, b.y * c, b.w * c, b.h * c) for b in bs]
    assert np.isclose(success_rate(scaled(preds), scaled(gts))[0], success_rate(preds, gts)[0], atol=1e-9)
    assert np.isclose(normalized_precision_rate(scaled(preds), scaled(gts)),
                      normalized_precision_rate(preds, gts), atol=1e-9)
    assert precision_rate(scaled(preds), scaled(gts)) != precision_rate(preds, gts)


def test_precision_curve_thresholds():
    gt = [BBox(0, 0, 10, 10)]
    pred = [BBox(3, 4, 10, 10)]                     # center error exactly 5 px
    curve = precision_curve(pred, gt)
    assert curve[4] == 0.0 and curve[5] == 1.0 and len(curve) == 51


# --- aggregation / OPE -------------------------------------------------------------

@pytest.fixture(scope="module")
def tiny_dataset(tmp_path_factory):
    root = tmp_path_factory.mktemp("ds")
    synth_generate(SynthSpec(name="a_move", frames=20, motion="linear", velocity=(3.0, 0.0), seed=1), root)
    synth_generate(SynthSpec(name="b_fan", frames=12, motion="sinusoidal", format="fan", seed=2), root)
    synth_generate(SynthSpec(name="c_small", frames=8, motion="static", target_sigma=(2.0, 2.0), seed=3), root)
    return root


class OracleTracker:
    def __init__(self, record):
        self.gts = record.annotations
        self.i = 0

    def initialize(self, frame, box):
        self.i = 0

    def track(self, frame):
        self.i += 1
        return self.gts[self.i]


class StaticTracker:
    def __init__(self, record):
        self.box = None

    def initialize(self, frame, box):
        self.box = box

    def track(self, frame):
        return self.box


def test_oracle_tracker(tiny_dataset):
    ev = run_ope(load_dataset(tiny_dataset), factory=OracleTracker)
    for s in ev.sequences:
        assert s.metrics["pr"] == 100.0 and s.metrics["op50"] == 100.0 and s.metrics["f1"] == 1.0
        assert np.isclose(s.metrics["sr"], 100 * 20 / 21)
    assert ev.overall["sequences"] == 3
    assert set(ev.splits) == {"fan", "square"}


def test_static_tracker_below_oracle(tiny_dataset):
    recs = load_dataset(tiny_dataset)
    oracle = run_ope(recs, factory=OracleTracker)
    static = run_ope(recs, factory=StaticTracker)
    assert static.by_name("a_move").metrics["sr"] < oracle.by_name("a_move").metrics["sr"]


def test_aggregates_are_unweighted(tiny_dataset):
    ev = run_ope(load_dataset(tiny_dataset), factory=StaticTracker)
    for m in METRICS:
        assert np.isclose(ev.overall[m], np.mean([s.metrics[m] for s in ev.sequences]))
    small = [s for s in ev.sequences if "ST" in s.attributes]
    assert ev.per_attribute["ST"]["sequences"] == len(small) >= 1
    assert np.isclose(ev.per_attribute["ST"]["sr"], np.mean([s.metrics["sr"] for s in small]))


def test_absent_first_frame_skipped(tiny_dataset):
    recs = load_dataset(tiny_dataset)
    recs[0].annotations[0] = BBox.absent()
    with pytest.warns(RuntimeWarning, match="a_move"):
        ev = run_ope(recs, factory=OracleTracker)
    assert [s.name for s in ev.sequences] == ["b_fan", "c_small"]


def test_report_deterministic_and_parseable(tiny_dataset, tmp_path):
    recs = load_dataset(tiny_dataset)
    run_ope(recs, factory=StaticTracker, out=str(tmp_path / "r1.txt"), curves_csv=str(tmp_path / "c.csv"))
    run_ope(recs, factory=StaticTracker, out=str(tmp_path / "r2.txt"), workers=2)
    assert (tmp_path / "r1.txt").read_bytes() == (tmp_path / "r2.txt").read_bytes()
    cp = read_report(str(tmp_path / "r1.txt"))
    assert cp.getint("overall", "sequences") == 3
    assert cp.get("sequence.b_fan", "format") == "fan"
    assert len(cp.get("curves.a_move", "success").split(",")) == 21
    for line in (tmp_path / "r1.txt").read_text().splitlines():
        if "=" in line and not line.startswith("attributes") and not line.split(" = ")[0] in ("format", "frames", "sequences"):
            value = line.split(" = ")[1].split(",")[0]
            assert len(value.split(".")[1]) == 6
    rows = (tmp_path / "c.csv").read_text().splitlines()
    assert rows[0] == "sequence,curve,threshold,value"
    assert len(rows) == 1 + 3 * (51 + 51 + 21)


def test_score_trajectory_dir(tiny_dataset, tmp_path):
    recs = load_dataset(tiny_dataset)
    for r in recs:
        write_boxes(tmp_path / f"{r.name}.txt", r.annotations)
    ev = score_trajectory_dir(recs, str(tmp_path))
    assert all(s.metrics["pr"] == 100.0 for s in ev.sequences)
    (tmp_path / "c_small.txt").unlink()
    with pytest.raises(FormatError, match="c_small"):
        score_trajectory_dir(recs, str(tmp_path))


def test_score_rejects_wrong_length(tiny_dataset):
    recs = load_dataset(tiny_dataset)
    with pytest.raises(FormatError):
        score(recs[:1], [recs[0].annotations[:-1]])


def test_write_report_round_trip(tmp_path):
    ev = aggregate([])
    write_report(ev, str(tmp_path / "empty.txt"))
    assert read_report(str(tmp_path / "empty.txt")).getint("overall", "sequences") == 0
