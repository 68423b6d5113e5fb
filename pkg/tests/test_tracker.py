import numpy as np
import pytest

from sonotrack.config import TrackerConfig, apply_overrides
from sonotrack.dataset import SynthSpec, render
from sonotrack.errors import DomainError
from sonotrack.geometry import BBox, clip_to_frame, iou
from sonotrack.model import Model
from sonotrack.mtfm import mtfm_forward
from sonotrack.otcm import rank_cells
from sonotrack.tracker import (SonarTracker, enhance, init, response_map, search_region, step)


@pytest.fixture(scope="module")
def model():
    return Model.from_seed(TrackerConfig())


def run(model, synth, record_info=False):
    tr = SonarTracker(model)
    tr.initialize(synth.frames[0], synth.boxes[0])
    preds, infos = [synth.boxes[0]], []
    for f in synth.frames[1:]:
        preds.append(tr.track(f))
        infos.append(tr.last_info)
    return (preds, infos) if record_info else preds


def test_self_match(model):
    s = render(SynthSpec(motion="static", frames=2))
    st = init(s.frames[0], s.boxes[0], model)
    _, box, _ = step(st, s.frames[0], model)
    assert iou(box, s.boxes[0]) >= 0.8


def test_fused_template_grid(model):
    s = render(SynthSpec(motion="static", frames=2))
    st = init(s.frames[0], s.boxes[0], model)
    assert st.templates.fused.shape == (model.config.embed_dim, 8, 8)
    assert st.templates.fixed.shape == (128, 128)
    assert np.array_equal(st.templates.fixed, st.templates.dynamic)
    assert set(np.unique(st.templates.dynamic_binary)) <= {0.0, 255.0}
    assert st.frame_index == 0 and st.prev_box == s.boxes[0]


def test_init_deterministic(model):
    s = render(SynthSpec(motion="static", frames=2))
    a = init(s.frames[0], s.boxes[0], Model.from_seed(TrackerConfig(seed=3)))
    b = init(s.frames[0], s.boxes[0], Model.from_seed(TrackerConfig(seed=3)))
    for name in ("fixed_feat", "dynamic_binary_feat", "fused", "ncc_weights"):
        assert np.array_equal(getattr(a.templates, name), getattr(b.templates, name))
    assert np.array_equal(a.kalman.cov, b.kalman.cov)
    assert a.prev_target_mean == b.prev_target_mean


def test_init_rejects_bad_box(model):
    frame = np.zeros((100, 100))
    with pytest.raises(DomainError):
        init(frame, BBox(300, 300, 10, 10), model)
    with pytest.raises(DomainError):
        init(frame, BBox.absent(), model)


def test_track_before_init(model):
    with pytest.raises(DomainError):
        SonarTracker(model).track(np.zeros((10, 10)))


def test_static_target(model):
    s = render(SynthSpec(motion="static", frames=50))
    preds = run(model, s)
    assert all(iou(p, g) >= 0.9 for p, g in zip(preds, s.boxes))


def test_linear_target(model):
    s = render(SynthSpec(motion="linear", frames=100, image_size=256, start=(30, 128),
                         velocity=(2.0, 0.0), seed=7))
    centers = np.array([[b.cx, b.cy] for b in s.boxes])
    assert np.allclose(np.diff(centers[:, 0]), 2.0)
    preds = run(model, s)
    assert np.mean([iou(p, g) for p, g in zip(preds, s.boxes)]) >= 0.7


def test_same_seed_same_trajectory():
    s = render(SynthSpec(motion="crossover", frames=30, salt_pepper_rate=0.01, seed=4))
    a = run(Model.from_seed(TrackerConfig(seed=11)), s)
    b = run(Model.from_seed(TrackerConfig(seed=11)), s)
    assert [p.as_tuple() for p in a] == [p.as_tuple() for p in b]


def test_output_always_inside_frame(model):
    # the target drifts out of view; the tracker must keep returning a clamped box
    s = render(SynthSpec(motion="linear", frames=60, image_size=128, start=(70, 64),
                         velocity=(2.5, 0.0), salt_pepper_rate=0.01))
    assert any(b.is_absent() for b in s.boxes)
    for p in run(model, s):
        assert not p.is_absent()
        assert p.x >= 0 and p.y >= 0 and p.x2 <= 128 and p.y2 <= 128
        assert p.w >= 1 and p.h >= 1


def test_no_otcm_is_pure_argmax():
    cfg = apply_overrides(TrackerConfig(), {"otcm.enabled": False})
    m = Model.from_seed(cfg)
    s = render(SynthSpec(motion="crossover", frames=25, salt_pepper_rate=0.01, seed=2))
    st = init(s.frames[0], s.boxes[0], m)
    for f in s.frames[1:]:
        # reference: search crop, response map, first maximal cell, back-projection
        enhanced = enhance(f, cfg)
        search, tf = search_region(enhanced, st.prev_box, cfg)
        prev_search = tf.to_crop(st.prev_box)
        rmap, _ = response_map(search, st, prev_search, m)
        top = int(np.argmax(rmap.scores))
        expected = clip_to_frame(tf.to_frame(rmap.cell_box(top, prev_search)), f.shape[1], f.shape[0])
        st, box, info = step(st, f, m)
        assert not info.used_otcm and info.chosen_index == top
        assert box == expected


def test_otcm_engages_after_warmup(model):
    s = render(SynthSpec(motion="linear", frames=15))
    _, infos = run(model, s, record_info=True)
    assert [i.used_otcm for i in infos] == [False] * 10 + [True] * 4
    assert all(i.chosen_index == int(rank_cells(i.response.scores)[0]) for i in infos[:10])


def test_kalman_follows_output(model):
    s = render(SynthSpec(motion="linear", frames=20))
    st = init(s.frames[0], s.boxes[0], model)
    for f in s.frames[1:]:
        st, box, _ = step(st, f, model)
        assert st.kalman.time_since_update == 0
        assert st.prev_box == box


def test_fused_template_cached_between_updates(model):
    s = render(SynthSpec(motion="linear", frames=60, image_size=160, start=(30, 80), velocity=(1.5, 0.0)))
    st = init(s.frames[0], s.boxes[0], model)
    cached = st.templates.fused
    refreshed = []
    for i, f in enumerate(s.frames[1:], 1):
        st, _, _ = step(st, f, model)
        t = st.templates
        if i % model.config.update.interval:
            assert t.fused is cached
        else:
            refreshed.append(t.fused is not cached)
            cached = t.fused
        # recomputing on every frame would give exactly the cached value
        assert np.array_equal(mtfm_forward(t.fixed_feat, t.dynamic_feat, t.dynamic_binary_feat, model.mtfm),
                              t.fused)
    assert refreshed == [True]


def test_update_requires_min_score():
    cfg = apply_overrides(TrackerConfig(), {"update.interval": 5, "update.min_score": 1.01})
    m = Model.from_seed(cfg)
    s = render(SynthSpec(motion="linear", frames=12))
    st = init(s.frames[0], s.boxes[0], m)
    fused = st.templates.fused
    for f in s.frames[1:]:
        st, _, _ = step(st, f, m)
    assert st.templates.fused is fused


def test_ablated_models_still_track():
    s = render(SynthSpec(motion="sinusoidal", frames=20, salt_pepper_rate=0.01, speckle_sigma=0.2, seed=3))
    base = TrackerConfig()
    ref = run(Model.from_seed(base), s)
    for key in ("mtfm", "fem", "enhance.enabled"):
        other = run(Model.from_seed(apply_overrides(base, {key: False})), s)
        assert len(other) == len(ref)
        assert all(not p.is_absent() for p in other)


def test_mtfm_off_leaves_fused_empty():
    m = Model.from_seed(apply_overrides(TrackerConfig(), {"mtfm": False}))
    s = render(SynthSpec(motion="static", frames=3))
    st = init(s.frames[0], s.boxes[0], m)
    assert st.templates.fused is None and st.templates.ncc_weights is None
    st, box, _ = step(st, s.frames[1], m)
    assert iou(box, s.boxes[1]) > 0.8
