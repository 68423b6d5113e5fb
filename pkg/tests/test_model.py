import dataclasses

import numpy as np
import pytest

from sonotrack.config import TrackerConfig, apply_overrides
from sonotrack.errors import ConfigError, FormatError
from sonotrack.model import MODEL_HEADER, Model, dumps, load_model, loads, save_model


def arrays(obj):
    out = []
    for f in dataclasses.fields(obj):
        v = getattr(obj, f.name)
        if isinstance(v, np.ndarray):
            out.append(v)
        elif dataclasses.is_dataclass(v) and not isinstance(v, TrackerConfig):
            out.extend(arrays(v))
    return out


def test_round_trip_is_bit_exact(tmp_path):
    m = Model.from_seed(apply_overrides(TrackerConfig(), {"seed": 7, "otcm.k": 4}))
    save_model(m, tmp_path / "m.txt")
    back = load_model(tmp_path / "m.txt")
    assert back.config == m.config
    for a, b in zip(arrays(m), arrays(back), strict=True):
        assert a.dtype == b.dtype and np.array_equal(a, b)
    assert dumps(back) == dumps(m)


def test_seeds_differ():
    a, b = Model.from_seed(TrackerConfig(seed=0)), Model.from_seed(TrackerConfig(seed=1))
    assert not np.array_equal(a.embed_w, b.embed_w)
    assert np.array_equal(a.embed_w, Model.from_seed(TrackerConfig(seed=0)).embed_w)


def test_bad_header_and_body():
    with pytest.raises(FormatError, match="header"):
        loads("NOT-A-MODEL\n{}")
    with pytest.raises(FormatError):
        loads(MODEL_HEADER + "\n{not json")
    with pytest.raises(FormatError):
        loads(MODEL_HEADER + "\n{}")


def test_with_config_checks_shape():
    m = Model.from_seed(TrackerConfig())
    m2 = m.with_config(apply_overrides(m.config, {"otcm.enabled": False}))
    assert m2.embed_w is m.embed_w and not m2.config.otcm.enabled
    with pytest.raises(ConfigError):
        m.with_config(apply_overrides(m.config, {"embed_dim": 16}))
