"""Seeded model weights and the model file container.

The file is plain text: a ``SONOTRACK-MODEL v1`` header line followed by a
JSON document.  Floats are written with ``repr`` so loading is bit-exact.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, fields

import numpy as np

from .config import TrackerConfig, from_dict, to_dict
from .errors import ConfigError, FormatError
from .fem import FemParams
from .mtfm import CrossAttnParams, MtfmParams, init_mtfm

MODEL_HEADER = "SONOTRACK-MODEL v1"
PATCH = 16


@dataclass(frozen=True)
class Model:
    config: TrackerConfig
    embed_w: np.ndarray   # (dim, PATCH*PATCH)
    embed_b: np.ndarray   # (dim,)
    fem: FemParams
    mtfm: MtfmParams

    @property
    def seed(self) -> int:
        return self.config.seed

    @classmethod
    def from_seed(cls, config: TrackerConfig | None = None) -> "Model":
        config = config or TrackerConfig()
        rng = np.random.default_rng(config.seed)
        dim = config.embed_dim
        fan_in = PATCH * PATCH
        bound = 1.0 / np.sqrt(fan_in)
        embed_w = rng.uniform(-bound, bound, size=(dim, fan_in))
        mtfm = init_mtfm(dim, rng)
        return cls(config, embed_w, np.zeros(dim), FemParams.init(dim), mtfm)

    def with_config(self, config: TrackerConfig) -> "Model":
        """Swap runtime settings; shape-defining fields must match the weights."""
        if config.embed_dim != self.config.embed_dim:
            raise ConfigError("embed_dim differs from the stored weights")
        return Model(config, self.embed_w, self.embed_b, self.fem, self.mtfm)


def _arr(a) -> dict:
    a = np.asarray(a, dtype=np.float64)
    return {"shape": list(a.shape), "data": [float(v) for v in a.ravel()]}


def _unarr(d) -> np.ndarray:
    return np.asarray(d["data"], dtype=np.float64).reshape(d["shape"])


def _params_to_dict(p) -> dict:
    out = {}
    for f in fields(p):
        v = getattr(p, f.name)
        if isinstance(v, CrossAttnParams):
            out[f.name] = _params_to_dict(v)
        elif isinstance(v, np.ndarray):
            out[f.name] = _arr(v)
        else:
            out[f.name] = float(v)
    return out


def _params_from_dict(cls, d: dict):
    kwargs = {}
    for f in fields(cls):
        v = d[f.name]
        if f.name in ("attn1", "attn2"):
            kwargs[f.name] = _params_from_dict(CrossAttnParams, v)
        elif isinstance(v, dict):
            kwargs[f.name] = _unarr(v)
        else:
            kwargs[f.name] = float(v)
    return cls(**kwargs)


def dumps(model: Model) -> str:
    doc = {
        "seed": model.seed,
        "config": to_dict(model.config),
        "embed": {"weight": _arr(model.embed_w), "bias": _arr(model.embed_b)},
        "fem": _params_to_dict(model.fem),
        "mtfm": _params_to_dict(model.mtfm),
    }
    return MODEL_HEADER + "\n" + json.dumps(doc, sort_keys=True) + "\n"


def loads(text: str) -> Model:
    header, _, body = text.partition("\n")
    if header.strip() != MODEL_HEADER:
        raise FormatError(f"not a model file: expected header {MODEL_HEADER!r}, got {header[:40]!r}")
    try:
        doc = json.loads(body)
        config = from_dict(TrackerConfig, doc["config"])
        return Model(
            config,
            _unarr(doc["embed"]["weight"]),
            _unarr(doc["embed"]["bias"]),
            _params_from_dict(FemParams, doc["fem"]),
            _params_from_dict(MtfmParams, doc["mtfm"]),
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise FormatError(f"corrupt model file: {exc}") from exc


def save_model(model: Model, path) -> None:
    with open(path, "w", encoding="ascii") as fh:
        fh.write(dumps(model))


def load_model(path) -> Model:
    with open(path, encoding="ascii") as fh:
        return loads(fh.read())
