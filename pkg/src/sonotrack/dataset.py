"""Sequence I/O, attribute metadata and a seeded synthetic sonar generator.

On-disk layout of one sequence::

    <root>/<seq>/imgs/000001.pgm      (or .png)
    <root>/<seq>/groundtruth.txt      one "x,y,w,h" line per frame, 0,0,0,0 = out of view
    <root>/<seq>/attributes.txt       one comma-separated line of attribute codes
    <root>/<seq>/meta.txt             optional key=value lines (format, fov, seed, ...)
"""

from __future__ import annotations

import math
import os
from dataclasses import dataclass, field
from typing import Iterator, Optional

import numpy as np
from scipy import ndimage

from .errors import ConfigError, FormatError
from .geometry import BBox, iou
from .imaging import read_image, write_image

ATTRIBUTES = ("AOC", "SO", "OV", "ST", "SV", "AC", "LAR", "TBC", "BI", "FE")
IMAGE_EXTS = (".pgm", ".png")
SMALL_TARGET_PX = 15
SCALE_RANGE = (0.5, 2.0)
# half-width of a Gaussian blob at 10% of its peak, in units of sigma
ISO10 = math.sqrt(2.0 * math.log(10.0))


@dataclass
class SequenceRecord:
    name: str
    frame_paths: list[str]
    annotations: list[BBox]
    attributes: frozenset[str] = frozenset()
    format: str = "square"
    meta: dict = field(default_factory=dict)

    def __len__(self) -> int:
        return len(self.frame_paths)

    def frame(self, i: int) -> np.ndarray:
        return read_image(self.frame_paths[i])

    def frames(self) -> Iterator[np.ndarray]:
        for p in self.frame_paths:
            yield read_image(p)


# ---------------------------------------------------------------------------
# loading / writing

def parse_box_line(line: str, path: str, lineno: int) -> BBox:
    parts = [p for p in line.replace("\t", ",").replace(" ", ",").split(",") if p]
    if len(parts) != 4:
        raise FormatError(f"{path}:{lineno}: expected 4 comma-separated values, got {line.strip()!r}")
    try:
        values = [float(p) for p in parts]
    except ValueError:
        raise FormatError(f"{path}:{lineno}: non-numeric box {line.strip()!r}") from None
    if not all(math.isfinite(v) for v in values) or values[2] < 0 or values[3] < 0:
        raise FormatError(f"{path}:{lineno}: invalid box {line.strip()!r}")
    return BBox.of(values)


def read_boxes(path) -> list[BBox]:
    path = str(path)
    boxes = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if line.strip():
                boxes.append(parse_box_line(line, path, lineno))
    return boxes


def format_box(b: BBox) -> str:
    return ",".join(f"{v:.4f}" for v in b.as_tuple())


def write_boxes(path, boxes) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for b in boxes:
            fh.write(format_box(b) + "\n")


def read_meta(path) -> dict:
    meta = {}
    if not os.path.exists(path):
        return meta
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise FormatError(f"{path}:{lineno}: expected key=value")
            k, v = line.split("=", 1)
            meta[k.strip()] = v.strip()
    return meta


def load_sequence(seq_dir) -> SequenceRecord:
    seq_dir = str(seq_dir)
    img_dir = os.path.join(seq_dir, "imgs")
    gt_path = os.path.join(seq_dir, "groundtruth.txt")
    if not os.path.isdir(img_dir):
        raise FormatError(f"{seq_dir}: missing imgs/ directory")
    if not os.path.exists(gt_path):
        raise FormatError(f"{seq_dir}: missing groundtruth.txt")
    frames = sorted(f for f in os.listdir(img_dir) if f.lower().endswith(IMAGE_EXTS))
    boxes = read_boxes(gt_path)
    if len(boxes) != len(frames):
        # report the first line that is missing or surplus
        line = min(len(boxes), len(frames)) + 1
        raise FormatError(f"{gt_path}:{line}: expected {len(frames)} annotation lines "
                          f"(one per frame), found {len(boxes)}")
    attributes: frozenset[str] = frozenset()
    attr_path = os.path.join(seq_dir, "attributes.txt")
    if os.path.exists(attr_path):
        with open(attr_path, encoding="utf-8") as fh:
            codes = {c.strip() for c in fh.read().replace("\n", ",").split(",") if c.strip()}
        unknown = codes - set(ATTRIBUTES)
        if unknown:
            raise FormatError(f"{attr_path}: unknown attribute codes {sorted(unknown)}")
        attributes = frozenset(codes)
    meta = read_meta(os.path.join(seq_dir, "meta.txt"))
    return SequenceRecord(
        name=os.path.basename(os.path.normpath(seq_dir)),
        frame_paths=[os.path.join(img_dir, f) for f in frames],
        annotations=boxes,
        attributes=attributes,
        format=meta.get("format", "square"),
        meta=meta,
    )


def load_dataset(root) -> list[SequenceRecord]:
    """Every sequence directory under ``root`` (those with a groundtruth file), sorted by name."""
    root = str(root)
    if not os.path.isdir(root):
        raise FormatError(f"{root}: dataset root does not exist")
    names = sorted(d for d in os.listdir(root)
                   if os.path.exists(os.path.join(root, d, "groundtruth.txt")))
    if not names:
        raise FormatError(f"{root}: no sequences with groundtruth.txt found")
    return [load_sequence(os.path.join(root, n)) for n in names]


# ---------------------------------------------------------------------------
# attributes

def derive_attributes(boxes: list[BBox]) -> set[str]:
    """Attributes that follow from the annotations alone (ST, SV, OV)."""
    attrs = set()
    present = [b for b in boxes if not b.is_absent()]
    if len(present) < len(boxes):
        attrs.add("OV")
    if any(b.w < SMALL_TARGET_PX and b.h < SMALL_TARGET_PX for b in present):
        attrs.add("ST")
    if present:
        ref = math.sqrt(present[0].w * present[0].h)
        lo, hi = SCALE_RANGE
        for b in present[1:]:
            ratio = math.sqrt(b.w * b.h) / ref if ref > 0 else 1.0
            if ratio < lo or ratio > hi:
                attrs.add("SV")
                break
    return attrs


# ---------------------------------------------------------------------------
# square -> fan geometry

@dataclass(frozen=True)
class FanGeometry:
    rows: int
    cols: int
    fov_deg: float
    r_frac_min: float
    radius: float

    def __post_init__(self):
        if not (0 < self.fov_deg <= 180):
            raise ConfigError(f"fov must be in (0, 180] degrees, got {self.fov_deg}")
        if not (0 <= self.r_frac_min < 1):
            raise ConfigError(f"r_frac_min must be in [0, 1), got {self.r_frac_min}")

    @property
    def half(self) -> float:
        return math.radians(self.fov_deg) / 2.0

    @property
    def r_min(self) -> float:
        return self.r_frac_min * self.radius

    @property
    def width(self) -> int:
        return int(math.ceil(2.0 * self.radius * math.sin(self.half) - 1e-9))

    @property
    def height(self) -> int:
        return int(math.ceil(self.radius - self.r_min * math.cos(self.half) - 1e-9))

    @property
    def apex(self) -> tuple[float, float]:
        return self.width / 2.0, self.radius

    def square_to_fan(self, x, y):
        """Continuous square coordinates (col, row) -> fan canvas coordinates."""
        x = np.asarray(x, dtype=np.float64)
        y = np.asarray(y, dtype=np.float64)
        r = self.radius - y * (self.radius - self.r_min) / self.rows
        theta = -self.half + x * (2.0 * self.half) / self.cols
        ax, ay = self.apex
        return ax + r * np.sin(theta), ay - r * np.cos(theta)

    def fan_to_square(self, fx, fy):
        ax, ay = self.apex
        dx = np.asarray(fx, dtype=np.float64) - ax
        dy = ay - np.asarray(fy, dtype=np.float64)
        r = np.hypot(dx, dy)
        theta = np.arctan2(dx, dy)
        inside = (r >= self.r_min) & (r <= self.radius) & (np.abs(theta) <= self.half)
        y = (self.radius - r) * self.rows / (self.radius - self.r_min)
        x = (theta + self.half) * self.cols / (2.0 * self.half)
        return x, y, inside


def fan_geometry(shape, fov_deg: float = 130.0, r_frac_min: float = 0.1,
                 radius: Optional[float] = None) -> FanGeometry:
    rows, cols = shape
    return FanGeometry(rows, cols, float(fov_deg), float(r_frac_min),
                       float(radius if radius is not None else rows))


def polar_to_fan(square, fov_deg: float = 130.0, r_frac_min: float = 0.1,
                 radius: Optional[float] = None) -> np.ndarray:
    """Render a range x beam image as a fan; rows are range (top = far), columns are beams."""
    square = np.asarray(square, dtype=np.float64)
    geo = fan_geometry(square.shape, fov_deg, r_frac_min, radius)
    fy, fx = np.mgrid[0:geo.height, 0:geo.width].astype(np.float64) + 0.5
    x, y, inside = geo.fan_to_square(fx, fy)
    vals = ndimage.map_coordinates(square, [y - 0.5, x - 0.5], order=1, mode="nearest")
    return np.where(inside, vals, 0.0)


def fan_box(geo: FanGeometry, box: BBox, samples: int = 64) -> BBox:
    """Bounding box in fan space of the ellipse inscribed in a square-space box."""
    phi = np.linspace(0.0, 2.0 * np.pi, samples, endpoint=False)
    x = box.cx + 0.5 * box.w * np.cos(phi)
    y = box.cy + 0.5 * box.h * np.sin(phi)
    fx, fy = geo.square_to_fan(x, y)
    return BBox(float(fx.min()), float(fy.min()), float(fx.max() - fx.min()), float(fy.max() - fy.min()))


# ---------------------------------------------------------------------------
# synthetic sequences

MOTIONS = ("static", "linear", "sinusoidal", "crossover")


@dataclass(frozen=True)
class SynthSpec:
    name: str = "synth"
    frames: int = 60
    image_size: int = 160
    motion: str = "linear"
    start: tuple[float, ...] = ()            # (cx, cy); empty -> image center
    velocity: tuple[float, ...] = (2.0, 0.0)
    amplitude: float = 20.0                  # sinusoidal: vertical swing, px
    period: float = 40.0                     # sinusoidal: frames per cycle
    target_sigma: tuple[float, ...] = (4.5, 4.0)
    scale_rate: float = 0.0                  # per-frame relative growth of the blob
    target_intensity: float = 200.0
    range_falloff: bool = True
    salt_pepper_rate: float = 0.0
    speckle_sigma: float = 0.0
    background_sigma: float = 0.0
    ghost: bool = False
    ghost_offset: tuple[float, ...] = (0.0, 12.0)
    ghost_gain: float = 0.45
    distractor: bool = False
    distractor_gain: float = 1.0
    distractor_velocity: tuple[float, ...] = ()   # empty -> mirrored target velocity
    cross_frame: int = -1                         # -1 -> frames // 2
    cross_offset: tuple[float, ...] = (0.0, 0.0)
    format: str = "square"
    fov: float = 130.0
    r_frac_min: float = 0.1
    ext: str = "pgm"
    seed: int = 0

    def __post_init__(self):
        if self.frames < 2:
            raise ConfigError(f"frames must be >= 2, got {self.frames}")
        if self.image_size < 16:
            raise ConfigError(f"image_size must be >= 16, got {self.image_size}")
        if self.motion not in MOTIONS:
            raise ConfigError(f"motion must be one of {MOTIONS}, got {self.motion!r}")
        for name in ("salt_pepper_rate",):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ConfigError(f"{name} must be in [0, 1], got {v}")
        for name in ("speckle_sigma", "background_sigma", "ghost_gain", "distractor_gain"):
            if getattr(self, name) < 0:
                raise ConfigError(f"{name} must be >= 0")
        if self.format not in ("square", "fan"):
            raise ConfigError(f"format must be square or fan, got {self.format!r}")
        if self.ext not in ("pgm", "png"):
            raise ConfigError(f"ext must be pgm or png, got {self.ext!r}")
        if self.format == "fan":
            fan_geometry((self.image_size, self.image_size), self.fov, self.r_frac_min)


def _pair(v, default) -> tuple[float, float]:
    return (float(v[0]), float(v[1])) if len(v) >= 2 else default


def trajectory(spec: SynthSpec) -> np.ndarray:
    """Target centers, shape (frames, 2)."""
    n = spec.image_size
    cx0, cy0 = _pair(spec.start, (n / 2.0, n / 2.0))
    vx, vy = _pair(spec.velocity, (0.0, 0.0))
    t = np.arange(spec.frames, dtype=np.float64)
    if spec.motion == "static":
        return np.tile([cx0, cy0], (spec.frames, 1))
    if spec.motion == "sinusoidal":
        return np.stack([cx0 + vx * t, cy0 + vy * t + spec.amplitude * np.sin(2 * np.pi * t / spec.period)], axis=1)
    return np.stack([cx0 + vx * t, cy0 + vy * t], axis=1)


def distractor_trajectory(spec: SynthSpec, target: np.ndarray) -> Optional[np.ndarray]:
    if not (spec.distractor or spec.motion == "crossover"):
        return None
    tc = spec.cross_frame if spec.cross_frame >= 0 else spec.frames // 2
    tc = min(tc, spec.frames - 1)
    vx, vy = _pair(spec.velocity, (0.0, 0.0))
    dvx, dvy = _pair(spec.distractor_velocity, (-vx, -vy))
    ox, oy = _pair(spec.cross_offset, (0.0, 0.0))
    t = np.arange(spec.frames, dtype=np.float64) - tc
    meet = target[tc] + np.array([ox, oy])
    return np.stack([meet[0] + dvx * t, meet[1] + dvy * t], axis=1)


def _blob(shape, cx, cy, sx, sy, peak) -> np.ndarray:
    h, w = shape
    ys = np.arange(h, dtype=np.float64) + 0.5
    xs = np.arange(w, dtype=np.float64) + 0.5
    gy = np.exp(-((ys - cy) ** 2) / (2 * sy * sy))
    gx = np.exp(-((xs - cx) ** 2) / (2 * sx * sx))
    return peak * np.outer(gy, gx)


def _blob_box(cx, cy, sx, sy) -> BBox:
    ax, ay = ISO10 * sx, ISO10 * sy
    return BBox(cx - ax, cy - ay, 2 * ax, 2 * ay)


def _clip_box(b: BBox, width: float, height: float) -> BBox:
    x1, y1 = max(b.x, 0.0), max(b.y, 0.0)
    x2, y2 = min(b.x2, width), min(b.y2, height)
    if x2 <= x1 or y2 <= y1:
        return BBox.absent()
    return BBox(x1, y1, x2 - x1, y2 - y1)


@dataclass
class SynthFrames:
    frames: list[np.ndarray]
    boxes: list[BBox]
    attributes: set[str]
    peaks: list[float]


def render(spec: SynthSpec) -> SynthFrames:
    """Render frames and ground truth in memory (square geometry, before any fan remap)."""
    rng = np.random.default_rng(spec.seed)
    n = spec.image_size
    shape = (n, n)
    centers = trajectory(spec)
    others = distractor_trajectory(spec, centers)
    sx0, sy0 = _pair(spec.target_sigma, (4.0, 4.0))
    # range measured from the sonar head just below the bottom row
    r_near = 0.1 * n
    range0 = n - centers[0, 1] + r_near

    frames, boxes, peaks = [], [], []
    overlap = False
    for t in range(spec.frames):
        cx, cy = centers[t]
        grow = (1.0 + spec.scale_rate) ** t
        sx, sy = sx0 * grow, sy0 * grow
        peak = spec.target_intensity
        if spec.range_falloff:
            peak = spec.target_intensity * range0 / max(n - cy + r_near, 1.0)
        peak = min(peak, 255.0)
        peaks.append(peak)
        img = _blob(shape, cx, cy, sx, sy, peak)
        if spec.ghost:
            gx, gy = _pair(spec.ghost_offset, (0.0, 0.0))
            img = np.maximum(img, _blob(shape, cx + gx, cy + gy, sx, sy, peak * spec.ghost_gain))
        if others is not None:
            dx, dy = others[t]
            img = np.maximum(img, _blob(shape, dx, dy, sx, sy, peak * spec.distractor_gain))
            tb, db = _blob_box(cx, cy, sx, sy), _blob_box(dx, dy, sx, sy)
            overlap = overlap or iou(tb, db) > 0
        if spec.speckle_sigma > 0:
            img = img * np.maximum(1.0 + spec.speckle_sigma * rng.standard_normal(shape), 0.0)
        if spec.background_sigma > 0:
            img = img + np.abs(spec.background_sigma * rng.standard_normal(shape))
        if spec.salt_pepper_rate > 0:
            hit = rng.random(shape) < spec.salt_pepper_rate
            salt = rng.random(shape) < 0.5
            img = np.where(hit & salt, 255.0, np.where(hit & ~salt, 0.0, img))
        frames.append(np.clip(img, 0.0, 255.0))
        boxes.append(_clip_box(_blob_box(cx, cy, sx, sy), n, n))

    attrs = set()
    if spec.ghost or overlap:
        attrs.add("AOC")
    if others is not None:
        attrs.add("SO")
    if max(peaks) > 1.5 * min(peaks):
        attrs.add("TBC")
    if max(peaks) < 80:
        attrs.add("LAR")
    if spec.salt_pepper_rate > 0.01 or spec.background_sigma > 10 or spec.speckle_sigma > 0.3:
        attrs.add("BI")
    return SynthFrames(frames, boxes, attrs, peaks)


def synth_generate(spec: SynthSpec, out_root) -> SequenceRecord:
    """Render ``spec`` and write it as ``<out_root>/<spec.name>/``."""
    synth = render(spec)
    frames, boxes = synth.frames, synth.boxes
    meta = {"format": spec.format, "seed": str(spec.seed), "motion": spec.motion}
    if spec.format == "fan":
        geo = fan_geometry((spec.image_size, spec.image_size), spec.fov, spec.r_frac_min)
        frames = [polar_to_fan(f, spec.fov, spec.r_frac_min) for f in frames]
        boxes = [b if b.is_absent() else _clip_box(fan_box(geo, b), geo.width, geo.height) for b in boxes]
        meta["fov"] = repr(spec.fov)
        meta["r_frac_min"] = repr(spec.r_frac_min)
    # round-trip through the text format so the record equals what a loader reads back
    boxes = [BBox.of(float(v) for v in format_box(b).split(",")) for b in boxes]
    attrs = synth.attributes | derive_attributes(boxes)

    seq_dir = os.path.join(str(out_root), spec.name)
    img_dir = os.path.join(seq_dir, "imgs")
    os.makedirs(img_dir, exist_ok=True)
    paths = []
    for i, f in enumerate(frames, 1):
        p = os.path.join(img_dir, f"{i:06d}.{spec.ext}")
        write_image(p, f)
        paths.append(p)
    write_boxes(os.path.join(seq_dir, "groundtruth.txt"), boxes)
    codes = [a for a in ATTRIBUTES if a in attrs]
    with open(os.path.join(seq_dir, "attributes.txt"), "w", encoding="utf-8") as fh:
        fh.write(",".join(codes) + "\n")
    with open(os.path.join(seq_dir, "meta.txt"), "w", encoding="utf-8") as fh:
        for k in sorted(meta):
            fh.write(f"{k}={meta[k]}\n")
    return SequenceRecord(spec.name, paths, boxes, frozenset(codes), spec.format, meta)
