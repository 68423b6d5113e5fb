"""``sonotrack`` command line: track, eval, synth, enhance, fan, model.

Errors are reported on stderr as one line ``sonotrack-error: <kind>: <message>``
and the process exits with status 2.
"""

from __future__ import annotations

import argparse
import json
import os
import shutil
import sys
import textwrap

from . import __version__
from .config import TrackerConfig, apply_overrides, from_dict, override_keys
from .dataset import (ATTRIBUTES, SynthSpec, load_dataset, load_sequence, polar_to_fan,
                      synth_generate, write_boxes)
from .errors import ConfigError, FormatError, SonotrackError
from .evaluation import ModelTrackerFactory, run_ope, score_trajectory_dir, track_sequence
from .imaging import high_freq_enhance, read_image, write_image
from .model import Model, load_model, save_model
from .presets import PRESETS

ERROR_PREFIX = "sonotrack-error"


def _keys_help(title: str, keys: list[str]) -> str:
    body = textwrap.fill(", ".join(keys), width=78, initial_indent="  ", subsequent_indent="  ")
    return f"{title}:\n{body}"


TRACKER_KEYS = override_keys(TrackerConfig())
SYNTH_KEYS = override_keys(SynthSpec())


# ---------------------------------------------------------------------------
# model resolution shared by track / eval

def _ablate(cfg: TrackerConfig, args) -> TrackerConfig:
    flags = {}
    if args.no_otcm:
        flags["otcm.enabled"] = False
    if args.no_mtfm:
        flags["mtfm"] = False
    if args.no_fem:
        flags["fem"] = False
    if args.no_enhance:
        flags["enhance.enabled"] = False
    return apply_overrides(cfg, flags) if flags else cfg


def resolve_model(args) -> Model:
    """Model from ``--model`` or from ``--seed``, with overrides and ablations applied."""
    if args.model:
        if args.seed is not None:
            raise ConfigError("--seed selects seeded weights and cannot be combined with --model")
        model = load_model(args.model)
        cfg = apply_overrides(model.config, args.set)
        for key in ("seed", "embed_dim"):
            if getattr(cfg, key) != getattr(model.config, key):
                raise ConfigError(f"{key} is fixed by the model file and cannot be overridden")
        return model.with_config(_ablate(cfg, args))
    cfg = apply_overrides(TrackerConfig(), args.set)
    if args.seed is not None:
        cfg = apply_overrides(cfg, {"seed": args.seed})
    return Model.from_seed(_ablate(cfg, args))


# ---------------------------------------------------------------------------
# commands

def cmd_track(args) -> int:
    record = load_sequence(args.seq)
    model = resolve_model(args)
    preds = track_sequence(record, ModelTrackerFactory(model))
    write_boxes(args.out, preds)
    print(f"{record.name}: {len(preds)} boxes -> {args.out}")
    return 0


def cmd_eval(args) -> int:
    records = load_dataset(args.root)
    if args.results:
        if args.model or args.seed is not None:
            raise ConfigError("--results scores existing trajectories; drop --model/--seed")
        ev = score_trajectory_dir(records, args.results, out=args.out, curves_csv=args.curves)
    else:
        model = resolve_model(args)
        workers = args.workers if args.workers is not None else (os.cpu_count() or 1)
        ev = run_ope(records, model=model, out=args.out, workers=max(1, workers),
                     curves_csv=args.curves)
    o = ev.overall
    print(f"{len(ev.sequences)} sequences  PR {o['pr']:.2f}  NPR {o['npr']:.2f}  SR {o['sr']:.2f}  "
          f"OP50 {o['op50']:.2f}  OP75 {o['op75']:.2f}  F1 {o['f1']:.4f}")
    print(f"report -> {args.out}")
    return 0


def _load_specs(path: str) -> list[SynthSpec]:
    try:
        with open(path, encoding="utf-8") as fh:
            doc = json.load(fh)
    except json.JSONDecodeError as exc:
        raise FormatError(f"{path}: invalid JSON ({exc})") from None
    items = doc if isinstance(doc, list) else [doc]
    if not all(isinstance(d, dict) for d in items):
        raise FormatError(f"{path}: expected an object or a list of objects")
    return [from_dict(SynthSpec, d) for d in items]


def cmd_synth(args) -> int:
    if args.preset and args.spec:
        raise ConfigError("use either --preset or --spec, not both")
    if args.preset:
        specs = PRESETS[args.preset](**({"seed": args.seed} if args.seed is not None else {}))
    elif args.spec:
        specs = _load_specs(args.spec)
    else:
        specs = [SynthSpec()]
    specs = [apply_overrides(s, args.set) for s in specs]
    if args.count > 1:
        base_seed = args.seed if args.seed is not None and not args.preset else None
        expanded = []
        for s in specs:
            for i in range(args.count):
                seed = (base_seed if base_seed is not None else s.seed) + i
                expanded.append(apply_overrides(s, {"name": f"{s.name}_{i:03d}", "seed": seed}))
        specs = expanded
    elif args.seed is not None and not args.preset:
        specs = [apply_overrides(s, {"seed": args.seed}) for s in specs]
    names = [s.name for s in specs]
    if len(set(names)) != len(names):
        raise ConfigError("sequence names must be unique; use --count or distinct names")

    counts = dict.fromkeys(ATTRIBUTES, 0)
    for spec in specs:
        rec = synth_generate(spec, args.out)
        codes = [a for a in ATTRIBUTES if a in rec.attributes]
        for a in codes:
            counts[a] += 1
        print(f"{rec.name}: {len(rec)} frames, {rec.format}, attributes {','.join(codes) or '-'}")
    summary = " ".join(f"{a}={n}" for a, n in counts.items() if n)
    print(f"{len(specs)} sequences -> {args.out}  [{summary or 'no attributes'}]")
    return 0


def _copy_or_write(src: str, dst: str, pixels, original) -> None:
    if (pixels == original).all() and os.path.splitext(src)[1].lower() == os.path.splitext(dst)[1].lower():
        shutil.copyfile(src, dst)
    else:
        write_image(dst, pixels)


def cmd_enhance(args) -> int:
    img = read_image(args.input)
    out = high_freq_enhance(img, args.sigma, args.ksize, args.gain)
    _copy_or_write(args.input, args.output, out, img)
    return 0


def cmd_fan(args) -> int:
    img = read_image(args.input)
    write_image(args.output, polar_to_fan(img, args.fov, args.r_min))
    return 0


def cmd_model(args) -> int:
    cfg = apply_overrides(TrackerConfig(), args.set)
    if args.seed is not None:
        cfg = apply_overrides(cfg, {"seed": args.seed})
    save_model(Model.from_seed(cfg), args.out)
    print(f"model (seed {cfg.seed}) -> {args.out}")
    return 0


# ---------------------------------------------------------------------------
# parser

class _Parser(argparse.ArgumentParser):
    """Usage errors use the same one-line prefix as runtime errors."""

    def error(self, message):
        self.exit(2, f"{ERROR_PREFIX}: usage: {self.prog}: {message}\n")


def _add_tracker_opts(p: argparse.ArgumentParser) -> None:
    p.add_argument("--model", help="model file written by 'sonotrack model'")
    p.add_argument("--seed", type=int, help="build seeded weights instead of loading --model")
    p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                   help="tracker config override, repeatable (see keys below)")
    p.add_argument("--no-otcm", action="store_true", help="disable trajectory correction")
    p.add_argument("--no-mtfm", action="store_true", help="disable template fusion re-weighting")
    p.add_argument("--no-fem", action="store_true", help="disable frequency-enhancement modulation")
    p.add_argument("--no-enhance", action="store_true", help="disable image enhancement")


def build_parser() -> argparse.ArgumentParser:
    fmt = argparse.RawDescriptionHelpFormatter
    tracker_epilog = _keys_help("tracker override keys (--set)", TRACKER_KEYS)
    synth_epilog = _keys_help("synth override keys (--set)", SYNTH_KEYS)
    parser = _Parser(
        prog="sonotrack", formatter_class=fmt,
        description="Single-object tracking toolkit for sonar-style grayscale imagery.",
        epilog=tracker_epilog + "\n\n" + synth_epilog)
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("track", help="track one sequence", formatter_class=fmt, epilog=tracker_epilog)
    p.add_argument("--seq", required=True, help="sequence directory (imgs/, groundtruth.txt)")
    p.add_argument("--out", required=True, help="trajectory file, one x,y,w,h line per frame")
    _add_tracker_opts(p)
    p.set_defaults(func=cmd_track)

    p = sub.add_parser("eval", help="one-pass evaluation over a dataset", formatter_class=fmt,
                       epilog=tracker_epilog)
    p.add_argument("--root", required=True, help="dataset root containing sequence directories")
    p.add_argument("--out", required=True, help="report file")
    p.add_argument("--results", help="score <results>/<seq>.txt trajectories instead of tracking")
    p.add_argument("--workers", type=int, help="parallel sequences (default: logical cores)")
    p.add_argument("--curves", help="optional CSV with per-sequence curves")
    _add_tracker_opts(p)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("synth", help="generate synthetic sonar sequences", formatter_class=fmt,
                       epilog=synth_epilog)
    p.add_argument("--out", required=True, help="dataset root to write into")
    p.add_argument("--spec", help="JSON file: one SynthSpec object or a list of them")
    p.add_argument("--preset", choices=sorted(PRESETS), help="named suite of specs")
    p.add_argument("--count", type=int, default=1, help="sequences per spec (seeds seed..seed+N-1)")
    p.add_argument("--seed", type=int, help="base seed")
    p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                   help="SynthSpec override, repeatable")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("enhance", help="high-frequency enhancement of one image")
    p.add_argument("input")
    p.add_argument("output")
    p.add_argument("--sigma", type=float, default=2.0)
    p.add_argument("--ksize", type=int, default=None, help="odd kernel size (default 2*ceil(3*sigma)+1)")
    p.add_argument("--gain", type=float, default=2.0)
    p.set_defaults(func=cmd_enhance)

    p = sub.add_parser("fan", help="remap a square (range x beam) image to fan geometry")
    p.add_argument("input")
    p.add_argument("output")
    p.add_argument("--fov", type=float, default=130.0, help="field of view in degrees, (0, 180]")
    p.add_argument("--r-min", type=float, default=0.1, help="inner radius as a fraction of the outer")
    p.set_defaults(func=cmd_fan)

    p = sub.add_parser("model", help="write a seeded model file", formatter_class=fmt,
                       epilog=tracker_epilog)
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int)
    p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE")
    p.set_defaults(func=cmd_model)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except SonotrackError as exc:
        msg = str(exc).replace("\n", " ")
        print(f"{ERROR_PREFIX}: {exc.kind}: {msg}", file=sys.stderr)
    except OSError as exc:
        print(f"{ERROR_PREFIX}: io: {exc}".replace("\n", " "), file=sys.stderr)
    return 2


if __name__ == "__main__":
    sys.exit(main())
