import os
import subprocess
import sys
from pathlib import Path

import numpy as np
import pytest

from sonotrack.cli import ERROR_PREFIX, SYNTH_KEYS, TRACKER_KEYS, main
from sonotrack.dataset import read_boxes
from sonotrack.evaluation import read_report
from sonotrack.imaging import read_image, write_image

DATA = Path(__file__).parent / "data"


def error_line(capsys):
    err = capsys.readouterr().err.strip().splitlines()
    assert len(err) == 1
    return err[0]


@pytest.fixture(scope="module")
def seq100(tmp_path_factory):
    root = tmp_path_factory.mktemp("seq")
    assert main(["synth", "--out", str(root), "--set", "name=s100", "--set", "frames=100", "--seed", "5"]) == 0
    return root


def test_track_writes_one_line_per_frame(seq100, tmp_path):
    out = tmp_path / "t.txt"
    assert main(["track", "--seq", str(seq100 / "s100"), "--out", str(out), "--seed", "0"]) == 0
    lines = out.read_text().splitlines()
    assert len(lines) == 100
    assert read_boxes(out)[0] == read_boxes(seq100 / "s100" / "groundtruth.txt")[0]
    again = tmp_path / "t2.txt"
    main(["track", "--seq", str(seq100 / "s100"), "--out", str(again), "--seed", "0"])
    assert out.read_bytes() == again.read_bytes()


def test_track_malformed_dir(tmp_path, capsys):
    (tmp_path / "bad" / "imgs").mkdir(parents=True)
    assert main(["track", "--seq", str(tmp_path / "bad"), "--out", str(tmp_path / "o.txt")]) != 0
    assert error_line(capsys).startswith(f"{ERROR_PREFIX}: format: ")


def test_track_ablation_flags(seq100, tmp_path):
    out = tmp_path / "a.txt"
    assert main(["track", "--seq", str(seq100 / "s100"), "--out", str(out), "--no-otcm", "--no-fem",
                 "--no-mtfm", "--no-enhance", "--set", "otcm.k=3"]) == 0
    assert len(read_boxes(out)) == 100


def test_eval_oracle_trajectories(tmp_path):
    results = tmp_path / "res"
    results.mkdir()
    for seq in sorted(os.listdir(DATA / "mini")):
        (results / f"{seq}.txt").write_bytes((DATA / "mini" / seq / "groundtruth.txt").read_bytes())
    out = tmp_path / "r.txt"
    assert main(["eval", "--root", str(DATA / "mini"), "--results", str(results), "--out", str(out)]) == 0
    assert read_report(str(out)).getfloat("overall", "pr") == 100.0


def test_eval_missing_gt(tmp_path, capsys):
    (tmp_path / "ds" / "x" / "imgs").mkdir(parents=True)
    assert main(["eval", "--root", str(tmp_path / "ds"), "--out", str(tmp_path / "r.txt")]) == 2
    assert "groundtruth" in error_line(capsys)


def test_eval_model_and_seed_conflict(tmp_path, capsys):
    rc = main(["eval", "--root", str(DATA / "mini"), "--out", str(tmp_path / "r.txt"),
               "--model", str(DATA / "model_seed0.txt"), "--seed", "3"])
    assert rc == 2 and error_line(capsys).startswith(f"{ERROR_PREFIX}: config: ")


@pytest.mark.parametrize("workers", ["1", "2"])
def test_golden_report(tmp_path, workers):
    out = tmp_path / "r.txt"
    rc = main(["eval", "--root", str(DATA / "mini"), "--model", str(DATA / "model_seed0.txt"),
               "--out", str(out), "--workers", workers])
    assert rc == 0
    assert out.read_bytes() == (DATA / "golden_report.txt").read_bytes()


def test_synth_frames_10(tmp_path):
    assert main(["synth", "--out", str(tmp_path), "--set", "frames=10", "--set", "name=ten"]) == 0
    assert len(os.listdir(tmp_path / "ten" / "imgs")) == 10
    assert len((tmp_path / "ten" / "groundtruth.txt").read_text().splitlines()) == 10


def test_synth_seed_reuse_identical(tmp_path):
    for d in ("a", "b"):
        main(["synth", "--out", str(tmp_path / d), "--seed", "4", "--count", "2",
              "--set", "salt_pepper_rate=0.02", "--set", "frames=5"])
    files = sorted(p.relative_to(tmp_path / "a") for p in (tmp_path / "a").rglob("*") if p.is_file())
    assert len(files) == 2 * (5 + 3)
    for f in files:
        assert (tmp_path / "a" / f).read_bytes() == (tmp_path / "b" / f).read_bytes()


def test_synth_spec_file(tmp_path, capsys):
    spec = tmp_path / "spec.json"
    spec.write_text('[{"name": "one", "frames": 4}, {"name": "two", "frames": 3, "format": "fan"}]')
    assert main(["synth", "--out", str(tmp_path / "o"), "--spec", str(spec)]) == 0
    out = capsys.readouterr().out
    assert "one: 4 frames" in out and "two: 3 frames, fan" in out and "2 sequences" in out


@pytest.mark.parametrize("args", [["--set", "salt_pepper_rate=1.5"], ["--set", "nope=1"], ["--count", "0", "--set", "frames=1"]])
def test_synth_config_errors(tmp_path, capsys, args):
    assert main(["synth", "--out", str(tmp_path)] + args) == 2
    assert error_line(capsys).startswith(f"{ERROR_PREFIX}: config: ")


def test_enhance_gain_zero_byte_identical(tmp_path):
    src = tmp_path / "in.pgm"
    write_image(str(src), np.random.default_rng(0).uniform(0, 255, (20, 30)))
    assert main(["enhance", str(src), str(tmp_path / "out.pgm"), "--gain", "0"]) == 0
    assert (tmp_path / "out.pgm").read_bytes() == src.read_bytes()


def test_enhance_constant_identical(tmp_path):
    src = tmp_path / "c.pgm"
    write_image(str(src), np.full((16, 16), 90.0))
    assert main(["enhance", str(src), str(tmp_path / "o.pgm")]) == 0
    assert (tmp_path / "o.pgm").read_bytes() == src.read_bytes()


def test_enhance_changes_texture(tmp_path):
    src = tmp_path / "t.pgm"
    img = np.full((16, 16), 50.0)
    img[:, 8:] = 150.0
    write_image(str(src), img)
    main(["enhance", str(src), str(tmp_path / "o.png"), "--sigma", "1", "--ksize", "5"])
    out = read_image(str(tmp_path / "o.png"))
    assert out[0, 7] < img[0, 7] and out[0, 8] > img[0, 8]


def test_enhance_even_ksize(tmp_path, capsys):
    src = tmp_path / "c.pgm"
    write_image(str(src), np.full((8, 8), 1.0))
    assert main(["enhance", str(src), str(tmp_path / "o.pgm"), "--ksize", "4"]) == 2
    assert error_line(capsys).startswith(f"{ERROR_PREFIX}: config: ")


def test_fan_command(tmp_path, capsys):
    src = tmp_path / "sq.pgm"
    write_image(str(src), np.full((50, 50), 120.0))
    assert main(["fan", str(src), str(tmp_path / "f.pgm"), "--fov", "180", "--r-min", "0"]) == 0
    assert read_image(str(tmp_path / "f.pgm")).shape == (50, 100)
    assert main(["fan", str(src), str(tmp_path / "g.pgm"), "--fov", "360"]) == 2
    assert error_line(capsys).startswith(f"{ERROR_PREFIX}: config: ")


def test_missing_input_is_io_error(tmp_path, capsys):
    assert main(["fan", str(tmp_path / "nope.pgm"), str(tmp_path / "f.pgm")]) == 2
    assert error_line(capsys).startswith(f"{ERROR_PREFIX}: io: ")


def test_model_command_matches_committed(tmp_path):
    assert main(["model", "--seed", "0", "--out", str(tmp_path / "m.txt")]) == 0
    assert (tmp_path / "m.txt").read_bytes() == (DATA / "model_seed0.txt").read_bytes()


def test_model_seed_fixed_by_file(tmp_path, capsys):
    rc = main(["track", "--seq", str(DATA / "mini" / "fan_small"), "--out", str(tmp_path / "o.txt"),
               "--model", str(DATA / "model_seed0.txt"), "--set", "seed=4"])
    assert rc == 2 and "seed" in error_line(capsys)


@pytest.mark.parametrize("cmd", [[], ["track"], ["eval"], ["model"]])
def test_help_lists_override_keys(capsys, cmd):
    with pytest.raises(SystemExit) as exc:
        main(cmd + ["--help"])
    assert exc.value.code == 0
    text = " ".join(capsys.readouterr().out.split())
    for key in TRACKER_KEYS:
        assert key in text
    if not cmd:
        for key in SYNTH_KEYS:
            assert key in text


def test_synth_help_lists_synth_keys(capsys):
    with pytest.raises(SystemExit):
        main(["synth", "--help"])
    text = " ".join(capsys.readouterr().out.split())
    assert all(key in text for key in SYNTH_KEYS)


def test_usage_error_prefix(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "sonotrack", "track", "--out", str(tmp_path / "x")],
                          capture_output=True, text=True)
    assert proc.returncode == 2
    lines = proc.stderr.strip().splitlines()
    assert len(lines) == 1 and lines[0].startswith(f"{ERROR_PREFIX}: usage: ")
