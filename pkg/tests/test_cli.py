import json

import numpy as np
import pytest

from clsplat import io
from clsplat.cli import DEFAULTS, load_config, build_parser, main

COMMON = ["--dims", "24", "--seed", "3"]
SMALL = COMMON + ["--n-det", "32", "--samples-per-ray", "96"]


def run(*argv):
    return main([str(a) for a in argv])


@pytest.fixture(scope="module")
def staged(tmp_path_factory):
    """Every subcommand chained by hand; each consumes the previous stage's files."""
    d = tmp_path_factory.mktemp("stages")
    assert run("phantom", "--out", d / "ph.vol", *COMMON) == 0
    assert run("simulate", d / "ph.vol", "--views", 8, "--out", d / "p.bin", *SMALL) == 0
    assert run("fdk", d / "p.bin", "--out", d / "f.vol", *COMMON) == 0
    assert run("init", d / "f.vol", "--points", 300, "--out", d / "i.lgsc", *COMMON) == 0
    assert run("reconstruct", d / "p.bin", "--init-scene", d / "i.lgsc", "--iterations", 30,
               "--out", d / "s.lgsc", *COMMON) == 0
    return d


def test_stage_outputs(staged):
    vol = io.load_volume(staged / "ph.vol")
    assert vol.dims == (24, 24, 24)
    stack, geom = io.load_projections(staged / "p.bin")
    assert len(stack) == 8 and (geom.nu, geom.nv) == (32, 32)
    assert len(io.load_scene(staged / "i.lgsc")) == 300
    records = [json.loads(l) for l in (staged / "s.lgsc.metrics.jsonl").read_text().splitlines()]
    assert records[-1]["iter"] == 30
    assert set(records[0]) == {"iter", "loss", "l1", "ssim_term", "M", "psnr_view"}


def test_eval_identical_is_sentinel(staged, capsys):
    assert run("eval", staged / "ph.vol", staged / "ph.vol") == 0
    out = json.loads(capsys.readouterr().out)
    assert out == {"psnr": 99.0, "ssim": 1.0}


def test_eval_scene_against_volume(staged, capsys):
    assert run("eval", staged / "s.lgsc", staged / "ph.vol", "--dims", 24) == 0
    out = json.loads(capsys.readouterr().out)
    assert out["psnr"] < 99.0 and -1.0 <= out["ssim"] <= 1.0


def test_export(staged, tmp_path):
    assert run("export", staged / "f.vol", "--axis", "x", "--out-dir", tmp_path) == 0
    assert len(list(tmp_path.glob("slice_x_*.png"))) == 24


def test_tilt_out_of_range(tmp_path, capsys):
    assert run("pipeline", "--tilt-deg", 91, "--out-dir", tmp_path) == 1
    assert "tilt" in capsys.readouterr().err


def test_unknown_flag(capsys):
    assert run("phantom", "--out", "x.vol", "--bogus", 1) == 1


def test_unknown_set_key(tmp_path, capsys):
    assert run("phantom", "--out", tmp_path / "x.vol", "--set", "train.bogus=1") == 1
    assert "train.bogus" in capsys.readouterr().err


def test_unknown_config_key(tmp_path, capsys):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"af": {"num_pointz": 3}}))
    assert run("phantom", "--out", tmp_path / "x.vol", "--config", cfg) == 1
    assert "af.num_pointz" in capsys.readouterr().err


def test_missing_input_is_runtime_error(tmp_path):
    assert run("fdk", tmp_path / "nope.bin", "--out", tmp_path / "f.vol") == 2
    assert run("eval", tmp_path / "nope.vol", tmp_path / "nope.vol") == 2


def test_config_layering(tmp_path):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"train": {"iterations": 700, "lambda_ssim": 0.5}, "af": {"num_points": 10}}))
    args = build_parser().parse_args(
        ["pipeline", "--config", str(cfg), "--iterations", "900", "--set", "af.num_points=20", "--seed", "5"])
    c = load_config(args)
    assert c["train"]["iterations"] == 900
    assert c["train"]["lambda_ssim"] == 0.5
    assert c["af"]["num_points"] == 20
    assert c["phantom"]["seed"] == c["af"]["rng_seed"] == c["train"]["rng_seed"] == 5
    assert c["geometry"]["tilt_deg"] == DEFAULTS["geometry"]["tilt_deg"]


def test_small_pipeline(tmp_path, capsys):
    assert run("pipeline", "--views", 6, "--iterations", 20, "--points", 200,
               "--out-dir", tmp_path, *SMALL) == 0
    for name in ("phantom.vol", "projections.bin", "fdk.vol", "init.lgsc", "scene.lgsc",
                 "recon.vol", "metrics.jsonl", "timings.jsonl", "report.json"):
        assert (tmp_path / name).exists(), name
    report = json.loads((tmp_path / "report.json").read_text())
    assert report["config"]["simulate"]["views"] == 6
    assert np.isfinite(report["recon"]["psnr"])
