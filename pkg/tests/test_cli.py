import json
from pathlib import Path

import numpy as np
import pytest

from gats.cli import main
from gats.io import read_tokens, read_video

DEFAULT_CFG = Path(__file__).resolve().parents[1] / "configs" / "default.cfg"


@pytest.fixture
def small_cfg(tmp_path):
    p = tmp_path / "small.cfg"
    p.write_text("[video]\npoints = 96\nframes = 3\nfeature_dim = 2\n"
                 "[attention]\nmodel_dim = 8\nhead_count = 2\nanchors_per_frame = 16\n"
                 "[robustness]\ntrials = 2\npoints = 128\n"
                 "[invariance]\nframe_counts = 5, 10\n")
    return p


def test_gen_uggc_attn_pipeline(tmp_path, small_cfg):
    video_path = tmp_path / "v.pcv"
    assert main(["gen", "--config", str(small_cfg), "--out", str(video_path)]) == 0
    video = read_video(video_path)
    assert video.num_frames == 3 and video.counts.tolist() == [96, 96, 96]

    tok = tmp_path / "u.tok"
    assert main(["uggc", "--input", str(video_path), "--out", str(tok), "--config", str(small_cfg)]) == 0
    assert read_tokens(tok).shape == (3, 96, 2)

    att = tmp_path / "a.tok"
    assert main(["attn", "--input", str(video_path), "--out", str(att), "--config", str(small_cfg)]) == 0
    first = read_tokens(att)
    assert first.shape == (3, 16, 8)
    assert main(["attn", "--input", str(video_path), "--out", str(att), "--config", str(small_cfg)]) == 0
    np.testing.assert_array_equal(read_tokens(att), first)


def test_gen_binary(tmp_path, small_cfg):
    out = tmp_path / "v.pcvb"
    assert main(["gen", "--config", str(small_cfg), "--out", str(out), "--binary"]) == 0
    assert out.read_bytes()[:4] == b"PCVB"


def test_default_config_file_loads(tmp_path):
    out = tmp_path / "v.pcv"
    assert main(["gen", "--config", str(DEFAULT_CFG), "--out", str(out)]) == 0
    assert read_video(out).counts.tolist() == [2048] * 24


@pytest.mark.parametrize("suite", ["invariance", "robustness"])
def test_verify_writes_report(tmp_path, small_cfg, suite, capsys):
    out = tmp_path / "r.json"
    code = main(["verify", suite, "--config", str(small_cfg), "--out", str(out)])
    data = json.loads(out.read_text())
    assert data["experiment_id"] == suite
    assert code == (1 if data["passed"] is False else 0)
    assert "overall:" in capsys.readouterr().out


@pytest.mark.parametrize("fmt", ["csv", "markdown"])
def test_verify_other_formats(tmp_path, small_cfg, fmt):
    out = tmp_path / "r.out"
    assert main(["verify", "invariance", "--config", str(small_cfg), "--out", str(out), "--format", fmt]) == 0
    assert out.read_text()


def test_gradcheck_command(capsys):
    assert main(["gradcheck", "--instances", "5"]) == 0
    assert capsys.readouterr().out.strip().endswith("PASS")


def test_bad_config_reports_line(tmp_path, capsys):
    bad = tmp_path / "bad.cfg"
    bad.write_text("[video]\npoints = many\n")
    assert main(["gen", "--config", str(bad), "--out", str(tmp_path / "v.pcv")]) == 2
    assert "line 2" in capsys.readouterr().err


def test_bad_value_is_clean_error(tmp_path, capsys):
    bad = tmp_path / "bad.cfg"
    bad.write_text("[video]\npoints = 8\nframes = 1\n")
    assert main(["gen", "--config", str(bad), "--out", str(tmp_path / "v.pcv")]) == 2
    assert "error" in capsys.readouterr().err


def test_missing_input_file(tmp_path, capsys):
    assert main(["uggc", "--input", str(tmp_path / "nope.pcv"), "--out", str(tmp_path / "o.tok")]) == 2


def test_malformed_video(tmp_path, capsys):
    p = tmp_path / "bad.pcv"
    p.write_text("PCV1 1 0.1 0\nFRAME 0 2\n0 0 0\n")
    assert main(["uggc", "--input", str(p), "--out", str(tmp_path / "o.tok")]) == 2
    assert "frame" in capsys.readouterr().err.lower()
