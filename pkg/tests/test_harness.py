import json
import math

import numpy as np
import pytest

from gats.gaussian import DomainError
from gats.harness import (
    Config,
    ConfigError,
    CorruptionSpec,
    ExperimentReport,
    Tolerance,
    Trajectory,
    corrupt,
    emit_report,
    make_template,
    read_report,
    run_invariance_suite,
    run_robustness_suite,
    sample_video,
)
from gats.harness.config import attention_from_config, kernel_from_config
from gats.harness.report import to_csv, to_json, to_markdown
from gats.video import Frame, PointCloudVideo


# Synthetic data

def test_static_trajectory_frames_identical():
    video = sample_video(Trajectory.constant([0, 0, 0]), make_template("ball", 50, 0), 5)
    for f in video.frames[1:]:
        np.testing.assert_array_equal(f.positions, video.frames[0].positions)


def test_two_frames_hit_the_endpoints():
    traj = Trajectory.constant([1.0, 2.0, 3.0], duration=2.0)
    template = make_template("ball", 10, 1)
    video = sample_video(traj, template, 2)
    np.testing.assert_allclose(video.frames[0].positions, template, atol=1e-15)
    np.testing.assert_allclose(video.frames[1].positions, template + [2.0, 4.0, 6.0], atol=1e-15)


@pytest.mark.parametrize("kind", ["constant", "quadratic", "sinusoidal"])
def test_centroid_follows_trajectory(kind):
    traj = {
        "constant": Trajectory.constant([0.3, -0.2, 0.1]),
        "quadratic": Trajectory.quadratic([0.3, 0, 0], [1.0, -2.0, 0.5]),
        "sinusoidal": Trajectory.sinusoidal([0.5, 0.2, 0.1], 3.0, 0.4),
    }[kind]
    template = make_template("blob", 200, 2)
    template = template - template.mean(axis=0)
    video = sample_video(traj, template, 7)
    for t, f in enumerate(video.frames):
        np.testing.assert_allclose(f.positions.mean(axis=0), traj.position(t * video.frame_interval),
                                   atol=1e-12)


@pytest.mark.parametrize("convention, expected", [("inclusive", 1.0), ("exclusive", 0.9)])
def test_frame_interval_conventions(convention, expected):
    video = sample_video(Trajectory.constant([1, 0, 0]), make_template("ball", 4, 0), 10,
                         dt_convention=convention)
    assert video.frame_interval * 9 == pytest.approx(expected, rel=1e-15)


@pytest.mark.parametrize("kind", ["ball", "sphere", "plane", "blob"])
def test_templates_fit_unit_radius(kind):
    t = make_template(kind, 300, 3)
    assert t.shape == (300, 3)
    assert np.linalg.norm(t, axis=1).max() <= 1.0 + 1e-12
    np.testing.assert_array_equal(t, make_template(kind, 300, 3))


def test_sampling_rejects_bad_input():
    with pytest.raises(DomainError):
        sample_video(Trajectory.constant([1, 0, 0]), make_template("ball", 4, 0), 1)
    with pytest.raises(DomainError):
        make_template("torus", 4)


# Corruption

def test_zero_corruption_is_identity():
    video = sample_video(Trajectory.constant([0.1, 0, 0]), make_template("ball", 100, 0), 3, feature_dim=2)
    spec = CorruptionSpec()
    assert spec.is_identity
    assert corrupt(video, spec, seed=4).equals(video)


def test_drop_fraction_count_within_binomial_bounds():
    video = PointCloudVideo([Frame(make_template("ball", 1000, 0))], 0.1)
    out = corrupt(video, CorruptionSpec(drop_fraction=0.5), seed=1)
    kept = out.frames[0].count
    assert abs(kept - 500) <= 4 * math.sqrt(1000 * 0.25)


def test_noise_mean_displacement_within_bounds():
    pts = make_template("ball", 4000, 0)
    video = PointCloudVideo([Frame(pts)], 0.1)
    sigma = 0.05
    out = corrupt(video, CorruptionSpec(noise_sigma=sigma), seed=2)
    disp = out.frames[0].positions - pts
    assert np.all(np.abs(disp.mean(axis=0)) < 4 * sigma / math.sqrt(pts.shape[0]))
    assert disp.std() == pytest.approx(sigma, rel=0.05)


def test_occlusion_removes_halfspace():
    video = PointCloudVideo([Frame(make_template("ball", 500, 0))], 0.1)
    out, kept = corrupt(video, CorruptionSpec(occlusion_halfspace=([1.0, 0, 0], 0.0)), return_kept=True)
    assert np.all(out.frames[0].positions[:, 0] <= 0)
    np.testing.assert_array_equal(out.frames[0].positions, video.frames[0].positions[kept[0]])


def test_density_gradient_thins_high_end():
    video = PointCloudVideo([Frame(make_template("ball", 4000, 1))], 0.1)
    out = corrupt(video, CorruptionSpec(density_gradient=(0, 0.1)), seed=3)
    x0, x1 = video.frames[0].positions[:, 0], out.frames[0].positions[:, 0]
    ratio_hi = (x1 > 0.5).sum() / (x0 > 0.5).sum()
    ratio_lo = (x1 < -0.5).sum() / (x0 < -0.5).sum()
    assert ratio_hi < ratio_lo


def test_corruption_emptying_a_frame_is_an_error():
    video = PointCloudVideo([Frame(make_template("ball", 50, 0))], 0.1)
    with pytest.raises(DomainError):
        corrupt(video, CorruptionSpec(occlusion_halfspace=([1.0, 0, 0], -5.0)))


def test_corruption_spec_validation():
    with pytest.raises(DomainError):
        CorruptionSpec(noise_sigma=-1)
    with pytest.raises(DomainError):
        CorruptionSpec(drop_fraction=1.0)


# Config

def test_config_parse_and_getters():
    cfg = Config.parse("# comment\n[kernel]\nbase_radius = 0.25\nscale_multipliers = 0.5, 1, 2\n"
                       "[attention]\nhead_count = 2\nmodel_dim = 8\nbeta = 0.5, 1.0\n")
    k = kernel_from_config(cfg)
    assert k.base_radius == 0.25 and k.scale_multipliers == (0.5, 1.0, 2.0)
    a = attention_from_config(cfg)
    np.testing.assert_array_equal(a.betas, [0.5, 1.0])


@pytest.mark.parametrize("text, line", [
    ("[kernel]\nbase_radius = 0.3\nbase_radius = 0.4\n", 3),
    ("[kernel\n", 1),
    ("key = 1\n", 1),
    ("[kernel]\n\nnot a pair\n", 3),
])
def test_config_syntax_errors_have_lines(text, line):
    with pytest.raises(ConfigError) as err:
        Config.parse(text)
    assert err.value.line == line
    assert f"line {line}" in str(err.value)


def test_config_value_errors_have_lines():
    cfg = Config.parse("[kernel]\n\nbase_radius = wide\n")
    with pytest.raises(ConfigError) as err:
        kernel_from_config(cfg)
    assert err.value.line == 3
    cfg = Config.parse("[kernel]\nbase_radius = -1\n")
    with pytest.raises(ConfigError) as err:
        kernel_from_config(cfg)
    assert err.value.line == 2


# Reports

def test_empty_report_is_valid():
    r = ExperimentReport("empty")
    assert r.passed is None
    d = json.loads(to_json(r))
    assert d["trials"] == [] and d["passed"] is None
    assert to_csv(r).count("\n") == 1
    assert "DEGENERATE" in to_markdown(r)


def test_verdict_recomputed_from_aggregates():
    r = ExperimentReport("x", aggregates={"a": {"m": 0.5}}, tolerances=[Tolerance("a", "m", "<", 1.0)])
    assert r.passed is True
    r.aggregates["a"]["m"] = 2.0
    assert r.passed is False
    r.degenerate.append("a")
    assert r.passed is None


def test_json_round_trip_byte_identical(tmp_path):
    report = run_invariance_suite({"invariance": {"frame_counts": "5, 10", "dt_exponents": "3, 4, 5"}})
    p1, p2 = tmp_path / "a.json", tmp_path / "b.json"
    emit_report(report, p1)
    emit_report(read_report(p1), p2)
    assert p1.read_bytes() == p2.read_bytes()


def test_csv_has_one_row_per_trial(tmp_path):
    report = run_invariance_suite({"invariance": {"frame_counts": "5, 10", "dt_exponents": "3, 4, 5"}})
    path = tmp_path / "r.csv"
    emit_report(report, path, "csv")
    assert len(path.read_text().splitlines()) == len(report.trials) + 1


def test_reports_are_deterministic():
    cfg = {"invariance": {"frame_counts": "5, 10", "dt_exponents": "3, 4, 5"}}
    assert to_json(run_invariance_suite(cfg)) == to_json(run_invariance_suite(cfg))
    rob = {"robustness": {"trials": 2, "points": 128}}
    assert to_json(run_robustness_suite(rob)) == to_json(run_robustness_suite(rob))


def test_unknown_format_rejected(tmp_path):
    with pytest.raises(ValueError):
        emit_report(ExperimentReport("x"), tmp_path / "r", "yaml")


# Suites

def test_invariance_suite_passes_at_defaults():
    report = run_invariance_suite()
    assert report.check_status() == {
        "linear_velocity": True, "quadratic_error": True, "sinusoidal_slope": True,
        "bias_invariance": True, "radius_span": True,
    }


def test_single_frame_count_is_degenerate_for_velocity():
    report = run_invariance_suite({"invariance": {"frame_counts": "10"}})
    status = report.check_status()
    assert status["linear_velocity"] is None
    assert status["quadratic_error"] is True


def test_no_corruption_means_zero_drift():
    report = run_robustness_suite({"robustness": {"trials": 2, "points": 128, "noise_sigma": 0,
                                                  "occlusion_fraction": 0}})
    for t in report.trials:
        assert t["drift_uggc"] == 0.0 and t["drift_euclidean"] == 0.0
    assert {"condition_increase", "alpha_decrease"} <= set(report.degenerate)
    assert report.passed is None
