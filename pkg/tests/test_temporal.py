import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from gats.gaussian import DomainError
from gats.harness.synthetic import Trajectory, make_template, sample_video
from gats.temporal import (
    PhiSpec,
    TemporalScale,
    bias_matrix,
    physical_velocity,
    point_velocities,
    relative_velocity,
    scale_from_fps,
    scale_from_frame_count,
    scaled_temporal_radius,
    temporal_bias,
)


def test_frame_count_examples():
    assert scale_from_frame_count(1.0, 30, 1 / 30).s == pytest.approx(1.0, abs=1e-15)
    assert scale_from_frame_count(1.0, 60, 1 / 30).s == pytest.approx(0.5, abs=1e-15)
    with pytest.raises(DomainError):
        scale_from_frame_count(1.0, 0, 1 / 30)


def test_frame_count_product_constant():
    c = 1.0 / (1 / 30)
    for f in (6, 12, 24, 48):
        sc = scale_from_frame_count(1.0, f, 1 / 30)
        assert sc.s * f == pytest.approx(c, rel=1e-12)
        assert sc.s == pytest.approx(sc.dt / sc.dt_ref, rel=1e-12)
        assert sc.provenance == "from_frame_count"


def test_fps_examples():
    dt_ref = 0.04
    assert scale_from_fps(1 / dt_ref, dt_ref).s == pytest.approx(1.0, rel=1e-15)
    assert scale_from_fps(60, dt_ref).s == pytest.approx(scale_from_fps(30, dt_ref).s / 2, rel=1e-15)
    products = [scale_from_fps(f, dt_ref).s * f for f in (10, 30, 60, 120)]
    np.testing.assert_allclose(products, products[0], rtol=1e-14)


def test_inverse_convention_flag():
    sc = scale_from_frame_count(1.0, 20, 0.1, convention="ref_over_dt")
    assert sc.s == pytest.approx(0.1 / 0.05)


def test_static_point_zero_velocity():
    est = relative_velocity([1, 2, 3], [1, 2, 3], 1, TemporalScale(0.7))
    np.testing.assert_array_equal(est.raw, 0)
    np.testing.assert_array_equal(est.normalized, 0)


def test_unit_scale_velocity():
    est = relative_velocity([0, 0, 0], [1, 2, 3], 1, TemporalScale(1.0))
    np.testing.assert_array_equal(est.normalized, [1, 2, 3])
    est = relative_velocity([0, 0, 0], [2, 4, 6], 2, TemporalScale(0.5))
    np.testing.assert_array_equal(est.raw, [1, 2, 3])
    np.testing.assert_array_equal(est.normalized, est.raw / (0.5))


def test_velocity_errors():
    with pytest.raises(DomainError):
        relative_velocity([0, 0, 0], [1, 0, 0], 0, TemporalScale(1.0))
    with pytest.raises(DomainError):
        relative_velocity([0, np.inf, 0], [1, 0, 0], 1, TemporalScale(1.0))


def test_linear_trajectory_velocity_invariant_across_frame_counts():
    dt_ref = 0.1
    v = np.array([1.0, 0.0, 0.0])
    traj = Trajectory.constant(v, 1.0)
    template = make_template("ball", 16, 0)
    results = []
    for F in (5, 10, 20, 40):
        video = sample_video(traj, template, F)
        scale = TemporalScale.from_intervals(video.frame_interval, dt_ref)
        results.append(point_velocities(video, scale, "index"))
    for r in results:
        np.testing.assert_allclose(r, np.tile(v * dt_ref, (r.shape[0], 1)), rtol=0, atol=1e-14)


def test_quadratic_error_is_half_a_dt():
    a = np.array([0.5, -1.0, 2.0])
    traj = Trajectory.quadratic([1, 0, 0], a)
    for e in range(3, 10):
        dt = 2.0 ** -e
        sc = TemporalScale.from_intervals(dt, 0.1)
        x0, x1 = traj.position(np.array([0.2, 0.2 + dt]))
        err = np.linalg.norm(physical_velocity(relative_velocity(x0, x1, 1, sc), sc) - traj.velocity_at(0.2))
        assert err == pytest.approx(0.5 * np.linalg.norm(a) * dt, rel=1e-9)


def test_physical_velocity_both_conventions():
    traj = Trajectory.constant([0.4, 0, 0])
    for conv in ("dt_over_ref", "ref_over_dt"):
        sc = TemporalScale.from_intervals(0.05, 0.1, conv)
        x0, x1 = traj.position(np.array([0.0, 0.05]))
        np.testing.assert_allclose(physical_velocity(relative_velocity(x0, x1, 1, sc), sc), [0.4, 0, 0])


def test_scaled_radius_examples():
    assert scaled_temporal_radius(3, TemporalScale(1.0)) == 3
    assert scaled_temporal_radius(3, TemporalScale(0.3)) == 1
    assert scaled_temporal_radius(3, TemporalScale(0.05)) == 1
    assert scaled_temporal_radius(2, TemporalScale(1.25)) == 3  # 2.5 rounds half-up


def test_scaled_radius_physical_span_consistency():
    # r_t counted in reference intervals needs s = dt_ref / dt to map to frames.
    r_t, dt_ref = 3, 0.1
    for F in (5, 10, 20, 40):
        dt_c = 1.0 / (F - 1)
        dt_f = dt_c / 2
        rc = scaled_temporal_radius(r_t, TemporalScale.from_intervals(dt_c, dt_ref, "ref_over_dt"))
        rf = scaled_temporal_radius(r_t, TemporalScale.from_intervals(dt_f, dt_ref, "ref_over_dt"))
        assert abs(rc * dt_c - rf * dt_f) <= dt_c


def test_bias_examples():
    for form in ("linear", "log"):
        assert temporal_bias(0, TemporalScale(0.7), PhiSpec(form)) == 0.0
    assert temporal_bias(4, TemporalScale(0.5)) == -2.0
    assert temporal_bias(4, TemporalScale(0.5), PhiSpec("log")) == pytest.approx(-math.log(3.0))


def test_bias_cross_rate_equality():
    for d1 in range(0, 20):
        for s1 in (0.1, 0.25, 0.3, 1 / 3, 0.7):
            s2, d2 = s1 / 2, 2 * d1
            for form in ("linear", "log"):
                assert temporal_bias(d1, TemporalScale(s1), PhiSpec(form)) == \
                    temporal_bias(d2, TemporalScale(s2), PhiSpec(form))


def test_bias_matrix_symmetric_zero_diagonal():
    b = bias_matrix(np.arange(5), np.arange(5), TemporalScale(0.3))
    np.testing.assert_array_equal(b, b.T)
    np.testing.assert_array_equal(np.diag(b), 0)


def test_scale_rejects_nonpositive():
    with pytest.raises(DomainError):
        TemporalScale(0.0)
    with pytest.raises(DomainError):
        scale_from_fps(-1, 0.1)


def test_frame_count_law_over_wide_range():
    c = 2.5 / 0.01
    fs = np.arange(1, 10_001)
    s = np.array([scale_from_frame_count(2.5, int(f), 0.01).s for f in fs])
    assert np.max(np.abs(s * fs - c)) / c < 1e-12
    assert np.all(np.diff(s) < 0)


@settings(max_examples=100, deadline=None)
@given(s=st.floats(1e-3, 1e3), d1=st.integers(0, 10_000), d2=st.integers(0, 10_000),
       form=st.sampled_from(["linear", "log"]))
def test_property_bias_non_increasing(s, d1, d2, form):
    lo, hi = sorted((d1, d2))
    sc = TemporalScale(s)
    assert temporal_bias(hi, sc, PhiSpec(form)) <= temporal_bias(lo, sc, PhiSpec(form))


@settings(max_examples=50, deadline=None)
@given(v=st.lists(st.floats(-5, 5), min_size=3, max_size=3), f1=st.integers(2, 60),
       f2=st.integers(2, 60))
def test_property_partition_invariance_linear(v, f1, f2):
    traj = Trajectory.constant(v, 1.0)
    template = make_template("ball", 4, 1)
    out = []
    for F in (f1, f2):
        video = sample_video(traj, template, F)
        out.append(point_velocities(video, TemporalScale.from_intervals(video.frame_interval, 0.1)))
    np.testing.assert_allclose(out[0][:4], out[1][:4], rtol=0, atol=1e-12)
