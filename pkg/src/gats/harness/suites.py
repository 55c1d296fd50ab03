"""Experiment runners for the frame-rate invariance and robustness claims."""

from __future__ import annotations

import math

import numpy as np
from scipy import stats

from ..attention import AttentionSpec, attention_logits
from ..temporal import (
    PhiSpec,
    TemporalScale,
    bias_matrix,
    physical_velocity,
    point_velocities,
    relative_velocity,
    scaled_temporal_radius,
)
from ..uggc import euclidean_forward_batch, uggc_forward_batch
from ..video import PointCloudVideo
from .config import Config, ConfigError, gate_from_config, kernel_from_config
from .report import ExperimentReport, Tolerance
from .synthetic import CorruptionSpec, Trajectory, corrupt, make_template, sample_video


def _as_config(config) -> Config:
    if config is None:
        return Config()
    if isinstance(config, Config):
        return config
    return Config.from_dict(config)


def _vec3(cfg: Config, section: str, key: str, default) -> np.ndarray:
    v = cfg.get_floats(section, key, default)
    if len(v) != 3:
        raise ConfigError(f"[{section}] {key}: expected 3 values, got {len(v)}", cfg.line_of(section, key))
    return np.asarray(v)


def _max_spread(arrays) -> float:
    """Largest componentwise (max - min) over all values pooled across arrays."""
    pooled = np.concatenate([a.reshape(-1, 3) for a in arrays], axis=0)
    return float((pooled.max(axis=0) - pooled.min(axis=0)).max())


def _refined_partition(frame_count: int, convention: str) -> int:
    """Frame count whose interval is exactly half of ``frame_count``'s."""
    return 2 * frame_count - 1 if convention == "inclusive" else 2 * frame_count


def run_invariance_suite(config=None) -> ExperimentReport:
    """Frame-partition invariance and discrete-velocity error law.

    Checks: ``linear_velocity`` (normalized velocity equal across frame
    counts), ``quadratic_error`` (error equals a*dt/2), ``sinusoidal_slope``
    (log-log slope of error vs dt), ``bias_invariance`` (bias and attention
    argmax at matched physical separations), ``radius_span`` (physical span
    of the rescaled temporal radius).
    """
    cfg = _as_config(config)
    s = "invariance"
    frame_counts = cfg.get_ints(s, "frame_counts", (5, 10, 20, 40))
    duration = cfg.get_float(s, "segment_duration", 1.0)
    dt_ref = cfg.get_float(s, "dt_ref", 0.1)
    convention = cfg.get_str(s, "dt_convention", "inclusive")
    seed = cfg.get_int(s, "seed", 0)
    n_points = cfg.get_int(s, "template_points", 32)
    velocity = _vec3(cfg, s, "velocity", (1.0, 0.0, 0.0))
    quad_v = _vec3(cfg, s, "quadratic_velocity", (1.0, -0.5, 0.25))
    quad_a = _vec3(cfg, s, "quadratic_acceleration", (0.5, -1.0, 2.0))
    sin_amp = _vec3(cfg, s, "sin_amplitude", (1.0, 0.5, 0.25))
    sin_omega = cfg.get_float(s, "sin_angular_frequency", 2.0 * math.pi)
    sin_phase = cfg.get_float(s, "sin_phase", 0.3)
    eval_time = cfg.get_float(s, "eval_time", 0.25)
    dt_exponents = cfg.get_ints(s, "dt_exponents", tuple(range(3, 10)))
    r_t = cfg.get_float(s, "temporal_radius", 3.0)
    radius_convention = cfg.get_str(s, "radius_convention", "ref_over_dt")
    phi = cfg.wrap(s, "phi", lambda: PhiSpec(cfg.get_str(s, "phi", "linear")))
    heads = cfg.get_int(s, "attention_heads", 2)
    token_dim = cfg.get_int(s, "attention_dim", 8)
    beta = cfg.get_float(s, "beta", 1.0)

    tol_linear = cfg.get_float(s, "linear_tolerance", 1e-12)
    tol_quad = cfg.get_float(s, "quadratic_rel_tolerance", 1e-9)
    slope_lo = cfg.get_float(s, "slope_min", 0.9)
    slope_hi = cfg.get_float(s, "slope_max", 1.1)
    tol_bias = cfg.get_float(s, "bias_rel_tolerance", 1e-15)

    params = {
        "frame_counts": list(frame_counts), "segment_duration": duration, "dt_ref": dt_ref,
        "dt_convention": convention, "seed": seed, "template_points": n_points,
        "velocity": velocity, "quadratic_velocity": quad_v, "quadratic_acceleration": quad_a,
        "sin_amplitude": sin_amp, "sin_angular_frequency": sin_omega, "sin_phase": sin_phase,
        "eval_time": eval_time, "dt_exponents": list(dt_exponents), "temporal_radius": r_t,
        "radius_convention": radius_convention, "phi": phi.form, "beta": beta,
    }
    report = ExperimentReport("invariance", params)
    template = make_template("ball", n_points, seed)
    degenerate_sweep = len(set(frame_counts)) < 2

    # Exact velocity invariance under linear motion.
    linear = Trajectory.constant(velocity, duration)
    per_f = []
    for F in frame_counts:
        video = sample_video(linear, template, F, seed, dt_convention=convention)
        scale = TemporalScale.from_intervals(video.frame_interval, dt_ref)
        vel = point_velocities(video, scale, "index")
        per_f.append(vel)
        report.trials.append({
            "check": "linear_velocity", "frame_count": F, "dt": video.frame_interval, "s": scale.s,
            "max_abs_error_vs_v_dt_ref": float(np.abs(vel - velocity * dt_ref).max()),
        })
    report.aggregates["linear_velocity"] = {
        "max_pairwise_deviation": _max_spread(per_f),
        "max_abs_error_vs_v_dt_ref": max(t["max_abs_error_vs_v_dt_ref"] for t in report.trials),
    }
    report.tolerances.append(Tolerance("linear_velocity", "max_pairwise_deviation", "<", tol_linear))

    # Error law: quadratic (exact a*dt/2) and sinusoidal (slope ~ 1).
    dts = [2.0 ** -e for e in dt_exponents]
    quad = Trajectory.quadratic(quad_v, quad_a, duration)
    sine = Trajectory.sinusoidal(sin_amp, sin_omega, sin_phase, duration)
    quad_rel, sin_err = [], []
    for dt in dts:
        scale = TemporalScale.from_intervals(dt, dt_ref)
        t0 = np.array([eval_time, eval_time + dt])
        for name, traj in (("quadratic_error", quad), ("sinusoidal_slope", sine)):
            x0, x1 = traj.position(t0)
            est = physical_velocity(relative_velocity(x0, x1, 1, scale), scale)
            err = float(np.linalg.norm(est - traj.velocity_at(eval_time)))
            row = {"check": name, "dt": dt, "error": err}
            if traj is quad:
                predicted = 0.5 * float(np.linalg.norm(quad_a)) * dt
                row["predicted"] = predicted
                row["rel_deviation"] = abs(err - predicted) / predicted
                quad_rel.append(row["rel_deviation"])
            else:
                sin_err.append(err)
            report.trials.append(row)
    report.aggregates["quadratic_error"] = {"max_rel_deviation": max(quad_rel) if quad_rel else None}
    report.tolerances.append(Tolerance("quadratic_error", "max_rel_deviation", "<", tol_quad))
    if len(dts) >= 2:
        slope = float(np.polyfit(np.log(dts), np.log(sin_err), 1)[0])
        report.aggregates["sinusoidal_slope"] = {"loglog_slope": slope}
    else:
        report.aggregates["sinusoidal_slope"] = {"loglog_slope": None}
        report.degenerate.append("sinusoidal_slope")
    report.tolerances.append(Tolerance("sinusoidal_slope", "loglog_slope", "in", [slope_lo, slope_hi]))
    if not quad_rel:
        report.degenerate.append("quadratic_error")

    # Bias and argmax invariance across a partition and its halving.
    _bias_check(report, sorted(set(frame_counts)), template, linear, dt_ref, convention, seed,
                phi, heads, token_dim, beta)
    report.tolerances.append(Tolerance("bias_invariance", "max_rel_deviation", "<", tol_bias))
    report.tolerances.append(Tolerance("bias_invariance", "argmax_agreement", "==", 1.0))

    # Physical span covered by the rescaled temporal radius.
    spans = []
    for F in sorted(set(frame_counts)):
        Ff = _refined_partition(F, convention)
        row = {"check": "radius_span", "frame_count": F, "refined_frame_count": Ff}
        for tag, count in (("coarse", F), ("fine", Ff)):
            video_dt = sample_video(linear, template[:1], count, seed, dt_convention=convention).frame_interval
            primary = scaled_temporal_radius(r_t, TemporalScale.from_intervals(video_dt, dt_ref, radius_convention))
            other_conv = "dt_over_ref" if radius_convention == "ref_over_dt" else "ref_over_dt"
            alt = scaled_temporal_radius(r_t, TemporalScale.from_intervals(video_dt, dt_ref, other_conv))
            row[f"{tag}_dt"] = video_dt
            row[f"{tag}_radius_frames"] = primary
            row[f"{tag}_span"] = primary * video_dt
            row[f"{tag}_span_{other_conv}"] = alt * video_dt
        row["span_gap_in_coarse_frames"] = abs(row["coarse_span"] - row["fine_span"]) / row["coarse_dt"]
        row[f"span_gap_in_coarse_frames_{other_conv}"] = (
            abs(row[f"coarse_span_{other_conv}"] - row[f"fine_span_{other_conv}"]) / row["coarse_dt"])
        spans.append(row["span_gap_in_coarse_frames"])
        report.trials.append(row)
    report.aggregates["radius_span"] = {"max_span_gap_in_coarse_frames": max(spans) if spans else None}
    report.tolerances.append(Tolerance("radius_span", "max_span_gap_in_coarse_frames", "<=", 1.0))

    # A single frame count gives nothing to compare across partitions.
    if degenerate_sweep:
        report.degenerate.append("linear_velocity")
    return report


def _bias_check(report, frame_counts, template, traj, dt_ref, convention, seed, phi,
                heads, token_dim, beta):
    spec = AttentionSpec(model_dim=token_dim, head_count=heads, beta=beta, phi=phi)
    rng = np.random.default_rng(seed)
    proj_q = rng.standard_normal((4, token_dim))
    proj_k = rng.standard_normal((4, token_dim))
    anchors = template[: min(4, template.shape[0])]
    devs, agree = [], []
    for F in frame_counts:
        Ff = _refined_partition(F, convention)
        coarse = sample_video(traj, anchors, F, seed, dt_convention=convention)
        fine = sample_video(traj, anchors, Ff, seed, dt_convention=convention)
        sc = TemporalScale.from_intervals(coarse.frame_interval, dt_ref)
        sf = TemporalScale.from_intervals(fine.frame_interval, dt_ref)
        bc = bias_matrix(np.arange(F), np.arange(F), sc, phi)
        matched = np.arange(F) * 2
        bf = bias_matrix(matched, matched, sf, phi)
        dev = float(np.abs(bc - bf).max() / max(1.0, float(np.abs(bc).max())))

        ctoks = _tokens(coarse, proj_q, proj_k)
        ftoks = _tokens(fine, proj_q, proj_k)
        lc = attention_logits(ctoks[0], ctoks[1], spec, sc)
        lf = attention_logits(ftoks[0], ftoks[1], spec, sf)
        n = anchors.shape[0]
        q_rows = (matched[:, None] * n + np.arange(n)[None]).reshape(-1)
        lf = lf[:, q_rows][:, :, q_rows]
        same = float(np.mean(lc.argmax(axis=-1) == lf.argmax(axis=-1)))
        logit_dev = float(np.abs(lc - lf).max())
        devs.append(dev)
        agree.append(same)
        report.trials.append({"check": "bias_invariance", "frame_count": F,
                              "refined_frame_count": Ff, "s_coarse": sc.s, "s_fine": sf.s,
                              "max_rel_deviation": dev, "argmax_agreement": same,
                              "max_logit_deviation": logit_dev})
    report.aggregates["bias_invariance"] = {
        "max_rel_deviation": max(devs) if devs else None,
        "argmax_agreement": min(agree) if agree else None,
    }


def _tokens(video: PointCloudVideo, proj_q, proj_k):
    pos = video.all_positions()
    feats = np.hstack([pos, np.ones((pos.shape[0], 1))])
    m, n = video.num_frames, video.frames[0].count
    return (feats @ proj_q).reshape(m, n, -1), (feats @ proj_k).reshape(m, n, -1)


def _smooth_features(pos: np.ndarray) -> np.ndarray:
    x, y, z = pos.T
    return np.column_stack([np.sin(2 * x), np.cos(3 * y), x * z, y + 0.5 * z])


def _ci95(values) -> tuple:
    v = np.asarray([x for x in values if x is not None], dtype=np.float64)
    if v.size < 2:
        return (None, None)
    half = stats.t.ppf(0.975, v.size - 1) * v.std(ddof=1) / math.sqrt(v.size)
    return (float(v.mean() - half), float(v.mean() + half))


def run_robustness_suite(config=None) -> ExperimentReport:
    """Paired clean/corrupted trials of UGGC statistics and output drift.

    Checks ``condition_increase`` and ``alpha_decrease`` with a one-sided
    sign test across trials. The UGGC/Euclidean drift ratio is reported with
    a 95% confidence interval and has no pass/fail target.
    """
    cfg = _as_config(config)
    s = "robustness"
    n_trials = cfg.get_int(s, "trials", 50)
    n_points = cfg.get_int(s, "points", 1024)
    n_frames = cfg.get_int(s, "frames", 3)
    template_kind = cfg.get_str(s, "template", "ball")
    seed = cfg.get_int(s, "seed", 0)
    noise = cfg.get_float(s, "noise_sigma", 0.02)
    drop = cfg.get_float(s, "drop_fraction", 0.0)
    occ_fraction = cfg.get_float(s, "occlusion_fraction", 0.4)
    temporal_radius = cfg.get_int(s, "temporal_radius", 1)
    speed = cfg.get_float(s, "speed", 0.05)
    alpha_level = cfg.get_float(s, "significance", 0.01)
    kernel = kernel_from_config(cfg)
    gate = gate_from_config(cfg)

    params = {"trials": n_trials, "points": n_points, "frames": n_frames,
              "template": template_kind, "seed": seed, "noise_sigma": noise,
              "drop_fraction": drop, "occlusion_fraction": occ_fraction,
              "temporal_radius": temporal_radius, "speed": speed, "significance": alpha_level,
              "base_radius": kernel.base_radius, "scale_multipliers": list(kernel.scale_multipliers),
              "kernel_form": kernel.kernel_form, "gating_threshold": gate.threshold,
              "gating_sharpness": gate.sharpness}
    report = ExperimentReport("robustness", params)

    cond_diff, alpha_diff, ratios = [], [], []
    for trial in range(n_trials):
        tseed = seed + trial
        rng = np.random.default_rng(tseed)
        template = make_template(template_kind, n_points, tseed)
        direction = rng.standard_normal(3)
        direction /= np.linalg.norm(direction)
        traj = Trajectory.constant(direction * speed, 1.0)
        clean = sample_video(traj, template, n_frames, tseed)
        occlusion = None
        if occ_fraction > 0:
            normal = rng.standard_normal(3)
            normal /= np.linalg.norm(normal)
            occlusion = (normal, float(np.quantile(template @ normal, 1.0 - occ_fraction)))
        spec = CorruptionSpec(noise_sigma=noise, drop_fraction=drop, occlusion_halfspace=occlusion)
        dirty, kept = corrupt(clean, spec, tseed, return_kept=True)

        feats_clean = _smooth_features(clean.all_positions())
        # Features travel with their points, so corruption moves positions only.
        feats_dirty = np.concatenate([feats_clean[clean.offsets[t] + k] for t, k in enumerate(kept)])
        survivors = np.concatenate([clean.offsets[t] + k for t, k in enumerate(kept)])

        ug_c = uggc_forward_batch(clean, feats_clean, kernel, temporal_radius, gate, centers=survivors)
        ug_d = uggc_forward_batch(dirty, feats_dirty, kernel, temporal_radius, gate)
        eu_c = euclidean_forward_batch(clean, feats_clean, kernel, temporal_radius, centers=survivors)
        eu_d = euclidean_forward_batch(dirty, feats_dirty, kernel, temporal_radius)

        drift_u = float(np.linalg.norm(ug_c.features - ug_d.features, axis=1).mean())
        drift_e = float(np.linalg.norm(eu_c - eu_d, axis=1).mean())
        row = {
            "check": "robustness", "trial": trial, "surviving_points": int(survivors.size),
            "mean_cond_clean": float(ug_c.condition_number.mean()),
            "mean_cond_corrupted": float(ug_d.condition_number.mean()),
            "mean_alpha_clean": float(ug_c.alpha.mean()),
            "mean_alpha_corrupted": float(ug_d.alpha.mean()),
            "drift_uggc": drift_u, "drift_euclidean": drift_e,
            "drift_ratio": drift_u / drift_e if drift_e > 0 else None,
        }
        report.trials.append(row)
        cond_diff.append(row["mean_cond_corrupted"] - row["mean_cond_clean"])
        alpha_diff.append(row["mean_alpha_clean"] - row["mean_alpha_corrupted"])
        ratios.append(row["drift_ratio"])

    for name, diffs in (("condition_increase", cond_diff), ("alpha_decrease", alpha_diff)):
        nonzero = [d for d in diffs if d != 0]
        positive = sum(d > 0 for d in nonzero)
        if nonzero:
            p = float(stats.binomtest(positive, len(nonzero), 0.5, alternative="greater").pvalue)
        else:
            p = None
            report.degenerate.append(name)
        report.aggregates[name] = {"positive_trials": positive, "nonzero_trials": len(nonzero),
                                   "mean_difference": float(np.mean(diffs)) if diffs else None,
                                   "sign_test_p": p}
        report.tolerances.append(Tolerance(name, "sign_test_p", "<", alpha_level))

    valid = [r for r in ratios if r is not None]
    lo, hi = _ci95(valid)
    report.aggregates["drift"] = {
        "mean_drift_uggc": float(np.mean([t["drift_uggc"] for t in report.trials])) if report.trials else None,
        "mean_drift_euclidean": float(np.mean([t["drift_euclidean"] for t in report.trials])) if report.trials else None,
        "mean_drift_ratio": float(np.mean(valid)) if valid else None,
        "drift_ratio_ci95_low": lo, "drift_ratio_ci95_high": hi,
        "direction": None if not valid else ("uggc_lower" if np.mean(valid) < 1 else "uggc_higher_or_equal"),
    }
    return report
