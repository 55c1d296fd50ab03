"""Command-line entry point: ``gats gen | uggc | attn | verify | gradcheck``."""

from __future__ import annotations

import argparse
import logging
import sys

import numpy as np

from .attention import gats_block_forward
from .gaussian import DomainError
from .harness.config import (
    Config,
    ConfigError,
    attention_from_config,
    gate_from_config,
    kernel_from_config,
)
from .harness.gradcheck import attention_gradcheck, weight_gradcheck
from .harness.report import FORMATS, emit_report
from .harness.suites import run_invariance_suite, run_robustness_suite
from .harness.synthetic import CorruptionSpec, Trajectory, corrupt, make_template, sample_video
from .io import ParseError, read_video, write_tokens, write_video
from .temporal import TemporalScale
from .uggc import uggc_forward_batch

log = logging.getLogger("gats")


def _config(path) -> Config:
    return Config.load(path) if path else Config()


def _vec(cfg: Config, section, key, default):
    v = cfg.get_floats(section, key, default)
    if len(v) != 3:
        raise ConfigError(f"[{section}] {key}: expected 3 values", cfg.line_of(section, key))
    return v


def trajectory_from_config(cfg: Config) -> Trajectory:
    s = "video"
    kind = cfg.get_str(s, "trajectory", "constant_velocity")
    return cfg.wrap(s, "trajectory", lambda: Trajectory(
        kind=kind,
        duration=cfg.get_float(s, "duration", 1.0),
        velocity=_vec(cfg, s, "velocity", (0.1, 0.0, 0.0)),
        acceleration=_vec(cfg, s, "acceleration", (0.0, 0.0, 0.0)),
        amplitude=_vec(cfg, s, "amplitude", (0.0, 0.0, 0.0)),
        angular_frequency=cfg.get_float(s, "angular_frequency", 1.0),
        phase=cfg.get_float(s, "phase", 0.0),
    ))


def corruption_from_config(cfg: Config) -> CorruptionSpec:
    s = "corruption"
    occ = None
    if cfg.line_of(s, "occlusion_normal") is not None:
        occ = (_vec(cfg, s, "occlusion_normal", None), cfg.get_float(s, "occlusion_offset", 0.0))
    dens = None
    if cfg.line_of(s, "density_axis") is not None:
        dens = (cfg.get_int(s, "density_axis"), cfg.get_float(s, "density_min_keep", 0.5))
    return cfg.wrap(s, "noise_sigma", lambda: CorruptionSpec(
        noise_sigma=cfg.get_float(s, "noise_sigma", 0.0),
        drop_fraction=cfg.get_float(s, "drop_fraction", 0.0),
        occlusion_halfspace=occ,
        density_gradient=dens,
    ))


def scale_from_config(cfg: Config, frame_interval: float) -> TemporalScale:
    s = "temporal"
    if cfg.line_of(s, "s") is not None:
        return cfg.wrap(s, "s", lambda: TemporalScale.explicit(cfg.get_float(s, "s")))
    dt_ref = cfg.get_float(s, "dt_ref", frame_interval)
    conv = cfg.get_str(s, "convention", "dt_over_ref")
    return cfg.wrap(s, "dt_ref", lambda: TemporalScale.from_intervals(frame_interval, dt_ref, conv))


def cmd_gen(args) -> int:
    cfg = _config(args.config)
    s = "video"
    template = make_template(cfg.get_str(s, "template", "ball"), cfg.get_int(s, "points", 2048),
                             cfg.get_int(s, "seed", 0))
    video = sample_video(trajectory_from_config(cfg), template, cfg.get_int(s, "frames", 24),
                         seed=cfg.get_int(s, "seed", 0),
                         feature_dim=cfg.get_int(s, "feature_dim", 0),
                         dt_convention=cfg.get_str(s, "dt_convention", "inclusive"))
    spec = corruption_from_config(cfg)
    if not spec.is_identity:
        video = corrupt(video, spec, cfg.get_int("corruption", "seed", 0))
    write_video(video, args.out, binary=args.binary)
    log.info("wrote %d frames x %s points to %s", video.num_frames, video.counts.tolist()[:1], args.out)
    return 0


def _grid(video, values: np.ndarray) -> np.ndarray:
    counts = video.counts
    if np.all(counts == counts[0]):
        return values.reshape(video.num_frames, int(counts[0]), -1)
    return values.reshape(1, values.shape[0], -1)


def cmd_uggc(args) -> int:
    cfg = _config(args.config)
    video = read_video(args.input)
    r_t = cfg.get_int("temporal", "temporal_radius", 1)
    batch = uggc_forward_batch(video, None, kernel_from_config(cfg), r_t, gate_from_config(cfg))
    write_tokens(_grid(video, batch.features), args.out)
    log.info("UGGC over %d points; mean alpha %.4f, %d fallbacks", len(batch),
             float(batch.alpha.mean()), int(batch.fallback.sum()))
    return 0


def cmd_attn(args) -> int:
    cfg = _config(args.config)
    video = read_video(args.input)
    tokens = gats_block_forward(
        video, None, kernel_from_config(cfg), gate_from_config(cfg), attention_from_config(cfg),
        scale_from_config(cfg, video.frame_interval),
        temporal_radius=cfg.get_int("temporal", "temporal_radius", 1),
    )
    write_tokens(tokens.tokens, args.out)
    log.info("block output %s written to %s", tokens.shape, args.out)
    return 0


def cmd_verify(args) -> int:
    cfg = _config(args.config)
    runner = run_invariance_suite if args.suite == "invariance" else run_robustness_suite
    report = runner(cfg)
    emit_report(report, args.out, args.format)
    for check, ok in report.check_status().items():
        print(f"{check}: {'PASS' if ok else ('DEGENERATE' if ok is None else 'FAIL')}")
    print(f"overall: {report.passed}")
    return 1 if report.passed is False else 0


def cmd_gradcheck(args) -> int:
    w = weight_gradcheck(args.instances, args.seed)
    a = attention_gradcheck(args.instances, args.seed)
    ok = max(w) < args.tolerance and max(a) < args.tolerance
    print(f"gaussian weight: max relative error {max(w):.3e} over {len(w)} instances")
    print(f"attention dq:    max relative error {max(a):.3e} over {len(a)} instances")
    print("PASS" if ok else "FAIL")
    return 0 if ok else 1


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="gats", description=__doc__)
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen", help="sample (and optionally corrupt) a synthetic video")
    g.add_argument("--config")
    g.add_argument("--out", required=True)
    g.add_argument("--binary", action="store_true", help="write PCVB instead of PCV1 text")
    g.set_defaults(func=cmd_gen)

    u = sub.add_parser("uggc", help="batch UGGC over a video, written as TOK1")
    u.add_argument("--input", required=True)
    u.add_argument("--out", required=True)
    u.add_argument("--config")
    u.set_defaults(func=cmd_uggc)

    a = sub.add_parser("attn", help="GATS block forward over a video, written as TOK1")
    a.add_argument("--input", required=True)
    a.add_argument("--out", required=True)
    a.add_argument("--config")
    a.set_defaults(func=cmd_attn)

    v = sub.add_parser("verify", help="run an experiment suite and write its report")
    v.add_argument("suite", choices=["invariance", "robustness"])
    v.add_argument("--config")
    v.add_argument("--out", required=True)
    v.add_argument("--format", choices=FORMATS, default="json")
    v.set_defaults(func=cmd_verify)

    gc = sub.add_parser("gradcheck", help="finite-difference gradient checks")
    gc.add_argument("--instances", type=int, default=100)
    gc.add_argument("--seed", type=int, default=0)
    gc.add_argument("--tolerance", type=float, default=1e-4)
    gc.set_defaults(func=cmd_gradcheck)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (ConfigError, ParseError, DomainError, OSError) as exc:
        print(f"gats: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
