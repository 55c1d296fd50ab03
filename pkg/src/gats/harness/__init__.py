"""Synthetic data and experiment suites for verifying the operators."""

from .config import Config, ConfigError
from .report import ExperimentReport, Tolerance, emit_report, read_report
from .suites import run_invariance_suite, run_robustness_suite
from .synthetic import CorruptionSpec, Trajectory, corrupt, make_template, sample_video
