"""Experiment reports and their JSON / CSV / Markdown serializations.

A report stores its metrics and the tolerances they are judged against;
pass/fail is always recomputed from those two, never stored independently.
"""

from __future__ import annotations

import csv
import io
import json
import math
import os
from dataclasses import dataclass, field
from typing import Any, Optional

import numpy as np

FORMATS = ("json", "csv", "markdown")

_OPS = {
    "<": lambda x, b: x < b,
    "<=": lambda x, b: x <= b,
    ">": lambda x, b: x > b,
    ">=": lambda x, b: x >= b,
    "==": lambda x, b: x == b,
    "in": lambda x, b: b[0] <= x <= b[1],
}


def _plain(value):
    """Convert numpy scalars/arrays to JSON-safe Python values."""
    if isinstance(value, dict):
        return {str(k): _plain(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_plain(v) for v in value]
    if isinstance(value, np.ndarray):
        return _plain(value.tolist())
    if isinstance(value, (np.bool_, bool)):
        return bool(value)
    if isinstance(value, np.integer):
        return int(value)
    if isinstance(value, (np.floating, float)):
        v = float(value)
        return v if math.isfinite(v) else None
    return value


@dataclass
class Tolerance:
    check: str
    metric: str
    op: str
    bound: Any

    def __post_init__(self):
        if self.op not in _OPS:
            raise ValueError(f"unknown comparison {self.op!r}")


@dataclass
class ExperimentReport:
    experiment_id: str
    parameters: dict = field(default_factory=dict)
    trials: list[dict] = field(default_factory=list)
    aggregates: dict[str, dict] = field(default_factory=dict)
    tolerances: list[Tolerance] = field(default_factory=list)
    degenerate: list[str] = field(default_factory=list)

    def check_status(self) -> dict[str, Optional[bool]]:
        """Per-check verdict; ``None`` for degenerate checks."""
        status: dict[str, Optional[bool]] = {}
        for tol in self.tolerances:
            if tol.check in self.degenerate:
                status[tol.check] = None
                continue
            value = self.aggregates.get(tol.check, {}).get(tol.metric)
            ok = value is not None and bool(_OPS[tol.op](value, tol.bound))
            status[tol.check] = ok and status.get(tol.check, True)
        for name in self.degenerate:
            status.setdefault(name, None)
        return status

    @property
    def passed(self) -> Optional[bool]:
        verdicts = [v for v in self.check_status().values() if v is not None]
        return None if not verdicts else all(verdicts)

    def to_dict(self) -> dict:
        return _plain({
            "experiment_id": self.experiment_id,
            "parameters": self.parameters,
            "trials": self.trials,
            "aggregates": self.aggregates,
            "tolerances": [
                {"check": t.check, "metric": t.metric, "op": t.op, "bound": t.bound}
                for t in self.tolerances
            ],
            "degenerate": list(self.degenerate),
            "checks": self.check_status(),
            "passed": self.passed,
        })

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentReport":
        return cls(
            experiment_id=data["experiment_id"],
            parameters=data.get("parameters", {}),
            trials=data.get("trials", []),
            aggregates=data.get("aggregates", {}),
            tolerances=[Tolerance(**t) for t in data.get("tolerances", [])],
            degenerate=data.get("degenerate", []),
        )


def to_json(report: ExperimentReport) -> str:
    return json.dumps(report.to_dict(), sort_keys=True, indent=2, allow_nan=False) + "\n"


def to_csv(report: ExperimentReport) -> str:
    rows = [_plain(t) for t in report.trials]
    keys = sorted({k for r in rows for k in r} - {"check", "trial"})
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["experiment_id", "check", "trial", *keys])
    for i, r in enumerate(rows):
        writer.writerow([report.experiment_id, r.get("check", ""), r.get("trial", i),
                         *[_cell(r.get(k)) for k in keys]])
    return buf.getvalue()


def _cell(v):
    if v is None:
        return ""
    if isinstance(v, float):
        return repr(v)
    if isinstance(v, list):
        return " ".join(str(_cell(x)) for x in v)
    return v


def to_markdown(report: ExperimentReport) -> str:
    verdict = {True: "PASS", False: "FAIL", None: "DEGENERATE"}
    out = [f"# Experiment `{report.experiment_id}`", "",
           f"Overall: **{verdict[report.passed]}**", "",
           "| check | metric | value | requirement | verdict |",
           "|---|---|---|---|---|"]
    status = report.check_status()
    for tol in report.tolerances:
        value = report.aggregates.get(tol.check, {}).get(tol.metric)
        out.append(f"| {tol.check} | {tol.metric} | {_cell(_plain(value))} | "
                   f"{tol.op} {tol.bound} | {verdict[status.get(tol.check)]} |")
    out += ["", "## Aggregates", ""]
    for check in sorted(report.aggregates):
        out.append(f"- **{check}**: " + ", ".join(
            f"{k}={_cell(_plain(v))}" for k, v in sorted(report.aggregates[check].items())))
    out += ["", f"Trials recorded: {len(report.trials)}", ""]
    return "\n".join(out)


def emit_report(report: ExperimentReport, path: str | os.PathLike, fmt: str = "json") -> None:
    if fmt not in FORMATS:
        raise ValueError(f"unknown report format {fmt!r}")
    text = {"json": to_json, "csv": to_csv, "markdown": to_markdown}[fmt](report)
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(text)


def read_report(path: str | os.PathLike) -> ExperimentReport:
    with open(path, encoding="utf-8") as fh:
        return ExperimentReport.from_dict(json.load(fh))
