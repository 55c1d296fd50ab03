"""Flat key-value config files with bracketed section headers.

::

    # comment
    [kernel]
    base_radius = 0.3
    scale_multipliers = 0.5, 1, 3

Values are parsed on access; every error names the offending line. A small
hand-rolled parser is used instead of configparser so that type errors can
still point at a line number.
"""

from __future__ import annotations

import math
import os
import re
from dataclasses import dataclass, field
from typing import Any, Optional

from ..attention import AttentionSpec
from ..gaussian import GatingConfig
from ..temporal import PhiSpec
from ..uggc import KernelSpec


class ConfigError(ValueError):
    def __init__(self, message: str, line: Optional[int] = None):
        super().__init__(f"line {line}: {message}" if line is not None else message)
        self.line = line


_MISSING = object()


@dataclass
class Config:
    sections: dict[str, dict[str, tuple[str, int]]] = field(default_factory=dict)

    @classmethod
    def parse(cls, text: str) -> "Config":
        sections: dict[str, dict[str, tuple[str, int]]] = {}
        current = None
        for lineno, raw in enumerate(text.splitlines(), start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if line.startswith("["):
                if not line.endswith("]") or len(line) < 3:
                    raise ConfigError(f"malformed section header {raw.strip()!r}", lineno)
                current = line[1:-1].strip()
                sections.setdefault(current, {})
                continue
            if "=" not in line:
                raise ConfigError(f"expected 'key = value', got {raw.strip()!r}", lineno)
            if current is None:
                raise ConfigError("key outside of any [section]", lineno)
            key, value = (s.strip() for s in line.split("=", 1))
            if not key:
                raise ConfigError("empty key", lineno)
            if key in sections[current]:
                raise ConfigError(f"duplicate key {key!r} in [{current}]", lineno)
            sections[current][key] = (value, lineno)
        return cls(sections)

    @classmethod
    def load(cls, path: str | os.PathLike) -> "Config":
        with open(path, encoding="utf-8") as fh:
            return cls.parse(fh.read())

    @classmethod
    def from_dict(cls, data: dict[str, dict[str, Any]]) -> "Config":
        def fmt(v):
            if isinstance(v, (list, tuple)):
                return ", ".join(str(x) for x in v)
            return str(v)

        return cls({s: {k: (fmt(v), 0) for k, v in kv.items()} for s, kv in data.items()})

    def _raw(self, section: str, key: str):
        return self.sections.get(section, {}).get(key)

    def _get(self, section, key, default, conv, kind):
        entry = self._raw(section, key)
        if entry is None:
            if default is _MISSING:
                raise ConfigError(f"missing required key [{section}] {key}")
            return default
        value, line = entry
        try:
            return conv(value)
        except (ValueError, TypeError):
            raise ConfigError(f"[{section}] {key}: expected {kind}, got {value!r}", line or None) from None

    def get_str(self, section, key, default=_MISSING) -> str:
        return self._get(section, key, default, str, "a string")

    def get_int(self, section, key, default=_MISSING) -> int:
        return self._get(section, key, default, int, "an integer")

    def get_float(self, section, key, default=_MISSING) -> float:
        def conv(v):
            x = float(v)
            if not math.isfinite(x):
                raise ValueError
            return x
        return self._get(section, key, default, conv, "a finite number")

    def get_bool(self, section, key, default=_MISSING) -> bool:
        def conv(v):
            low = v.lower()
            if low in ("1", "true", "yes", "on"):
                return True
            if low in ("0", "false", "no", "off"):
                return False
            raise ValueError
        return self._get(section, key, default, conv, "a boolean")

    def get_floats(self, section, key, default=_MISSING) -> tuple[float, ...]:
        return self._get(section, key, default,
                         lambda v: tuple(float(x) for x in v.split(",") if x.strip()),
                         "a comma-separated list of numbers")

    def get_ints(self, section, key, default=_MISSING) -> tuple[int, ...]:
        return self._get(section, key, default,
                         lambda v: tuple(int(x) for x in v.split(",") if x.strip()),
                         "a comma-separated list of integers")

    def get_optional_int(self, section, key, default=None) -> Optional[int]:
        def conv(v):
            return None if v.lower() in ("none", "all", "") else int(v)
        return self._get(section, key, default, conv, "an integer or 'none'")

    def line_of(self, section, key) -> Optional[int]:
        entry = self._raw(section, key)
        return entry[1] if entry else None

    def wrap(self, section, key, fn):
        """Call ``fn`` and re-raise its ValueError as a ConfigError.

        The error is pinned to whichever key of ``section`` the message names,
        falling back to ``key``.
        """
        try:
            return fn()
        except ConfigError:
            raise
        except ValueError as exc:
            msg = str(exc)
            named = [k for k in self.sections.get(section, {})
                     if re.search(rf"\b{re.escape(k)}\b", msg)]
            if named:
                key = max(named, key=len)
            raise ConfigError(f"[{section}] {key}: {msg}", self.line_of(section, key)) from None


def kernel_from_config(cfg: Config) -> KernelSpec:
    s = "kernel"
    return cfg.wrap(s, "scale_multipliers", lambda: KernelSpec(
        base_radius=cfg.get_float(s, "base_radius", 0.3),
        scale_multipliers=cfg.get_floats(s, "scale_multipliers", (0.5, 1.0, 3.0)),
        kernel_form=cfg.get_str(s, "kernel_form", "gaussian_rbf"),
        fusion=cfg.get_str(s, "fusion", "gated"),
    ))


def gate_from_config(cfg: Config) -> GatingConfig:
    s = "gating"
    return cfg.wrap(s, "sharpness", lambda: GatingConfig(
        threshold=cfg.get_float(s, "threshold", math.log(100.0)),
        sharpness=cfg.get_float(s, "sharpness", 1.0),
        epsilon_reg=cfg.get_float(s, "epsilon_reg", 1e-6),
        floor=cfg.get_float(s, "floor", 1e-9),
    ))


def attention_from_config(cfg: Config) -> AttentionSpec:
    s = "attention"
    return cfg.wrap(s, "model_dim", lambda: AttentionSpec(
        model_dim=cfg.get_int(s, "model_dim", 32),
        head_count=cfg.get_int(s, "head_count", 4),
        beta=cfg.get_floats(s, "beta", (1.0,)),
        phi=PhiSpec(cfg.get_str(s, "phi", "linear")),
        fusion_rule=cfg.get_str(s, "fusion_rule", "sum"),
        seed=cfg.get_int(s, "seed", 0),
        ffn_multiplier=cfg.get_int(s, "ffn_multiplier", 2),
        anchors_per_frame=cfg.get_optional_int(s, "anchors_per_frame", 64),
        rescale_temporal_radius=cfg.get_bool(s, "rescale_temporal_radius", False),
    ))
