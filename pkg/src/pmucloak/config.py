"""Flat key=value configuration files for the CLI commands.

Example:

    # experiment settings
    corpus = corpus.flog
    regex = ^[0-9a-f]+$
    fixed_slice = 512
    bins = 2
    window = 1
    alpha = 0.05
    confidence = 0.95
    thresholds = 0,0.1,0.2,0.3,0.4,0.5,0.6,0.7,0.8,0.9,1
    seeds = 0
    flow_count = 20
    flow_length = 5000

'#' starts a comment, blank lines are ignored, every key is optional and
falls back to the default shown in docs/config.md. Unknown and repeated
keys are rejected so typos fail loudly.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, fields

from .errors import ConfigError

_DEFAULT_THRESHOLDS = tuple(round(0.1 * i, 1) for i in range(11))


@dataclass(frozen=True)
class ExperimentConfig:
    corpus: str = "corpus.flog"
    regex: str = "^[0-9a-f]+$"
    fixed_slice: int = 512
    bins: int = 2
    window: int = 1
    alpha: float = 0.05
    confidence: float = 0.95
    thresholds: tuple[float, ...] = _DEFAULT_THRESHOLDS
    seeds: tuple[int, ...] = (0,)
    flow_count: int = 20
    flow_length: int = 5000

    def __post_init__(self):
        if not self.corpus:
            raise ConfigError("corpus path must not be empty")
        if not self.regex:
            raise ConfigError("regex must not be empty")
        if self.fixed_slice < 1:
            raise ConfigError("fixed_slice must be >= 1")
        if not 2 <= self.bins <= 26:
            raise ConfigError("bins must be between 2 and 26")
        if self.window < 1:
            raise ConfigError("window must be >= 1")
        if not 0.0 < self.alpha < 1.0:
            raise ConfigError("alpha must be inside (0, 1)")
        if not 0.0 < self.confidence < 1.0:
            raise ConfigError("confidence must be inside (0, 1)")
        if not self.thresholds:
            raise ConfigError("thresholds must not be empty")
        for t in self.thresholds:
            if not (math.isfinite(t) and 0.0 <= t <= 1.0):
                raise ConfigError(f"threshold {t!r} outside [0, 1]")
        if list(self.thresholds) != sorted(set(self.thresholds)):
            raise ConfigError("thresholds must be strictly increasing")
        if not self.seeds:
            raise ConfigError("seeds must not be empty")
        for s in self.seeds:
            if s < 0:
                raise ConfigError("seeds must be >= 0")
        if self.flow_count < 0:
            raise ConfigError("flow_count must be >= 0")
        if self.flow_length < 2:
            raise ConfigError("flow_length must be >= 2")


# -- parsing --------------------------------------------------------------------

def _parse_int(key: str, text: str) -> int:
    try:
        return int(text)
    except ValueError:
        raise ConfigError(f"{key}: expected an integer, got {text!r}") from None


def _parse_float(key: str, text: str) -> float:
    try:
        return float(text)
    except ValueError:
        raise ConfigError(f"{key}: expected a number, got {text!r}") from None


def _parse_list(key: str, text: str, item):
    parts = [p.strip() for p in text.split(",") if p.strip()]
    return tuple(item(key, p) for p in parts)


_PARSERS = {
    "corpus": lambda k, v: v,
    "regex": lambda k, v: v,
    "fixed_slice": _parse_int,
    "bins": _parse_int,
    "window": _parse_int,
    "alpha": _parse_float,
    "confidence": _parse_float,
    "thresholds": lambda k, v: _parse_list(k, v, _parse_float),
    "seeds": lambda k, v: _parse_list(k, v, _parse_int),
    "flow_count": _parse_int,
    "flow_length": _parse_int,
}

assert set(_PARSERS) == {f.name for f in fields(ExperimentConfig)}


def parse_config(text: str) -> ExperimentConfig:
    """Parse key=value text; unknown/duplicate keys and bad values raise ConfigError."""
    seen: dict[str, object] = {}
    for i, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {i}: expected 'key = value', got {line!r}")
        key, _, value = line.partition("=")
        key, value = key.strip(), value.strip()
        if key not in _PARSERS:
            raise ConfigError(f"line {i}: unknown key {key!r}")
        if key in seen:
            raise ConfigError(f"line {i}: duplicate key {key!r}")
        seen[key] = _PARSERS[key](key, value)
    return ExperimentConfig(**seen)


def load_config(path: str) -> ExperimentConfig:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            return parse_config(fh.read())
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc


def save_config(config: ExperimentConfig, path: str) -> None:
    """Write every field as key = value, a template for hand editing."""
    lines = []
    for f in fields(config):
        value = getattr(config, f.name)
        if isinstance(value, tuple):
            value = ",".join(repr(v) if isinstance(v, float) else str(v) for v in value)
        lines.append(f"{f.name} = {value}")
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")
