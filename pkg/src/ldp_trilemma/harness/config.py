"""Experiment configuration: flat key=value files plus overrides."""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass
from pathlib import Path

TASK_SCHEMES = {
    "mean": ("sqkr",),
    "statistical_mean": ("sqkr_stat",),
    "frequency": ("rhr", "ss"),
    "distribution": ("rhr_dist", "ss", "separation"),
    "heavy_hitter": ("heavy_hitter",),
}

DEFAULT_SOURCES = {
    "mean": "gaussian_mixture",
    "statistical_mean": "atoms:16",
    "frequency": "geometric:0.8",
    "distribution": "geometric:0.8",
    "heavy_hitter": "uniform",
}

_TRUE = {"1", "true", "yes", "on"}
_FALSE = {"0", "false", "no", "off"}


class ConfigError(ValueError):
    pass


def _coerce(name: str, kind, raw):
    if not isinstance(raw, str):
        return raw
    try:
        if kind in (int, "int"):
            try:
                return int(raw)
            except ValueError:
                value = float(raw)  # accepts 1e5
                if not value.is_integer():
                    raise
                return int(value)
        if kind in (float, "float"):
            return float(raw)
        if kind in (bool, "bool"):
            low = raw.strip().lower()
            if low in _TRUE:
                return True
            if low in _FALSE:
                return False
            raise ValueError(raw)
    except ValueError as exc:
        raise ConfigError(f"bad value for {name}: {raw!r}") from exc
    return raw if raw != "" else None


@dataclass(frozen=True)
class ExperimentConfig:
    task: str = "mean"
    scheme: str = "sqkr"
    d: int = 64
    n: int = 10_000
    eps: float = 1.0
    b: int = 1
    source: str | None = None
    reps: int = 1
    seed: int = 0
    out: str | None = None
    coin: str = "public"
    level: float = 4.0
    timing: bool = False
    wire: bool = False
    jobs: int = 1

    def __post_init__(self):
        if self.task not in TASK_SCHEMES:
            raise ConfigError(f"unknown task {self.task!r}")
        if self.scheme not in TASK_SCHEMES[self.task]:
            raise ConfigError(
                f"scheme {self.scheme!r} does not solve task {self.task!r}; "
                f"choose from {', '.join(TASK_SCHEMES[self.task])}"
            )
        if self.reps < 1:
            raise ConfigError("reps must be >= 1")
        if self.d < 1 or self.n < 1 or self.b < 1:
            raise ConfigError("d, n and b must be positive")
        if self.eps <= 0:
            raise ConfigError("eps must be positive")
        if self.coin not in ("public", "private"):
            raise ConfigError("coin must be public or private")
        if self.jobs < 1:
            raise ConfigError("jobs must be >= 1")

    @property
    def resolved_source(self) -> str:
        return self.source or DEFAULT_SOURCES[self.task]

    @classmethod
    def field_names(cls) -> tuple[str, ...]:
        return tuple(f.name for f in dataclasses.fields(cls))

    @classmethod
    def from_mapping(cls, values: dict) -> "ExperimentConfig":
        kinds = {f.name: f.type for f in dataclasses.fields(cls)}
        unknown = set(values) - set(kinds)
        if unknown:
            raise ConfigError(f"unknown config key(s): {', '.join(sorted(unknown))}")
        typed = {}
        for name, raw in values.items():
            kind = kinds[name]
            base = kind.split("|")[0].strip() if isinstance(kind, str) else kind
            typed[name] = _coerce(name, base, raw)
        return cls(**typed)

    def replace(self, **changes) -> "ExperimentConfig":
        merged = dataclasses.asdict(self) | {k: v for k, v in changes.items() if v is not None}
        return ExperimentConfig.from_mapping(merged)


def parse_config_text(text: str) -> dict:
    values = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        if not sep:
            raise ConfigError(f"line {lineno}: expected key=value")
        values[key.strip()] = value.strip()
    return values


def load_config(path, **overrides) -> ExperimentConfig:
    values = parse_config_text(Path(path).read_text()) if path else {}
    values |= {k: v for k, v in overrides.items() if v is not None}
    return ExperimentConfig.from_mapping(values)
