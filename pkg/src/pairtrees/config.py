"""Flat ``key = value`` experiment configuration."""
from __future__ import annotations

import dataclasses
import hashlib
import json
from dataclasses import dataclass, fields
from pathlib import Path

from .errors import ValidationError
from .extra_trees import ForestConfig

__all__ = ["ExperimentConfig", "load_config", "parse_config_text", "DEFAULTS_HELP"]

_BOOL = {"true": True, "yes": True, "1": True, "false": False, "no": False, "0": False}


@dataclass(frozen=True)
class ExperimentConfig:
    """Every setting of a run; unset keys take the defaults below.

    Relative paths in a config file are resolved against the file's folder.
    """

    pairs: str | None = None
    row_features: str | None = None
    col_features: str | None = None
    homogeneous: bool = False
    method: str = "global"  # global | local
    variant: str = "so"  # so | mo (local only)
    n_trees: int = 100
    k_features: int | None = None  # None: sqrt(p) rounded
    n_min: int = 1
    bootstrap: bool = False
    scheme: str = "nodes"  # nodes | pairs
    folds: int = 10
    repeats: int = 10
    grid: bool = False
    seed: int = 0
    merge: str = "mean"  # mean | min | max | product
    output: str = "out"

    def __post_init__(self):
        if self.method not in ("global", "local"):
            raise ValidationError(f"unknown method {self.method!r}")
        if self.variant not in ("so", "mo"):
            raise ValidationError(f"unknown variant {self.variant!r}")
        if self.scheme not in ("nodes", "pairs"):
            raise ValidationError(f"unknown scheme {self.scheme!r}")
        if self.merge not in ("mean", "min", "max", "product"):
            raise ValidationError(f"unknown merge rule {self.merge!r}")
        self.forest()  # validates tree settings

    @property
    def eval_method(self) -> str:
        return "global" if self.method == "global" else f"local_{self.variant}"

    def forest(self) -> ForestConfig:
        return ForestConfig(self.n_trees, self.k_features, self.n_min, self.bootstrap, self.seed)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    def config_hash(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()[:16]

    def to_text(self) -> str:
        lines = []
        for f in fields(self):
            v = getattr(self, f.name)
            if v is None:
                continue
            lines.append(f"{f.name} = {str(v).lower() if isinstance(v, bool) else v}")
        return "\n".join(lines) + "\n"

    def updated(self, **overrides) -> "ExperimentConfig":
        clean = {k: v for k, v in overrides.items() if v is not None}
        return dataclasses.replace(self, **coerce(clean))


_TYPES = {f.name: f.type for f in fields(ExperimentConfig)}


def coerce(raw: dict) -> dict:
    """Convert string values to the field types; unknown keys raise."""
    out = {}
    for key, value in raw.items():
        if key not in _TYPES:
            raise ValidationError(f"unknown config key {key!r}")
        kind = _TYPES[key]
        if not isinstance(value, str):
            out[key] = value
        elif kind == "bool":
            if value.lower() not in _BOOL:
                raise ValidationError(f"{key}: expected true/false, got {value!r}")
            out[key] = _BOOL[value.lower()]
        elif kind.startswith("int"):
            if kind.endswith("None") and value.lower() in ("auto", "none", ""):
                out[key] = None
                continue
            try:
                out[key] = int(value)
            except ValueError:
                raise ValidationError(f"{key}: expected an integer, got {value!r}") from None
        else:
            out[key] = value
    return out


def parse_config_text(text: str, base: Path | None = None) -> ExperimentConfig:
    raw = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValidationError(f"config line {lineno}: expected key = value")
        key, value = (s.strip() for s in line.split("=", 1))
        if key in raw:
            raise ValidationError(f"config line {lineno}: duplicate key {key!r}")
        raw[key] = value
    values = coerce(raw)
    if base is not None:
        for key in ("pairs", "row_features", "col_features", "output"):
            if values.get(key) and not Path(values[key]).is_absolute():
                values[key] = str(base / values[key])
    return ExperimentConfig(**values)


def load_config(path) -> ExperimentConfig:
    path = Path(path)
    if not path.exists():
        raise ValidationError(f"config file not found: {path}")
    return parse_config_text(path.read_text(), base=path.parent)


DEFAULTS_HELP = "\n".join(
    f"  {f.name} = {f.default}" for f in fields(ExperimentConfig)
)
