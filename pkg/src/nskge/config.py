"""
config.py

Purpose
- Training / sampler configuration records with validation.
- Stable run identity (config_hash) and json5 config-file loading for the CLI.

Defaults are the full-size run settings: d=200, 2000 full-batch
epochs, Adam with lr 1e-4, c+ = 1, c- = 1e-3; 25 negatives per positive and
batches of 4000 for the sampled baseline.
"""
from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, fields
from pathlib import Path
from typing import Any, Dict, Union

import json5

from .errors import ConfigError
from .models import ModelKind


@dataclass
class TrainConfig:
    kind: ModelKind = ModelKind.DISTMULT
    dim: int = 200
    epochs: int = 2000
    lr: float = 1e-4
    lr_decay: float = 0.5
    c_pos: float = 1.0
    c_neg: float = 1e-3
    l2: float = 1e-4
    seed: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    log_every: int = 50

    def __post_init__(self) -> None:
        self.kind = ModelKind.parse(self.kind)

    def validate(self) -> "TrainConfig":
        checks = [
            ("dim", self.dim >= 1, "must be >= 1"),
            ("epochs", self.epochs >= 1, "must be >= 1"),
            ("lr", self.lr > 0, "must be > 0"),
            ("lr_decay", 0 < self.lr_decay <= 1, "must lie in (0, 1]"),
            ("c_pos", self.c_pos > 0, "must be > 0"),
            ("c_neg", self.c_neg >= 0, "must be >= 0"),
            ("l2", self.l2 >= 0, "must be >= 0"),
            ("beta1", 0 <= self.beta1 < 1, "must lie in [0, 1)"),
            ("beta2", 0 <= self.beta2 < 1, "must lie in [0, 1)"),
            ("eps", self.eps > 0, "must be > 0"),
        ]
        for name, ok, why in checks:
            if not ok:
                raise ConfigError(f"{name}={getattr(self, name)} {why}")
        return self

    def to_dict(self) -> Dict[str, Any]:
        d = asdict(self)
        d["kind"] = self.kind.value
        return d

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "TrainConfig":
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(data) - known)
        if unknown:
            raise ConfigError(f"unknown TrainConfig keys: {unknown}")
        return cls(**data).validate()


@dataclass
class SamplerConfig:
    negatives_per_positive: int = 25
    batch_size: int = 4000
    corruption: str = "uniform"

    def validate(self) -> "SamplerConfig":
        if self.negatives_per_positive < 1:
            raise ConfigError(f"negatives_per_positive={self.negatives_per_positive} must be >= 1")
        if self.batch_size < 1:
            raise ConfigError(f"batch_size={self.batch_size} must be >= 1")
        if self.corruption != "uniform":
            raise ConfigError(f"corruption='{self.corruption}' is not supported (only 'uniform')")
        return self

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)


def config_hash(*parts: Dict[str, Any]) -> str:
    merged: Dict[str, Any] = {}
    for p in parts:
        merged.update(p)
    blob = json.dumps(merged, sort_keys=True, default=str).encode("utf-8")
    return hashlib.sha1(blob).hexdigest()[:12]


def load_config_file(path: Union[str, Path]) -> Dict[str, Any]:
    """Read a json5 file of CLI defaults; keys may use dashes or underscores."""
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file not found: {path}")
    try:
        raw = json5.loads(path.read_text(encoding="utf-8"))
    except ValueError as exc:
        raise ConfigError(f"{path}: {exc}")
    if not isinstance(raw, dict):
        raise ConfigError(f"{path}: top level must be an object")
    return {str(k).replace("-", "_"): v for k, v in raw.items()}
