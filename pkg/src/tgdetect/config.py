"""Pipeline configuration: one flat, typed, JSON-serialisable document."""
from __future__ import annotations

import dataclasses
import hashlib
import json
import typing
from dataclasses import dataclass, field
from pathlib import Path

from .errors import ConfigError
from .tscharacterize import DEFAULT_STATISTICS


@dataclass
class PipelineConfig:
    # inputs
    transactions: str = ""
    labels: str = ""
    input_format: str = "csv"
    # segmentation
    granularities: list[str] = field(default_factory=lambda: ["Day", "Week", "All"])
    analysis_granularity: str = "All"
    # feature thresholds
    theta_t: float = 2.0
    burst_factor: float = 0.8
    theta_a: int | None = None  # None: SD duration
    statistics: list[str] = field(default_factory=lambda: list(DEFAULT_STATISTICS))
    # selection
    top_k: int = 3
    correlation_threshold: float = 0.9
    pca_variance: float = 0.982
    feature_stage: str = "selected"  # raw | selected | pca
    # clustering
    k_min: int = 3
    k_max: int = 24
    seeds_per_k: int = 3
    epsilon: float = 1e-7
    similarity_exclude: list[str] = field(default_factory=lambda: ["transactedFirst", "transactedLast"])
    # behaviour
    behavior_k: int = 9
    behavior_p_threshold: float = 0.5
    # classifier
    et_n_estimators: int = 200
    et_criterion: str = "entropy"
    et_max_features: float = 0.3
    et_max_samples: float | None = 0.3
    et_bootstrap: bool = False
    et_min_samples_leaf: int = 14
    et_min_samples_split: int = 20
    et_class_weight: str | None = "balanced"
    test_fraction: float = 0.2
    # power-law fitting
    fit_min_tail: int = 50
    # run
    seed: int = 42
    output_dir: str = "out"
    n_jobs: int = 1

    def validate(self) -> "PipelineConfig":
        if self.feature_stage not in ("raw", "selected", "pca"):
            raise ConfigError(f"feature_stage must be raw, selected or pca, got {self.feature_stage!r}")
        if not 2 <= self.k_min <= self.k_max:
            raise ConfigError("need 2 <= k_min <= k_max")
        if not 0 < self.test_fraction < 1:
            raise ConfigError("test_fraction must lie in (0, 1)")
        if self.seeds_per_k < 1:
            raise ConfigError("seeds_per_k must be >= 1")
        if self.input_format not in ("csv", "jsonl"):
            raise ConfigError(f"input_format must be csv or jsonl, got {self.input_format!r}")
        return self

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    @classmethod
    def from_dict(cls, d: dict) -> "PipelineConfig":
        hints = typing.get_type_hints(cls)
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = sorted(set(d) - known)
        if unknown:
            raise ConfigError(f"unknown config key(s): {', '.join(unknown)}")
        return cls(**{k: _coerce(k, v, hints[k]) for k, v in d.items()}).validate()

    @classmethod
    def from_json(cls, text: str) -> "PipelineConfig":
        try:
            d = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config is not valid JSON: {exc}") from None
        if not isinstance(d, dict):
            raise ConfigError("config must be a JSON object")
        return cls.from_dict(d)

    @classmethod
    def load(cls, path) -> "PipelineConfig":
        try:
            text = Path(path).read_text(encoding="utf-8")
        except OSError as exc:
            raise ConfigError(f"{path}: {exc.strerror}") from None
        return cls.from_json(text)

    def replace(self, **kw) -> "PipelineConfig":
        return dataclasses.replace(self, **kw).validate()


def _coerce(name, value, hint):
    args = typing.get_args(hint)
    if value is None:
        if type(None) in args:
            return None
        raise ConfigError(f"{name} may not be null")
    base = next((a for a in args if a is not type(None)), hint) if args and typing.get_origin(hint) is not list else hint
    if typing.get_origin(base) is list:
        if not isinstance(value, list) or not all(isinstance(v, str) for v in value):
            raise ConfigError(f"{name} must be a list of strings")
        return list(value)
    if base is bool:
        if not isinstance(value, bool):
            raise ConfigError(f"{name} must be true or false")
        return value
    if base is int:
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(f"{name} must be an integer")
        return value
    if base is float:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"{name} must be a number")
        return float(value)
    if base is str:
        if not isinstance(value, str):
            raise ConfigError(f"{name} must be a string")
        return value
    return value


def derive_seed(root: int, name: str) -> int:
    """Stable 32-bit seed for a named pipeline stage."""
    h = hashlib.sha256(f"{root}:{name}".encode()).digest()
    return int.from_bytes(h[:4], "big")
