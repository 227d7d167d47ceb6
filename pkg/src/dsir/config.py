"""Pipeline configuration: a JSON file whose values any CLI flag overrides."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

from dsir.errors import ConfigError, UnknownMethodError
from dsir.features import FeatureConfig
from dsir.ngram_model import DEFAULT_ALPHA
from dsir.textstats import QualityConfig

METHODS = ("dsir", "clf-topk", "clf-noisy", "clf-gumbel", "random")


@dataclass
class PipelineConfig:
    feature: FeatureConfig = field(default_factory=FeatureConfig)
    quality: QualityConfig = field(default_factory=QualityConfig)
    alpha: float = DEFAULT_ALPHA
    method: str = "dsir"
    k: int | None = None
    seed: int | None = None
    pareto_shape: float = 9.0
    quotas: dict[str, float] | None = None
    workers: int = 1
    chunk_size: int = 128
    max_examples: int = 100_000
    l2_grid: tuple[float, ...] = (1e-4, 1e-3, 1e-2, 1e-1, 1.0)
    paths: dict[str, str] = field(default_factory=dict)

    def __post_init__(self):
        if self.method not in METHODS:
            raise UnknownMethodError(f"unknown method {self.method!r}; expected one of {', '.join(METHODS)}")
        if self.workers < 1:
            raise ConfigError(f"workers must be >= 1, got {self.workers}")
        if self.k is not None and self.k < 1:
            raise ConfigError(f"k must be positive, got {self.k}")


def load_config(path: str | Path | None) -> dict[str, Any]:
    if path is None:
        return {}
    try:
        with open(path, encoding="utf-8") as fh:
            data = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc.msg})") from None
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: top level must be an object")
    return data


def parse_quotas(value: str | dict | None) -> dict[str, float] | None:
    """Accept ``{"A": 0.96, ...}``, a JSON string of that, or ``A=0.96,B=0.04``."""
    if value is None or isinstance(value, dict):
        return None if value is None else {str(k): float(v) for k, v in value.items()}
    value = value.strip()
    if value.startswith("{"):
        try:
            return parse_quotas(json.loads(value))
        except json.JSONDecodeError as exc:
            raise ConfigError(f"bad quotas JSON: {exc.msg}") from None
    out = {}
    for part in value.split(","):
        name, sep, val = part.partition("=")
        if not sep:
            raise ConfigError(f"bad quota entry {part!r}; expected group=fraction")
        try:
            out[name.strip()] = float(val)
        except ValueError:
            raise ConfigError(f"bad quota fraction in {part!r}") from None
    return out


def build_config(file_values: dict[str, Any], overrides: dict[str, Any]) -> PipelineConfig:
    """Merge config-file values with CLI overrides (``None`` means "not given")."""
    merged = dict(file_values)
    feature = dict(merged.pop("feature", {}))
    quality = dict(merged.pop("quality", {}))
    selector = dict(merged.pop("selector", {}))
    for key in ("k", "seed", "pareto_shape", "quotas"):
        if key in selector:
            merged.setdefault(key, selector[key])
    for key, val in overrides.items():
        if val is None:
            continue
        if key in ("num_buckets", "include_bigrams"):
            feature[key] = val
        else:
            merged[key] = val
    try:
        fc = FeatureConfig(**feature)
        qc = QualityConfig.from_dict(quality)
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from None
    known = {f for f in PipelineConfig.__dataclass_fields__} - {"feature", "quality"}
    unknown = set(merged) - known
    if unknown:
        raise ConfigError(f"unknown config keys: {', '.join(sorted(unknown))}")
    if "quotas" in merged:
        merged["quotas"] = parse_quotas(merged["quotas"])
    if "l2_grid" in merged:
        merged["l2_grid"] = tuple(float(x) for x in merged["l2_grid"])
    return PipelineConfig(feature=fc, quality=qc, **merged)
