"""Run configuration: one JSON file, every CLI flag overrides its key."""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field, fields
from pathlib import Path

from .adaptive import AdaptiveConfig
from .errors import DataError

STRATEGIES = ("exact", "approx", "density")


@dataclass
class PipelineConfig:
    strategy: str = "density"
    k: int = 30
    rank_weight: float = 1.0
    hop_cap: int = 4
    adaptive: AdaptiveConfig = field(default_factory=AdaptiveConfig)
    gold_spans: bool = False
    gold_injection: bool = False
    seed: int = 0
    er_flip_fraction: float = 0.0  # fault injection for adaptation experiments
    exact_budget: int = 10_000_000
    triples: str | None = None
    labels: str | None = None
    expansions: str | None = None
    stopwords: str | None = None
    artifacts: str | None = None

    def validate(self) -> None:
        if self.strategy not in STRATEGIES:
            raise DataError(f"unknown strategy {self.strategy!r}; expected one of {STRATEGIES}")
        if self.k < 1:
            raise DataError("k must be >= 1")
        if self.hop_cap < 2:
            raise DataError("hop_cap must be >= 2 for connectivity features")
        if self.rank_weight < 0:
            raise DataError("rank_weight must be >= 0")
        if not 0.0 <= self.er_flip_fraction <= 1.0:
            raise DataError("er_flip_fraction must be in [0, 1]")
        if not 0.0 < self.adaptive.threshold < 1.0:
            raise DataError("adaptive threshold must be in (0, 1)")
        if self.adaptive.max_retries_per_keyword < 0:
            raise DataError("adaptive retries must be >= 0")

    def to_dict(self) -> dict:
        data = {}
        for f in fields(self):
            value = getattr(self, f.name)
            if f.name == "adaptive":
                value = {
                    "threshold": value.threshold,
                    "max_retries_per_keyword": value.max_retries_per_keyword,
                }
            data[f.name] = value
        return data

    @classmethod
    def from_dict(cls, data: dict) -> "PipelineConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise DataError(f"unknown config keys: {sorted(unknown)}")
        kwargs = dict(data)
        if "adaptive" in kwargs and kwargs["adaptive"] is not None:
            kwargs["adaptive"] = AdaptiveConfig(**kwargs["adaptive"])
        config = cls(**kwargs)
        config.validate()
        return config

    @classmethod
    def from_file(cls, path: str | Path) -> "PipelineConfig":
        with open(path, "r", encoding="utf-8") as handle:
            return cls.from_dict(json.load(handle))

    def save(self, path: str | Path) -> None:
        with open(path, "w", encoding="utf-8") as handle:
            json.dump(self.to_dict(), handle, indent=2, sort_keys=True)
            handle.write("\n")

    def artifact_hash(self) -> str:
        """Hash of the settings that shape build products.

        Index, classifier and re-ranker all depend on these; loading
        artifacts under a different value is refused to prevent silent skew.
        """
        payload = json.dumps(
            {"hop_cap": self.hop_cap, "k": self.k, "seed": self.seed},
            sort_keys=True,
        )
        return hashlib.sha256(payload.encode("utf-8")).hexdigest()
