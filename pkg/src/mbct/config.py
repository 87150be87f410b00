"""Run and analysis configuration."""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path


@dataclass
class AnalysisConfig:
    groups: int = 5
    group_size: int = 2000
    reference_size: int = 10_000
    corpus_size: int = 10_000
    ks_samples: int = 1000
    ks_instances: int = 500
    alpha: float = 0.05
    seed: int = 0

    def __post_init__(self):
        for name in ("groups", "group_size", "reference_size", "corpus_size", "ks_samples", "ks_instances"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if self.ks_instances > self.corpus_size:
            raise ValueError("ks_instances cannot exceed corpus_size")


@dataclass
class RunConfig:
    sender_wallet: str | None = None
    receiver_wallet: str | None = None
    chain: str = "chain.bin"
    drop_policy: str = "none"
    timeout_blocks: int = 10
    retry_blocks: int = 3
    max_draws: int = 1000
    disable_drops_after_rounds: int | None = None
    seed: int = 0
    analysis: AnalysisConfig = field(default_factory=AnalysisConfig)

    @classmethod
    def from_dict(cls, doc: dict) -> RunConfig:
        known = {f.name for f in fields(cls)}
        unknown = set(doc) - known
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        doc = dict(doc)
        if "analysis" in doc:
            doc["analysis"] = AnalysisConfig(**doc["analysis"])
        return cls(**doc)

    @classmethod
    def load(cls, path) -> RunConfig:
        return cls.from_dict(json.loads(Path(path).read_text()))

    def to_dict(self) -> dict:
        return asdict(self)
