"""Engine configuration."""
from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass
from pathlib import Path

ROUTING_STRATEGIES = ("agentic", "cosine_greedy", "kmeans_fixed")
EVOLUTION_SCOPES = ("local", "global")
RETRIEVAL_MODES = ("two_stage", "global")


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class EngineConfig:
    """All tunables of the memory engine.

    Defaults reproduce the published hyperparameter table. Use
    :meth:`desk_defaults` for small synthetic runs.
    """

    init_buffer_size: int = 100
    init_clusters: int = 3
    split_threshold: int = 300
    routing_candidates: int = 3
    new_cluster_threshold: float = 0.1
    local_neighbors: int = 5
    stage1_candidates: int = 3
    retrieve_top_k: int = 10
    routing_strategy: str = "agentic"
    evolution_scope: str = "local"
    retrieval_mode: str = "two_stage"
    rng_seed: int = 0
    embedding_dim: int = 384
    kmeans_restarts: int = 8
    profile_snippets: int = 5

    def __post_init__(self):
        counts = (
            "init_buffer_size", "init_clusters", "split_threshold", "routing_candidates",
            "local_neighbors", "stage1_candidates", "retrieve_top_k", "embedding_dim",
            "kmeans_restarts", "profile_snippets",
        )
        for name in counts:
            value = getattr(self, name)
            if isinstance(value, bool) or not isinstance(value, int) or value < 1:
                raise ConfigError(f"{name} must be an integer >= 1, got {value!r}")
        if not -1.0 <= float(self.new_cluster_threshold) <= 1.0:
            raise ConfigError("new_cluster_threshold must lie in [-1, 1]")
        if self.split_threshold <= self.init_clusters:
            raise ConfigError("split_threshold must exceed init_clusters")
        if self.routing_strategy not in ROUTING_STRATEGIES:
            raise ConfigError(f"unknown routing_strategy {self.routing_strategy!r}")
        if self.evolution_scope not in EVOLUTION_SCOPES:
            raise ConfigError(f"unknown evolution_scope {self.evolution_scope!r}")
        if self.retrieval_mode not in RETRIEVAL_MODES:
            raise ConfigError(f"unknown retrieval_mode {self.retrieval_mode!r}")

    @classmethod
    def desk_defaults(cls, **overrides) -> "EngineConfig":
        """Smaller buffer and split threshold for desk-scale streams."""
        values = {"init_buffer_size": 30, "split_threshold": 50}
        values.update(overrides)
        return cls(**values)

    def replace(self, **changes) -> "EngineConfig":
        return dataclasses.replace(self, **changes)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "EngineConfig":
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        return cls(**data)

    @classmethod
    def load(cls, path, base: "EngineConfig | None" = None) -> "EngineConfig":
        """Read a flat JSON key-value file; keys mirror the field names."""
        try:
            data = json.loads(Path(path).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        if not isinstance(data, dict):
            raise ConfigError("config file must hold a flat JSON object")
        merged = (base or cls()).to_dict()
        merged.update(data)
        return cls.from_dict(merged)
