"""Run configuration: one JSON file plus ``--section.key value`` overrides."""

from __future__ import annotations

import dataclasses
import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Iterable

from .errors import ConfigError

# pairs where setting one clears the other's default
_EXCLUSIVE = {
    ("stream", "capacity"): ("stream", "capacity_pct"),
    ("stream", "capacity_pct"): ("stream", "capacity"),
    ("cluster", "m"): ("cluster", "m_pct"),
    ("cluster", "m_pct"): ("cluster", "m"),
}


@dataclass
class EmbeddingSection:
    dim: int = 256
    seed: int = 0
    lowercase: bool = True


@dataclass
class StreamSection:
    capacity: int | None = None
    capacity_pct: float | None = 10.0
    chunk_size: int = 64
    mode: str = "per_doc"
    aggregation: str = "max"
    guarded: bool = True  # replace the minimum only when beaten


@dataclass
class ClusterSection:
    m: int | None = 16
    m_pct: float | None = None
    seed: int = 0
    max_iters: int = 100
    tol: float = 1e-4


@dataclass
class RetrieveSection:
    k_probe: int = 3
    K: int = 50
    alpha: float = 10.0
    beta: float = 5.0


@dataclass
class PathsSection:
    corpus: str | None = None
    qrels: str | None = None
    queries: str | None = None
    output_dir: str = "out"


@dataclass
class EvalSection:
    modes: list = field(default_factory=lambda: ["SAKR", "streaming_only", "clustering_only", "naive"])
    k_values: list = field(default_factory=list)
    silhouette_max_points: int = 5000


@dataclass
class SweepSection:
    m_values: list = field(default_factory=lambda: [1, 2, 4, 8, 16, 32])


@dataclass
class BenchSection:
    sizes: list = field(default_factory=lambda: [1000, 10000, 100000])
    n_queries: int = 100
    centers: int | None = None
    spread: float = 0.35
    seed: int = 0


@dataclass
class SyntheticSection:
    corpus_size: int = 2000
    relevant_fraction: float = 0.1
    topics: int = 20
    noise: float = 0.2
    facets: int = 4
    seed: int = 0


@dataclass
class RunConfig:
    embedding: EmbeddingSection = field(default_factory=EmbeddingSection)
    stream: StreamSection = field(default_factory=StreamSection)
    cluster: ClusterSection = field(default_factory=ClusterSection)
    retrieve: RetrieveSection = field(default_factory=RetrieveSection)
    paths: PathsSection = field(default_factory=PathsSection)
    eval: EvalSection = field(default_factory=EvalSection)
    sweep: SweepSection = field(default_factory=SweepSection)
    bench: BenchSection = field(default_factory=BenchSection)
    synthetic: SyntheticSection = field(default_factory=SyntheticSection)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    def config_hash(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode("utf-8")).hexdigest()

    def validate(self) -> "RunConfig":
        s, c, r = self.stream, self.cluster, self.retrieve
        if (s.capacity is None) == (s.capacity_pct is None):
            raise ConfigError("exactly one of stream.capacity / stream.capacity_pct must be set")
        if (c.m is None) == (c.m_pct is None):
            raise ConfigError("exactly one of cluster.m / cluster.m_pct must be set")
        if s.capacity is not None and s.capacity < 1:
            raise ConfigError("stream.capacity must be >= 1")
        if s.capacity_pct is not None and not 0 < s.capacity_pct <= 100:
            raise ConfigError("stream.capacity_pct must be in (0, 100]")
        if c.m is not None and c.m < 1:
            raise ConfigError("cluster.m must be >= 1")
        if c.m_pct is not None and not 0 < c.m_pct <= 100:
            raise ConfigError("cluster.m_pct must be in (0, 100]")
        if s.chunk_size < 1:
            raise ConfigError("stream.chunk_size must be >= 1")
        if s.mode not in ("per_doc", "chunk_max"):
            raise ConfigError(f"stream.mode must be per_doc or chunk_max, not {s.mode!r}")
        if s.aggregation not in ("max", "mean"):
            raise ConfigError(f"stream.aggregation must be max or mean, not {s.aggregation!r}")
        if r.k_probe < 1:
            raise ConfigError("retrieve.k_probe must be >= 1")
        if r.K < 0:
            raise ConfigError("retrieve.K must be >= 0")
        if not r.alpha > 0:
            raise ConfigError("retrieve.alpha must be > 0")
        if self.embedding.dim < 2:
            raise ConfigError("embedding.dim must be >= 2")
        return self

    def capacity_for(self, corpus_size: int) -> int:
        if self.stream.capacity is not None:
            return self.stream.capacity
        return max(1, round(self.stream.capacity_pct * corpus_size / 100.0))

    def m_for(self, n_points: int) -> int:
        if self.cluster.m is not None:
            return max(1, min(self.cluster.m, n_points))
        return max(1, min(n_points, round(self.cluster.m_pct * n_points / 100.0)))

    def k_values(self) -> list[int]:
        return [int(k) for k in self.eval.k_values] or [self.retrieve.K]


def _parse_value(raw: Any) -> Any:
    if not isinstance(raw, str):
        return raw
    try:
        return json.loads(raw)
    except json.JSONDecodeError:
        return raw


def _coerce(section: Any, key: str, value: Any) -> Any:
    current = getattr(section, key)
    hint = {f.name: f.type for f in dataclasses.fields(section)}[key]
    if value is None:
        if "None" not in str(hint):
            raise ConfigError(f"{key} cannot be null")
        return None
    if isinstance(current, bool) or hint == "bool":
        if isinstance(value, str):
            value = value.lower() in ("1", "true", "yes", "on")
        return bool(value)
    if "int" in str(hint) and "float" not in str(hint):
        if isinstance(value, float) and value.is_integer():
            value = int(value)
        if not isinstance(value, int):
            raise ConfigError(f"{key} expects an integer, got {value!r}")
        return value
    if "float" in str(hint):
        if not isinstance(value, (int, float)):
            raise ConfigError(f"{key} expects a number, got {value!r}")
        return float(value)
    if hint == "list":
        if isinstance(value, str):
            value = [_parse_value(v) for v in value.split(",") if v]
        if not isinstance(value, list):
            raise ConfigError(f"{key} expects a list, got {value!r}")
        return value
    if "str" in str(hint):
        return str(value)
    return value


def apply_overrides(cfg: RunConfig, items: Iterable[tuple[str, Any]]) -> RunConfig:
    """Apply one batch of dotted-key assignments.

    Setting one member of an exclusive pair (capacity/capacity_pct,
    m/m_pct) clears the other unless the same batch sets both.
    """
    items = [(k, _parse_value(v)) for k, v in items]
    touched = set()
    for key, value in items:
        parts = key.split(".")
        if len(parts) != 2:
            raise ConfigError(f"config key {key!r} must look like section.key")
        sec_name, name = parts
        section = getattr(cfg, sec_name, None)
        if section is None or not dataclasses.is_dataclass(section) or not hasattr(section, name):
            raise ConfigError(f"unknown config key {key!r}")
        setattr(section, name, _coerce(section, name, value))
        touched.add((sec_name, name))
    for key in touched:
        other = _EXCLUSIVE.get(key)
        if other and other not in touched:
            sec, name = key
            if getattr(getattr(cfg, sec), name) is not None:
                setattr(getattr(cfg, other[0]), other[1], None)
    return cfg


def _flatten(d: dict) -> list[tuple[str, Any]]:
    out = []
    for sec, body in d.items():
        if not isinstance(body, dict):
            raise ConfigError(f"config section {sec!r} must be an object")
        out.extend((f"{sec}.{k}", v) for k, v in body.items())
    return out


def load_config(path: str | Path | None = None, overrides: Iterable[tuple[str, Any]] = ()) -> RunConfig:
    cfg = RunConfig()
    if path is not None:
        try:
            data = json.loads(Path(path).read_text(encoding="utf-8"))
        except FileNotFoundError:
            raise ConfigError(f"config file not found: {path}") from None
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: invalid JSON ({exc.msg})") from None
        apply_overrides(cfg, _flatten(data))
    apply_overrides(cfg, overrides)
    return cfg.validate()
