"""Run configuration: defaults, TOML overrides and provenance of every constant."""

from __future__ import annotations

import sys
from dataclasses import asdict, dataclass, field, fields

from .confidence import ConfidenceWeights
from .hierarchy import HierarchyParams

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

PUBLISHED = "published value"
ADOPTED = "adopted default, no published value"


@dataclass
class BackendConfig:
    kind: str = "fixture"                       # live | fixture | heuristic
    model: str = "gpt-4o-mini"
    fixture_dir: str = ""                       # empty: bundled recorded responses
    llm_base_url_env: str = "AMKG_LLM_BASE_URL"
    llm_api_key_env: str = "AMKG_LLM_API_KEY"
    embed_base_url_env: str = "AMKG_EMBED_BASE_URL"
    embed_api_key_env: str = "AMKG_EMBED_API_KEY"
    embedder: str = "hashing"                   # hashing | sentence-transformers | http


@dataclass
class ExtractionConfig:
    tokenizer: str = "regex"                    # regex | tiktoken | auto
    max_tokens: int = 1024
    hint_tokens: int = 2000


@dataclass
class RetrievalConfig:
    k: int = 10
    max_entities: int = 200


@dataclass
class GenerationConfig:
    M: int = 3
    max_iter: int = 500


@dataclass
class PathsConfig:
    corpus: str = ""
    out: str = "amkg_out"
    data: str = ""


@dataclass
class Config:
    seed: int = 0
    jobs: int = 1
    backend: BackendConfig = field(default_factory=BackendConfig)
    extraction: ExtractionConfig = field(default_factory=ExtractionConfig)
    hierarchy: HierarchyParams = field(default_factory=HierarchyParams)
    retrieval: RetrievalConfig = field(default_factory=RetrievalConfig)
    generation: GenerationConfig = field(default_factory=GenerationConfig)
    confidence: ConfidenceWeights = field(default_factory=ConfidenceWeights)
    paths: PathsConfig = field(default_factory=PathsConfig)

    def seeded(self, seed=None) -> "Config":
        """Propagate the run seed into every seeded component."""
        if seed is not None:
            self.seed = int(seed)
        self.hierarchy.seed = self.seed
        self.confidence.seed = self.seed
        return self

    def to_dict(self):
        return asdict(self)


# where each constant comes from
ORIGINS = {
    "extraction.max_tokens": f"{PUBLISHED}: chunk size limit in tokens",
    "extraction.hint_tokens": f"{PUBLISHED}: token budget per hint category",
    "extraction.tokenizer": f"{ADOPTED}: regex tokenizer keeps recorded fixtures stable",
    "hierarchy.alpha": f"{PUBLISHED}: weight of relation edges against similarity edges",
    "hierarchy.theta_sim": f"{PUBLISHED}: cosine threshold for similarity edges",
    "hierarchy.k": f"{PUBLISHED}: neighbours per node for similarity edges",
    "hierarchy.theta_stop": f"{PUBLISHED}: stop layering below this many clusters",
    "hierarchy.min_equation_cluster": f"{ADOPTED}: smallest equation-centric cluster",
    "hierarchy.resolution": f"{ADOPTED}: modularity resolution",
    "hierarchy.max_layers": f"{ADOPTED}: safety bound on layer count",
    "confidence.alpha": f"{PUBLISHED}: weight of distance confidence",
    "confidence.beta": f"{PUBLISHED}: weight of statistical confidence",
    "confidence.gamma": f"{PUBLISHED}: weight of physics confidence",
    "confidence.delta": f"{PUBLISHED}: weight of uncertainty confidence",
    "confidence.alpha_d": f"{ADOPTED}: decay rate of distance confidence",
    "confidence.bootstrap_B": f"{ADOPTED}: bootstrap resamples",
    "retrieval.k": f"{PUBLISHED}: top-k entities by query similarity",
    "retrieval.max_entities": f"{ADOPTED}: cap on retrieved subgraph size",
    "generation.M": f"{PUBLISHED}: candidate equations per query (three forms reported)",
    "generation.max_iter": f"{ADOPTED}: least-squares iteration budget (at least 200)",
    "seed": f"{ADOPTED}: seed for every stochastic step",
}


class ConfigError(ValueError):
    pass


def _merge(obj, overrides, prefix=""):
    known = {f.name: f for f in fields(obj)}
    for key, value in overrides.items():
        if key not in known:
            raise ConfigError(f"unknown config key {prefix}{key}")
        current = getattr(obj, key)
        if hasattr(current, "__dataclass_fields__"):
            if not isinstance(value, dict):
                raise ConfigError(f"{prefix}{key} must be a table")
            _merge(current, value, f"{prefix}{key}.")
        else:
            if isinstance(current, bool) or not isinstance(current, (int, float)):
                setattr(obj, key, value)
            elif isinstance(current, int) and not isinstance(value, int):
                raise ConfigError(f"{prefix}{key} must be an integer")
            else:
                setattr(obj, key, type(current)(value))
    return obj


def load_config(path=None, overrides=None) -> Config:
    cfg = Config()
    if path:
        with open(path, "rb") as fh:
            _merge(cfg, tomllib.load(fh))
    if overrides:
        _merge(cfg, overrides)
    return cfg.seeded()


def _toml_value(v):
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, (int, float)):
        return repr(v)
    return '"' + str(v).replace("\\", "\\\\").replace('"', '\\"') + '"'


def dumps_config(cfg: Config, with_origins=True) -> str:
    """TOML text of ``cfg``; constants carry a comment naming their origin."""
    d = cfg.to_dict()
    lines = []
    tables = [(k, v) for k, v in d.items() if isinstance(v, dict)]
    for key, value in d.items():
        if not isinstance(value, dict):
            note = ORIGINS.get(key) if with_origins else None
            lines.append(f"{key} = {_toml_value(value)}" + (f"  # {note}" if note else ""))
    for table, values in tables:
        lines.append("")
        lines.append(f"[{table}]")
        for key, value in values.items():
            note = ORIGINS.get(f"{table}.{key}") if with_origins else None
            lines.append(f"{key} = {_toml_value(value)}" + (f"  # {note}" if note else ""))
    return "\n".join(lines) + "\n"
