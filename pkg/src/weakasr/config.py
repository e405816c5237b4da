"""JSON run configuration shared by all CLI stages.

Example::

    {
      "seed": 7,
      "lexicon": "keywords.csv",
      "dictionary": "words.txt",
      "segmenters": [{"kind": "builtin-fmm", "name": "fmm"}, {"kind": "builtin-bmm", "name": "bmm"}],
      "endpoints": {
        "textgen": {"address": "mock:", "options": {"seed": 1}},
        "synth": {"address": "mock:"},
        "recognizer": {"address": "mock:", "options": {"p_sub": 0.05, "seed": 3}}
      },
      "filter": {"tau": 0.15},
      "generation": {"s": 5, "i": 8, "target_count": 100, "style_tags": ["cantonese-accent"]},
      "normalization": {"strip_punct": true, "fold_width": true, "lowercase": true},
      "jobs": 1
    }

Relative paths are resolved against the config file's directory. Unknown
keys are rejected. Secrets never live here: an endpoint names the
environment variable holding its token via ``auth_env``.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

from .endpoints import EndpointConfig
from .errors import ConfigError
from .segmentation import DEFAULT_SEGMENTERS, SegmenterId
from .text import NormalizationPolicy

_TOP_KEYS = {"seed", "lexicon", "dictionary", "segmenters", "endpoints", "filter", "generation", "normalization", "jobs"}
_GEN_KEYS = {"s", "i", "target_count", "style_tags", "corpus", "max_consecutive_failures", "max_idle_iterations"}
_ENDPOINT_NAMES = {"textgen", "synth", "recognizer"}


def _check_keys(d: dict, allowed: set, where: str) -> None:
    if not isinstance(d, dict):
        raise ConfigError(f"{where} must be a JSON object")
    unknown = set(d) - allowed
    if unknown:
        raise ConfigError(f"unknown keys in {where}: {sorted(unknown)}")


@dataclass(frozen=True)
class GlobalConfig:
    seed: int | None = None
    lexicon: Path | None = None
    dictionary: Path | None = None
    segmenters: tuple[SegmenterId, ...] = DEFAULT_SEGMENTERS
    endpoints: dict[str, EndpointConfig] = field(default_factory=dict)
    tau: float = 0.15
    generation: dict = field(default_factory=dict)
    policy: NormalizationPolicy = NormalizationPolicy()
    jobs: int = 1

    def endpoint(self, name: str, default_address: str = "mock:") -> EndpointConfig:
        return self.endpoints.get(name) or EndpointConfig(default_address)

    @classmethod
    def from_dict(cls, d: dict, base: Path = Path(".")) -> "GlobalConfig":
        _check_keys(d, _TOP_KEYS, "config")

        def path(key):
            v = d.get(key)
            return None if v is None else (base / v)

        seed = d.get("seed")
        if seed is not None and (isinstance(seed, bool) or not isinstance(seed, int)):
            raise ConfigError("seed must be an integer")
        segs = DEFAULT_SEGMENTERS
        if "segmenters" in d:
            try:
                segs = tuple(SegmenterId.from_dict(s) for s in d["segmenters"])
            except (KeyError, ValueError, TypeError) as exc:
                raise ConfigError(f"bad segmenter entry: {exc}") from None
            if not segs:
                raise ConfigError("segmenters must not be empty")
        eps = d.get("endpoints", {})
        _check_keys(eps, _ENDPOINT_NAMES, "endpoints")
        endpoints = {k: EndpointConfig.from_dict(v) for k, v in eps.items()}
        filt = d.get("filter", {})
        _check_keys(filt, {"tau"}, "filter")
        gen = d.get("generation", {})
        _check_keys(gen, _GEN_KEYS, "generation")
        norm = d.get("normalization", {})
        _check_keys(norm, {"strip_punct", "fold_width", "lowercase"}, "normalization")
        jobs = d.get("jobs", 1)
        if not isinstance(jobs, int) or jobs < 1:
            raise ConfigError("jobs must be a positive integer")
        tau = float(filt.get("tau", 0.15))
        if not 0 <= tau <= 1:
            raise ConfigError("filter.tau must be in [0, 1]")
        return cls(
            seed=seed,
            lexicon=path("lexicon"),
            dictionary=path("dictionary"),
            segmenters=segs,
            endpoints=endpoints,
            tau=tau,
            generation=dict(gen),
            policy=NormalizationPolicy(**norm),
            jobs=jobs,
        )


def load_config(path: str | Path | None) -> GlobalConfig:
    if path is None:
        return GlobalConfig()
    path = Path(path)
    try:
        data = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc.msg} at line {exc.lineno})") from None
    return GlobalConfig.from_dict(data, path.parent)
