"""JSONL dataset manifests, merging and trainer export.

A manifest file starts with one metadata line ``{"__manifest__": {...}}``
followed by one record per line. Audio paths are relative to the directory
holding the manifest.
"""
from __future__ import annotations

import json
import math
import os
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterable

from . import __version__
from .errors import DurationExceededError, IdCollisionError, InputError, MissingAudioError, SchemaError

MAX_AUDIO_SECONDS = 30.0
META_KEY = "__manifest__"
SOURCES = ("real", "synthetic")

TRAINER_DEFAULTS = {"epochs": 5, "batch_size": 4, "learning_rate": 1e-3, "max_audio_seconds": MAX_AUDIO_SECONDS}


@dataclass(frozen=True)
class Scores:
    cer: float
    hyp: str

    def to_dict(self) -> dict:
        return {"cer": self.cer, "hyp": self.hyp}


@dataclass(frozen=True)
class SampleRecord:
    id: str
    audio: str
    text: str
    duration_s: float
    source: str = "synthetic"
    corpus: str = ""
    scores: Scores | None = None
    provenance: dict | None = None

    def validate(self) -> None:
        if not isinstance(self.id, str) or not self.id:
            raise ValueError("id must be a non-empty string")
        if not isinstance(self.text, str) or not self.text.strip():
            raise ValueError("text must be non-empty")
        if not isinstance(self.audio, str):
            raise ValueError("audio must be a path string")
        d = self.duration_s
        if isinstance(d, bool) or not isinstance(d, (int, float)) or not math.isfinite(d):
            raise ValueError("duration_s must be a finite number")
        if not 0 < d <= MAX_AUDIO_SECONDS:
            raise ValueError(f"duration_s {d} outside (0, {MAX_AUDIO_SECONDS:g}]")
        if self.source not in SOURCES:
            raise ValueError(f"source must be one of {SOURCES}")

    def to_dict(self) -> dict:
        d = {
            "id": self.id,
            "audio": self.audio,
            "text": self.text,
            "duration_s": self.duration_s,
            "source": self.source,
            "corpus": self.corpus,
        }
        if self.scores is not None:
            d["scores"] = self.scores.to_dict()
        if self.provenance is not None:
            d["provenance"] = self.provenance
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "SampleRecord":
        allowed = {"id", "audio", "text", "duration_s", "source", "corpus", "scores", "provenance"}
        extra = set(d) - allowed
        if extra:
            raise ValueError(f"unknown keys {sorted(extra)}")
        missing = {"id", "audio", "text", "duration_s"} - set(d)
        if missing:
            raise ValueError(f"missing keys {sorted(missing)}")
        scores = d.get("scores")
        if scores is not None:
            scores = Scores(float(scores["cer"]), str(scores["hyp"]))
        rec = cls(
            id=d["id"],
            audio=d["audio"],
            text=d["text"],
            duration_s=d["duration_s"],
            source=d.get("source", "synthetic"),
            corpus=d.get("corpus", ""),
            scores=scores,
            provenance=d.get("provenance"),
        )
        rec.validate()
        return rec


@dataclass(frozen=True)
class ManifestMetadata:
    name: str = ""
    created: str | None = None
    seed: int | None = None
    tool_version: str = __version__

    def to_dict(self) -> dict:
        return {"name": self.name, "created": self.created, "seed": self.seed, "tool_version": self.tool_version}


@dataclass(frozen=True)
class DatasetManifest:
    records: tuple[SampleRecord, ...] = ()
    metadata: ManifestMetadata = field(default_factory=ManifestMetadata)

    def __post_init__(self):
        object.__setattr__(self, "records", tuple(self.records))
        dupes = _duplicate_ids(self.records)
        if dupes:
            raise IdCollisionError(dupes)

    def __len__(self) -> int:
        return len(self.records)

    def __iter__(self):
        return iter(self.records)

    def by_id(self) -> dict[str, SampleRecord]:
        return {r.id: r for r in self.records}


def _duplicate_ids(records: Iterable[SampleRecord]) -> list[str]:
    seen, dupes = set(), set()
    for r in records:
        (dupes if r.id in seen else seen).add(r.id)
    return sorted(dupes)


def _dumps(obj) -> str:
    return json.dumps(obj, ensure_ascii=False, separators=(", ", ": "))


def manifest_lines(m: DatasetManifest) -> list[str]:
    return [_dumps({META_KEY: m.metadata.to_dict()})] + [_dumps(r.to_dict()) for r in m.records]


def write_manifest(m: DatasetManifest, path: str | Path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text("".join(line + "\n" for line in manifest_lines(m)), encoding="utf-8")
    os.replace(tmp, path)


def read_manifest(path: str | Path) -> DatasetManifest:
    """Parse a manifest; a missing metadata line is tolerated."""
    try:
        text = Path(path).read_text(encoding="utf-8")
    except UnicodeDecodeError as exc:
        raise SchemaError(0, f"not UTF-8: {exc}") from exc
    meta = ManifestMetadata()
    records: list[SampleRecord] = []
    seen: dict[str, int] = {}
    for lineno, line in enumerate(text.split("\n"), start=1):
        if not line.strip():
            continue
        try:
            obj = json.loads(line)
        except json.JSONDecodeError as exc:
            raise SchemaError(lineno, f"invalid JSON: {exc.msg}") from None
        if not isinstance(obj, dict):
            raise SchemaError(lineno, "expected a JSON object")
        if META_KEY in obj:
            if records or lineno != 1:
                raise SchemaError(lineno, "metadata must be the first line")
            md = obj[META_KEY]
            try:
                meta = ManifestMetadata(
                    name=md.get("name", ""), created=md.get("created"), seed=md.get("seed"),
                    tool_version=md.get("tool_version", __version__),
                )
            except AttributeError:
                raise SchemaError(lineno, "metadata must be an object") from None
            continue
        try:
            rec = SampleRecord.from_dict(obj)
        except (ValueError, KeyError, TypeError) as exc:
            raise SchemaError(lineno, str(exc)) from None
        if rec.id in seen:
            raise SchemaError(lineno, f"duplicate id {rec.id!r} (first on line {seen[rec.id]})")
        seen[rec.id] = lineno
        records.append(rec)
    return DatasetManifest(tuple(records), meta)


class ManifestWriter:
    """Append-only writer used for incremental (resumable) generation."""

    def __init__(self, path: str | Path, metadata: ManifestMetadata):
        self.path = Path(path)
        self.path.parent.mkdir(parents=True, exist_ok=True)
        if not self.path.exists() or self.path.stat().st_size == 0:
            self.path.write_text(_dumps({META_KEY: metadata.to_dict()}) + "\n", encoding="utf-8")
        self._fh = open(self.path, "a", encoding="utf-8")

    def append(self, rec: SampleRecord) -> None:
        self._fh.write(_dumps(rec.to_dict()) + "\n")
        self._fh.flush()

    def close(self) -> None:
        self._fh.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


def merge(a: DatasetManifest, b: DatasetManifest, name: str | None = None) -> DatasetManifest:
    """Concatenate two manifests with disjoint ids."""
    clash = set(a.by_id()) & set(b.by_id())
    if clash:
        raise IdCollisionError(sorted(clash))
    if name is None:
        name = "+".join(n for n in (a.metadata.name, b.metadata.name) if n)
    meta = replace(a.metadata, name=name, seed=a.metadata.seed if a.metadata.seed == b.metadata.seed else None)
    return DatasetManifest(a.records + b.records, meta)


def rebase_audio(m: DatasetManifest, src_dir: str | Path, dst_dir: str | Path) -> DatasetManifest:
    """Rewrite relative audio paths so they resolve from ``dst_dir``."""
    src_dir, dst_dir = Path(src_dir).resolve(), Path(dst_dir).resolve()
    if src_dir == dst_dir:
        return m
    recs = [replace(r, audio=os.path.relpath(src_dir / r.audio, dst_dir)) for r in m.records]
    return DatasetManifest(tuple(recs), m.metadata)


def duration_stats(m: DatasetManifest) -> dict:
    """Sample count, mean/std duration (s) and total length (min)."""
    ds = [r.duration_s for r in m.records]
    if not ds:
        return {"samples": 0, "mean_s": None, "std_s": None, "total_min": 0.0}
    mean = math.fsum(ds) / len(ds)
    var = math.fsum((d - mean) ** 2 for d in ds) / len(ds)
    return {"samples": len(ds), "mean_s": mean, "std_s": math.sqrt(var), "total_min": math.fsum(ds) / 60}


@dataclass(frozen=True)
class TrainerExport:
    manifest_path: Path
    config_path: Path
    config: dict


def trainer_record(rec: SampleRecord, audio_path: str) -> dict:
    return {"audio": {"path": audio_path}, "sentence": rec.text, "duration": rec.duration_s}


def export_trainer(
    m: DatasetManifest, out_dir: str | Path, overrides: dict | None = None, base_dir: str | Path = "."
) -> TrainerExport:
    """Write ``train.jsonl`` and ``config.json`` for an external fine-tuning script.

    Refuses to export if any audio file is missing or any record exceeds the
    duration cap.
    """
    config = dict(TRAINER_DEFAULTS)
    for k, v in (overrides or {}).items():
        if k not in config:
            raise InputError(f"unknown trainer option {k!r}")
        config[k] = v
    cap = float(config["max_audio_seconds"])
    base_dir, out_dir = Path(base_dir), Path(out_dir)

    missing = [r.id for r in m.records if not (base_dir / r.audio).is_file()]
    if missing:
        raise MissingAudioError(missing)
    too_long = [r.id for r in m.records if r.duration_s > cap]
    if too_long:
        raise DurationExceededError(too_long, cap)

    out_dir.mkdir(parents=True, exist_ok=True)
    lines = []
    for r in m.records:
        rel = os.path.relpath((base_dir / r.audio).resolve(), out_dir.resolve())
        lines.append(_dumps(trainer_record(r, rel)) + "\n")
    manifest_path = out_dir / "train.jsonl"
    config_path = out_dir / "config.json"
    manifest_path.write_text("".join(lines), encoding="utf-8")
    config_path.write_text(json.dumps(config, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return TrainerExport(manifest_path, config_path, config)


def read_trainer_manifest(path: str | Path, source: str = "synthetic") -> list[SampleRecord]:
    """Load a trainer export back as validated records (ids are ``line-N``)."""
    out = []
    for lineno, line in enumerate(Path(path).read_text(encoding="utf-8").split("\n"), start=1):
        if not line.strip():
            continue
        try:
            obj = json.loads(line)
            rec = SampleRecord.from_dict(
                {"id": f"line-{lineno}", "audio": obj["audio"]["path"], "text": obj["sentence"],
                 "duration_s": obj["duration"], "source": source}
            )
        except (ValueError, KeyError, TypeError) as exc:
            raise SchemaError(lineno, str(exc)) from None
        out.append(rec)
    return out
