"""Data filtering: recognizer scoring, CER threshold filter and threshold sweep."""
from __future__ import annotations

import bisect
import csv
import io
import json
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from decimal import Decimal
from fractions import Fraction
from pathlib import Path
from typing import Sequence

from .endpoints import RecognizerClient
from .errors import ConfigError, EmptyReferenceError, EndpointError
from .manifest import DatasetManifest, ManifestMetadata, SampleRecord, Scores
from .metrics import Rate, cer

log = logging.getLogger(__name__)

DEFAULT_TAU = 0.15


@dataclass(frozen=True)
class FilterConfig:
    tau: float = DEFAULT_TAU

    def __post_init__(self):
        if not 0.0 <= self.tau <= 1.0:
            raise ConfigError(f"tau must be in [0, 1], got {self.tau}")


@dataclass(frozen=True)
class ScoredSample:
    record: SampleRecord
    hypothesis: str | None
    cer: Rate | None
    error: str | None = None

    @property
    def scored(self) -> bool:
        return self.cer is not None


def _exact(x: float) -> Fraction:
    # thresholds are read as the decimal literal they print as: 0.15 means 3/20
    return Fraction(Decimal(repr(float(x))))


def keeps(rate: Rate, tau: float) -> bool:
    """Boundary-inclusive keep rule: CER <= tau, compared exactly."""
    return Fraction(rate.errors, rate.total) <= _exact(tau)


def score_sample(record: SampleRecord, client: RecognizerClient, base_dir: str | Path = ".") -> ScoredSample:
    path = Path(base_dir) / record.audio
    try:
        audio = path.read_bytes()
    except OSError as exc:
        log.warning("unscored %s: %s", record.id, exc)
        return ScoredSample(record, None, None, f"io-error: {exc}")
    try:
        hyp = client.transcribe(audio, record.id, str(record.audio))
    except EndpointError as exc:
        log.warning("unscored %s: %s", record.id, exc)
        return ScoredSample(record, None, None, f"endpoint-error: {exc}")
    try:
        rate = cer(record.text, hyp)
    except EmptyReferenceError as exc:
        return ScoredSample(record, hyp, None, f"empty-reference: {exc}")
    return ScoredSample(record, hyp, rate)


def score_dataset(
    manifest: DatasetManifest, client: RecognizerClient, base_dir: str | Path = ".", jobs: int = 1
) -> list[ScoredSample]:
    """Transcribe every record and compute its CER against the label.

    Failures (missing audio, endpoint errors) yield unscored samples
    instead of aborting the run. Output order follows the manifest.
    """
    records = list(manifest.records)
    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            return list(pool.map(lambda r: score_sample(r, client, base_dir), records))
    return [score_sample(r, client, base_dir) for r in records]


def scored_manifest(scored: Sequence[ScoredSample], like: DatasetManifest) -> DatasetManifest:
    """Records with their ``scores`` block filled in (unscored ones unchanged)."""
    recs = []
    for s in scored:
        if s.scored:
            recs.append(replace(s.record, scores=Scores(s.cer.value, s.hypothesis)))
        else:
            recs.append(s.record)
    return DatasetManifest(tuple(recs), like.metadata)


def samples_from_manifest(manifest: DatasetManifest) -> list[ScoredSample]:
    """Recover scored samples from a manifest written by :func:`scored_manifest`."""
    out = []
    for r in manifest.records:
        if r.scores is None:
            out.append(ScoredSample(r, None, None, "unscored"))
        else:
            out.append(ScoredSample(r, r.scores.hyp, cer(r.text, r.scores.hyp)))
    return out


@dataclass(frozen=True)
class FilterReport:
    kept: int
    rejected: int
    unscored: int
    tau: float
    dispositions: tuple[tuple[str, str], ...]

    def to_dict(self) -> dict:
        return {
            "tau": self.tau,
            "kept": self.kept,
            "rejected": self.rejected,
            "unscored": self.unscored,
            "dispositions": [{"id": i, "disposition": d} for i, d in self.dispositions],
        }


def filter_dataset(
    scored: Sequence[ScoredSample], cfg: FilterConfig = FilterConfig(), metadata=None
) -> tuple[DatasetManifest, DatasetManifest, FilterReport]:
    """Split samples into kept (CER <= tau) and rejected.

    Unscored samples land in the rejected manifest with disposition
    ``unscored``; they are never kept by default.
    """
    kept, rejected, disp = [], [], []
    unscored = 0
    for s in scored:
        rec = replace(s.record, scores=Scores(s.cer.value, s.hypothesis)) if s.scored else s.record
        if not s.scored:
            unscored += 1
            rejected.append(rec)
            disp.append((rec.id, "unscored"))
        elif keeps(s.cer, cfg.tau):
            kept.append(rec)
            disp.append((rec.id, "kept"))
        else:
            rejected.append(rec)
            disp.append((rec.id, "rejected"))
    if unscored:
        log.warning("%d unscored samples excluded from the kept set", unscored)
    meta = metadata or ManifestMetadata()
    report = FilterReport(len(kept), len(rejected), unscored, cfg.tau, tuple(disp))
    return DatasetManifest(tuple(kept), meta), DatasetManifest(tuple(rejected), meta), report


def sweep(scored: Sequence[ScoredSample], thresholds: Sequence[float]) -> list[tuple[float, int]]:
    """Kept-count per threshold, using the same rule as :func:`filter_dataset`."""
    for a, b in zip(thresholds, thresholds[1:]):
        if not a < b:
            raise ConfigError("thresholds must be strictly ascending")
    values = sorted(Fraction(s.cer.errors, s.cer.total) for s in scored if s.scored)
    return [(t, bisect.bisect_right(values, _exact(t))) for t in thresholds]


def threshold_grid(start: float, stop: float, step: float) -> list[float]:
    """Inclusive decimal grid, e.g. 0.05..0.30 step 0.05 gives six values."""
    a, b, d = Decimal(repr(start)), Decimal(repr(stop)), Decimal(repr(step))
    if d <= 0:
        raise ConfigError("step must be positive")
    out = []
    x = a
    while x <= b:
        out.append(float(x))
        x += d
    return out


def sweep_csv(table) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["threshold", "kept"])
    for t, n in table:
        w.writerow([repr(float(t)), n])
    return buf.getvalue()


def sweep_json(table) -> str:
    return json.dumps([{"threshold": t, "kept": n} for t, n in table])


def write_sweep(table, csv_path: str | Path, json_path: str | Path | None = None) -> None:
    Path(csv_path).write_text(sweep_csv(table), encoding="utf-8")
    if json_path is not None:
        Path(json_path).write_text(sweep_json(table) + "\n", encoding="utf-8")
