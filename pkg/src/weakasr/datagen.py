"""Data expansion: prompt sampling, pseudo-label generation and synthesis."""
from __future__ import annotations

import hashlib
import json
import logging
import random
import re
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

from .endpoints import SpeechSynthClient, TextGenClient, read_wav_info
from .errors import (
    ConfigError,
    DurationExceededError,
    EmptyDatasetError,
    EmptyResponseError,
    EndpointError,
    GenerationAborted,
    GenerationWarning,
    SchemaError,
)
from .lexicon import KeywordCategory, KeywordLexicon, sample_keywords
from .manifest import MAX_AUDIO_SECONDS, DatasetManifest, ManifestMetadata, ManifestWriter, SampleRecord, read_manifest
from .text import normalize

log = logging.getLogger(__name__)

SYSTEM_PROMPT = (
    "Please refer to the following examples and consider the existing product information. "
    "Take a deep breath and think carefully, can you provide additional examples? "
    "These examples should closely align with the original samples. "
    "For product-related information, please use the product list we have provided."
)

USER_TEMPLATE = (
    "Below is the product information for your reference:\n"
    "Attribute: {SOCIAL}; Brand: {BRAND}; Pattern: {LINES};\n"
    "Material: {MATERIAL}; Product: {NICKNAME}; Series: {SERIES};\n"
    "Type: {TYPE};\n"
    "Here are some examples:\n"
    "{SENTENCE}\n"
    "Based on the template in the examples, please generate {s} new sentences. "
    "The content and style should be aligned with the examples."
)


@dataclass(frozen=True)
class GenerationConfig:
    target_count: int
    seed: int
    s: int = 5
    i: int = 8
    style_tags: tuple[str, ...] = ()
    corpus: str = ""
    max_consecutive_failures: int = 5
    max_idle_iterations: int = 50

    def __post_init__(self):
        object.__setattr__(self, "style_tags", tuple(self.style_tags))
        if self.s < 1 or self.i < 1 or self.target_count < 1:
            raise ConfigError("s, i and target_count must all be >= 1")
        if self.max_consecutive_failures < 0 or self.max_idle_iterations < 1:
            raise ConfigError("invalid failure budgets")
        if not -(2**63) <= self.seed < 2**64:
            raise ConfigError("seed must fit in 64 bits")


@dataclass(frozen=True)
class PromptInputs:
    sentences: tuple[str, ...]
    sentence_ids: tuple[str, ...]
    keywords_by_category: dict[KeywordCategory, tuple[str, ...]] = field(hash=False)


@dataclass(frozen=True)
class Prompt:
    system: str
    user: str

    @property
    def prompt_id(self) -> str:
        return hashlib.sha256((self.system + "\x1f" + self.user).encode("utf-8")).hexdigest()[:16]


@dataclass(frozen=True)
class SyntheticLabel:
    id: str
    text: str
    prompt_id: str
    source_sentence_ids: tuple[str, ...]
    iteration: int

    def to_dict(self) -> dict:
        return {
            "id": self.id,
            "text": self.text,
            "prompt_id": self.prompt_id,
            "sources": list(self.source_sentence_ids),
            "iteration": self.iteration,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "SyntheticLabel":
        return cls(d["id"], d["text"], d["prompt_id"], tuple(d.get("sources", ())), int(d.get("iteration", 0)))


def derive_seed(seed: int, iteration: int) -> int:
    h = hashlib.sha256(f"{seed}:{iteration}".encode()).digest()
    return int.from_bytes(h[:8], "little")


def sample_prompt_inputs(
    real: DatasetManifest, lex: KeywordLexicon, cfg: GenerationConfig, rng: random.Random
) -> PromptInputs:
    records = list(real.records)
    if not records:
        raise EmptyDatasetError("real dataset has no records to sample from")
    if len(records) >= cfg.s:
        chosen = rng.sample(records, cfg.s)
    else:
        log.warning("only %d real sentences for s=%d; sampling with replacement", len(records), cfg.s)
        chosen = rng.choices(records, k=cfg.s)
    keywords = {
        cat: tuple(k.surface for k in sample_keywords(lex, cat, cfg.i, rng)) for cat in KeywordCategory
    }
    return PromptInputs(tuple(r.text for r in chosen), tuple(r.id for r in chosen), keywords)


def build_prompt(inputs: PromptInputs, cfg: GenerationConfig) -> Prompt:
    slots = {cat.value: ", ".join(inputs.keywords_by_category.get(cat, ())) for cat in KeywordCategory}
    user = USER_TEMPLATE.format(SENTENCE="\n".join(inputs.sentences), s=cfg.s, **slots)
    return Prompt(SYSTEM_PROMPT, user)


_MARKER_RE = re.compile(r"^\s*(?:\(?\d+[.)、:]|[-*•])\s*")


def parse_label_lines(text: str) -> list[str]:
    out = []
    for line in text.splitlines():
        line = _MARKER_RE.sub("", line, count=1).strip()
        if line:
            out.append(line)
    return out


def generate_labels(
    client: TextGenClient,
    prompt: Prompt,
    expected: int,
    seen: set[str] | None = None,
    request_id: str | None = None,
    source_ids=(),
    iteration: int = 0,
) -> list[SyntheticLabel]:
    """Ask the text generator for ``expected`` labels and parse its reply.

    Labels already in ``seen`` are dropped and new ones are added to it. A
    count mismatch is a :class:`GenerationWarning`, not an error.
    """
    seen = set() if seen is None else seen
    pid = prompt.prompt_id
    reply = client.generate(prompt.system, prompt.user, request_id or pid)
    lines = [ln for ln in parse_label_lines(reply) if normalize(ln).normalized]
    if not lines:
        raise EmptyResponseError()
    if len(lines) != expected:
        warnings.warn(GenerationWarning(f"prompt {pid}: expected {expected} labels, parsed {len(lines)}"),
                      stacklevel=2)
    labels = []
    for line in lines:
        if line in seen:
            continue
        seen.add(line)
        labels.append(SyntheticLabel("", line, pid, tuple(source_ids), iteration))
    return labels


def synthesize_audio(
    client: SpeechSynthClient,
    label: SyntheticLabel,
    cfg: GenerationConfig,
    out_dir: str | Path,
    manifest_id: str,
    record_id: str | None = None,
) -> SampleRecord:
    """Synthesize one label to ``out_dir/<manifest_id>/<record_id>.wav``."""
    record_id = record_id or label.id
    result = client.synthesize(label.text, cfg.style_tags, record_id)
    try:
        info = read_wav_info(result.audio)
    except ValueError as exc:
        raise EndpointError(f"synthesis returned unreadable audio: {exc}") from exc
    if result.truncated or info.duration_s > MAX_AUDIO_SECONDS:
        raise DurationExceededError([record_id], MAX_AUDIO_SECONDS)
    rel = f"{manifest_id}/{record_id}.wav"
    path = Path(out_dir) / rel
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(result.audio)
    return SampleRecord(
        id=record_id,
        audio=rel,
        text=label.text,
        duration_s=info.duration_s,
        source="synthetic",
        corpus=cfg.corpus,
        provenance={"prompt_id": label.prompt_id, "sources": list(label.source_sentence_ids),
                    "iteration": label.iteration},
    )


def _iteration_labels(real, lex, cfg, client, iteration, seen, name):
    rng = random.Random(derive_seed(cfg.seed, iteration))
    inputs = sample_prompt_inputs(real, lex, cfg, rng)
    prompt = build_prompt(inputs, cfg)
    return generate_labels(client, prompt, cfg.s, seen, f"{name}-it{iteration:06d}", inputs.sentence_ids, iteration)


def reconstruct_prompt(real: DatasetManifest, lex: KeywordLexicon, cfg: GenerationConfig, iteration: int) -> Prompt:
    """Rebuild the prompt issued at ``iteration`` (provenance check)."""
    rng = random.Random(derive_seed(cfg.seed, iteration))
    return build_prompt(sample_prompt_inputs(real, lex, cfg, rng), cfg)


class _Budget:
    def __init__(self, cfg: GenerationConfig):
        self.cfg = cfg
        self.failures = 0
        self.idle = 0

    def fail(self, exc: Exception) -> None:
        self.failures += 1
        log.warning("endpoint failure %d/%d: %s", self.failures, self.cfg.max_consecutive_failures, exc)
        if self.failures > self.cfg.max_consecutive_failures:
            raise GenerationAborted(f"{self.failures} consecutive endpoint failures; last: {exc}") from exc

    def ok(self) -> None:
        self.failures = 0

    def iteration_done(self, progressed: bool) -> None:
        self.idle = 0 if progressed else self.idle + 1
        if self.idle >= self.cfg.max_idle_iterations:
            raise GenerationAborted(f"no new labels in {self.idle} consecutive iterations")


def generate_label_set(
    real: DatasetManifest, lex: KeywordLexicon, cfg: GenerationConfig, client: TextGenClient, name: str = "synth"
) -> list[SyntheticLabel]:
    """Run prompt/generate iterations until ``cfg.target_count`` unique labels exist."""
    seen: set[str] = set()
    labels: list[SyntheticLabel] = []
    budget = _Budget(cfg)
    iteration = 0
    while len(labels) < cfg.target_count:
        try:
            batch = _iteration_labels(real, lex, cfg, client, iteration, seen, name)
            budget.ok()
        except EndpointError as exc:
            budget.fail(exc)
            batch = []
        for lab in batch[: cfg.target_count - len(labels)]:
            labels.append(SyntheticLabel(f"{name}-{len(labels):06d}", lab.text, lab.prompt_id,
                                         lab.source_sentence_ids, lab.iteration))
        budget.iteration_done(bool(batch))
        iteration += 1
    return labels


def write_labels(labels, path: str | Path) -> None:
    Path(path).write_text(
        "".join(json.dumps(lab.to_dict(), ensure_ascii=False) + "\n" for lab in labels), encoding="utf-8"
    )


def read_labels(path: str | Path) -> list[SyntheticLabel]:
    out = []
    for lineno, line in enumerate(Path(path).read_text(encoding="utf-8").split("\n"), start=1):
        if not line.strip():
            continue
        try:
            out.append(SyntheticLabel.from_dict(json.loads(line)))
        except (ValueError, KeyError, TypeError) as exc:
            raise SchemaError(lineno, f"bad label record: {exc}") from None
    return out


def synthesize_labels(
    labels,
    cfg: GenerationConfig,
    client: SpeechSynthClient,
    out_dir: str | Path,
    name: str = "synth",
    jobs: int = 1,
    metadata: ManifestMetadata | None = None,
) -> tuple[DatasetManifest, list[str]]:
    """Synthesize every label; returns the manifest and the rejected label ids.

    Records over the duration cap and failed synthesis calls are rejected
    and logged. With ``jobs > 1`` requests run concurrently but the manifest
    keeps label order.
    """
    out_dir = Path(out_dir)
    budget = _Budget(cfg)

    def one(lab):
        try:
            return synthesize_audio(client, lab, cfg, out_dir, name)
        except (DurationExceededError, EndpointError) as exc:
            return exc

    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(one, labels))
    else:
        results = [one(lab) for lab in labels]

    records, rejected = [], []
    for lab, res in zip(labels, results):
        if isinstance(res, SampleRecord):
            budget.ok()
            records.append(res)
            continue
        rejected.append(lab.id)
        if isinstance(res, DurationExceededError):
            log.warning("rejected %s: %s", lab.id, res)
        else:
            budget.fail(res)
    meta = metadata or ManifestMetadata(name=name, seed=cfg.seed)
    return DatasetManifest(tuple(records), meta), rejected


def run_generation(
    real: DatasetManifest,
    lex: KeywordLexicon,
    cfg: GenerationConfig,
    text_client: TextGenClient,
    synth_client: SpeechSynthClient,
    out_dir: str | Path,
    name: str = "synth",
    metadata: ManifestMetadata | None = None,
) -> DatasetManifest:
    """Full expansion loop writing ``out_dir/<name>.jsonl`` incrementally.

    Each iteration draws its prompt from an RNG seeded by (seed, iteration),
    so an interrupted run resumes from the last recorded iteration and ends
    with the same manifest an uninterrupted run would produce.
    """
    out_dir = Path(out_dir)
    path = out_dir / f"{name}.jsonl"
    existing = read_manifest(path) if path.exists() else DatasetManifest()
    records = list(existing.records)
    seen = {r.text for r in records}
    iteration = max((int((r.provenance or {}).get("iteration", 0)) for r in records), default=0)
    budget = _Budget(cfg)
    meta = metadata or ManifestMetadata(name=name, seed=cfg.seed)

    with ManifestWriter(path, meta) as writer:
        while len(records) < cfg.target_count:
            try:
                # dedup against accepted labels only, so a resumed run sees the same state
                batch = _iteration_labels(real, lex, cfg, text_client, iteration, set(seen), name)
                budget.ok()
            except EndpointError as exc:
                budget.fail(exc)
                batch = []
            progressed = False
            for lab in batch:
                if len(records) >= cfg.target_count:
                    break
                rec_id = f"{name}-{len(records):06d}"
                try:
                    rec = synthesize_audio(synth_client, lab, cfg, out_dir, name, rec_id)
                except DurationExceededError as exc:
                    log.warning("rejected label %r: %s", lab.text[:40], exc)
                    continue
                except EndpointError as exc:
                    budget.fail(exc)
                    continue
                budget.ok()
                writer.append(rec)
                records.append(rec)
                seen.add(rec.text)
                progressed = True
            budget.iteration_done(progressed)
            iteration += 1
    return read_manifest(path)
