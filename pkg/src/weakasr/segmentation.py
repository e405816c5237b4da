"""Keyword / word / character partition of a reference sentence.

Keywords are carved out first (greedy leftmost-longest over base tokens),
the remaining CJK runs are word-segmented, and everything left over becomes
single-token character units. Units never overlap, so a wrong word is never
counted again as wrong characters.
"""
from __future__ import annotations

import logging
import subprocess
import warnings
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path

from .errors import ExternalSegmenterError, SegmenterAlignmentWarning
from .lexicon import CATEGORY_ORDER, Keyword, KeywordLexicon
from .text import DEFAULT_POLICY, NormalizationPolicy, Token, base_tokenize, normalize

log = logging.getLogger(__name__)

Span = tuple[int, int]


class SegmenterKind(str, Enum):
    FMM = "builtin-fmm"
    BMM = "builtin-bmm"
    EXTERNAL = "external"


@dataclass(frozen=True)
class SegmenterId:
    kind: SegmenterKind
    name: str
    command: tuple[str, ...] = ()
    timeout: float = 30.0

    def __post_init__(self):
        object.__setattr__(self, "kind", SegmenterKind(self.kind))
        object.__setattr__(self, "command", tuple(self.command))
        if self.kind is SegmenterKind.EXTERNAL and not self.command:
            raise ValueError(f"external segmenter {self.name!r} needs a launch command")

    @classmethod
    def from_dict(cls, d: dict) -> "SegmenterId":
        return cls(SegmenterKind(d["kind"]), d.get("name", d["kind"]), tuple(d.get("command", ())),
                   float(d.get("timeout", 30.0)))

    def to_dict(self) -> dict:
        d = {"kind": self.kind.value, "name": self.name}
        if self.command:
            d["command"] = list(self.command)
            d["timeout"] = self.timeout
        return d


FMM = SegmenterId(SegmenterKind.FMM, "fmm")
BMM = SegmenterId(SegmenterKind.BMM, "bmm")
DEFAULT_SEGMENTERS = (FMM, BMM)


class UnitKind(str, Enum):
    KEYWORD = "Keyword"
    WORD = "Word"
    CHAR = "Char"


@dataclass(frozen=True)
class Unit:
    text: str
    kind: UnitKind
    token_span: Span


@dataclass(frozen=True)
class UnitSequence:
    units: tuple[Unit, ...]
    segmenter: SegmenterId
    tokens: tuple[Token, ...] = field(default=(), compare=False)

    @property
    def counts(self) -> tuple[int, int, int]:
        """(|W|, |C|, |S|)"""
        w = sum(1 for u in self.units if u.kind is UnitKind.WORD)
        c = sum(1 for u in self.units if u.kind is UnitKind.CHAR)
        return w, c, len(self.units) - w - c

    def of_kind(self, kind: UnitKind) -> list[Unit]:
        return [u for u in self.units if u.kind is kind]


def load_dictionary(path: str | Path) -> frozenset[str]:
    words = set()
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        w = normalize(line).normalized.replace(" ", "")
        if w:
            words.add(w)
    return frozenset(words)


# ---------------------------------------------------------------- keywords


def _keyword_index(lex: KeywordLexicon) -> tuple[dict[tuple[str, ...], Keyword], int]:
    index: dict[tuple[str, ...], Keyword] = {}
    for kw in lex.entries:
        key = kw.tokens
        cur = index.get(key)
        if cur is None or (CATEGORY_ORDER[kw.category], kw.normalized) < (
            CATEGORY_ORDER[cur.category],
            cur.normalized,
        ):
            index[key] = kw
    longest = max((len(k) for k in index), default=0)
    return index, longest


def tag_keywords(tokens, lex: KeywordLexicon) -> list[tuple[Span, Keyword]]:
    """Greedy leftmost-longest keyword spans over token texts."""
    index, longest = _keyword_index(lex)
    texts = [t.text for t in tokens]
    found: list[tuple[Span, Keyword]] = []
    i = 0
    while i < len(texts):
        for n in range(min(longest, len(texts) - i), 0, -1):
            kw = index.get(tuple(texts[i : i + n]))
            if kw is not None:
                found.append(((i, i + n), kw))
                i += n
                break
        else:
            i += 1
    return found


# ---------------------------------------------------------------- words


def segment_words(cjk_run, dictionary, direction: str = "forward") -> list[Span]:
    """Maximum-match segmentation of a CJK token run; spans are run-relative."""
    chars = [t.text if isinstance(t, Token) else t for t in cjk_run]
    n = len(chars)
    maxlen = max((len(w) for w in dictionary), default=1)
    spans: list[Span] = []
    if direction == "forward":
        i = 0
        while i < n:
            size = 1
            for k in range(min(maxlen, n - i), 1, -1):
                if "".join(chars[i : i + k]) in dictionary:
                    size = k
                    break
            spans.append((i, i + size))
            i += size
    elif direction == "backward":
        j = n
        while j > 0:
            size = 1
            for k in range(min(maxlen, j), 1, -1):
                if "".join(chars[j - k : j]) in dictionary:
                    size = k
                    break
            spans.append((j - size, j))
            j -= size
        spans.reverse()
    else:
        raise ValueError(f"direction must be 'forward' or 'backward', got {direction!r}")
    return spans


def _align_words(words: list[str], tokens: list[Token]) -> list[Span]:
    """Map segmenter words onto token spans; split misaligned words to singletons."""
    joined = "".join(t.text for t in tokens)
    if "".join(words) != joined:
        warnings.warn(
            SegmenterAlignmentWarning(f"segmenter output {' '.join(words)!r} does not reproduce {joined!r}"),
            stacklevel=3,
        )
        return [(k, k + 1) for k in range(len(tokens))]
    bounds = [0]
    for t in tokens:
        bounds.append(bounds[-1] + len(t.text))
    at = {p: k for k, p in enumerate(bounds)}

    spans: list[Span] = []
    done = 0  # tokens [0, done) are already assigned
    pos = 0
    for w in words:
        a, b = pos, pos + len(w)
        pos = b
        if a in at and b in at:
            spans.append((at[a], at[b]))
            done = at[b]
            continue
        warnings.warn(SegmenterAlignmentWarning(f"word {w!r} crosses a token boundary"), stacklevel=3)
        for k in range(done, len(tokens)):
            if bounds[k] >= b:
                break
            spans.append((k, k + 1))
            done = k + 1
    return spans


def segment_lines_external(seg: SegmenterId, lines: list[str]) -> list[list[str]]:
    """Run the adapter once over ``lines``; one space-delimited reply per line."""
    payload = "".join(line.replace("\n", " ") + "\n" for line in lines)
    try:
        proc = subprocess.run(
            list(seg.command),
            input=payload.encode("utf-8"),
            capture_output=True,
            timeout=seg.timeout,
            check=False,
        )
    except (OSError, subprocess.TimeoutExpired) as exc:
        raise ExternalSegmenterError(f"{seg.name}: {exc}") from exc
    if proc.returncode != 0:
        err = proc.stderr.decode("utf-8", "replace").strip()
        raise ExternalSegmenterError(f"{seg.name}: exit status {proc.returncode}: {err}")
    replies = proc.stdout.decode("utf-8").splitlines()
    if len(replies) != len(lines):
        raise ExternalSegmenterError(f"{seg.name}: expected {len(lines)} response lines, got {len(replies)}")
    return [r.split(" ") for r in replies]


def run_external_segmenter(seg: SegmenterId, text: str) -> list[Span]:
    """Segment normalized ``text`` with an external adapter; spans index its base tokens."""
    tokens = base_tokenize(text)
    if not tokens:
        return []
    (words,) = segment_lines_external(seg, [text])
    return _align_words([w for w in words if w], tokens)


# ---------------------------------------------------------------- partition


def _cjk_runs(tokens: list[Token], covered: list[bool]) -> list[Span]:
    runs = []
    start = None
    for k, t in enumerate(tokens):
        if t.is_cjk and not covered[k]:
            if start is None:
                start = k
        elif start is not None:
            runs.append((start, k))
            start = None
    if start is not None:
        runs.append((start, len(tokens)))
    return runs


def partition_units(
    text: str,
    lex: KeywordLexicon,
    seg: SegmenterId = FMM,
    dictionary=frozenset(),
    policy: NormalizationPolicy = DEFAULT_POLICY,
) -> UnitSequence:
    tokens = base_tokenize(normalize(text, policy))
    covered = [False] * len(tokens)
    by_start: dict[int, Unit] = {}
    for (a, b), kw in tag_keywords(tokens, lex):
        by_start[a] = Unit(_span_text(tokens, a, b), UnitKind.KEYWORD, (a, b))
        for k in range(a, b):
            covered[k] = True

    runs = _cjk_runs(tokens, covered)
    if seg.kind is SegmenterKind.EXTERNAL and runs:
        lines = ["".join(t.text for t in tokens[a:b]) for a, b in runs]
        replies = segment_lines_external(seg, lines)
        run_spans = [_align_words([w for w in r if w], tokens[a:b]) for r, (a, b) in zip(replies, runs)]
    else:
        direction = "backward" if seg.kind is SegmenterKind.BMM else "forward"
        run_spans = [segment_words(tokens[a:b], dictionary, direction) for a, b in runs]

    for (a, _), spans in zip(runs, run_spans):
        for s, e in spans:
            kind = UnitKind.WORD if e - s >= 2 else UnitKind.CHAR
            by_start[a + s] = Unit(_span_text(tokens, a + s, a + e), kind, (a + s, a + e))
            for k in range(a + s, a + e):
                covered[k] = True

    for k, t in enumerate(tokens):
        if not covered[k]:
            by_start[k] = Unit(t.text, UnitKind.CHAR, (k, k + 1))

    units = tuple(by_start[k] for k in sorted(by_start))
    return UnitSequence(units, seg, tuple(tokens))


def _span_text(tokens, a: int, b: int) -> str:
    out = []
    for k in range(a, b):
        if out and not tokens[k].is_cjk and not tokens[k - 1].is_cjk:
            out.append(" ")
        out.append(tokens[k].text)
    return "".join(out)
