"""Edit-distance alignment and error rates.

CER/WER are plain Levenshtein rates with unit costs. Split rates bucket a
single global alignment into Chinese vs. other reference items, so the two
buckets always sum to the overall rate. IER scores keyword, word and
character units of the reference per segmenter and averages over
segmenters.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum
from functools import lru_cache
from typing import Iterable, NamedTuple, Sequence

from . import _kernel
from .errors import EmptyInputError, EmptyReferenceError
from .lexicon import KeywordLexicon
from .segmentation import DEFAULT_SEGMENTERS, SegmenterId, UnitKind, UnitSequence, partition_units, segment_words
from .text import DEFAULT_POLICY, NormalizationPolicy, Token, base_tokenize, classify_script, normalize, ScriptClass


class OpKind(str, Enum):
    MATCH = "Match"
    SUBSTITUTE = "Substitute"
    DELETE = "Delete"
    INSERT = "Insert"


_CODE_TO_KIND = (OpKind.MATCH, OpKind.SUBSTITUTE, OpKind.DELETE, OpKind.INSERT)


class EditOp(NamedTuple):
    kind: OpKind
    ref_index: int | None
    hyp_index: int | None


class Alignment:
    """Result of :func:`align`: total cost plus the edit script.

    The script is kept as the kernel's op codes and expanded into
    :class:`EditOp` values on first access.
    """

    __slots__ = ("cost", "codes", "_ops")

    def __init__(self, codes: bytes, cost: int):
        self.codes = codes
        self.cost = cost
        self._ops = None

    @property
    def ops(self) -> tuple[EditOp, ...]:
        if self._ops is None:
            ops = []
            i = j = 0
            for code in self.codes:
                if code == 2:
                    ops.append(EditOp(OpKind.DELETE, i, None))
                    i += 1
                elif code == 3:
                    ops.append(EditOp(OpKind.INSERT, None, j))
                    j += 1
                else:
                    ops.append(EditOp(_CODE_TO_KIND[code], i, j))
                    i += 1
                    j += 1
            self._ops = tuple(ops)
        return self._ops

    def counts(self) -> dict[OpKind, int]:
        return {k: self.codes.count(n) for n, k in enumerate(_CODE_TO_KIND)}

    def __eq__(self, other):
        if not isinstance(other, Alignment):
            return NotImplemented
        return self.cost == other.cost and self.codes == other.codes

    def __hash__(self):
        return hash((self.cost, self.codes))

    def __repr__(self):
        return f"Alignment(cost={self.cost}, ops={self.ops!r})"


def align(ref: Sequence, hyp: Sequence, kernel=None) -> Alignment:
    """Minimal-cost alignment of two sequences of hashable items.

    Ties in the backtrace prefer Match, then Substitute, Delete, Insert.
    """
    cost, codes = (kernel or _kernel.align_codes)(ref, hyp)
    return Alignment(codes, cost)


def edit_distance(ref: Sequence, hyp: Sequence, kernel=None) -> int:
    """Levenshtein distance (unit costs) without building the op list."""
    return (kernel or _kernel.align_codes)(ref, hyp)[0]


class _RateFields(NamedTuple):
    errors: int
    total: int


class Rate(_RateFields):
    """``errors / total`` kept as integers so rates can be summed exactly."""

    __slots__ = ()

    def __new__(cls, errors: int, total: int):
        if errors < 0 or total <= 0:
            raise ValueError(f"invalid rate {errors}/{total}")
        return tuple.__new__(cls, (errors, total))

    @property
    def value(self) -> float:
        return self.errors / self.total

    def __add__(self, other: "Rate") -> "Rate":
        return Rate(self.errors + other.errors, self.total + other.total)

    def to_dict(self) -> dict:
        return {"errors": self.errors, "total": self.total, "value": self.value}

    @classmethod
    def from_dict(cls, d: dict) -> "Rate":
        return cls(int(d["errors"]), int(d["total"]))


# ---------------------------------------------------------------- CER / WER


@lru_cache(maxsize=8192)
def _chars(text: str, policy: NormalizationPolicy) -> tuple[str, ...]:
    return tuple(c for c in normalize(text, policy).normalized if c != " ")


@lru_cache(maxsize=8192)
def _base_words(text: str, policy: NormalizationPolicy) -> tuple[str, ...]:
    return tuple(t.text for t in base_tokenize(normalize(text, policy)))


def _word_items(text: str, policy: NormalizationPolicy, cjk_dictionary) -> list[Token]:
    tokens = base_tokenize(normalize(text, policy))
    if cjk_dictionary is None:
        return tokens
    # merge CJK runs into dictionary words (forward maximum match)
    out: list[Token] = []
    k = 0
    while k < len(tokens):
        if not tokens[k].is_cjk:
            out.append(tokens[k])
            k += 1
            continue
        end = k
        while end < len(tokens) and tokens[end].is_cjk:
            end += 1
        run = tokens[k:end]
        for s, e in segment_words(run, cjk_dictionary, "forward"):
            piece = run[s:e]
            out.append(Token("".join(t.text for t in piece), ScriptClass.CJK, (piece[0].span[0], piece[-1].span[1])))
        k = end
    return out


def cer(ref: str, hyp: str, policy: NormalizationPolicy = DEFAULT_POLICY) -> Rate:
    """Character error rate over non-space characters of the normalized texts."""
    r = _chars(ref, policy)
    if not r:
        raise EmptyReferenceError()
    return Rate(edit_distance(r, _chars(hyp, policy)), len(r))


def wer(ref: str, hyp: str, policy: NormalizationPolicy = DEFAULT_POLICY, cjk_dictionary=None) -> Rate:
    """Word error rate over base tokens (one token per CJK character).

    Pass ``cjk_dictionary`` to score Chinese per dictionary word instead.
    """
    if cjk_dictionary is None:
        r, h = _base_words(ref, policy), _base_words(hyp, policy)
    else:
        r = [t.text for t in _word_items(ref, policy, cjk_dictionary)]
        h = [t.text for t in _word_items(hyp, policy, cjk_dictionary)]
    if not r:
        raise EmptyReferenceError()
    return Rate(edit_distance(r, h), len(r))


# ---------------------------------------------------------------- split rates

CN, OTH = "cn", "oth"


def bucket_errors(alignment: Alignment, ref_buckets: Sequence[str]) -> dict[str, Rate]:
    """Attribute every edit of ``alignment`` to a reference bucket.

    Substitutions and deletions go to their reference item's bucket,
    insertions to the nearest preceding reference item (or the first item
    for sentence-initial insertions). Buckets with no reference items are
    left out.
    """
    totals: dict[str, int] = {}
    for b in ref_buckets:
        totals[b] = totals.get(b, 0) + 1
    errors = {b: 0 for b in totals}
    last = None
    for op in alignment.ops:
        if op.ref_index is not None:
            last = op.ref_index
        if op.kind is OpKind.MATCH:
            continue
        if op.kind is OpKind.INSERT:
            if not ref_buckets:
                continue
            errors[ref_buckets[last if last is not None else 0]] += 1
        else:
            errors[ref_buckets[op.ref_index]] += 1
    return {b: Rate(errors[b], totals[b]) for b in totals}


@dataclass(frozen=True)
class SplitRates:
    cer_cn: Rate | None
    cer_oth: Rate | None
    wer_cn: Rate | None
    wer_oth: Rate | None


def split_metrics(
    ref: str, hyp: str, policy: NormalizationPolicy = DEFAULT_POLICY, cjk_dictionary=None
) -> SplitRates:
    rc, hc = _chars(ref, policy), _chars(hyp, policy)
    if not rc:
        raise EmptyReferenceError()
    char_b = bucket_errors(align(rc, hc), [CN if classify_script(c) is ScriptClass.CJK else OTH for c in rc])
    rt = _word_items(ref, policy, cjk_dictionary)
    ht = _word_items(hyp, policy, cjk_dictionary)
    tok_b = bucket_errors(align([t.text for t in rt], [t.text for t in ht]), [CN if t.is_cjk else OTH for t in rt])
    return SplitRates(char_b.get(CN), char_b.get(OTH), tok_b.get(CN), tok_b.get(OTH))


# ---------------------------------------------------------------- IER


@dataclass(frozen=True)
class UnitErrorFlags:
    """One error bit per unit of ``units``; the family (word, char, keyword)
    follows the unit kind."""

    units: UnitSequence
    flags: tuple[bool, ...]
    keyword_regions: dict[int, tuple[int, int]] = field(default_factory=dict, compare=False)

    @property
    def sums(self) -> tuple[int, int, int]:
        """(sum of word flags, sum of char flags, sum of keyword flags)"""
        out = {UnitKind.WORD: 0, UnitKind.CHAR: 0, UnitKind.KEYWORD: 0}
        for u, f in zip(self.units.units, self.flags):
            out[u.kind] += int(f)
        return out[UnitKind.WORD], out[UnitKind.CHAR], out[UnitKind.KEYWORD]

    @property
    def total_errors(self) -> int:
        return sum(self.flags)


def unit_errors(ref_units: UnitSequence, ref_tokens, hyp_tokens, alignment: Alignment) -> UnitErrorFlags:
    """Flag each reference unit touched by a substitution or deletion.

    Insertions never flag a unit. A keyword is one unit, so however many
    hypothesis tokens replace it between its correctly recognized neighbours
    it contributes at most one error; that hypothesis region is recorded per
    keyword for audit.
    """
    n = len(ref_tokens)
    bad = [False] * n
    hyp_of_ref: list[int | None] = [None] * n
    for op in alignment.ops:
        if op.ref_index is None:
            continue
        if op.kind is OpKind.MATCH:
            hyp_of_ref[op.ref_index] = op.hyp_index
        else:
            bad[op.ref_index] = True

    flags = []
    regions: dict[int, tuple[int, int]] = {}
    for idx, unit in enumerate(ref_units.units):
        a, b = unit.token_span
        flag = any(bad[a:b])
        flags.append(flag)
        if unit.kind is UnitKind.KEYWORD:
            before = next((hyp_of_ref[k] for k in range(a - 1, -1, -1) if hyp_of_ref[k] is not None and not bad[k]), -1)
            after = next(
                (hyp_of_ref[k] for k in range(b, n) if hyp_of_ref[k] is not None and not bad[k]), len(hyp_tokens)
            )
            regions[idx] = (before + 1, after)
    return UnitErrorFlags(ref_units, tuple(flags), regions)


def _token_alignment(ref: str, hyp: str, policy: NormalizationPolicy):
    rt = base_tokenize(normalize(ref, policy))
    if not rt:
        raise EmptyReferenceError()
    ht = base_tokenize(normalize(hyp, policy))
    return rt, ht, align([t.text for t in rt], [t.text for t in ht])


def ier_detail(
    ref: str,
    hyp: str,
    lex: KeywordLexicon,
    segmenters: Sequence[SegmenterId] = DEFAULT_SEGMENTERS,
    dictionary=frozenset(),
    policy: NormalizationPolicy = DEFAULT_POLICY,
) -> list[tuple[SegmenterId, UnitErrorFlags, float]]:
    if not segmenters:
        raise ValueError("at least one segmenter is required")
    rt, ht, al = _token_alignment(ref, hyp, policy)
    out = []
    for seg in segmenters:
        units = partition_units(ref, lex, seg, dictionary, policy)
        flags = unit_errors(units, rt, ht, al)
        # weighted per-class means collapse to flagged units / all units
        out.append((seg, flags, flags.total_errors / len(units.units)))
    return out


def ier(
    ref: str,
    hyp: str,
    lex: KeywordLexicon,
    segmenters: Sequence[SegmenterId] = DEFAULT_SEGMENTERS,
    dictionary=frozenset(),
    policy: NormalizationPolicy = DEFAULT_POLICY,
) -> float:
    """Integrated error rate in [0, 1], averaged over ``segmenters``."""
    detail = ier_detail(ref, hyp, lex, segmenters, dictionary, policy)
    return math.fsum(v for _, _, v in detail) / len(detail)


# ---------------------------------------------------------------- reports

RATE_FIELDS = ("cer", "wer", "cer_cn", "cer_oth", "wer_cn", "wer_oth")


@dataclass(frozen=True)
class MetricReport:
    cer: Rate
    wer: Rate
    cer_cn: Rate | None = None
    cer_oth: Rate | None = None
    wer_cn: Rate | None = None
    wer_oth: Rate | None = None
    ier: float | None = None
    ier_components: tuple[tuple[str, float], ...] = ()

    def to_dict(self) -> dict:
        d: dict = {}
        for name in RATE_FIELDS:
            r = getattr(self, name)
            d[name] = None if r is None else r.to_dict()
        d["ier"] = self.ier
        if self.ier_components:
            d["ier_components"] = [{"segmenter": n, "ier": v} for n, v in self.ier_components]
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "MetricReport":
        rates = {n: (None if d.get(n) is None else Rate.from_dict(d[n])) for n in RATE_FIELDS}
        comps = tuple((c["segmenter"], float(c["ier"])) for c in d.get("ier_components", ()))
        return cls(**rates, ier=d.get("ier"), ier_components=comps)


def evaluate(
    ref: str,
    hyp: str,
    lex: KeywordLexicon | None = None,
    segmenters: Sequence[SegmenterId] = (),
    dictionary=frozenset(),
    policy: NormalizationPolicy = DEFAULT_POLICY,
    cjk_dictionary=None,
) -> MetricReport:
    """All metrics for one pair; IER only when a lexicon and segmenters are given."""
    split = split_metrics(ref, hyp, policy, cjk_dictionary)
    value = None
    comps: tuple = ()
    if lex is not None and segmenters:
        detail = ier_detail(ref, hyp, lex, segmenters, dictionary, policy)
        comps = tuple((seg.name, v) for seg, _, v in detail)
        value = math.fsum(v for _, v in comps) / len(comps)
    return MetricReport(
        cer(ref, hyp, policy),
        wer(ref, hyp, policy, cjk_dictionary),
        split.cer_cn,
        split.cer_oth,
        split.wer_cn,
        split.wer_oth,
        value,
        comps,
    )


def _sum_rates(rates: Iterable[Rate | None]) -> Rate | None:
    present = [r for r in rates if r is not None]
    if not present:
        return None
    return Rate(sum(r.errors for r in present), sum(r.total for r in present))


def aggregate(reports: Sequence[MetricReport]) -> MetricReport:
    """Corpus-level micro-averaged rates; IER is the plain mean over samples."""
    if not reports:
        raise EmptyInputError("aggregate needs at least one report")
    rates = {n: _sum_rates(getattr(r, n) for r in reports) for n in RATE_FIELDS}
    iers = [r.ier for r in reports if r.ier is not None]
    value = math.fsum(iers) / len(iers) if iers else None
    comps: tuple = ()
    with_comps = [r.ier_components for r in reports if r.ier_components]
    if with_comps and all(len(c) == len(with_comps[0]) for c in with_comps):
        comps = tuple(
            (with_comps[0][k][0], math.fsum(c[k][1] for c in with_comps) / len(with_comps))
            for k in range(len(with_comps[0]))
        )
    return MetricReport(**rates, ier=value, ier_components=comps)


def audit_trace(
    ref: str,
    hyp: str,
    lex: KeywordLexicon | None = None,
    segmenters: Sequence[SegmenterId] = (),
    dictionary=frozenset(),
    policy: NormalizationPolicy = DEFAULT_POLICY,
) -> dict:
    """Everything needed to re-check one sample's numbers by hand."""
    rt, ht, al = _token_alignment(ref, hyp, policy)
    trace: dict = {
        "ref": ref,
        "hyp": hyp,
        "ref_tokens": [t.text for t in rt],
        "hyp_tokens": [t.text for t in ht],
        "alignment": [[op.kind.value, op.ref_index, op.hyp_index] for op in al.ops],
        "segmentations": [],
    }
    if lex is not None and segmenters:
        for seg, flags, value in ier_detail(ref, hyp, lex, segmenters, dictionary, policy):
            units = []
            for idx, (u, f) in enumerate(zip(flags.units.units, flags.flags)):
                entry = {"text": u.text, "kind": u.kind.value, "span": list(u.token_span), "error": int(f)}
                if idx in flags.keyword_regions:
                    entry["hyp_region"] = list(flags.keyword_regions[idx])
                units.append(entry)
            w, c, s = flags.units.counts
            trace["segmentations"].append(
                {"segmenter": seg.name, "counts": {"W": w, "C": c, "S": s}, "units": units,
                 "flag_sums": list(flags.sums), "ier": value}
            )
    return trace
