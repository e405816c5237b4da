"""Normalization, script classification and base tokenization for mixed
Chinese/Latin text."""
from __future__ import annotations

import unicodedata
from dataclasses import dataclass, field
from enum import Enum
from typing import NamedTuple


class ScriptClass(str, Enum):
    CJK = "CJK"
    LATIN = "Latin"
    DIGIT = "Digit"
    PUNCT = "Punct"
    WHITESPACE = "Whitespace"
    OTHER = "Other"


# CJK Unified Ideographs and its extensions A through I.
_CJK_RANGES = (
    (0x3400, 0x4DBF),
    (0x4E00, 0x9FFF),
    (0x20000, 0x2A6DF),
    (0x2A700, 0x2B73F),
    (0x2B740, 0x2B81F),
    (0x2B820, 0x2CEAF),
    (0x2CEB0, 0x2EBEF),
    (0x2EBF0, 0x2EE5F),
    (0x30000, 0x3134F),
    (0x31350, 0x323AF),
)


def classify_script(ch: str) -> ScriptClass:
    cp = ord(ch)
    for lo, hi in _CJK_RANGES:
        if lo <= cp <= hi:
            return ScriptClass.CJK
    if "0" <= ch <= "9":
        return ScriptClass.DIGIT
    cat = unicodedata.category(ch)
    if cp < 0x100 and cat[0] == "L":
        return ScriptClass.LATIN
    if ch.isspace():
        return ScriptClass.WHITESPACE
    if cat[0] in "PS":
        return ScriptClass.PUNCT
    return ScriptClass.OTHER


def is_cjk(ch: str) -> bool:
    return classify_script(ch) is ScriptClass.CJK


class NormalizationPolicy(NamedTuple):
    # a tuple so the per-call cache keys hash cheaply
    strip_punct: bool = True
    fold_width: bool = True
    lowercase: bool = True


DEFAULT_POLICY = NormalizationPolicy()


@dataclass(frozen=True)
class NormalizedText:
    original: str
    normalized: str
    offset_map: tuple[int, ...] = field(repr=False)


def _fold_char(ch: str, policy: NormalizationPolicy) -> str:
    cp = ord(ch)
    if policy.fold_width:
        if 0xFF01 <= cp <= 0xFF5E:
            ch = chr(cp - 0xFEE0)
        elif cp == 0x3000:
            ch = " "
    if policy.lowercase and classify_script(ch) is ScriptClass.LATIN:
        low = ch.lower()
        if len(low) == 1:
            ch = low
    return ch


def _clusters(text: str):
    """Yield (start, chunk) where chunk is a base char plus trailing marks.

    Composition never crosses a cluster boundary, so NFC can be applied
    cluster by cluster while keeping a per-character offset map.
    """
    start = 0
    for k in range(1, len(text) + 1):
        if k == len(text):
            yield start, text[start:k]
            break
        ch = text[k]
        joins = unicodedata.combining(ch) != 0 or 0x1160 <= ord(ch) <= 0x11FF
        if not joins:
            yield start, text[start:k]
            start = k


def normalize(text: str, policy: NormalizationPolicy = DEFAULT_POLICY) -> NormalizedText:
    """Fold, compose and clean ``text``; idempotent on its own output.

    Stripped punctuation becomes a space, so "a,b" yields two tokens. All
    whitespace runs collapse to one ASCII space; leading/trailing space is
    dropped.
    """
    chars: list[tuple[str, int]] = []
    for start, chunk in _clusters(text):
        folded = "".join(_fold_char(c, policy) for c in chunk)
        composed = unicodedata.normalize("NFC", folded)
        # NFC singletons (e.g. U+212B) may produce upper-case or full-width forms
        for c in composed:
            chars.append((_fold_char(c, policy), start))

    out: list[str] = []
    offsets: list[int] = []
    pending_space: int | None = None
    for c, idx in chars:
        cls = classify_script(c)
        if cls is ScriptClass.WHITESPACE or (policy.strip_punct and cls is ScriptClass.PUNCT):
            if pending_space is None:
                pending_space = idx
            continue
        if pending_space is not None and out:
            out.append(" ")
            offsets.append(pending_space)
        pending_space = None
        out.append(c)
        offsets.append(idx)
    return NormalizedText(text, "".join(out), tuple(offsets))


@dataclass(frozen=True)
class Token:
    text: str
    script: ScriptClass
    span: tuple[int, int]

    @property
    def is_cjk(self) -> bool:
        return self.script is ScriptClass.CJK


def _run_script(run: str) -> ScriptClass:
    classes = {classify_script(c) for c in run}
    for cls in (ScriptClass.LATIN, ScriptClass.DIGIT, ScriptClass.OTHER):
        if cls in classes:
            return cls
    return ScriptClass.PUNCT


def base_tokenize(nt: NormalizedText | str) -> list[Token]:
    """Split into tokens: one per CJK character, one per maximal other run.

    A plain string is accepted and treated as already normalized.
    """
    s = nt.normalized if isinstance(nt, NormalizedText) else nt
    tokens: list[Token] = []
    run_start = None
    for k, c in enumerate(s):
        cls = classify_script(c)
        if cls is ScriptClass.CJK or cls is ScriptClass.WHITESPACE:
            if run_start is not None:
                tokens.append(Token(s[run_start:k], _run_script(s[run_start:k]), (run_start, k)))
                run_start = None
            if cls is ScriptClass.CJK:
                tokens.append(Token(c, cls, (k, k + 1)))
        elif run_start is None:
            run_start = k
    if run_start is not None:
        tokens.append(Token(s[run_start:], _run_script(s[run_start:]), (run_start, len(s))))
    return tokens


def tokenize(text: str, policy: NormalizationPolicy = DEFAULT_POLICY) -> list[Token]:
    return base_tokenize(normalize(text, policy))


def join_tokens(tokens) -> str:
    """Inverse of base_tokenize up to whitespace next to CJK characters."""
    parts: list[str] = []
    prev = None
    for tok in tokens:
        if prev is not None and not prev.is_cjk and not tok.is_cjk:
            parts.append(" ")
        parts.append(tok.text)
        prev = tok
    return "".join(parts)
