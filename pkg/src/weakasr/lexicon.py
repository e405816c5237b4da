"""Domain keyword lexicon: loading, validation, stats and sampling."""
from __future__ import annotations

import csv
import io
import random
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path

from .errors import DuplicateKeywordError, LexiconParseError, UnknownCategoryError
from .text import DEFAULT_POLICY, NormalizationPolicy, base_tokenize, normalize


class KeywordCategory(str, Enum):
    SERIES = "SERIES"
    TYPE = "TYPE"
    BRAND = "BRAND"
    MATERIAL = "MATERIAL"
    NICKNAME = "NICKNAME"
    LINES = "LINES"
    SOCIAL = "SOCIAL"


CATEGORY_ORDER = {c: k for k, c in enumerate(KeywordCategory)}

# Category sizes of the reference retail lexicon (879 terms).
REFERENCE_COUNTS = {
    KeywordCategory.SERIES: 408,
    KeywordCategory.TYPE: 273,
    KeywordCategory.BRAND: 92,
    KeywordCategory.MATERIAL: 42,
    KeywordCategory.NICKNAME: 42,
    KeywordCategory.LINES: 19,
    KeywordCategory.SOCIAL: 3,
}

REFERENCE_EXAMPLES = {
    KeywordCategory.SERIES: "objets nomades",
    KeywordCategory.TYPE: "decorations",
    KeywordCategory.BRAND: "balenciaga",
    KeywordCategory.MATERIAL: "empreinte",
    KeywordCategory.NICKNAME: "bucket bag",
    KeywordCategory.LINES: "monogram",
    KeywordCategory.SOCIAL: "value preservation",
}


@dataclass(frozen=True)
class Keyword:
    surface: str
    normalized: str
    category: KeywordCategory
    token_count: int

    @property
    def tokens(self) -> tuple[str, ...]:
        return tuple(t.text for t in base_tokenize(self.normalized))

    @classmethod
    def from_surface(
        cls, surface: str, category: KeywordCategory, policy: NormalizationPolicy = DEFAULT_POLICY
    ) -> "Keyword":
        nt = normalize(surface, policy)
        return cls(surface, nt.normalized, category, len(base_tokenize(nt)))


@dataclass(frozen=True)
class KeywordLexicon:
    entries: tuple[Keyword, ...] = ()
    by_category: dict[KeywordCategory, tuple[Keyword, ...]] = field(default_factory=dict, compare=False)

    def __post_init__(self):
        grouped: dict[KeywordCategory, list[Keyword]] = {c: [] for c in KeywordCategory}
        seen: set[str] = set()
        for kw in self.entries:
            if not kw.normalized:
                raise ValueError(f"keyword {kw.surface!r} is empty after normalization")
            if kw.normalized in seen:
                raise DuplicateKeywordError(kw.normalized, [])
            seen.add(kw.normalized)
            grouped[kw.category].append(kw)
        object.__setattr__(self, "by_category", {c: tuple(v) for c, v in grouped.items()})

    def __len__(self) -> int:
        return len(self.entries)

    def __iter__(self):
        return iter(self.entries)

    @classmethod
    def from_pairs(cls, pairs, policy: NormalizationPolicy = DEFAULT_POLICY) -> "KeywordLexicon":
        return cls(tuple(Keyword.from_surface(s, KeywordCategory(c), policy) for s, c in pairs))


def _parse_category(value: str, line: int) -> KeywordCategory:
    try:
        return KeywordCategory(value.strip().upper())
    except ValueError:
        raise UnknownCategoryError(value, line) from None


def parse_lexicon(text: str, policy: NormalizationPolicy = DEFAULT_POLICY) -> KeywordLexicon:
    entries: list[Keyword] = []
    first_line: dict[str, int] = {}
    dupes: dict[str, list[int]] = {}
    header_seen = False
    for lineno, raw in enumerate(text.splitlines(), start=1):
        if not raw.strip() or raw.lstrip().startswith("#"):
            continue
        row = next(csv.reader([raw]))
        if not header_seen:
            if [c.strip().lower() for c in row] != ["surface", "category"]:
                raise LexiconParseError(lineno, "expected header 'surface,category'")
            header_seen = True
            continue
        if len(row) != 2:
            raise LexiconParseError(lineno, f"expected 2 fields, got {len(row)}")
        surface, cat = row
        category = _parse_category(cat, lineno)
        kw = Keyword.from_surface(surface, category, policy)
        if not kw.normalized:
            raise LexiconParseError(lineno, f"keyword {surface!r} is empty after normalization")
        if kw.normalized in first_line:
            dupes.setdefault(kw.normalized, [first_line[kw.normalized]]).append(lineno)
            continue
        first_line[kw.normalized] = lineno
        entries.append(kw)
    if not header_seen:
        raise LexiconParseError(1, "missing header 'surface,category'")
    if dupes:
        surface, lines = next(iter(dupes.items()))
        raise DuplicateKeywordError(surface, lines)
    return KeywordLexicon(tuple(entries))


def load_lexicon(path: str | Path, policy: NormalizationPolicy = DEFAULT_POLICY) -> KeywordLexicon:
    """Read a ``surface,category`` CSV. Raises on duplicates and bad categories."""
    return parse_lexicon(Path(path).read_text(encoding="utf-8"), policy)


def dump_lexicon(lex: KeywordLexicon) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["surface", "category"])
    for kw in lex.entries:
        writer.writerow([kw.surface, kw.category.value])
    return buf.getvalue()


def save_lexicon(lex: KeywordLexicon, path: str | Path) -> None:
    Path(path).write_text(dump_lexicon(lex), encoding="utf-8")


def stats(lex: KeywordLexicon) -> dict[KeywordCategory, int]:
    return {c: len(lex.by_category.get(c, ())) for c in KeywordCategory}


def sample_keywords(
    lex: KeywordLexicon, category: KeywordCategory, i: int, rng: random.Random
) -> list[Keyword]:
    """Draw ``min(i, |category|)`` distinct keywords uniformly without replacement."""
    if i < 1:
        raise ValueError("i must be >= 1")
    pool = lex.by_category.get(category, ())
    return rng.sample(list(pool), min(i, len(pool)))


_SYLLABLES = ("ba", "lo", "mi", "ran", "te", "so", "vu", "ke", "na", "di", "po", "gre", "lu", "ze")


def synthesize_reference_lexicon(seed: int = 0, counts=None) -> KeywordLexicon:
    """Fabricate a lexicon with the given per-category sizes.

    The first entry of each category is the published example term; the rest
    are pronounceable pseudo-words, some of them two tokens long.
    """
    counts = REFERENCE_COUNTS if counts is None else counts
    rng = random.Random(seed)
    used: set[str] = set()
    pairs: list[tuple[str, str]] = []
    for cat in KeywordCategory:
        n = counts.get(cat, 0)
        if n and REFERENCE_EXAMPLES[cat] not in used:
            pairs.append((REFERENCE_EXAMPLES[cat], cat.value))
            used.add(REFERENCE_EXAMPLES[cat])
        while sum(1 for _, c in pairs if c == cat.value) < n:
            word = "".join(rng.choice(_SYLLABLES) for _ in range(rng.randint(2, 4)))
            if rng.random() < 0.25:
                word += " " + "".join(rng.choice(_SYLLABLES) for _ in range(2))
            if word in used:
                continue
            used.add(word)
            pairs.append((word, cat.value))
    return KeywordLexicon.from_pairs(pairs)
