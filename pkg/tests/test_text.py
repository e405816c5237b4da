import unicodedata

from hypothesis import given, strategies as st

from weakasr.text import (
    NormalizationPolicy,
    ScriptClass,
    base_tokenize,
    classify_script,
    is_cjk,
    join_tokens,
    normalize,
    tokenize,
)


def test_script_classes():
    assert classify_script("包") is ScriptClass.CJK
    assert classify_script("\U00020000") is ScriptClass.CJK  # extension B
    assert classify_script("a") is ScriptClass.LATIN
    assert classify_script("é") is ScriptClass.LATIN
    assert classify_script("7") is ScriptClass.DIGIT
    assert classify_script(",") is ScriptClass.PUNCT
    assert classify_script("。") is ScriptClass.PUNCT
    assert classify_script(" ") is ScriptClass.WHITESPACE
    assert classify_script("ア") is ScriptClass.OTHER
    assert not is_cjk("a")


def test_normalize_folds_width_case_and_punct():
    nt = normalize("ＬＶ　Speedy，20！包")
    assert nt.normalized == "lv speedy 20 包"


def test_normalize_composes():
    assert normalize("é").normalized == "é"
    assert normalize("Å").normalized == "å"  # angstrom sign composes to A-ring, then lowercased


def test_offset_map_points_into_original():
    text = "  Ａb，中 文 "
    nt = normalize(text)
    assert nt.normalized == "ab 中 文"
    assert len(nt.offset_map) == len(nt.normalized)
    for c, idx in zip(nt.normalized, nt.offset_map):
        if c != " ":
            assert normalize(text[idx]).normalized.startswith(c)


def test_policy_switches():
    p = NormalizationPolicy(strip_punct=False, fold_width=False, lowercase=False)
    assert normalize("ＡB,c", p).normalized == "ＡB,c"


def test_tokenize_mixed():
    toks = tokenize("我想买LV的speedy 20包")
    assert [t.text for t in toks] == ["我", "想", "买", "lv", "的", "speedy", "20", "包"]
    assert [t.script for t in toks][:4] == [ScriptClass.CJK] * 3 + [ScriptClass.LATIN]
    assert toks[6].script is ScriptClass.DIGIT


def test_join_tokens():
    toks = tokenize("我 想 买 lv speedy 20 包")
    assert join_tokens(toks) == "我想买lv speedy 20包"
    assert [t.text for t in base_tokenize(join_tokens(toks))] == [t.text for t in toks]


text_strategy = st.text(
    alphabet=st.sampled_from(list("abcXYZ 019,.!？　ＡＢ包大好\u00e9e\u0301\u212b\t\u1100\u1161")), max_size=30
)


@given(text_strategy)
def test_normalize_idempotent(s):
    once = normalize(s).normalized
    assert normalize(once).normalized == once


@given(text_strategy)
def test_normalized_is_nfc_and_trimmed(s):
    out = normalize(s).normalized
    assert unicodedata.normalize("NFC", out) == out
    assert out == out.strip()
    assert "  " not in out


@given(text_strategy)
def test_tokens_cover_nonspace(s):
    nt = normalize(s)
    toks = base_tokenize(nt)
    assert "".join(t.text for t in toks) == nt.normalized.replace(" ", "")
    for t in toks:
        assert nt.normalized[t.span[0] : t.span[1]] == t.text
        if t.is_cjk:
            assert len(t.text) == 1
