"""Acceptance gate: one test per criterion, each printing a PASS/FAIL line.

Tolerances are fixed here and never relaxed: exact equality everywhere,
plus wall-clock bounds of 10 s (criterion 1) and 60 s (criterion 7).
"""
import json
import random
import time
from fractions import Fraction
from pathlib import Path

import numpy as np
import pytest
from hypothesis import HealthCheck, Phase, given, settings

from oracles import DistanceTable, canonical_pairs, edit_distance_recursive, relabel
from pipeline import full_pipeline, run
from strategies import manifests
from weakasr import _kernel
from weakasr.datagen import GenerationConfig, build_prompt, sample_prompt_inputs
from weakasr.endpoints import EndpointConfig, MockSynthesizer, RecognizerClient
from weakasr.errors import DurationExceededError, EmptyReferenceError
from weakasr.filterstage import FilterConfig, filter_dataset, score_dataset, sweep, threshold_grid
from weakasr.lexicon import KeywordCategory, KeywordLexicon, synthesize_reference_lexicon
from weakasr.manifest import DatasetManifest, SampleRecord, export_trainer, read_manifest, write_manifest
from weakasr.metrics import align, cer, ier, ier_detail, wer
from weakasr.segmentation import BMM, FMM, UnitKind
from weakasr.text import normalize

CHAR_LIMIT_S = 10.0
PIPELINE_LIMIT_S = 60.0


@pytest.fixture
def report(capsys):
    def emit(n, ok, detail):
        with capsys.disabled():
            print(f"\n{'PASS' if ok else 'FAIL'} criterion {n}: {detail}")
        assert ok, detail

    return emit


# ------------------------------------------------------------ criterion 1


def test_criterion_1_edit_distance_oracle(report):
    t0 = time.perf_counter()
    table = DistanceTable(4, 6)
    chars = ["".join("abcd"[x] for x in s) for s in table.strings]
    spaced = [" ".join(c) for c in chars]

    bad = checked = 0
    for la, a_rows, b_rows in canonical_pairs(4, 6):
        ia, ib = table.index(a_rows), table.index(b_rows)
        for x, y, d in zip(ia.tolist(), ib.tolist(), table.D[ia, ib].tolist()):
            bad += align(table.strings[x], table.strings[y]).cost != d
            if la:
                bad += cer(chars[x], chars[y]).errors != d
                bad += wer(spaced[x], spaced[y]).errors != d
            checked += 1

    rng = random.Random(1)
    kernels = [_kernel.python_align_codes] + [k for k in (_kernel.compiled_align_codes,) if k is not None]
    for _ in range(1000):
        a = "".join(rng.choice("abcdef") for _ in range(rng.randint(1, 12)))
        b = "".join(rng.choice("abcdef") for _ in range(rng.randint(0, 12)))
        d = edit_distance_recursive(a, b)
        for k in kernels:
            bad += align(a, b, kernel=k).cost != d
        bad += cer(a, b).errors != d
        bad += wer(" ".join(a), " ".join(b)).errors != d
    elapsed = time.perf_counter() - t0

    # the table is itself an oracle: spot-check it against plain recursion,
    # and check non-canonical pairs directly so the symmetry reduction is tested too
    n = len(table.strings)
    idx = np.random.default_rng(2).integers(0, n, size=(3000, 2))
    for x, y in idx.tolist():
        s, t = table.strings[x], table.strings[y]
        bad += table.D[x, y] != edit_distance_recursive(s, t)
        bad += align(s, t).cost != table.D[x, y]
        bad += align(s[::-1], t[::-1]).cost != table.D[x, y]
        r = relabel(np.array([list(s) + list(t)]), 4)[0].tolist()
        bad += align(r[: len(s)], r[len(s):]).cost != table.D[x, y]
    with pytest.raises(EmptyReferenceError):
        cer("", "abc")

    ok = bad == 0 and elapsed < CHAR_LIMIT_S
    report(1, ok, f"{checked} canonical pairs covering all {n}x{n} pairs (length<=6, 4 symbols) "
                  f"+ 1000 random pairs, {bad} mismatches, {elapsed:.2f}s (limit {CHAR_LIMIT_S:.0f}s)")


# ------------------------------------------------------------ criterion 2


def test_criterion_2_ier_formula(report):
    lex = KeywordLexicon.from_pairs([("speedy 20", "SERIES")])
    ref, hyp = "我 喜 欢 老花 的 speedy 20", "我 洗 欢 劳花 的 pt 二十"
    detail = ier_detail(ref, hyp, lex, [FMM, BMM], frozenset({"老花"}))
    sums = [flags.sums for _, flags, _ in detail]
    expected = sum(Fraction(3, len(flags.units.units)) for _, flags, _ in detail) / 2
    got = ier(ref, hyp, lex, [FMM, BMM], frozenset({"老花"}))
    kinds = [[u.kind for u in flags.units.units if u.kind is UnitKind.KEYWORD] for _, flags, _ in detail]
    ok = sums == [(1, 1, 1)] * 2 and Fraction(got) == expected and kinds == [[UnitKind.KEYWORD]] * 2
    report(2, ok, f"flag sums (word, char, keyword) per segmenter {sums}; IER {got} == {expected}")


# ------------------------------------------------------------ criterion 3

CONTEXT = list("我想买这个很好的吗请问有没") + ["ok", "hi"]
FILLERS = list("劳花二十爱马仕") + ["pt", "x", "bag0", "sp"]
KEYWORDS = [("speedy 20", "SERIES"), ("老花", "LINES"), ("bucket bag", "NICKNAME"),
            ("value preservation", "SOCIAL"), ("lv", "BRAND"), ("neverfull mm", "SERIES")]


def test_criterion_3_keyword_split_merge(report):
    lex = KeywordLexicon.from_pairs(KEYWORDS)
    dictionary = frozenset({"请问", "很好", "这个"})
    rng = random.Random(3)
    passed = 0
    for _ in range(100):
        kw = rng.choice(KEYWORDS)[0]
        left = [rng.choice(CONTEXT) for _ in range(rng.randint(1, 4))]
        right = [rng.choice(CONTEXT) for _ in range(rng.randint(1, 4))]
        filler = [rng.choice(FILLERS) for _ in range(rng.randint(1, 5))]
        ref = " ".join(left + [kw] + right)
        hyp = " ".join(left + filler + right)
        results = [flags.total_errors == 1 == flags.sums[2] for _, flags, _ in
                   ier_detail(ref, hyp, lex, [FMM, BMM], dictionary)]
        passed += all(results)
    report(3, passed == 100, f"{passed}/100 randomized keyword replacements count exactly one error")


# ------------------------------------------------------------ criterion 4


def test_criterion_4_ier_bounds(report):
    lex = KeywordLexicon.from_pairs(KEYWORDS)
    pool = CONTEXT + FILLERS + [k for k, _ in KEYWORDS]
    rng = random.Random(4)
    in_bounds, max_wer, n = 0, 0.0, 0
    while n < 1000:
        ref = " ".join(rng.choice(pool) for _ in range(rng.randint(1, 6)))
        hyp = " ".join(rng.choice(pool) for _ in range(rng.randint(0, 18)))
        value = ier(ref, hyp, lex, [FMM, BMM], frozenset({"请问", "很好"}))
        in_bounds += 0 <= value <= 1
        max_wer = max(max_wer, wer(ref, hyp).value)
        n += 1
    ok = in_bounds == 1000 and max_wer > 1
    report(4, ok, f"{in_bounds}/1000 pairs with 0<=IER<=1; max WER {max_wer:.3f} (> 1 required)")


# ------------------------------------------------------------ criterion 5


def _char_oracle(ref, hyp):
    a = [c for c in normalize(ref).normalized if not c.isspace()]
    b = [c for c in normalize(hyp).normalized if not c.isspace()]
    return Fraction(edit_distance_recursive(a, b), len(a))


def test_criterion_5_filter(tmp_path, report):
    synth = MockSynthesizer(seed=5)
    texts = ["我 想 买 一 个 speedy 20", "这个 tote 很 好看", "monogram 老花 很 经典", "请问 neverfull 有 货 吗",
             "bucket bag 适合 通勤", "lv 的 包 保值 吗", "我 喜欢 这个 颜色", "gucci 的 皮 很 软"]
    recs = []
    for k in range(60):
        text = texts[k % len(texts)] + f" 第 {k} 个"
        (tmp_path / f"{k}.wav").write_bytes(synth({"text": text, "style_tags": []}).audio)
        recs.append(SampleRecord(f"s{k:03d}", f"{k}.wav", text, 3.0))
    m = DatasetManifest(tuple(recs))
    client = RecognizerClient(EndpointConfig("mock:", options={"p_sub": 0.1, "p_del": 0.05, "p_ins": 0.03, "seed": 5}))
    scored = score_dataset(m, client, tmp_path)

    truth = {s.record.id: _char_oracle(s.record.text, s.hypothesis) for s in scored}
    kept, _, _ = filter_dataset(scored, FilterConfig(0.15))
    want = {i for i, v in truth.items() if v <= Fraction(3, 20)}
    exact = {r.id for r in kept} == want

    grid = threshold_grid(0.05, 0.30, 0.05) + [0.5, 1.0]
    table = sweep(scored, grid)
    counts = [n for _, n in table]
    agree = all(n == len(filter_dataset(scored, FilterConfig(t))[0]) ==
                sum(v <= Fraction(str(t)) for v in truth.values()) for t, n in table)
    monotone = counts == sorted(counts)
    ok = exact and agree and monotone and 0 < len(want) < len(scored)
    report(5, ok, f"kept {len(kept)}/{len(scored)} at tau=0.15 (oracle {len(want)}); "
                  f"sweep {counts} monotone={monotone} agrees={agree}")


# ------------------------------------------------------------ criterion 6


def test_criterion_6_prompt_construction(real, report):
    lex = synthesize_reference_lexicon(seed=0)
    cfg = GenerationConfig(target_count=1, seed=6)
    assert (cfg.s, cfg.i) == (5, 8)
    social = {k.surface for k in lex.by_category[KeywordCategory.SOCIAL]}
    slot = {"SOCIAL": "Attribute", "BRAND": "Brand", "LINES": "Pattern", "MATERIAL": "Material",
            "NICKNAME": "Product", "SERIES": "Series", "TYPE": "Type"}
    good = 0
    for it in range(200):
        prompt = build_prompt(sample_prompt_inputs(real, lex, cfg, random.Random(it)), cfg)
        body = prompt.user.split("Here are some examples:\n", 1)[1].split("\nBased on the template", 1)[0]
        fields = {}
        for part in prompt.user.replace("\n", " ").split(";"):
            name, sep, value = part.strip().rpartition(": ")
            name = name.rsplit(" ", 1)[-1]
            if sep and name in slot.values():
                fields[name] = [v for v in value.split(", ") if v]
        sizes_ok = all(
            len(fields[slot[c.value]]) == min(8, len(lex.by_category[c])) for c in KeywordCategory
        )
        good += len(body.split("\n")) == 5 and sizes_ok and set(fields["Attribute"]) == social
    report(6, good == 200, f"{good}/200 prompts with 5 examples, min(8,|K_c|) keywords per category, "
                           f"all {len(social)} SOCIAL keywords")


# ------------------------------------------------------------ criterion 7


def _tree(root: Path) -> dict:
    return {str(p.relative_to(root)): p.read_bytes() for p in sorted(root.rglob("*")) if p.is_file()}


def test_criterion_7_end_to_end(tmp_path, report):
    t0 = time.perf_counter()
    full_pipeline(tmp_path / "run1", seed=7, count=100)
    full_pipeline(tmp_path / "run2", seed=7, count=100)
    elapsed = time.perf_counter() - t0
    a, b = _tree(tmp_path / "run1"), _tree(tmp_path / "run2")
    identical = a == b
    w = tmp_path / "run1"
    parts = [len(read_manifest(w / "audio" / f"{c}.jsonl")) for c in ("lv", "gucci")]
    all_synth = len(read_manifest(w / "all-synth.jsonl"))
    kept = [len(read_manifest(w / f"{c}-kept.jsonl")) for c in ("lv", "gucci")]
    merged = len(read_manifest(w / "merged.jsonl"))
    exported = len((w / "export" / "train.jsonl").read_text().splitlines())
    ok = (identical and parts == [100, 100] and all_synth == 200 and merged == sum(kept) == exported
          and elapsed / 2 < PIPELINE_LIMIT_S)
    report(7, ok, f"byte-identical={identical} over {len(a)} files; synthetic {parts} -> merged {all_synth}; "
                  f"kept {kept} -> merged {merged}, exported {exported}; {elapsed / 2:.1f}s per run "
                  f"(limit {PIPELINE_LIMIT_S:.0f}s)")


# ------------------------------------------------------------ criterion 8


def test_criterion_8_trainer_export(tmp_path, report):
    (tmp_path / "a.wav").write_bytes(b"RIFF")
    (tmp_path / "b.wav").write_bytes(b"RIFF")
    edge = DatasetManifest((SampleRecord("a", "a.wav", "文本", 30.0),))
    ex = export_trainer(edge, tmp_path / "out", base_dir=tmp_path)
    cfg = json.loads(ex.config_path.read_text())
    defaults = cfg == {"epochs": 5, "batch_size": 4, "learning_rate": 1e-3, "max_audio_seconds": 30.0}

    over = DatasetManifest((SampleRecord("a", "a.wav", "文本", 3.0), SampleRecord("b", "b.wav", "文本", 30.01)))
    try:
        export_trainer(over, tmp_path / "blocked", base_dir=tmp_path)
        blocked = False
    except DurationExceededError as exc:
        blocked = exc.ids == ["b"] and not (tmp_path / "blocked" / "train.jsonl").exists()

    path = tmp_path / "long.jsonl"
    path.write_text(json.dumps({"id": "b", "audio": "b.wav", "text": "文本", "duration_s": 31.0}) + "\n")
    rc, _, _ = run("export", "--manifest", path, "--out-dir", tmp_path / "cli")
    ok = defaults and blocked and rc == 2
    report(8, ok, f"config {cfg}; >30 s record blocks export={blocked}; CLI exit {rc}")


# ------------------------------------------------------------ criterion 9


def test_criterion_9_manifest_round_trip(tmp_path, report):
    seen = []
    path = tmp_path / "m.jsonl"

    @settings(max_examples=500, derandomize=True, database=None, phases=[Phase.generate],
              suppress_health_check=list(HealthCheck), deadline=None)
    @given(manifests)
    def check(m):
        write_manifest(m, path)
        seen.append(read_manifest(path) == m)

    check()
    ok = len(seen) >= 500 and all(seen)
    report(9, ok, f"{sum(seen)}/{len(seen)} generated manifests round-trip exactly")
