import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from weakasr import _kernel
from weakasr.lexicon import KeywordLexicon
from weakasr.manifest import DatasetManifest, SampleRecord

KERNELS = [pytest.param(_kernel.python_align_codes, id="python")]
if _kernel.compiled_align_codes is not None:
    KERNELS.append(pytest.param(_kernel.compiled_align_codes, id="cython"))


@pytest.fixture(params=KERNELS)
def kernel(request):
    return request.param


@pytest.fixture
def lex():
    return KeywordLexicon.from_pairs(
        [
            ("speedy 20", "SERIES"),
            ("neverfull", "SERIES"),
            ("lv", "BRAND"),
            ("gucci", "BRAND"),
            ("monogram", "LINES"),
            ("老花", "LINES"),
            ("tote", "TYPE"),
            ("empreinte", "MATERIAL"),
            ("bucket bag", "NICKNAME"),
            ("value preservation", "SOCIAL"),
        ]
    )


REAL_SENTENCES = [
    "这个 lv 的 speedy 20 还有 货 吗",
    "我 想 买 一个 gucci 的 tote",
    "monogram 老花 很 经典",
    "请问 neverfull 有 黑色 的 吗",
    "empreinte 皮 的 手感 很 好",
    "bucket bag 适合 通勤",
    "这款 包 有 value preservation 的 价值",
]


@pytest.fixture
def real():
    recs = tuple(
        SampleRecord(f"real-{k:03d}", f"real/{k:03d}.wav", s, 3.0, "real", "LV") for k, s in enumerate(REAL_SENTENCES)
    )
    return DatasetManifest(recs)
