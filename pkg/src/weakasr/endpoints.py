"""Clients for the text-generation, speech-synthesis and recognizer services.

Each client wraps a *transport*: either a JSON-over-HTTP POST to the
configured address, or a deterministic in-process mock selected by the
``mock:`` address scheme. Clients retry transient failures with
exponential backoff and reuse one request id across attempts.
"""
from __future__ import annotations

import base64
import hashlib
import json
import logging
import os
import random
import re
import struct
import time
import urllib.error
import urllib.request
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .errors import ConfigError, EndpointError, TransientEndpointError
from .text import ScriptClass, classify_script, tokenize

log = logging.getLogger(__name__)

SAMPLE_RATE = 16000
MAX_SYNTH_SECONDS = 30.0


@dataclass(frozen=True)
class EndpointConfig:
    address: str
    timeout: float = 30.0
    max_retries: int = 3
    backoff: float = 0.5
    auth_env: str | None = None
    options: dict = field(default_factory=dict)

    _KEYS = ("address", "timeout", "max_retries", "backoff", "auth_env", "options")

    @classmethod
    def from_dict(cls, d: dict) -> "EndpointConfig":
        unknown = set(d) - set(cls._KEYS)
        if unknown:
            raise ConfigError(f"unknown endpoint keys: {sorted(unknown)}")
        if "address" not in d:
            raise ConfigError("endpoint block needs an 'address'")
        cfg = cls(
            address=str(d["address"]),
            timeout=float(d.get("timeout", 30.0)),
            max_retries=int(d.get("max_retries", 3)),
            backoff=float(d.get("backoff", 0.5)),
            auth_env=d.get("auth_env"),
            options=dict(d.get("options", {})),
        )
        if cfg.max_retries < 0 or cfg.timeout <= 0 or cfg.backoff < 0:
            raise ConfigError(f"invalid endpoint settings for {cfg.address!r}")
        return cfg

    @property
    def is_mock(self) -> bool:
        return self.address.startswith("mock:")


@dataclass(frozen=True)
class SynthResult:
    audio: bytes
    truncated: bool = False


# ---------------------------------------------------------------- HTTP


def _http_post(cfg: EndpointConfig, payload: dict) -> tuple[bytes, dict]:
    headers = {"Content-Type": "application/json"}
    if cfg.auth_env:
        token = os.environ.get(cfg.auth_env)
        if token:
            headers["Authorization"] = f"Bearer {token}"
    req = urllib.request.Request(
        cfg.address, data=json.dumps(payload, ensure_ascii=False).encode("utf-8"), headers=headers, method="POST"
    )
    try:
        with urllib.request.urlopen(req, timeout=cfg.timeout) as resp:
            return resp.read(), dict(resp.headers)
    except urllib.error.HTTPError as exc:
        if exc.code == 429 or exc.code >= 500:
            raise TransientEndpointError(f"{cfg.address}: HTTP {exc.code}", status=exc.code) from exc
        raise EndpointError(f"{cfg.address}: HTTP {exc.code}", status=exc.code) from exc
    except (urllib.error.URLError, TimeoutError, ConnectionError) as exc:
        raise TransientEndpointError(f"{cfg.address}: {exc}") from exc


def _json_text(body: bytes, address: str) -> str:
    try:
        obj = json.loads(body.decode("utf-8"))
        return str(obj["text"])
    except (ValueError, KeyError, TypeError) as exc:
        raise EndpointError(f"{address}: malformed response ({exc})") from exc


class _Client:
    def __init__(self, cfg: EndpointConfig, transport: Callable | None = None, sleep=time.sleep):
        self.cfg = cfg
        self._sleep = sleep
        self.transport = transport or (self._mock_transport() if cfg.is_mock else self._http_transport)

    def _mock_transport(self):
        raise NotImplementedError

    def _http_transport(self, payload: dict):
        raise NotImplementedError

    def call(self, payload: dict):
        attempt = 0
        while True:
            attempt += 1
            try:
                return self.transport(payload)
            except TransientEndpointError as exc:
                if attempt > self.cfg.max_retries:
                    raise EndpointError(f"giving up after {attempt} attempts: {exc}", exc.status, attempt) from exc
                delay = self.cfg.backoff * 2 ** (attempt - 1)
                log.warning("transient failure on %s (attempt %d), retrying in %.2fs", self.cfg.address, attempt, delay)
                self._sleep(delay)
            except EndpointError as exc:
                exc.attempt = attempt
                raise


class TextGenClient(_Client):
    def generate(self, system: str, user: str, request_id: str) -> str:
        return self.call({"system": system, "user": user, "request_id": request_id})

    def _http_transport(self, payload):
        body, _ = _http_post(self.cfg, payload)
        return _json_text(body, self.cfg.address)

    def _mock_transport(self):
        return MockTextGenerator(int(self.cfg.options.get("seed", 0)))


class SpeechSynthClient(_Client):
    def synthesize(self, text: str, style_tags, request_id: str) -> SynthResult:
        return self.call({"text": text, "style_tags": list(style_tags), "request_id": request_id})

    def _http_transport(self, payload):
        body, headers = _http_post(self.cfg, payload)
        flag = {k.lower(): v for k, v in headers.items()}.get("x-audio-truncated", "")
        return SynthResult(body, flag.lower() in ("1", "true", "yes"))

    def _mock_transport(self):
        return MockSynthesizer(int(self.cfg.options.get("seed", 0)))


class RecognizerClient(_Client):
    def transcribe(self, audio: bytes, request_id: str, audio_path: str | None = None) -> str:
        payload = {"audio": base64.b64encode(audio).decode("ascii"), "request_id": request_id}
        if audio_path is not None:
            payload["audio_path"] = audio_path
        return self.call(payload)

    def _http_transport(self, payload):
        body, _ = _http_post(self.cfg, payload)
        return _json_text(body, self.cfg.address)

    def _mock_transport(self):
        o = self.cfg.options
        return MockRecognizer(
            p_sub=float(o.get("p_sub", 0.0)),
            p_del=float(o.get("p_del", 0.0)),
            p_ins=float(o.get("p_ins", 0.0)),
            keyword_rate=float(o.get("keyword_rate", 0.0)),
            keywords=tuple(o.get("keywords", ())),
            seed=int(o.get("seed", 0)),
        )


# ---------------------------------------------------------------- WAV helpers


def _chunk(tag: bytes, data: bytes) -> bytes:
    pad = b"\x00" if len(data) % 2 else b""
    return tag + struct.pack("<I", len(data)) + data + pad


def encode_wav(samples: np.ndarray, comment: str | None = None, rate: int = SAMPLE_RATE) -> bytes:
    """RIFF/WAVE, PCM 16-bit LE mono, with an optional LIST/INFO/ICMT comment."""
    pcm = np.asarray(samples, dtype="<i2").tobytes()
    fmt = struct.pack("<HHIIHH", 1, 1, rate, rate * 2, 2, 16)
    body = b"WAVE" + _chunk(b"fmt ", fmt)
    if comment is not None:
        body += _chunk(b"LIST", b"INFO" + _chunk(b"ICMT", comment.encode("utf-8") + b"\x00"))
    body += _chunk(b"data", pcm)
    return b"RIFF" + struct.pack("<I", len(body)) + body


@dataclass(frozen=True)
class WavInfo:
    sample_rate: int
    channels: int
    bits: int
    frames: int
    comment: str | None

    @property
    def duration_s(self) -> float:
        return self.frames / self.sample_rate


def read_wav_info(data: bytes) -> WavInfo:
    if len(data) < 12 or data[:4] != b"RIFF" or data[8:12] != b"WAVE":
        raise ValueError("not a RIFF/WAVE file")
    pos = 12
    fmt = None
    comment = None
    frames = None
    while pos + 8 <= len(data):
        tag = data[pos : pos + 4]
        size = struct.unpack("<I", data[pos + 4 : pos + 8])[0]
        payload = data[pos + 8 : pos + 8 + size]
        if tag == b"fmt ":
            fmt = struct.unpack("<HHIIHH", payload[:16])
        elif tag == b"LIST" and payload[:4] == b"INFO":
            sub = 4
            while sub + 8 <= len(payload):
                stag = payload[sub : sub + 4]
                ssize = struct.unpack("<I", payload[sub + 4 : sub + 8])[0]
                if stag == b"ICMT":
                    comment = payload[sub + 8 : sub + 8 + ssize].rstrip(b"\x00").decode("utf-8")
                sub += 8 + ssize + (ssize % 2)
        elif tag == b"data":
            if fmt is None:
                raise ValueError("data chunk before fmt chunk")
            frames = size // (fmt[1] * fmt[5] // 8)
        pos += 8 + size + (size % 2)
    if fmt is None or frames is None:
        raise ValueError("missing fmt or data chunk")
    return WavInfo(fmt[2], fmt[1], fmt[5], frames, comment)


def _digest_int(*parts) -> int:
    h = hashlib.sha256("\x1f".join(str(p) for p in parts).encode("utf-8")).digest()
    return int.from_bytes(h[:8], "little")


# ---------------------------------------------------------------- mocks


def mock_duration(text: str) -> float:
    """Natural (unclamped) mock duration: 0.25 s per token plus 1 s."""
    return 0.25 * len(tokenize(text)) + 1.0


class MockSynthesizer:
    """Deterministic stand-in TTS.

    Duration is ``min(0.25 s * tokens + 1 s, 30 s)``; the waveform (sawtooth
    plus noise) is seeded from a hash of the text and style tags. The label
    is embedded as a LIST/INFO comment so the mock recognizer can "hear" it.
    """

    def __init__(self, seed: int = 0):
        self.seed = seed

    def __call__(self, payload: dict) -> SynthResult:
        text = payload["text"]
        tags = list(payload.get("style_tags", ()))
        natural = mock_duration(text)
        dur = min(natural, MAX_SYNTH_SECONDS)
        n = int(round(dur * SAMPLE_RATE))
        key = _digest_int(self.seed, text, *tags)
        period = 40 + key % 160
        t = np.arange(n, dtype=np.int64)
        tone = (t % period) * 12000 // period - 6000
        noise = np.random.default_rng(key).integers(-800, 800, n, dtype=np.int64)
        return SynthResult(encode_wav((tone + noise).astype(np.int16), comment=text), natural > MAX_SYNTH_SECONDS)


_CJK_POOL = (
    "的一是在不了有和人这中大为上个国我以要他时来用们生到作地于出就分对成会可主发年动同工也能下过子说产种面而方后多定行学法所民得"
    "经十三之进着等部度家电力里如水化高自二理起小物现实加量都两体制机当使点从业本去把性好应开它合还因由其些然前外天政四日那社"
)
_LATIN_POOL = "abcdefghijklmnopqrstuvwxyz"
_DIGIT_POOL = "0123456789"


def _pool_for(ch: str) -> str:
    cls = classify_script(ch)
    if cls is ScriptClass.CJK:
        return _CJK_POOL
    if cls is ScriptClass.DIGIT:
        return _DIGIT_POOL
    return _LATIN_POOL


def corrupt_text(
    text: str,
    rng: random.Random,
    p_sub: float = 0.0,
    p_del: float = 0.0,
    p_ins: float = 0.0,
    keyword_rate: float = 0.0,
    keywords=(),
) -> str:
    """Seeded character-level corruption used by :class:`MockRecognizer`.

    Keyword pass first: for each keyword (given order) found in the text,
    draw ``rng.random()``; below ``keyword_rate`` every non-space character of
    its first occurrence is replaced from its script pool. Character pass:
    whitespace is copied without draws; for every other character draw
    ``r``: ``r < p_del`` deletes, ``r < p_del + p_sub`` substitutes (uniform
    over the script pool minus the character), else keeps; then one more
    draw below ``p_ins`` inserts a pool character after it.
    """
    for kw in keywords:
        at = text.find(kw)
        if at < 0:
            continue
        if rng.random() < keyword_rate:
            garbled = "".join(
                c if c.isspace() else rng.choice([p for p in _pool_for(c) if p != c]) for c in kw
            )
            text = text[:at] + garbled + text[at + len(kw) :]

    out: list[str] = []
    for c in text:
        if c.isspace():
            out.append(c)
            continue
        r = rng.random()
        if r < p_del:
            pass
        elif r < p_del + p_sub:
            out.append(rng.choice([p for p in _pool_for(c) if p != c]))
        else:
            out.append(c)
        if rng.random() < p_ins:
            out.append(rng.choice(_pool_for(c)))
    return "".join(out)


class MockRecognizer:
    """Reads the label embedded by :class:`MockSynthesizer` and corrupts it.

    With all rates at zero this is an echo recognizer. The RNG is seeded by
    ``"{seed}:{label}"`` so every sample's corruption is reproducible on its
    own, independent of scoring order.
    """

    def __init__(self, p_sub=0.0, p_del=0.0, p_ins=0.0, keyword_rate=0.0, keywords=(), seed=0):
        self.p_sub, self.p_del, self.p_ins = p_sub, p_del, p_ins
        self.keyword_rate = keyword_rate
        self.keywords = tuple(keywords)
        self.seed = seed

    def __call__(self, payload: dict) -> str:
        try:
            info = read_wav_info(base64.b64decode(payload["audio"]))
        except ValueError as exc:
            raise EndpointError(f"mock recognizer: {exc}", status=400) from exc
        if info.comment is None:
            return ""
        rng = random.Random(f"{self.seed}:{info.comment}")
        return corrupt_text(info.comment, rng, self.p_sub, self.p_del, self.p_ins, self.keyword_rate, self.keywords)


_SLOT_RE = re.compile(r"(Attribute|Brand|Pattern|Material|Product|Series|Type): ([^;\n]*);")
_COUNT_RE = re.compile(r"generate (\d+) new sentences")


class MockTextGenerator:
    """Offline stand-in for the pseudo-label LLM.

    Parses the user prompt back into keywords and example sentences, then
    builds each new sentence from a random example by swapping a keyword it
    contains for another prompt keyword (or prefixing one). Output is a
    numbered list, seeded by the prompt text.
    """

    def __init__(self, seed: int = 0):
        self.seed = seed

    def __call__(self, payload: dict) -> str:
        user = payload["user"]
        keywords = []
        for _, value in _SLOT_RE.findall(user):
            keywords.extend(k.strip() for k in value.split(",") if k.strip())
        m = _COUNT_RE.search(user)
        count = int(m.group(1)) if m else 5
        examples = []
        if "Here are some examples:" in user:
            block = user.split("Here are some examples:", 1)[1]
            for line in block.splitlines():
                if line.startswith("Based on the template"):
                    break
                if line.strip():
                    examples.append(line.strip())
        if not examples:
            return ""
        rng = random.Random(_digest_int(self.seed, payload.get("system", ""), user))
        lines = []
        for n in range(count):
            sentence = rng.choice(examples)
            if keywords:
                new = rng.choice(keywords)
                present = sorted((k for k in keywords if k.lower() in sentence.lower()), key=len, reverse=True)
                if present:
                    sentence = re.sub(re.escape(present[0]), lambda _m: new, sentence, count=1, flags=re.IGNORECASE)
                else:
                    sentence = f"{new} {sentence}"
            lines.append(f"{n + 1}. {sentence}")
        return "\n".join(lines)
