import base64
import json
import random
import threading
from http.server import BaseHTTPRequestHandler, HTTPServer

import numpy as np
import pytest

from weakasr.endpoints import (
    SAMPLE_RATE,
    EndpointConfig,
    MockRecognizer,
    MockSynthesizer,
    MockTextGenerator,
    RecognizerClient,
    SpeechSynthClient,
    TextGenClient,
    _pool_for,
    corrupt_text,
    encode_wav,
    mock_duration,
    read_wav_info,
)
from weakasr.errors import ConfigError, EndpointError, TransientEndpointError


class Flaky:
    """Transport that fails ``k`` times, then answers; records every call."""

    def __init__(self, k, answer="ok"):
        self.k, self.answer, self.calls = k, answer, []

    def __call__(self, payload):
        self.calls.append(dict(payload))
        if len(self.calls) <= self.k:
            raise TransientEndpointError("busy", status=503)
        return self.answer


@pytest.mark.parametrize("k", [0, 1, 2, 3])
def test_retry_then_success(k):
    sleeps = []
    t = Flaky(k)
    client = TextGenClient(EndpointConfig("mock:", max_retries=3, backoff=0.5), transport=t, sleep=sleeps.append)
    assert client.generate("s", "u", "req-1") == "ok"
    assert len(t.calls) == k + 1
    assert {c["request_id"] for c in t.calls} == {"req-1"}
    assert sleeps == [0.5 * 2**n for n in range(k)]


def test_retry_exhausted():
    t = Flaky(10)
    client = TextGenClient(EndpointConfig("mock:", max_retries=2, backoff=0), transport=t, sleep=lambda s: None)
    with pytest.raises(EndpointError) as exc:
        client.generate("s", "u", "r")
    assert exc.value.attempt == 3 and exc.value.status == 503
    assert not isinstance(exc.value, TransientEndpointError)


def test_permanent_error_not_retried():
    calls = []

    def transport(payload):
        calls.append(payload)
        raise EndpointError("bad request", status=400)

    client = TextGenClient(EndpointConfig("mock:"), transport=transport, sleep=lambda s: None)
    with pytest.raises(EndpointError):
        client.generate("s", "u", "r")
    assert len(calls) == 1


def test_config_validation():
    cfg = EndpointConfig.from_dict({"address": "http://x", "max_retries": 1, "auth_env": "TOKEN"})
    assert cfg.max_retries == 1 and not cfg.is_mock
    with pytest.raises(ConfigError):
        EndpointConfig.from_dict({"address": "mock:", "api_key": "secret"})
    with pytest.raises(ConfigError):
        EndpointConfig.from_dict({"timeout": 3})
    with pytest.raises(ConfigError):
        EndpointConfig.from_dict({"address": "mock:", "max_retries": -1})


# ------------------------------------------------------------------ WAV


def test_wav_round_trip():
    samples = (np.arange(1600) % 100 - 50).astype(np.int16)
    data = encode_wav(samples, comment="标签 lv")
    info = read_wav_info(data)
    assert (info.sample_rate, info.channels, info.bits, info.frames) == (SAMPLE_RATE, 1, 16, 1600)
    assert info.comment == "标签 lv"
    assert info.duration_s == 0.1
    assert read_wav_info(encode_wav(samples[:3])).comment is None
    with pytest.raises(ValueError):
        read_wav_info(b"RIFF0000WAVX")


def test_wav_readable_by_stdlib(tmp_path):
    import wave

    p = tmp_path / "a.wav"
    p.write_bytes(encode_wav(np.zeros(800, dtype=np.int16), comment="x"))
    with wave.open(str(p)) as w:
        assert (w.getframerate(), w.getnchannels(), w.getsampwidth(), w.getnframes()) == (16000, 1, 2, 800)


# ------------------------------------------------------------------ mocks


def test_mock_duration_formula():
    assert mock_duration("a b c d") == 2.0
    assert mock_duration("我想买包") == 2.0
    synth = MockSynthesizer(seed=1)
    res = synth({"text": "lv 包", "style_tags": []})
    assert read_wav_info(res.audio).duration_s == 1.5 and not res.truncated
    long = synth({"text": " ".join(["x"] * 200), "style_tags": []})
    assert long.truncated and read_wav_info(long.audio).duration_s == 30.0


def test_mock_synth_deterministic():
    a = MockSynthesizer(3)({"text": "abc", "style_tags": ["calm"]}).audio
    assert a == MockSynthesizer(3)({"text": "abc", "style_tags": ["calm"]}).audio
    assert a != MockSynthesizer(3)({"text": "abc", "style_tags": ["loud"]}).audio
    assert a != MockSynthesizer(4)({"text": "abc", "style_tags": ["calm"]}).audio


def _independent_corrupt(text, seed_str, p_sub, p_del, p_ins):
    # replays the documented draw order with the module's character pools
    rng = random.Random(seed_str)
    out = []
    for c in text:
        if c.isspace():
            out.append(c)
            continue
        pool = _pool_for(c)
        r = rng.random()
        if r < p_del:
            pass
        elif r < p_del + p_sub:
            out.append(rng.choice([p for p in pool if p != c]))
        else:
            out.append(c)
        if rng.random() < p_ins:
            out.append(rng.choice(pool))
    return "".join(out)


def test_corruption_draw_sequence():
    for text in ["这个 lv 包 20 好看", "speedy 20 老花", ""]:
        for seed in range(20):
            got = corrupt_text(text, random.Random(f"{seed}:x"), p_sub=0.3, p_del=0.2, p_ins=0.2)
            assert got == _independent_corrupt(text, f"{seed}:x", 0.3, 0.2, 0.2)
    assert corrupt_text("这个 lv", random.Random(1)) == "这个 lv"


def test_recognizer_echo_and_seeded():
    wav = MockSynthesizer()({"text": "我 想 买 lv", "style_tags": []}).audio
    payload = {"audio": base64.b64encode(wav).decode()}
    assert MockRecognizer()(payload) == "我 想 买 lv"
    noisy = MockRecognizer(p_sub=0.5, seed=2)
    assert noisy(payload) == noisy(payload) == MockRecognizer(p_sub=0.5, seed=2)(payload)


def test_keyword_garbling():
    out = corrupt_text("我 要 speedy 20", random.Random(0), keyword_rate=1.0, keywords=["speedy 20"])
    assert out.startswith("我 要 ") and "speedy" not in out and len(out) == len("我 要 speedy 20")


def test_mock_textgen_parses_prompt():
    user = (
        "Below is the product information for your reference:\n"
        "Attribute: value preservation; Brand: lv, gucci; Pattern: monogram;\n"
        "Material: ; Product: ; Series: speedy 20;\nType: tote;\n"
        "Here are some examples:\n我 想 买 lv 的 包\n这个 tote 好看\n"
        "Based on the template in the examples, please generate 4 new sentences. The content and style should be aligned with the examples."
    )
    reply = MockTextGenerator(seed=1)({"system": "s", "user": user})
    lines = reply.splitlines()
    assert len(lines) == 4 and lines[0].startswith("1. ")
    assert reply == MockTextGenerator(seed=1)({"system": "s", "user": user})


def test_mock_clients_end_to_end():
    synth = SpeechSynthClient(EndpointConfig("mock:"))
    rec = RecognizerClient(EndpointConfig("mock:", options={"p_sub": 0.0}))
    res = synth.synthesize("lv 包 很 好", ["calm"], "r1")
    assert rec.transcribe(res.audio, "r1") == "lv 包 很 好"


# ------------------------------------------------------------------ HTTP


class _Handler(BaseHTTPRequestHandler):
    failures = 0
    seen = []

    def log_message(self, *args):
        pass

    def do_POST(self):
        body = json.loads(self.rfile.read(int(self.headers["Content-Length"])))
        type(self).seen.append((self.path, body, self.headers.get("Authorization")))
        if type(self).failures > 0:
            type(self).failures -= 1
            self.send_response(503)
            self.end_headers()
            return
        if self.path == "/synth":
            audio = encode_wav(np.zeros(16000 * 2, dtype=np.int16), comment=body["text"])
            self.send_response(200)
            self.send_header("Content-Type", "audio/wav")
            self.send_header("X-Audio-Truncated", "true" if body["text"] == "long" else "false")
            self.end_headers()
            self.wfile.write(audio)
        elif self.path == "/bad":
            self.send_response(400)
            self.end_headers()
        else:
            out = json.dumps({"text": f"echo:{body.get('user') or body.get('request_id')}"}).encode()
            self.send_response(200)
            self.send_header("Content-Type", "application/json")
            self.end_headers()
            self.wfile.write(out)


@pytest.fixture
def server():
    _Handler.failures = 0
    _Handler.seen = []
    srv = HTTPServer(("127.0.0.1", 0), _Handler)
    th = threading.Thread(target=srv.serve_forever, daemon=True)
    th.start()
    yield f"http://127.0.0.1:{srv.server_address[1]}"
    srv.shutdown()
    srv.server_close()


def test_http_textgen_with_retry_and_auth(server, monkeypatch):
    monkeypatch.setenv("WEAKASR_TEST_TOKEN", "t0k")
    _Handler.failures = 2
    cfg = EndpointConfig(server + "/gen", backoff=0, auth_env="WEAKASR_TEST_TOKEN")
    assert TextGenClient(cfg, sleep=lambda s: None).generate("sys", "hello", "rid") == "echo:hello"
    assert len(_Handler.seen) == 3
    assert {b["request_id"] for _, b, _ in _Handler.seen} == {"rid"}
    assert {auth for _, _, auth in _Handler.seen} == {"Bearer t0k"}


def test_http_synth_and_recognizer(server):
    synth = SpeechSynthClient(EndpointConfig(server + "/synth"))
    res = synth.synthesize("long", [], "r")
    assert res.truncated and read_wav_info(res.audio).duration_s == 2.0
    assert not synth.synthesize("short", [], "r").truncated
    rec = RecognizerClient(EndpointConfig(server + "/asr"))
    assert rec.transcribe(res.audio, "r9") == "echo:r9"
    assert base64.b64decode(_Handler.seen[-1][1]["audio"]) == res.audio


def test_http_client_error(server):
    with pytest.raises(EndpointError) as exc:
        TextGenClient(EndpointConfig(server + "/bad")).generate("s", "u", "r")
    assert exc.value.status == 400 and len(_Handler.seen) == 1


def test_http_unreachable_is_transient():
    cfg = EndpointConfig("http://127.0.0.1:9/", max_retries=1, backoff=0, timeout=2)
    with pytest.raises(EndpointError) as exc:
        TextGenClient(cfg, sleep=lambda s: None).generate("s", "u", "r")
    assert exc.value.attempt == 2
