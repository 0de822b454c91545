import json
import random
import re
import statistics
import threading
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer

import pytest
from hypothesis import given
from hypothesis import strategies as st

from conftest import FIXTURES, SEEDS, fixture_bytes
from sdfuzz.corpus import CampaignState, Origin
from sdfuzz.engine import GreyboxEngine
from sdfuzz.errors import ContractError, GeneratorConfigError, GeneratorEmpty, ValidationError
from sdfuzz.feedback import GenerationContext, encode_crash_feedback
from sdfuzz.generator import (
    Backend,
    EndpointConfig,
    GeneratorRequest,
    extract_candidates,
    generate_mock,
    generate_remote,
    load_endpoint_config,
    validate_candidates,
)
from sdfuzz.mutators import mutate
from sdfuzz.targets import Status, get_target, run_target
from sdfuzz.targets.mini_png import MAGIC

XML = get_target("mini_xml")


def ctx(target="mini_xml", round_number=0, feedback=()):
    return GenerationContext(target, get_target(target).format_doc, round_number, feedback=feedback)


def test_mock_xml_rng7():
    resp = generate_mock(GeneratorRequest(ctx(), num_seeds=8, rng_seed=7), "mini_xml")
    assert len(resp.candidates) == 8 and resp.backend is Backend.MOCK
    assert sum(run_target(XML, c).status is Status.OK for c in resp.candidates) >= 7


def test_mock_cardinality_and_determinism():
    assert len(generate_mock(GeneratorRequest(ctx(), num_seeds=1), "mini_xml").candidates) == 1
    for name in ("mini_xml", "mini_png", "mini_wav"):
        req = GeneratorRequest(ctx(name), num_seeds=16, rng_seed=3)
        assert generate_mock(req, name) == generate_mock(req, name)


def test_mock_unknown_grammar():
    with pytest.raises(ContractError):
        generate_mock(GeneratorRequest(ctx()), "mini_gif")


@pytest.mark.parametrize("n", [0, 65])
def test_request_bounds(n):
    with pytest.raises(ValidationError):
        GeneratorRequest(ctx(), num_seeds=n)
    with pytest.raises(ValidationError):
        GeneratorRequest(ctx(), diversity=1.5)


def test_mock_truncates_to_max_bytes():
    resp = generate_mock(GeneratorRequest(ctx("mini_png"), num_seeds=32, rng_seed=1), "mini_png", 40)
    assert all(len(c) <= 40 for c in resp.candidates)


def _depth(doc: bytes) -> int:
    """Maximum element nesting, by a regex tag walk independent of the parser."""
    depth = best = 0
    for m in re.finditer(rb"<(/?)[A-Za-z_][^<>]*?(/?)>", doc):
        if m.group(1):
            depth -= 1
        elif not m.group(2):
            depth += 1
            best = max(best, depth)
    return best


def test_xml001_feedback_deepens_nesting():
    state = CampaignState()
    w = fixture_bytes("mini_xml", "xml001_witness.bin")
    group = GreyboxEngine(XML).execute(state, w, Origin.initial()).group
    fb = encode_crash_feedback(group, w)
    for seed in range(1, 11):
        plain = generate_mock(GeneratorRequest(ctx(round_number=1), 16, seed), "mini_xml").candidates
        fed = generate_mock(GeneratorRequest(ctx(round_number=1, feedback=(fb,)), 16, seed),
                            "mini_xml").candidates
        median = statistics.median(_depth(c) for c in plain)
        assert sum(_depth(c) > median for c in fed) >= len(fed) / 2, seed


def test_feedback_only_adds_stressed_candidates():
    state = CampaignState()
    w = fixture_bytes("mini_xml", "xml001_witness.bin")
    fb = encode_crash_feedback(GreyboxEngine(XML).execute(state, w, Origin.initial()).group, w)
    plain = generate_mock(GeneratorRequest(ctx(round_number=2), 32, 5), "mini_xml").candidates
    fed = generate_mock(GeneratorRequest(ctx(round_number=2, feedback=(fb,)), 32, 5), "mini_xml").candidates
    same = sum(a == b for a, b in zip(plain, fed))
    assert 0 < same < 32


def test_mock_candidates_reach_deep_states():
    for name in ("mini_xml", "mini_png", "mini_wav"):
        t = get_target(name)
        cands = generate_mock(GeneratorRequest(ctx(name), 64, 11), name).candidates
        part = validate_candidates(cands, t)
        assert not part.shallow_invalid, name
        assert len(part.valid) >= 48, name


def test_validate_examples():
    png = get_target("mini_png")
    part = validate_candidates([b"<a/>"], XML)
    assert part.valid == [b"<a/>"]
    assert validate_candidates([MAGIC + b"\x00\x00"], png).deep_invalid
    noise = bytes(random.Random(0).randrange(256) for _ in range(16))
    assert validate_candidates([noise], png).shallow_invalid
    f = validate_candidates([b"<a/>", b"<a>", b"zz"], XML).fractions()
    assert abs(sum(f.values()) - 1) < 1e-9


def test_mock_validity_beats_byte_mutation():
    for name in ("mini_xml", "mini_png", "mini_wav"):
        t = get_target(name)
        corpus = next((SEEDS / name).iterdir()).read_bytes()
        mock = generate_mock(GeneratorRequest(ctx(name), 64, 21), name).candidates
        byte = mutate(corpus, None, 64, random.Random(21))
        mv = len(validate_candidates(mock, t).valid)
        bv = len(validate_candidates(byte, t).valid)
        assert mv > bv, (name, mv, bv)


# --- extraction -------------------------------------------------------------

def test_extract_fixture_corpus():
    exp = json.loads((FIXTURES / "remote" / "expected.json").read_text())
    assert len(exp["cases"]) == 50
    for name, want in exp["cases"].items():
        with open(FIXTURES / "remote" / "cases" / name, encoding="utf-8", newline="") as fh:
            text = fh.read()
        got = extract_candidates(text, exp["max_input_bytes"]).candidates
        assert [c.hex() for c in got] == want, name


def test_extract_reports_warnings():
    ex = extract_candidates("```seed\nencoding: hex\nzz\n```\n```seed\n<a/>\n```\n")
    assert ex.candidates == (b"<a/>",) and len(ex.warnings) == 1


@given(st.text(alphabet=st.sampled_from(list("`~ \nseedencoding:hxraw64b=AZz09<>/")), max_size=400))
def test_extract_is_total(text):
    ex = extract_candidates(text, 64)
    assert all(0 < len(c) <= 64 for c in ex.candidates)
    assert len(ex.candidates) <= text.count("\n") + 1


@given(st.text(max_size=300))
def test_extract_total_on_arbitrary_text(text):
    extract_candidates(text)


# --- remote over a local HTTP server ---------------------------------------

class _Server:
    """Replies with queued (status, body) pairs and records every request."""

    def __init__(self, replies):
        self.replies = list(replies)
        self.requests = []
        server = self

        class Handler(BaseHTTPRequestHandler):
            def do_POST(self):  # noqa: N802
                n = int(self.headers["Content-Length"])
                server.requests.append((self.path, dict(self.headers), json.loads(self.rfile.read(n))))
                status, body = server.replies.pop(0) if server.replies else (200, {"choices": []})
                data = json.dumps(body).encode()
                self.send_response(status)
                self.send_header("Content-Type", "application/json")
                self.send_header("Content-Length", str(len(data)))
                self.end_headers()
                self.wfile.write(data)

            def log_message(self, *args):
                pass

        self.httpd = ThreadingHTTPServer(("127.0.0.1", 0), Handler)
        self.thread = threading.Thread(target=self.httpd.serve_forever, daemon=True)

    @property
    def url(self):
        return f"http://127.0.0.1:{self.httpd.server_address[1]}/v1"

    def __enter__(self):
        self.thread.start()
        return self

    def __exit__(self, *exc):
        self.httpd.shutdown()
        self.httpd.server_close()


def completion(text):
    return {"choices": [{"message": {"role": "assistant", "content": text}}]}


RECORDED = json.loads((FIXTURES / "remote" / "recorded_three_blocks.json").read_text())


@pytest.fixture
def token(monkeypatch):
    monkeypatch.setenv("SDFUZZ_TEST_TOKEN", "secret-token")


def config(url, **kw):
    return EndpointConfig(base_url=url, model="m1", auth_env_var="SDFUZZ_TEST_TOKEN", timeout_s=5, **kw)


def no_sleep(_):
    pass


def test_remote_recorded_three_blocks(token):
    with _Server([(200, RECORDED)]) as srv:
        resp = generate_remote(GeneratorRequest(ctx(), 8), config(srv.url), sleep=no_sleep)
    assert resp.backend is Backend.REMOTE
    assert len(resp.candidates) == 3
    assert resp.candidates[0] == b"<a/>"
    assert resp.candidates[1] == resp.candidates[2] != resp.candidates[0]
    assert "```seed" in resp.raw_transcript
    path, headers, body = srv.requests[0]
    assert path == "/v1/chat/completions"
    assert headers["Authorization"] == "Bearer secret-token"
    assert body["model"] == "m1"
    assert [m["role"] for m in body["messages"]] == ["system", "user"]


def test_remote_empty_after_retries(token):
    sleeps = []
    with _Server([(200, completion("no blocks here"))] * 4) as srv:
        with pytest.raises(GeneratorEmpty) as info:
            generate_remote(GeneratorRequest(ctx()), config(srv.url, retry_max=3), sleep=sleeps.append)
    assert len(srv.requests) == 4
    assert sleeps == [0.5, 1.0, 2.0]  # exponential backoff
    assert "no blocks here" in info.value.transcript


def test_remote_retries_server_errors(token):
    with _Server([(500, {}), (200, completion("```seed\n<a/>\n```\n"))]) as srv:
        resp = generate_remote(GeneratorRequest(ctx()), config(srv.url), sleep=no_sleep)
    assert resp.candidates == (b"<a/>",) and len(srv.requests) == 2


@pytest.mark.parametrize("status", [401, 403])
def test_remote_auth_failure(token, status):
    with _Server([(status, {})]) as srv:
        with pytest.raises(GeneratorConfigError):
            generate_remote(GeneratorRequest(ctx()), config(srv.url), sleep=no_sleep)
    assert len(srv.requests) == 1


def test_remote_missing_token(monkeypatch):
    monkeypatch.delenv("SDFUZZ_TEST_TOKEN", raising=False)
    with pytest.raises(GeneratorConfigError):
        generate_remote(GeneratorRequest(ctx()), config("http://127.0.0.1:9"), sleep=no_sleep)


def test_remote_transport_failure(token):
    # nothing listens on the discard port
    with pytest.raises(GeneratorEmpty, match="transport"):
        generate_remote(GeneratorRequest(ctx()), config("http://127.0.0.1:9", retry_max=1),
                        sleep=no_sleep)


def test_remote_drops_oversized(token):
    text = f"```seed\nencoding: hex\n{'41' * 100}\n```\n```seed\n<a/>\n```\n"
    with _Server([(200, completion(text))]) as srv:
        resp = generate_remote(GeneratorRequest(ctx()), config(srv.url), max_input_bytes=50,
                               sleep=no_sleep)
    assert resp.candidates == (b"<a/>",)


def test_remote_caps_to_num_seeds(token):
    text = "".join(f"```seed\n<a{i}/>\n```\n" for i in range(5))
    with _Server([(200, completion(text))]) as srv:
        resp = generate_remote(GeneratorRequest(ctx(), num_seeds=2), config(srv.url), sleep=no_sleep)
    assert resp.candidates == (b"<a0/>", b"<a1/>")


def test_endpoint_config_files(tmp_path):
    (tmp_path / "e.toml").write_text('base_url = "http://x"\nmodel = "m"\nretry_max = 1\n')
    (tmp_path / "e.json").write_text('{"base_url": "http://x", "model": "m", "num_seeds": 4}')
    assert load_endpoint_config(tmp_path / "e.toml").retry_max == 1
    assert load_endpoint_config(tmp_path / "e.json").num_seeds == 4
    (tmp_path / "bad.json").write_text('{"base_url": "http://x", "model": "m", "colour": 1}')
    with pytest.raises(GeneratorConfigError, match="colour"):
        load_endpoint_config(tmp_path / "bad.json")
    (tmp_path / "short.json").write_text('{"model": "m"}')
    with pytest.raises(GeneratorConfigError, match="base_url"):
        load_endpoint_config(tmp_path / "short.json")
    with pytest.raises(GeneratorConfigError):
        load_endpoint_config(tmp_path / "missing.toml")
