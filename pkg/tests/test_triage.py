import random
from collections import Counter

import pytest
from hypothesis import given
from hypothesis import strategies as st

from conftest import FIXTURES, fixture_bytes
from sdfuzz.corpus import CampaignState, CrashArtifact, FaultLocation, Frame, Signal
from sdfuzz.errors import BacktraceParseError
from sdfuzz.hashing import fnv1a64
from sdfuzz.targets import get_target, run_target
from sdfuzz.triage import (
    RUNTIME_DENYLIST,
    dedup_insert,
    parse_backtrace_text,
    render_backtrace,
    retained_frames,
    stack_hash,
    to_crash_vector,
)

names = st.sampled_from(["parse_elem", "lookup_entity", "f", "g", "h", "??", "abort", "raise",
                         "main_trampoline", "png_read_png"])
frames = st.lists(st.builds(Frame, names, st.integers(0, 200)), min_size=1, max_size=12)


def test_fnv_reference_values():
    # published FNV-1a 64 test vectors
    assert fnv1a64(b"") == 0xCBF29CE484222325
    assert fnv1a64(b"a") == 0xAF63DC4C8601EC8C
    assert fnv1a64(b"foobar") == 0x85944171F73967E8


def test_stack_hash_law():
    fr = [Frame("raise", 0), Frame("parse_elem", 61), Frame("parse_content", 92)]
    assert stack_hash(fr, 5) == fnv1a64(b"parse_elem#61|parse_content#92")
    assert stack_hash(fr, 1) == fnv1a64(b"parse_elem#61")
    assert stack_hash([Frame("??", 0), Frame("abort", 0)]) == fnv1a64(b"UNKNOWN")
    with pytest.raises(ValueError):
        stack_hash(fr, 0)


@given(frames, st.integers(1, 6), st.integers(0, 6))
def test_stack_hash_prefix_property(fr, k, extra):
    kept = retained_frames(fr)
    cut = len(fr)
    # smallest raw prefix that still holds the first k retained frames, plus slack
    if len(kept) >= k:
        seen = 0
        for i, f in enumerate(fr):
            seen += f.function not in RUNTIME_DENYLIST
            if seen == k:
                cut = i + 1
                break
    prefix = fr[: min(len(fr), cut + extra)]
    assert stack_hash(prefix, k) == stack_hash(fr, k)


def test_xml001_vector():
    res = run_target(get_target("mini_xml"), fixture_bytes("mini_xml", "xml001_witness.bin"))
    v = to_crash_vector(res.artifact)
    assert v.top_function == "parse_elem"
    assert v.ip == "mini_xml:parse_elem:61"
    assert v.signal == "CanaryTrap"


def _art(fn, site, outer=(), signal=Signal.SEGV, n=0):
    stack = (Frame(fn, site), *outer)
    return CrashArtifact(n, signal, FaultLocation("t", fn, site), stack, exec_counter=n)


def test_dedup_basic():
    state = CampaignState()
    a = _art("f", 1, (Frame("g", 2),))
    g, new = dedup_insert(state, a)
    assert new and g.count == 1 and g.index == 0
    g2, new2 = dedup_insert(state, g.representative)
    assert g2 is g and not new2 and g.count == 2


def test_dedup_three_vectors():
    rng = random.Random(3)
    bases = [("f", 1), ("g", 2), ("h", 3)]
    state = CampaignState()
    want = Counter()
    for n in range(100):
        fn, site = rng.choice(bases)
        want[(fn, site)] += 1
        dedup_insert(state, _art(fn, site, (Frame("main_trampoline", 0),), n=n))
    assert len(state.crash_groups) == 3
    got = {(g.vector.top_function, int(g.vector.ip.rsplit(":", 1)[1])): g.count
           for g in state.crash_groups.values()}
    assert got == dict(want) and sum(got.values()) == 100


def test_dedup_keeps_first_trigger_and_canaries():
    state = CampaignState()
    a = CrashArtifact(5, Signal.CANARY_TRAP, FaultLocation("t", "f", 1), (Frame("f", 1),),
                      canary_id="XML001", exec_counter=5, wall_ms=2)
    b = CrashArtifact(9, Signal.CANARY_TRAP, FaultLocation("t", "f", 1), (Frame("f", 1),),
                      canary_id="XML001", exec_counter=9, wall_ms=7)
    g, _ = dedup_insert(state, a, payload=b"first")
    dedup_insert(state, b, payload=b"second")
    assert (g.first_exec_counter, g.first_wall_ms, g.representative_input) == (5, 2, b"first")
    assert g.canary_ids == {"XML001"}


def test_parse_three_frame_fixture():
    art = parse_backtrace_text((FIXTURES / "bt_segv_3frames.txt").read_text())
    assert len(art.stack) == 3
    assert art.signal is Signal.SEGV
    assert art.stack[0].function == "lookup_entity"
    assert art.fault_ip == FaultLocation("mini_xml", "lookup_entity", 49)
    assert art.access is None


def test_parse_unknown_frames_retained():
    art = parse_backtrace_text((FIXTURES / "bt_unknown_frames.txt").read_text())
    assert [f.function for f in art.stack[:2]] == ["??", "??"]
    assert to_crash_vector(art).top_function == "wav_count_frames"


def test_parse_errors():
    with pytest.raises(BacktraceParseError):
        parse_backtrace_text("#0  0x1 in f () at x.c:1\n")
    with pytest.raises(BacktraceParseError, match="SIGWAT"):
        parse_backtrace_text("Program terminated with signal SIGWAT, Who knows.\n#0 f () at x.c:1\n")
    with pytest.raises(BacktraceParseError):
        parse_backtrace_text("Program terminated with signal SIGSEGV, Segmentation fault.\n")


def test_explicit_target_name():
    art = parse_backtrace_text((FIXTURES / "bt_segv_3frames.txt").read_text(), "other")
    assert art.fault_ip.target == "other"


sigs = st.sampled_from([Signal.SEGV, Signal.ABRT, Signal.FPE, Signal.ILL, Signal.BUS])
ident = st.from_regex(r"[a-z_][a-z0-9_]{0,12}", fullmatch=True)


@given(sigs, st.lists(st.tuples(ident, st.integers(0, 999)), min_size=1, max_size=8))
def test_render_parse_round_trip(sig, fr):
    stack = tuple(Frame(f, s) for f, s in fr)
    art = CrashArtifact(0, sig, FaultLocation("mini_xml", *stack[0]), stack)
    back = parse_backtrace_text(render_backtrace(art))
    assert back.signal is sig and back.stack == stack
