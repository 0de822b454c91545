import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from sdfuzz.corpus import (
    CampaignState,
    CoverageDelta,
    CoverageMap,
    CrashArtifact,
    FaultLocation,
    Frame,
    Origin,
    SchedulerParams,
    Seed,
    Signal,
    ensure_campaign_dirs,
    load_seed,
    merge_coverage,
    save_seed,
    score_seed,
)
from sdfuzz.errors import ContractError, ValidationError

SIZE = 256
bits = st.frozensets(st.integers(0, SIZE - 1), max_size=40)
maps = st.builds(lambda e, b: CoverageMap(SIZE, e, b), bits, bits)


def test_score_examples():
    assert score_seed(CoverageDelta(0, 0), SchedulerParams(3.0, 2.0)) == 0
    assert score_seed(CoverageDelta(5, 3), SchedulerParams(1.0, 0.5)) == 6.5
    assert score_seed(CoverageDelta(2, 7), SchedulerParams(0.0, 1.0)) == 7.0


@pytest.mark.parametrize("alpha,beta", [(-1, 1), (1, -0.1), (0, 0)])
def test_scheduler_params_rejects(alpha, beta):
    with pytest.raises(ValidationError):
        SchedulerParams(alpha, beta)


def test_negative_delta_rejected():
    with pytest.raises(ValidationError):
        CoverageDelta(-1, 0)


@given(st.integers(0, 500), st.integers(0, 500), st.integers(0, 500), st.integers(0, 500),
       st.floats(0, 10), st.floats(0.01, 10))
def test_score_monotone(e1, b1, e2, b2, alpha, beta):
    hi = CoverageDelta(max(e1, e2), max(b1, b2))
    lo = CoverageDelta(min(e1, e2), min(b1, b2))
    p = SchedulerParams(alpha, beta)
    assert score_seed(hi, p) >= score_seed(lo, p)


def test_merge_examples():
    empty = CoverageMap(SIZE)
    merged, delta = merge_coverage(empty, empty)
    assert merged == empty and delta == CoverageDelta(0, 0)
    g = CoverageMap(SIZE, frozenset({1, 5}), frozenset({100, 101}))
    assert merge_coverage(g, g) == (g, CoverageDelta(0, 0))
    local = CoverageMap(SIZE, frozenset({5, 9, 12}), frozenset({101, 102, 103}))
    _, delta = merge_coverage(g, local)
    # set difference, by hand: {9, 12} and {102, 103}
    assert delta == CoverageDelta(2, 2)


def test_merge_size_mismatch():
    with pytest.raises(ContractError):
        merge_coverage(CoverageMap(256), CoverageMap(512))


def test_map_size_power_of_two():
    with pytest.raises(ValidationError):
        CoverageMap(1000)


@given(maps, maps, maps)
def test_merge_is_commutative_idempotent_monoid(a, b, c):
    ab = merge_coverage(a, b)[0]
    assert ab == merge_coverage(b, a)[0]
    assert merge_coverage(ab, c)[0] == merge_coverage(a, merge_coverage(b, c)[0])[0]
    assert merge_coverage(a, a)[0] == a
    assert merge_coverage(a, CoverageMap(SIZE))[0] == a
    assert merge_coverage(CoverageMap(SIZE), a)[0] == a


def _popcount(bitmap: bytes) -> int:
    return sum(bin(b).count("1") for b in bitmap)


@given(maps, maps)
def test_merge_popcount_law(g, local):
    merged, delta = merge_coverage(g, local)
    assert _popcount(merged.edge_bitmap()) == _popcount(g.edge_bitmap()) + delta.new_edges
    assert _popcount(merged.block_bitmap()) == _popcount(g.block_bitmap()) + delta.new_blocks


@given(maps)
def test_bitmap_round_trip(m):
    assert CoverageMap.from_bitmaps(m.edge_bitmap(), m.block_bitmap()) == m


def test_save_seed_layout(tmp_path):
    seed = Seed(0, b"<a/>", Origin.initial())
    path = save_seed(seed, tmp_path)
    assert path == tmp_path / "queue" / "id0_oI.bin"
    assert path.read_bytes() == b"<a/>"
    assert load_seed(tmp_path, 0) == seed


def test_save_seed_origin_codes(tmp_path):
    m = save_seed(Seed(3, b"x", Origin.mutation(0)), tmp_path)
    g = save_seed(Seed(4, b"y", Origin.generator(2)), tmp_path)
    assert (m.name, g.name) == ("id3_oM0.bin", "id4_oG2.bin")
    assert load_seed(tmp_path, 3).origin == Origin.mutation(0)
    assert load_seed(tmp_path, 4).origin == Origin.generator(2)


def test_save_seed_rejects_empty_and_oversized(tmp_path):
    with pytest.raises(ValidationError):
        save_seed(Seed(0, b"", Origin.initial()), tmp_path)
    with pytest.raises(ValidationError):
        save_seed(Seed(1, b"x" * 17, Origin.initial()), tmp_path, max_input_bytes=16)


def test_save_load_random_payload(tmp_path):
    rng = random.Random(42)
    payload = bytes(rng.randrange(256) for _ in range(1024))
    delta = CoverageDelta(7, 3)
    seed = Seed(9, payload, Origin.mutation(2), delta, score_seed(delta, SchedulerParams()), 123)
    save_seed(seed, tmp_path)
    back = load_seed(tmp_path, 9)
    assert back.payload == payload
    assert back.score == seed.score
    assert back == seed


@settings(max_examples=50)
@given(
    st.integers(0, 2**63), st.binary(min_size=1, max_size=256),
    st.sampled_from([Origin.initial(), Origin.mutation(1), Origin.generator(4)]),
    st.integers(0, 1000), st.integers(0, 1000), st.integers(0, 10**9),
)
def test_persistence_round_trip(tmp_path_factory, sid, payload, origin, e, b, at):
    root = tmp_path_factory.mktemp("rt")
    delta = CoverageDelta(e, b)
    seed = Seed(sid, payload, origin, delta, score_seed(delta, SchedulerParams()), at)
    save_seed(seed, root)
    assert load_seed(root, sid) == seed


def test_ensure_campaign_dirs(tmp_path):
    root = ensure_campaign_dirs(tmp_path / "c")
    assert sorted(p.name for p in root.iterdir()) == ["crashes", "feedback", "queue", "report"]


def _artifact(**kw):
    base = dict(input_id=1, signal=Signal.SEGV, fault_ip=FaultLocation("t", "f", 3),
                stack=(Frame("f", 3), Frame("g", 1)))
    base.update(kw)
    return CrashArtifact(**base)


def test_crash_artifact_invariants():
    a = _artifact()
    assert CrashArtifact.from_dict(a.to_dict()) == a
    with pytest.raises(ValidationError):
        _artifact(stack=())
    with pytest.raises(ValidationError):
        _artifact(fault_ip=FaultLocation("t", "g", 1))
    with pytest.raises(ValidationError):
        _artifact(canary_id="XML001")
    with pytest.raises(ValidationError):
        _artifact(signal=Signal.CANARY_TRAP)
    assert _artifact(signal=Signal.CANARY_TRAP, canary_id="XML001").canary_id == "XML001"


def test_state_tracks_max_score():
    s = CampaignState()
    s.add_seed(Seed(s.allocate_seed_id(), b"a", Origin.initial(), score=2.5))
    s.add_seed(Seed(s.allocate_seed_id(), b"b", Origin.initial(), score=1.0))
    assert s.max_score_seen == 2.5
    assert [q.id for q in s.queue] == [0, 1]
    assert s.seed_by_id(1).payload == b"b" and s.seed_by_id(7) is None
