import json
import math
import random

import pytest

from conftest import SEEDS
from sdfuzz.corpus import CampaignState, CoverageDelta, Origin, SchedulerParams, Seed, score_seed
from sdfuzz.engine import GreyboxEngine, VirtualClock, energy_for, fuzz_round, select_next
from sdfuzz.errors import ContractError
from sdfuzz.store import CampaignStore
from sdfuzz.targets import get_target
from sdfuzz.targets.mini_wav import minimal_wav


def state_with(scores):
    s = CampaignState()
    for i, sc in enumerate(scores):
        # new_edges=sc with alpha=1, beta=0 gives score sc
        s.add_seed(Seed(i, bytes([i + 1]), Origin.initial(), CoverageDelta(sc, 0), float(sc)))
    return s


EDGE_ONLY = SchedulerParams(1.0, 0.0)


def draw_fraction(state, n=10000, seed=0):
    rng = random.Random(seed)
    hits = sum(select_next(state, EDGE_ONLY, rng).seed_id == 0 for _ in range(n))
    return hits / n


def test_select_singleton():
    s = state_with([3])
    rng = random.Random(1)
    assert {select_next(s, EDGE_ONLY, rng).seed_id for _ in range(50)} == {0}


def test_select_empty_queue():
    with pytest.raises(ContractError):
        select_next(CampaignState(), EDGE_ONLY, random.Random(0))


def test_select_uniform_pair():
    assert abs(draw_fraction(state_with([0, 0])) - 0.5) <= 0.02


def test_select_weighted_pair():
    # weights (9 + 1) : (0 + 1)
    assert abs(draw_fraction(state_with([9, 0])) - 10 / 11) <= 0.02


def test_select_uniform_flag_ignores_scores():
    s = state_with([50, 0])
    rng = random.Random(3)
    picks = [select_next(s, EDGE_ONLY, rng, uniform=True, base_energy=4) for _ in range(10000)]
    assert abs(sum(p.seed_id == 0 for p in picks) / 10000 - 0.5) <= 0.02
    assert {p.energy for p in picks} == {4}


def test_select_deterministic():
    s = state_with([1, 2, 3, 4])
    ra, rb = random.Random(5), random.Random(5)
    a = [select_next(s, EDGE_ONLY, ra).seed_id for _ in range(200)]
    b = [select_next(s, EDGE_ONLY, rb).seed_id for _ in range(200)]
    assert a == b and len(set(a)) == 4


@pytest.mark.parametrize("score,max_seen,base", [(0, 0, 8), (5, 5, 8), (3, 10, 2), (0.5, 100, 1)])
def test_energy_law(score, max_seen, base):
    want = max(1, math.ceil(base * (1 + score / (1 + max_seen))))
    assert energy_for(score, max_seen, base) == want >= 1


def test_energy_needs_positive_base():
    with pytest.raises(ContractError):
        energy_for(1, 1, 0)


def test_minimal_round():
    stats = fuzz_round(CampaignState(), get_target("mini_xml"), 1, random.Random(0))
    assert stats.execs == 1


def test_budget_must_be_positive():
    with pytest.raises(ContractError):
        fuzz_round(CampaignState(), get_target("mini_xml"), 0, random.Random(0))


def seeded_state(target_name) -> tuple[CampaignState, GreyboxEngine]:
    state = CampaignState()
    engine = GreyboxEngine(get_target(target_name))
    for p in sorted((SEEDS / target_name).iterdir()):
        engine.execute(state, p.read_bytes(), Origin.initial())
    return state, engine


def test_round_replay_is_identical():
    runs = []
    for _ in range(2):
        state, engine = seeded_state("mini_png")
        stats = engine.fuzz_round(state, 3000, random.Random(99))
        runs.append((stats, [(s.id, s.payload, s.score) for s in state.queue],
                     sorted(g.index for g in state.crash_groups.values())))
    assert runs[0] == runs[1]


def test_round_invariants():
    state, engine = seeded_state("mini_xml")
    rng = random.Random(4)
    edges = state.global_coverage.edge_count
    total_execs = state.exec_counter
    for r in range(4):
        stats = engine.fuzz_round(state, 1500, rng, r)
        assert stats.execs <= 1500
        total_execs += stats.execs
        assert state.exec_counter == total_execs == stats.exec_counter
        assert stats.edges_total >= edges
        edges = stats.edges_total
    for s in state.queue:
        assert s.score == score_seed(s.coverage_delta, engine.params)
        assert s.coverage_delta.is_new
    assert len({s.id for s in state.queue}) == len(state.queue)


def test_crashes_are_not_queued():
    state = CampaignState()
    engine = GreyboxEngine(get_target("mini_xml"))
    out = engine.execute(state, b"<e>" * 33 + b"</e>" * 33, Origin.initial())
    assert out.group is not None and out.new_group and out.seed is None
    assert not state.queue and state.global_coverage.is_empty()
    hit = state.canaries_triggered["XML001"]
    assert hit.exec_counter == 1 and out.group.representative.exec_counter == 1
    again = engine.execute(state, b"<e>" * 34 + b"</e>" * 34, Origin.initial())
    assert again.group is out.group and not again.new_group and out.group.count == 2
    assert state.canaries_triggered["XML001"].exec_counter == 1


def test_byte_level_wav_finds_zero_byte_rate():
    # observed first trigger at exec 27535 within a pinned 50000 budget
    state = CampaignState()
    engine = GreyboxEngine(get_target("mini_wav"), mutation_optimization=False)
    engine.execute(state, minimal_wav(), Origin.initial())
    engine.fuzz_round(state, 50000, random.Random(1))
    assert "WAV001" in state.canaries_triggered
    assert state.canaries_triggered["WAV001"].exec_counter <= 50001


def test_store_integration(tmp_path):
    store = CampaignStore(tmp_path)
    state = CampaignState()
    engine = GreyboxEngine(get_target("mini_xml"), store=store, clock=VirtualClock())
    engine.execute(state, (SEEDS / "mini_xml" / "flat.xml").read_bytes(), Origin.initial())
    engine.execute(state, b"<e>" * 33 + b"</e>" * 33, Origin.initial())
    engine.fuzz_round(state, 200, random.Random(0), round_number=0)
    engine.fuzz_round(state, 200, random.Random(1), round_number=1)
    lines = (tmp_path / "report" / "rounds.jsonl").read_text().splitlines()
    assert [json.loads(x)["round"] for x in lines] == [0, 1]
    assert {"execs", "new_seeds", "crashes", "edges_total", "blocks_total"} <= json.loads(lines[0]).keys()
    assert len(list((tmp_path / "queue").glob("*.bin"))) == len(state.queue)
    group = json.loads((tmp_path / "crashes" / "g0" / "group.json").read_text())
    assert group["canary_ids"] == ["XML001"] and group["count"] >= 1
    assert (tmp_path / "crashes" / "g0" / "input_0.bin").exists()


def test_stop_when_halts_round():
    state, _ = seeded_state("mini_xml")
    engine = GreyboxEngine(get_target("mini_xml"), stop_when=lambda s: s.exec_counter >= 50)
    stats = engine.fuzz_round(state, 1000, random.Random(0))
    assert state.exec_counter == 50 and stats.execs == 49
