"""Greybox core: seed scheduling, mutation, execution and coverage integration."""

from __future__ import annotations

import bisect
import itertools
import math
import random
import time
from dataclasses import asdict, dataclass, replace
from typing import Callable, Sequence

from .corpus import (
    DEFAULT_MAX_INPUT_BYTES,
    CampaignState,
    CanaryHit,
    Origin,
    SchedulerParams,
    Seed,
    merge_coverage,
    score_seed,
)
from .errors import ContractError
from .mutators import mutate_with_ops
from .store import CampaignStore
from .targets.base import ExecutionResult, Status, TargetProgram, run_target
from .triage import DEFAULT_STACK_DEPTH, CrashGroup, dedup_insert

DEFAULT_BASE_ENERGY = 8
SELECTION_EPSILON = 1.0


@dataclass(frozen=True)
class QueueEntry:
    seed_id: int
    score: float
    energy: int


def energy_for(score: float, max_score_seen: float, base_energy: int = DEFAULT_BASE_ENERGY) -> int:
    """Mutations spent on one selection: ``ceil(base * (1 + score / (1 + max_score)))``."""
    if base_energy < 1:
        raise ContractError(f"base_energy must be >= 1, got {base_energy}")
    return max(1, math.ceil(base_energy * (1 + score / (1 + max_score_seen))))


def _pick(queue: Sequence[Seed], cum_weights: Sequence[float], rng: random.Random) -> Seed:
    # one rng.random() draw, same as random.choices with cum_weights
    total = cum_weights[-1]
    return queue[bisect.bisect(cum_weights, rng.random() * total, 0, len(queue) - 1)]


def _entry(seed: Seed, state: CampaignState, uniform: bool, base_energy: int) -> QueueEntry:
    if uniform:
        return QueueEntry(seed.id, seed.score, base_energy)
    return QueueEntry(seed.id, seed.score, energy_for(seed.score, state.max_score_seen, base_energy))


def select_next(
    state: CampaignState,
    params: SchedulerParams,
    rng: random.Random,
    uniform: bool = False,
    base_energy: int = DEFAULT_BASE_ENERGY,
) -> QueueEntry:
    """Pick a queued seed with probability proportional to ``score + 1``.

    ``uniform=True`` is the scheduling half of the mutation-optimization-off
    ablation: equal weights and a flat ``base_energy``.
    """
    if not state.queue:
        raise ContractError("select_next on an empty queue")
    if uniform:
        seed = state.queue[rng.randrange(len(state.queue))]
    else:
        cum = list(itertools.accumulate(
            score_seed(s.coverage_delta, params) + SELECTION_EPSILON for s in state.queue
        ))
        seed = _pick(state.queue, cum, rng)
    return _entry(seed, state, uniform, base_energy)


class WallClock:
    def __init__(self) -> None:
        self._t0 = time.monotonic()

    def now_ms(self, state: CampaignState) -> int:
        return int((time.monotonic() - self._t0) * 1000)


class VirtualClock:
    """Time derived from the execution counter, so reports are replayable."""

    def __init__(self, us_per_exec: int = 50) -> None:
        self.us_per_exec = us_per_exec

    def now_ms(self, state: CampaignState) -> int:
        return state.exec_counter * self.us_per_exec // 1000


@dataclass(frozen=True)
class RoundStats:
    round: int
    execs: int
    new_seeds: int
    crashes: int
    new_crash_groups: int
    edges_total: int
    blocks_total: int
    exec_counter: int

    def to_dict(self) -> dict[str, int]:
        return asdict(self)


@dataclass(frozen=True)
class ExecOutcome:
    result: ExecutionResult
    seed: Seed | None = None
    group: CrashGroup | None = None
    new_group: bool = False


class GreyboxEngine:
    """Single-worker fuzzing engine bound to one target.

    All state lives in the :class:`CampaignState` passed to each call; the
    engine only caches derived data (selection weights, splice pool) and the
    edge-coverage curve.
    """

    def __init__(
        self,
        target: TargetProgram,
        params: SchedulerParams | None = None,
        *,
        mutation_optimization: bool = True,
        base_energy: int = DEFAULT_BASE_ENERGY,
        k_stack_depth: int = DEFAULT_STACK_DEPTH,
        max_input_bytes: int = DEFAULT_MAX_INPUT_BYTES,
        store: CampaignStore | None = None,
        clock: WallClock | VirtualClock | None = None,
        stop_when: Callable[[CampaignState], bool] | None = None,
    ) -> None:
        self.target = target
        self.params = params or SchedulerParams()
        self.mutation_optimization = mutation_optimization
        self.base_energy = base_energy
        self.k = k_stack_depth
        self.max_input_bytes = max_input_bytes
        self.store = store
        self.clock = clock or WallClock()
        self.stop_when = stop_when
        self.edge_curve: list[tuple[int, int]] = []
        self._cum: list[float] = []
        self._pool: list[bytes] = []

    @property
    def format_model(self):
        return self.target.format_model if self.mutation_optimization else None

    def _sync_caches(self, state: CampaignState) -> None:
        # the queue only grows and scores are frozen, so caches extend in place
        for s in state.queue[len(self._cum):]:
            prev = self._cum[-1] if self._cum else 0.0
            self._cum.append(prev + score_seed(s.coverage_delta, self.params) + SELECTION_EPSILON)
            self._pool.append(s.payload)

    def select(self, state: CampaignState, rng: random.Random) -> tuple[Seed, QueueEntry]:
        if not state.queue:
            raise ContractError("select_next on an empty queue")
        uniform = not self.mutation_optimization
        self._sync_caches(state)
        if uniform:
            seed = state.queue[rng.randrange(len(state.queue))]
        else:
            seed = _pick(state.queue, self._cum, rng)
        return seed, _entry(seed, state, uniform, self.base_energy)

    def execute(self, state: CampaignState, payload: bytes, origin: Origin) -> ExecOutcome:
        """Run one input, then queue it (new coverage) or hand it to triage (crash)."""
        state.exec_counter += 1
        result = run_target(self.target, payload, state.map_size)
        if result.status is Status.CRASH:
            n = state.exec_counter
            artifact = replace(result.artifact, input_id=n, exec_counter=n,
                               wall_ms=self.clock.now_ms(state))
            group, is_new = dedup_insert(state, artifact, self.k, payload)
            if self.store is not None:
                self.store.record_crash(group, payload)
            cid = artifact.canary_id
            if cid is not None and cid not in state.canaries_triggered:
                state.canaries_triggered[cid] = CanaryHit(cid, n, artifact.wall_ms, n)
            return ExecOutcome(result, group=group, new_group=is_new)
        merged, delta = merge_coverage(state.global_coverage, result.local_coverage)
        if not delta.is_new:
            return ExecOutcome(result)
        state.global_coverage = merged
        seed = Seed(
            id=state.allocate_seed_id(),
            payload=payload,
            origin=origin,
            coverage_delta=delta,
            score=score_seed(delta, self.params),
            discovered_at_exec=state.exec_counter,
        )
        state.add_seed(seed)
        if self.store is not None:
            self.store.save_seed(seed)
        if delta.new_edges:
            self.edge_curve.append((state.exec_counter, merged.edge_count))
        return ExecOutcome(result, seed=seed)

    def _stopped(self, state: CampaignState) -> bool:
        return self.stop_when is not None and self.stop_when(state)

    def fuzz_round(
        self, state: CampaignState, budget_execs: int, rng: random.Random, round_number: int = 0,
    ) -> RoundStats:
        """Spend up to ``budget_execs`` executions mutating queued seeds."""
        if budget_execs < 1:
            raise ContractError(f"budget_execs must be >= 1, got {budget_execs}")
        execs = new_seeds = crashes = new_groups = 0

        def account(out: ExecOutcome) -> None:
            nonlocal execs, new_seeds, crashes, new_groups
            execs += 1
            new_seeds += out.seed is not None
            crashes += out.group is not None
            new_groups += out.new_group

        if not state.queue:
            # nothing to mutate: bootstrap from the format skeleton (or one random byte)
            grown, _ = mutate_with_ops(b"", self.format_model, 1, rng, (), self.max_input_bytes)[0]
            account(self.execute(state, grown, Origin.initial()))
        while execs < budget_execs and state.queue and not self._stopped(state):
            parent, entry = self.select(state, rng)
            n = min(entry.energy, budget_execs - execs)
            for mutant, _ in mutate_with_ops(
                parent.payload, self.format_model, n, rng, self._pool, self.max_input_bytes
            ):
                account(self.execute(state, mutant, Origin.mutation(parent.id)))
                if self._stopped(state):
                    break
        stats = RoundStats(
            round=round_number,
            execs=execs,
            new_seeds=new_seeds,
            crashes=crashes,
            new_crash_groups=new_groups,
            edges_total=state.global_coverage.edge_count,
            blocks_total=state.global_coverage.block_count,
            exec_counter=state.exec_counter,
        )
        if self.store is not None:
            self.store.flush()
            self.store.append_round(stats.to_dict())
        return stats


def fuzz_round(
    state: CampaignState,
    target: TargetProgram,
    budget_execs: int,
    rng: random.Random,
    **engine_options,
) -> RoundStats:
    """One-shot convenience wrapper around :meth:`GreyboxEngine.fuzz_round`."""
    return GreyboxEngine(target, **engine_options).fuzz_round(state, budget_execs, rng)
