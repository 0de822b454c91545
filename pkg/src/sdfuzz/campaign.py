"""Campaign driver: the generate / execute / analyse / feed back loop and its report."""

from __future__ import annotations

import csv
import io
import json
import logging
import os
import random
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any, Callable

from .corpus import DEFAULT_MAP_SIZE, DEFAULT_MAX_INPUT_BYTES, CampaignState, Origin, SchedulerParams
from .engine import DEFAULT_BASE_ENERGY, GreyboxEngine, VirtualClock, WallClock
from .errors import ConfigError, ContractError, GeneratorConfigError, GeneratorEmpty, StoreError
from .feedback import ContextLimits, GenerationContext, build_generation_context
from .generator import (
    Backend,
    GeneratorRequest,
    GeneratorResponse,
    generate_mock,
    generate_remote,
    load_endpoint_config,
    validate_candidates,
)
from .store import CampaignStore, dump_json
from .targets import get_target
from .triage import DEFAULT_STACK_DEPTH

log = logging.getLogger(__name__)

DEFAULT_GEN_INTERVAL = 10_000
DEFAULT_NUM_SEEDS = 16


@dataclass(frozen=True)
class CampaignConfig:
    target_name: str
    exec_budget: int = 200_000
    out_dir: str = "out"
    corpus_in: str | None = None
    budget_secs: float | None = None
    gen_interval: int = DEFAULT_GEN_INTERVAL
    params: SchedulerParams = field(default_factory=SchedulerParams)
    use_generator: bool = True
    use_crash_feedback: bool = True
    use_mutation_optimization: bool = True
    generator_backend: Backend = Backend.MOCK
    rng_seed: int = 1
    k_stack_depth: int = DEFAULT_STACK_DEPTH
    max_input_bytes: int = DEFAULT_MAX_INPUT_BYTES
    map_size: int = DEFAULT_MAP_SIZE
    num_seeds: int = DEFAULT_NUM_SEEDS
    diversity: float = 0.5
    base_energy: int = DEFAULT_BASE_ENERGY
    limits: ContextLimits = field(default_factory=ContextLimits)
    endpoint_config: str | None = None
    record_transcripts: bool = False
    clock: str = "wall"  # "wall" | "virtual"
    stop_on_all_canaries: bool = False

    def validate(self) -> None:
        try:
            get_target(self.target_name)
        except ContractError as exc:
            raise ConfigError(str(exc)) from exc
        if self.exec_budget < 1:
            raise ConfigError(f"exec_budget must be >= 1, got {self.exec_budget}")
        if self.budget_secs is not None and self.budget_secs <= 0:
            raise ConfigError("budget_secs must be positive")
        if self.gen_interval < 1:
            raise ConfigError("gen_interval must be >= 1")
        if not 1 <= self.num_seeds <= 64:
            raise ConfigError("num_seeds must be in [1, 64]")
        if self.clock not in ("wall", "virtual"):
            raise ConfigError(f"clock must be 'wall' or 'virtual', got {self.clock!r}")
        if self.corpus_in is None and not self.use_generator:
            raise ConfigError("an initial corpus is required when the generator is disabled")
        if self.corpus_in is not None and not Path(self.corpus_in).is_dir():
            raise ConfigError(f"corpus directory not found: {self.corpus_in}")
        if self.use_generator and self.generator_backend is Backend.REMOTE and not self.endpoint_config:
            raise ConfigError("the remote backend needs --endpoint-config")

    def to_dict(self) -> dict[str, Any]:
        d = asdict(self)
        d["generator_backend"] = self.generator_backend.value
        return d


@dataclass(frozen=True)
class BugRecord:
    canary_id: str
    first_exec_counter: int
    first_wall_ms: int


@dataclass
class CampaignReport:
    target: str
    bug_coverage: list[BugRecord]
    edge_coverage_curve: list[tuple[int, int]]
    crash_group_count: int
    crash_groups: list[dict[str, Any]]
    candidate_validity: list[dict[str, Any]]
    total_execs: int
    rounds: int
    edges_total: int
    blocks_total: int
    queue_size: int
    elapsed_ms: int
    notes: list[str]
    config: dict[str, Any]

    @property
    def time_to_bug(self) -> dict[str, dict[str, int]]:
        return {b.canary_id: {"exec_counter": b.first_exec_counter, "wall_ms": b.first_wall_ms}
                for b in self.bug_coverage}

    def to_dict(self) -> dict[str, Any]:
        return {
            "target": self.target,
            "bug_coverage": [asdict(b) for b in self.bug_coverage],
            "time_to_bug": self.time_to_bug,
            "edge_coverage_curve": [list(p) for p in self.edge_coverage_curve],
            "crash_group_count": self.crash_group_count,
            "crash_groups": self.crash_groups,
            "candidate_validity": self.candidate_validity,
            "total_execs": self.total_execs,
            "rounds": self.rounds,
            "edges_total": self.edges_total,
            "blocks_total": self.blocks_total,
            "queue_size": self.queue_size,
            "elapsed_ms": self.elapsed_ms,
            "notes": self.notes,
            "config": self.config,
        }

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> CampaignReport:
        return cls(
            target=d["target"],
            bug_coverage=[BugRecord(**b) for b in d["bug_coverage"]],
            edge_coverage_curve=[(int(e), int(n)) for e, n in d["edge_coverage_curve"]],
            crash_group_count=d["crash_group_count"],
            crash_groups=d["crash_groups"],
            candidate_validity=d["candidate_validity"],
            total_execs=d["total_execs"],
            rounds=d["rounds"],
            edges_total=d["edges_total"],
            blocks_total=d["blocks_total"],
            queue_size=d["queue_size"],
            elapsed_ms=d["elapsed_ms"],
            notes=d["notes"],
            config=d["config"],
        )


def load_corpus(corpus_dir: str | os.PathLike[str], max_input_bytes: int) -> list[bytes]:
    """Regular files of ``corpus_dir`` in name order; empty or oversized files are skipped."""
    out = []
    for p in sorted(Path(corpus_dir).iterdir()):
        if not p.is_file() or p.name.startswith("."):
            continue
        data = p.read_bytes()
        if not data or len(data) > max_input_bytes:
            log.warning("skipping corpus file %s (%d bytes)", p, len(data))
            continue
        out.append(data)
    return out


def make_generator(config: CampaignConfig) -> Callable[[GeneratorRequest], GeneratorResponse]:
    if config.generator_backend is Backend.MOCK:
        return lambda req: generate_mock(req, config.target_name, config.max_input_bytes)
    endpoint = load_endpoint_config(config.endpoint_config)
    return lambda req: generate_remote(req, endpoint, max_input_bytes=config.max_input_bytes)


def _check_out_dir(out: Path) -> None:
    queue = out / "queue"
    if queue.is_dir() and any(queue.iterdir()):
        raise ConfigError(f"{out} already holds a campaign; choose an empty --out directory")


class Campaign:
    """Runs one configured campaign; see :func:`run_campaign`."""

    def __init__(self, config: CampaignConfig,
                 generator: Callable[[GeneratorRequest], GeneratorResponse] | None = None) -> None:
        config.validate()
        self.config = config
        self.target = get_target(config.target_name)
        out = Path(config.out_dir)
        _check_out_dir(out)
        self.store = CampaignStore(out, config.max_input_bytes)
        self.state = CampaignState(rng_seed=config.rng_seed, map_size=config.map_size)
        self.clock = VirtualClock() if config.clock == "virtual" else WallClock()
        self.engine = GreyboxEngine(
            self.target,
            config.params,
            mutation_optimization=config.use_mutation_optimization,
            base_energy=config.base_energy,
            k_stack_depth=config.k_stack_depth,
            max_input_bytes=config.max_input_bytes,
            store=self.store,
            clock=self.clock,
            stop_when=self._should_stop,
        )
        self.generator = None
        if config.use_generator:
            self.generator = generator or make_generator(config)
        self.validity: list[dict[str, Any]] = []
        self.notes: list[str] = []
        self.rounds = 0
        self._canary_ids = {c.canary_id for c in self.target.canary_catalog}

    def _should_stop(self, state: CampaignState) -> bool:
        cfg = self.config
        if state.exec_counter >= cfg.exec_budget:
            return True
        if cfg.budget_secs is not None and self.clock.now_ms(state) >= cfg.budget_secs * 1000:
            return True
        return cfg.stop_on_all_canaries and self._canary_ids <= state.canaries_triggered.keys()

    def _generate(self, round_number: int) -> None:
        cfg = self.config
        ctx: GenerationContext = build_generation_context(
            self.state, self.target, cfg.limits,
            include_feedback=cfg.use_crash_feedback,
            round_number=round_number,
            num_seeds=cfg.num_seeds,
        )
        self.store.write_feedback(round_number, ctx.feedback_document())
        request = GeneratorRequest(ctx, cfg.num_seeds, cfg.rng_seed, cfg.diversity)
        try:
            response = self.generator(request)
        except GeneratorEmpty as exc:
            self._note(round_number, f"generator returned no candidates ({exc}); mutation only")
            self._record_transcript(round_number, exc.transcript)
            return
        except GeneratorConfigError as exc:
            self._note(round_number, f"generator disabled after configuration error: {exc}")
            self.generator = None
            return
        self._record_transcript(round_number, response.raw_transcript)
        part = validate_candidates(response.candidates, self.target)
        self.validity.append({"round": round_number, "candidates": part.total, **part.fractions()})
        origin = Origin.generator(round_number)
        for payload in response.candidates:
            if self._should_stop(self.state):
                break
            self.engine.execute(self.state, payload, origin)

    def _note(self, round_number: int, text: str) -> None:
        log.warning("round %d: %s", round_number, text)
        self.notes.append(f"round {round_number}: {text}")

    def _record_transcript(self, round_number: int, transcript: str | None) -> None:
        if self.config.record_transcripts and transcript:
            path = self.store.root / "feedback" / f"transcript_round_{round_number}.txt"
            try:
                path.write_text(transcript, encoding="utf-8")
            except OSError as exc:
                raise StoreError(f"cannot save transcript ({exc.strerror})", path) from exc

    def run(self) -> CampaignReport:
        cfg, state, engine = self.config, self.state, self.engine
        rng = random.Random(cfg.rng_seed)
        if cfg.corpus_in is not None:
            for payload in load_corpus(cfg.corpus_in, cfg.max_input_bytes):
                if self._should_stop(state):
                    break
                engine.execute(state, payload, Origin.initial())
        # with a usable corpus the first round is mutation-only
        next_gen_at = cfg.gen_interval if state.queue else 0
        round_number = 0
        while not self._should_stop(state):
            if self.generator is not None and state.exec_counter >= next_gen_at:
                self._generate(round_number)
                next_gen_at = state.exec_counter + cfg.gen_interval
                if self._should_stop(state):
                    break
            horizon = next_gen_at if self.generator is not None else state.exec_counter + cfg.gen_interval
            budget = min(horizon, cfg.exec_budget) - state.exec_counter
            if budget < 1:
                break
            engine.fuzz_round(state, budget, rng, round_number)
            round_number += 1
            if not state.queue and self.generator is None:
                self.notes.append(f"round {round_number - 1}: queue empty, campaign stopped")
                break
        self.rounds = round_number
        # crashes from corpus loading or injected candidates may postdate the last round's flush
        self.store.flush()
        return self.report()

    def report(self) -> CampaignReport:
        state = self.state
        curve = list(self.engine.edge_curve)
        final = (state.exec_counter, state.global_coverage.edge_count)
        if not curve or curve[-1][0] != final[0]:
            curve.append(final)
        bugs = sorted(
            (BugRecord(h.canary_id, h.exec_counter, h.wall_ms) for h in state.canaries_triggered.values()),
            key=lambda b: (b.first_exec_counter, b.canary_id),
        )
        groups = sorted(state.crash_groups.values(), key=lambda g: g.index)
        return CampaignReport(
            target=self.target.name,
            bug_coverage=bugs,
            edge_coverage_curve=curve,
            crash_group_count=len(groups),
            crash_groups=[
                {
                    "index": g.index,
                    "vector": g.vector.to_dict(),
                    "count": g.count,
                    "first_exec_counter": g.first_exec_counter,
                    "first_wall_ms": g.first_wall_ms,
                    "canary_ids": sorted(g.canary_ids),
                }
                for g in groups
            ],
            candidate_validity=self.validity,
            total_execs=state.exec_counter,
            rounds=self.rounds,
            edges_total=state.global_coverage.edge_count,
            blocks_total=state.global_coverage.block_count,
            queue_size=len(state.queue),
            elapsed_ms=self.clock.now_ms(state),
            notes=self.notes,
            config=self.config.to_dict(),
        )


def run_campaign(
    config: CampaignConfig,
    generator: Callable[[GeneratorRequest], GeneratorResponse] | None = None,
) -> CampaignReport:
    """Run a campaign to budget exhaustion and write its report files."""
    campaign = Campaign(config, generator)
    report = campaign.run()
    emit_report(report, config.out_dir)
    cov = campaign.state.global_coverage
    _write_bytes(Path(config.out_dir) / "report" / "coverage_edges.bin", cov.edge_bitmap())
    _write_bytes(Path(config.out_dir) / "report" / "coverage_blocks.bin", cov.block_bitmap())
    return report


def _write_bytes(path: Path, data: bytes | str) -> None:
    try:
        if isinstance(data, str):
            path.write_text(data, encoding="utf-8", newline="")
        else:
            path.write_bytes(data)
    except OSError as exc:
        raise StoreError(f"cannot write report file ({exc.strerror})", path) from exc


def _csv(header: list[str], rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    return buf.getvalue()


def emit_report(report: CampaignReport, out_dir: str | os.PathLike[str]) -> list[Path]:
    """Write ``report.json``, ``bugs.csv`` and ``edges.csv`` under ``out_dir/report``."""
    rdir = Path(out_dir) / "report"
    try:
        rdir.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise StoreError(f"cannot create report dir ({exc.strerror})", rdir) from exc
    files = {
        "report.json": dump_json(report.to_dict()),
        "bugs.csv": _csv(["canary_id", "first_exec", "first_ms"],
                         [(b.canary_id, b.first_exec_counter, b.first_wall_ms) for b in report.bug_coverage]),
        "edges.csv": _csv(["exec_counter", "edges"], report.edge_coverage_curve),
    }
    paths = []
    for name, text in files.items():
        _write_bytes(rdir / name, text)
        paths.append(rdir / name)
    return paths


def load_report(out_dir: str | os.PathLike[str]) -> CampaignReport:
    path = Path(out_dir) / "report" / "report.json"
    return CampaignReport.from_dict(json.loads(path.read_text(encoding="utf-8")))
