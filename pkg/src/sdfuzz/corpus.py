"""Core data types: seeds, coverage maps, crash artifacts and campaign state.

Also owns the on-disk layout of the ``queue/`` directory.  Everything here is
plain data; the engine, analyzer and orchestrator build on top of it.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import TYPE_CHECKING, Any, NamedTuple

from .errors import ContractError, StoreError, ValidationError

if TYPE_CHECKING:
    from .triage import CrashGroup, CrashVector

DEFAULT_MAP_SIZE = 65536
DEFAULT_MAX_INPUT_BYTES = 4096

CAMPAIGN_SUBDIRS = ("queue", "crashes", "feedback", "report")


class Signal(str, Enum):
    SEGV = "SEGV"
    ABRT = "ABRT"
    FPE = "FPE"
    ILL = "ILL"
    BUS = "BUS"
    CANARY_TRAP = "CanaryTrap"


class OriginKind(str, Enum):
    INITIAL_CORPUS = "InitialCorpus"
    MUTATION = "Mutation"
    GENERATOR = "Generator"


@dataclass(frozen=True)
class Origin:
    kind: OriginKind
    parent_id: int | None = None
    round: int | None = None

    @classmethod
    def initial(cls) -> Origin:
        return cls(OriginKind.INITIAL_CORPUS)

    @classmethod
    def mutation(cls, parent_id: int) -> Origin:
        return cls(OriginKind.MUTATION, parent_id=parent_id)

    @classmethod
    def generator(cls, round_number: int) -> Origin:
        return cls(OriginKind.GENERATOR, round=round_number)

    @property
    def code(self) -> str:
        """Short tag used in queue file names: ``I``, ``M<parent>``, ``G<round>``."""
        if self.kind is OriginKind.MUTATION:
            return f"M{self.parent_id}"
        if self.kind is OriginKind.GENERATOR:
            return f"G{self.round}"
        return "I"


@dataclass(frozen=True)
class CoverageDelta:
    new_edges: int = 0
    new_blocks: int = 0

    def __post_init__(self) -> None:
        if self.new_edges < 0 or self.new_blocks < 0:
            raise ValidationError(f"negative coverage delta: {self}")

    @property
    def is_new(self) -> bool:
        return self.new_edges > 0 or self.new_blocks > 0


@dataclass(frozen=True)
class SchedulerParams:
    """Weights of the seed score ``alpha * new_edges + beta * new_blocks``."""

    alpha: float = 1.0
    beta: float = 0.5

    def __post_init__(self) -> None:
        if self.alpha < 0 or self.beta < 0 or self.alpha + self.beta <= 0:
            raise ValidationError(
                f"scheduler weights must be non-negative with a positive sum, "
                f"got alpha={self.alpha} beta={self.beta}"
            )


def score_seed(delta: CoverageDelta, params: SchedulerParams) -> float:
    return params.alpha * delta.new_edges + params.beta * delta.new_blocks


@dataclass(frozen=True)
class CoverageMap:
    """Edge and block hit bitmaps, stored sparsely as the set of set-bit indices."""

    map_size: int = DEFAULT_MAP_SIZE
    edges: frozenset[int] = frozenset()
    blocks: frozenset[int] = frozenset()

    def __post_init__(self) -> None:
        size = self.map_size
        if size <= 0 or size & (size - 1):
            raise ValidationError(f"map_size must be a power of two, got {size}")

    @property
    def edge_count(self) -> int:
        return len(self.edges)

    @property
    def block_count(self) -> int:
        return len(self.blocks)

    def is_empty(self) -> bool:
        return not self.edges and not self.blocks

    def edge_bitmap(self) -> bytes:
        return _to_bitmap(self.edges, self.map_size)

    def block_bitmap(self) -> bytes:
        return _to_bitmap(self.blocks, self.map_size)

    @classmethod
    def from_bitmaps(cls, edge_bits: bytes, block_bits: bytes) -> CoverageMap:
        if len(edge_bits) != len(block_bits):
            raise ContractError("edge and block bitmaps differ in size")
        return cls(
            map_size=len(edge_bits) * 8,
            edges=_from_bitmap(edge_bits),
            blocks=_from_bitmap(block_bits),
        )


def _to_bitmap(bits: frozenset[int], map_size: int) -> bytes:
    out = bytearray(map_size // 8)
    for b in bits:
        out[b >> 3] |= 1 << (b & 7)
    return bytes(out)


def _from_bitmap(raw: bytes) -> frozenset[int]:
    return frozenset(
        (i << 3) | j for i, byte in enumerate(raw) if byte for j in range(8) if byte >> j & 1
    )


def merge_coverage(global_map: CoverageMap, local: CoverageMap) -> tuple[CoverageMap, CoverageDelta]:
    """OR ``local`` into ``global_map``; the delta counts bits that were new."""
    if global_map.map_size != local.map_size:
        raise ContractError(
            f"coverage map size mismatch: {global_map.map_size} != {local.map_size}"
        )
    new_edges = local.edges - global_map.edges
    new_blocks = local.blocks - global_map.blocks
    if not new_edges and not new_blocks:
        return global_map, CoverageDelta(0, 0)
    merged = CoverageMap(
        global_map.map_size,
        global_map.edges | new_edges,
        global_map.blocks | new_blocks,
    )
    return merged, CoverageDelta(len(new_edges), len(new_blocks))


class Frame(NamedTuple):
    function: str
    site: int


class FaultLocation(NamedTuple):
    target: str
    function: str
    site: int

    def __str__(self) -> str:
        return f"{self.target}:{self.function}:{self.site}"


@dataclass(frozen=True)
class MemoryAccess:
    kind: str  # "read" | "write"
    address_class: str  # "null" | "oob_heap" | "oob_stack" | "wild"

    KINDS = ("read", "write")
    ADDRESS_CLASSES = ("null", "oob_heap", "oob_stack", "wild")

    def __post_init__(self) -> None:
        if self.kind not in self.KINDS or self.address_class not in self.ADDRESS_CLASSES:
            raise ValidationError(f"bad memory access descriptor: {self}")


@dataclass(frozen=True)
class CrashArtifact:
    input_id: int
    signal: Signal
    fault_ip: FaultLocation
    stack: tuple[Frame, ...]
    access: MemoryAccess | None = None
    canary_id: str | None = None
    exec_counter: int = 0
    wall_ms: int = 0

    def __post_init__(self) -> None:
        if not self.stack:
            raise ValidationError("crash artifact needs a non-empty stack")
        top = self.stack[0]
        if (self.fault_ip.function, self.fault_ip.site) != (top.function, top.site):
            raise ValidationError(f"fault_ip {self.fault_ip} does not match top frame {top}")
        if (self.canary_id is not None) != (self.signal is Signal.CANARY_TRAP):
            raise ValidationError("canary_id must be present exactly when signal is CanaryTrap")

    def to_dict(self) -> dict[str, Any]:
        return {
            "input_id": self.input_id,
            "signal": self.signal.value,
            "fault_ip": list(self.fault_ip),
            "stack": [list(f) for f in self.stack],
            "access": None if self.access is None else {
                "kind": self.access.kind,
                "address_class": self.access.address_class,
            },
            "canary_id": self.canary_id,
            "exec_counter": self.exec_counter,
            "wall_ms": self.wall_ms,
        }

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> CrashArtifact:
        access = d.get("access")
        return cls(
            input_id=d["input_id"],
            signal=Signal(d["signal"]),
            fault_ip=FaultLocation(*d["fault_ip"]),
            stack=tuple(Frame(*f) for f in d["stack"]),
            access=None if access is None else MemoryAccess(**access),
            canary_id=d.get("canary_id"),
            exec_counter=d.get("exec_counter", 0),
            wall_ms=d.get("wall_ms", 0),
        )


@dataclass(frozen=True)
class Seed:
    id: int
    payload: bytes
    origin: Origin
    coverage_delta: CoverageDelta = CoverageDelta()
    score: float = 0.0
    discovered_at_exec: int = 0

    def validate(self, max_input_bytes: int = DEFAULT_MAX_INPUT_BYTES) -> None:
        if not self.payload:
            raise ValidationError(f"seed {self.id} has an empty payload")
        if len(self.payload) > max_input_bytes:
            raise ValidationError(
                f"seed {self.id} payload is {len(self.payload)} bytes, limit {max_input_bytes}"
            )

    def meta(self) -> dict[str, Any]:
        return {
            "id": self.id,
            "origin": self.origin.kind.value,
            "parent_id": self.origin.parent_id,
            "round": self.origin.round,
            "new_edges": self.coverage_delta.new_edges,
            "new_blocks": self.coverage_delta.new_blocks,
            "score": self.score,
            "discovered_at_exec": self.discovered_at_exec,
        }


@dataclass
class CanaryHit:
    canary_id: str
    exec_counter: int
    wall_ms: int
    input_id: int


@dataclass
class CampaignState:
    """Mutable campaign state; owned and mutated by a single coordinator."""

    rng_seed: int = 0
    map_size: int = DEFAULT_MAP_SIZE
    global_coverage: CoverageMap = field(default=None)  # type: ignore[assignment]
    queue: list[Seed] = field(default_factory=list)
    crash_groups: dict[CrashVector, CrashGroup] = field(default_factory=dict)
    canaries_triggered: dict[str, CanaryHit] = field(default_factory=dict)
    exec_counter: int = 0
    next_seed_id: int = 0
    max_score_seen: float = 0.0

    def __post_init__(self) -> None:
        if self.global_coverage is None:
            self.global_coverage = CoverageMap(self.map_size)

    def allocate_seed_id(self) -> int:
        sid = self.next_seed_id
        self.next_seed_id += 1
        return sid

    def add_seed(self, seed: Seed) -> None:
        self.queue.append(seed)
        if seed.score > self.max_score_seen:
            self.max_score_seen = seed.score

    def seed_by_id(self, seed_id: int) -> Seed | None:
        for s in self.queue:
            if s.id == seed_id:
                return s
        return None


def ensure_campaign_dirs(root: str | os.PathLike[str]) -> Path:
    root = Path(root)
    try:
        for sub in CAMPAIGN_SUBDIRS:
            (root / sub).mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise StoreError(f"cannot create campaign tree ({exc.strerror})", root) from exc
    return root


def seed_paths(corpus_dir: str | os.PathLike[str], seed: Seed) -> tuple[Path, Path]:
    queue = Path(corpus_dir) / "queue"
    return queue / f"id{seed.id}_o{seed.origin.code}.bin", queue / f"id{seed.id}.meta.json"


def save_seed(
    seed: Seed,
    corpus_dir: str | os.PathLike[str],
    max_input_bytes: int = DEFAULT_MAX_INPUT_BYTES,
) -> Path:
    """Write ``queue/id{ID}_o{ORIGIN}.bin`` and its JSON sidecar; return the payload path."""
    seed.validate(max_input_bytes)
    bin_path, meta_path = seed_paths(corpus_dir, seed)
    try:
        bin_path.parent.mkdir(parents=True, exist_ok=True)
        bin_path.write_bytes(seed.payload)
        meta_path.write_text(json.dumps(seed.meta(), indent=2) + "\n", encoding="utf-8")
    except OSError as exc:
        raise StoreError(f"cannot write seed {seed.id} ({exc.strerror})", bin_path) from exc
    return bin_path


def load_seed(corpus_dir: str | os.PathLike[str], seed_id: int) -> Seed:
    queue = Path(corpus_dir) / "queue"
    meta_path = queue / f"id{seed_id}.meta.json"
    try:
        meta = json.loads(meta_path.read_text(encoding="utf-8"))
        matches = sorted(queue.glob(f"id{seed_id}_o*.bin"))
        if len(matches) != 1:
            raise StoreError(f"expected one payload file for seed {seed_id}, found {len(matches)}", queue)
        payload = matches[0].read_bytes()
    except OSError as exc:
        raise StoreError(f"cannot read seed {seed_id} ({exc.strerror})", meta_path) from exc
    kind = OriginKind(meta["origin"])
    return Seed(
        id=meta["id"],
        payload=payload,
        origin=Origin(kind, meta.get("parent_id"), meta.get("round")),
        coverage_delta=CoverageDelta(meta["new_edges"], meta["new_blocks"]),
        score=meta["score"],
        discovered_at_exec=meta["discovered_at_exec"],
    )
