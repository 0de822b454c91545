"""Instrumentation runtime shared by the bundled toy targets.

Each target is an ordinary Python parser sprinkled with ``t.hit(site)`` calls.
The tracer records the visited-site sequence and a shadow call stack, which
is all that is needed to build edge/block coverage and a symbolic crash
artifact without any real signals.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from typing import TYPE_CHECKING, Callable, Protocol

from ..corpus import (
    DEFAULT_MAP_SIZE,
    CoverageMap,
    CrashArtifact,
    FaultLocation,
    Frame,
    MemoryAccess,
    Signal,
)
from ..hashing import fnv1a64

if TYPE_CHECKING:
    import random

ROOT_FRAME = "main_trampoline"


class ParseError(Exception):
    """Raised inside a target when the input is rejected."""


class _Trap(Exception):
    def __init__(self, signal: Signal, canary_id: str | None, access: MemoryAccess | None,
                 stack: tuple[Frame, ...]) -> None:
        super().__init__(signal.value)
        self.signal = signal
        self.canary_id = canary_id
        self.access = access
        self.stack = stack


class Tracer:
    __slots__ = ("sites", "frames")

    def __init__(self) -> None:
        self.sites: list[int] = [0]
        self.frames: list[list] = [[ROOT_FRAME, 0]]

    def hit(self, site: int) -> None:
        self.sites.append(site)
        self.frames[-1][1] = site

    def call(self, function: str, site: int) -> None:
        self.sites.append(site)
        self.frames.append([function, site])

    def ret(self) -> None:
        self.frames.pop()

    def fail(self, site: int, reason: str) -> None:
        self.hit(site)
        raise ParseError(reason)

    def trap(
        self,
        site: int,
        signal: Signal,
        canary_id: str | None = None,
        access: MemoryAccess | None = None,
        runtime_frames: tuple[str, ...] = (),
    ) -> None:
        self.hit(site)
        stack = [Frame(name, 0) for name in runtime_frames]
        stack.extend(Frame(f, s) for f, s in reversed(self.frames))
        raise _Trap(signal, canary_id, access, tuple(stack))


class BugClass(str, Enum):
    BUFFER_OVERFLOW = "buffer_overflow"
    NULL_DEREF = "null_deref"
    INTEGER_OVERFLOW = "integer_overflow"
    LOGIC_ERROR = "logic_error"


@dataclass(frozen=True)
class CanarySpec:
    canary_id: str
    description: str
    trigger_condition: str
    predicate: str
    bug_class: BugClass


class Status(str, Enum):
    OK = "Ok"
    PARSE_ERROR = "ParseError"
    CRASH = "Crash"


@dataclass(frozen=True)
class ExecutionResult:
    status: Status
    local_coverage: CoverageMap
    exec_trace_len: int
    artifact: CrashArtifact | None = None
    detail: str = ""


@dataclass(frozen=True)
class IntField:
    start: int
    width: int
    byteorder: str
    kind: str = "int"


@dataclass(frozen=True)
class BytesField:
    start: int
    end: int
    kind: str = "bytes"


@dataclass(frozen=True)
class TextField:
    """A span of character data that may be replaced wholesale."""

    start: int
    end: int
    kind: str = "text"


class FormatModel(Protocol):
    """Structural knowledge a target exposes to structure-aware mutators."""

    name: str
    keep_first_unit: bool  # first unit is the document root and must survive

    def protected_spans(self, data: bytes) -> list[tuple[int, int]] | None: ...

    def mutable_spans(self, data: bytes) -> list[tuple[int, int]] | None: ...

    def fields(self, data: bytes) -> list[IntField | BytesField | TextField]: ...

    def units(self, data: bytes) -> list[tuple[int, int]]: ...

    def fixup(self, data: bytes) -> bytes: ...

    def skeleton(self) -> bytes: ...

    def resample_text(self, rng: random.Random) -> bytes: ...


@dataclass(frozen=True)
class TargetProgram:
    name: str
    block_count: int
    canary_catalog: tuple[CanarySpec, ...]
    format_doc: str
    shallow_threshold: int
    entry: Callable[[bytes, Tracer], None] = field(repr=False, compare=False)
    format_model: FormatModel = field(repr=False, compare=False)

    def canary(self, canary_id: str) -> CanarySpec | None:
        for c in self.canary_catalog:
            if c.canary_id == canary_id:
                return c
        return None


_LOC_CACHE: dict[tuple[str, int], list[int]] = {}


def _site_locations(target: TargetProgram, map_size: int) -> list[int]:
    key = (target.name, map_size)
    locs = _LOC_CACHE.get(key)
    if locs is None:
        mask = map_size - 1
        locs = [fnv1a64(f"{target.name}:{s}".encode()) & mask for s in range(target.block_count)]
        _LOC_CACHE[key] = locs
    return locs


def coverage_from_sites(target: TargetProgram, sites: list[int], map_size: int) -> CoverageMap:
    """Edge bits are ``(prev >> 1) ^ cur`` over per-site random ids; block bits are site ids."""
    locs = _site_locations(target, map_size)
    mask = map_size - 1
    seq = [locs[s] for s in sites]
    edges = {((prev >> 1) ^ cur) & mask for prev, cur in zip([0, *seq], seq)}
    blocks = {s & mask for s in sites}
    return CoverageMap(map_size, frozenset(edges), frozenset(blocks))


def run_target(target: TargetProgram, data: bytes, map_size: int = DEFAULT_MAP_SIZE) -> ExecutionResult:
    """Execute ``target`` on ``data``; identical inputs give identical results."""
    t = Tracer()
    artifact = None
    detail = ""
    try:
        target.entry(data, t)
        status = Status.OK
    except ParseError as exc:
        status = Status.PARSE_ERROR
        detail = str(exc)
    except _Trap as trap:
        status = Status.CRASH
        top = trap.stack[0]
        artifact = CrashArtifact(
            input_id=0,
            signal=trap.signal,
            fault_ip=FaultLocation(target.name, top.function, top.site),
            stack=trap.stack,
            access=trap.access,
            canary_id=trap.canary_id,
        )
        detail = trap.canary_id or trap.signal.value
    coverage = coverage_from_sites(target, t.sites, map_size)
    return ExecutionResult(status, coverage, len(t.sites), artifact, detail)
