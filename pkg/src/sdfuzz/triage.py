"""Crash analysis: frame normalisation, crash vectors, dedup, backtrace ingestion."""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from typing import Any, Iterable, Sequence

from .corpus import CampaignState, CrashArtifact, FaultLocation, Frame, Signal
from .errors import BacktraceParseError
from .hashing import fnv1a64

DEFAULT_STACK_DEPTH = 5
RUNTIME_DENYLIST = frozenset({"??", "abort", "raise", "__libc_start_main", "main_trampoline"})
UNKNOWN_FRAME = "UNKNOWN"


@dataclass(frozen=True)
class CrashVector:
    ip: str
    signal: str
    top_function: str
    stack_hash: int

    def to_dict(self) -> dict[str, Any]:
        return {
            "ip": self.ip,
            "signal": self.signal,
            "top_function": self.top_function,
            "stack_hash": f"0x{self.stack_hash:016x}",
        }

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> CrashVector:
        return cls(d["ip"], d["signal"], d["top_function"], int(d["stack_hash"], 16))


@dataclass
class CrashGroup:
    index: int
    vector: CrashVector
    representative: CrashArtifact
    count: int = 1
    first_exec_counter: int = 0
    first_wall_ms: int = 0
    canary_ids: set[str] = field(default_factory=set)
    representative_input: bytes = field(default=b"", repr=False)

    def to_dict(self) -> dict[str, Any]:
        return {
            "index": self.index,
            "vector": self.vector.to_dict(),
            "count": self.count,
            "first_exec_counter": self.first_exec_counter,
            "first_wall_ms": self.first_wall_ms,
            "canary_ids": sorted(self.canary_ids),
            "representative": self.representative.to_dict(),
        }


def retained_frames(frames: Iterable[Frame], denylist: frozenset[str] = RUNTIME_DENYLIST) -> list[Frame]:
    return [f for f in frames if f.function not in denylist]


def stack_hash(
    frames: Sequence[Frame], k: int = DEFAULT_STACK_DEPTH,
    denylist: frozenset[str] = RUNTIME_DENYLIST,
) -> int:
    """FNV-1a-64 of ``"func#site"`` for the innermost ``k`` retained frames, joined by ``|``."""
    if k < 1:
        raise ValueError("stack depth k must be >= 1")
    kept = retained_frames(frames, denylist)[:k]
    if not kept:
        return fnv1a64(UNKNOWN_FRAME.encode())
    return fnv1a64("|".join(f"{f.function}#{f.site}" for f in kept).encode("utf-8"))


def to_crash_vector(artifact: CrashArtifact, k: int = DEFAULT_STACK_DEPTH) -> CrashVector:
    top = artifact.stack[0]
    kept = retained_frames(artifact.stack)
    return CrashVector(
        ip=f"{artifact.fault_ip.target}:{top.function}:{top.site}",
        signal=artifact.signal.value,
        top_function=kept[0].function if kept else UNKNOWN_FRAME,
        stack_hash=stack_hash(artifact.stack, k),
    )


def dedup_insert(
    state: CampaignState, artifact: CrashArtifact, k: int = DEFAULT_STACK_DEPTH,
    payload: bytes = b"",
) -> tuple[CrashGroup, bool]:
    """Add ``artifact`` to its group, creating the group on first sight.

    ``payload`` is the crashing input; it is kept only for a new group's
    representative.
    """
    vector = to_crash_vector(artifact, k)
    group = state.crash_groups.get(vector)
    if group is None:
        group = CrashGroup(
            index=len(state.crash_groups),
            vector=vector,
            representative=artifact,
            first_exec_counter=artifact.exec_counter,
            first_wall_ms=artifact.wall_ms,
            representative_input=payload,
        )
        if artifact.canary_id:
            group.canary_ids.add(artifact.canary_id)
        state.crash_groups[vector] = group
        return group, True
    group.count += 1
    if artifact.canary_id:
        group.canary_ids.add(artifact.canary_id)
    return group, False


# --- debugger backtrace text --------------------------------------------

SIGNAL_NAMES = {
    "SIGSEGV": Signal.SEGV,
    "SIGABRT": Signal.ABRT,
    "SIGFPE": Signal.FPE,
    "SIGILL": Signal.ILL,
    "SIGBUS": Signal.BUS,
}
_SIGNAL_DESCRIPTIONS = {
    Signal.SEGV: "Segmentation fault",
    Signal.ABRT: "Aborted",
    Signal.FPE: "Arithmetic exception",
    Signal.ILL: "Illegal instruction",
    Signal.BUS: "Bus error",
}

_SIGNAL_LINE = re.compile(r"^Program (?:terminated with|received) signal (\S+?),")
_FRAME_LINE = re.compile(
    r"^#(?P<num>\d+)\s+(?:(?P<addr>0x[0-9a-fA-F]+)\s+in\s+)?(?P<func>\S+?)\s*\(.*?\)"
    r"(?:\s+at\s+(?P<file>\S+):(?P<line>\d+)|\s+from\s+(?P<lib>\S+))?\s*$"
)


def _file_stem(path: str) -> str:
    base = path.rsplit("/", 1)[-1]
    return base.split(".", 1)[0] or base


def parse_backtrace_text(text: str, target_name: str | None = None) -> CrashArtifact:
    """Build an artifact from a ``Program terminated with signal ...`` + ``#N`` frame dump.

    Frame line numbers become site indices; frames without source info get
    site 0. The target name defaults to the stem of the first frame's source
    file, so libc frames on top don't name the target; failing that, the
    first shared-object name.
    """
    signal = None
    frames: list[Frame] = []
    sources: list[str] = []
    libs: list[str] = []
    for raw in text.splitlines():
        line = raw.strip()
        if signal is None and line.startswith("Program "):
            m = _SIGNAL_LINE.match(line)
            if m is None or m.group(1) not in SIGNAL_NAMES:
                raise BacktraceParseError(f"unrecognized signal line: {line!r}")
            signal = SIGNAL_NAMES[m.group(1)]
            continue
        m = _FRAME_LINE.match(line)
        if m is None:
            continue
        frames.append(Frame(m.group("func"), int(m.group("line") or 0)))
        if m.group("file"):
            sources.append(m.group("file"))
        elif m.group("lib"):
            libs.append(m.group("lib"))
    if signal is None:
        raise BacktraceParseError("no 'Program terminated with signal' line found")
    if not frames:
        raise BacktraceParseError("no stack frames found")
    if target_name is None:
        origin = (sources or libs or [None])[0]
        target_name = _file_stem(origin) if origin else "unknown"
    top = frames[0]
    return CrashArtifact(
        input_id=0,
        signal=signal,
        fault_ip=FaultLocation(target_name, top.function, top.site),
        stack=tuple(frames),
    )


def render_backtrace(artifact: CrashArtifact) -> str:
    """Render an artifact in the same text format ``parse_backtrace_text`` reads."""
    if artifact.signal is Signal.CANARY_TRAP:
        raise ValueError("canary traps have no debugger signal equivalent")
    name = next(k for k, v in SIGNAL_NAMES.items() if v is artifact.signal)
    lines = [f"Program terminated with signal {name}, {_SIGNAL_DESCRIPTIONS[artifact.signal]}."]
    for i, f in enumerate(artifact.stack):
        addr = 0x401000 + 0x40 * i + f.site
        lines.append(f"#{i}  0x{addr:016x} in {f.function} () at {artifact.fault_ip.target}.c:{f.site}")
    return "\n".join(lines) + "\n"
