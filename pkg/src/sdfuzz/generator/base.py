"""Generator request/response types, the mock backend and candidate validation."""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum

from ..corpus import DEFAULT_MAX_INPUT_BYTES
from ..errors import ContractError, ValidationError
from ..feedback import GenerationContext
from ..targets.base import Status, TargetProgram, run_target
from .grammars import GRAMMARS, draw_stressors

MAX_SEEDS_PER_REQUEST = 64


class Backend(str, Enum):
    MOCK = "Mock"
    REMOTE = "Remote"


@dataclass(frozen=True)
class GeneratorRequest:
    context: GenerationContext
    num_seeds: int = 16
    rng_seed: int = 0
    diversity: float = 0.5

    def __post_init__(self) -> None:
        if not 1 <= self.num_seeds <= MAX_SEEDS_PER_REQUEST:
            raise ValidationError(f"num_seeds must be in [1, {MAX_SEEDS_PER_REQUEST}], got {self.num_seeds}")
        if not 0.0 <= self.diversity <= 1.0:
            raise ValidationError(f"diversity must be in [0, 1], got {self.diversity}")


@dataclass(frozen=True)
class GeneratorResponse:
    candidates: tuple[bytes, ...]
    backend: Backend
    raw_transcript: str | None = None
    latency_ms: int = 0


def generate_mock(
    request: GeneratorRequest,
    grammar: str,
    max_input_bytes: int = DEFAULT_MAX_INPUT_BYTES,
) -> GeneratorResponse:
    """Derive ``num_seeds`` candidates from a bundled grammar, biased by crash feedback."""
    derive = GRAMMARS.get(grammar)
    if derive is None:
        raise ContractError(f"no bundled grammar for {grammar!r}; known: {', '.join(GRAMMARS)}")
    ctx = request.context
    hints = [f.bug_class_hint for f in ctx.feedback]
    out = []
    for i in range(request.num_seeds):
        rng, active = draw_stressors(request.rng_seed, ctx.round_number, i, request.diversity, hints)
        out.append(derive(rng, active)[:max_input_bytes])
    return GeneratorResponse(tuple(out), Backend.MOCK)


@dataclass
class CandidatePartition:
    valid: list[bytes] = field(default_factory=list)
    deep_invalid: list[bytes] = field(default_factory=list)
    shallow_invalid: list[bytes] = field(default_factory=list)

    @property
    def total(self) -> int:
        return len(self.valid) + len(self.deep_invalid) + len(self.shallow_invalid)

    def fractions(self) -> dict[str, float]:
        n = self.total or 1
        return {
            "valid": len(self.valid) / n,
            "deep_invalid": len(self.deep_invalid) / n,
            "shallow_invalid": len(self.shallow_invalid) / n,
        }


def validate_candidates(candidates, target: TargetProgram) -> CandidatePartition:
    """Sort candidates by how far the target parser gets; for metrics only.

    Crashing candidates are grouped with parse errors by trace length: they
    got past the format checks far enough to reach a bug.
    """
    part = CandidatePartition()
    for c in candidates:
        res = run_target(target, c)
        if res.status is Status.OK:
            part.valid.append(c)
        elif res.exec_trace_len >= target.shallow_threshold:
            part.deep_invalid.append(c)
        else:
            part.shallow_invalid.append(c)
    return part
