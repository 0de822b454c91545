"""Crash feedback documents and the generation context handed to seed generators."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from importlib import resources
from typing import Any

from .corpus import CampaignState, MemoryAccess
from .targets import TargetProgram, canary_spec
from .triage import CrashGroup, retained_frames

SCHEMA = "sdfuzz-feedback/1"
EXCERPT_BYTES = 64
UNKNOWN_HINT = "unknown"

NARRATIVE = "Input triggered {signal} in {top_function} at {ip}; call path: {path}"

GUIDANCE = {
    "buffer_overflow": (
        "increase repetition/nesting near the structure handled by {top_function}",
        "declare sizes or counts larger than the data that follows them",
    ),
    "integer_overflow": (
        "use boundary 32-bit values (0, 0x7fffffff, 0xffffffff) in length and count fields read by {top_function}",
    ),
    "null_deref": (
        "reference names or objects before they are declared, as reached in {top_function}",
    ),
    "logic_error": (
        "repeat constructs that the format allows only once, around {top_function}",
    ),
    UNKNOWN_HINT: (
        "keep the prefix that reaches {top_function} and vary the structure after it",
    ),
}


def _printable(data: bytes) -> str:
    return "".join(chr(b) if 0x20 <= b < 0x7F else "." for b in data)


@dataclass(frozen=True)
class CrashFeedback:
    ip: str
    signal: str
    top_function: str
    stack_hash: int
    group_index: int
    canary_ids: tuple[str, ...]
    bug_class_hint: str
    narrative: str
    excerpt: bytes
    input_length: int
    guidance: tuple[str, ...]
    access: MemoryAccess | None = None
    first_exec_counter: int = 0

    def to_dict(self) -> dict[str, Any]:
        return {
            "schema": SCHEMA,
            "group": {
                "index": self.group_index,
                "ip": self.ip,
                "signal": self.signal,
                "top_function": self.top_function,
                "stack_hash": f"0x{self.stack_hash:016x}",
                "first_exec_counter": self.first_exec_counter,
            },
            "canary_ids": list(self.canary_ids),
            "bug_class_hint": self.bug_class_hint,
            "narrative": self.narrative,
            "triggering_excerpt": {
                "hex": self.excerpt.hex(),
                "printable": _printable(self.excerpt),
                "length": len(self.excerpt),
                "input_length": self.input_length,
            },
            "access": None if self.access is None else {
                "kind": self.access.kind, "address_class": self.access.address_class,
            },
            "guidance": list(self.guidance),
        }

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> CrashFeedback:
        if d.get("schema") != SCHEMA:
            raise ValueError(f"unsupported feedback schema {d.get('schema')!r}")
        g, ex, acc = d["group"], d["triggering_excerpt"], d.get("access")
        return cls(
            ip=g["ip"],
            signal=g["signal"],
            top_function=g["top_function"],
            stack_hash=int(g["stack_hash"], 16),
            group_index=g["index"],
            canary_ids=tuple(d["canary_ids"]),
            bug_class_hint=d["bug_class_hint"],
            narrative=d["narrative"],
            excerpt=bytes.fromhex(ex["hex"]),
            input_length=ex["input_length"],
            guidance=tuple(d["guidance"]),
            access=None if acc is None else MemoryAccess(**acc),
            first_exec_counter=g["first_exec_counter"],
        )


def _hint_for(group: CrashGroup) -> str:
    for cid in sorted(group.canary_ids):
        spec = canary_spec(cid)
        if spec is not None:
            return spec.bug_class.value
    return UNKNOWN_HINT


def encode_crash_feedback(group: CrashGroup, crashing_input: bytes, k: int = 5) -> CrashFeedback:
    """Deterministic semantic description of one crash group."""
    v = group.vector
    art = group.representative
    path_frames = retained_frames(art.stack)[:k]
    path = " → ".join(f.function for f in reversed(path_frames)) or v.top_function
    hint = _hint_for(group)
    guidance = [g.format(top_function=v.top_function) for g in GUIDANCE[hint]]
    if art.access is not None:
        guidance.append(
            f"the fault was a {art.access.kind} to an address of class {art.access.address_class}; "
            f"vary the sizes that feed that access"
        )
    return CrashFeedback(
        ip=v.ip,
        signal=v.signal,
        top_function=v.top_function,
        stack_hash=v.stack_hash,
        group_index=group.index,
        canary_ids=tuple(sorted(group.canary_ids)),
        bug_class_hint=hint,
        narrative=NARRATIVE.format(signal=v.signal, top_function=v.top_function, ip=v.ip, path=path),
        excerpt=bytes(crashing_input[:EXCERPT_BYTES]),
        input_length=len(crashing_input),
        guidance=tuple(guidance),
        access=art.access,
        first_exec_counter=group.first_exec_counter,
    )


# --- generation context ---------------------------------------------------

@dataclass(frozen=True)
class ContextLimits:
    max_exemplars: int = 4
    max_feedback: int = 3
    prompt_budget_chars: int = 8000
    exemplar_bytes: int = 256


@dataclass(frozen=True)
class Exemplar:
    seed_id: int
    score: float
    payload: bytes


@dataclass(frozen=True)
class GenerationContext:
    target_name: str
    format_doc: str
    round_number: int
    exemplar_seeds: tuple[Exemplar, ...] = ()
    feedback: tuple[CrashFeedback, ...] = ()
    coverage_summary: dict[str, int] = field(default_factory=dict)
    num_seeds: int = 16

    def feedback_document(self) -> dict[str, Any]:
        """The ``feedback/round_{R}.json`` document for this context."""
        return {
            "schema": SCHEMA,
            "round": self.round_number,
            "target": self.target_name,
            "coverage_summary": dict(self.coverage_summary),
            "feedback": [f.to_dict() for f in self.feedback],
        }


def _load_template() -> tuple[str, str]:
    text = resources.files("sdfuzz.prompts").joinpath("seed_prompt_v1.txt").read_text("utf-8")
    system, user = text.split("=== user ===\n", 1)
    return system.strip(), user


PROMPT_SYSTEM, PROMPT_USER = _load_template()


def _is_text(data: bytes) -> bool:
    return b"```" not in data and all(0x20 <= b < 0x7F or b in b"\t\n\r" for b in data)


def _render_exemplar(e: Exemplar) -> str:
    if _is_text(e.payload):
        enc, body = "raw", e.payload.decode("ascii")
    else:
        enc, body = "hex", e.payload.hex()
    return f"Seed {e.seed_id} (score {e.score:g}):\n```example\nencoding: {enc}\n{body}\n```\n"


def render_prompt(ctx: GenerationContext) -> tuple[str, str]:
    """Return the (system, user) messages for ``ctx``."""
    exemplars = "".join(_render_exemplar(e) for e in ctx.exemplar_seeds) or "(none yet)\n"
    if ctx.feedback:
        fb = "```json\n" + json.dumps([f.to_dict() for f in ctx.feedback], indent=1,
                                      ensure_ascii=False) + "\n```\n"
    else:
        fb = "(none)\n"
    cov = ctx.coverage_summary
    user = PROMPT_USER.format(
        target=ctx.target_name,
        round=ctx.round_number,
        edges_total=cov.get("edges_total", 0),
        blocks_total=cov.get("blocks_total", 0),
        canaries_triggered=cov.get("canaries_triggered_count", 0),
        format_doc=ctx.format_doc,
        exemplars=exemplars,
        feedback=fb,
        num_seeds=ctx.num_seeds,
    )
    return PROMPT_SYSTEM, user


def rendered_length(ctx: GenerationContext) -> int:
    system, user = render_prompt(ctx)
    return len(system) + len(user)


def build_generation_context(
    state: CampaignState,
    target: TargetProgram,
    limits: ContextLimits | None = None,
    *,
    include_feedback: bool = True,
    round_number: int = 0,
    num_seeds: int = 16,
) -> GenerationContext:
    """Assemble the generator's view of the campaign within the prompt budget.

    Over budget, the oldest feedback goes first, then the lowest-scoring
    exemplars. The format description is never trimmed, so a budget smaller
    than the bare template plus format_doc cannot be met.
    """
    limits = limits or ContextLimits()
    ranked = sorted(state.queue, key=lambda s: (-s.score, s.id))[: limits.max_exemplars]
    exemplars = [Exemplar(s.id, s.score, s.payload[: limits.exemplar_bytes]) for s in ranked]
    feedback: list[CrashFeedback] = []
    if include_feedback and limits.max_feedback > 0:
        newest = sorted(
            state.crash_groups.values(), key=lambda g: (-g.first_exec_counter, -g.index)
        )[: limits.max_feedback]
        feedback = [encode_crash_feedback(g, g.representative_input) for g in newest]
    summary = {
        "edges_total": state.global_coverage.edge_count,
        "blocks_total": state.global_coverage.block_count,
        "canaries_triggered_count": len(state.canaries_triggered),
    }

    def make() -> GenerationContext:
        return GenerationContext(
            target_name=target.name,
            format_doc=target.format_doc,
            round_number=round_number,
            exemplar_seeds=tuple(exemplars),
            feedback=tuple(feedback),
            coverage_summary=summary,
            num_seeds=num_seeds,
        )

    ctx = make()
    while rendered_length(ctx) > limits.prompt_budget_chars and (feedback or exemplars):
        if feedback:
            feedback.pop()
        else:
            exemplars.pop()
        ctx = make()
    return ctx
