"""Bundled coverage-instrumented toy targets with injected canaries."""

from __future__ import annotations

from ..errors import ContractError
from . import mini_png, mini_wav, mini_xml
from .base import (
    BugClass,
    CanarySpec,
    ExecutionResult,
    FormatModel,
    ParseError,
    Status,
    TargetProgram,
    Tracer,
    run_target,
)

_TARGETS = (mini_xml.TARGET, mini_png.TARGET, mini_wav.TARGET)


def list_targets() -> list[TargetProgram]:
    return list(_TARGETS)


def get_target(name: str) -> TargetProgram:
    for t in _TARGETS:
        if t.name == name:
            return t
    raise ContractError(f"unknown target {name!r}; known: {', '.join(t.name for t in _TARGETS)}")


def canary_spec(canary_id: str) -> CanarySpec | None:
    for t in _TARGETS:
        spec = t.canary(canary_id)
        if spec is not None:
            return spec
    return None


__all__ = [
    "BugClass",
    "CanarySpec",
    "ExecutionResult",
    "FormatModel",
    "ParseError",
    "Status",
    "TargetProgram",
    "Tracer",
    "canary_spec",
    "get_target",
    "list_targets",
    "run_target",
]
