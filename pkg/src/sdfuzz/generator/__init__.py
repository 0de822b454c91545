"""Seed generators: grammar-driven mock and remote chat-completion backends."""

from .base import (
    Backend,
    CandidatePartition,
    GeneratorRequest,
    GeneratorResponse,
    generate_mock,
    validate_candidates,
)
from .grammars import BIAS_TABLE, GRAMMARS, Stressor
from .remote import EndpointConfig, Extraction, extract_candidates, generate_remote, load_endpoint_config

__all__ = [
    "BIAS_TABLE",
    "GRAMMARS",
    "Backend",
    "CandidatePartition",
    "EndpointConfig",
    "Extraction",
    "GeneratorRequest",
    "GeneratorResponse",
    "Stressor",
    "extract_candidates",
    "generate_mock",
    "generate_remote",
    "load_endpoint_config",
    "validate_candidates",
]
