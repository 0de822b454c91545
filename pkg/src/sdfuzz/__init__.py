"""sdfuzz: a desk-scale closed-loop fuzzer with structure-aware seed generation."""

__version__ = "0.1.0"
