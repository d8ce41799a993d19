"""Mini object-oriented source language: parsing, analysis, lowering,
and a concrete reference interpreter."""

from .lower import compile_source, lower_program
from .parser import Resolved, SourceError, parse_source

__all__ = [
    "Resolved",
    "SourceError",
    "compile_source",
    "lower_program",
    "parse_source",
]
