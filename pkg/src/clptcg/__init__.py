"""Test-case generation for a mini object-oriented language via
compilation to a constraint-clause form and symbolic execution with an
explicit symbolic heap."""

__version__ = "0.1.0"
