"""Parameterized quantum circuit design search."""

__version__ = "0.1.0"
