"""Infer generalized, hardened binary-format parsers from execution traces."""

__version__ = "0.1.0"
