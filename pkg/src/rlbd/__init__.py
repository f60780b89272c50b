"""Benders decomposition with a learned cut-selection policy."""

__version__ = "0.1.0"
