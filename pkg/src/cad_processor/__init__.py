"""Deterministic processor for casual-academic cost extract workbooks."""

__version__ = "0.1.0"
