"""Verification laboratory for correlation decay in list edge colorings."""

__version__ = "0.1.0"
