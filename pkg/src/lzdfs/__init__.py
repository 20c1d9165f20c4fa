"""Degenerate Landau-Zener crossings under quantum noise."""

__version__ = "0.1.0"
