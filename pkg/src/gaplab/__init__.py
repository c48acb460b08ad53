"""Spectral gaps of sphere chains and covering block graphs."""

__version__ = "0.1.0"
