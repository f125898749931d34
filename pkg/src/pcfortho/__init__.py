"""Pair correlation function estimation for spatial point processes."""

__version__ = "0.1.0"
