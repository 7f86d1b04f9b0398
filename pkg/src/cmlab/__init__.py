"""Numerical laboratory for the Calogero-Moser derivative NLS and its modulation dynamics."""

__version__ = "0.1.0"
