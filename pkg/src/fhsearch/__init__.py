"""Finite-horizon distance-penalized search and transect level set estimation."""

__version__ = "0.1.0"
