"""Hilfer time-fractional evolution equations: simulation and steering."""

__version__ = "0.1.0"
