"""Unitary surface-code encoders: construction, verification and simulation."""

__version__ = "0.1.0"
