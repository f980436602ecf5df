"""Simulation lab for device-independent randomness expansion."""

__version__ = "0.1.0"
