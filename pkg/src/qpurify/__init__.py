"""Purifying a qubit by repeated measurement of a neighbouring qubit."""

__version__ = "0.1.0"
