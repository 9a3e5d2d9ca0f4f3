"""Counterdiabatic optimised local driving."""

__version__ = "0.1.0"
