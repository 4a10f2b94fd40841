"""Desk-scale quantum thermodynamics laboratory."""

__version__ = "0.1.0"
