"""Hole-vortex degrees in perforated superconductors."""

__version__ = "0.1.0"
