"""Degradation-aware energy management for battery-backed microgrids."""

__version__ = "0.1.0"
