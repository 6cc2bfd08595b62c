"""Preference-weighted kidney exchange clearing and simulation."""

__version__ = "0.1.0"
