"""Numerical laboratory for slowly modulated Beltrami flows."""

__version__ = "0.1.0"
