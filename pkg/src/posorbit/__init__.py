"""Positive periodic orbits of superlinear indefinite planar systems."""

__version__ = "0.1.0"
