"""Certified ellipsoidal reachable tubes for hybrid periodic orbits."""

__version__ = "0.1.0"
