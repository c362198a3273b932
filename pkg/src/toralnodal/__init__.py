"""Nodal intersections of arithmetic random waves against a fixed toral curve."""

__version__ = "0.1.0"
