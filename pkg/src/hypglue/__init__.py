"""Desk-scale gluing laboratory for catenoidal minimal ends in hyperbolic space."""

__version__ = "0.1.0"
