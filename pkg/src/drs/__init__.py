"""Spherical analysis and Schroedinger maximal functions on Damek-Ricci spaces."""

from .space import SpaceParams, damek_ricci, real_hyperbolic, parse_space

__all__ = ["SpaceParams", "damek_ricci", "real_hyperbolic", "parse_space"]
__version__ = "0.1.0"
