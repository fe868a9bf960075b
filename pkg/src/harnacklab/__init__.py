"""Numerical laboratory for gradient estimates of the heat equation on evolving manifolds."""

__version__ = "0.1.0"
