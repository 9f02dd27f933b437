"""Numerical laboratory for convex entropy decay of finite Markov chains."""

__version__ = "0.1.0"
