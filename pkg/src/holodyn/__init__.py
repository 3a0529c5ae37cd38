"""Numerical checks of the holonomy/dynamic factorization of subspace evolution operators."""

__version__ = "0.1.0"
