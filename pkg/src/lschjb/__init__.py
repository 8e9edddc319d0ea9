"""Numerical toolkit for convex Hamilton-Jacobi-Bellman equations with lower semicontinuous solutions."""

__version__ = "0.1.0"
