"""Numerical toolkit for the subelliptic infinity-Laplace system on frames of vector fields."""

__version__ = "0.1.0"
