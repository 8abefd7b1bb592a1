"""Numerical laboratory for the zeros of derivatives of random polynomials."""

__all__ = ["__version__"]

__version__ = "0.1.0"
