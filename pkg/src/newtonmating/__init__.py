"""Matings of cubic polynomials with cubic Newton maps, computed."""

__version__ = "0.1.0"
