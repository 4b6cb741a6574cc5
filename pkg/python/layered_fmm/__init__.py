"""Layered-media Helmholtz Green's functions and a fast multipole summation for them."""

__version__ = "0.1.0"
