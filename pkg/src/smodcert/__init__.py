"""Certified constructions for alpha-completely positive maps on Hilbert C*-modules."""

__version__ = "0.1.0"
