"""Biharmonic and fourth-order Schroedinger semigroups: kernels, variation operators and norms."""

__version__ = "0.1.0"
