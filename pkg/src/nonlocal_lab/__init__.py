"""Numerical laboratory for nonlocal operators with inhomogeneous kernels."""

__version__ = "0.1.0"
