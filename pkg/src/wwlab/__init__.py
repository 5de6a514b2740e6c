"""Numerical laboratory for the 1D gravity-capillary water-wave system."""

__version__ = "0.1.0"
