"""Numerical toolkit for dyadic surface-measure kernels on step-two nilpotent groups."""

__version__ = "0.1.0"
