"""Numerical laboratory for degenerate Kolmogorov chains and their parametrix expansion."""

__version__ = "0.1.0"
