"""Chaining functionals on finite metric spaces with Monte Carlo bound audits."""

__version__ = "0.1.0"
