"""Muskat graph-interface solver: spectral norms, nonlocal operators, dynamics, experiments."""

__version__ = "0.1.0"
