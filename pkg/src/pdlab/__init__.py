"""Simulation of two-parameter Poisson-Dirichlet dynamics."""

__version__ = "0.1.0"
