"""Stochastic flows driven by Poisson random measures."""
__version__ = "0.1.0"
