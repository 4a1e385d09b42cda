"""Quantum dynamics under classical Poisson white noise."""

__version__ = "0.1.0"
