"""Nonadiabatic holonomic gates in decoherence-free subspaces of circuit QED."""

__version__ = "0.1.0"
