"""Spectral simulation of two-particle relativistic dispersive scattering and
propagation-estimate diagnostics."""

__version__ = "0.1.0"
