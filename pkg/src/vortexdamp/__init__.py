"""Linearized 2D Euler around a radial vortex: mode evolution, Rayleigh resolvent, damping diagnostics."""
__version__ = "0.1.0"
