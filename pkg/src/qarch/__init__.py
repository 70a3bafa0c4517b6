"""Simulation and numerical checks for nonlinear long-memory ARCH-type models."""
__version__ = "0.1.0"
