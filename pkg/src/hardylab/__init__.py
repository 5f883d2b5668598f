"""Finite-element laboratory for Hardy-Poincare quotients with a boundary singularity."""
__version__ = "0.1.0"
