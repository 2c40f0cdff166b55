"""Radial solutions of the stationary Keller-Segel equation with Neumann data."""

__version__ = "0.1.0"
