"""Milstein-type schemes for scalar SDEs driven by fractional Brownian motion."""

__version__ = "0.1.0"
