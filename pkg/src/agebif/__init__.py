"""Bifurcation analysis for coupled age-structured diffusive populations."""

__version__ = "0.1.0"
