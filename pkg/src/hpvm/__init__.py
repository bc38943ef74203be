"""Homotopy proximal variable-metric methods for composite convex problems."""
__version__ = "0.1.0"
