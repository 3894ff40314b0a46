"""GNSS-based LOD-1 building height estimation."""

__version__ = "0.1.0"
