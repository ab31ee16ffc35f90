"""Lie applicable surfaces on curvature-line grids."""
from .config import DEFAULT_TOL, Tolerances

__version__ = "0.1.0"
__all__ = ["DEFAULT_TOL", "Tolerances", "__version__"]
