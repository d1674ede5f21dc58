"""Semi-implicit level-set jet schemes on periodic Cartesian grids."""

from .grid import GridSpec, isotropic_gradient, isotropic_laplacian, wrap_points
from .jet import JetField, SchemeConfig

__all__ = [
    "GridSpec",
    "JetField",
    "SchemeConfig",
    "isotropic_gradient",
    "isotropic_laplacian",
    "wrap_points",
]

__version__ = "0.1.0"
