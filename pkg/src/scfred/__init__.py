"""scfred: scale-calculus Fredholm toolkit.

Desk-scale, exact-where-it-matters implementations of the corner geometry,
contraction-germ solvers, quadrant inverse/implicit function theorems, and
determinant-line orientation calculus used in polyfold-style Fredholm theory,
truncated to finite scale ladders.
"""

from .detline import det_of_operator, propagate_orientation
from .errors import ScfredError
from .operators import fredholm_split
from .scales import ScaleModel, ScaleVector, make_model, level_norm, regularity_level

__version__ = "0.1.0"

__all__ = [
    "ScfredError",
    "ScaleModel",
    "ScaleVector",
    "det_of_operator",
    "fredholm_split",
    "make_model",
    "level_norm",
    "propagate_orientation",
    "regularity_level",
    "__version__",
]
