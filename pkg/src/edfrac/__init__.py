"""edfrac: 2D crack propagation with embedded discontinuities.

Quadrilateral elements with incompatible bending modes carry an optional
embedded discontinuity line with constant opening / sliding separation modes.
Cohesion across the line follows rigid-damage softening laws. Cracks nucleate
from a local Gauss-point maximum-principal-stress criterion, so no crack
tracking is needed. Statics, single-DOF path following and implicit dynamics
are supported.
"""

__version__ = "0.1.0"
