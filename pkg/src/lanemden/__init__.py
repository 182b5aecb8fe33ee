"""Blowing-up solutions of the slightly critical Lane-Emden system.

Modules
-------
bubble     ground state of the critical system by radial shooting
constants  reduction constants and identities
greens     Green, Robin and H~ machinery on axisymmetric domains
reduced    reduced functionals and their critical points
direct     radial Newton continuation for the full problem on a ball
cli        command line pipeline
"""

__version__ = "0.1.0"

from .bubble import CriticalExponents, make_exponents, shoot_ground_state  # noqa: E402,F401
from .errors import LaneEmdenError  # noqa: E402,F401
