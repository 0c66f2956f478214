"""Chaplygin reduction, Hamiltonization and nonholonomic Hamilton-Jacobi tools."""
from .errors import *  # noqa: F401,F403
from .manifold import ChartSystem, GroupAction, PhasePoint
from .systems import build

__version__ = "0.1.0"
