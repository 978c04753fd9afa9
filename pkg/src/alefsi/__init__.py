"""Partitioned ALE finite element solver for a 2D incompressible viscous fluid
coupled to a 1D elastic shell sitting on the moving top boundary.

All discrete equations are posed on the fixed reference strip Sigma x (0, 1);
the moving domain enters only through the explicit ALE map (x1, eta(x1) * x2)
and its closed-form geometric fields.
"""

__version__ = "0.1.0"

from .errors import ConfigurationError, DegenerateGeometryError, SolverError
from .mesh import ReferenceMesh, SurfaceMesh, build_structured_mesh, refine, surface_trace
from .quadrature import QuadratureRule, quad_rule_segment, quad_rule_triangle
from .structure import SurfaceField
from .fluid import FluidState
from .config import SchemeConfig, parse_config
from .driver import Discretization, SimulationState, init, advance, run

__all__ = [
    "ConfigurationError",
    "DegenerateGeometryError",
    "SolverError",
    "ReferenceMesh",
    "SurfaceMesh",
    "build_structured_mesh",
    "refine",
    "surface_trace",
    "QuadratureRule",
    "quad_rule_triangle",
    "quad_rule_segment",
    "SurfaceField",
    "FluidState",
    "SchemeConfig",
    "parse_config",
    "Discretization",
    "SimulationState",
    "init",
    "advance",
    "run",
]
