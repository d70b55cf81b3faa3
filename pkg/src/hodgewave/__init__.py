"""Structure-preserving LDG-H discretisations of the 2D semilinear Hodge wave equation.

Two spatial methods share one set of operators: a displacement-trace method
whose numerical fluxes give a local (multisymplectic) conservation law, and a
velocity-trace mixed method that dissipates energy through its penalties.
Both are advanced with symplectic Runge-Kutta or partitioned Runge-Kutta
schemes (implicit midpoint, a sixth-order composition, Stormer/Verlet).
"""

from .assembly import MixedSystem, MultisymplecticSystem, build_operators, make_system
from .calculus import FieldState, Penalties, TraceState
from .fespace import FESpace, l2_project
from .mesh import Mesh, build_mesh, build_periodic_rect_mesh, load_mesh, save_mesh
from .nonlinearity import get_nonlinearity
from .timeloop import Integrator, run_verlet

__version__ = "0.1.0"

__all__ = [
    "FESpace",
    "FieldState",
    "Integrator",
    "Mesh",
    "MixedSystem",
    "MultisymplecticSystem",
    "Penalties",
    "TraceState",
    "build_mesh",
    "build_operators",
    "build_periodic_rect_mesh",
    "get_nonlinearity",
    "l2_project",
    "load_mesh",
    "make_system",
    "run_verlet",
    "save_mesh",
]
