"""ellopt: optimality conditions for elliptic control problems with control in the leading term.

Modules
-------
tensor          small dense SPD algebra, sphere maxima, two-phase mixing bounds
mesh_fem        P1 finite elements on the unit square
problems        catalog of concrete control problems
semilinear      state, adjoint, variational and relaxed-state solvers
optimality      Hamiltonian, first-order gaps, singularity classification
relaxation      relaxed coefficient, first/second-order expansion, second-order values
homogenization  laminates, H-limits, epsilon sweeps, correctors
improve         pointwise fixed-point control improver
io, cli         artifacts and the ``ellopt`` command line
"""

__version__ = "0.1.0"

from .mesh_fem import Mesh, SolverError, build_mesh  # noqa: E402
from .problems import Problem, catalog, make_problem  # noqa: E402
from .tensor import NotSPDError  # noqa: E402

__all__ = [
    "Mesh", "NotSPDError", "Problem", "SolverError", "__version__", "build_mesh", "catalog",
    "make_problem",
]
