"""Space-time first-order least-squares solver for instationary Stokes flow."""
from .manufactured import ErrorReport, ExactSolution, check_slip_compatibility, compute_errors
from .mesh import PrismMesh, TimePartition, Triangulation, make_initial_mesh, mesh_size, refined_mesh
from .solvers import PcgConfig, RatioReport, extremal_generalized_eigs, pcg
from .spaces import FESpaces
from .studies import RunConfig, run, run_convergence, run_ratios
from .system import FoslsSystem, GramSolver, ProblemData

__all__ = [
    "ErrorReport", "ExactSolution", "FESpaces", "FoslsSystem", "GramSolver", "PcgConfig",
    "PrismMesh", "ProblemData", "RatioReport", "RunConfig", "TimePartition", "Triangulation",
    "check_slip_compatibility", "compute_errors", "extremal_generalized_eigs",
    "make_initial_mesh", "mesh_size", "pcg", "refined_mesh", "run", "run_convergence",
    "run_ratios",
]
