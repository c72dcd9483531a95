"""Hencky perfect plasticity: discrete relaxed energies, solvers and recovery sequences."""
from .bogovskii import DivProblem, DivSolver, IncompatibleRHS, solve_div
from .fields import PlasticMeasure, TestFamily, Triplet, strict_gap, sym_gradient, total_variation, weakstar_gap
from .functionals import Datum, EnergyBreakdown, Scenario, eval_F, eval_G, eval_G_reduced
from .mesh import Cover, Mesh, MeshError, build_cover, gen_lshape, gen_rectangle, read_mesh, write_mesh
from .pipeline import (BudgetError, NonSummableSchedule, PipelineConfig, RecoveryTrace, ResolutionError,
                       lift_trace_cube, mollify_budget, peel_boundary, recover_dirichlet)
from .scenario import ScenarioError, parse_scenario, read_scenario
from .solver import SolveConfig, SolveReport, solve
from .tensor_core import (Ball, ElasticModuli, Polytope, ReducedDensity, YieldSet, deviator, norm,
                          reduced_density, segment_polytope, square_polytope, support)

__version__ = "0.1.0"
