"""MoM topology optimization of plate antennas.

Assembles method-of-moments operators over a fixed plate discretization,
prices every single-DOF shape change by inversion-free reanalysis, and
searches material distributions with a memetic (greedy plus genetic)
optimizer benchmarked against the convex Q-factor bound.
"""

__version__ = "0.1.0"

from .assembly import ETA0, C0, ExcitationSpec
from .bounds import BoundResult, solve_bound
from .mesh import Mesh, PlateSpec, build_mesh, central_gap_dof
from .metrics import CompositeObjective, ObjectiveSpec, ObjectiveTerm
from .operators import (
    OperatorSet,
    assemble_plate_operators,
    cholesky_loss,
    load_operators,
    save_operators,
)
from .optimizer import MemeticConfig, MemeticResult, local_descent, memetic_run
from .reanalysis import DenseSystem, ReanalysisState, SensitivityMap
from .shapes import Gene, DofSets, derive_sets, hamming, solution_space_size

__all__ = [
    "__version__",
    "ETA0",
    "C0",
    "ExcitationSpec",
    "BoundResult",
    "solve_bound",
    "Mesh",
    "PlateSpec",
    "build_mesh",
    "central_gap_dof",
    "CompositeObjective",
    "ObjectiveSpec",
    "ObjectiveTerm",
    "OperatorSet",
    "assemble_plate_operators",
    "cholesky_loss",
    "load_operators",
    "save_operators",
    "MemeticConfig",
    "MemeticResult",
    "local_descent",
    "memetic_run",
    "DenseSystem",
    "ReanalysisState",
    "SensitivityMap",
    "Gene",
    "DofSets",
    "derive_sets",
    "hamming",
    "solution_space_size",
]
