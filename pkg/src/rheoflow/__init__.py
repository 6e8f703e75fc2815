"""rheoflow: spectral Galerkin simulation of density-coupled non-Newtonian
flow on the unit torus, with proximally regularized viscous stress, plus the
measure-theoretic and energy diagnostics used to verify it."""

__version__ = "0.1.0"

from .errors import ConfigError, FieldFormatError, NumericalFailure, StepFailure
from .tensor_core import (
    DivFreeMode,
    QuadratureGrid,
    SymMat3,
    VelocityField,
    build_divfree_basis,
    eval_symgrad,
    eval_velocity,
    integrate,
)
from .rheology import ConvexPotentialSpec
from .transport import DensityField, advect_density, gamma_moment, trace_characteristic
from .galerkin import SimConfig, SolverState, run, step
from .measure_lab import MatrixMeasure
from .diagnostics import EnergyLedger, StrongSolution, manufactured_solution, relative_energy
