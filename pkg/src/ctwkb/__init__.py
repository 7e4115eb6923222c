"""Complex-trajectory time-dependent WKB (CTM) for 1D wavepackets."""

__version__ = "0.1.0"

from .assembly import BranchContribution, PruningPolicy, WavefunctionProfile, assemble, branch_amplitude
from .engine import StepperConfig, TrajectoryEngine, WavepacketSpec, initial_state, propagate
from .hierarchy import HierarchyLayout, HierarchyState, build_layout, rhs
from .potential import PotentialModel, evaluate, free, harmonic, quartic_double_well
from .reference import GridWavefunction, analytic_gaussian, mean_relative_error, split_operator_propagate
from .roots import BranchCurve, BranchRoot, RootSearchConfig, discover_branches, newton_refine, sweep

__all__ = [
    "BranchContribution", "BranchCurve", "BranchRoot", "GridWavefunction", "HierarchyLayout",
    "HierarchyState", "PotentialModel", "PruningPolicy", "RootSearchConfig", "StepperConfig",
    "TrajectoryEngine", "WavefunctionProfile", "WavepacketSpec", "analytic_gaussian", "assemble",
    "branch_amplitude", "build_layout", "discover_branches", "evaluate", "free", "harmonic",
    "initial_state", "mean_relative_error", "newton_refine", "propagate", "quartic_double_well", "rhs",
    "split_operator_propagate", "sweep",
]
