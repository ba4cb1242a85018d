"""Exact ground states of the three-level, two-mode Dicke model: parity-resolved
diagonalization, fidelity separatrices, mean-field phase diagram and phase-space tomography."""

__version__ = "0.1.0"

from .model import (
    PRESETS,
    SECTORS,
    AtomicConfig,
    BasisState,
    HamiltonianMatrix,
    ModelParams,
    ParitySector,
    SectorBasis,
    build_hamiltonian,
    commutator_norm,
    constants_of_motion,
    critical_coupling,
    enumerate_sector_basis,
    parity_sector,
    preset,
)
from .solver import (
    ConvergenceError,
    GroundState,
    TruncationReport,
    converged_ground_state,
    global_ground_state,
    global_ground_state_fixed,
    sector_ground_state,
    sufficient_caps,
)
from .variational import (
    CoherentParams,
    VariationalResult,
    minimize_variational,
    minimize_variational_multistart,
    transition_order_along_path,
    variational_energy,
)
from .qpt import (
    FidelityProfile,
    GroundStateSolver,
    ParamPoint,
    SeparatrixPoint,
    TransitionType,
    bures_distance,
    classify_separatrix,
    classify_transition,
    fidelity,
    fidelity_profile,
    minimum_fidelity_surface,
)
from .tomography import (
    EntropyTriple,
    QuadratureGrid,
    ReducedDensityMatrix,
    WignerField,
    linear_entropies,
    mean_photons,
    negativity_volume,
    reduce_to_field_pair,
    reduce_to_mode,
    weyl_symbol,
    wigner_field,
    wigner_purity,
)
