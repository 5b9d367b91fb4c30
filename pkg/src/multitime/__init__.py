"""Exactly solvable multistate Landau-Zener dynamics from commuting Hamiltonian families."""

from .errors import (
    AdiabaticityError,
    ConfigError,
    DegeneracyError,
    DimensionError,
    FamilyNotCommutingError,
    LabelingError,
    MultitimeError,
    NumericalError,
    ParameterError,
    RegimeError,
    ResourceError,
    StencilError,
    UnsupportedCrossingError,
    VerificationError,
)
from .evolution import IntegratorOptions, ParamPath, Propagator, propagate, propagate_matrix, richardson_check
from .family import CurvatureReport, HamiltonianFamily, check_zero_curvature, scan_family
from .models import (
    FourStateParams,
    GaudinParams,
    TCParams,
    four_state_family,
    four_state_h_family,
    gaudin_family,
    lz_two_state,
    tavis_cummings_family,
)
from .operators import HermitianOperator, build_spin_boson_bundle
from .scattering import (
    TransitionMatrix,
    chain_scatter,
    four_state_closed_form,
    four_state_event_sequence,
    numeric_transition_matrix,
)

__all__ = [name for name in dir() if not name.startswith("_")]
