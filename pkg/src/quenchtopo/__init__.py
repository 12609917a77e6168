"""Topology and dynamics of quenched two-band chains.

Parent Hamiltonians of the time-evolved state, Loschmidt rate functions,
entanglement spectra, dynamical Chern numbers and Zak phases, with an exact
diagonalization layer for interacting chains.
"""

__version__ = "0.1.0"

from .bloch import (
    BlochFunction,
    QuenchProtocol,
    decompose,
    momentum_grid,
    parent_bloch,
    parent_coefficients,
)
from .catalog import CATALOG, build_protocol, parent_period
from .errors import (
    AmbiguousFillingError,
    ConfigurationError,
    DimensionError,
    GaplessError,
    HarmonicRangeError,
    NearFixedMomentumWarning,
    NumericalError,
    QuenchError,
    SaturationWarning,
    SingularPointWarning,
    UndefinedInvariantError,
)
from .free_fermion import (
    CorrelationEvolver,
    build_lattice,
    entanglement_spectrum,
    find_esc,
    ground_correlation,
    momentum_entanglement_spectrum,
    parent_lattice,
    parent_obc_spectrum,
)
from .indicators import (
    dcn_analytic,
    dcn_numeric,
    dcn_table,
    dqpt_times,
    fixed_momenta,
    rate_curve,
    rate_function,
    zak_phase,
)
from .interacting import build_hubbard, cat_states, ground_state, many_body_es

__all__ = [name for name in dir() if not name.startswith("_")]
