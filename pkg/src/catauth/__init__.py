"""Simulator for entanglement-catalysis authentication and key distribution."""

from .adversary import AttackStrategy, Eve, EveLedger, Kind, dos_attack
from .experiment import (
    ExperimentConfig, ExperimentStats, run_experiment, search_states, sweep,
    verify_reference_constants,
)
from .kernels import BACKEND
from .protocol import (
    ALICE, BOB, EVE, ConfigError, KeyStore, Party, ProtocolError, RoundConfig,
    RoundResult, Session, new_session, run_round,
)
from .schmidt import (
    ConversionReport, SchmidtError, SchmidtVector, conversion_probability, convert,
    is_catalyst, majorizes, make_schmidt, optimal_fidelity, reference_p0, reference_states,
    tensor_schmidt,
)
from .states import BipartiteState, DensityOperator, reduced_state, schmidt_of

__version__ = "0.1.0"
