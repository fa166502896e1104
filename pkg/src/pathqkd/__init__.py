"""Simulation and finite-key analysis of a four-dimensional path-encoded
decoy-state QKD link with active interferometric phase stabilization."""

from .states import (BASES, BASIS_PAIRS, CORES, CORE_INDEX, QuditState,
                     analyzer_matrix, basis_states, detection_distribution,
                     overlap, state_vector)
from .channel import (ChannelConfig, ChannelState, advance, pair_drift_rate,
                      pml_phase, transmittance)
from .stabilizer import (PairStabilizer, PllConfig, PllState,
                         expected_residual_sin2, fringe_rate, pll_step,
                         reacquire, residual_qber_contribution,
                         setpoint_phase, simulate_residual_trace)
from .linksim import (DetectorBank, ExpectedRates, PulseEvent, SessionResult,
                      SourceConfig, StabilityTrace, Tally, expected_rates,
                      prbs_registers, prbs_sequence, run_session,
                      stability_trace)
from .keyrate import (DecoyBounds, KeyRateResult, OptimizeResult,
                      SecurityParams, analytic_key_rate, decoy_bounds,
                      entropy_hd, expected_tally, finite_key_overhead,
                      finite_size_counts, key_rate_from_tally,
                      optimize_params, secret_key_length, tau_n)
from . import linkdata

__version__ = "0.3.1"

__all__ = [
    "BASES", "BASIS_PAIRS", "CORES", "CORE_INDEX", "QuditState",
    "analyzer_matrix", "basis_states", "detection_distribution", "overlap",
    "state_vector", "ChannelConfig", "ChannelState", "advance",
    "pair_drift_rate", "pml_phase", "transmittance", "PairStabilizer",
    "PllConfig", "PllState", "expected_residual_sin2", "fringe_rate",
    "pll_step", "reacquire", "residual_qber_contribution", "setpoint_phase",
    "simulate_residual_trace", "DetectorBank", "ExpectedRates", "PulseEvent",
    "SessionResult", "SourceConfig", "StabilityTrace", "Tally",
    "expected_rates", "prbs_registers", "prbs_sequence", "run_session",
    "stability_trace", "DecoyBounds", "KeyRateResult", "OptimizeResult",
    "SecurityParams", "analytic_key_rate", "decoy_bounds", "entropy_hd",
    "expected_tally", "finite_key_overhead", "finite_size_counts",
    "key_rate_from_tally", "optimize_params", "secret_key_length", "tau_n",
    "linkdata",
]
