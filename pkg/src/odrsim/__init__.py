"""Displacement-receiver discrimination of BPSK coherent states.

Closed-form error limits, a truncated Fock-space oracle, TES pulse-height
statistics, a seeded Monte Carlo of the receiver and a photon-level phase
lock simulation.
"""

from .bounds import (
    ProjectorCoeffs,
    helstrom_binary_ber,
    helstrom_bpsk_ber,
    helstrom_ook_ber,
    helstrom_projector_coeffs,
    kennedy_ber,
    odr_ber,
    optimal_beta_ideal,
    optimal_beta_model,
    sql_homodyne_ber,
)
from .model import (
    IDEAL,
    REFERENCE_MODEL,
    BerResult,
    Displacement,
    ImperfectionModel,
    SignalModel,
    ValidationError,
    apply_channel_loss,
    effective_means,
    validate_model,
)

__version__ = "0.1.0"
