"""Shared parameter types, channel loss and the effective detected photon means.

Amplitudes are real and nonnegative. The two BPSK hypotheses are labelled
``"+"`` and ``"-"``; the displacement is kept in phase so that it (nearly)
cancels the ``"-"`` signal, which is therefore the *nulled* hypothesis: a
zero-photon outcome is decoded as ``"-"``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

__all__ = [
    "ValidationError",
    "SignalModel",
    "Displacement",
    "ImperfectionModel",
    "BerResult",
    "IDEAL",
    "REFERENCE_MODEL",
    "validate_model",
    "apply_channel_loss",
    "effective_means",
]

PROVENANCES = ("analytic", "monte-carlo", "oracle")


class ValidationError(ValueError):
    """Raised when a parameter violates its documented range."""

    def __init__(self, field: str, message: str):
        super().__init__(f"{field} {message}")
        self.field = field


def _check_unit(field: str, value: float) -> None:
    if not (0.0 <= value <= 1.0):
        raise ValidationError(field, f"out of [0,1]: {value!r}")


def _check_nonneg(field: str, value: float) -> None:
    if not (value >= 0.0 and math.isfinite(value)):
        raise ValidationError(field, f"must be finite and >= 0: {value!r}")


@dataclass(frozen=True)
class SignalModel:
    """BPSK signal pair {|alpha>, |-alpha>} with prior probabilities."""

    alpha: float
    prior_plus: float = 0.5
    prior_minus: float = 0.5

    def __post_init__(self):
        _check_nonneg("alpha", self.alpha)
        _check_unit("prior_plus", self.prior_plus)
        _check_unit("prior_minus", self.prior_minus)
        if abs(self.prior_plus + self.prior_minus - 1.0) > 1e-12:
            raise ValidationError("prior_plus", "and prior_minus must sum to 1")

    @classmethod
    def from_mean_photons(cls, alpha_sq: float, **priors) -> "SignalModel":
        _check_nonneg("alpha_sq", alpha_sq)
        return cls(math.sqrt(alpha_sq), **priors)

    @property
    def mean_photons(self) -> float:
        return self.alpha * self.alpha


@dataclass(frozen=True)
class Displacement:
    beta: float

    def __post_init__(self):
        _check_nonneg("beta", self.beta)

    @classmethod
    def from_mean_photons(cls, beta_sq: float) -> "Displacement":
        _check_nonneg("beta_sq", beta_sq)
        return cls(math.sqrt(beta_sq))

    @property
    def mean_photons(self) -> float:
        return self.beta * self.beta


@dataclass(frozen=True)
class ImperfectionModel:
    """Detector and interferometer imperfections.

    eta is the total detection efficiency, nu the dark-count mean per pulse,
    xi the signal/auxiliary mode-match factor and phase_jitter_sigma the rms
    relative phase error in radians.
    """

    eta: float = 1.0
    nu: float = 0.0
    xi: float = 1.0
    phase_jitter_sigma: float = 0.0

    def __post_init__(self):
        validate_model(self)


@dataclass(frozen=True)
class BerResult:
    """A bit error rate with its provenance and binomial standard error."""

    ber: float
    stderr: float = 0.0
    n_trials: int = 0
    provenance: str = "analytic"

    def __post_init__(self):
        if self.provenance not in PROVENANCES:
            raise ValidationError("provenance", f"must be one of {PROVENANCES}")
        if not (0.0 <= self.ber <= 1.0):
            raise ValidationError("ber", f"out of [0,1]: {self.ber!r}")
        _check_nonneg("stderr", self.stderr)
        if self.provenance != "monte-carlo" and (self.stderr != 0.0 or self.n_trials != 0):
            raise ValidationError("stderr", "must be 0 (and n_trials 0) for non-sampled results")

    def __float__(self) -> float:
        return self.ber


def validate_model(m: ImperfectionModel) -> ImperfectionModel:
    """Return ``m`` unchanged if every field is in range, else raise."""
    _check_unit("eta", m.eta)
    _check_nonneg("nu", m.nu)
    _check_unit("xi", m.xi)
    _check_nonneg("phase_jitter_sigma", m.phase_jitter_sigma)
    return m


IDEAL = ImperfectionModel()
REFERENCE_MODEL = ImperfectionModel(eta=0.91, nu=0.003, xi=0.993)


def apply_channel_loss(mean_photons_in: float, loss_db: float) -> float:
    """Attenuate a mean photon number by ``loss_db`` (<= 0) decibels."""
    _check_nonneg("mean_photons_in", mean_photons_in)
    if loss_db > 0:
        raise ValidationError("loss_db", f"must be <= 0 (gain is not modeled): {loss_db!r}")
    return mean_photons_in * 10.0 ** (loss_db / 10.0)


def effective_means(
    s: SignalModel,
    d: Displacement,
    m: ImperfectionModel = IDEAL,
    cos_phase: float = 1.0,
) -> tuple[float, float]:
    """Mean detected photon numbers ``(n_null, n_anti)`` after displacement.

    ``cos_phase`` is the cosine of a relative phase error between signal and
    auxiliary oscillator (scalar or array); mode mismatch scales the
    interference term only.
    """
    a, b = s.alpha, d.beta
    power = a * a + b * b
    cross = 2.0 * m.xi * a * b * cos_phase
    # (a - b)^2 can round to a tiny negative number
    return m.eta * np.maximum(power - cross, 0.0) + m.nu, m.eta * (power + cross) + m.nu
