"""Closed-form error probabilities for binary coherent-state discrimination.

Covers the homodyne (standard quantum) limit, the Helstrom limit for BPSK
and OOK, the Kennedy receiver and the displacement receiver with optimized
displacement, ideal or imperfect.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .model import (
    IDEAL,
    BerResult,
    Displacement,
    ImperfectionModel,
    SignalModel,
    ValidationError,
    effective_means,
    validate_model,
)
from .solvers import bisect_secant, golden_section

__all__ = [
    "ProjectorCoeffs",
    "sql_homodyne_ber",
    "helstrom_binary_ber",
    "helstrom_bpsk_ber",
    "helstrom_ook_ber",
    "kennedy_ber",
    "odr_ber",
    "optimal_beta_ideal",
    "optimal_beta_model",
    "helstrom_projector_coeffs",
]

JITTER_QUADRATURE_ORDER = 21
SMALL_SIGNAL_BETA = 1.0 / math.sqrt(2.0)


def _analytic(p: float) -> BerResult:
    # clip rounding excursions such as 0.5 + 1e-17
    return BerResult(min(max(p, 0.0), 1.0))


def sql_homodyne_ber(alpha: float, eta: float = 1.0) -> BerResult:
    """Homodyne BER ``erfc(sqrt(2 eta) alpha) / 2``; ``eta=1`` is the SQL.

    ``math.erfc`` is used directly; it is accurate to a few ulp, far below
    what any consumer here needs, and avoids the cancellation of ``1 - erf``.
    """
    if alpha < 0 or not 0.0 <= eta <= 1.0:
        raise ValidationError("alpha/eta", f"out of range: alpha={alpha}, eta={eta}")
    return _analytic(0.5 * math.erfc(math.sqrt(2.0 * eta) * alpha))


def helstrom_binary_ber(overlap_sq: float, prior_plus: float = 0.5) -> BerResult:
    """Helstrom minimum error for two pure states with squared overlap ``overlap_sq``."""
    if not 0.0 <= overlap_sq <= 1.0:
        raise ValidationError("overlap_sq", f"out of [0,1]: {overlap_sq!r}")
    if not 0.0 <= prior_plus <= 1.0:
        raise ValidationError("prior_plus", f"out of [0,1]: {prior_plus!r}")
    x = 4.0 * prior_plus * (1.0 - prior_plus) * overlap_sq
    # (1 - sqrt(1 - x)) / 2 without cancellation at small x
    return _analytic(x / (2.0 * (1.0 + math.sqrt(1.0 - x))))


def helstrom_bpsk_ber(alpha: float) -> BerResult:
    return helstrom_binary_ber(math.exp(-4.0 * alpha * alpha), 0.5)


def helstrom_ook_ber(nbar: float) -> BerResult:
    """Helstrom limit for OOK {|0>, |sqrt(2 nbar)>} at average photon number ``nbar``."""
    if nbar < 0:
        raise ValidationError("nbar", f"must be >= 0: {nbar!r}")
    return helstrom_binary_ber(math.exp(-2.0 * nbar), 0.5)


def kennedy_ber(alpha: float) -> BerResult:
    """Displacement receiver with ``beta = alpha`` (perfect nulling)."""
    return odr_ber(SignalModel(alpha), Displacement(alpha), IDEAL)


def _ber_at_phase(s: SignalModel, d: Displacement, m: ImperfectionModel, cos_phase: float) -> float:
    n_null, n_anti = effective_means(s, d, m, cos_phase)
    # no click -> decide the nulled signal "-"
    return s.prior_minus * -math.expm1(-n_null) + s.prior_plus * math.exp(-n_anti)


@lru_cache(maxsize=None)
def _hermite_nodes(order: int) -> tuple[np.ndarray, np.ndarray]:
    x, w = np.polynomial.hermite.hermgauss(order)
    return x, w / math.sqrt(math.pi)


def odr_ber(s: SignalModel, d: Displacement, m: ImperfectionModel = IDEAL) -> BerResult:
    """BER of on/off photon counting after displacement by ``d``.

    With phase jitter the BER is averaged over a Normal(0, sigma^2) relative
    phase by Gauss-Hermite quadrature.
    """
    validate_model(m)
    sigma = m.phase_jitter_sigma
    if sigma == 0.0:
        return _analytic(_ber_at_phase(s, d, m, 1.0))
    nodes, weights = _hermite_nodes(JITTER_QUADRATURE_ORDER)
    total = sum(
        w * _ber_at_phase(s, d, m, math.cos(math.sqrt(2.0) * sigma * x))
        for x, w in zip(nodes, weights)
    )
    return _analytic(float(total))


def optimal_beta_ideal(alpha: float) -> Displacement:
    """Solve ``beta * tanh(2 alpha beta) = alpha`` for the ideal optimal displacement.

    The root lies in ``(max(alpha, 1/sqrt(2)), alpha + 1)``. At ``alpha = 0``
    every displacement is equivalent and the small-signal limit ``1/sqrt(2)``
    is returned.
    """
    if alpha < 0:
        raise ValidationError("alpha", f"must be >= 0: {alpha!r}")
    if alpha == 0.0:
        return Displacement(SMALL_SIGNAL_BETA)
    beta = bisect_secant(
        lambda b: b * math.tanh(2.0 * alpha * b) - alpha,
        max(alpha, 1e-9),
        alpha + 1.0,
        ftol=1e-12,
    )
    return Displacement(beta)


def optimal_beta_model(
    s: SignalModel, m: ImperfectionModel = IDEAL, xtol: float = 1e-9
) -> tuple[Displacement, BerResult]:
    """Golden-section minimization of ``odr_ber`` over ``beta`` in ``[0, alpha + 2]``."""
    validate_model(m)
    if s.alpha == 0.0:
        d = Displacement(SMALL_SIGNAL_BETA)
        return d, odr_ber(s, d, m)
    beta, _ = golden_section(
        lambda b: odr_ber(s, Displacement(b), m).ber, 0.0, s.alpha + 2.0, xtol=xtol
    )
    d = Displacement(beta)
    return d, odr_ber(s, d, m)


@dataclass(frozen=True)
class ProjectorCoeffs:
    """Coefficients of the Helstrom projector ``|pi_-> = b0 |alpha> + b1 |-alpha>``."""

    b0: float
    b1: float
    alpha: float

    def norm_sq(self) -> float:
        overlap = math.exp(-2.0 * self.alpha * self.alpha)
        return self.b0**2 + self.b1**2 + 2.0 * self.b0 * self.b1 * overlap


def helstrom_projector_coeffs(alpha: float) -> ProjectorCoeffs:
    if not alpha > 0:
        raise ValidationError("alpha", "must be > 0: the signal states coincide at alpha = 0")
    denom = -math.expm1(-4.0 * alpha * alpha)
    p_ql = helstrom_bpsk_ber(alpha).ber
    return ProjectorCoeffs(
        b0=-math.sqrt(p_ql / denom),
        b1=math.sqrt((1.0 - p_ql) / denom),
        alpha=alpha,
    )
