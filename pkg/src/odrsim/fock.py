"""Truncated photon-number-basis oracle.

Everything here is computed from explicit Fock amplitudes so that it can be
checked against the closed forms in :mod:`odrsim.bounds` without sharing any
code path with them.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .bounds import ProjectorCoeffs
from .model import BerResult

__all__ = [
    "TruncationError",
    "FockVector",
    "required_dim",
    "coherent_fock",
    "superpose",
    "overlap",
    "overlap_closed",
    "gram_helstrom",
    "projection_probability",
    "helstrom_projectors",
]

DEFAULT_TAIL_TOL = 1e-12
MAX_DIM = 200


class TruncationError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class FockVector:
    amplitudes: np.ndarray
    tail_mass: float

    @property
    def dim(self) -> int:
        return len(self.amplitudes)

    @classmethod
    def from_amplitudes(cls, amplitudes: Sequence[float]) -> "FockVector":
        amps = np.asarray(amplitudes, dtype=float)
        if not np.all(np.isfinite(amps)):
            raise ValueError("amplitudes must be finite")
        amps.setflags(write=False)
        return cls(amps, max(0.0, 1.0 - math.fsum(amps * amps)))

    def check_tail(self, tol: float = DEFAULT_TAIL_TOL) -> None:
        if self.tail_mass > tol:
            raise TruncationError(f"tail mass {self.tail_mass:.3e} exceeds tolerance {tol:.1e} at dim {self.dim}")


def _coherent_amplitudes(alpha: float, dim: int) -> np.ndarray:
    amps = np.empty(dim)
    amps[0] = math.exp(-0.5 * alpha * alpha)
    for n in range(1, dim):
        amps[n] = amps[n - 1] * alpha / math.sqrt(n)
    return amps


def required_dim(alpha: float, tol: float = DEFAULT_TAIL_TOL, max_dim: int = MAX_DIM) -> int:
    """Smallest truncation whose coherent-state tail mass is below ``tol``."""
    amps = _coherent_amplitudes(alpha, max_dim)
    mass = np.cumsum(amps * amps)
    ok = np.nonzero(1.0 - mass < tol)[0]
    if len(ok) == 0:
        raise TruncationError(f"|alpha|={abs(alpha)} needs more than {max_dim} Fock states for tail < {tol:.1e}")
    return int(ok[0]) + 1


def coherent_fock(alpha: float, dim: int | None = None, tol: float = DEFAULT_TAIL_TOL) -> FockVector:
    """Coherent state |alpha> (real, signed alpha) truncated to ``dim`` photon numbers."""
    if dim is None:
        dim = required_dim(alpha, tol)
    if dim < 1:
        raise ValueError("dim must be >= 1")
    vec = FockVector.from_amplitudes(_coherent_amplitudes(alpha, dim))
    if vec.tail_mass > tol:
        raise TruncationError(
            f"tail mass {vec.tail_mass:.3e} at dim {dim} exceeds {tol:.1e}; "
            f"need dim >= {required_dim(alpha, tol)}"
        )
    return vec


def superpose(coeffs: Sequence[float], vectors: Sequence[FockVector]) -> FockVector:
    dims = {v.dim for v in vectors}
    if len(dims) != 1:
        raise ValueError(f"dimension mismatch: {sorted(dims)}")
    return FockVector.from_amplitudes(sum(c * v.amplitudes for c, v in zip(coeffs, vectors)))


def overlap(a: FockVector, b: FockVector) -> float:
    if a.dim != b.dim:
        raise ValueError(f"dimension mismatch: {a.dim} != {b.dim}")
    return math.fsum(a.amplitudes * b.amplitudes)


def overlap_closed(alpha: float, beta: float) -> float:
    """<alpha|beta> for real signed amplitudes."""
    return math.exp(-0.5 * (alpha - beta) ** 2)


def gram_helstrom(
    states: tuple[FockVector, FockVector],
    priors: tuple[float, float] = (0.5, 0.5),
    tol: float = DEFAULT_TAIL_TOL,
) -> BerResult:
    """Minimum error probability from the eigenvalues of ``p0 rho0 - p1 rho1``.

    The weighted difference of projectors is diagonalized in the full
    truncated basis; the error is ``(1 - sum |eigenvalues|) / 2``.
    """
    psi0, psi1 = states
    for psi in states:
        psi.check_tail(tol)
    if psi0.dim != psi1.dim:
        raise ValueError(f"dimension mismatch: {psi0.dim} != {psi1.dim}")
    p0, p1 = priors
    gamma = p0 * np.outer(psi0.amplitudes, psi0.amplitudes) - p1 * np.outer(psi1.amplitudes, psi1.amplitudes)
    trace_norm = float(np.abs(np.linalg.eigvalsh(gamma)).sum())
    return BerResult(min(max(0.5 * (1.0 - trace_norm), 0.0), 1.0), provenance="oracle")


def projection_probability(projector: FockVector, state: FockVector, tol: float = 1e-9) -> float:
    """|<projector|state>|^2 for a normalized projector vector."""
    norm = math.fsum(projector.amplitudes**2)
    if abs(norm - 1.0) > tol:
        raise ValueError(f"projector not normalized: norm^2 = {norm!r}")
    return overlap(projector, state) ** 2


def helstrom_projectors(coeffs: ProjectorCoeffs, dim: int | None = None) -> tuple[FockVector, FockVector]:
    """Build ``(|pi_->, |pi_+>)`` in the Fock basis.

    ``|pi_->`` comes straight from the coefficients; ``|pi_+>`` is the
    Gram-Schmidt complement of ``|pi_->`` inside span{|alpha>, |-alpha>}.
    """
    plus = coherent_fock(coeffs.alpha, dim)
    minus = coherent_fock(-coeffs.alpha, plus.dim)
    pi_minus = superpose((coeffs.b0, coeffs.b1), (plus, minus))
    residual = plus.amplitudes - overlap(pi_minus, plus) * pi_minus.amplitudes
    pi_plus = FockVector.from_amplitudes(residual / math.sqrt(math.fsum(residual**2)))
    return pi_minus, pi_plus
