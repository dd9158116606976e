"""Transition-edge sensor pulse-height statistics.

The filtered pulse height of an ``n``-photon event is modeled as
``n * photon_energy + sigma * z`` with ``z`` standard normal and a constant,
photon-number-independent ``sigma = fwhm / (2 sqrt(2 ln 2))``.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from typing import Iterable, Sequence, TextIO

import numpy as np

from .model import ValidationError
from .solvers import bisect_secant, golden_section

__all__ = [
    "PLANCK_EV_NM",
    "FWHM_PER_SIGMA",
    "TesModel",
    "HeightHistogram",
    "sample_pulse_height",
    "choose_threshold",
    "misread_probability",
    "overlap_loss",
    "build_histogram",
    "histogram_from_arrays",
]

PLANCK_EV_NM = 1239.842
WAVELENGTH_NM = 853.0
FWHM_PER_SIGMA = 2.0 * math.sqrt(2.0 * math.log(2.0))


@dataclass(frozen=True)
class TesModel:
    photon_energy_ev: float = PLANCK_EV_NM / WAVELENGTH_NM
    resolution_fwhm_ev: float = 0.55
    threshold_ev: float | None = None
    dark_mean: float = 0.003

    def __post_init__(self):
        if not self.photon_energy_ev > 0:
            raise ValidationError("photon_energy_ev", "must be > 0")
        if not self.resolution_fwhm_ev >= 0:
            raise ValidationError("resolution_fwhm_ev", "must be >= 0")
        if not self.dark_mean >= 0:
            raise ValidationError("dark_mean", "must be >= 0")
        if self.threshold_ev is None:
            object.__setattr__(self, "threshold_ev", 0.5 * self.photon_energy_ev)

    @property
    def sigma_ev(self) -> float:
        return self.resolution_fwhm_ev / FWHM_PER_SIGMA


def sample_pulse_height(n_photons, t: TesModel, noise_draw):
    """Pulse height in eV; works on scalars or numpy arrays alike."""
    return n_photons * t.photon_energy_ev + t.sigma_ev * noise_draw


def _below(x: float, sigma: float) -> float:
    """P(height < threshold) for a peak sitting ``x = threshold - peak`` below it."""
    if sigma == 0.0:
        return 1.0 if x > 0 else 0.0
    return 0.5 * math.erfc(-x / (sigma * math.sqrt(2.0)))


def _misids(t: TesModel, threshold: float, nonzero: np.ndarray) -> tuple[float, float]:
    e, s = t.photon_energy_ev, t.sigma_ev
    misid_zero = 1.0 - _below(threshold, s)
    misid_nonzero = math.fsum(q * _below(threshold - (n + 1) * e, s) for n, q in enumerate(nonzero))
    return misid_zero, misid_nonzero


def choose_threshold(
    t: TesModel, p_zero: float, p_nonzero_dist: Sequence[float]
) -> tuple[float, float, float]:
    """Threshold minimizing the total 0 / >=1 photon misclassification.

    ``p_nonzero_dist[k]`` is the probability of ``k + 1`` photons given at
    least one, so it sums to one. Returns ``(threshold, misid_zero,
    misid_nonzero)`` where the misidentifications are conditional on the true
    class.
    """
    nonzero = np.asarray(p_nonzero_dist, dtype=float)
    if not 0.0 <= p_zero <= 1.0 or np.any(nonzero < 0) or abs(nonzero.sum() - 1.0) > 1e-9:
        raise ValidationError("p_nonzero_dist", "distributions must be normalized")
    e = t.photon_energy_ev
    if t.sigma_ev == 0.0:
        return 0.5 * e, 0.0, 0.0

    def total(x: float) -> float:
        z, nz = _misids(t, x, nonzero)
        return p_zero * z + (1.0 - p_zero) * nz

    # coarse scan then golden refinement around the best grid cell
    grid = np.linspace(0.0, e, 201)
    values = [total(x) for x in grid]
    i = int(np.argmin(values))
    lo, hi = grid[max(i - 1, 0)], grid[min(i + 1, len(grid) - 1)]
    threshold, _ = golden_section(total, lo, hi, xtol=1e-12)
    return (threshold, *_misids(t, threshold, nonzero))


def _misread_mass(t: TesModel, photon_dist: np.ndarray) -> float:
    e, s = t.photon_energy_ev, t.sigma_ev
    return math.fsum(p * _below(t.threshold_ev - n * e, s) for n, p in enumerate(photon_dist) if n >= 1)


def misread_probability(t: TesModel, photon_dist: Sequence[float]) -> float:
    """P(height below threshold | at least one photon) for ``photon_dist[n] = P(n)``."""
    dist = np.asarray(photon_dist, dtype=float)
    nonzero_mass = dist[1:].sum()
    if nonzero_mass == 0.0:
        return 0.0
    return _misread_mass(t, dist) / nonzero_mass


def overlap_loss(t: TesModel, photon_dist: Sequence[float]) -> float:
    """Equivalent linear loss caused by the 0/1 peak overlap.

    Returns the per-photon loss probability ``l`` such that an ideal on/off
    detector behind a beam splitter of transmission ``1 - l`` misses the
    photon-bearing events of ``photon_dist`` exactly as often as the TES
    threshold does: ``sum_n P(n) l**n = sum_n P(n) P(height < threshold | n)``
    over ``n >= 1``. For single-photon events this is simply the misread
    probability.
    """
    dist = np.asarray(photon_dist, dtype=float)
    target = _misread_mass(t, dist)
    if target == 0.0:
        return 0.0
    ns = np.arange(len(dist))[1:]
    weights = dist[1:]
    return bisect_secant(
        lambda loss: math.fsum(weights * loss**ns) - target, 0.0, 1.0, ftol=1e-15
    )


@dataclass
class HeightHistogram:
    """Pulse-height counts split by the true signal label.

    Heights outside the edges are clamped into the first or last bin and
    counted in ``n_clamped``.
    """

    bin_edges: np.ndarray
    counts_plus: np.ndarray
    counts_minus: np.ndarray
    n_clamped: int = 0
    n_trials: int = 0

    def merge(self, other: "HeightHistogram") -> "HeightHistogram":
        if not np.array_equal(self.bin_edges, other.bin_edges):
            raise ValueError("cannot merge histograms with different edges")
        return HeightHistogram(
            self.bin_edges,
            self.counts_plus + other.counts_plus,
            self.counts_minus + other.counts_minus,
            self.n_clamped + other.n_clamped,
            self.n_trials + other.n_trials,
        )

    def write_csv(self, fh: TextIO) -> None:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["bin_lo_ev", "bin_hi_ev", "count_plus", "count_minus"])
        for lo, hi, cp, cm in zip(self.bin_edges[:-1], self.bin_edges[1:], self.counts_plus, self.counts_minus):
            w.writerow([f"{lo:.17g}", f"{hi:.17g}", int(cp), int(cm)])


def _check_edges(edges) -> np.ndarray:
    edges = np.asarray(edges, dtype=float)
    if edges.ndim != 1 or len(edges) < 2:
        raise ValueError("need at least two bin edges")
    if np.any(np.diff(edges) <= 0):
        raise ValueError("bin edges must be strictly increasing")
    return edges


def histogram_from_arrays(plus_mask: np.ndarray, heights: np.ndarray, edges) -> HeightHistogram:
    """Vectorized histogram: ``plus_mask[i]`` is True when trial ``i`` sent ``+``."""
    edges = _check_edges(edges)
    plus_mask = np.asarray(plus_mask, dtype=bool)
    heights = np.asarray(heights, dtype=float)
    outside = (heights < edges[0]) | (heights > edges[-1])
    clipped = np.clip(heights, edges[0], edges[-1])
    cp, _ = np.histogram(clipped[plus_mask], bins=edges)
    cm, _ = np.histogram(clipped[~plus_mask], bins=edges)
    return HeightHistogram(edges, cp, cm, int(outside.sum()), len(heights))


def build_histogram(trials: Iterable[tuple[str, float]], edges) -> HeightHistogram:
    """Histogram of ``(label, height)`` pairs, labels ``"+"`` or ``"-"``."""
    trials = list(trials)
    labels = [lab for lab, _ in trials]
    if any(lab not in ("+", "-") for lab in labels):
        raise ValueError("labels must be '+' or '-'")
    plus = np.array([lab == "+" for lab in labels], dtype=bool)
    heights = np.array([h for _, h in trials], dtype=float)
    return histogram_from_arrays(plus, heights, edges)
