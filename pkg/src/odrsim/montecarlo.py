"""Seeded Monte Carlo of the displacement receiver.

Randomness is counter based: trial ``i`` of a run keyed by ``seed`` always
consumes Philox blocks ``2i`` and ``2i + 1`` (eight 64-bit words), one word
per purpose, so any partition of the trials over workers reproduces the
serial result bit for bit.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from typing import Sequence

import numpy as np

from .bounds import odr_ber, optimal_beta_model
from .model import (
    BerResult,
    Displacement,
    ImperfectionModel,
    SignalModel,
    ValidationError,
    effective_means,
)
from .tes import HeightHistogram, TesModel, histogram_from_arrays, sample_pulse_height

__all__ = [
    "RunConfig",
    "TrialRecord",
    "RunResult",
    "trial_uniforms",
    "generate_bits",
    "poisson_inverse",
    "simulate_run",
    "sweep_beta",
    "sub_seed",
]

WORDS_PER_TRIAL = 8
BLOCKS_PER_TRIAL = 2
# word slot of each purpose inside a trial's eight words
SLOT_BIT, SLOT_POISSON, SLOT_JITTER, SLOT_TES = 0, 1, 2, 4
MAX_SEED = 2**64 - 1


@dataclass(frozen=True)
class RunConfig:
    alpha_sq: float
    beta_sq: float | str = "optimal"
    model: ImperfectionModel = field(default_factory=ImperfectionModel)
    n_trials: int = 10_000
    seed: int = 0
    tes_enabled: bool = False
    tes: TesModel | None = None

    def __post_init__(self):
        if not self.alpha_sq >= 0:
            raise ValidationError("alpha_sq", f"must be >= 0: {self.alpha_sq!r}")
        if isinstance(self.beta_sq, str):
            if self.beta_sq != "optimal":
                raise ValidationError("beta_sq", "must be a number >= 0 or 'optimal'")
        elif not self.beta_sq >= 0:
            raise ValidationError("beta_sq", f"must be >= 0: {self.beta_sq!r}")
        if not (isinstance(self.n_trials, int) and self.n_trials >= 1):
            raise ValidationError("n_trials", f"must be an integer >= 1: {self.n_trials!r}")
        if not (isinstance(self.seed, int) and 0 <= self.seed <= MAX_SEED):
            raise ValidationError("seed", "must be an integer in [0, 2**64)")
        if self.tes is None:
            object.__setattr__(self, "tes", TesModel(dark_mean=self.model.nu))
        elif self.tes.dark_mean != self.model.nu:
            raise ValidationError("tes.dark_mean", f"must equal nu ({self.model.nu}), got {self.tes.dark_mean}")

    @classmethod
    def from_dict(cls, d: dict) -> "RunConfig":
        """Build from the JSON document layout (flat model fields, nested ``tes``)."""
        known = {"alpha_sq", "beta_sq", "eta", "nu", "xi", "phase_jitter_sigma",
                 "n_trials", "seed", "tes_enabled", "tes"}
        unknown = set(d) - known
        if unknown:
            raise ValidationError(sorted(unknown)[0], "is not a recognised field")
        if "alpha_sq" not in d:
            raise ValidationError("alpha_sq", "is required")
        model = ImperfectionModel(
            **{k: float(d[k]) for k in ("eta", "nu", "xi", "phase_jitter_sigma") if k in d}
        )
        tes = None
        if d.get("tes") is not None:
            tes_fields = dict(d["tes"])
            tes_fields.setdefault("dark_mean", model.nu)
            bad = set(tes_fields) - {"photon_energy_ev", "resolution_fwhm_ev", "threshold_ev", "dark_mean"}
            if bad:
                raise ValidationError(f"tes.{sorted(bad)[0]}", "is not a recognised field")
            tes = TesModel(**tes_fields)
        beta_sq = d.get("beta_sq", "optimal")
        return cls(
            alpha_sq=float(d["alpha_sq"]),
            beta_sq=beta_sq if isinstance(beta_sq, str) else float(beta_sq),
            model=model,
            n_trials=d.get("n_trials", 10_000),
            seed=d.get("seed", 0),
            tes_enabled=bool(d.get("tes_enabled", False)),
            tes=tes,
        )

    def to_dict(self) -> dict:
        return {
            "alpha_sq": self.alpha_sq,
            "beta_sq": self.beta_sq,
            **asdict(self.model),
            "n_trials": self.n_trials,
            "seed": self.seed,
            "tes_enabled": self.tes_enabled,
            "tes": asdict(self.tes),
        }

    def signal(self) -> SignalModel:
        return SignalModel.from_mean_photons(self.alpha_sq)

    def displacement(self) -> Displacement:
        if self.beta_sq == "optimal":
            return optimal_beta_model(self.signal(), self.model)[0]
        return Displacement.from_mean_photons(self.beta_sq)


@dataclass(frozen=True)
class TrialRecord:
    index: int
    true_bit: str
    detected_photons: int
    pulse_height_ev: float | None
    decided_bit: str


@dataclass
class RunResult:
    result: BerResult
    beta: float
    n_plus: int
    histogram: HeightHistogram | None = None
    records: list[TrialRecord] = field(default_factory=list)
    analytic: BerResult | None = None


def trial_uniforms(seed: int, start: int, stop: int) -> np.ndarray:
    """Uniform [0, 1) draws of shape ``(stop - start, 8)`` for trials ``start..stop-1``."""
    bitgen = np.random.Philox(key=seed, counter=BLOCKS_PER_TRIAL * start)
    words = bitgen.random_raw(WORDS_PER_TRIAL * (stop - start))
    return ((words >> np.uint64(11)).astype(np.float64) * 2.0**-53).reshape(-1, WORDS_PER_TRIAL)


def _bits_from(u: np.ndarray) -> np.ndarray:
    return u[:, SLOT_BIT] < 0.5


def generate_bits(seed: int, n: int) -> np.ndarray:
    """Boolean array, True where trial ``i`` sends ``+``; the same bits :func:`simulate_run` uses."""
    if n < 1:
        raise ValueError("n must be >= 1")
    return _bits_from(trial_uniforms(seed, 0, n))


def _normal(u1: np.ndarray, u2: np.ndarray) -> np.ndarray:
    return np.sqrt(-2.0 * np.log1p(-u1)) * np.cos(2.0 * math.pi * u2)


def poisson_inverse(u: np.ndarray, mean: np.ndarray) -> np.ndarray:
    """Poisson variates by sequential-search inversion of one uniform each."""
    u = np.asarray(u, dtype=float)
    mean = np.broadcast_to(np.asarray(mean, dtype=float), u.shape)
    pmf = np.exp(-mean)
    cdf = pmf.copy()
    counts = np.zeros(u.shape, dtype=np.int64)
    active = u >= cdf
    k = 0
    while active.any():
        k += 1
        counts += active
        pmf = pmf * mean / k
        cdf = cdf + pmf
        # the cdf can saturate just below u ~ 1 - 2**-53; stop once pmf is gone
        active = (u >= cdf) & (pmf > 0.0)
    return counts


@dataclass
class _Chunk:
    errors: int
    n_plus: int
    histogram: HeightHistogram | None
    records: list[TrialRecord]


def _run_chunk(cfg: RunConfig, s: SignalModel, d: Displacement, start: int, stop: int,
               edges, n_record: int) -> _Chunk:
    u = trial_uniforms(cfg.seed, start, stop)
    plus = _bits_from(u)
    m = cfg.model
    if m.phase_jitter_sigma > 0:
        theta = m.phase_jitter_sigma * _normal(u[:, SLOT_JITTER], u[:, SLOT_JITTER + 1])
        n_null, n_anti = effective_means(s, d, m, np.cos(theta))
    else:
        n_null, n_anti = effective_means(s, d, m)
    photons = poisson_inverse(u[:, SLOT_POISSON], np.where(plus, n_anti, n_null))

    heights = None
    if cfg.tes_enabled:
        heights = sample_pulse_height(photons, cfg.tes, _normal(u[:, SLOT_TES], u[:, SLOT_TES + 1]))
        click = heights >= cfg.tes.threshold_ev
    else:
        click = photons >= 1
    # zero photons -> the nulled signal "-"
    decided_plus = click
    errors = int(np.count_nonzero(decided_plus != plus))

    hist = None
    if cfg.tes_enabled and edges is not None:
        hist = histogram_from_arrays(plus, heights, edges)

    records = []
    for j in range(min(n_record - start, stop - start) if n_record > start else 0):
        records.append(TrialRecord(
            index=start + j,
            true_bit="+" if plus[j] else "-",
            detected_photons=int(photons[j]),
            pulse_height_ev=float(heights[j]) if heights is not None else None,
            decided_bit="+" if decided_plus[j] else "-",
        ))
    return _Chunk(errors, int(np.count_nonzero(plus)), hist, records)


def default_edges(t: TesModel) -> np.ndarray:
    step = t.photon_energy_ev / 10.0
    return np.arange(-10, 71) * step


def simulate_run(
    cfg: RunConfig,
    record: int = 20,
    workers: int = 1,
    edges: Sequence[float] | None = None,
    chunk_size: int = 65_536,
) -> RunResult:
    """Simulate ``cfg.n_trials`` BPSK pulses through the displacement receiver.

    The first ``record`` trials are returned as :class:`TrialRecord`. When
    the TES layer is enabled a pulse-height histogram is built on ``edges``
    (default: tenth-of-a-photon bins). ``workers`` only changes how the
    trials are scheduled, never the result.
    """
    s = cfg.signal()
    d = cfg.displacement()
    if cfg.tes_enabled and edges is None:
        edges = default_edges(cfg.tes)
    n = cfg.n_trials
    bounds = [(lo, min(lo + chunk_size, n)) for lo in range(0, n, chunk_size)]
    if workers > 1 and len(bounds) < workers:
        step = -(-n // workers)
        bounds = [(lo, min(lo + step, n)) for lo in range(0, n, step)]

    def job(b):
        return _run_chunk(cfg, s, d, b[0], b[1], edges, record)

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            chunks = list(pool.map(job, bounds))
    else:
        chunks = [job(b) for b in bounds]

    errors = sum(c.errors for c in chunks)
    hist = None
    if cfg.tes_enabled:
        for c in chunks:
            hist = c.histogram if hist is None else hist.merge(c.histogram)
    ber = errors / n
    return RunResult(
        result=BerResult(ber, math.sqrt(ber * (1.0 - ber) / n), n, "monte-carlo"),
        beta=d.beta,
        n_plus=sum(c.n_plus for c in chunks),
        histogram=hist,
        records=[r for c in chunks for r in c.records],
        analytic=odr_ber(s, d, cfg.model),
    )


def sub_seed(seed: int, index: int) -> int:
    """Independent 64-bit seed for point ``index`` of a sweep keyed by ``seed``."""
    ss = np.random.SeedSequence(entropy=seed, spawn_key=(index,))
    return int(ss.generate_state(1, dtype=np.uint64)[0])


def sweep_beta(cfg: RunConfig, beta_sq_grid: Sequence[float], workers: int = 1) -> list[tuple[float, RunResult]]:
    """One :func:`simulate_run` per displacement, each with its own derived seed."""
    if len(beta_sq_grid) == 0:
        raise ValueError("beta_sq_grid must not be empty")
    out = []
    for i, b2 in enumerate(beta_sq_grid):
        point = replace(cfg, beta_sq=float(b2), seed=sub_seed(cfg.seed, i))
        out.append((float(b2), simulate_run(point, record=0, workers=workers)))
    return out
