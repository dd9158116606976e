import math
from dataclasses import replace

import numpy as np
import pytest
from scipy import stats

from odrsim.model import IDEAL, REFERENCE_MODEL, ImperfectionModel, ValidationError
from odrsim.montecarlo import (
    RunConfig,
    generate_bits,
    poisson_inverse,
    simulate_run,
    sub_seed,
    sweep_beta,
    trial_uniforms,
)
from odrsim.tes import TesModel

OPERATING_POINT = RunConfig(alpha_sq=0.21, beta_sq=0.59, model=REFERENCE_MODEL, n_trials=10_000, seed=1)
ANALYTIC_OP = 0.17265


class TestRandomness:
    def test_bits_deterministic(self):
        np.testing.assert_array_equal(generate_bits(42, 1000), generate_bits(42, 1000))
        assert not np.array_equal(generate_bits(42, 1000), generate_bits(43, 1000))

    def test_single_bit(self):
        assert generate_bits(5, 1).shape == (1,)

    def test_bits_prefix_stable(self):
        np.testing.assert_array_equal(generate_bits(9, 100), generate_bits(9, 1000)[:100])

    def test_counter_addressing(self):
        whole = trial_uniforms(77, 0, 50)
        np.testing.assert_array_equal(trial_uniforms(77, 20, 50), whole[20:])

    def test_uniform_range(self):
        u = trial_uniforms(3, 0, 10_000)
        assert u.min() >= 0.0 and u.max() < 1.0

    def test_known_words(self):
        # frozen stream layout: any change here breaks reproducibility of old runs
        assert generate_bits(2024, 16).astype(int).tolist() == [0, 1, 1, 0, 0, 0, 1, 1, 1, 0, 0, 0, 1, 0, 0, 1]
        assert trial_uniforms(0, 0, 1)[0, :2].tolist() == [0.011546754286331562, 0.24154919656271812]

    @pytest.mark.slow
    def test_bits_unbiased(self):
        n = 10**6
        band = 3 * math.sqrt(0.25 / n)
        inside = sum(abs(generate_bits(seed, n).mean() - 0.5) <= band for seed in range(100))
        assert inside >= 99


@pytest.mark.parametrize("mean", [0.003, 0.0948, 1.367, 4.0, 9.5])
def test_poisson_inverse_chi_square(mean):
    u = trial_uniforms(123, 0, 200_000)[:, 1]
    counts = poisson_inverse(u, mean)
    kmax = int(stats.poisson.ppf(1 - 1e-6, mean))
    observed = np.bincount(np.minimum(counts, kmax), minlength=kmax + 1)
    expected = stats.poisson.pmf(np.arange(kmax + 1), mean)
    expected[-1] += stats.poisson.sf(kmax, mean)
    expected *= len(u)
    # pool sparse cells so each expected count is at least 5
    obs_pool, exp_pool, o_acc, e_acc = [], [], 0.0, 0.0
    for o, e in zip(observed, expected):
        o_acc += o
        e_acc += e
        if e_acc >= 5:
            obs_pool.append(o_acc)
            exp_pool.append(e_acc)
            o_acc = e_acc = 0.0
    if e_acc:
        obs_pool[-1] += o_acc
        exp_pool[-1] += e_acc
    if len(obs_pool) < 2:
        pytest.skip("mean too small for a chi-square test")
    p = stats.chisquare(obs_pool, exp_pool).pvalue
    assert p > 0.01


def test_poisson_inverse_edge_uniforms():
    assert poisson_inverse(np.array([0.0]), 2.0)[0] == 0
    top = poisson_inverse(np.array([1 - 2**-53]), 2.0)[0]
    assert 10 <= top < 100
    assert poisson_inverse(np.array([0.5]), 0.0)[0] == 0


class TestSimulateRun:
    def test_operating_point(self):
        run = simulate_run(OPERATING_POINT)
        r = run.result
        assert r.provenance == "monte-carlo" and r.n_trials == 10_000
        assert r.stderr == pytest.approx(math.sqrt(r.ber * (1 - r.ber) / 1e4))
        assert abs(r.ber - ANALYTIC_OP) <= 0.0113
        assert run.analytic.ber == pytest.approx(ANALYTIC_OP, abs=2e-5)

    def test_no_information(self):
        cfg = RunConfig(alpha_sq=0.0, beta_sq=0.0, model=IDEAL, n_trials=10_000, seed=4)
        r = simulate_run(cfg).result
        assert abs(r.ber - 0.5) <= 3 * 0.005

    def test_kennedy_large_signal(self):
        cfg = RunConfig(alpha_sq=9.0, beta_sq=9.0, model=IDEAL, n_trials=10_000, seed=5)
        r = simulate_run(cfg).result
        assert r.ber == 0.0 and r.stderr == 0.0

    def test_deterministic(self):
        a, b = simulate_run(OPERATING_POINT, record=50), simulate_run(OPERATING_POINT, record=50)
        assert a.result == b.result
        assert a.records == b.records

    @pytest.mark.parametrize("workers, chunk", [(2, 65_536), (4, 1000), (3, 777), (1, 333)])
    def test_parallelism_invariant(self, workers, chunk):
        cfg = replace(OPERATING_POINT, model=ImperfectionModel(0.91, 0.003, 0.993, 0.05), tes_enabled=True,
                      tes=TesModel(dark_mean=0.003))
        base = simulate_run(cfg, record=cfg.n_trials)
        other = simulate_run(cfg, record=cfg.n_trials, workers=workers, chunk_size=chunk)
        assert other.result == base.result
        assert other.records == base.records
        np.testing.assert_array_equal(other.histogram.counts_plus, base.histogram.counts_plus)
        np.testing.assert_array_equal(other.histogram.counts_minus, base.histogram.counts_minus)

    def test_records_follow_decision_rule(self):
        run = simulate_run(OPERATING_POINT, record=500)
        assert len(run.records) == 500
        for t in run.records:
            assert t.decided_bit == ("+" if t.detected_photons >= 1 else "-")
            assert t.pulse_height_ev is None

    def test_realized_split_and_bits(self):
        run = simulate_run(OPERATING_POINT, record=OPERATING_POINT.n_trials)
        bits = generate_bits(OPERATING_POINT.seed, OPERATING_POINT.n_trials)
        assert run.n_plus == bits.sum()
        assert [t.true_bit == "+" for t in run.records] == bits.tolist()

    def test_sharp_tes_equals_click_counting(self):
        sharp = replace(OPERATING_POINT, tes_enabled=True, tes=TesModel(resolution_fwhm_ev=0.0, dark_mean=0.003))
        a = simulate_run(OPERATING_POINT, record=OPERATING_POINT.n_trials)
        b = simulate_run(sharp, record=OPERATING_POINT.n_trials)
        assert a.result == b.result
        assert [(t.detected_photons, t.decided_bit) for t in a.records] == [
            (t.detected_photons, t.decided_bit) for t in b.records
        ]

    def test_label_asymmetric_histogram(self):
        cfg = replace(OPERATING_POINT, tes_enabled=True, tes=TesModel(dark_mean=0.003), seed=2)
        run = simulate_run(cfg, record=cfg.n_trials)
        h = run.histogram
        e = cfg.tes.photon_energy_ev
        centers = 0.5 * (h.bin_edges[1:] + h.bin_edges[:-1])
        zero_peak = centers < e / 2
        # "-" is the nulled signal
        assert h.counts_minus[zero_peak].sum() / h.counts_minus.sum() >= 0.85
        assert h.counts_plus.sum() + h.counts_minus.sum() == cfg.n_trials
        heights_plus = [t.pulse_height_ev for t in run.records if t.true_bit == "+"]
        heights_minus = [t.pulse_height_ev for t in run.records if t.true_bit == "-"]
        assert np.mean(heights_plus) > np.mean(heights_minus)

    def test_optimal_sentinel(self):
        run = simulate_run(replace(OPERATING_POINT, beta_sq="optimal"))
        assert 0.5 <= run.beta**2 <= 0.7

    def test_single_trial(self):
        r = simulate_run(replace(OPERATING_POINT, n_trials=1)).result
        assert r.ber in (0.0, 1.0)

    @pytest.mark.slow
    @pytest.mark.parametrize(
        "cfg",
        [
            OPERATING_POINT,
            RunConfig(alpha_sq=0.21, beta_sq=0.5785, model=IDEAL, n_trials=10_000),
            RunConfig(alpha_sq=0.6, beta_sq=0.8, model=ImperfectionModel(0.8, 0.01, 0.98, 0.1), n_trials=10_000),
            RunConfig(alpha_sq=0.05, beta_sq=0.6, model=REFERENCE_MODEL, n_trials=10_000),
        ],
    )
    def test_agrees_with_analytic(self, cfg):
        inside = 0
        for seed in range(100):
            run = simulate_run(replace(cfg, seed=seed), record=0)
            inside += abs(run.result.ber - run.analytic.ber) <= 4 * run.result.stderr
        assert inside >= 99

    @pytest.mark.slow
    def test_stderr_scaling(self):
        mean_se = {}
        for n in (10**3, 10**4, 10**5):
            mean_se[n] = np.mean([simulate_run(replace(OPERATING_POINT, n_trials=n, seed=s), record=0).result.stderr
                                  for s in range(30)])
        for n in (10**3, 10**4, 10**5):
            assert mean_se[n] * math.sqrt(n) == pytest.approx(mean_se[10**4] * 100, rel=0.1)


class TestRunConfig:
    def test_from_dict_round_trip(self):
        d = {"alpha_sq": 0.21, "beta_sq": 0.59, "eta": 0.91, "nu": 0.003, "xi": 0.993,
             "phase_jitter_sigma": 0.0, "n_trials": 10000, "seed": 7, "tes_enabled": True,
             "tes": {"photon_energy_ev": 1.4535, "resolution_fwhm_ev": 0.55, "threshold_ev": 0.7, "dark_mean": 0.003}}
        cfg = RunConfig.from_dict(d)
        assert cfg.model == REFERENCE_MODEL
        assert cfg.tes.threshold_ev == 0.7
        assert RunConfig.from_dict(cfg.to_dict()) == cfg

    def test_dark_mean_defaults_to_nu(self):
        cfg = RunConfig.from_dict({"alpha_sq": 0.2, "nu": 0.01})
        assert cfg.tes.dark_mean == 0.01
        assert cfg.beta_sq == "optimal"

    @pytest.mark.parametrize(
        "d, field",
        [
            ({"alpha_sq": 0.2, "bogus": 1}, "bogus"),
            ({"alpha_sq": -0.2}, "alpha_sq"),
            ({"alpha_sq": 0.2, "eta": 2.0}, "eta"),
            ({"alpha_sq": 0.2, "n_trials": 0}, "n_trials"),
            ({"alpha_sq": 0.2, "beta_sq": "best"}, "beta_sq"),
            ({"alpha_sq": 0.2, "nu": 0.003, "tes": {"dark_mean": 0.01}}, "tes.dark_mean"),
            ({"alpha_sq": 0.2, "seed": -1}, "seed"),
            ({"beta_sq": 0.2}, "alpha_sq"),
        ],
    )
    def test_field_errors(self, d, field):
        with pytest.raises(ValidationError) as exc:
            RunConfig.from_dict(d)
        assert exc.value.field == field


class TestSweep:
    def test_single_point(self):
        out = sweep_beta(replace(OPERATING_POINT, n_trials=1000), [0.59])
        assert len(out) == 1 and out[0][0] == 0.59

    def test_sub_seeds_distinct_and_stable(self):
        seeds = [sub_seed(7, i) for i in range(50)]
        assert len(set(seeds)) == 50
        assert seeds == [sub_seed(7, i) for i in range(50)]

    def test_empty_grid(self):
        with pytest.raises(ValueError):
            sweep_beta(OPERATING_POINT, [])

    def test_reference_model_minimum_near_0p6(self):
        grid = np.round(np.arange(0.3, 1.0001, 0.1), 10)
        out = sweep_beta(replace(OPERATING_POINT, n_trials=10**5), grid)
        analytic_best = min(out, key=lambda p: p[1].analytic.ber)[0]
        mc_best = min(out, key=lambda p: p[1].result.ber)[0]
        assert analytic_best == pytest.approx(0.6)
        assert abs(mc_best - 0.6) <= 0.1 + 1e-9

    @pytest.mark.slow
    def test_ideal_minimum_located(self):
        grid = np.round(np.arange(0.1, 1.2001, 0.05), 10)
        cfg = RunConfig(alpha_sq=0.21, beta_sq=0.5, model=IDEAL, n_trials=10**6, seed=11)
        out = sweep_beta(cfg, grid)
        mc_best = min(out, key=lambda p: p[1].result.ber)[0]
        assert abs(mc_best - 0.578) <= 0.05
