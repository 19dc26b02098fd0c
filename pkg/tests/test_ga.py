import json
from concurrent.futures import ThreadPoolExecutor

import numpy as np
import pytest

from gaitgts.errors import InsufficientTuningData
from gaitgts.ga import (ZERO_REPORT, FitnessReport, GaConfig, HypothesisFitness, TuningSet,
                        combine_ccrs, evolve, log_records, mask_key, mutate, roulette_select,
                        run_ga, sequential_refine, uniform_crossover, view_seed)
from gaitgts.segmentation import WHOLE_TEMPLATE, GtsHypothesis, SplitBounds, build_mask
from gaitgts.templates import Covariate


def bits(s):
    return np.array([int(c) for c in s], np.uint8)


def test_fitness_formula():
    assert combine_ccrs(1, 1, 1) == pytest.approx(1.0, abs=1e-15)
    assert combine_ccrs(0, 0, 0) == 0.0
    assert combine_ccrs(0.98, 0.955, 0.93) == pytest.approx((0.49 + 0.955 / 6 + 0.31) ** 2)
    assert abs(combine_ccrs(0.98, 0.955, 0.93) - 0.9200) < 1e-4
    rep = FitnessReport.from_ccrs(0.5, 0.25, 1.0)
    assert rep.fitness == combine_ccrs(0.5, 0.25, 1.0)


def test_config_validation():
    GaConfig()
    for bad in (dict(population_size=21), dict(crossover_prob=1.5), dict(mutation_prob=-0.1),
                dict(generations=0)):
        with pytest.raises(ValueError):
            GaConfig(**bad)


def test_crossover_identical_parents():
    a = np.random.default_rng(0).integers(0, 2, 28).astype(np.uint8)
    for seed in range(20):
        ca, cb = uniform_crossover(a, a.copy(), np.random.default_rng(seed))
        np.testing.assert_array_equal(ca, a)
        np.testing.assert_array_equal(cb, a)


def test_crossover_full_swap():
    a = np.random.default_rng(1).integers(0, 2, 28).astype(np.uint8)
    b = 1 - a
    ca, cb = uniform_crossover(a, b, np.random.default_rng(0), prob=1.0, swap_mask=np.ones(28, bool))
    np.testing.assert_array_equal(ca, b)
    np.testing.assert_array_equal(cb, a)


def test_crossover_prob_zero_copies():
    a, b = np.zeros(28, np.uint8), np.ones(28, np.uint8)
    ca, cb = uniform_crossover(a, b, np.random.default_rng(0), prob=0.0)
    np.testing.assert_array_equal(ca, a)
    np.testing.assert_array_equal(cb, b)


def test_crossover_golden():
    rng = np.random.default_rng(2024)
    a, b = np.zeros(28, np.uint8), np.ones(28, np.uint8)
    golden = [("0000000000000000000000000000", "1111111111111111111111111111"),
              ("1101011001110010101101111011", "0010100110001101010010000100"),
              ("0011011001111110101010110111", "1100100110000001010101001000")]
    for ga, gb in golden:
        ca, cb = uniform_crossover(a, b, rng, 0.6)
        np.testing.assert_array_equal(ca, bits(ga))
        np.testing.assert_array_equal(cb, bits(gb))


def test_crossover_consumes_fixed_draws():
    # the stream position after a call must not depend on whether crossover fired
    a, b = np.zeros(28, np.uint8), np.ones(28, np.uint8)
    r1, r2 = np.random.default_rng(5), np.random.default_rng(5)
    uniform_crossover(a, b, r1, prob=0.0)
    uniform_crossover(a, b, r2, prob=1.0)
    assert r1.random() == r2.random()


def test_mutation_extremes():
    c = np.random.default_rng(2).integers(0, 2, 28).astype(np.uint8)
    np.testing.assert_array_equal(mutate(c, np.random.default_rng(0), 0.0), c)
    np.testing.assert_array_equal(mutate(c, np.random.default_rng(0), 1.0), 1 - c)


def test_mutation_rate_monte_carlo():
    c = np.zeros(1_000_000, np.uint8)
    flipped = mutate(c, np.random.default_rng(7), 0.03).mean()
    assert abs(flipped - 0.03) < 0.001


def test_roulette_uniform_when_all_zero():
    rng = np.random.default_rng(0)
    picks = np.array(roulette_select(rng, np.zeros(4), 40000))
    counts = np.bincount(picks, minlength=4) / 40000
    np.testing.assert_allclose(counts, 0.25, atol=0.01)


def test_roulette_proportional():
    rng = np.random.default_rng(1)
    fit = np.array([0.0, 1.0, 3.0])
    picks = np.array(roulette_select(rng, fit, 40000))
    counts = np.bincount(picks, minlength=3) / 40000
    np.testing.assert_allclose(counts, [0, 0.25, 0.75], atol=0.01)
    assert counts[0] == 0


def onemax(b):
    return float(np.mean(b))


def test_constant_fitness_flat_history():
    r = run_ga(GaConfig(seed=3), lambda b: 0.5)
    assert r.history == [0.5] * 15


def test_population_size_constant_and_elite_survives():
    cfg = GaConfig(seed=4)
    r = run_ga(cfg, onemax)
    assert len(r.populations) == 15
    for prev, cur in zip(r.populations, r.populations[1:]):
        assert cur.shape == (20, 28)
        elite = prev[int(np.argmax([onemax(b) for b in prev]))]
        np.testing.assert_array_equal(cur[0], elite)


def test_elite_tie_goes_to_lowest_index():
    r = run_ga(GaConfig(seed=0, generations=2), lambda b: 1.0)
    np.testing.assert_array_equal(r.populations[1][0], r.populations[0][0])


@pytest.mark.parametrize("seed", range(10))
def test_elitism_monotone_on_onemax(seed):
    h = run_ga(GaConfig(seed=seed), onemax).history
    assert all(b >= a for a, b in zip(h, h[1:]))


def test_onemax_converges_within_15_generations():
    """Target behaviour: all-ones within 15 generations for at least 9 of 10 seeds.

    Expected to fail: 300 evaluations with roulette selection on a fitness
    confined to [0.5, 1] give too little selection pressure (see the notes
    accompanying the repository).
    """
    hits = sum(run_ga(GaConfig(seed=s), onemax).best_score == 1.0 for s in range(10))
    assert hits >= 9, f"converged for {hits}/10 seeds"


def test_onemax_progress_and_eventual_convergence():
    r = run_ga(GaConfig(seed=0), onemax)
    means = [p.mean() for p in r.populations]
    assert means[-1] > means[0] + 0.1
    hits = sum(run_ga(GaConfig(seed=s, generations=100), onemax).best_score == 1.0 for s in range(10))
    assert hits >= 9


def test_determinism_and_concurrent_map():
    a = run_ga(GaConfig(seed=11), onemax)
    b = run_ga(GaConfig(seed=11), onemax)
    with ThreadPoolExecutor(4) as pool:
        c = run_ga(GaConfig(seed=11), onemax, map_fn=pool.map)
    for other in (b, c):
        np.testing.assert_array_equal(a.best, other.best)
        assert a.history == other.history


def test_view_seed():
    assert view_seed(0, 90) == view_seed(0, 90)
    assert len({view_seed(0, v) for v in range(0, 181, 18)}) == 11
    assert view_seed(0, 90) != view_seed(1, 90)


# --- tuning-set fitness --------------------------------------------------------

def _tuning_set(n_subjects=4, noise=0.05, seed=0):
    rng = np.random.default_rng(seed)
    protos = rng.random((n_subjects, 240 * 240))
    def draw(k):
        rows = np.repeat(protos, k, axis=0) + noise * rng.standard_normal((n_subjects * k, 240 * 240))
        return rows, np.repeat([f"{i:03d}" for i in range(n_subjects)], k)
    g, gl = draw(3)
    probes = {c: draw(2) for c in (Covariate.NORMAL, Covariate.BAG, Covariate.COAT)}
    return TuningSet(g, gl, probes)


def test_tuning_set_requires_every_covariate():
    ts = _tuning_set()
    probes = dict(ts.probes)
    probes[Covariate.COAT] = (np.zeros((0, 57600)), np.zeros(0))
    with pytest.raises(InsufficientTuningData):
        TuningSet(ts.gallery, ts.gallery_labels, probes)
    with pytest.raises(InsufficientTuningData):
        TuningSet(np.zeros((0, 57600)), np.zeros(0), ts.probes)


def test_empty_mask_scores_zero_and_whole_mask_separates():
    ts = _tuning_set()
    assert ts.evaluate(np.zeros((240, 240), np.uint8)) == ZERO_REPORT
    rep = ts.evaluate(build_mask(WHOLE_TEMPLATE))
    assert rep.fitness == pytest.approx(1.0)


def test_fitness_cache_keyed_by_mask():
    fit = HypothesisFitness(_tuning_set())
    a = GtsHypothesis(40, 100, 150, 1, 0, 0, 1)
    fit(a)
    fit(a.replace(s_m=170))  # same mask: midsections excluded
    assert fit.evaluations == 1
    fit(a.replace(s_f=160))
    assert fit.evaluations == 2
    assert mask_key(build_mask(a)) == mask_key(build_mask(a.replace(s_m=60)))


def test_evolve_with_tuning_set_and_log():
    ts = _tuning_set()
    res = evolve(GaConfig(population_size=6, generations=3, seed=1), ts)
    assert len(res.history) == 3
    fits = [r.fitness for r in res.history]
    assert fits == sorted(fits)
    assert res.report.fitness == max(fits)
    lines = log_records(90, res)
    rec = json.loads(lines[-1])
    assert set(rec) == {"view", "generation", "best_fitness", "bits", "ccr_a", "ccr_b", "ccr_c"}
    assert rec["generation"] == 2 and len(rec["bits"]) == 28


class Landscape:
    """Fitness peaked at (s_h, s_f) = (h0, f0), unimodal on the grid."""

    def __init__(self, h0, f0):
        self.h0, self.f0 = h0, f0

    def __call__(self, h):
        value = 1.0 / (1.0 + 0.01 * abs(h.s_h - self.h0) + 0.02 * abs(h.s_f - self.f0))
        return FitnessReport(value, value, value, value)


def test_refine_reaches_grid_optimum():
    b = SplitBounds()
    for h0, f0 in [(30, 200), (12, 228), (96, 120), (70, 150)]:
        fit = Landscape(h0, f0)
        grid = max(((fit(GtsHypothesis(h, 100, f)).fitness, h, f)
                    for h in range(b.h_min, b.h_max + 1) for f in range(b.f_min, b.f_max + 1)))
        start = GtsHypothesis(50, 100, 170, 1, 0, 0, 1)
        out = sequential_refine(start, fit, b)
        assert (out.s_h, out.s_f) == grid[1:]


def test_refine_fixed_point_and_never_worse():
    fit = Landscape(30, 200)
    opt = GtsHypothesis(30, 100, 200, 1, 0, 0, 1)
    assert sequential_refine(opt, fit) == opt
    rng = np.random.default_rng(0)
    for _ in range(20):
        h = GtsHypothesis(int(rng.integers(12, 97)), 100, int(rng.integers(120, 229)),
                          *[int(x) for x in rng.integers(0, 2, 4)])
        assert fit(sequential_refine(h, fit)).fitness >= fit(h).fitness


def test_refine_skips_splits_the_mask_ignores():
    calls = []

    def fit(h):
        calls.append(h)
        return FitnessReport(0.5, 0.5, 0.5, 0.25)

    h = GtsHypothesis(40, 100, 150, 1, 1, 1, 1)  # whole template: no split matters
    assert sequential_refine(h, fit) == h
    assert len(calls) == 1
