import math
from fractions import Fraction

import numpy as np
import pytest

from mfspec import (
    LocallyConstantBirkhoff,
    ReferenceMeasure,
    ShiftSpace,
    UniformGrid,
    binary_entropy,
    binomial_range_probability,
    binomial_tail_oracle,
    build_tilted_sampler,
    gartner_ellis_check,
    mgf_curve,
    sample_plain,
    sample_tilted,
)
from mfspec.pressure import PressureCurve
from mfspec.symbolic import log_cylinder_masses, symbol_blocks

FULL2 = ShiftSpace.full(2)
COIN = LocallyConstantBirkhoff.digit_sum(2)
UNIFORM = ReferenceMeasure.uniform(2)
Q_TILT = math.log(7 / 3)


def test_binomial_tail_small_cases():
    assert binomial_tail_oracle(4, 3, 0.5) == pytest.approx(5 / 16, abs=0)
    assert binomial_tail_oracle(10, 10, 0.5) == pytest.approx(2.0 ** -10, abs=0)
    assert binomial_tail_oracle(6, 0, 0.37) == 1.0
    with pytest.raises(ValueError):
        binomial_tail_oracle(4, 5, 0.5)


def test_binomial_tail_matches_exact_rational_recompute():
    total = sum(Fraction(math.comb(100, k), 2 ** 100) for k in range(70, 101))
    assert binomial_tail_oracle(100, 70, 0.5) == float(total)
    assert binomial_range_probability(100, 70, 100, 0.5) == float(total)


def test_plain_sampler_near_the_mean():
    est = sample_plain(UNIFORM, COIN, FULL2, 100, (0.45, 0.55), 10000, seed=3)
    assert est.log_rate is not None
    assert abs(est.log_rate) <= 0.01


def test_plain_sampler_against_exact_tail():
    est = sample_plain(UNIFORM, COIN, FULL2, 20, (0.7, 1.0), 100000, seed=5)
    exact = binomial_tail_oracle(20, 14, 0.5)
    se = math.sqrt(exact * (1 - exact) / est.samples)
    assert abs(est.prob_estimate - exact) <= 3 * se


def test_constant_observable_hits_always():
    const = LocallyConstantBirkhoff.constant(0.3, 2)
    est = sample_plain(UNIFORM, const, FULL2, 50, (0.2, 0.4), 2000, seed=1)
    assert est.prob_estimate == 1.0


def test_zero_hits_reports_bound_not_rate():
    est = sample_plain(UNIFORM, COIN, FULL2, 200, (0.9, 1.0), 1000, seed=2)
    assert est.prob_estimate == 0.0
    assert est.log_rate is None
    assert est.log_rate_bound == pytest.approx(math.log(1000) / 200)


def test_tilted_sampler_kernel_shape():
    sampler = build_tilted_sampler(UNIFORM, COIN, Q_TILT)
    np.testing.assert_allclose(sampler.chain.kernel.sum(axis=1), 1.0, atol=1e-12)
    np.testing.assert_allclose(sampler.chain.kernel[0], [0.3, 0.7], atol=1e-12)
    np.testing.assert_allclose(sampler.chain.init, [0.3, 0.7], atol=1e-12)


def test_tilt_zero_reproduces_plain_draws():
    plain = sample_plain(UNIFORM, COIN, FULL2, 50, (0.45, 0.55), 20000, seed=77)
    tilted = sample_tilted(UNIFORM, COIN, FULL2, 50, (0.45, 0.55), 0.0, 20000, seed=77)
    assert tilted.prob_estimate == plain.prob_estimate
    assert tilted.log_rate == plain.log_rate


def test_tilted_weights_integrate_to_one():
    est = sample_tilted(UNIFORM, COIN, FULL2, 60, (0.0, 1.0), Q_TILT, 20000, seed=9)
    assert est.prob_estimate == pytest.approx(1.0, abs=3 * est.ci_95_rel)


def test_tilted_estimator_matches_exact_tail():
    est = sample_tilted(UNIFORM, COIN, FULL2, 100, (0.7, 1.0), Q_TILT, 100000,
                        seed=20240817)
    exact = binomial_tail_oracle(100, 70, 0.5)
    assert abs(est.prob_estimate - exact) / exact <= 0.10


def test_tilted_rejects_wide_or_non_additive_specs():
    wide = LocallyConstantBirkhoff(2, 3, np.zeros(8))
    with pytest.raises(ValueError):
        sample_tilted(UNIFORM, wide, FULL2, 10, (0.0, 1.0), 1.0, 10, seed=0)


def test_markov_reference_tilting_is_unbiased():
    markov = ReferenceMeasure.markov([[0.6, 0.4], [0.3, 0.7]])
    exact = 0.0
    for block in symbol_blocks(FULL2, 10):
        masses = np.exp(log_cylinder_masses(markov, block))
        hits = block.sum(axis=1) / 10.0 >= 0.7
        exact += float(masses[hits].sum())
    est = sample_tilted(markov, COIN, FULL2, 10, (0.7, 1.0), 0.8, 200000, seed=4)
    assert est.prob_estimate == pytest.approx(exact, rel=0.05)


def test_plain_sampler_on_a_subshift():
    golden = ShiftSpace(2, np.array([[1, 1], [1, 0]]))
    parry = ReferenceMeasure.parry(golden)
    pair10 = LocallyConstantBirkhoff.word_indicator([1, 0], 2)
    est = sample_plain(parry, pair10, golden, 100, (0.2, 0.35), 5000, seed=13)
    # the typical pair frequency pi_1 * P(1 -> 0) ~ 0.276 sits mid-interval
    assert est.prob_estimate > 0.95


def test_unbiasedness_over_repeated_runs():
    n = 10
    exact = binomial_tail_oracle(n, 7, 0.5)
    for q in (0.0, 0.5, Q_TILT):
        vals = [sample_tilted(UNIFORM, COIN, FULL2, n, (0.7, 1.0), q, 1000,
                              seed=1000 + r).prob_estimate for r in range(200)]
        vals = np.asarray(vals)
        se = vals.std(ddof=1) / math.sqrt(len(vals))
        assert abs(vals.mean() - exact) <= 3 * se


def test_variance_reduction_on_the_rare_tail():
    plain = sample_plain(UNIFORM, COIN, FULL2, 100, (0.7, 1.0), 100000, seed=6)
    tilted = sample_tilted(UNIFORM, COIN, FULL2, 100, (0.7, 1.0), Q_TILT, 100000,
                           seed=6)
    assert tilted.ci_95_rel is not None
    if plain.ci_95_rel is None:
        assert plain.log_rate is None  # plain could only report a bound
    else:
        assert tilted.ci_95_rel * 5 <= plain.ci_95_rel


def test_rate_law_convergence_via_exact_oracle():
    target = math.log(2) - binary_entropy(0.7)
    rates = []
    for n in (100, 200, 400, 800):
        tail = binomial_tail_oracle(n, int(0.7 * n + 0.5), 0.5)
        rates.append(-math.log(tail) / n)
    for n, r in zip((100, 200, 400, 800), rates):
        assert abs(r - target) <= math.log(n + 1) / n
    assert all(b < a for a, b in zip(rates, rates[1:]))


def test_sharding_does_not_change_estimates():
    one = sample_tilted(UNIFORM, COIN, FULL2, 100, (0.7, 1.0), Q_TILT, 50000,
                        seed=42, shards=1)
    eight = sample_tilted(UNIFORM, COIN, FULL2, 100, (0.7, 1.0), Q_TILT, 50000,
                          seed=42, shards=8)
    assert one == eight


def test_gartner_ellis_on_the_coin_curve():
    curve = mgf_curve(COIN, FULL2, UNIFORM)
    report = gartner_ellis_check(curve)
    assert report.differentiable_interior and report.kinks == []
    rate7 = report.rate.value_at(0.7)
    assert rate7 == pytest.approx(math.log(2) - binary_entropy(0.7), abs=1e-3)


def _synthetic_curve(grid: UniformGrid, values: np.ndarray) -> PressureCurve:
    return PressureCurve(q_grid=grid, depths=(), values=np.empty((0, grid.size)),
                         limit=values, error_bound=np.zeros(grid.size),
                         converged=np.ones(grid.size, dtype=bool), kind="mgf")


def test_gartner_ellis_detects_synthetic_kink():
    grid = UniformGrid(-4.0, 4.0, 0.05)
    curve = _synthetic_curve(grid, np.maximum(0.0, grid.values()))
    report = gartner_ellis_check(curve)
    assert not report.differentiable_interior
    assert 0.0 in report.kinks


def test_gartner_ellis_linear_gives_point_rate():
    grid = UniformGrid(-4.0, 4.0, 0.05)
    c = 0.5
    curve = _synthetic_curve(grid, c * grid.values())
    report = gartner_ellis_check(curve)
    assert report.differentiable_interior
    assert report.rate.value_at(c) == pytest.approx(0.0, abs=1e-9)
    others = report.rate.values[~report.rate.is_inf]
    assert others.size <= 3  # only grid points next to c stay finite


def test_gartner_ellis_refuses_unconverged_curves():
    grid = UniformGrid(-4.0, 4.0, 0.5)
    curve = PressureCurve(q_grid=grid, depths=(), values=np.empty((0, grid.size)),
                          limit=grid.values() ** 2 / 2,
                          error_bound=np.full(grid.size, 1.0),
                          converged=np.zeros(grid.size, dtype=bool), kind="mgf")
    with pytest.raises(ValueError):
        gartner_ellis_check(curve)
