import math

import numpy as np
import pytest

from mfspec import (
    AlternatingWeights,
    BudgetExceededError,
    ConstantWeights,
    LocallyConstantBirkhoff,
    MarkovLocalEntropy,
    MatrixCocycle,
    ReferenceMeasure,
    ShiftSpace,
    TableWeights,
    WeightedBirkhoff,
    almost_additivity_defect,
    eval_on_cylinder,
    is_additive,
    is_almost_additive,
    variation,
)

FULL2 = ShiftSpace.full(2)
COIN = LocallyConstantBirkhoff.digit_sum(2)
PAIR11 = LocallyConstantBirkhoff.word_indicator([1, 1], 2)


def test_digit_sum_on_cylinder():
    w = FULL2.word([1, 0, 1, 1])
    assert eval_on_cylinder(COIN, w, 4) == (3.0, 3.0)


def test_pair_indicator_on_cylinder():
    w = FULL2.word([1, 1, 0, 1])
    # windows 11, 10, 01 contribute 1 + 0 + 0
    assert eval_on_cylinder(PAIR11, w, 3) == (1.0, 1.0)


def test_undetermined_window_gives_exact_range():
    w = FULL2.word([1, 1, 0])
    val = eval_on_cylinder(PAIR11, w, 3)  # last window 0? ranges over completions
    assert val.lower == 1.0 and val.upper == 1.0
    w2 = FULL2.word([1, 1, 1])
    val2 = eval_on_cylinder(PAIR11, w2, 3)  # last window 1? gives 2 vs 3
    assert (val2.lower, val2.upper) == (2.0, 3.0)


def test_horizon_longer_than_word_is_rejected():
    with pytest.raises(ValueError):
        eval_on_cylinder(COIN, FULL2.word([1, 0]), 3)


def test_interval_refinement_is_monotone():
    base = [1, 1]
    lo0, hi0 = eval_on_cylinder(PAIR11, FULL2.word(base), 2)
    for s in (0, 1):
        lo1, hi1 = eval_on_cylinder(PAIR11, FULL2.word(base + [s]), 2)
        assert lo0 <= lo1 <= hi1 <= hi0


def test_constant_cocycle_square_value():
    spec = MatrixCocycle(2, 1, np.array([[[2.0, 1.0], [1.0, 1.0]]] * 2), norm="sum")
    val = eval_on_cylinder(spec, FULL2.word([0, 1]), 2)
    # M @ M = [[5, 3], [3, 2]], entry sum 13
    assert val.lower == pytest.approx(math.log(13.0), rel=1e-14)
    assert val.lower == val.upper


def test_cocycle_positivity_flags():
    pos = MatrixCocycle(2, 1, np.array([[[2.0, 1.0], [1.0, 1.0]],
                                        [[1.0, 1.0], [1.0, 2.0]]]))
    assert pos.is_positive and is_almost_additive(pos)
    mixed = MatrixCocycle(2, 1, np.array([[[1.0, 1.0], [1.0, 0.0]],
                                          [[1.0, 1.0], [1.0, 2.0]]]))
    assert not mixed.is_positive and not is_almost_additive(mixed)
    with pytest.raises(ValueError):
        MatrixCocycle(2, 1, np.array([[[0.0, 0.0], [1.0, 1.0]],
                                      [[1.0, 1.0], [1.0, 1.0]]]))  # zero row


def test_markov_local_entropy_matches_cylinder_mass():
    measure = ReferenceMeasure.bernoulli([0.3, 0.7])
    spec = MarkovLocalEntropy(measure)
    w = FULL2.word([1, 0, 1])
    val = eval_on_cylinder(spec, w, 3)
    assert val.lower == pytest.approx(-math.log(0.7 * 0.3 * 0.7), rel=1e-13)


def test_local_entropy_defects():
    # product measure: the log-mass splits exactly, defect 0
    bern = MarkovLocalEntropy(ReferenceMeasure.bernoulli([0.3, 0.7]))
    assert almost_additivity_defect(bern, 3, 4, FULL2) == pytest.approx(0.0, abs=1e-12)
    # markov measure: the defect is the worst one-step boundary term
    kernel = np.array([[0.6, 0.4], [0.3, 0.7]])
    markov = MarkovLocalEntropy(ReferenceMeasure.markov(kernel))
    pi = ReferenceMeasure.markov(kernel).stationary
    expected = max(abs(math.log(pi[b]) - math.log(kernel[a, b]))
                   for a in range(2) for b in range(2))
    got = almost_additivity_defect(markov, 3, 3, FULL2)
    assert got == pytest.approx(expected, rel=1e-12)
    assert is_almost_additive(markov)


def test_birkhoff_additivity_exhaustive():
    for n in range(1, 7):
        for m in range(1, 7):
            if 2 ** (n + m) > 1 << 14:
                continue
            assert almost_additivity_defect(COIN, n, m, FULL2) == 0.0
            assert almost_additivity_defect(PAIR11, n, m, FULL2) == 0.0


def test_constant_weights_are_additive():
    spec = WeightedBirkhoff(COIN, ConstantWeights(2.0))
    assert is_additive(spec)
    assert almost_additivity_defect(spec, 2, 5, FULL2) == 0.0


def test_alternating_weights_break_additivity():
    spec = WeightedBirkhoff(COIN, AlternatingWeights(1.5))
    assert not is_additive(spec) and not is_almost_additive(spec)
    assert almost_additivity_defect(spec, 3, 3, FULL2) > 0.0


def test_variation_zero_for_cylinder_determined_specs():
    assert variation(COIN, 6, 0.5, FULL2) == 0.0
    assert variation(WeightedBirkhoff(COIN, AlternatingWeights(1.5)), 8, 0.5, FULL2) == 0.0
    two = MatrixCocycle(2, 1, np.array([[[2.0, 1.0], [1.0, 1.0]],
                                        [[1.0, 1.0], [1.0, 2.0]]]))
    assert variation(two, 4, 0.5, FULL2) == 0.0
    assert variation(PAIR11, 6, 0.5, FULL2) == 0.0


def test_variation_positive_when_ball_does_not_determine():
    # radius 1 ball constrains only the first n coordinates; the window-2
    # potential still looks one symbol past them
    assert variation(PAIR11, 4, 1.0, FULL2) == 1.0


def test_variation_budget_is_enforced():
    with pytest.raises(BudgetExceededError):
        variation(COIN, 30, 0.5, FULL2, budget=1 << 10)


def test_cocycle_defect_bounded_with_saturating_growth():
    spec = MatrixCocycle(2, 1, np.array([[[2.0, 1.0], [1.0, 1.0]],
                                         [[1.0, 1.0], [1.0, 2.0]]]))
    mats = spec.matrices
    bound = math.log(2.0 * mats.max() / mats[mats > 0].min())
    defect = {(n, m): almost_additivity_defect(spec, n, m, FULL2)
              for n in range(1, 5) for m in range(1, 5)}
    assert max(defect.values()) <= bound
    box = [max(d for (n, m), d in defect.items() if n <= s and m <= s)
           for s in range(1, 5)]
    increments = np.diff(box)
    assert (increments >= 0).all()
    assert (np.diff(increments) <= 1e-12).all()


def test_constant_cocycle_defect_decreases():
    spec = MatrixCocycle(2, 1, np.array([[[2.0, 1.0], [1.0, 1.0]]] * 2))
    diag = [almost_additivity_defect(spec, s, s, FULL2) for s in range(1, 5)]
    assert all(b <= a + 1e-12 for a, b in zip(diag, diag[1:]))
    assert diag[0] == pytest.approx(abs(math.log(13.0 / 25.0)), rel=1e-12)


def test_sampled_defect_is_below_exhaustive():
    spec = MatrixCocycle(2, 1, np.array([[[2.0, 1.0], [1.0, 1.0]],
                                         [[1.0, 1.0], [1.0, 2.0]]]))
    full = almost_additivity_defect(spec, 3, 3, FULL2)
    sampled = almost_additivity_defect(spec, 3, 3, FULL2, samples=200, seed=11)
    assert 0.0 < sampled <= full + 1e-12


def test_window3_interval_matches_brute_force_completion():
    import itertools
    rng = np.random.default_rng(5)
    spec = LocallyConstantBirkhoff(2, 3, rng.normal(size=8))
    w = FULL2.word([1, 0, 1, 0])
    got = eval_on_cylinder(spec, w, 4)  # two trailing symbols undetermined
    vals = []
    for c in itertools.product(range(2), repeat=2):
        v = eval_on_cylinder(spec, FULL2.word([1, 0, 1, 0, *c]), 4)
        assert v.lower == v.upper
        vals.append(v.lower)
    assert got.lower == pytest.approx(min(vals), rel=1e-12)
    assert got.upper == pytest.approx(max(vals), rel=1e-12)


def test_window2_cocycle_interval_matches_brute_force():
    rng = np.random.default_rng(11)
    spec = MatrixCocycle(2, 2, rng.uniform(0.5, 2.0, size=(4, 2, 2)))
    got = eval_on_cylinder(spec, FULL2.word([1, 0, 1]), 3)
    vals = []
    for c in range(2):
        v = eval_on_cylinder(spec, FULL2.word([1, 0, 1, c]), 3)
        assert v.lower == v.upper
        vals.append(v.lower)
    assert got.lower == pytest.approx(min(vals), rel=1e-13)
    assert got.upper == pytest.approx(max(vals), rel=1e-13)


def test_local_entropy_variation_is_zero():
    spec = MarkovLocalEntropy(ReferenceMeasure.bernoulli([0.3, 0.7]))
    assert variation(spec, 6, 1.0, FULL2) == 0.0


def test_ternary_subshift_enumeration_and_measures():
    from mfspec import ShiftSpace, enumerate_words, verify_ahlfors_bowen
    trans = np.array([[1, 1, 1], [1, 1, 1], [1, 1, 0]])  # forbid "22"
    space = ShiftSpace(3, trans)
    assert [space.word_count(n) for n in range(1, 6)] == [3, 8, 22, 60, 164]
    assert sum(1 for _ in enumerate_words(space, 5)) == 164
    report = verify_ahlfors_bowen(ReferenceMeasure.parry(space), space, 10)
    assert report.passed
    assert report.h_estimate == pytest.approx(space.topological_entropy(), abs=1e-10)


def test_cocycle_products_stay_finite_at_long_horizons():
    # products are rescaled every step, so the log value survives horizons
    # where the raw matrix entries would overflow (growth rate ~ 0.96/step)
    spec = MatrixCocycle(2, 1, np.array([[[2.0, 1.0], [1.0, 1.0]]] * 2))
    word = FULL2.word([0] * 800)
    val = eval_on_cylinder(spec, word, 800)
    rho = (3 + math.sqrt(5)) / 2
    assert math.isfinite(val.lower)
    assert abs(val.lower - 800 * math.log(rho)) < 1.0


def test_weight_rules():
    assert np.array_equal(ConstantWeights(2.0).weights(3), [2.0, 2.0, 2.0])
    alt = AlternatingWeights(1.5).weights(4)
    assert alt[0] == 1.0 and alt[1] == pytest.approx(-1 / 2 ** 1.5)
    tab = TableWeights((5.0, 6.0), tail=1.0).weights(4)
    assert np.array_equal(tab, [5.0, 6.0, 1.0, 1.0])


def test_alternating_tail_sums_grow_but_window_sums_stay_bounded():
    """The stress weights keep per-window variation bounded while the
    coordinatewise variation sum diverges (slowly, like N^(1/2) here)."""
    gamma = 1.5
    j = np.arange(1, 4097, dtype=float)
    a = (-1.0) ** (j % 2) / j ** gamma
    # sum_j j*|a_j| diverges: partial sums keep growing without bound
    growth = np.cumsum(j * np.abs(a))
    checkpoints = [growth[(1 << k) - 1] for k in range(6, 11)]
    assert all(b > a_ for a_, b in zip(checkpoints, checkpoints[1:]))
    assert checkpoints[-1] / checkpoints[0] > 1.5
    # sup_n sum_j |a_j + ... + a_{j+n-1}| stays bounded
    worst = 0.0
    for n in list(range(1, 33)) + [512, 1024]:
        windows = np.convolve(a, np.ones(n), mode="valid")
        worst = max(worst, float(np.abs(windows).sum()))
    assert worst < 3.0
