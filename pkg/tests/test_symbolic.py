import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mfspec import (
    BudgetExceededError,
    ReferenceMeasure,
    ShiftSpace,
    bowen_ball_word_length,
    cylinder_measure,
    enumerate_words,
    verify_ahlfors_bowen,
)
from mfspec.symbolic import log_cylinder_masses, symbol_blocks

GOLDEN = ShiftSpace(2, np.array([[1, 1], [1, 0]]))


def test_alphabet_must_be_at_least_two():
    with pytest.raises(ValueError):
        ShiftSpace(1)


def test_transition_must_be_primitive():
    with pytest.raises(ValueError):
        ShiftSpace(2, np.array([[0, 1], [1, 0]]))  # period 2, never positive
    with pytest.raises(ValueError):
        ShiftSpace(2, np.array([[1, 0], [0, 1]]))  # reducible


def test_enumerate_full_shift_counts():
    words = list(enumerate_words(ShiftSpace.full(2), 3))
    assert len(words) == 8
    assert [str(w) for w in words[:3]] == ["000", "001", "010"]
    assert len(list(enumerate_words(ShiftSpace.full(3), 1))) == 3


def test_enumerate_golden_mean_words():
    words = {str(w) for w in enumerate_words(GOLDEN, 3)}
    assert words == {"000", "001", "010", "100", "101"}


def test_golden_mean_counts_follow_fibonacci():
    fib = [1, 1]
    while len(fib) < 24:
        fib.append(fib[-1] + fib[-2])
    for n in range(1, 21):
        assert GOLDEN.word_count(n) == fib[n + 1]


def test_enumeration_is_lexicographic_and_duplicate_free():
    for n in range(1, 15):
        seen = [w.symbols for w in enumerate_words(GOLDEN, n)]
        assert seen == sorted(set(seen))
        assert len(seen) == GOLDEN.word_count(n)


def test_zero_length_enumeration_rejected():
    with pytest.raises(ValueError):
        list(enumerate_words(GOLDEN, 0))
    with pytest.raises(ValueError):
        verify_ahlfors_bowen(ReferenceMeasure.uniform(2), ShiftSpace.full(2), 1)


def test_word_validation():
    with pytest.raises(ValueError):
        GOLDEN.word([1, 1, 0])
    with pytest.raises(ValueError):
        ShiftSpace.full(2).word([])
    with pytest.raises(ValueError):
        ShiftSpace.full(2).word([0, 2])


def test_cylinder_measure_uniform():
    space = ShiftSpace.full(2)
    w = space.word([1, 0, 1])
    assert cylinder_measure(ReferenceMeasure.uniform(2), w) == pytest.approx(1 / 8, abs=0)


def test_cylinder_measure_bernoulli():
    space = ShiftSpace.full(2)
    w = space.word([1, 0, 1])
    m = ReferenceMeasure.bernoulli([0.3, 0.7])
    assert cylinder_measure(m, w) == pytest.approx(0.7 * 0.3 * 0.7, rel=1e-15)


def test_cylinder_measure_markov_hand_product():
    m = ReferenceMeasure.markov([[0.5, 0.5], [1.0, 0.0]], [2 / 3, 1 / 3])
    w = GOLDEN.word([0, 1, 0])
    assert cylinder_measure(m, w) == pytest.approx((2 / 3) * 0.5 * 1.0, rel=1e-14)


def test_cylinder_measure_rejects_unsupported_word():
    m = ReferenceMeasure.markov([[0.5, 0.5], [1.0, 0.0]], [2 / 3, 1 / 3])
    w = ShiftSpace.full(2).word([1, 1])
    with pytest.raises(ValueError):
        cylinder_measure(m, w)


def test_measure_validation():
    with pytest.raises(ValueError):
        ReferenceMeasure.bernoulli([0.3, 0.6])  # does not sum to 1
    with pytest.raises(ValueError):
        ReferenceMeasure("markov", 2, kernel=np.array([[0.5, 0.5], [1.0, 0.0]]),
                         stationary=np.array([0.5, 0.5]))  # not stationary


@pytest.mark.parametrize("measure,space", [
    (ReferenceMeasure.uniform(2), ShiftSpace.full(2)),
    (ReferenceMeasure.bernoulli([0.3, 0.7]), ShiftSpace.full(2)),
    (ReferenceMeasure.parry(GOLDEN), GOLDEN),
    (ReferenceMeasure.markov([[0.5, 0.5], [1.0, 0.0]], [2 / 3, 1 / 3]), GOLDEN),
])
def test_cylinder_masses_sum_to_one_exhaustively(measure, space):
    for n in range(1, 17):
        total = 0.0
        for block in symbol_blocks(space, n):
            total += float(np.exp(log_cylinder_masses(measure, block)).sum())
        assert total == pytest.approx(1.0, abs=1e-10)


def test_bowen_ball_word_length_examples():
    assert bowen_ball_word_length(5, 0.25, 2) == 7
    assert bowen_ball_word_length(3, 1.0, 2) == 3
    assert bowen_ball_word_length(4, 0.1, 3) == 7


def test_bowen_ball_word_length_rejects_bad_radius():
    with pytest.raises(ValueError):
        bowen_ball_word_length(3, 0.0, 2)
    with pytest.raises(ValueError):
        bowen_ball_word_length(3, 1.5, 2)


@settings(max_examples=60, deadline=None)
@given(n=st.integers(1, 30),
       e1=st.floats(1e-6, 1.0), e2=st.floats(1e-6, 1.0),
       l=st.integers(2, 5))
def test_bowen_ball_word_length_monotone(n, e1, e2, l):
    lo, hi = sorted((e1, e2))
    assert bowen_ball_word_length(n, lo, l) >= bowen_ball_word_length(n, hi, l)
    assert bowen_ball_word_length(n, 1.0, l) == n


def test_ahlfors_bowen_uniform_exact():
    report = verify_ahlfors_bowen(ReferenceMeasure.uniform(2), ShiftSpace.full(2), 12)
    assert report.passed
    assert report.max_ratio_deviation == 0.0
    assert all(d == 0.0 for d in report.deviations)
    assert report.h_estimate == pytest.approx(math.log(2), abs=1e-12)


def test_ahlfors_bowen_bernoulli_fails_with_linear_growth():
    report = verify_ahlfors_bowen(ReferenceMeasure.bernoulli([0.3, 0.7]),
                                  ShiftSpace.full(2), 16)
    assert not report.passed
    devs = np.array(report.deviations)
    assert (np.diff(devs) > 0).all()
    # per-step growth is exactly the log-odds ratio of the extreme symbols
    slope = devs[-1] / report.depths[-1]
    assert slope == pytest.approx(math.log(7 / 3), rel=1e-12)


def test_ahlfors_bowen_parry_golden_mean():
    report = verify_ahlfors_bowen(ReferenceMeasure.parry(GOLDEN), GOLDEN, 16)
    assert report.passed
    assert report.h_estimate == pytest.approx(math.log((1 + math.sqrt(5)) / 2), abs=1e-6)


def test_enumeration_budget_is_enforced():
    with pytest.raises(BudgetExceededError):
        verify_ahlfors_bowen(ReferenceMeasure.uniform(2), ShiftSpace.full(2),
                             40, budget=1 << 10)


def test_block_partition_is_consumer_independent():
    space = ShiftSpace.full(2)
    one = np.concatenate([b.reshape(-1) for b in symbol_blocks(space, 12)])
    two = np.concatenate([b.reshape(-1) for b in symbol_blocks(space, 12, 64)])
    assert np.array_equal(one, two)
