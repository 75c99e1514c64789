"""Full shifts, subshifts of finite type, cylinders, and reference measures.

The phase space is the set of one-sided infinite sequences over an alphabet
{0, ..., l-1}, with the left shift acting on it. Everything downstream works
on cylinders (sets of sequences with a prescribed prefix), so this module
owns the dictionary between metric balls and cylinders and the exhaustive,
lexicographically ordered enumeration of admissible words.

The metric is fixed as d(x, y) = l^(-k) with k the first disagreeing
coordinate; with that choice every dynamical ball of the shift is exactly a
cylinder, and `bowen_ball_word_length` computes its word length.
"""

import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterator, Optional

import numpy as np

from .errors import BudgetExceededError

# Words evaluated per enumeration block; fixed so that block boundaries (and
# therefore all merged floating-point reductions) do not depend on the worker
# count.
BLOCK_WORDS = 1 << 18

# Global cap on exhaustive word evaluations for a single operation.
DEFAULT_BUDGET = 1 << 26


def _int_matrix_power_sum(a: list[list[int]], n: int) -> int:
    """Sum of entries of a^n for a small nonnegative integer matrix, exact."""
    size = len(a)
    acc = [[1 if i == j else 0 for j in range(size)] for i in range(size)]
    base = [row[:] for row in a]
    k = n
    while k:
        if k & 1:
            acc = [[sum(acc[i][t] * base[t][j] for t in range(size))
                    for j in range(size)] for i in range(size)]
        base = [[sum(base[i][t] * base[t][j] for t in range(size))
                 for j in range(size)] for i in range(size)]
        k >>= 1
    return sum(sum(row) for row in acc)


@dataclass(frozen=True)
class ShiftSpace:
    """A full shift or a primitive subshift of finite type.

    `transition` is an l x l 0/1 matrix; entry (a, b) = 1 means the word "ab"
    is allowed. Absent transition means the full shift. Primitivity (some
    power of the matrix strictly positive) is required and checked at
    construction, using the Wielandt exponent l^2 - 2l + 2 as the power to
    test.
    """

    alphabet_size: int
    transition: Optional[np.ndarray] = None

    def __post_init__(self):
        l = self.alphabet_size
        if not isinstance(l, int) or l < 2:
            raise ValueError(f"alphabet_size must be an integer >= 2, got {l!r}")
        if self.transition is not None:
            t = np.asarray(self.transition, dtype=np.int64)
            if t.shape != (l, l):
                raise ValueError(f"transition matrix must be {l}x{l}, got {t.shape}")
            if not np.isin(t, (0, 1)).all():
                raise ValueError("transition matrix entries must be 0 or 1")
            power = l * l - 2 * l + 2
            reach = t.copy()
            for _ in range(power - 1):
                reach = ((reach @ t) > 0).astype(np.int64)
            if not (reach > 0).all():
                raise ValueError(
                    "transition matrix is not primitive (no power is strictly positive)"
                )
            t.setflags(write=False)
            object.__setattr__(self, "transition", t)

    @classmethod
    def full(cls, alphabet_size: int) -> "ShiftSpace":
        return cls(alphabet_size)

    @property
    def is_full(self) -> bool:
        return self.transition is None

    def word_count(self, n: int) -> int:
        """Number of admissible words of length n (exact integer)."""
        if n < 1:
            raise ValueError("word length must be >= 1")
        if self.transition is None:
            return self.alphabet_size ** n
        if n == 1:
            return self.alphabet_size
        rows = [[int(x) for x in row] for row in self.transition]
        return _int_matrix_power_sum(rows, n - 1)

    def topological_entropy(self) -> float:
        """log(spectral growth rate of the word count)."""
        if self.transition is None:
            return math.log(self.alphabet_size)
        lam, _ = perron_eigen(self.transition.astype(float))
        return math.log(lam)

    def is_admissible(self, symbols) -> bool:
        syms = list(symbols)
        if not syms:
            return False
        if any(not (0 <= s < self.alphabet_size) for s in syms):
            return False
        if self.transition is not None:
            for a, b in zip(syms, syms[1:]):
                if self.transition[a, b] == 0:
                    return False
        return True

    def word(self, symbols) -> "Word":
        return Word(tuple(int(s) for s in symbols), self)


@dataclass(frozen=True)
class Word:
    """A finite admissible word; the cylinder of all sequences extending it."""

    symbols: tuple[int, ...]
    space: ShiftSpace = field(compare=False)

    def __post_init__(self):
        if len(self.symbols) < 1:
            raise ValueError("words must have length >= 1")
        if not self.space.is_admissible(self.symbols):
            raise ValueError(f"word {self.symbols} is not admissible in this space")

    def __len__(self) -> int:
        return len(self.symbols)

    def __str__(self) -> str:
        return "".join(str(s) for s in self.symbols)


def perron_eigen(matrix: np.ndarray, tol: float = 1e-14, max_iter: int = 100000):
    """Principal eigenvalue and positive right eigenvector by power iteration.

    Deterministic all-ones start. The iteration normalizes by the vector sum,
    so for a primitive nonnegative matrix the Rayleigh quotient converges to
    the spectral radius; an oscillation guard averages two consecutive
    quotients, which matters only for periodic (non-primitive) inputs that
    construction elsewhere already rejects.
    """
    m = np.asarray(matrix, dtype=float)
    v = np.ones(m.shape[0])
    lam_prev = None
    for _ in range(max_iter):
        w = m @ v
        s = w.sum()
        if s <= 0:
            raise ValueError("matrix is not irreducible enough for power iteration")
        lam = s / v.sum()
        w = w / s
        if lam_prev is not None:
            if abs(lam - lam_prev) <= tol * max(1.0, abs(lam)):
                return lam, w * (1.0 / w.max())
            # oscillation guard: two-cycle in the quotient
            if lam_prev != lam and abs(lam - lam_prev) > 0.5 * abs(lam):
                lam = 0.5 * (lam + lam_prev)
        lam_prev = lam
        v = w
    raise RuntimeError("power iteration did not converge")


@dataclass(frozen=True)
class ReferenceMeasure:
    """Uniform, Bernoulli, or Markov reference measure on a shift space.

    Probability vectors must be nonnegative and sum to 1 within 1e-12; a
    Markov stationary vector must satisfy pi P = pi within 1e-10.
    """

    kind: str  # "uniform" | "bernoulli" | "markov"
    alphabet_size: int
    probs: Optional[np.ndarray] = None          # bernoulli marginals
    kernel: Optional[np.ndarray] = None         # markov row-stochastic matrix
    stationary: Optional[np.ndarray] = None     # markov initial/stationary vector

    def __post_init__(self):
        l = self.alphabet_size
        if l < 2:
            raise ValueError("alphabet_size must be >= 2")
        if self.kind == "uniform":
            pass
        elif self.kind == "bernoulli":
            p = np.asarray(self.probs, dtype=float)
            _check_prob_vector(p, l, "bernoulli probabilities")
            p.setflags(write=False)
            object.__setattr__(self, "probs", p)
        elif self.kind == "markov":
            kernel = np.asarray(self.kernel, dtype=float)
            if kernel.shape != (l, l):
                raise ValueError(f"markov kernel must be {l}x{l}")
            if (kernel < 0).any():
                raise ValueError("markov kernel entries must be nonnegative")
            if np.abs(kernel.sum(axis=1) - 1.0).max() > 1e-12:
                raise ValueError("markov kernel rows must sum to 1 within 1e-12")
            pi = np.asarray(self.stationary, dtype=float)
            _check_prob_vector(pi, l, "stationary vector")
            if np.abs(pi @ kernel - pi).max() > 1e-10:
                raise ValueError("stationary vector must satisfy pi P = pi within 1e-10")
            kernel.setflags(write=False)
            pi.setflags(write=False)
            object.__setattr__(self, "kernel", kernel)
            object.__setattr__(self, "stationary", pi)
        else:
            raise ValueError(f"unknown measure kind {self.kind!r}")

    @classmethod
    def uniform(cls, alphabet_size: int) -> "ReferenceMeasure":
        return cls("uniform", alphabet_size)

    @classmethod
    def bernoulli(cls, probs) -> "ReferenceMeasure":
        p = np.asarray(probs, dtype=float)
        return cls("bernoulli", len(p), probs=p)

    @classmethod
    def markov(cls, kernel, stationary=None) -> "ReferenceMeasure":
        k = np.asarray(kernel, dtype=float)
        if stationary is None:
            stationary = stationary_distribution(k)
        return cls("markov", k.shape[0], kernel=k, stationary=np.asarray(stationary, float))

    @classmethod
    def parry(cls, space: ShiftSpace) -> "ReferenceMeasure":
        """Measure of maximal entropy of a subshift of finite type.

        For a primitive 0/1 transition matrix A with spectral radius lam and
        positive right/left eigenvectors v, u: kernel P[a, b] = A[a, b] v[b] /
        (lam v[a]) and stationary pi[a] = u[a] v[a] / (u . v).
        """
        if space.transition is None:
            return cls.uniform(space.alphabet_size)
        a = space.transition.astype(float)
        lam, v = perron_eigen(a)
        _, u = perron_eigen(a.T)
        kernel = a * v[None, :] / (lam * v[:, None])
        kernel = kernel / kernel.sum(axis=1, keepdims=True)
        pi = u * v
        pi = pi / pi.sum()
        return cls("markov", space.alphabet_size, kernel=kernel, stationary=pi)

    def marginal_chain(self) -> tuple[np.ndarray, np.ndarray]:
        """(initial vector, row-stochastic kernel) view of the measure."""
        l = self.alphabet_size
        if self.kind == "uniform":
            p = np.full(l, 1.0 / l)
            return p, np.tile(p, (l, 1))
        if self.kind == "bernoulli":
            return self.probs.copy(), np.tile(self.probs, (l, 1))
        return self.stationary.copy(), self.kernel.copy()


def _check_prob_vector(p: np.ndarray, l: int, what: str) -> None:
    if p.shape != (l,):
        raise ValueError(f"{what} must have length {l}")
    if (p < 0).any():
        raise ValueError(f"{what} must be nonnegative")
    if abs(math.fsum(p.tolist()) - 1.0) > 1e-12:
        raise ValueError(f"{what} must sum to 1 within 1e-12")


def stationary_distribution(kernel: np.ndarray) -> np.ndarray:
    """Stationary vector of a row-stochastic matrix (direct linear solve)."""
    k = np.asarray(kernel, dtype=float)
    n = k.shape[0]
    a = k.T - np.eye(n)
    a[-1, :] = 1.0
    b = np.zeros(n)
    b[-1] = 1.0
    pi = np.linalg.solve(a, b)
    if (pi < -1e-10).any():
        raise ValueError("kernel has no nonnegative stationary vector")
    pi = np.clip(pi, 0.0, None)
    return pi / pi.sum()


# ---------------------------------------------------------------------------
# word enumeration
# ---------------------------------------------------------------------------

def _decode_codes(codes: np.ndarray, length: int, l: int) -> np.ndarray:
    if l == 2:
        shifts = np.arange(length - 1, -1, -1, dtype=np.int64)
        return ((codes[:, None] >> shifts) & 1).astype(np.uint8)
    out = np.empty((codes.size, length), dtype=np.uint8)
    c = codes.copy()
    for pos in range(length - 1, -1, -1):
        out[:, pos] = c % l
        c //= l
    return out


def _extend_words(space: ShiftSpace, words: np.ndarray, target_len: int) -> np.ndarray:
    """Extend admissible words column by column, preserving lexicographic order."""
    l = space.alphabet_size
    a = space.transition
    while words.shape[1] < target_len:
        b = words.shape[0]
        rep = np.repeat(words, l, axis=0)
        syms = np.tile(np.arange(l, dtype=np.uint8), b)
        if a is not None:
            keep = a[rep[:, -1], syms].astype(bool)
            rep = rep[keep]
            syms = syms[keep]
        words = np.concatenate([rep, syms[:, None]], axis=1)
    return words


def symbol_blocks(space: ShiftSpace, length: int,
                  block_words: int = BLOCK_WORDS) -> Iterator[np.ndarray]:
    """Yield all admissible words of `length` as uint8 arrays of shape (B, length).

    Blocks partition the lexicographically ordered word list by a fixed-length
    prefix; the partition depends only on (space, length, block_words), never
    on the consumer, so parallel reductions over blocks merge deterministically.
    """
    if length < 1:
        raise ValueError("word length must be >= 1")
    l = space.alphabet_size
    if space.is_full:
        total = l ** length
        suffix_len = 0
        while suffix_len < length and l ** (suffix_len + 1) <= block_words:
            suffix_len += 1
        suffix_count = l ** suffix_len
        for start in range(0, total, suffix_count):
            codes = np.arange(start, min(start + suffix_count, total), dtype=np.int64)
            yield _decode_codes(codes, length, l)
        return
    # subshift: enumerate admissible prefixes, then complete each prefix
    prefix_len = length
    while prefix_len > 1 and l ** (length - prefix_len + 1) <= block_words:
        prefix_len -= 1
    prefixes = _extend_words(space, np.arange(l, dtype=np.uint8)[:, None], prefix_len)
    if prefix_len == length:
        for start in range(0, prefixes.shape[0], block_words):
            yield prefixes[start:start + block_words]
        return
    for i in range(prefixes.shape[0]):
        yield _extend_words(space, prefixes[i:i + 1], length)


def enumerate_words(space: ShiftSpace, n: int) -> Iterator[Word]:
    """All admissible words of length n, lexicographic, each exactly once."""
    for block in symbol_blocks(space, n):
        for row in block:
            yield Word(tuple(int(s) for s in row), space)


def check_budget(space: ShiftSpace, length: int, budget: int) -> int:
    """Word count for a planned exhaustive pass, or raise if over budget."""
    count = space.word_count(length)
    if count > budget:
        raise BudgetExceededError(
            f"enumerating {count} words of length {length} exceeds budget {budget}"
        )
    return count


# ---------------------------------------------------------------------------
# cylinder measures
# ---------------------------------------------------------------------------

def cylinder_measure(measure: ReferenceMeasure, word: Word) -> float:
    """Mass of the cylinder [word] under the reference measure."""
    syms = word.symbols
    l = measure.alphabet_size
    if any(not (0 <= s < l) for s in syms):
        raise ValueError("word symbols out of range for this measure")
    if measure.kind == "uniform":
        return float(l) ** (-len(syms))
    if measure.kind == "bernoulli":
        out = 1.0
        for s in syms:
            out *= measure.probs[s]
        return float(out)
    out = measure.stationary[syms[0]]
    for a, b in zip(syms, syms[1:]):
        step = measure.kernel[a, b]
        if step == 0.0:
            raise ValueError(f"word {word} leaves the support of the Markov measure")
        out *= step
    return float(out)


def log_cylinder_masses(measure: ReferenceMeasure, block: np.ndarray) -> np.ndarray:
    """log-mass of each cylinder in a (B, m) symbol block (vectorized)."""
    b, m = block.shape
    if measure.kind == "uniform":
        return np.full(b, -m * math.log(measure.alphabet_size))
    if measure.kind == "bernoulli":
        logs = np.log(measure.probs)
        return logs[block].sum(axis=1)
    with np.errstate(divide="ignore"):
        logk = np.log(measure.kernel)
        logpi = np.log(measure.stationary)
    out = logpi[block[:, 0]]
    for i in range(m - 1):
        out = out + logk[block[:, i], block[:, i + 1]]
    if np.isneginf(out).any():
        raise ValueError("block contains words outside the support of the Markov measure")
    return out


# ---------------------------------------------------------------------------
# metric dictionary and measure diagnostics
# ---------------------------------------------------------------------------

def bowen_ball_word_length(n: int, epsilon: float, alphabet_size: int) -> int:
    """Word length m such that the n-step ball of radius epsilon is the
    length-m cylinder around its center: m = n + ceil(log_l(1/epsilon)).

    The ceiling is computed by exact integer comparison so that radii equal to
    powers of 1/l land on the exact exponent.
    """
    if not (0.0 < epsilon <= 1.0):
        raise ValueError("epsilon must satisfy 0 < epsilon <= 1")
    if n < 1:
        raise ValueError("n must be >= 1")
    target = 1 / Fraction(epsilon)  # exact rational of the float
    acc = Fraction(1)
    k = 0
    while acc < target:
        acc *= alphabet_size
        k += 1
    return n + k


@dataclass(frozen=True)
class AhlforsBowenReport:
    """Outcome of the uniform-mass diagnostic for a reference measure.

    `deviations[i]` is the spread, over all cylinders of the i-th checked
    depth, of -log(cylinder mass). A measure with uniformly comparable ball
    masses keeps this spread bounded in n; the check passes when the spread
    envelope stops growing, and `h_estimate` is the common exponential decay
    rate of the masses.
    """

    h_estimate: float
    max_ratio_deviation: float
    passed: bool
    depths: tuple[int, ...]
    deviations: tuple[float, ...]
    midpoints: tuple[float, ...]
    epsilon: float


def verify_ahlfors_bowen(measure: ReferenceMeasure, space: ShiftSpace, n_max: int,
                         epsilon: float = 1.0,
                         budget: int = DEFAULT_BUDGET) -> AhlforsBowenReport:
    """Exhaustively test whether -log(mass of n-ball) = n*h + O(1).

    Failure is reported, never raised: the report carries the per-depth
    spreads so callers can see how the deviation grows.
    """
    if n_max < 2:
        raise ValueError("n_max must be >= 2")
    depths = list(range(2, n_max + 1))
    deviations = []
    midpoints = []
    for n in depths:
        m = bowen_ball_word_length(n, epsilon, space.alphabet_size)
        check_budget(space, m, budget)
        lo = math.inf
        hi = -math.inf
        for block in symbol_blocks(space, m):
            neg = -log_cylinder_masses(measure, block)
            lo = min(lo, float(neg.min()))
            hi = max(hi, float(neg.max()))
        deviations.append(hi - lo)
        midpoints.append(0.5 * (hi + lo))
    # spread envelope must not grow between the first and second half
    half = max(1, len(depths) // 2)
    first = max(deviations[:half])
    second = max(deviations[half:])
    passed = second <= first + 1e-9 * max(1.0, first)
    # decay rate from the slope of the midpoints over the deeper half
    ns = np.array(depths[half - 1:], dtype=float)
    mids = np.array(midpoints[half - 1:], dtype=float)
    nbar = ns.mean()
    h_est = float(((ns - nbar) * (mids - mids.mean())).sum() / ((ns - nbar) ** 2).sum())
    return AhlforsBowenReport(
        h_estimate=h_est,
        max_ratio_deviation=max(deviations),
        passed=passed,
        depths=tuple(depths),
        deviations=tuple(deviations),
        midpoints=tuple(midpoints),
        epsilon=epsilon,
    )
