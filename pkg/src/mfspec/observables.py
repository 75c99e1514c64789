"""Observable sequences X_n evaluated on cylinders.

An observable here is a whole sequence {X_n} of functions on the shift space,
declared by a finite recipe: Birkhoff sums of a locally constant potential,
weighted Birkhoff sums, log-norms of products of positive matrices, or the
negative log-mass of shrinking cylinders under a Markov measure.

Points are never represented: every evaluation happens on a cylinder [w] and
returns the exact range of X_n over that cylinder. When the defining word is
long enough to pin down every coordinate X_n looks at, the range collapses to
a single number; otherwise the undetermined trailing coordinates (at most
window-1 of them) are brute-forced over all admissible completions.
"""

from dataclasses import dataclass
from typing import NamedTuple, Optional, Union

import numpy as np

from .symbolic import (
    DEFAULT_BUDGET,
    ReferenceMeasure,
    ShiftSpace,
    Word,
    bowen_ball_word_length,
    check_budget,
    log_cylinder_masses,
    symbol_blocks,
)


class CylinderValue(NamedTuple):
    """Exact range of X_n over a cylinder; lower == upper when determined."""

    lower: float
    upper: float


# ---------------------------------------------------------------------------
# weight rules
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ConstantWeights:
    value: float

    def weights(self, n: int) -> np.ndarray:
        return np.full(n, float(self.value))

    def describe(self) -> str:
        return f"constant({self.value})"


@dataclass(frozen=True)
class AlternatingWeights:
    """w_i = (-1)^i / (i+1)^gamma; not summably varying, the standard stress case."""

    gamma: float

    def weights(self, n: int) -> np.ndarray:
        i = np.arange(n, dtype=float)
        return (-1.0) ** (np.arange(n) % 2) / (i + 1.0) ** self.gamma

    def describe(self) -> str:
        return f"alternating(gamma={self.gamma})"


@dataclass(frozen=True)
class TableWeights:
    """Explicit finite weight table with a constant tail value.

    Covers arbitrary user sequences (Cesaro-regular ones in particular) while
    keeping the rule a pure, reproducible function of the index.
    """

    values: tuple[float, ...]
    tail: float = 0.0

    def weights(self, n: int) -> np.ndarray:
        head = np.asarray(self.values[:n], dtype=float)
        if head.size >= n:
            return head
        return np.concatenate([head, np.full(n - head.size, float(self.tail))])

    def describe(self) -> str:
        return f"table(len={len(self.values)}, tail={self.tail})"


WeightRule = Union[ConstantWeights, AlternatingWeights, TableWeights]


# ---------------------------------------------------------------------------
# observable variants
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class LocallyConstantBirkhoff:
    """X_n = sum of phi over the first n shifts, phi depending on a length-k window.

    `table` lists phi on window codes sum_j w_j * l^(k-1-j), most significant
    symbol first.
    """

    alphabet_size: int
    window: int
    table: np.ndarray

    def __post_init__(self):
        if self.window < 1:
            raise ValueError("window length must be >= 1")
        t = np.asarray(self.table, dtype=float).reshape(-1)
        if t.size != self.alphabet_size ** self.window:
            raise ValueError(
                f"table must have l^k = {self.alphabet_size ** self.window} entries"
            )
        if not np.isfinite(t).all():
            raise ValueError("table entries must be finite")
        t.setflags(write=False)
        object.__setattr__(self, "table", t)

    @classmethod
    def digit_sum(cls, alphabet_size: int = 2) -> "LocallyConstantBirkhoff":
        """phi(x) = x_0; for the binary alphabet this counts ones."""
        return cls(alphabet_size, 1, np.arange(alphabet_size, dtype=float))

    @classmethod
    def word_indicator(cls, pattern, alphabet_size: int) -> "LocallyConstantBirkhoff":
        """phi = 1 exactly on the cylinder of `pattern`."""
        pattern = tuple(int(s) for s in pattern)
        k = len(pattern)
        code = 0
        for s in pattern:
            code = code * alphabet_size + s
        table = np.zeros(alphabet_size ** k)
        table[code] = 1.0
        return cls(alphabet_size, k, table)

    @classmethod
    def constant(cls, value: float, alphabet_size: int = 2) -> "LocallyConstantBirkhoff":
        return cls(alphabet_size, 1, np.full(alphabet_size, float(value)))

    def describe(self) -> str:
        return f"birkhoff(window={self.window})"


@dataclass(frozen=True)
class WeightedBirkhoff:
    """X_n = sum_{i<n} w_i * phi(shift^i x) for a fixed weight rule."""

    base: LocallyConstantBirkhoff
    rule: WeightRule

    @property
    def alphabet_size(self) -> int:
        return self.base.alphabet_size

    @property
    def window(self) -> int:
        return self.base.window

    def describe(self) -> str:
        return f"weighted-birkhoff({self.rule.describe()}, window={self.window})"


@dataclass(frozen=True)
class MatrixCocycle:
    """X_n = log ||M(shift^(n-1) x) ... M(x)|| with locally constant M.

    All matrices must be nonnegative with no zero row so the products never
    vanish; only the strictly positive case is flagged eligible for the
    equality part of the formalism, everything else is upper-bound-only.

    The default norm is the entry sum, which keeps small products exactly
    representable longer; the operator 2-norm is available. Norm equivalence
    in fixed dimension shifts every X_n by a bounded amount only, so the
    normalized limits do not depend on the choice.
    """

    alphabet_size: int
    window: int
    matrices: np.ndarray  # (l^k, d, d)
    norm: str = "sum"     # "sum" | "operator"

    def __post_init__(self):
        if self.window < 1:
            raise ValueError("window length must be >= 1")
        m = np.asarray(self.matrices, dtype=float)
        expect = self.alphabet_size ** self.window
        if m.ndim != 3 or m.shape[0] != expect or m.shape[1] != m.shape[2]:
            raise ValueError(f"matrices must have shape ({expect}, d, d)")
        if (m < 0).any():
            raise ValueError("matrix entries must be nonnegative")
        if (m.max(axis=2) <= 0).any():
            raise ValueError("every matrix row needs a positive entry")
        if self.norm not in ("sum", "operator"):
            raise ValueError("norm must be 'sum' or 'operator'")
        m.setflags(write=False)
        object.__setattr__(self, "matrices", m)

    @property
    def is_positive(self) -> bool:
        return bool((self.matrices > 0).all())

    def _norms(self, prods: np.ndarray) -> np.ndarray:
        if self.norm == "sum":
            return prods.sum(axis=(1, 2))
        return np.linalg.norm(prods, ord=2, axis=(1, 2))

    def describe(self) -> str:
        d = self.matrices.shape[1]
        tag = "positive" if self.is_positive else "nonnegative (upper-bound-only)"
        return f"matrix-cocycle(window={self.window}, d={d}, {tag}, norm={self.norm})"


@dataclass(frozen=True)
class MarkovLocalEntropy:
    """X_n(x) = -log mu([x_0 .. x_{n-1}]) for a Bernoulli or Markov mu."""

    measure: ReferenceMeasure

    def __post_init__(self):
        if self.measure.kind not in ("uniform", "bernoulli", "markov"):
            raise ValueError("local entropy observable needs a product or Markov measure")

    @property
    def alphabet_size(self) -> int:
        return self.measure.alphabet_size

    @property
    def window(self) -> int:
        return 1

    def describe(self) -> str:
        return f"local-entropy({self.measure.kind})"


ObservableSpec = Union[LocallyConstantBirkhoff, WeightedBirkhoff, MatrixCocycle,
                       MarkovLocalEntropy]


def is_additive(spec: ObservableSpec) -> bool:
    """True when X_{n+m} = X_n + X_m(shift^n .) holds identically."""
    if isinstance(spec, LocallyConstantBirkhoff):
        return True
    if isinstance(spec, WeightedBirkhoff):
        return isinstance(spec.rule, ConstantWeights)
    return False


def is_almost_additive(spec: ObservableSpec) -> bool:
    """True for the classes with a uniformly bounded additivity defect."""
    if isinstance(spec, (LocallyConstantBirkhoff, MarkovLocalEntropy)):
        return True
    if isinstance(spec, WeightedBirkhoff):
        return isinstance(spec.rule, ConstantWeights)
    if isinstance(spec, MatrixCocycle):
        return spec.is_positive
    return False


# ---------------------------------------------------------------------------
# vectorized evaluation on symbol blocks
# ---------------------------------------------------------------------------

def _window_codes(block: np.ndarray, k: int, count: int, l: int) -> np.ndarray:
    """Codes of the length-k windows starting at 0..count-1, shape (B, count)."""
    codes = np.zeros((block.shape[0], count), dtype=np.int64)
    for j in range(k):
        codes = codes * l + block[:, j:j + count]
    return codes


def _completions(space: Optional[ShiftSpace], l: int, t: int) -> list[tuple[int, ...]]:
    """All internally admissible completion tuples of length t, lexicographic."""
    tuples: list[tuple[int, ...]] = [()]
    trans = space.transition if space is not None else None
    for _ in range(t):
        nxt = []
        for tup in tuples:
            for s in range(l):
                if tup and trans is not None and trans[tup[-1], s] == 0:
                    continue
                nxt.append(tup + (s,))
        tuples = nxt
    return tuples


def eval_block(spec: ObservableSpec, block: np.ndarray, n: int,
               space: Optional[ShiftSpace] = None) -> tuple[np.ndarray, np.ndarray]:
    """Exact (lower, upper) of X_n over each cylinder in a (B, m) symbol block."""
    b, m = block.shape
    if m < n:
        raise ValueError(f"cylinder length {m} is shorter than the horizon {n}")
    l = spec.alphabet_size
    if space is not None and space.alphabet_size != l:
        raise ValueError("observable and space disagree on the alphabet size")

    if isinstance(spec, MarkovLocalEntropy):
        vals = -log_cylinder_masses(spec.measure, block[:, :n])
        return vals, vals.copy()

    if isinstance(spec, (LocallyConstantBirkhoff, WeightedBirkhoff)):
        if isinstance(spec, WeightedBirkhoff):
            base_spec = spec.base
            w = spec.rule.weights(n)
        else:
            base_spec = spec
            w = np.ones(n)
        k = base_spec.window
        det = min(n, m - k + 1)
        vals = np.zeros(b)
        if det > 0:
            if k == 1:
                vals = base_spec.table[block[:, :det]] @ w[:det]
            else:
                codes = _window_codes(block, k, det, l)
                vals = base_spec.table[codes] @ w[:det]
        if det == n:
            return vals, vals.copy()
        # brute-force the t = n+k-1-m missing trailing symbols
        t = n + k - 1 - m
        tail_src = block[:, m - (k - 1):]
        lower = np.full(b, np.inf)
        upper = np.full(b, -np.inf)
        trans = space.transition if space is not None else None
        for comp in _completions(space, l, t):
            ok = np.ones(b, dtype=bool)
            if trans is not None:
                ok = trans[block[:, -1], comp[0]].astype(bool)
            ext = np.concatenate(
                [tail_src, np.tile(np.array(comp, np.uint8), (b, 1))], axis=1)
            tail_codes = _window_codes(ext, k, n - det, l)
            cand = vals + (base_spec.table[tail_codes] * w[det:]).sum(axis=1)
            lower = np.where(ok, np.minimum(lower, cand), lower)
            upper = np.where(ok, np.maximum(upper, cand), upper)
        if not np.isfinite(lower).all():
            raise ValueError("some cylinder has no admissible completion")
        return lower, upper

    if isinstance(spec, MatrixCocycle):
        k = spec.window
        det = min(n, m - k + 1)
        d = spec.matrices.shape[1]
        prod = np.broadcast_to(np.eye(d), (b, d, d)).copy()
        logscale = np.zeros(b)
        if det > 0:
            codes = _window_codes(block, k, det, l)
            for i in range(det):
                prod = np.matmul(spec.matrices[codes[:, i]], prod)
                scale = prod.reshape(b, -1).max(axis=1)
                prod /= scale[:, None, None]
                logscale += np.log(scale)
        if det == n:
            vals = np.log(spec._norms(prod)) + logscale
            return vals, vals.copy()
        t = n + k - 1 - m
        tail_src = block[:, m - (k - 1):]
        lower = np.full(b, np.inf)
        upper = np.full(b, -np.inf)
        trans = space.transition if space is not None else None
        for comp in _completions(space, l, t):
            ok = np.ones(b, dtype=bool)
            if trans is not None:
                ok = trans[block[:, -1], comp[0]].astype(bool)
            ext = np.concatenate(
                [tail_src, np.tile(np.array(comp, np.uint8), (b, 1))], axis=1)
            tail_codes = _window_codes(ext, k, n - det, l)
            p = prod.copy()
            ls = logscale.copy()
            for i in range(n - det):
                p = np.matmul(spec.matrices[tail_codes[:, i]], p)
                scale = p.reshape(b, -1).max(axis=1)
                p /= scale[:, None, None]
                ls += np.log(scale)
            cand = np.log(spec._norms(p)) + ls
            lower = np.where(ok, np.minimum(lower, cand), lower)
            upper = np.where(ok, np.maximum(upper, cand), upper)
        if not np.isfinite(lower).all():
            raise ValueError("some cylinder has no admissible completion")
        return lower, upper

    raise TypeError(f"unsupported observable {type(spec).__name__}")


def eval_on_cylinder(spec: ObservableSpec, word: Word, n: int) -> CylinderValue:
    """Range of X_n over the cylinder [word]; exact point when determined.

    Requires len(word) >= n. The value is a single point exactly when the
    word covers every coordinate the first n windows look at, i.e. when
    len(word) >= n + window - 1.
    """
    if len(word) < n:
        raise ValueError(f"need a word of length >= {n}, got {len(word)}")
    block = np.array([word.symbols], dtype=np.uint8)
    lo, hi = eval_block(spec, block, n, word.space)
    return CylinderValue(float(lo[0]), float(hi[0]))


# ---------------------------------------------------------------------------
# regularity diagnostics
# ---------------------------------------------------------------------------

def variation(spec: ObservableSpec, n: int, epsilon: float,
              space: Optional[ShiftSpace] = None,
              budget: int = DEFAULT_BUDGET) -> float:
    """Largest |X_n(y) - X_n(z)| over pairs y, z in a common n-step ball.

    The ball of radius epsilon is the cylinder of length
    bowen_ball_word_length(n, epsilon); on each such cylinder the spread is
    the exact completion range, so the result is an exhaustive supremum, not
    a sample. Exceeding the enumeration budget raises instead of degrading.
    """
    if space is None:
        space = ShiftSpace.full(spec.alphabet_size)
    m = bowen_ball_word_length(n, epsilon, space.alphabet_size)
    check_budget(space, m, budget)
    worst = 0.0
    for block in symbol_blocks(space, m):
        lo, hi = eval_block(spec, block, n, space)
        worst = max(worst, float((hi - lo).max()))
    return worst


def almost_additivity_defect(spec: ObservableSpec, n: int, m: int,
                             space: Optional[ShiftSpace] = None,
                             samples: Optional[int] = None,
                             seed: int = 0,
                             budget: int = DEFAULT_BUDGET) -> float:
    """Max observed |X_{n+m} - X_n - X_m(shift^n .)|.

    Exhaustive over all admissible words long enough to determine every term
    (the default), or over `samples` random words when given. Additive
    observables return exactly 0.
    """
    if n < 1 or m < 1:
        raise ValueError("n and m must be >= 1")
    if space is None:
        space = ShiftSpace.full(spec.alphabet_size)
    k = spec.window
    length = n + m + k - 1
    worst = 0.0
    if samples is None:
        check_budget(space, length, budget)
        blocks = symbol_blocks(space, length)
    else:
        blocks = [_sample_words(space, length, samples, seed)]
    for block in blocks:
        total, _ = eval_block(spec, block, n + m, space)
        head, _ = eval_block(spec, block[:, :n + k - 1], n, space)
        tail, _ = eval_block(spec, block[:, n:], m, space)
        worst = max(worst, float(np.abs(total - head - tail).max()))
    return worst


def _sample_words(space: ShiftSpace, length: int, count: int, seed: int) -> np.ndarray:
    rng = np.random.Generator(np.random.Philox(key=seed))
    l = space.alphabet_size
    if space.is_full:
        return rng.integers(0, l, size=(count, length), dtype=np.int64).astype(np.uint8)
    measure = ReferenceMeasure.parry(space)
    init, kernel = measure.marginal_chain()
    out = np.empty((count, length), dtype=np.uint8)
    cum0 = np.cumsum(init)
    cum0[-1] = 1.0
    out[:, 0] = np.searchsorted(cum0, rng.random(count), side="right")
    cums = np.cumsum(kernel, axis=1)
    cums[:, -1] = 1.0
    for i in range(1, length):
        u = rng.random(count)
        rows = cums[out[:, i - 1]]
        out[:, i] = (u[:, None] >= rows).sum(axis=1)
    return out
