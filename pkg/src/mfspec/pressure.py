"""Finite-depth pressure and log-moment generating functions.

The depth-n pressure of an observable at inverse temperature q is

    P_n(q) = (1/n) * log( sum over admissible words w of length n of
                          exp(q * sup of X_n over the cylinder [w]) )

and the normalized log-moment generating function replaces the plain count
by reference-measure masses,

    phi_n(q) = (1/n) * log( sum_w nu([w]) * exp(q * X_n([w])) ),

normalized so that phi_n(0) = 0 exactly. Both use the upper endpoint of the
cylinder evaluation by default, matching the supremum convention; a lower
endpoint run brackets the limit from below.

All exponential sums run as streaming log-sum-exp over a value table that is
collapsed by exact value equality, accumulated block by block in a fixed
lexicographic block order, so serial and parallel runs agree bit for bit.
"""

import math
from dataclasses import dataclass
from typing import Callable, Mapping, Optional, Sequence, Union

import numpy as np

from ._parallel import batched, ordered_map
from .convex import UniformGrid
from .observables import (
    LocallyConstantBirkhoff,
    MatrixCocycle,
    ObservableSpec,
    eval_block,
)
from .symbolic import (
    DEFAULT_BUDGET,
    ReferenceMeasure,
    ShiftSpace,
    check_budget,
    log_cylinder_masses,
    perron_eigen,
    symbol_blocks,
)

DEFAULT_DEPTHS = (4, 8, 16)
DEFAULT_Q_GRID = UniformGrid(-20.0, 20.0, 0.05)


# ---------------------------------------------------------------------------
# collapsed value tables
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ValueTable:
    """Distinct cylinder values of X_n with multiplicities and optional masses."""

    values: np.ndarray            # sorted distinct values (chosen endpoint)
    counts: np.ndarray            # int64 word counts per value
    masses: Optional[np.ndarray]  # reference-measure mass per value, or None
    horizon: int

    def log_exp_sum(self, q: float, weights: np.ndarray) -> float:
        """log sum_v weights_v * exp(q * v), max-shifted, compensated."""
        x = q * self.values + np.log(weights)
        m = float(x.max())
        shifted = np.exp(x - m)
        if shifted.size <= 4096:
            s = math.fsum(shifted.tolist())
        else:
            s = float(np.sum(shifted))
        return m + math.log(s)


def _collapse(values: np.ndarray, masses: Optional[np.ndarray]):
    uvals, inverse = np.unique(values, return_inverse=True)
    counts = np.bincount(inverse, minlength=uvals.size).astype(np.int64)
    umass = None
    if masses is not None:
        umass = np.bincount(inverse, weights=masses, minlength=uvals.size)
    return uvals, counts, umass


def value_table(spec: ObservableSpec, space: ShiftSpace, n: int,
                measure: Optional[ReferenceMeasure] = None,
                endpoint: str = "upper",
                budget: int = DEFAULT_BUDGET,
                shards: int = 1) -> ValueTable:
    """Exhaustive table of X_n over all admissible length-n cylinders."""
    if endpoint not in ("upper", "lower"):
        raise ValueError("endpoint must be 'upper' or 'lower'")
    # cost model counts the completion factor for window > 1
    check_budget(space, n + spec.window - 1, budget)
    check_budget(space, n, budget)

    def one(block: np.ndarray):
        lo, hi = eval_block(spec, block, n, space)
        vals = hi if endpoint == "upper" else lo
        mass = None
        if measure is not None:
            mass = np.exp(log_cylinder_masses(measure, block))
        return _collapse(vals, mass)

    parts_v, parts_c, parts_m = [], [], []
    for batch in batched(symbol_blocks(space, n), max(1, shards)):
        for uvals, counts, umass in ordered_map(one, batch, shards):
            parts_v.append(uvals)
            parts_c.append(counts)
            parts_m.append(umass)
    allv = np.concatenate(parts_v)
    allc = np.concatenate(parts_c)
    uvals, inverse = np.unique(allv, return_inverse=True)
    counts = np.bincount(inverse, weights=allc.astype(float),
                         minlength=uvals.size).astype(np.int64)
    masses = None
    if measure is not None:
        masses = np.bincount(inverse, weights=np.concatenate(parts_m),
                             minlength=uvals.size)
    return ValueTable(values=uvals, counts=counts, masses=masses, horizon=n)


# ---------------------------------------------------------------------------
# point evaluations
# ---------------------------------------------------------------------------

def pressure_at(spec: ObservableSpec, space: ShiftSpace, q: float, n: int,
                endpoint: str = "upper", budget: int = DEFAULT_BUDGET,
                shards: int = 1) -> float:
    """Depth-n pressure P_n(q); exact for cylinder-determined observables."""
    table = value_table(spec, space, n, endpoint=endpoint, budget=budget, shards=shards)
    return table.log_exp_sum(q, table.counts.astype(float)) / n


def log_mgf_at(spec: ObservableSpec, space: ShiftSpace, measure: ReferenceMeasure,
               q: float, n: int, endpoint: str = "upper",
               budget: int = DEFAULT_BUDGET, shards: int = 1) -> float:
    """Depth-n normalized log-moment generating function phi_n(q).

    phi_n(0) = 0 exactly, and for the uniform measure on the full shift
    phi_n(q) = P_n(q) - log(l) up to rounding.
    """
    table = value_table(spec, space, n, measure=measure, endpoint=endpoint,
                        budget=budget, shards=shards)
    return (table.log_exp_sum(q, table.masses) - table.log_exp_sum(0.0, table.masses)) / n


def cocycle_pressure_at(spec: MatrixCocycle, space: ShiftSpace, t: float, n: int,
                        endpoint: str = "upper", budget: int = DEFAULT_BUDGET,
                        shards: int = 1) -> float:
    """Depth-n pressure of log ||M_n||^t for a matrix cocycle."""
    if not isinstance(spec, MatrixCocycle):
        raise TypeError("cocycle_pressure_at expects a MatrixCocycle observable")
    return pressure_at(spec, space, t, n, endpoint=endpoint, budget=budget, shards=shards)


def transfer_pressure(spec: LocallyConstantBirkhoff, space: ShiftSpace, q: float) -> float:
    """Exact limit pressure of q*phi for a window <= 2 potential.

    For window 2 the limit is the log spectral radius of the l x l matrix
    L[a, b] = adm(a, b) * exp(q * phi(a, b)), computed by power iteration
    with an all-ones start to relative tolerance 1e-12. Window 1 on the full
    shift reduces to log sum_a exp(q * phi(a)).
    """
    if not isinstance(spec, LocallyConstantBirkhoff):
        raise TypeError("transfer_pressure expects a LocallyConstantBirkhoff potential")
    if spec.window > 2:
        raise ValueError("transfer oracle only covers window <= 2; "
                         "use pressure_at with extrapolate_limit instead")
    l = space.alphabet_size
    if spec.window == 1 and space.is_full:
        x = q * spec.table
        m = float(x.max())
        return m + math.log(math.fsum(np.exp(x - m).tolist()))
    adm = np.ones((l, l)) if space.is_full else space.transition.astype(float)
    if spec.window == 1:
        weights = np.exp(q * spec.table)[:, None] * np.ones((1, l))
    else:
        weights = np.exp(q * spec.table.reshape(l, l))
    lam, _ = perron_eigen(adm * weights, tol=1e-12)
    return math.log(lam)


# ---------------------------------------------------------------------------
# limit extrapolation
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ExtrapolationResult:
    estimate: float
    error_bound: float
    converged: bool


def extrapolate_limit(values: Mapping[int, float], mode: str = "cauchy",
                      tol: float = 1e-3, defect_constant: float = 0.0,
                      defect_rule: Union[None, Mapping[int, float],
                                         Callable[[int], float]] = None
                      ) -> ExtrapolationResult:
    """Estimate lim P_n from finitely many depths.

    cauchy mode assumes a first-order 1/n correction and eliminates it from
    the two deepest values; the error bound combines the size of the applied
    correction with the disagreement against the same estimate built one
    depth earlier. The bound is a heuristic, NOT a proof, and is labeled as
    such in outputs.

    fekete mode takes the two-sided almost-subadditivity defect
    |a_{n+m} - a_n - a_m| <= D + Delta_n of the unnormalized sequence
    a_n = n * P_n and returns the rigorous sandwich
    max_n (P_n - (D + Delta_n)/n) <= limit <= min_n (P_n + (D + Delta_n)/n).
    """
    depths = sorted(values)
    if len(depths) < 3:
        raise ValueError("extrapolation needs at least 3 depths")
    v = {n: float(values[n]) for n in depths}
    if mode == "cauchy":
        n0, n1, n2 = depths[-3], depths[-2], depths[-1]
        est = (n2 * v[n2] - n1 * v[n1]) / (n2 - n1)
        prev = (n1 * v[n1] - n0 * v[n0]) / (n1 - n0)
        err = abs(est - v[n2]) + abs(est - prev)
        return ExtrapolationResult(est, err, err < tol)
    if mode == "fekete":
        def delta(n: int) -> float:
            if defect_rule is None:
                return 0.0
            if callable(defect_rule):
                return float(defect_rule(n))
            return float(defect_rule[n])
        upper = min(v[n] + (defect_constant + delta(n)) / n for n in depths)
        lower = max(v[n] - (defect_constant + delta(n)) / n for n in depths)
        if lower > upper:
            raise ValueError("fekete sandwich is empty; the supplied defect is too small")
        est = 0.5 * (lower + upper)
        err = 0.5 * (upper - lower)
        return ExtrapolationResult(est, err, err < tol)
    raise ValueError("mode must be 'cauchy' or 'fekete'")


def _richardson_rows(depths: Sequence[int], rows: np.ndarray, tol: float):
    """Vectorized cauchy-mode extrapolation across a whole grid."""
    n0, n1, n2 = depths[-3], depths[-2], depths[-1]
    v0, v1, v2 = rows[-3], rows[-2], rows[-1]
    est = (n2 * v2 - n1 * v1) / (n2 - n1)
    prev = (n1 * v1 - n0 * v0) / (n1 - n0)
    err = np.abs(est - v2) + np.abs(est - prev)
    return est, err, err < tol


# ---------------------------------------------------------------------------
# curves over a q grid
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class PressureCurve:
    q_grid: UniformGrid
    depths: tuple[int, ...]
    values: np.ndarray        # (len(depths), q_grid.size)
    limit: np.ndarray
    error_bound: np.ndarray
    converged: np.ndarray     # bool per q
    kind: str = "pressure"    # "pressure" | "mgf"


MGFCurve = PressureCurve  # same shape; kind field distinguishes them


def _assert_convex_rows(rows: np.ndarray, what: str) -> None:
    if rows.shape[1] >= 3:
        second = rows[:, :-2] - 2 * rows[:, 1:-1] + rows[:, 2:]
        worst = float(second.min())
        if worst < -1e-9:
            raise AssertionError(f"{what} lost convexity on the grid ({worst:.3e}); "
                                 "this indicates a summation defect")


def pressure_curve(spec: ObservableSpec, space: ShiftSpace,
                   q_grid: UniformGrid = DEFAULT_Q_GRID,
                   depths: Sequence[int] = DEFAULT_DEPTHS,
                   endpoint: str = "upper", tol: float = 1e-3,
                   budget: int = DEFAULT_BUDGET, shards: int = 1) -> PressureCurve:
    """P_n(q) over a grid for each depth, plus the extrapolated limit."""
    depths = tuple(sorted(depths))
    if len(depths) < 3:
        raise ValueError("need at least 3 depths")
    qs = q_grid.values()
    rows = np.empty((len(depths), qs.size))
    for di, n in enumerate(depths):
        table = value_table(spec, space, n, endpoint=endpoint, budget=budget,
                            shards=shards)
        weights = table.counts.astype(float)
        rows[di] = [table.log_exp_sum(q, weights) / n for q in qs]
        if _on_grid(q_grid, 0.0):
            at_zero = rows[di][q_grid.index_of(0.0)]
            expected = math.log(space.word_count(n)) / n
            if abs(at_zero - expected) > 1e-12:
                raise AssertionError(
                    f"P_{n}(0) = {at_zero!r} differs from log(word count)/n = {expected!r}")
    _assert_convex_rows(rows, "pressure curve")
    limit, err, conv = _richardson_rows(depths, rows, tol)
    return PressureCurve(q_grid, depths, rows, limit, err, conv, kind="pressure")


def mgf_curve(spec: ObservableSpec, space: ShiftSpace, measure: ReferenceMeasure,
              q_grid: UniformGrid = DEFAULT_Q_GRID,
              depths: Sequence[int] = DEFAULT_DEPTHS,
              endpoint: str = "upper", tol: float = 1e-3,
              budget: int = DEFAULT_BUDGET, shards: int = 1) -> PressureCurve:
    """phi_n(q) over a grid for each depth, plus the extrapolated limit."""
    depths = tuple(sorted(depths))
    if len(depths) < 3:
        raise ValueError("need at least 3 depths")
    qs = q_grid.values()
    rows = np.empty((len(depths), qs.size))
    for di, n in enumerate(depths):
        table = value_table(spec, space, n, measure=measure, endpoint=endpoint,
                            budget=budget, shards=shards)
        base = table.log_exp_sum(0.0, table.masses)
        rows[di] = [(table.log_exp_sum(q, table.masses) - base) / n for q in qs]
        if _on_grid(q_grid, 0.0):
            assert rows[di][q_grid.index_of(0.0)] == 0.0
    _assert_convex_rows(rows, "log-MGF curve")
    limit, err, conv = _richardson_rows(depths, rows, tol)
    return PressureCurve(q_grid, depths, rows, limit, err, conv, kind="mgf")


def _on_grid(grid: UniformGrid, x: float) -> bool:
    try:
        grid.index_of(x)
        return True
    except ValueError:
        return False
