"""Multifractal spectrum assembly.

The pipeline is: log-moment generating curves over a depth schedule, limit
extrapolation, Legendre conjugation into a rate function, and then the level
set bookkeeping

    entropy(a)   = h_top - rate(a)        (empty when rate > h_top)
    dimension(a) = entropy(a) / log(l).

Rows outside the attainable slope range, or whose conjugate ran off the
sampled grid, carry an empty flag; the two extreme attainable slopes are
emitted but marked endpoint-undetermined, because the equality part of the
formalism only covers the open interval between them.

The table is labeled "equality" only when everything checkable checks out:
the observable class has a uniformly bounded additivity defect, the measured
subgradient intervals show no kink on the interior, and the reference
measure passed the uniform-mass diagnostic. Anything else is labeled
"upper-bound".
"""

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from ._parallel import batched, ordered_map
from .convex import (
    GridFunction,
    UniformGrid,
    domain_endpoints,
    kink_scan,
    legendre_conjugate,
    subgradient,
)
from .observables import (
    LocallyConstantBirkhoff,
    ObservableSpec,
    eval_block,
    is_almost_additive,
)
from .pressure import DEFAULT_DEPTHS, DEFAULT_Q_GRID, _richardson_rows
from .symbolic import (
    DEFAULT_BUDGET,
    ReferenceMeasure,
    ShiftSpace,
    check_budget,
    log_cylinder_masses,
    symbol_blocks,
    verify_ahlfors_bowen,
)

DEFAULT_ALPHA_STEP = 0.005
DEFAULT_ALPHA_MARGIN = 0.05

LABEL_EQUALITY = "equality"
LABEL_UPPER_BOUND = "upper-bound"

FLAG_ENDPOINT = "endpoint-undetermined"
FLAG_UNCONVERGED = "unconverged"
FLAG_EMPTY_RAY = "empty-ray"
FLAG_KINK_SHADOW = "kink-shadow-undetermined"


def binary_entropy(p: float) -> float:
    """-p log p - (1-p) log(1-p), with 0 log 0 = 0."""
    if not 0.0 <= p <= 1.0:
        raise ValueError("p must lie in [0, 1]")
    out = 0.0
    if p > 0.0:
        out -= p * math.log(p)
    if p < 1.0:
        out -= (1.0 - p) * math.log(1.0 - p)
    return out


def besicovitch_oracle(p: float) -> tuple[float, float]:
    """(dimension, rate) of the binary digit-frequency level set at p.

    Closed form: dimension H(p)/log 2 and rate log 2 - H(p). Outside [0, 1]
    the level set is empty: (nan, +inf).
    """
    if not 0.0 <= p <= 1.0:
        return (math.nan, math.inf)
    h = binary_entropy(p)
    return (h / math.log(2.0), math.log(2.0) - h)


def hausdorff_from_entropy(entropy: float, alphabet_size: int) -> float:
    """entropy / log(alphabet size); nan (empty) propagates."""
    log_l = math.log(alphabet_size)
    if math.isnan(entropy):
        return math.nan
    if entropy > log_l + 1e-9:
        raise ValueError(f"entropy {entropy} exceeds log({alphabet_size})")
    if entropy < -1e-9:
        raise ValueError("entropy must be nonnegative")
    return entropy / log_l


def _split_rate(h: float, rate: float) -> tuple[float, float]:
    """Store (rate, entropy) so that entropy + rate == h holds bitwise.

    entropy = fl(h - rate) and rate' = fl(h - entropy). With 0 <= rate <= h
    one of the two subtractions is exact (Sterbenz), so entropy + rate' = h
    as real numbers and the stored identity is exact; |rate' - rate| is at
    most one ulp of h.
    """
    e = h - rate
    r2 = h - e
    if e + r2 != h:
        raise AssertionError("could not represent the entropy complement exactly")
    return r2, e


@dataclass(frozen=True)
class SpectrumTable:
    """Rows (alpha, rate, entropy, dimension) with emptiness and reliability flags.

    Invariants enforced at construction: rates are nonnegative, non-empty
    rows satisfy entropy + rate == h exactly as stored, and dimension is
    exactly entropy / log(l).
    """

    alpha: np.ndarray
    rate: np.ndarray
    entropy: np.ndarray
    dimension: np.ndarray
    empty: np.ndarray
    reliability: tuple[str, ...]
    label: str
    metadata: dict = field(compare=False)

    def __post_init__(self):
        h = self.metadata["h"]
        for i in range(self.alpha.size):
            if self.empty[i]:
                continue
            if not (self.rate[i] >= -1e-12):
                raise AssertionError("negative rate in a non-empty row")
            if self.entropy[i] + self.rate[i] != h:
                raise AssertionError("entropy + rate != h in a stored row")
            if self.dimension[i] != self.entropy[i] / self.metadata["log_alphabet"]:
                raise AssertionError("dimension != entropy / log(l) in a stored row")

    def row_near(self, alpha: float) -> int:
        return int(np.argmin(np.abs(self.alpha - alpha)))


def _assemble_rows(alphas: np.ndarray, rate: np.ndarray, flags_inf: np.ndarray,
                   unconverged: np.ndarray, h: float, log_l: float,
                   lo: float, hi: float, step: float,
                   shadows: Sequence[tuple[float, float]] = ()):
    n = alphas.size
    rate_out = np.where(flags_inf, math.inf, rate)
    entropy = np.full(n, math.nan)
    dimension = np.full(n, math.nan)
    empty = np.zeros(n, dtype=bool)
    reliability = []
    for i in range(n):
        a = alphas[i]
        flags = []
        if flags_inf[i] or rate_out[i] > h or a < lo - step or a > hi + step:
            empty[i] = True
        else:
            r = max(0.0, float(rate_out[i]))
            rate_out[i], entropy[i] = _split_rate(h, r)
            dimension[i] = entropy[i] / log_l
            if a <= lo + step or a >= hi - step:
                flags.append(FLAG_ENDPOINT)
            if unconverged[i]:
                flags.append(FLAG_UNCONVERGED)
            if any(s_lo <= a <= s_hi for s_lo, s_hi in shadows):
                # the jump interval of the derivative at a kink: equality is
                # unknowable from grid data there, so say so rather than guess
                flags.append(FLAG_KINK_SHADOW)
        reliability.append(",".join(flags))
    return rate_out, entropy, dimension, empty, tuple(reliability)


def entropy_spectrum(spec: ObservableSpec, space: ShiftSpace,
                     measure: ReferenceMeasure,
                     q_grid: UniformGrid = DEFAULT_Q_GRID,
                     alpha_grid: Optional[UniformGrid] = None,
                     depths: Sequence[int] = DEFAULT_DEPTHS,
                     tol: float = 1e-3,
                     ab_depth: int = 10,
                     budget: int = DEFAULT_BUDGET,
                     shards: int = 1,
                     curve=None) -> SpectrumTable:
    """Entropy/dimension spectrum of the level sets of X_n / n.

    A precomputed log-MGF curve over the same grid and depths may be passed
    to avoid recomputing the cylinder sums.
    """
    from .pressure import mgf_curve  # local import keeps module load order simple

    ab = verify_ahlfors_bowen(measure, space, n_max=ab_depth, budget=budget)
    if curve is None:
        curve = mgf_curve(spec, space, measure, q_grid=q_grid, depths=depths,
                          tol=tol, budget=budget, shards=shards)
    elif curve.q_grid != q_grid:
        raise ValueError("precomputed curve grid does not match q_grid")
    phi = GridFunction(q_grid, curve.limit, provenance="mgf-limit")
    ends = domain_endpoints(phi)
    if alpha_grid is None:
        alpha_grid = UniformGrid.around(ends.lower, ends.upper,
                                        DEFAULT_ALPHA_STEP, DEFAULT_ALPHA_MARGIN)
    conj = legendre_conjugate(phi, alpha_grid)
    kinks = kink_scan(phi)
    shadows = []
    for qk in kinks:
        sub = subgradient(phi, qk)
        shadows.append((sub.left, sub.right))

    h = space.topological_entropy()
    log_l = math.log(space.alphabet_size)
    eligible = is_almost_additive(spec) and not kinks and ab.passed
    label = LABEL_EQUALITY if eligible else LABEL_UPPER_BOUND

    alphas = alpha_grid.values()
    fin_start = phi.finite_slice.start
    unconverged = ~curve.converged[fin_start + conj.argmax_index]
    rate, entropy, dimension, empty, reliability = _assemble_rows(
        alphas, conj.function.values, conj.boundary, unconverged,
        h, log_l, ends.lower, ends.upper, alpha_grid.step, shadows)

    meta = {
        "h": h,
        "log_alphabet": log_l,
        "alpha_lower": ends.lower,
        "alpha_upper": ends.upper,
        "observable": spec.describe(),
        "measure": measure.kind,
        "depths": list(curve.depths),
        "ahlfors_bowen_passed": bool(ab.passed),
        "kinks": kinks,
        "equality_eligible": eligible,
        "error_bound_semantics": "heuristic first-order extrapolation bound",
    }
    return SpectrumTable(alpha=alphas, rate=rate, entropy=entropy,
                         dimension=dimension, empty=empty,
                         reliability=reliability, label=label, metadata=meta)


# ---------------------------------------------------------------------------
# direct covering counts
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class CoveringEstimate:
    count: int
    raw: float      # (1/n) log count; nan when the count is zero
    n: int
    empty: bool


def covering_entropy_estimate(spec: ObservableSpec, space: ShiftSpace,
                              alpha: float, delta: float, n: int,
                              budget: int = DEFAULT_BUDGET,
                              shards: int = 1) -> CoveringEstimate:
    """Count cylinders whose X_n / n range meets the window (alpha +- delta).

    This is the equal-length cylinder reduction of the covering definition of
    topological entropy: (1/n) log(count) estimates the entropy of the level
    set. Membership uses the whole cylinder value interval (conservative
    overcount), consistent with the supremum convention of the pressure sums.
    """
    if delta <= 0:
        raise ValueError("delta must be positive")
    length = n + spec.window - 1
    check_budget(space, length, budget)
    lo_edge = alpha - delta
    hi_edge = alpha + delta

    def one(block: np.ndarray) -> int:
        lo, hi = eval_block(spec, block, n, space)
        return int(((lo / n < hi_edge) & (hi / n > lo_edge)).sum())

    count = 0
    for batch in batched(symbol_blocks(space, length), max(1, shards)):
        count += sum(ordered_map(one, batch, shards))
    if count == 0:
        return CoveringEstimate(0, math.nan, n, True)
    return CoveringEstimate(count, math.log(count) / n, n, False)


# ---------------------------------------------------------------------------
# ratio spectra via the two-variable route
# ---------------------------------------------------------------------------

def _nice_step(raw: float) -> float:
    """Largest step of the form {1, 2, 2.5, 5} * 10^k not exceeding raw.

    Round steps keep degenerate attainable values (integers, simple decimals)
    on the grid up to a few ulps, which the flat-direction tie tolerance of
    the conjugation sweeps absorbs.
    """
    exp = math.floor(math.log10(raw))
    base = raw / 10.0 ** exp
    for cand in (5.0, 2.5, 2.0, 1.0):
        if cand <= base * (1.0 + 1e-12):
            return cand * 10.0 ** exp
    return 10.0 ** exp


def _max_with_flags(matrix: np.ndarray):
    """Row max / argmax with boundary flags for a concave-rows matrix.

    A row is flagged when its maximum sits at the first or last column and
    the neighboring column is strictly below it (beyond the flat-direction
    tie tolerance): the true supremum then lies beyond the sampled range.
    """
    vals = matrix.max(axis=1)
    args = matrix.argmax(axis=1)
    tie = 1e-12 * (1.0 + np.abs(vals))
    last = matrix.shape[1] - 1
    at_left = (args == 0) & (matrix[:, 0] - matrix[:, 1] > tie)
    at_right = (args == last) & (matrix[:, last] - matrix[:, last - 1] > tie)
    return vals, args, at_left | at_right


def ratio_spectrum(spec_num: LocallyConstantBirkhoff,
                   spec_den: LocallyConstantBirkhoff,
                   space: ShiftSpace, measure: ReferenceMeasure,
                   gamma_values: Sequence[float],
                   q_grid: UniformGrid = UniformGrid(-10.0, 10.0, 0.1),
                   axis_points: int = 2201,
                   depths: Sequence[int] = DEFAULT_DEPTHS,
                   tol: float = 1e-3,
                   budget: int = DEFAULT_BUDGET,
                   shards: int = 1) -> SpectrumTable:
    """Spectrum of the ratio of two Birkhoff averages via contraction.

    Builds the joint log-moment generating function on a 2-D q grid, takes
    its conjugate on an (alpha, beta) grid, and minimizes the joint rate
    along each ray alpha/beta = gamma within one grid diagonal. Both
    conjugate axes live on a single shared grid so that degenerate attainable
    sets (the diagonal when numerator equals denominator, a single line when
    the denominator is constant) stay exactly representable.

    The denominator must have strictly positive per-step values so the ratio
    is well defined and beta stays away from 0.
    """
    if not isinstance(spec_num, LocallyConstantBirkhoff) or \
       not isinstance(spec_den, LocallyConstantBirkhoff):
        raise TypeError("ratio spectra are built from locally constant potentials")
    if spec_den.table.min() <= 0:
        raise ValueError("denominator potential must be strictly positive per step")
    depths = tuple(sorted(depths))
    if len(depths) < 3:
        raise ValueError("need at least 3 depths")

    # joint value tables per depth, collapsed by exact (X1, X2) pairs
    q1s = q_grid.values()
    q2s = q_grid.values()
    stack = np.empty((len(depths), q1s.size, q2s.size))
    for di, n in enumerate(depths):
        check_budget(space, n + max(spec_num.window, spec_den.window) - 1, budget)
        pairs = []
        masses = []
        for block in symbol_blocks(space, n):
            _, v1 = eval_block(spec_num, block, n, space)
            _, v2 = eval_block(spec_den, block, n, space)
            pairs.append(v1 + 1j * v2)
            masses.append(np.exp(log_cylinder_masses(measure, block)))
        allp = np.concatenate(pairs)
        allm = np.concatenate(masses)
        up, inverse = np.unique(allp, return_inverse=True)
        um = np.bincount(inverse, weights=allm, minlength=up.size)
        v1 = up.real
        v2 = up.imag
        logm = np.log(um)
        for i1, q1 in enumerate(q1s):
            x = q1 * v1[None, :] + q2s[:, None] * v2[None, :] + logm[None, :]
            m = x.max(axis=1, keepdims=True)
            lse = m[:, 0] + np.log(np.exp(x - m).sum(axis=1))
            stack[di, i1, :] = lse
        # normalize through the same code path so phi2(0, 0) is exactly 0
        zero = stack[di, q_grid.index_of(0.0), q_grid.index_of(0.0)]
        stack[di] = (stack[di] - zero) / n
    flat = stack.reshape(len(depths), -1)
    limit, _, conv = _richardson_rows(depths, flat, tol)
    phi2 = limit.reshape(q1s.size, q2s.size)
    conv2 = conv.reshape(q1s.size, q2s.size)

    # attainable slope boxes from the marginal sections through q2 = 0, q1 = 0
    j0 = q_grid.index_of(0.0)
    lo1, hi1 = _edge_slopes(q1s, phi2[:, j0])
    lo2, hi2 = _edge_slopes(q2s, phi2[j0, :])
    margin = DEFAULT_ALPHA_MARGIN
    span = (max(hi1, hi2) + margin) - (min(lo1, lo2) - margin)
    step = _nice_step(span / (axis_points - 1))
    axis_grid = UniformGrid.around(min(lo1, lo2), max(hi1, hi2), step, margin)
    axis = axis_grid.values()
    beta_keep = np.flatnonzero((axis >= lo2 - margin) & (axis <= hi2 + margin))
    betas = axis[beta_keep]

    # stage 1: g[j2, a] = max_q1 (a q1 - phi2(q1, q2)), concave rows in q1
    g = np.empty((q2s.size, axis.size))
    arg1 = np.empty((q2s.size, axis.size), dtype=np.int64)
    flag1 = np.zeros((q2s.size, axis.size), dtype=bool)
    for j2 in range(q2s.size):
        rows = axis[:, None] * q1s[None, :] - phi2[:, j2][None, :]
        g[j2], arg1[j2], flag1[j2] = _max_with_flags(rows)
    # stage 2: I(a, b) = max_q2 (b q2 + g[q2, a]), concave in q2
    big_i = np.empty((axis.size, betas.size))
    flag = np.zeros((axis.size, betas.size), dtype=bool)
    unconv = np.zeros((axis.size, betas.size), dtype=bool)
    for ia in range(axis.size):
        rows = betas[:, None] * q2s[None, :] + g[:, ia][None, :]
        vals, arg, bnd = _max_with_flags(rows)
        big_i[ia] = vals
        flag[ia] = bnd | flag1[arg, ia]
        unconv[ia] = ~conv2[arg1[arg, ia], arg]
    big_i = np.where(flag, math.inf, np.maximum(big_i, 0.0))

    ray_tol = math.hypot(axis_grid.step, axis_grid.step)
    gammas = np.asarray(list(gamma_values), dtype=float)
    j_rate = np.full(gammas.size, math.inf)
    j_unconv = np.zeros(gammas.size, dtype=bool)
    ray_found = np.zeros(gammas.size, dtype=bool)
    for gi, gamma in enumerate(gammas):
        best = math.inf
        best_unconv = False
        found = False
        for jb, beta in enumerate(betas):
            if beta <= 0:
                continue
            center = gamma * beta
            width = ray_tol * beta
            i_lo = int(np.searchsorted(axis, center - width, side="left"))
            i_hi = int(np.searchsorted(axis, center + width, side="right"))
            if i_hi <= i_lo:
                continue
            found = True
            seg = big_i[i_lo:i_hi, jb]
            k = int(np.argmin(seg))
            if seg[k] < best:
                best = float(seg[k])
                best_unconv = bool(unconv[i_lo + k, jb])
        j_rate[gi] = best
        j_unconv[gi] = best_unconv
        ray_found[gi] = found

    h = space.topological_entropy()
    log_l = math.log(space.alphabet_size)
    rate_out = j_rate.copy()
    entropy = np.full(gammas.size, math.nan)
    dimension = np.full(gammas.size, math.nan)
    empty = np.zeros(gammas.size, dtype=bool)
    reliability = []
    for gi in range(gammas.size):
        flags = []
        if not ray_found[gi]:
            flags.append(FLAG_EMPTY_RAY)
        if not math.isfinite(j_rate[gi]) or j_rate[gi] > h:
            empty[gi] = True
        else:
            rate_out[gi], entropy[gi] = _split_rate(h, j_rate[gi])
            dimension[gi] = entropy[gi] / log_l
            if j_unconv[gi]:
                flags.append(FLAG_UNCONVERGED)
        reliability.append(",".join(flags))

    eligible = (is_almost_additive(spec_num) and is_almost_additive(spec_den))
    meta = {
        "h": h,
        "log_alphabet": log_l,
        "alpha_lower": float(gammas.min()),
        "alpha_upper": float(gammas.max()),
        "observable": f"ratio({spec_num.describe()} / {spec_den.describe()})",
        "measure": measure.kind,
        "depths": list(depths),
        "ahlfors_bowen_passed": None,
        "kinks": [],
        "equality_eligible": eligible,
    }
    return SpectrumTable(alpha=gammas, rate=rate_out, entropy=entropy,
                         dimension=dimension, empty=empty,
                         reliability=tuple(reliability),
                         label=LABEL_EQUALITY if eligible else LABEL_UPPER_BOUND,
                         metadata=meta)


def _edge_slopes(xs: np.ndarray, vals: np.ndarray) -> tuple[float, float]:
    step = xs[1] - xs[0]
    return (float((vals[1] - vals[0]) / step), float((vals[-1] - vals[-2]) / step))
