"""Discrete convex analysis on uniformly sampled curves.

Everything here is stated up to grid resolution: the conjugate is a grid max,
subgradients are one-sided difference quotients, and infinity is an explicit
flag rather than a sentinel float. When the maximizer of the conjugate sits
on the boundary of the sampled range the value is unknowable from the data,
so it is flagged and treated as +infinity downstream.
"""

import math
import warnings
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

# Relative tie tolerance for "flat at the maximum" detection. A genuinely
# unbounded direction grows by slope*step per grid point, many orders above
# accumulated round-off on any curve this package produces.
TIE_EPS = 1e-12


@dataclass(frozen=True)
class UniformGrid:
    """Closed uniform grid lo, lo+step, ..., hi (hi must land on the grid)."""

    lo: float
    hi: float
    step: float

    def __post_init__(self):
        if not (self.step > 0) or not (self.hi > self.lo):
            raise ValueError("need hi > lo and step > 0")
        count = (self.hi - self.lo) / self.step
        if abs(count - round(count)) > 1e-9 * max(1.0, abs(count)):
            raise ValueError("grid bounds are not an integer number of steps apart")

    @property
    def size(self) -> int:
        return int(round((self.hi - self.lo) / self.step)) + 1

    def values(self) -> np.ndarray:
        return self.lo + self.step * np.arange(self.size)

    def index_of(self, x: float) -> int:
        idx = round((x - self.lo) / self.step)
        if not (0 <= idx < self.size):
            raise ValueError(f"{x} is outside the grid [{self.lo}, {self.hi}]")
        if abs(self.lo + idx * self.step - x) > 1e-9 * max(1.0, abs(x)):
            raise ValueError(f"{x} is not a grid point (step {self.step})")
        return int(idx)

    @classmethod
    def around(cls, lo: float, hi: float, step: float, margin: float = 0.0) -> "UniformGrid":
        """Smallest step-aligned grid covering [lo - margin, hi + margin]."""
        a = math.floor((lo - margin) / step) * step
        b = math.ceil((hi + margin) / step) * step
        if b <= a:
            b = a + step
        return cls(a, b, step)


def lower_convex_envelope(x: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Pointwise largest convex minorant of the sampled points, at the samples."""
    hull = [0]
    for i in range(1, len(x)):
        while len(hull) >= 2:
            i0, i1 = hull[-2], hull[-1]
            # keep the hull turning left: slope(i0,i1) <= slope(i1,i)
            if (y[i1] - y[i0]) * (x[i] - x[i1]) > (y[i] - y[i1]) * (x[i1] - x[i0]):
                hull.pop()
            else:
                break
        hull.append(i)
    out = np.empty_like(y)
    for a, b in zip(hull, hull[1:]):
        t = (x[a:b + 1] - x[a]) / (x[b] - x[a])
        out[a:b + 1] = y[a] * (1 - t) + y[b] * t
    out[hull[-1]] = y[hull[-1]]
    return out


@dataclass(frozen=True)
class GridFunction:
    """A convex function sampled on a uniform grid, with explicit +inf flags.

    Infinite entries may only pad the two ends (the essential domain is an
    interval). If the finite part breaks convexity by more than 1e-9 the
    constructor replaces it by its lower convex envelope and flags the repair
    loudly; violations below that level are noise and left alone.
    """

    grid: UniformGrid
    values: np.ndarray
    is_inf: np.ndarray = None
    provenance: str = ""
    convexified: bool = field(default=False, compare=False)

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float).copy()
        if v.shape != (self.grid.size,):
            raise ValueError("values must match the grid size")
        flags = self.is_inf
        if flags is None:
            flags = np.isinf(v)
        flags = np.asarray(flags, dtype=bool).copy()
        if flags.shape != v.shape:
            raise ValueError("is_inf must match the grid size")
        finite_idx = np.flatnonzero(~flags)
        if finite_idx.size == 0:
            raise ValueError("a grid function needs at least one finite value")
        if not (np.diff(finite_idx) == 1).all():
            raise ValueError("infinite entries must form a prefix and/or suffix")
        v[flags] = math.inf
        fin = v[finite_idx]
        if not np.isfinite(fin).all():
            raise ValueError("non-flagged values must be finite")
        repaired = False
        if fin.size >= 3:
            second = fin[:-2] - 2 * fin[1:-1] + fin[2:]
            if second.min() < -1e-9:
                x = self.grid.values()[finite_idx]
                v[finite_idx] = lower_convex_envelope(x, fin)
                repaired = True
                warnings.warn(
                    f"convexity repair applied to {self.provenance or 'grid function'}: "
                    f"worst violation {-second.min():.3e}",
                    stacklevel=2,
                )
        v.setflags(write=False)
        flags.setflags(write=False)
        object.__setattr__(self, "values", v)
        object.__setattr__(self, "is_inf", flags)
        object.__setattr__(self, "convexified", repaired)

    @property
    def finite_slice(self) -> slice:
        idx = np.flatnonzero(~self.is_inf)
        return slice(int(idx[0]), int(idx[-1]) + 1)

    def value_at(self, x: float) -> float:
        return float(self.values[self.grid.index_of(x)])


class SubgradientInterval(NamedTuple):
    left: float
    right: float
    kink: bool


@dataclass(frozen=True)
class ConjugateResult:
    function: GridFunction
    argmax_index: np.ndarray   # index into the finite q grid points
    boundary: np.ndarray       # True where the sup ran off the sampled range


def legendre_conjugate(f: GridFunction, alpha_grid: UniformGrid) -> ConjugateResult:
    """Grid Legendre transform f*(a) = max over grid q of (a*q - f(q)).

    The maximizing index is nondecreasing in a (the objective is concave in q
    and its slope increases with a), so a single two-pointer sweep computes
    the whole curve in linear time. A value is flagged as boundary, and set
    to +infinity, when the max is attained only at an end of the sampled q
    range, i.e. the true supremum lies beyond the data.
    """
    sl = f.finite_slice
    q = f.grid.values()[sl]
    fv = f.values[sl]
    if q.size < 3:
        raise ValueError("need at least 3 finite points to conjugate")
    alphas = alpha_grid.values()
    out = np.empty(alphas.size)
    arg = np.empty(alphas.size, dtype=np.int64)
    boundary = np.zeros(alphas.size, dtype=bool)
    j = 0
    last = q.size - 1
    for i, a in enumerate(alphas):
        g = a * q - fv
        tie = TIE_EPS * (1.0 + abs(g[j]))
        while j < last and g[j + 1] > g[j] + tie:
            j += 1
            tie = TIE_EPS * (1.0 + abs(g[j]))
        out[i] = g[j]
        arg[i] = j
        if j == last and g[last] - g[last - 1] > tie:
            boundary[i] = True
        elif j == 0 and g[0] - g[1] > tie:
            boundary[i] = True
    if boundary.all():
        raise ValueError(
            "the conjugate is unbounded at every sampled point; the alpha grid "
            "misses the effective domain (slopes of the input lie between grid "
            "points or beyond the grid)")
    values = np.where(boundary, math.inf, out)
    func = GridFunction(alpha_grid, values, is_inf=boundary,
                        provenance=f"conjugate({f.provenance})")
    return ConjugateResult(function=func, argmax_index=arg, boundary=boundary)


def conjugate_value_at(f: GridFunction, alpha: float) -> tuple[float, int, bool]:
    """Pointwise f*(alpha) by direct max over the sampled q grid."""
    sl = f.finite_slice
    q = f.grid.values()[sl]
    fv = f.values[sl]
    g = alpha * q - fv
    j = int(np.argmax(g))
    tie = TIE_EPS * (1.0 + abs(g[j]))
    boundary = (j == len(g) - 1 and g[-1] - g[-2] > tie) or (j == 0 and g[0] - g[1] > tie)
    return float(g[j]), j, bool(boundary)


def subgradient(f: GridFunction, q: float) -> SubgradientInterval:
    """One-sided difference quotients [f'_-(q), f'_+(q)] at a grid point.

    The width of the interval on a smooth convex curve is about step * f'',
    so a width above 10 * step * (typical curvature scale) marks a kink
    candidate. Detection only; acting on kinks is the caller's policy.
    """
    idx = f.grid.index_of(q)
    sl = f.finite_slice
    if not (sl.start + 1 <= idx <= sl.stop - 2):
        raise ValueError(
            "subgradient needs an interior point of the effective domain; "
            "use domain_endpoints for boundary behavior"
        )
    step = f.grid.step
    left = (f.values[idx] - f.values[idx - 1]) / step
    right = (f.values[idx + 1] - f.values[idx]) / step
    return SubgradientInterval(float(left), float(right),
                               kink=(right - left) > _kink_threshold(f))


def _kink_threshold(f: GridFunction) -> float:
    sl = f.finite_slice
    fin = f.values[sl]
    step = f.grid.step
    widths = (fin[2:] - 2 * fin[1:-1] + fin[:-2]) / step
    scale = max(1.0, float(np.median(np.abs(widths))) / step) if widths.size else 1.0
    return 10.0 * step * scale


def kink_scan(f: GridFunction) -> list[float]:
    """Grid points where the subgradient interval is wide enough to flag."""
    sl = f.finite_slice
    qs = f.grid.values()
    thresh = _kink_threshold(f)
    out = []
    for idx in range(sl.start + 1, sl.stop - 1):
        width = (f.values[idx + 1] - 2 * f.values[idx] + f.values[idx - 1]) / f.grid.step
        if width > thresh:
            out.append(float(qs[idx]))
    return out


class DomainEndpoints(NamedTuple):
    lower: float
    upper: float
    lower_reliable: bool
    upper_reliable: bool


def domain_endpoints(f: GridFunction) -> DomainEndpoints:
    """Asymptotic slopes of f, i.e. the endpoints of the conjugate's domain.

    Estimated from the outermost one-sided slopes and cross-checked against
    f(q)/q at the grid ends; when the two disagree by more than 10 steps the
    grid simply does not reach far enough and the side is flagged unreliable.
    """
    if f.is_inf.any():
        raise ValueError("domain endpoints need a curve that is finite on the whole grid")
    q = f.grid.values()
    v = f.values
    step = f.grid.step
    lo_slope = (v[1] - v[0]) / step
    hi_slope = (v[-1] - v[-2]) / step
    lo_ratio = v[0] / q[0] if q[0] != 0 else lo_slope
    hi_ratio = v[-1] / q[-1] if q[-1] != 0 else hi_slope
    tol = 10.0 * step
    return DomainEndpoints(
        lower=float(lo_slope),
        upper=float(hi_slope),
        lower_reliable=bool(abs(lo_slope - lo_ratio) <= tol),
        upper_reliable=bool(abs(hi_slope - hi_ratio) <= tol),
    )


def fenchel_gap(f: GridFunction, fstar: GridFunction, q: float, alpha: float) -> float:
    """alpha*q - f(q) - f*(alpha); always <= 0, and 0 certifies alpha in df(q)."""
    fq = f.value_at(q)
    fs = fstar.value_at(alpha)
    if not (math.isfinite(fq) and math.isfinite(fs)):
        raise ValueError("fenchel_gap needs finite values at both points")
    return alpha * q - fq - fs
