"""Empirical large-deviation checks: plain and tilted Monte Carlo.

Sampling estimates nu{ X_n / n in [a, b] }. The plain sampler draws from the
reference measure itself, which is hopeless for rare sets; the tilted
sampler draws from the exponentially reweighted law, proportional to
exp(q * X_n) d nu, and corrects with exact per-word importance weights
exp(log nu(w) - log mu(w)), so the estimator is unbiased by construction,
with no self-normalization, whatever the accuracy of the eigendata behind
the sampling chain.

Randomness is counter-based: sample index space is split into fixed blocks
of MC_BLOCK draws, block b uses its own Philox stream keyed by (seed, b),
and block results merge in block order. Identical seeds therefore give
bit-identical estimates for any worker count.
"""

import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Optional, Sequence

import numpy as np

from ._parallel import ordered_map
from .convex import (
    GridFunction,
    UniformGrid,
    domain_endpoints,
    kink_scan,
    legendre_conjugate,
)
from .observables import LocallyConstantBirkhoff, ObservableSpec, eval_block
from .pressure import PressureCurve
from .spectra import DEFAULT_ALPHA_MARGIN, DEFAULT_ALPHA_STEP
from .symbolic import ReferenceMeasure, ShiftSpace, perron_eigen

MC_BLOCK = 8192


# ---------------------------------------------------------------------------
# exact binomial oracles
# ---------------------------------------------------------------------------

def binomial_range_probability(n: int, k_min: int, k_max: int, p: float) -> float:
    """P(k_min <= Binomial(n, p) <= k_max), exact rational arithmetic."""
    if not (0 <= k_min <= k_max <= n):
        raise ValueError("need 0 <= k_min <= k_max <= n")
    pf = Fraction(p)
    if not (0 <= pf <= 1):
        raise ValueError("p must lie in [0, 1]")
    qf = 1 - pf
    total = Fraction(0)
    for k in range(k_min, k_max + 1):
        total += math.comb(n, k) * pf ** k * qf ** (n - k)
    return float(total)


def binomial_tail_oracle(n: int, k_min: int, p: float) -> float:
    """P(Binomial(n, p) >= k_min), exact to the double it returns."""
    if not (0 <= k_min <= n):
        raise ValueError("k_min must lie in [0, n]")
    return binomial_range_probability(n, k_min, n, p)


# ---------------------------------------------------------------------------
# sampling chains
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SamplingChain:
    """A (possibly tilted) Markov sampling law for words, with exact log masses."""

    init: np.ndarray
    kernel: np.ndarray

    def __post_init__(self):
        if np.abs(self.kernel.sum(axis=1) - 1.0).max() > 1e-12:
            raise AssertionError("sampling kernel rows must sum to 1 within 1e-12")

    def cums(self) -> tuple[np.ndarray, np.ndarray]:
        c0 = np.cumsum(self.init)
        c0[-1] = 1.0
        ck = np.cumsum(self.kernel, axis=1)
        ck[:, -1] = 1.0
        return c0, ck

    def log_mass(self, words: np.ndarray) -> np.ndarray:
        with np.errstate(divide="ignore"):
            li = np.log(self.init)
            lk = np.log(self.kernel)
        out = li[words[:, 0]]
        for i in range(words.shape[1] - 1):
            out = out + lk[words[:, i], words[:, i + 1]]
        return out


def plain_chain(measure: ReferenceMeasure) -> SamplingChain:
    init, kernel = measure.marginal_chain()
    return SamplingChain(init, kernel)


@dataclass(frozen=True)
class TiltedSampler:
    """Exact sampler for the exponentially tilted law of a window <= 2 potential.

    For q = 0 the chain is the reference chain itself, arrays and all, so
    identical seeds reproduce the plain sampler draw for draw.
    """

    q: float
    chain: SamplingChain
    reference: SamplingChain


def build_tilted_sampler(measure: ReferenceMeasure, spec: ObservableSpec,
                         q: float) -> TiltedSampler:
    if not isinstance(spec, LocallyConstantBirkhoff):
        raise ValueError("exact tilting needs an additive locally constant potential")
    if spec.window > 2:
        raise ValueError("exact tilting covers window <= 2 only")
    if not math.isfinite(q):
        raise ValueError("tilt parameter must be finite")
    ref = plain_chain(measure)
    if q == 0.0:
        return TiltedSampler(0.0, ref, ref)
    l = spec.alphabet_size
    if spec.window == 1:
        # attach the per-step factor to the target symbol; the first symbol's
        # factor goes into the initial vector
        factor = np.exp(q * spec.table)
        edge = ref.kernel * factor[None, :]
        start = ref.init * factor
    else:
        edge = ref.kernel * np.exp(q * spec.table.reshape(l, l))
        start = ref.init.copy()
    lam, v = perron_eigen(edge, tol=1e-13)
    kernel = edge * v[None, :] / (lam * v[:, None])
    kernel = kernel / kernel.sum(axis=1, keepdims=True)
    init = start * v
    init = init / init.sum()
    return TiltedSampler(q, SamplingChain(init, kernel), ref)


def _draw_block(chain: SamplingChain, count: int, length: int,
                seed: int, block_index: int) -> np.ndarray:
    # 128-bit Philox key: 64 bits of user seed, 64 bits of block index
    key = ((seed & 0xFFFFFFFFFFFFFFFF) << 64) | (block_index & 0xFFFFFFFFFFFFFFFF)
    rng = np.random.Generator(np.random.Philox(key=key))
    u = rng.random((count, length))
    c0, ck = chain.cums()
    words = np.empty((count, length), dtype=np.uint8)
    words[:, 0] = np.searchsorted(c0, u[:, 0], side="right")
    for i in range(1, length):
        rows = ck[words[:, i - 1]]
        words[:, i] = (rows <= u[:, i, None]).sum(axis=1)
    return words


# ---------------------------------------------------------------------------
# tail estimates
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class TailEstimate:
    """Monte Carlo estimate of a level-set probability at horizon n.

    `log_rate` is -(1/n) log(prob); when no sample hits the set the
    probability cannot be logged, so `log_rate` is None and
    `log_rate_bound` carries the one-sided statement rate >= log(N)/n.
    """

    n: int
    interval: tuple[float, float]
    prob_estimate: float
    log_rate: Optional[float]
    log_rate_bound: Optional[float]
    ci_95_rel: Optional[float]
    sampler: str
    samples: int
    seed: int

    def __post_init__(self):
        if not (0.0 <= self.prob_estimate <= 1.0):
            raise AssertionError("probability estimates must lie in [0, 1]")


def _blocks_of(total: int) -> list[tuple[int, int]]:
    return [(b, min(MC_BLOCK, total - b * MC_BLOCK))
            for b in range((total + MC_BLOCK - 1) // MC_BLOCK)]


def sample_plain(measure: ReferenceMeasure, spec: ObservableSpec, space: ShiftSpace,
                 n: int, interval: Sequence[float], samples: int, seed: int,
                 shards: int = 1) -> TailEstimate:
    """Hit-fraction estimate of nu{ X_n / n in [a, b] } under i.i.d. words."""
    if samples < 1:
        raise ValueError("need at least one sample")
    a, b = float(interval[0]), float(interval[1])
    chain = plain_chain(measure)
    length = n + spec.window - 1

    def one(block):
        bi, count = block
        words = _draw_block(chain, count, length, seed, bi)
        x, _ = eval_block(spec, words, n, space)
        ratio = x / n
        return int(((ratio >= a) & (ratio <= b)).sum())

    hits = 0
    for part in ordered_map(one, _blocks_of(samples), shards):
        hits += part
    prob = hits / samples
    if hits == 0:
        return TailEstimate(n, (a, b), 0.0, None, math.log(samples) / n,
                            None, "plain", samples, seed)
    se = math.sqrt(prob * (1.0 - prob) / samples)
    return TailEstimate(n, (a, b), prob, -math.log(prob) / n, None,
                        1.96 * se / prob, "plain", samples, seed)


def sample_tilted(measure: ReferenceMeasure, spec: ObservableSpec, space: ShiftSpace,
                  n: int, interval: Sequence[float], q: float, samples: int,
                  seed: int, shards: int = 1) -> TailEstimate:
    """Importance-sampled estimate of nu{ X_n / n in [a, b] } under the q-tilt."""
    if samples < 1:
        raise ValueError("need at least one sample")
    a, b = float(interval[0]), float(interval[1])
    sampler = build_tilted_sampler(measure, spec, q)
    length = n + spec.window - 1

    def one(block):
        bi, count = block
        words = _draw_block(sampler.chain, count, length, seed, bi)
        x, _ = eval_block(spec, words, n, space)
        ratio = x / n
        hit = (ratio >= a) & (ratio <= b)
        logw = sampler.reference.log_mass(words) - sampler.chain.log_mass(words)
        w = np.where(hit, np.exp(logw), 0.0)
        return float(w.sum()), float((w * w).sum()), int(hit.sum())

    sum_w = 0.0
    sum_w2 = 0.0
    hits = 0
    for part in ordered_map(one, _blocks_of(samples), shards):
        sum_w += part[0]
        sum_w2 += part[1]
        hits += part[2]
    est = sum_w / samples
    name = f"tilted(q={q!r})"
    if hits == 0:
        return TailEstimate(n, (a, b), 0.0, None, math.log(samples) / n,
                            None, name, samples, seed)
    var = max(0.0, sum_w2 / samples - est * est)
    se = math.sqrt(var / samples)
    ci = 1.96 * se / est if est > 0 else None
    # probabilities live in [0, 1]; the raw mean can poke above 1 by sampling
    # noise when the target saturates, and projecting back can only help
    est = min(est, 1.0)
    return TailEstimate(n, (a, b), est, -math.log(est) / n, None,
                        ci, name, samples, seed)


# ---------------------------------------------------------------------------
# differentiability check
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SmoothnessReport:
    differentiable_interior: bool
    rate: GridFunction
    kinks: list[float]


def gartner_ellis_check(curve: PressureCurve) -> SmoothnessReport:
    """Scan an extrapolated log-MGF curve for kinks and emit its rate function.

    Kinks (subgradient intervals wider than the grid can explain) block the
    lower-bound half of the formalism, so downstream spectra built on a
    kinked curve must stay labeled upper-bound-only. Refuses curves whose
    extrapolation has not converged.
    """
    bad = int((~curve.converged).sum())
    if bad:
        raise ValueError(
            f"check refused: limit extrapolation unconverged at {bad} grid points; "
            "deepen the depth schedule or loosen the tolerance")
    phi = GridFunction(curve.q_grid, curve.limit, provenance="mgf-limit")
    kinks = kink_scan(phi)
    ends = domain_endpoints(phi)
    alpha_grid = UniformGrid.around(ends.lower, ends.upper,
                                    DEFAULT_ALPHA_STEP, DEFAULT_ALPHA_MARGIN)
    rate = legendre_conjugate(phi, alpha_grid).function
    return SmoothnessReport(differentiable_interior=not kinks, rate=rate, kinks=kinks)
