"""Classical occupancy scheme for a fixed probability vector.

Ball throwing (exact, and Poissonized), count statistics, and the mean and
variance approximations

    mubar_j(x) = sum_i P(Poisson(p_i x) > j)
    mu(x)      = mubar_0(x) = sum_i (1 - exp(-p_i x))
    sigma2(x)  = sum_i e^{-p_i x}(1 - e^{-p_i x}) - x^{-1} (sum_i x p_i e^{-p_i x})^2
"""
from dataclasses import dataclass
import math
from typing import NamedTuple

import numpy as np
from scipy import special, stats

from .errors import InvalidDistribution

DEFAULT_J = 8
_SMALL_MEAN = 40.0


def binomial_icdf(u, n, p):
    """Inverse CDF of Binomial(n, p) evaluated at uniforms ``u`` (vectorized).

    Small means (n * min(p, 1-p) <= 40) are resolved by a sequential search
    over the pmf recursion; larger ones go to scipy's exact quantile.  When
    p > 1/2 the draw is taken as n - Binomial(n, 1-p) at 1 - u.
    """
    u, n, p = np.broadcast_arrays(np.asarray(u, float), np.asarray(n, np.int64), np.asarray(p, float))
    out = np.zeros(u.shape, dtype=np.int64)
    full = (p >= 1.0) & (n > 0)
    out[full] = n[full]
    live = (n > 0) & (p > 0.0) & ~full
    if not live.any():
        return out
    idx = np.flatnonzero(live)
    uu, nn, pp = u.ravel()[idx], n.ravel()[idx], p.ravel()[idx]
    flip = pp > 0.5
    q = np.where(flip, 1.0 - pp, pp)
    uu = np.where(flip, 1.0 - uu, uu)
    res = np.empty(idx.size, dtype=np.int64)

    big = nn * q > _SMALL_MEAN
    if big.any():
        res[big] = stats.binom.ppf(uu[big], nn[big], q[big]).astype(np.int64)
    small = np.flatnonzero(~big)
    if small.size:
        ns, qs, us = nn[small], q[small], uu[small]
        ratio = qs / (1.0 - qs)
        pmf = np.exp(ns * np.log1p(-qs))
        cdf = pmf.copy()
        k = np.zeros(small.size, dtype=np.int64)
        todo = np.flatnonzero(cdf < us)
        while todo.size:
            kk = k[todo]
            pmf[todo] *= (ns[todo] - kk) / (kk + 1.0) * ratio[todo]
            k[todo] = kk + 1
            cdf[todo] += pmf[todo]
            stuck = k[todo] >= ns[todo]
            todo = todo[(cdf[todo] < us[todo]) & ~stuck]
        res[small] = k
    res = np.where(flip, nn - res, res)
    out.ravel()[idx] = res
    return out


def _check_prob(p, defective=False):
    p = np.asarray(p, dtype=float).ravel()
    if p.size and (p.min() < 0 or not np.all(np.isfinite(p))):
        raise InvalidDistribution("probabilities must be finite and nonnegative")
    total = p.sum()
    if defective:
        if total > 1 + 1e-12:
            raise InvalidDistribution(f"defective vector sums to {total} > 1")
    elif abs(total - 1.0) > 1e-12:
        raise InvalidDistribution(f"probabilities sum to {total}, not 1")
    return p


@dataclass(frozen=True)
class OccupancyCounts:
    box_counts: dict  # box index -> number of balls, occupied boxes only
    n: int

    def counts(self):
        return np.fromiter(self.box_counts.values(), dtype=np.int64, count=len(self.box_counts))


def throw_balls_batch(p, n, size, rng):
    """Count matrix of shape (size, len(p)) for ``size`` independent throws of n balls.

    Box i receives Binomial(remaining balls, p_i / remaining mass).
    """
    p = _check_prob(p)
    if n < 0:
        raise ValueError("n must be >= 0")
    tail = np.cumsum(p[::-1])[::-1]  # mass of boxes i, i+1, ...
    out = np.zeros((size, p.size), dtype=np.int64)
    left = np.full(size, n, dtype=np.int64)
    for i in range(p.size):
        if i == p.size - 1:
            out[:, i] = left
            break
        frac = min(p[i] / tail[i], 1.0) if tail[i] > 0 else 0.0
        out[:, i] = binomial_icdf(rng.random(size), left, frac)
        left -= out[:, i]
    return out


def throw_balls(p, n, rng):
    counts = throw_balls_batch(p, n, 1, rng)[0]
    return OccupancyCounts({i: int(c) for i, c in enumerate(counts) if c > 0}, int(n))


def poissonized_throw(p, x, rng):
    """Independent Poisson(p_i x) counts per box."""
    p = _check_prob(p)
    if x < 0:
        raise ValueError("x must be >= 0")
    counts = rng.poisson(p * x)
    return OccupancyCounts({i: int(c) for i, c in enumerate(counts) if c > 0}, int(counts.sum()))


@dataclass(frozen=True)
class OccupancyStats:
    """Counts of boxes by occupancy.

    ``exact[j-1]`` is N_{n,j} for j = 1..J; ``tail[j]`` is Nbar_{n,j} (boxes with
    more than j balls) for j = 0..J-1; ``overflow_balls`` is the number of balls
    sitting in boxes with more than J balls.
    """
    n: int
    exact: np.ndarray
    tail: np.ndarray
    overflow_balls: int

    @property
    def total(self):
        return int(self.tail[0])

    @property
    def J(self):
        return self.exact.size

    def N(self, j):
        return int(self.exact[j - 1])

    def Nbar(self, j):
        return int(self.tail[j])


def stats_from_counts(counts, J=DEFAULT_J):
    if J < 1:
        raise ValueError("J must be >= 1")
    if isinstance(counts, OccupancyCounts):
        c = counts.counts()
    elif isinstance(counts, dict):
        c = np.fromiter(counts.values(), dtype=np.int64, count=len(counts))
    else:
        c = np.asarray(counts, dtype=np.int64)
    c = c[c > 0]
    n = int(c.sum())
    hist = np.bincount(np.minimum(c, J + 1), minlength=J + 2)
    exact = hist[1:J + 1].astype(np.int64)
    above = np.cumsum(hist[::-1])[::-1]  # above[j] = #boxes with count >= j (capped)
    tail = above[1:J + 1].astype(np.int64)
    overflow = int(c[c > J].sum())
    return OccupancyStats(n, exact, tail, overflow)


class Moment(NamedTuple):
    value: float
    error_bound: float


def poisson_tail(j, y):
    """P(Poisson(y) > j), elementwise and free of cancellation for small y."""
    y = np.asarray(y, dtype=float)
    if j == 0:
        return -np.expm1(-y)
    return special.gammainc(j + 1, y)


def mu_bar(p, j, x, remainder=0.0):
    """mubar_j(x) over the stored masses; error bound x * remainder covers unstored mass."""
    if x < 0:
        raise ValueError("x must be >= 0")
    p = np.asarray(p, dtype=float)
    return Moment(float(np.sum(poisson_tail(j, p * x))), float(x * remainder))


def mu(p, x, remainder=0.0):
    return mu_bar(p, 0, x, remainder)


def sigma2_parts(p, x):
    """(sum e^{-y}(1-e^{-y}), sum y e^{-y}) with y = p x."""
    y = np.asarray(p, dtype=float) * x
    e = np.exp(-y)
    return float(np.sum(-e * np.expm1(-y))), float(np.sum(y * e))


def sigma2(p, x, remainder=0.0):
    """Variance approximation sigma2_p(x).

    Unstored mass r moves the first sum by at most x r and the squared term
    by at most 2 x r, so the bound reported is 2 x r.
    """
    if x <= 0:
        raise ValueError("x must be > 0")
    a, b = sigma2_parts(p, x)
    return Moment(a - b * b / x, float(2 * x * remainder))
