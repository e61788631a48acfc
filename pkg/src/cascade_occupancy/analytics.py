"""Analytic profile of a splitting law.

From L(theta) = E sum_j rho_j^theta the profile derives

    m(theta)   = -L'/L                      mean of the tilted intensity
    v(theta)   = L''/L - (L'/L)^2           its variance
    phi(theta) = ln L - theta L'/L          rate function

together with the critical parameters theta_lower < 1 < theta_upper (phi > 0
exactly on the open interval between them), m_lower = m(theta_upper),
m_upper = lim m at theta_lower, and the inverse bijection of m.
"""
from dataclasses import dataclass, field
import functools
import math
from typing import NamedTuple

import numpy as np
from scipy import optimize, special

from .errors import DomainError, ProfileBuildError, RegimeError
from .laws import parse_law

THETA_CAP = 64.0
_EDGE_TOL = 1e-9


def numeric_derivatives(fn, theta):
    """First and second derivative of ``fn`` at ``theta`` by central differences.

    The first derivative uses step h = max(1e-5, 1e-5 theta); the second a
    wider step max(1e-3, 1e-3 theta) because its rounding error scales as
    eps / h^2.  Each is Richardson-extrapolated once (h and h/2).
    """
    h1 = min(max(1e-5, 1e-5 * theta), theta / 4)
    h2 = min(max(1e-3, 1e-3 * theta), theta / 4)

    def ev(x):
        y = float(fn(x))
        if not math.isfinite(y):
            raise ProfileBuildError(f"non-finite evaluation at theta={x}")
        return y

    def d1(h):
        return (ev(theta + h) - ev(theta - h)) / (2 * h)

    f0 = ev(theta)

    def d2(h):
        return (ev(theta + h) - 2 * f0 + ev(theta - h)) / (h * h)

    first = (4 * d1(h1 / 2) - d1(h1)) / 3
    second = (4 * d2(h2 / 2) - d2(h2)) / 3
    return first, second


class _ExactEval:
    mode = "exact"

    def __init__(self, law):
        self.law = law

    def logs(self, theta):
        """(ln L, (ln L)', (ln L)'') at theta."""
        law = self.law
        return law.log_laplace(theta), law.dlog_laplace(theta), law.d2log_laplace(theta)

    def se_m(self, theta):
        return 0.0


class _FiniteDiffEval(_ExactEval):
    mode = "finite-difference"

    def logs(self, theta):
        theta = np.asarray(theta, dtype=float)
        out = np.empty((3,) + theta.shape)
        for idx, t in np.ndenumerate(theta):
            lval = float(self.law.laplace(t))
            d1, d2 = numeric_derivatives(self.law.laplace, float(t))
            out[(0,) + idx] = math.log(lval)
            out[(1,) + idx] = d1 / lval
            out[(2,) + idx] = d2 / lval - (d1 / lval) ** 2
        if theta.ndim == 0:
            return float(out[0]), float(out[1]), float(out[2])
        return out[0], out[1], out[2]


class _MonteCarloEval(_ExactEval):
    """L estimated from a fixed sample of realizations (common random numbers).

    With the sample frozen, the estimate is a smooth function of theta whose
    derivatives are exact sample averages of rho^theta (ln rho)^k.
    """
    mode = "monte-carlo"

    def __init__(self, law, replicas, seed):
        super().__init__(law)
        rng = np.random.default_rng(seed)
        if law.finite_support:
            atoms = law.finite_atoms(rng.random((replicas, law.n_uniforms)))
            owner = np.repeat(np.arange(replicas), law.parts)
            atoms = atoms.ravel()
        else:
            chunks, owners = [], []
            s = np.ones(replicas)
            active = np.arange(replicas)
            while active.size:
                v, rem = law.break_stick(rng.random(active.size))
                chunks.append(s[active] * v)
                owners.append(active)
                s[active] *= rem
                active = active[s[active] >= 1e-12]
            atoms, owner = np.concatenate(chunks), np.concatenate(owners)
        keep = atoms > 0
        self.atoms = atoms[keep]
        self.logatoms = np.log(self.atoms)
        self.owner = owner[keep]
        self.replicas = replicas

    def _sums(self, theta):
        w = np.exp(theta * self.logatoms)
        per = [np.bincount(self.owner, weights=w * self.logatoms ** p, minlength=self.replicas)
               for p in range(3)]
        return per

    def logs(self, theta):
        theta = np.asarray(theta, dtype=float)
        if theta.ndim:
            res = [self.logs(float(t)) for t in theta.ravel()]
            return tuple(np.array(r).reshape(theta.shape) for r in zip(*res))
        x0, x1, x2 = (s.mean() for s in self._sums(float(theta)))
        return math.log(x0), x1 / x0, x2 / x0 - (x1 / x0) ** 2

    def se_m(self, theta):
        x0, x1, _ = self._sums(float(theta))
        a0, a1 = x0.mean(), x1.mean()
        m = -a1 / a0
        return float(np.std(x1 + m * x0, ddof=1) / (a0 * math.sqrt(self.replicas)))

    def se_phi(self, theta):
        x0, x1, _ = self._sums(float(theta))
        a0, a1 = x0.mean(), x1.mean()
        m = -a1 / a0
        return float(np.std(x0 * (1 - theta * m) - theta * x1, ddof=1)
                     / (a0 * math.sqrt(self.replicas)))


@dataclass(frozen=True)
class AnalyticProfile:
    law: object
    theta_lower: float
    theta_upper: float
    m_lower: float
    m_upper: float
    derivative_mode: str
    _eval: object = field(repr=False, compare=False)

    # evaluators below do no domain checking; see rate_phi / mean_fn / var_fn
    def log_L(self, theta):
        return self._eval.logs(theta)[0]

    def L(self, theta):
        return np.exp(self.log_L(theta))

    def dL(self, theta):
        lg, d1, _ = self._eval.logs(theta)
        return np.exp(lg) * d1

    def d2L(self, theta):
        lg, d1, d2 = self._eval.logs(theta)
        return np.exp(lg) * (d2 + d1 * d1)

    def m(self, theta):
        return -self._eval.logs(theta)[1]

    def v(self, theta):
        return self._eval.logs(theta)[2]

    def phi(self, theta):
        lg, d1, _ = self._eval.logs(theta)
        return lg - np.asarray(theta) * d1

    def m_standard_error(self, theta):
        return self._eval.se_m(theta)

    def contains(self, theta):
        return self.theta_lower < theta <= self.theta_upper + _EDGE_TOL

    def grid(self, points=64, margin=1e-3):
        """Interior grid of (theta_lower, theta_upper); capped when theta_upper is infinite."""
        hi = self.theta_upper if math.isfinite(self.theta_upper) else THETA_CAP
        return np.linspace(self.theta_lower + margin, hi - margin, points)


@functools.lru_cache(maxsize=64)
def _exact_profile(law_string, theta_cap):
    return build_profile(law_string, theta_cap=theta_cap, _cache=False)


def build_profile(law, mode="exact", theta_cap=THETA_CAP, mc_replicas=20000, seed=0,
                  max_phi_se=1e-2, _cache=True):
    """Build the analytic profile of a splitting law.

    ``mode`` selects how L', L'' are obtained: ``exact`` (closed-form
    log-derivatives), ``finite-difference`` (numeric differentiation of the
    closed form) or ``monte-carlo`` (sample averages over ``mc_replicas``
    realizations).  Exact profiles are cached per law string.
    """
    law = parse_law(law)
    if mode == "exact" and _cache:
        return _exact_profile(law.law_string, float(theta_cap))
    if mode == "exact":
        ev = _ExactEval(law)
    elif mode == "finite-difference":
        ev = _FiniteDiffEval(law)
    elif mode == "monte-carlo":
        ev = _MonteCarloEval(law, mc_replicas, seed)
    else:
        raise ValueError(f"unknown derivative mode {mode!r}")

    def phi(t):
        lg, d1, _ = ev.logs(t)
        val = float(lg - t * d1)
        if not math.isfinite(val):
            raise ProfileBuildError(f"phi({t}) is not finite")
        return val

    lo = max(law.theta_lower, 1.0) + 1e-9
    if phi(lo) <= 0:
        raise ProfileBuildError("phi(1) must be positive; law is degenerate")
    if phi(theta_cap) > 0:
        theta_upper = math.inf
        m_lower = float(-ev.logs(theta_cap)[1])
    else:
        theta_upper = optimize.brentq(phi, lo, theta_cap, xtol=1e-13, rtol=1e-15, maxiter=500)
        m_lower = float(-ev.logs(theta_upper)[1])
    if mode == "monte-carlo":
        if law.finite_support:
            m_upper = float(-ev.logs(law.theta_lower)[1])
        else:
            m_upper = math.inf
        if math.isfinite(theta_upper) and ev.se_phi(theta_upper) > max_phi_se:
            raise ProfileBuildError(
                f"Monte Carlo error on phi at theta*={theta_upper:.4g} exceeds {max_phi_se}")
    else:
        m_upper = law.m_upper
    return AnalyticProfile(law, float(law.theta_lower), float(theta_upper), m_lower,
                           float(m_upper), ev.mode, ev)


def _check(profile, theta):
    if not profile.contains(theta):
        raise DomainError(
            f"theta={theta} outside ({profile.theta_lower}, {profile.theta_upper})")


def rate_phi(profile, theta):
    _check(profile, theta)
    return float(profile.phi(theta))


def mean_fn(profile, theta):
    _check(profile, theta)
    return float(profile.m(theta))


def var_fn(profile, theta):
    _check(profile, theta)
    return float(profile.v(theta))


def m_inverse(profile, x):
    """theta in (theta_lower, theta_upper) with m(theta) = x."""
    if not profile.m_lower < x < profile.m_upper:
        raise DomainError(f"x={x} outside (m_lower, m_upper) = ({profile.m_lower}, {profile.m_upper})")
    lo = profile.theta_lower if profile.law.finite_support else profile.theta_lower + 1e-300
    if math.isfinite(profile.theta_upper):
        hi = profile.theta_upper
    else:
        hi = THETA_CAP
        while profile.m(hi) >= x:
            hi *= 2
            if hi > 1e8:
                raise DomainError(f"no theta with m(theta)={x} below 1e8")
    with np.errstate(over="ignore", divide="ignore"):
        return float(optimize.brentq(lambda t: float(profile.m(t)) - x, lo, hi,
                                     xtol=1e-300, rtol=4 * np.finfo(float).eps, maxiter=2000))


def gamma_tail_sum(theta, j):
    """sum_{l >= j} Gamma(l - theta) / l!  for 0 < theta < j.

    Uses the telescoping identity
    Gamma(l-theta)/Gamma(l) - Gamma(l+1-theta)/Gamma(l+1) = theta Gamma(l-theta)/l!,
    which sums to Gamma(j - theta) / (theta (j-1)!).
    """
    if int(j) != j or j < 1:
        raise DomainError("j must be a positive integer")
    if not 0 < theta < j:
        raise DomainError(f"need 0 < theta < j, got theta={theta}, j={j}")
    return math.exp(special.gammaln(j - theta) - special.gammaln(j) - math.log(theta))


class Theorem1Constants(NamedTuple):
    tail_constant: float
    exact_j_constant: float
    theta: float
    phi: float
    v: float


def regime_theta(profile, a):
    """theta = m^{-1}(1/a), raising RegimeError when a is not admissible."""
    lo_a = 1 / profile.m_upper if profile.m_upper > 0 else math.inf
    hi_a = 1 / profile.m_lower if profile.m_lower > 0 else math.inf
    if not lo_a < a < hi_a:
        raise RegimeError(f"a={a} outside admissible interval ({lo_a}, {hi_a})")
    if profile.derivative_mode == "monte-carlo" and math.isfinite(profile.theta_upper):
        se = profile.m_standard_error(profile.theta_upper)
        if abs(1 / a - profile.m_lower) <= 3 * se:
            raise RegimeError(f"a={a} is within Monte Carlo error of the admissibility edge")
    return m_inverse(profile, 1 / a)


def theorem1_constants(profile, a, b, j):
    """Limit constants of the law of large numbers in the (a, b) regime.

    Returns the constants multiplying W(theta) in the limits of
    sqrt(k) e^{-phi k} Nbar_{n, j-1} and sqrt(k) e^{-phi k} N_{n, j}.
    """
    theta = regime_theta(profile, a)
    if not j > theta:
        raise DomainError(f"need j > theta, got j={j}, theta={theta}")
    v = float(profile.v(theta))
    norm = math.exp(-theta * b / a) / math.sqrt(2 * math.pi * v)
    tail = gamma_tail_sum(theta, j) * norm
    exact = math.exp(special.gammaln(j - theta) - special.gammaln(j + 1)) * norm
    return Theorem1Constants(tail, exact, theta, float(profile.phi(theta)), v)
