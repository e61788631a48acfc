"""Splitting laws: random probability measures on {1, 2, ...} that split a node's mass.

Four families are shipped:

* ``pd1``                 Poisson-Dirichlet PD(1), i.e. GEM(1) stick-breaking
* ``gem:<gamma>``         GEM(gamma), stick-breaking with Beta(1, gamma) sticks
* ``dirichlet:<m>:<a>``   symmetric Dirichlet(a, ..., a) on m atoms
* ``beta:<a>:<b>``        two atoms (V, 1 - V) with V ~ Beta(a, b)

Each law has two faces: vectorized atom generation from uniforms (for the
cascade simulator) and the closed form of L(theta) = E sum_j rho_j^theta with
its first two log-derivatives (for the analytics).
"""
from dataclasses import dataclass, field
import math
from typing import NamedTuple

import numpy as np
from scipy import special

from .errors import AtomCapExceeded, DomainError, GeometricLawError, InvalidLawError

DEFAULT_MAX_ATOMS = 10**6


def _check_param(name, value):
    value = float(value)
    if math.isnan(value) or value <= 0:
        raise InvalidLawError(f"{name} must be a positive real, got {value}")
    if math.isinf(value):
        # infinite concentration collapses to an equal split or a point mass
        raise GeometricLawError(f"{name}=inf degenerates to a geometric splitting law")
    return value


class SplittingLaw:
    """Common interface; concrete laws are frozen dataclasses below."""

    stick_breaking = False
    parts = None  # number of atoms for finite-support laws
    theta_lower = 0.0

    @property
    def finite_support(self):
        return self.parts is not None

    # --- analytic face -------------------------------------------------
    def log_laplace(self, theta):
        raise NotImplementedError

    def dlog_laplace(self, theta):
        raise NotImplementedError

    def d2log_laplace(self, theta):
        raise NotImplementedError

    def laplace(self, theta):
        return np.exp(self.log_laplace(theta))

    @property
    def m_upper(self):
        """lim m(theta) as theta decreases to theta_lower."""
        if self.finite_support:
            return float(-self.dlog_laplace(0.0))
        return math.inf

    def __str__(self):
        return self.law_string


@dataclass(frozen=True)
class Gem(SplittingLaw):
    concentration: float = 1.0
    stick_breaking = True

    def __post_init__(self):
        object.__setattr__(self, "concentration", _check_param("concentration", self.concentration))

    @property
    def law_string(self):
        return f"gem:{self.concentration:g}"

    def break_stick(self, u):
        """Return (V, 1 - V) for V ~ Beta(1, gamma) driven by uniforms u."""
        lr = np.log(u) / self.concentration
        return -np.expm1(lr), np.exp(lr)

    def log_laplace(self, theta):
        g = self.concentration
        theta = np.asarray(theta, dtype=float)
        return np.log(g) + special.betaln(1.0 + theta, g) + np.log(g + theta) - np.log(theta)

    def dlog_laplace(self, theta):
        g = self.concentration
        theta = np.asarray(theta, dtype=float)
        return (special.digamma(1.0 + theta) - special.digamma(1.0 + theta + g)
                + 1.0 / (g + theta) - 1.0 / theta)

    def d2log_laplace(self, theta):
        g = self.concentration
        theta = np.asarray(theta, dtype=float)
        return (special.polygamma(1, 1.0 + theta) - special.polygamma(1, 1.0 + theta + g)
                - 1.0 / (g + theta) ** 2 + 1.0 / theta ** 2)


@dataclass(frozen=True)
class PoissonDirichlet1(Gem):
    """PD(1); atoms in stick-breaking order, which is GEM(1)."""
    concentration: float = field(default=1.0, init=False)

    def __post_init__(self):
        pass

    @property
    def law_string(self):
        return "pd1"

    def log_laplace(self, theta):
        return -np.log(np.asarray(theta, dtype=float))

    def dlog_laplace(self, theta):
        return -1.0 / np.asarray(theta, dtype=float)

    def d2log_laplace(self, theta):
        return 1.0 / np.asarray(theta, dtype=float) ** 2


@dataclass(frozen=True)
class DirichletSymmetric(SplittingLaw):
    parts: int = 2
    alpha: float = 1.0

    def __post_init__(self):
        if int(self.parts) != self.parts or self.parts < 2:
            raise InvalidLawError(f"parts must be an integer >= 2, got {self.parts}")
        object.__setattr__(self, "parts", int(self.parts))
        object.__setattr__(self, "alpha", _check_param("alpha", self.alpha))

    @property
    def law_string(self):
        return f"dirichlet:{self.parts}:{self.alpha:g}"

    n_uniforms = property(lambda self: self.parts)

    def finite_atoms(self, u):
        """u has shape (N, parts); returns atoms of the same shape, rows summing to 1."""
        g = special.gammaincinv(self.alpha, u)
        return g / g.sum(axis=-1, keepdims=True)

    def log_laplace(self, theta):
        m, a = self.parts, self.alpha
        theta = np.asarray(theta, dtype=float)
        return (np.log(m) + special.gammaln(a + theta) + special.gammaln(m * a)
                - special.gammaln(a) - special.gammaln(m * a + theta))

    def dlog_laplace(self, theta):
        m, a = self.parts, self.alpha
        theta = np.asarray(theta, dtype=float)
        return special.digamma(a + theta) - special.digamma(m * a + theta)

    def d2log_laplace(self, theta):
        m, a = self.parts, self.alpha
        theta = np.asarray(theta, dtype=float)
        return special.polygamma(1, a + theta) - special.polygamma(1, m * a + theta)


@dataclass(frozen=True)
class BetaSplit(SplittingLaw):
    alpha: float = 1.0
    beta: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "alpha", _check_param("alpha", self.alpha))
        object.__setattr__(self, "beta", _check_param("beta", self.beta))

    parts = 2
    n_uniforms = 1

    @property
    def law_string(self):
        return f"beta:{self.alpha:g}:{self.beta:g}"

    def finite_atoms(self, u):
        u = np.asarray(u, dtype=float)[..., 0]
        v = special.betaincinv(self.alpha, self.beta, u)
        # take the small side from the matching inverse to keep relative precision
        w = special.betaincinv(self.beta, self.alpha, 1.0 - u)
        lo = v <= 0.5
        first = np.where(lo, v, 1.0 - w)
        second = np.where(lo, 1.0 - v, w)
        return np.stack([first, second], axis=-1)

    def _terms(self, theta):
        a, b = self.alpha, self.beta
        theta = np.asarray(theta, dtype=float)
        l1 = special.betaln(a + theta, b) - special.betaln(a, b)
        l2 = special.betaln(a, b + theta) - special.betaln(a, b)
        d1 = special.digamma(a + theta) - special.digamma(a + b + theta)
        d2 = special.digamma(b + theta) - special.digamma(a + b + theta)
        e1 = special.polygamma(1, a + theta) - special.polygamma(1, a + b + theta)
        e2 = special.polygamma(1, b + theta) - special.polygamma(1, a + b + theta)
        return l1, l2, d1, d2, e1, e2

    def log_laplace(self, theta):
        l1, l2, *_ = self._terms(theta)
        return np.logaddexp(l1, l2)

    def dlog_laplace(self, theta):
        l1, l2, d1, d2, _, _ = self._terms(theta)
        w1 = special.expit(l1 - l2)
        return w1 * d1 + (1 - w1) * d2

    def d2log_laplace(self, theta):
        l1, l2, d1, d2, e1, e2 = self._terms(theta)
        w1 = special.expit(l1 - l2)
        mean = w1 * d1 + (1 - w1) * d2
        return w1 * (d1 ** 2 + e1) + (1 - w1) * (d2 ** 2 + e2) - mean ** 2


def parse_law(text):
    """Parse ``pd1``, ``gem:<g>``, ``dirichlet:<m>:<a>`` or ``beta:<a>:<b>``."""
    if isinstance(text, SplittingLaw):
        return text
    parts = str(text).strip().lower().split(":")
    name, args = parts[0], parts[1:]
    try:
        if name == "pd1" and not args:
            return PoissonDirichlet1()
        if name == "gem" and len(args) == 1:
            return Gem(float(args[0]))
        if name == "dirichlet" and len(args) == 2:
            m = float(args[0])
            if m != int(m):
                raise InvalidLawError(f"dirichlet parts must be an integer, got {args[0]}")
            return DirichletSymmetric(int(m), float(args[1]))
        if name == "beta" and len(args) == 2:
            return BetaSplit(float(args[0]), float(args[1]))
    except ValueError as exc:
        if isinstance(exc, InvalidLawError):
            raise
        raise InvalidLawError(f"cannot parse law {text!r}: {exc}") from None
    raise InvalidLawError(f"unknown law {text!r}; expected pd1, gem:<g>, dirichlet:<m>:<a>, beta:<a>:<b>")


SHIPPED_LAWS = ("pd1", "gem:0.5", "gem:2", "dirichlet:2:1", "dirichlet:3:0.5", "beta:1:1", "beta:2:0.5")


# --- lazy atom streams ---------------------------------------------------

class AtomStream:
    """Atoms of one realization of the law, generated on demand.

    ``rng`` is anything with a ``random(size=None)`` method: a numpy Generator
    or a :class:`~cascade_occupancy._rng.KeyedStream`.
    """

    def __init__(self, law, rng, max_atoms=DEFAULT_MAX_ATOMS):
        self.law = law
        self.rng = rng
        self.max_atoms = max_atoms
        self.atoms = []
        self.cumulative = 0.0
        self.remaining = 1.0  # unbroken stick, stick-breaking laws only
        self.exhausted = False

    def extend(self, coverage):
        if not coverage < 1:
            raise DomainError("coverage must be < 1")
        law = self.law
        if law.finite_support:
            if not self.exhausted:
                u = np.asarray(self.rng.random(law.n_uniforms), dtype=float).reshape(1, -1)
                atoms = law.finite_atoms(u)[0]
                self.atoms.extend(float(a) for a in atoms if a > 0)
                self.cumulative = float(np.sum(self.atoms))
                self.remaining = 0.0
                self.exhausted = True
            return self
        while not self.atoms or self.cumulative < coverage:
            if len(self.atoms) >= self.max_atoms:
                raise AtomCapExceeded(
                    f"{self.max_atoms} atoms emitted, cumulative {self.cumulative:.6g} < {coverage}")
            v, rem = law.break_stick(self.rng.random())
            atom = self.remaining * float(v)
            self.remaining *= float(rem)
            if atom > 0:
                self.atoms.append(atom)
                self.cumulative += atom
            elif self.remaining == 0.0:
                self.exhausted = True
                break
        return self

    def __len__(self):
        return len(self.atoms)


def sample_atoms_until(law, rng, coverage, max_atoms=DEFAULT_MAX_ATOMS):
    """Lazily realize the law until the emitted atoms cover ``coverage`` of the mass."""
    law = parse_law(law)
    return AtomStream(law, rng, max_atoms).extend(coverage)


def laplace_transform(law, theta):
    """L(theta) = E sum_j rho_j^theta, from the law's closed form."""
    law = parse_law(law)
    if theta <= 0:
        raise DomainError("theta must be positive")
    if theta <= law.theta_lower:
        return math.inf
    return float(law.laplace(theta))


class MCLaplace(NamedTuple):
    estimate: float
    standard_error: float
    bias_bound: float
    bias_rigorous: bool


def monte_carlo_laplace(law, theta, replicas, rng, max_atoms=DEFAULT_MAX_ATOMS):
    """Monte Carlo estimate of L(theta) over independent realizations.

    Stick-breaking realizations are truncated: for theta > 1 once the unbroken
    stick s satisfies s^theta < 1e-10 (the neglected sum is at most s^theta);
    for theta <= 1 once s < 1e-12, and the reported bias bound
    s^theta * (atoms emitted)^(1 - theta) is only a heuristic.
    """
    law = parse_law(law)
    if theta <= law.theta_lower:
        raise DomainError(f"theta={theta} <= theta_lower={law.theta_lower}")
    if replicas < 1:
        raise ValueError("replicas must be >= 1")
    if law.finite_support:
        atoms = law.finite_atoms(rng.random((replicas, law.n_uniforms)))
        vals = np.sum(atoms ** theta, axis=1)
        return MCLaplace(float(vals.mean()), float(vals.std(ddof=1) / math.sqrt(replicas)) if replicas > 1 else math.inf, 0.0, True)

    total = np.zeros(replicas)
    s = np.ones(replicas)
    count = np.zeros(replicas)
    active = np.arange(replicas)
    j = 0
    while active.size:
        j += 1
        if j > max_atoms:
            raise AtomCapExceeded(f"{max_atoms} atoms did not reach the truncation level")
        v, rem = law.break_stick(rng.random(active.size))
        total[active] += (s[active] * v) ** theta
        s[active] *= rem
        count[active] += 1
        if theta > 1:
            keep = s[active] ** theta >= 1e-10
        else:
            keep = s[active] >= 1e-12
        active = active[keep]
    if theta > 1:
        bias, rigorous = float(np.mean(s ** theta)), True
    else:
        bias, rigorous = float(np.mean(s ** theta * count ** (1 - theta))), False
    se = float(total.std(ddof=1) / math.sqrt(replicas)) if replicas > 1 else math.inf
    return MCLaplace(float(total.mean()), se, bias, rigorous)
