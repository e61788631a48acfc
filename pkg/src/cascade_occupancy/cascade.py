"""Multiplicative cascade: lazy occupied trees, truncated mass trees, martingales.

A node at generation k is identified by its path (i_1, ..., i_k) and carries a
64-bit key; its splitting measure rho(node) and the allocation of its balls
are pure functions of that key (see ``_rng``).  Two consequences:

* the occupied tree (balls) and the truncated mass tree (masses) built from
  the same seed see the same cascade realization;
* nodes can be expanded in any order, in batches, or in parallel, with
  bit-identical results.

Nodes are processed a generation at a time as flat numpy arrays.
"""
from dataclasses import dataclass, field
import math
from typing import Callable, NamedTuple, Optional

import numpy as np
from scipy import integrate

from . import _rng
from .analytics import build_profile, gamma_tail_sum
from .errors import (AtomCapExceeded, DecayViolation, DepthCapExceeded, DomainError,
                     NodeCapExceeded, TruncationTooCoarse, WindowTruncated)
from .laws import DEFAULT_MAX_ATOMS, parse_law
from .occupancy import DEFAULT_J, OccupancyStats, binomial_icdf, poisson_tail, stats_from_counts

DEFAULT_SEED = 20070101
DEFAULT_NODE_CAP = 50_000_000


def _root(seed, replica, key):
    return np.uint64(key) if key is not None else _rng.root_key(seed, replica)


# --- one-generation expansion -----------------------------------------------

class Children(NamedTuple):
    parent: np.ndarray   # row of the parent in the input arrays
    index: np.ndarray    # 1-based child index
    key: np.ndarray
    mass: np.ndarray
    count: np.ndarray


def allocate_balls(law, keys, masses, counts, max_atoms=DEFAULT_MAX_ATOMS):
    """Split each node's balls among its children (vectorized over nodes).

    Child j receives Binomial(remaining balls, rho_j / remaining mass).  For
    stick-breaking laws that fraction is the stick variable V_j itself.  Atoms
    are generated only until every ball has been placed, and only occupied
    children are returned, sorted by (parent, index).
    """
    keys = np.asarray(keys, dtype=np.uint64)
    masses = np.asarray(masses, dtype=float)
    left = np.asarray(counts, dtype=np.int64).copy()
    parts, idxs, ms, cs = [], [], [], []
    active = np.flatnonzero(left > 0)
    if law.finite_support:
        m = law.parts
        atoms = np.empty((keys.size, m))
        if active.size:
            u = _rng.uniforms(keys[active, None], _rng.TAG_ATOM, np.arange(m, dtype=np.uint64)[None, :])
            atoms[active] = law.finite_atoms(u)
        suffix = np.cumsum(atoms[:, ::-1], axis=1)[:, ::-1]
        for j in range(1, m + 1):
            if not active.size:
                break
            if j == m:
                c = left[active].copy()
            else:
                frac = np.divide(atoms[active, j - 1], suffix[active, j - 1],
                                 out=np.zeros(active.size), where=suffix[active, j - 1] > 0)
                ub = _rng.uniforms(keys[active], _rng.TAG_BALL, j - 1)
                c = binomial_icdf(ub, left[active], np.minimum(frac, 1.0))
            hit = c > 0
            a = active[hit]
            parts.append(a)
            idxs.append(np.full(a.size, j, dtype=np.int64))
            ms.append(masses[a] * atoms[a, j - 1])
            cs.append(c[hit])
            left[active] -= c
            active = active[left[active] > 0]
    else:
        stick = np.ones(keys.size)
        j = 0
        while active.size:
            j += 1
            if j > max_atoms:
                raise AtomCapExceeded(f"more than {max_atoms} atoms needed to place all balls")
            v, rem = law.break_stick(_rng.uniforms(keys[active], _rng.TAG_ATOM, j - 1))
            c = binomial_icdf(_rng.uniforms(keys[active], _rng.TAG_BALL, j - 1), left[active], v)
            hit = c > 0
            if hit.any():
                a = active[hit]
                parts.append(a)
                idxs.append(np.full(a.size, j, dtype=np.int64))
                ms.append(masses[a] * stick[a] * v[hit])
                cs.append(c[hit])
            stick[active] *= rem
            left[active] -= c
            active = active[left[active] > 0]
    if not parts:
        e = np.empty(0, dtype=np.int64)
        return Children(e, e, np.empty(0, dtype=np.uint64), np.empty(0), e)
    parent = np.concatenate(parts)
    index = np.concatenate(idxs)
    order = np.lexsort((index, parent))
    parent, index = parent[order], index[order]
    mass = np.concatenate(ms)[order]
    count = np.concatenate(cs)[order]
    return Children(parent, index, _rng.child_keys(keys[parent], index), mass, count)


def split_masses(law, keys, masses, p_min, max_atoms=DEFAULT_MAX_ATOMS):
    """Realize children of each node down to mass p_min.

    Returns (children with mass >= p_min, masses of generated children below
    p_min, masses of unbroken stick remainders).  Stick-breaking stops once the
    unbroken remainder of a node is below p_min.
    """
    keys = np.asarray(keys, dtype=np.uint64)
    masses = np.asarray(masses, dtype=float)
    parts, idxs, ms = [], [], []
    small = []
    if law.finite_support:
        m = law.parts
        u = _rng.uniforms(keys[:, None], _rng.TAG_ATOM, np.arange(m, dtype=np.uint64)[None, :])
        child = masses[:, None] * law.finite_atoms(u)
        big = child >= p_min
        r, c = np.nonzero(big)
        parts.append(r)
        idxs.append(c + 1)
        ms.append(child[big])
        tiny = child[~big]
        small.append(tiny[tiny > 0])
        lumps = np.empty(0)
    else:
        stick = np.ones(keys.size)
        active = np.flatnonzero(masses >= p_min)
        j = 0
        while active.size:
            j += 1
            if j > max_atoms:
                raise AtomCapExceeded(f"more than {max_atoms} atoms needed to reach p_min={p_min}")
            v, rem = law.break_stick(_rng.uniforms(keys[active], _rng.TAG_ATOM, j - 1))
            atom = masses[active] * stick[active] * v
            big = atom >= p_min
            parts.append(active[big])
            idxs.append(np.full(int(big.sum()), j, dtype=np.int64))
            ms.append(atom[big])
            tiny = atom[~big]
            small.append(tiny[tiny > 0])
            stick[active] *= rem
            active = active[masses[active] * stick[active] >= p_min]
        lumps = masses * stick
        lumps = lumps[lumps > 0]
    parent = np.concatenate(parts) if parts else np.empty(0, dtype=np.int64)
    index = np.concatenate(idxs) if idxs else np.empty(0, dtype=np.int64)
    mass = np.concatenate(ms) if ms else np.empty(0)
    order = np.lexsort((index, parent))
    parent, index, mass = parent[order], index[order], mass[order]
    frozen = np.concatenate(small) if small else np.empty(0)
    ch = Children(parent, index, _rng.child_keys(keys[parent], index), mass,
                  np.zeros(parent.size, dtype=np.int64))
    return ch, frozen, lumps


# --- occupied tree ------------------------------------------------------------

@dataclass
class Layer:
    """Realized occupied nodes of one generation.

    Nodes holding a single ball are not expanded further (their ball sits in a
    single box at every deeper generation); ``carried`` counts such boxes
    inherited from shallower generations, per replica.
    """
    key: np.ndarray
    parent: np.ndarray
    index: np.ndarray
    mass: np.ndarray
    count: np.ndarray
    replica: np.ndarray
    carried: np.ndarray
    labels: Optional[list] = None
    carried_labels: Optional[list] = None


@dataclass
class OccupiedTree:
    law: object
    n: int
    layers: list
    replicas: int = 1

    @property
    def k_max(self):
        return len(self.layers) - 1

    def box_counts(self, k, replica=0):
        """Ball counts of all occupied boxes at generation k (carried singletons included)."""
        lay = self.layers[k]
        sel = lay.count[lay.replica == replica]
        return np.concatenate([sel, np.ones(int(lay.carried[replica]), dtype=np.int64)])

    def stats(self, k, J=DEFAULT_J, replica=0):
        return stats_from_counts(self.box_counts(k, replica), J)

    def batch_stats(self, k, J=DEFAULT_J):
        """OccupancyStats arrays for all replicas at once: (exact[R, J], tail[R, J])."""
        lay = self.layers[k]
        R = self.replicas
        capped = np.minimum(lay.count, J + 1)
        hist = np.bincount(lay.replica * (J + 2) + capped, minlength=R * (J + 2)).reshape(R, J + 2)
        hist[:, 1] += lay.carried
        exact = hist[:, 1:J + 1]
        above = np.cumsum(hist[:, ::-1], axis=1)[:, ::-1]
        return exact, above[:, 1:J + 1]

    def path(self, k, i):
        """NodePath (tuple of 1-based child indices) of node i in layer k."""
        out = []
        while k > 0:
            lay = self.layers[k]
            out.append(int(lay.index[i]))
            i = int(lay.parent[i])
            k -= 1
        return tuple(reversed(out))

    def blocks(self, k):
        """Ball labels grouped by box at generation k (label-tracking trees only)."""
        lay = self.layers[k]
        if lay.labels is None:
            raise ValueError("tree was grown without label tracking")
        return [tuple(int(x) for x in b) for b in lay.labels] + [(int(x),) for x in lay.carried_labels]


def _split_labels(keys, labels, ch, parent_count):
    """Hand each parent's labels to its children: uniform shuffle, then cut by counts."""
    out = [None] * ch.parent.size
    start = 0
    bounds = np.flatnonzero(np.diff(ch.parent)) + 1
    for lo, hi in zip(np.r_[0, bounds], np.r_[bounds, ch.parent.size]):
        if hi <= lo:
            continue
        p = int(ch.parent[lo])
        lab = labels[p]
        u = _rng.uniforms(keys[p], _rng.TAG_LABEL, np.arange(lab.size, dtype=np.uint64))
        shuffled = lab[np.argsort(u, kind="stable")]
        cuts = np.cumsum(ch.count[lo:hi])[:-1]
        for off, piece in enumerate(np.split(shuffled, cuts)):
            out[lo + off] = np.sort(piece)
    return out


def grow_occupied_tree(law, n, k_max, seed=DEFAULT_SEED, replica=0, *, replicas=1, key=None,
                       track_labels=False, node_cap=DEFAULT_NODE_CAP, max_atoms=DEFAULT_MAX_ATOMS):
    """Throw n balls down the cascade and realize every occupied node to depth k_max.

    With ``replicas > 1`` independent cascades (replica, replica+1, ...) are
    grown side by side in the same arrays.
    """
    law = parse_law(law)
    if n < 1 or k_max < 1:
        raise ValueError("need n >= 1 and k_max >= 1")
    if track_labels and replicas != 1:
        raise ValueError("label tracking is single-replica")
    if key is not None:
        roots = np.atleast_1d(np.asarray(key, dtype=np.uint64))
    else:
        roots = np.array([_rng.root_key(seed, replica + r) for r in range(replicas)], dtype=np.uint64)
    R = roots.size
    lay = Layer(roots, np.full(R, -1), np.zeros(R, dtype=np.int64), np.ones(R),
                np.full(R, n, dtype=np.int64), np.arange(R), np.zeros(R, dtype=np.int64))
    if track_labels:
        lay.labels = [np.arange(1, n + 1)]
        lay.carried_labels = []
    layers = [lay]
    total = R
    for k in range(1, k_max + 1):
        prev = layers[-1]
        single = prev.count == 1
        carried = prev.carried + np.bincount(prev.replica[single], minlength=R)
        grow = np.flatnonzero(~single)
        ch = allocate_balls(law, prev.key[grow], prev.mass[grow], prev.count[grow], max_atoms)
        parent = grow[ch.parent]
        new = Layer(ch.key, parent, ch.index, ch.mass, ch.count, prev.replica[parent], carried)
        if track_labels:
            sub = [prev.labels[i] for i in grow]
            new.labels = _split_labels(prev.key[grow], sub, ch, None)
            new.carried_labels = prev.carried_labels + [int(prev.labels[i][0]) for i in np.flatnonzero(single)]
        total += ch.key.size
        if total > node_cap:
            raise NodeCapExceeded(node_cap, k)
        layers.append(new)
    return OccupiedTree(law, int(n), layers, R)


@dataclass
class GenerationStats:
    k: int
    stats: OccupancyStats
    W: dict = field(default_factory=dict)        # theta -> MartingaleEstimate
    moments: Optional[object] = None             # GenerationMoments


def simulate_occupancy(law, n, k_max, J=DEFAULT_J, seed=DEFAULT_SEED, replica=0,
                       mode="counts-only", p_min=None, thetas=(), profile=None,
                       node_cap=DEFAULT_NODE_CAP):
    """Per-generation occupancy statistics for k = 1..k_max of one replica.

    With ``p_min`` a truncated mass tree of the same realization is built and
    W^(k)(theta) for ``thetas`` plus mu, sigma2 at n balls are attached.
    """
    law = parse_law(law)
    if mode not in ("counts-only", "label-tracking"):
        raise ValueError(f"unknown mode {mode!r}")
    tree = grow_occupied_tree(law, n, k_max, seed, replica, track_labels=(mode == "label-tracking"),
                              node_cap=node_cap)
    out = [GenerationStats(k, tree.stats(k, J)) for k in range(1, k_max + 1)]
    if p_min is not None:
        profile = profile or build_profile(law)
        mt = expand_mass_tree(law, k_max, p_min, seed, replica, node_cap=node_cap)
        mom = occupancy_moments(mt, n, (0,))
        ws = {th: martingale_W(mt, th, profile) for th in thetas}
        for g in out:
            g.moments = mom[g.k]
            g.W = {th: ws[th][g.k] for th in thetas}
    return out


# --- truncated mass tree ------------------------------------------------------------

@dataclass
class TruncatedMassTree:
    """All nodes of mass >= p_min down to generation k_max.

    Mass that falls below p_min is kept as frozen items: item i holds mass
    ``frozen_mass[i]``, lives from generation ``frozen_gen[i]`` on, and its
    unrealized subtree at generation k has undergone
    k - frozen_gen[i] + frozen_depth[i] further splits (depth 1 marks an
    unbroken stick remainder, which is itself a rescaled copy of the law).
    """
    law: object
    p_min: float
    masses: list        # per generation arrays of stored masses
    keys: list
    parents: list
    frozen_mass: np.ndarray
    frozen_gen: np.ndarray
    frozen_depth: np.ndarray

    @property
    def k_max(self):
        return len(self.masses) - 1

    def neglog(self, k):
        return -np.log(self.masses[k])

    def remainder(self, k):
        """r_k: total mass not stored at generation k."""
        return float(np.sum(self.frozen_mass[self.frozen_gen <= k]))

    def frozen(self, k):
        sel = self.frozen_gen <= k
        return self.frozen_mass[sel], k - self.frozen_gen[sel] + self.frozen_depth[sel]

    def node_count(self):
        return sum(m.size for m in self.masses)


def expand_mass_tree(law, k_max, p_min, seed=DEFAULT_SEED, replica=0, *, key=None,
                     node_cap=DEFAULT_NODE_CAP, max_atoms=DEFAULT_MAX_ATOMS):
    law = parse_law(law)
    if not 0 < p_min < 1:
        raise ValueError("p_min must lie in (0, 1)")
    if k_max < 1:
        raise ValueError("k_max must be >= 1")
    root = _root(seed, replica, key)
    masses, keys, parents = [np.ones(1)], [np.array([root], dtype=np.uint64)], [np.full(1, -1)]
    fm, fg, fd = [], [], []
    total = 1
    for k in range(1, k_max + 1):
        ch, small, lumps = split_masses(law, keys[-1], masses[-1], p_min, max_atoms)
        masses.append(ch.mass)
        keys.append(ch.key)
        parents.append(ch.parent)
        fm += [small, lumps]
        fg += [np.full(small.size, k), np.full(lumps.size, k)]
        fd += [np.zeros(small.size, dtype=np.int64), np.ones(lumps.size, dtype=np.int64)]
        total += ch.mass.size
        if total > node_cap:
            raise NodeCapExceeded(node_cap, k)
    return TruncatedMassTree(law, float(p_min), masses, keys, parents, np.concatenate(fm),
                             np.concatenate(fg).astype(np.int64), np.concatenate(fd))


class MartingaleEstimate(NamedTuple):
    """W^(k)(theta) on a truncated tree.

    ``stored`` sums the realized nodes; ``closure`` is the expected
    contribution of the frozen subtrees given their masses; ``error_bound``
    bounds what the stored sum misses (rigorous for theta > 1 only).
    """
    stored: float
    closure: float
    error_bound: float
    rigorous: bool

    @property
    def value(self):
        return self.stored + self.closure


def _profile_for(tree, profile):
    if profile is None:
        return build_profile(tree.law)
    return profile


def martingale_W(tree, theta, profile=None):
    """W^(k)(theta) = L(theta)^{-k} sum_i p_i(k)^theta for k = 0..k_max."""
    profile = _profile_for(tree, profile)
    if not profile.contains(theta):
        raise DomainError(f"theta={theta} outside ({profile.theta_lower}, {profile.theta_upper})")
    log_l = float(profile.log_L(theta))
    out = []
    for k in range(tree.k_max + 1):
        lm = np.log(tree.masses[k])
        stored = float(np.sum(np.exp(theta * lm - k * log_l)))
        sel = tree.frozen_gen <= k
        q = tree.frozen_mass[sel]
        origin = tree.frozen_gen[sel] - tree.frozen_depth[sel]
        closure = float(np.sum(np.exp(theta * np.log(q) - origin * log_l)))
        r = float(q.sum())
        if theta > 1:
            bound = math.exp(-k * log_l + (theta - 1) * math.log(tree.p_min)) * r
            rigorous = True
        else:
            bound = math.exp(-k * log_l) * r ** theta * max(tree.masses[k].size, 1) ** (1 - theta)
            rigorous = False
        out.append(MartingaleEstimate(stored, closure, bound, rigorous))
    return out


# --- occupancy moments on a mass tree -------------------------------------------------

class MomentEstimate(NamedTuple):
    """A sum over boxes at one generation.

    ``value`` is the sum over stored nodes and ``error_bound`` bounds the
    rest.  ``closure`` estimates the rest from the frozen items (exact for
    frozen atoms of that generation, conditional-expectation Taylor series for
    deeper subtrees) with ``closure_error`` its estimated error.
    """
    value: float
    error_bound: float
    closure: float
    closure_error: float

    @property
    def estimate(self):
        return self.value + self.closure


@dataclass
class GenerationMoments:
    k: int
    n: int
    mubar: dict      # j -> MomentEstimate
    sigma2: MomentEstimate
    remainder: float

    @property
    def mu(self):
        return self.mubar[0]


_TAYLOR_TERMS = 4


def _laplace_ints(law, top):
    return np.array([float(law.laplace(float(l))) if l > 1 else 1.0 for l in range(top + 1)])


def _series_closure(coef, x, depth, lap):
    """Per item: sum_l coef[l] x^l L(l)^depth, the conditional mean of a smooth sum over the subtree."""
    total = np.zeros(x.size)
    for l, c in coef.items():
        total += c * x ** l * lap[l] ** depth
    return total


def _mubar_closure(j, x, depth, lap):
    m = j + 1
    exact = depth == 0
    big = (~exact) & (x > 0.5)
    ser = ~exact & ~big
    val = np.zeros(x.size)
    err = np.zeros(x.size)
    val[exact] = poisson_tail(j, x[exact])
    coef = {l: (-1) ** (l - m) / (math.factorial(m - 1) * math.factorial(l - m) * l)
            for l in range(m, m + _TAYLOR_TERMS)}
    val[ser] = _series_closure(coef, x[ser], depth[ser], lap)
    lt = m + _TAYLOR_TERMS
    err[ser] = x[ser] ** lt * lap[lt] ** depth[ser] / (math.factorial(m - 1) * math.factorial(lt - m) * lt)
    # realized subtrees scatter around their conditional mean, driven by the
    # first random term of the series (x^2/2 for j = 0, x^m/m! otherwise)
    lead = x[ser] ** 2 / 2 if j == 0 else x[ser] ** m / math.factorial(m)
    spread = math.sqrt(float(np.sum(lead ** 2)))
    # subtrees too heavy for the series: bracket between the split and unsplit values
    if big.any():
        f = poisson_tail(j, x[big])
        lo, hi = (f, x[big]) if j == 0 else (np.zeros(f.size), f)
        val[big] = (lo + hi) / 2
        err[big] = (hi - lo) / 2
    return float(val.sum()), float(err.sum()) + spread


def _sigma_closure(x, depth, lap):
    exact = depth == 0
    big = (~exact) & (x > 0.5)
    ser = ~exact & ~big
    a = np.zeros(x.size)
    b = np.zeros(x.size)
    err = np.zeros(x.size)
    e = np.exp(-x[exact | big])
    a[exact | big] = -e * np.expm1(-x[exact | big])
    b[exact | big] = x[exact | big] * e
    err[big] = x[big]
    ca = {l: (-1) ** (l + 1) * (2 ** l - 1) / math.factorial(l) for l in range(1, _TAYLOR_TERMS + 1)}
    cb = {l: (-1) ** (l - 1) / math.factorial(l - 1) for l in range(1, _TAYLOR_TERMS + 1)}
    a[ser] = _series_closure(ca, x[ser], depth[ser], lap)
    b[ser] = _series_closure(cb, x[ser], depth[ser], lap)
    lt = _TAYLOR_TERMS + 1
    err[ser] = x[ser] ** lt * lap[lt] ** depth[ser] * (2 ** lt) / math.factorial(lt - 1)
    spread = 2 * math.sqrt(float(np.sum(x[ser] ** 4)))
    return float(a.sum()), float(b.sum()), float(err.sum()) + spread


def occupancy_moments(tree, n, j_list=(0,), tolerance=None):
    """mubar_j(n), mu(n), sigma2(n) of p(k) for every generation of a mass tree.

    Raises TruncationTooCoarse if ``tolerance`` is given and the rigorous
    bound n r_k exceeds it at some generation.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    lap = _laplace_ints(tree.law, max(j_list) + 1 + _TAYLOR_TERMS + 1)
    out = []
    for k in range(tree.k_max + 1):
        p = tree.masses[k]
        q, depth = tree.frozen(k)
        r = float(q.sum())
        if tolerance is not None and n * r > tolerance:
            raise TruncationTooCoarse(f"n r_k = {n * r:.3g} exceeds {tolerance} at generation {k}")
        x = n * q
        mb = {}
        for j in j_list:
            val = float(np.sum(poisson_tail(j, n * p)))
            cval, cerr = _mubar_closure(j, x, depth, lap)
            mb[j] = MomentEstimate(val, n * r, cval, cerr)
        y = n * p
        e = np.exp(-y)
        a_s = float(np.sum(-e * np.expm1(-y)))
        b_s = float(np.sum(y * e))
        a_c, b_c, err = _sigma_closure(x, depth, lap)
        stored = a_s - b_s * b_s / n
        full = (a_s + a_c) - (b_s + b_c) ** 2 / n
        sig = MomentEstimate(stored, 2 * n * r, full - stored, err)
        out.append(GenerationMoments(k, int(n), mb, sig, r))
    return out


# --- tilted measure and large deviations ---------------------------------------------------

def _gauss(x, var):
    return math.exp(-x * x / (2 * var)) / math.sqrt(2 * math.pi * var)


class TiltedWindow(NamedTuple):
    k: int
    value: float      # sqrt(k) Z_theta^(k)([x + k m - h, x + k m + h))
    target: float     # 2 h W g_theta(x / sqrt(k)), with W the tree's estimate of W^(k)


def tilted_mass(tree, theta, profile, k, lo, hi):
    """Z_theta^(k)([lo, hi)) over stored nodes."""
    y = tree.neglog(k)
    sel = (y >= lo) & (y < hi)
    return float(np.sum(np.exp(-theta * y[sel] - k * float(profile.log_L(theta)))))


def tilted_window_mass(tree, theta, profile, x, h, ks=None):
    profile = _profile_for(tree, profile)
    if not profile.contains(theta):
        raise DomainError(f"theta={theta} outside the admissible interval")
    if not 0 < h <= 1:
        raise ValueError("h must lie in (0, 1]")
    ks = range(1, tree.k_max + 1) if ks is None else ks
    m, v = float(profile.m(theta)), float(profile.v(theta))
    W = martingale_W(tree, theta, profile)
    out = []
    for k in ks:
        if k < 1:
            raise DomainError("k >= 1 required")
        hi = x + k * m + h
        if not tree.p_min < math.exp(-hi):
            raise WindowTruncated(f"p_min={tree.p_min} does not resolve the window up to e^-{hi:.3g}")
        val = math.sqrt(k) * tilted_mass(tree, theta, profile, k, hi - 2 * h, hi)
        out.append(TiltedWindow(k, val, 2 * h * W[k].value * _gauss(x / math.sqrt(k), v)))
    return out


@dataclass
class TestFunction:
    """A nonnegative test function with its decay certificate.

    Requires f(y) <= bound * y^alpha for y > y0 and f(y) <= bound * e^{beta y}
    for y < -y0 (beta > theta).  ``integral(theta)`` returns
    int f(y) e^{-theta y} dy; when omitted it is computed by quadrature.
    """
    f: Callable
    alpha: float
    beta: float
    bound: float = 1.0
    y0: float = 1.0
    integral: Optional[Callable] = None

    def check(self, theta, span=60.0, points=2001):
        if self.alpha <= 0 or self.beta <= theta:
            raise DecayViolation(f"need alpha > 0 and beta > theta={theta}")
        up = np.linspace(self.y0, self.y0 + span, points)
        down = -up
        fu, fd = np.asarray(self.f(up)), np.asarray(self.f(down))
        if np.any(fu > self.bound * up ** self.alpha * (1 + 1e-12)):
            raise DecayViolation("f grows faster than the declared polynomial envelope")
        if np.any(fd > self.bound * np.exp(self.beta * down) * (1 + 1e-12)):
            raise DecayViolation("f decays slower than the declared exponential envelope")

    def weighted_integral(self, theta):
        if self.integral is not None:
            return float(self.integral(theta))
        def g(y):
            fy = float(self.f(np.array([y]))[0])
            return math.exp(math.log(fy) - theta * y) if fy > 0 else 0.0
        left = integrate.quad(g, -np.inf, 0, limit=200)[0]
        right = integrate.quad(g, 0, np.inf, limit=200)[0]
        return left + right


def theorem1_functional(j):
    """f(y) = 1 - (1 + e^y + ... + e^{(j-1)y}/(j-1)!) exp(-e^y), i.e. P(Poisson(e^y) >= j)."""
    return TestFunction(lambda y: poisson_tail(j - 1, np.exp(np.asarray(y, dtype=float))),
                        alpha=1.0, beta=float(j), bound=1.0, y0=1.0,
                        integral=lambda th: gamma_tail_sum(th, j))


class LDValue(NamedTuple):
    k: int
    raw_sum: float       # sum_i f(k m + ln p_i(k) + c_k) over stored nodes
    normalized: float    # sqrt(k) e^{-phi k} raw_sum
    target: float        # e^{theta c_k} / sqrt(2 pi v) * int f e^{-theta y} dy * W^(k)


def large_deviation_functional(tree, theta, profile, fn, c_seq, ks=None):
    """Empirical and limiting values of sqrt(k) e^{-phi k} sum_i f(k m + ln p_i(k) + c_k)."""
    profile = _profile_for(tree, profile)
    if not profile.contains(theta):
        raise DomainError(f"theta={theta} outside the admissible interval")
    fn.check(theta)
    ks = range(1, tree.k_max + 1) if ks is None else ks
    m, v, phi = float(profile.m(theta)), float(profile.v(theta)), float(profile.phi(theta))
    integral = fn.weighted_integral(theta)
    W = martingale_W(tree, theta, profile)
    out = []
    for k in ks:
        c = float(c_seq(k)) if callable(c_seq) else float(c_seq[k])
        arg = k * m + np.log(tree.masses[k]) + c
        raw = float(np.sum(fn.f(arg)))
        norm = math.sqrt(k) * math.exp(-phi * k) * raw
        target = math.exp(theta * c) / math.sqrt(2 * math.pi * v) * integral * W[k].value
        out.append(LDValue(k, raw, norm, target))
    return out


# --- heavy boxes and shattering ---------------------------------------------------

def heavy_box_counts(law, n, k, threshold, seed=DEFAULT_SEED, replica=0, *, key=None,
                     node_cap=DEFAULT_NODE_CAP):
    """Ball counts of the generation-k boxes holding at least ``threshold`` balls.

    Nodes below the threshold are dropped as soon as they appear: their
    descendants can never reach it again.
    """
    law = parse_law(law)
    keys = np.array([_root(seed, replica, key)], dtype=np.uint64)
    masses, counts = np.ones(1), np.array([n], dtype=np.int64)
    if n < threshold:
        return np.empty(0, dtype=np.int64)
    total = 1
    for g in range(1, k + 1):
        ch = allocate_balls(law, keys, masses, counts)
        keep = ch.count >= threshold
        keys, masses, counts = ch.key[keep], ch.mass[keep], ch.count[keep]
        total += keys.size
        if total > node_cap:
            raise NodeCapExceeded(node_cap, g)
        if not keys.size:
            break
    return counts


def shattering_generation(law, n, j, seed=DEFAULT_SEED, replica=0, *, key=None, k_cap=10_000):
    """First generation k >= 1 at which no box holds more than j balls."""
    law = parse_law(law)
    if n < 1 or j < 1 or k_cap < 1:
        raise ValueError("need n >= 1, j >= 1, k_cap >= 1")
    if n <= j:
        return 1
    keys = np.array([_root(seed, replica, key)], dtype=np.uint64)
    masses, counts = np.ones(1), np.array([n], dtype=np.int64)
    for k in range(1, k_cap + 1):
        ch = allocate_balls(law, keys, masses, counts)
        keep = ch.count > j
        if not keep.any():
            return k
        keys, masses, counts = ch.key[keep], ch.mass[keep], ch.count[keep]
    raise DepthCapExceeded(f"boxes with more than {j} balls remain at generation {k_cap}")
