"""Regime experiments: k, n -> infinity with k - a ln n -> b.

Each ``run_*`` simulates independent cascade replicas, computes a normalized
statistic per replica and generation, and summarizes it against the limiting
constant.  Tolerances are desk-scale engineering choices; the limits are
asymptotic and convergence can be slow.
"""
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
import json
import math

import numpy as np
from scipy import stats

from . import cascade
from .analytics import build_profile, regime_theta, theorem1_constants
from .errors import DomainError, RegimeError, TruncationTooCoarse
from .laws import parse_law

DEFAULT_SEED = cascade.DEFAULT_SEED


def regime_n(a, b, k):
    """n_k = e^{(k - b)/a} rounded half-up."""
    return int(math.floor(math.exp((k - b) / a) + 0.5))


@dataclass(frozen=True)
class RegimeSchedule:
    a: float
    b: float
    ks: tuple
    ns: tuple
    theta: float
    phi: float
    v: float

    @classmethod
    def build(cls, profile, a, b, ks):
        ks = tuple(int(k) for k in ks)
        if not ks or list(ks) != sorted(set(ks)) or ks[0] < 1:
            raise ValueError("k list must be ascending positive integers")
        th = regime_theta(profile, a)
        return cls(float(a), float(b), ks, tuple(regime_n(a, b, k) for k in ks), th,
                   float(profile.phi(th)), float(profile.v(th)))


@dataclass
class RegimeReport:
    config: dict
    per_k: list
    diagnostics: dict
    raw: dict = field(default_factory=dict)   # k -> {statistic name -> per-replica array}

    @property
    def passed(self):
        return all(e["pass"] for e in self.per_k) and all(
            v for key, v in self.diagnostics.items() if key.startswith("pass_"))

    def to_dict(self):
        return {"config": self.config, "per_k": self.per_k, "diagnostics": self.diagnostics}

    def to_json(self):
        return json.dumps(self.to_dict(), sort_keys=True, indent=2)

    def raw_rows(self):
        """(k, replica, name, value) rows of the per-replica statistics."""
        for k in sorted(self.raw):
            cols = self.raw[k]
            for r in range(len(next(iter(cols.values())))):
                yield k, r, {name: float(vals[r]) for name, vals in cols.items()}


def summarize(k, n, values, target, rel_tol=None, check=None):
    """Median/mean/quartiles of one statistic; pass is |median - target| <= rel_tol |target|."""
    x = np.asarray(values, dtype=float)
    med = float(np.median(x))
    if check is not None:
        ok = bool(check(med))
    elif rel_tol is not None and target is not None:
        ok = bool(abs(med - target) <= rel_tol * abs(target))
    else:
        ok = True
    q25, q75 = np.percentile(x, [25, 75])
    return {"k": int(k), "n": int(n), "median": med, "mean": float(x.mean()),
            "q25": float(q25), "q75": float(q75),
            "target": None if target is None else float(target), "pass": ok}


def ks_distance(sample):
    """Kolmogorov distance between the empirical CDF of ``sample`` and N(0, 1)."""
    x = np.asarray(sample, dtype=float)
    if x.size == 0:
        raise ValueError("sample must be nonempty")
    return float(stats.kstest(x, "norm").statistic)


def _map(fn, items, workers):
    if workers and workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as ex:
            return list(ex.map(fn, items, chunksize=max(1, len(items) // (4 * workers))))
    return [fn(i) for i in items]


# --- LLN ---------------------------------------------------------------------------

def _lln_replica(args):
    law, sched, j, seed, r, p_min = args
    out = []
    pm = p_min if p_min is not None else 1.0 / max(sched.ns)
    tree = cascade.expand_mass_tree(law, sched.ks[-1], pm, seed, r)
    W = cascade.martingale_W(tree, sched.theta, build_profile(law))
    for k, n in zip(sched.ks, sched.ns):
        counts = cascade.heavy_box_counts(law, n, k, j, seed, r)
        out.append((counts.size, int(np.sum(counts == j)), W[k].value, W[k].error_bound))
    return out


def run_lln(law, a, b, j, ks, replicas, seed=DEFAULT_SEED, p_min=None, rel_tol=0.25, workers=1):
    """sqrt(k) e^{-phi k} Nbar_{n_k, j-1} / W^(k)(theta) against the tail constant.

    W^(k) comes from a mass tree of the same realization (default p_min = 1/n
    at the largest k; frozen subtrees enter through their conditional mean).
    """
    law = parse_law(law)
    profile = build_profile(law)
    sched = RegimeSchedule.build(profile, a, b, ks)
    if j <= sched.theta:
        raise DomainError(f"j={j} must exceed theta={sched.theta:.6g}")
    const = theorem1_constants(profile, a, b, j)
    res = _map(_lln_replica, [(law, sched, j, seed, r, p_min) for r in range(replicas)], workers)
    arr = np.array(res, dtype=float)  # (replica, k, 4)
    per_k, exact_k, raw, mae = [], [], {}, []
    for i, (k, n) in enumerate(zip(sched.ks, sched.ns)):
        scale = math.sqrt(k) * math.exp(-sched.phi * k)
        tail = scale * arr[:, i, 0] / arr[:, i, 2]
        exact = scale * arr[:, i, 1] / arr[:, i, 2]
        per_k.append(summarize(k, n, tail, const.tail_constant, rel_tol))
        exact_k.append(summarize(k, n, exact, const.exact_j_constant, rel_tol))
        mae.append(float(np.median(np.abs(tail - const.tail_constant))))
        raw[k] = {"Nbar": arr[:, i, 0], "N_exact": arr[:, i, 1], "W": arr[:, i, 2],
                  "W_bound": arr[:, i, 3], "ratio_tail": tail, "ratio_exact": exact}
    diag = {"theta": sched.theta, "phi": sched.phi, "v": sched.v,
            "tail_constant": const.tail_constant, "exact_constant": const.exact_j_constant,
            "exact_j": exact_k, "median_abs_error": mae,
            "pass_exact_j": all(e["pass"] for e in exact_k)}
    if len(mae) > 1:
        diag["pass_error_shrinks"] = mae[-1] < mae[0]
    cfg = {"command": "lln", "law": law.law_string, "a": a, "b": b, "j": j, "k": list(sched.ks),
           "replicas": replicas, "seed": seed, "p_min": p_min, "rel_tol": rel_tol}
    return RegimeReport(cfg, per_k, diag, raw)


# --- CLT ---------------------------------------------------------------------------

def _clt_replica(args):
    law, k, n, seed, r, pmin_factor, closure_tol = args
    N = cascade.grow_occupied_tree(law, n, k, seed, r).stats(k).total
    tree = cascade.expand_mass_tree(law, k, pmin_factor / n, seed, r)
    mom = cascade.occupancy_moments(tree, n, (0,))[k]
    mu, s2 = mom.mu.estimate, mom.sigma2.estimate
    if closure_tol is not None and mom.mu.closure_error + mom.sigma2.closure_error > closure_tol * math.sqrt(s2):
        raise TruncationTooCoarse(f"closure error exceeds {closure_tol} standard deviations; lower p_min")
    return N, mu, s2, mom.mu.error_bound


def run_clt(law, a, b, k, replicas, seed=DEFAULT_SEED, pmin_factor=0.1, closure_tol=0.05,
            rel_tol=0.10, workers=1):
    """Occupied-box counts standardized on each realization's own mean.

    Reports the variance ratio sigma2/mu against 2^theta - 1 and two
    standardizations of N - mu: by sqrt(sigma2) (finite-n variance) and by
    sqrt((2^theta - 1) mu) (its limit).
    """
    law = parse_law(law)
    profile = build_profile(law)
    sched = RegimeSchedule.build(profile, a, b, [k])
    th = sched.theta
    if th >= 1:
        raise RegimeError(f"theta={th:.6g} >= 1: no normal limit for occupied boxes")
    n = sched.ns[0]
    res = np.array(_map(_clt_replica, [(law, k, n, seed, r, pmin_factor, closure_tol)
                                       for r in range(replicas)], workers))
    N, mu, s2 = res[:, 0], res[:, 1], res[:, 2]
    ratio = s2 / mu
    target = 2.0 ** th - 1.0
    z = (N - mu) / np.sqrt(s2)
    z_lim = (N - mu) / np.sqrt(target * mu)
    per_k = [summarize(k, n, ratio, target, rel_tol)]

    def zdiag(zz):
        return {"mean": float(zz.mean()), "variance": float(zz.var(ddof=1)), "ks": ks_distance(zz)}

    zd, zl = zdiag(z), zdiag(z_lim)
    diag = {"theta": th, "z": zd, "z_limit_normalization": zl,
            "pass_z": abs(zd["mean"]) <= 0.15 and abs(zd["variance"] - 1) <= 0.25 and zd["ks"] <= 0.08}
    diag["z_limit_normalization"]["pass"] = (abs(zl["mean"]) <= 0.15 and abs(zl["variance"] - 1) <= 0.25
                                             and zl["ks"] <= 0.08)
    raw = {k: {"N": N, "mu": mu, "sigma2": s2, "ratio": ratio, "z": z, "z_limit": z_lim}}
    cfg = {"command": "clt", "law": law.law_string, "a": a, "b": b, "k": [k], "replicas": replicas,
           "seed": seed, "pmin_factor": pmin_factor, "rel_tol": rel_tol}
    return RegimeReport(cfg, per_k, diag, raw)


# --- growth ----------------------------------------------------------------------

def _growth_replica(args):
    law, ks, ns, seed, r = args
    return [cascade.grow_occupied_tree(law, n, k, seed, r).stats(k).total / n if n > 1 else 1.0
            for k, n in zip(ks, ns)]


def run_growth(law, a, ks, replicas, seed=DEFAULT_SEED, b=0.0, threshold=0.9, workers=1):
    """N^(k)_{n_k} / n_k, which tends to 1 when a > 1/m(1)."""
    law = parse_law(law)
    profile = build_profile(law)
    if not profile.contains(1.0):
        raise RegimeError("m(1) undefined for this law")
    if not a > 1.0 / float(profile.m(1.0)):
        raise RegimeError(f"a={a} must exceed 1/m(1)={1 / float(profile.m(1.0)):.6g}")
    ks = tuple(int(k) for k in ks)
    ns = tuple(regime_n(a, b, k) for k in ks)
    res = np.array(_map(_growth_replica, [(law, ks, ns, seed, r) for r in range(replicas)], workers))
    per_k = [summarize(k, n, res[:, i], 1.0) for i, (k, n) in enumerate(zip(ks, ns))]
    per_k[-1]["pass"] = per_k[-1]["median"] >= threshold
    meds = [e["median"] for e in per_k]
    diag = {"pass_nondecreasing": all(x <= y for x, y in zip(meds, meds[1:])), "threshold": threshold}
    cfg = {"command": "growth", "law": law.law_string, "a": a, "b": b, "k": list(ks),
           "replicas": replicas, "seed": seed}
    return RegimeReport(cfg, per_k, diag, {k: {"ratio": res[:, i]} for i, k in enumerate(ks)})


# --- shattering ---------------------------------------------------------------------

def _shatter_replica(args):
    law, ns, j, seed, r = args
    return [cascade.shattering_generation(law, n, j, seed, r) for n in ns]


def run_shatter(law, j, ns, replicas, seed=DEFAULT_SEED, slope_band=None, workers=1):
    """Median shattering generation against ln n; the slope should approach 1/m_*.

    ``slope_band`` defaults to (0.735, 1.29) times the target.
    """
    law = parse_law(law)
    profile = build_profile(law)
    if profile.theta_upper > j + 1:
        raise RegimeError(f"theta*={profile.theta_upper:.6g} > j+1={j + 1}")
    target = 1.0 / profile.m_lower
    lo, hi = slope_band or (0.735 * target, 1.29 * target)
    ns = tuple(int(n) for n in ns)
    res = np.array(_map(_shatter_replica, [(law, ns, j, seed, r) for r in range(replicas)], workers))
    per_k = [summarize(i, n, res[:, i], None) for i, n in enumerate(ns)]
    meds = np.array([e["median"] for e in per_k])
    for e, n in zip(per_k, ns):
        e["target"] = target * math.log(n)
    slope = float(np.polyfit(np.log(ns), meds, 1)[0]) if len(ns) > 1 else float("nan")
    diag = {"slope": slope, "target_slope": target, "slope_band": [lo, hi],
            "pass_slope": bool(lo <= slope <= hi),
            "pass_medians_increasing": bool(np.all(np.diff(meds) > 0))}
    cfg = {"command": "shatter", "law": law.law_string, "j": j, "n": list(ns), "replicas": replicas,
           "seed": seed}
    return RegimeReport(cfg, per_k, diag, {i: {"zeta": res[:, i]} for i in range(len(ns))})


# --- tilted window ---------------------------------------------------------------------

def _tilted_replica(args):
    law, theta, x, h, k, p_min, seed, r = args
    profile = build_profile(law)
    tree = cascade.expand_mass_tree(law, k, p_min, seed, r)
    w = cascade.tilted_window_mass(tree, theta, profile, x, h, ks=[k])[0]
    return w.value / cascade.martingale_W(tree, theta, profile)[k].value


def run_tilted(law, theta, x, h, k, replicas, seed=DEFAULT_SEED, p_min=None, rel_tol=0.20, workers=1):
    """sqrt(k) Z_theta^(k)(window) / W^(k)(theta) against 2h g_theta(x / sqrt(k))."""
    law = parse_law(law)
    profile = build_profile(law)
    if not profile.contains(theta):
        raise DomainError(f"theta={theta} outside the admissible interval")
    m, v = float(profile.m(theta)), float(profile.v(theta))
    if p_min is None:
        p_min = math.exp(-(x + k * m + h) - 1)
    res = np.array(_map(_tilted_replica, [(law, theta, x, h, k, p_min, seed, r) for r in range(replicas)],
                        workers))
    target = 2 * h * math.exp(-x * x / (2 * k * v)) / math.sqrt(2 * math.pi * v)
    per_k = [summarize(k, 0, res, target, rel_tol)]
    cfg = {"command": "tilted", "law": law.law_string, "theta": theta, "x": x, "h": h, "k": [k],
           "replicas": replicas, "seed": seed, "p_min": p_min}
    return RegimeReport(cfg, per_k, {"m": m, "v": v}, {k: {"ratio": res}})
