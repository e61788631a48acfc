"""Command line entry point: analyze, simulate, regime, shatter, partitions.

Exit codes: 0 success, 1 usage error, 2 regime hypothesis rejected,
3 resource cap (nodes, depth, atoms, truncation), 4 a --check-coherence
property failed.  Errors are reported on stderr as one line of JSON.
"""
import argparse
import csv
import io
import json
import math
import os
import sys

import numpy as np

from . import __version__, cascade, partitions, regimes
from .analytics import build_profile
from .errors import (AtomCapExceeded, CascadeError, RegimeError, ResourceCapExceeded,
                     TruncationTooCoarse)
from .laws import parse_law

DEFAULT_SEED = cascade.DEFAULT_SEED
EXIT_USAGE, EXIT_REGIME, EXIT_RESOURCE, EXIT_CHECK = 1, 2, 3, 4


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def parse_grid(text, integer=False):
    """'a,b,c' or 'start:end:step' (end inclusive)."""
    try:
        if ":" in text:
            start, end, step = (float(x) for x in text.split(":"))
            if step <= 0 or end < start:
                raise ValueError
            count = int(math.floor((end - start) / step + 1e-9)) + 1
            vals = [start + i * step for i in range(count)]
            vals = [round(v, 12) for v in vals]
        else:
            vals = [float(x) for x in text.split(",") if x]
    except ValueError:
        raise UsageError(f"bad grid {text!r}") from None
    if not vals:
        raise UsageError(f"empty grid {text!r}")
    return [int(round(v)) for v in vals] if integer else vals


def _emit_csv(path, header, rows, config, comments=()):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    for c in comments:
        buf.write(f"# {c}\n")
    meta = dict(config, version=__version__)
    buf.write("# config " + json.dumps(meta, sort_keys=True) + "\n")
    text = buf.getvalue()
    if path in (None, "-"):
        sys.stdout.write(text)
    else:
        with open(path, "w") as f:
            f.write(text)


def _fmt(x):
    if x is None:
        return ""
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return repr(float(x))


def _common(p, replicas=True):
    p.add_argument("--law", default="pd1")
    p.add_argument("--seed", type=int, default=DEFAULT_SEED)
    if replicas:
        p.add_argument("--replicas", type=int, default=1)
    p.add_argument("--pmin", type=float, default=None)
    p.add_argument("--threads", type=int, default=os.cpu_count() or 1)
    p.add_argument("--out", default=None)
    p.add_argument("--json", default=None)


def build_parser():
    p = _Parser(prog="cascade-occupancy", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    a = sub.add_parser("analyze", help="tabulate L, m, v, phi over a theta grid")
    _common(a, replicas=False)
    a.add_argument("--theta-grid", default="0.2:3.0:0.2")
    a.add_argument("--mode", default="exact", choices=["exact", "finite-difference", "monte-carlo"])

    s = sub.add_parser("simulate", help="per-generation occupancy counts")
    _common(s)
    s.add_argument("--balls", type=int, required=True)
    s.add_argument("--depth", type=int, required=True)
    s.add_argument("--J", type=int, default=8)
    s.add_argument("--theta", default=None, help="comma list of theta for W columns (needs --pmin)")

    r = sub.add_parser("regime", help="regime experiments")
    rs = r.add_subparsers(dest="regime", required=True, parser_class=_Parser)
    for name in ("lln", "clt", "growth", "shatter"):
        q = rs.add_parser(name)
        _regime_flags(q, name)

    sh = sub.add_parser("shatter", help="alias of 'regime shatter'")
    _regime_flags(sh, "shatter")

    pa = sub.add_parser("partitions", help="nested partitions from one cascade realization")
    _common(pa, replicas=False)
    pa.add_argument("--balls", type=int, required=True)
    pa.add_argument("--depth", type=int, required=True)
    pa.add_argument("--check-coherence", action="store_true")
    return p


def _regime_flags(q, name):
    _common(q)
    if name in ("lln", "clt", "growth"):
        q.add_argument("--a", type=float, required=True)
        q.add_argument("--b", type=float, default=0.0)
        q.add_argument("--k", required=True)
    if name in ("lln", "shatter"):
        q.add_argument("--j", type=int, required=True)
    if name == "shatter":
        q.add_argument("--n", required=True)
    q.set_defaults(regime=name)


def cmd_analyze(args):
    law = parse_law(args.law)
    prof = build_profile(law, mode=args.mode, seed=args.seed)
    rows = []
    for th in parse_grid(args.theta_grid):
        if not prof.contains(th):
            continue
        rows.append([_fmt(th)] + [_fmt(f(th)) for f in (prof.L, prof.dL, prof.d2L, prof.m, prof.v, prof.phi)])
    summary = (f"summary theta_lower={prof.theta_lower!r} theta_upper={prof.theta_upper!r} "
               f"m_lower={prof.m_lower!r} m_upper={prof.m_upper!r}")
    cfg = {"command": "analyze", "law": law.law_string, "theta_grid": args.theta_grid, "mode": args.mode,
           "seed": args.seed}
    _emit_csv(args.out, ["theta", "L", "Lp", "Lpp", "m", "v", "phi"], rows, cfg, [summary])
    return 0


def cmd_simulate(args):
    law = parse_law(args.law)
    if args.balls < 1 or args.depth < 1 or args.replicas < 1 or args.J < 1:
        raise UsageError("--balls, --depth, --replicas and --J must be positive")
    thetas = parse_grid(args.theta) if args.theta else []
    if thetas and args.pmin is None:
        raise UsageError("--theta needs --pmin")
    J = args.J
    header = (["replica", "k", "N"] + [f"N{j}" for j in range(1, J + 1)] + [f"Nbar{j}" for j in range(J)]
              + [f"W_theta_{t:g}" for t in thetas] + ["mu_n", "sigma2_n", "err_mu", "err_W"])
    rows = []
    # replicas are grown together in blocks so that huge replica counts stay vectorized
    block = max(1, min(args.replicas, 2_000_000 // max(args.balls, 1)))
    prof = build_profile(law) if args.pmin is not None else None
    for start in range(0, args.replicas, block):
        size = min(block, args.replicas - start)
        tree = cascade.grow_occupied_tree(law, args.balls, args.depth, args.seed, start, replicas=size)
        per_k = [tree.batch_stats(k, J) for k in range(1, args.depth + 1)]
        for i in range(size):
            r = start + i
            extra = None
            if args.pmin is not None:
                mt = cascade.expand_mass_tree(law, args.depth, args.pmin, args.seed, r)
                mom = cascade.occupancy_moments(mt, args.balls, (0,))
                ws = [cascade.martingale_W(mt, t, prof) for t in thetas]
                extra = (mom, ws)
            for k in range(1, args.depth + 1):
                exact, tail = per_k[k - 1]
                row = [r, k, int(tail[i, 0])] + exact[i].tolist() + tail[i].tolist()
                if extra:
                    mom, ws = extra
                    row += [_fmt(w[k].value) for w in ws]
                    err_w = max((w[k].error_bound for w in ws), default=None)
                    row += [_fmt(mom[k].mu.estimate), _fmt(mom[k].sigma2.estimate),
                            _fmt(mom[k].mu.error_bound), _fmt(err_w)]
                else:
                    row += ["", "", "", ""]
                rows.append(row)
    cfg = {"command": "simulate", "law": law.law_string, "balls": args.balls, "depth": args.depth,
           "replicas": args.replicas, "seed": args.seed, "pmin": args.pmin, "J": J, "theta": thetas}
    _emit_csv(args.out, header, rows, cfg)
    return 0


def cmd_regime(args):
    name = args.regime
    workers = max(1, args.threads)
    if name == "lln":
        rep = regimes.run_lln(args.law, args.a, args.b, args.j, parse_grid(args.k, True), args.replicas,
                              args.seed, p_min=args.pmin, workers=workers)
    elif name == "clt":
        ks = parse_grid(args.k, True)
        if len(ks) != 1:
            raise UsageError("clt takes a single --k")
        kw = {} if args.pmin is None else {"pmin_factor": args.pmin}
        rep = regimes.run_clt(args.law, args.a, args.b, ks[0], args.replicas, args.seed, workers=workers, **kw)
    elif name == "growth":
        rep = regimes.run_growth(args.law, args.a, parse_grid(args.k, True), args.replicas, args.seed,
                                 b=args.b, workers=workers)
    else:
        rep = regimes.run_shatter(args.law, args.j, parse_grid(args.n, True), args.replicas, args.seed,
                                  workers=workers)
    header = ["k", "n", "median", "mean", "q25", "q75", "target", "pass"]
    rows = [[_fmt(e[h]) if h != "pass" else str(e[h]).lower() for h in header] for e in rep.per_k]
    _emit_csv(args.out, header, rows, rep.config,
              [f"{key} {json.dumps(v, sort_keys=True)}" for key, v in sorted(rep.diagnostics.items())
               if key.startswith("pass_")])
    if args.json:
        with open(args.json, "w") as f:
            f.write(rep.to_json() + "\n")
    return 0


def cmd_partitions(args):
    if args.balls < 1 or args.depth < 1:
        raise UsageError("--balls and --depth must be positive")
    law = parse_law(args.law)
    seq = partitions.partition_from_cascade(law, args.balls, args.depth, args.seed)
    lines = [f"{k} {seq[k]}" for k in range(len(seq))]
    failures = []
    if args.check_coherence:
        failures = coherence_failures(law, seq, args.seed)
        lines.append(f"# coherence {'ok' if not failures else 'FAILED: ' + '; '.join(failures)}")
    lines.append("# config " + json.dumps({"command": "partitions", "law": law.law_string, "balls": args.balls,
                                           "depth": args.depth, "seed": args.seed, "version": __version__},
                                          sort_keys=True))
    text = "\n".join(lines) + "\n"
    if args.out:
        with open(args.out, "w") as f:
            f.write(text)
    else:
        sys.stdout.write(text)
    return EXIT_CHECK if failures else 0


def coherence_failures(law, seq, seed):
    """Structural checks on one nested sequence; returns descriptions of failures."""
    out = []
    n = seq.n
    for k in range(1, len(seq)):
        if not partitions.is_refinement(seq[k], seq[k - 1]):
            out.append(f"generation {k} does not refine {k - 1}")
    tree = cascade.grow_occupied_tree(law, n, len(seq) - 1, seed)
    for k in range(1, len(seq)):
        if len(seq[k]) != tree.stats(k).total:
            out.append(f"block count differs from N at generation {k}")
    rng = np.random.default_rng(seed)
    big = sorted(rng.choice(np.arange(1, n + 1), size=rng.integers(1, n + 1), replace=False).tolist())
    small = sorted(rng.choice(big, size=rng.integers(1, len(big) + 1), replace=False).tolist())
    for k in range(len(seq)):
        twice, idx = partitions.restrict(seq[k], big)
        lhs, _ = partitions.restrict(twice, [idx[i] for i in small])
        rhs, _ = partitions.restrict(seq[k], small)
        if lhs != rhs:
            out.append(f"restriction not coherent at generation {k}")
    return out


def _fail(code, exc):
    sys.stderr.write(json.dumps({"error": type(exc).__name__, "message": str(exc), "exit_code": code}) + "\n")
    return code


def main(argv=None):
    try:
        args = build_parser().parse_args(argv)
        cmd = args.command
        if cmd == "analyze":
            return cmd_analyze(args)
        if cmd == "simulate":
            return cmd_simulate(args)
        if cmd in ("regime", "shatter"):
            return cmd_regime(args)
        return cmd_partitions(args)
    except RegimeError as e:
        return _fail(EXIT_REGIME, e)
    except (ResourceCapExceeded, AtomCapExceeded, TruncationTooCoarse, MemoryError) as e:
        return _fail(EXIT_RESOURCE, e)
    except (UsageError, ValueError, CascadeError, OSError) as e:
        return _fail(EXIT_USAGE, e)


if __name__ == "__main__":
    sys.exit(main())
