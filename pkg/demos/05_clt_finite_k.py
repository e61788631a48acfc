"""Small-box regime: sigma^2/mu drifts toward 2^theta - 1 only slowly in k."""
from cascade_occupancy.regimes import run_clt

for k in (6, 8, 10):
    rep = run_clt("pd1", 0.8, 0.0, k, 40, seed=9)
    e, z = rep.per_k[0], rep.diagnostics["z"]
    print(f"k={k:2d}  sigma2/mu median {e['median']:.3f} (limit {e['target']:.3f})  "
          f"Z mean {z['mean']:+.2f} var {z['variance']:.2f}")
