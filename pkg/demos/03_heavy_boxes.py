"""Boxes holding at least j balls under n_k = e^{k/2}: the normalized count settles near its constant."""
from cascade_occupancy.regimes import run_lln

rep = run_lln("pd1", 2.0, 0.0, 3, [8, 12, 16, 20], 40, seed=11)
print(f"target {rep.per_k[0]['target']:.5f}")
for e in rep.per_k:
    print(f"k={e['k']:2d}  n={e['n']:>6d}  median {e['median']:.4f}  IQR [{e['q25']:.4f}, {e['q75']:.4f}]")
print("median |error| by k:", [round(x, 4) for x in rep.diagnostics["median_abs_error"]])
