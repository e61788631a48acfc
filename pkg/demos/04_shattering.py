"""Generation at which no box holds more than two balls grows like log n / m_*."""
import math

from cascade_occupancy.analytics import build_profile
from cascade_occupancy.regimes import run_shatter

rep = run_shatter("pd1", 2, [10 ** 2, 10 ** 3, 10 ** 4], 30, seed=5)
for e in rep.per_k:
    print(f"n={e['n']:>6d}  median generation {e['median']:.1f}")
print(f"fitted slope {rep.diagnostics['slope']:.3f}, predicted {1 / build_profile('pd1').m_lower:.3f} (= e)")
