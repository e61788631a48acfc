"""Rate profile of a few splitting laws and the regime each ball budget lands in."""
import numpy as np

from cascade_occupancy.analytics import build_profile, regime_theta, theorem1_constants

for law in ("pd1", "gem:2", "dirichlet:2:1", "beta:1:1"):
    p = build_profile(law)
    print(f"{law:>14}: theta in ({p.theta_lower:.3g}, {p.theta_upper:.4g}), m in ({p.m_lower:.4f}, {p.m_upper:.4g})")

p = build_profile("pd1")
print("\npd1 on a coarse grid")
print("  theta      L       m       v     phi")
for t in np.linspace(0.25, 2.5, 10):
    print(f"  {t:5.2f} {p.L(t):7.4f} {p.m(t):7.4f} {p.v(t):7.4f} {p.phi(t):7.4f}")

# n_k = e^{k/a}: a sets the tilt, theta solves m(theta) = 1/a
for a in (1.5, 2.0, 2.5):
    th = regime_theta(p, a)
    c = theorem1_constants(p, a, 0.0, 3)
    print(f"a={a}: theta={th:.4f}  tail constant j=3 {c.tail_constant:.5f}  exact j=3 {c.exact_j_constant:.5f}")
