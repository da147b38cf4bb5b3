"""Derivators, their measures and Stieltjes integrals."""
import numpy as np

from stieltjes_pde.derivator import identity_derivator, silkworm_derivator
from stieltjes_pde.stieltjes_integral import cumulative, integrate, lp_norm

# A derivator g is nondecreasing and left-continuous. Its increments set the
# speed of time: flat stretches are dead time, jumps are impulses.
g = silkworm_derivator()
for t in (0.0, 1.0, 2.0, 2.5, 3.0, 3.5, 4.0, 4.5, 5.0):
    print(f"g({t}) = {g.eval(t):.6f}   jump = {g.delta(t):g}")

# One life cycle lasts 5 days: growth on [0, 2], rest on [2, 3], a second
# growth on [3, 4], death at 4 and hatching at 5. Each cycle adds 4 to g.
print("jumps in [0, 15]:", list(zip(g.jumps_in(0, 15).times, g.jumps_in(0, 15).deltas)))
print("dead time in [0, 15]:", g.constancy_components(0, 15))

# mu_g([a, b)) = g(b) - g(a); the atom at 4 belongs to [0, 5) but not [0, 4).
print("mu_g([0, 4)) =", g.measure(0, 4), " mu_g([0, 5)) =", g.measure(0, 5))

# Integrals against mu_g split into a continuous part and a sum over atoms.
f = lambda s: np.exp(-s)  # noqa: E731
with_atoms = integrate(g, f, 0, 5)
without = integrate(g, f, 0, 5, atoms=False)
print(f"int_[0,5) e^-s dmu_g = {with_atoms:.12f} (atoms contribute {with_atoms - without:.12f} = e^-4)")

# With g(t) = t the same call is the ordinary Lebesgue integral.
print("identity check:", integrate(identity_derivator(), f, 0, 5), 1 - np.exp(-5))

# The cumulative integral F(t) = int_[0,t) f dmu_g g-differentiates back to f.
h = 1e-6
pts = np.array([0.7, 3.4, 6.1])
grid = np.unique(np.concatenate([[0.0], pts, pts + h, [4.0, 9.0]]))
F = cumulative(g, f, grid)
i0, i1 = np.searchsorted(grid, pts), np.searchsorted(grid, pts + h)
quot = (F.values[i1] - F.values[i0]) / (g.eval_array(pts + h) - g.eval_array(pts))
print("difference quotients:", quot, " f:", f(pts))
j = np.searchsorted(grid, 4.0)
print("quotient across the jump at 4:", (F.right_values[j] - F.values[j]) / g.delta(4.0), " f(4):", f(4.0))

# L^p_g norms ignore dead time: a bump living on [2, 3] has zero norm.
bump = lambda s: np.where((s > 2) & (s < 3), 1.0, 0.0)  # noqa: E731
print("L2_g norm of a dead-time bump:", lp_norm(g, bump, 2, 0, 5))
