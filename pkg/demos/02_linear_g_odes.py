"""Linear g-ODEs x'_g = h - lambda x through jumps and dead time."""
import numpy as np

from stieltjes_pde.derivator import identity_derivator, silkworm_derivator
from stieltjes_pde.g_ode import (
    LinearGODE,
    RegressivityError,
    g_exponential,
    jump_update,
    residual,
    solve_linear,
)
from stieltjes_pde.spectral_solver import default_grid

g = silkworm_derivator()
grid = default_grid(g, 15.0, 20)  # holds every jump time and breakpoint

# Without forcing the solution is the reciprocal of the g-exponential of
# lambda: exp(-lambda mu_c) times a factor (1 - lambda dg) per jump.
lam = 3.0
sol = solve_linear(LinearGODE(lam, 0.0, 1.0, (0.0, 15.0)), g, grid)
for t in (2.0, 4.0, 6.0):
    i = int(np.flatnonzero(grid == t)[0])
    print(f"x({t}) = {sol.left_values[i]:+.6e}   1 / g-exponential: {1 / g_exponential(lam, g, t):+.6e}")

# At a jump the state is updated by one explicit step.
i4 = int(np.flatnonzero(grid == 4.0)[0])
print("x(4+) =", sol.right_values[i4], " jump_update:", jump_update(sol.left_values[i4], lam, 0.0, 1.0))

# Since 1 - 3 * 1 < 0, the sign flips at every impulse.
print("signs after each jump:", [float(np.sign(sol.right_values[i])) for i in np.flatnonzero(sol.is_jump)[:-1]])

# On dead time nothing moves.
on = (grid > 2) & (grid <= 3)
print("values on (2, 3]:", np.unique(sol.left_values[on]))

# Forcing can be any callable of time; the sample can be queried between nodes.
ode = LinearGODE(0.8, lambda s: np.cos(s), 1.0, (0.0, 15.0))
sol = solve_linear(ode, g, grid)
print("x at 1.234 and 11.5:", sol(np.array([1.234, 11.5])))
print("defect of the integral equation:", residual(ode, g, sol))

# lambda * dg = 1 kills the state at a jump and the equation cannot be
# continued past it. The solver reports where.
try:
    solve_linear(LinearGODE(1.0, 0.0, 1.0, (0.0, 15.0)), g, grid)
except RegressivityError as err:
    print("RegressivityError:", err, "at t =", err.time)

# With g(t) = t the classical solution is recovered.
classical = solve_linear(LinearGODE(2.0, 0.0, 1.0, (0.0, 1.0)), identity_derivator(), np.linspace(0, 1, 5))
print("classical:", classical.left_values, "vs", np.exp(-2 * np.linspace(0, 1, 5)))
