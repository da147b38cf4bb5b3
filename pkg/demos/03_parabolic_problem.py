"""A heat equation driven by a derivator, solved mode by mode."""
import numpy as np

from stieltjes_pde.derivator import identity_derivator, silkworm_derivator
from stieltjes_pde.fem import assemble_mass, eigenbasis, evaluate, generate_rect_mesh, project
from stieltjes_pde.spectral_solver import (
    ParabolicProblem,
    check_hypotheses,
    energy_check,
    solution_residual,
    solve,
)

# P1 elements on the unit square give the generalized eigenproblem
# R v = lambda M v. With Dirichlet conditions the exact values are
# pi^2 (m^2 + n^2).
mesh = generate_rect_mesh(16, 16)
basis = eigenbasis(mesh, 12, eta=1.0, kappa=0.0, boundary="dirichlet")
print("lambda / pi^2:", np.round(basis.eigenvalues[:6] / np.pi ** 2, 3))

# Project an initial datum onto the basis.
M = assemble_mass(mesh)
x, y = mesh.nodes.T
u0 = np.sin(np.pi * x) * y * (1 - y)
coeffs = project(u0, basis, M)
print("leading coefficients:", np.round(coeffs[:4], 5))

# Each mode solves xi'_g = f_k - lambda_k xi. With the identity derivator
# this is the classical heat equation.
heat = ParabolicProblem(identity_derivator(), basis.eigenvalues, coeffs, 0.1)
b = solve(heat, np.linspace(0, 0.1, 11))
print("mode 1 vs exp(-lambda_1 t):", b.left[-1, 0], coeffs[0] * np.exp(-basis.eigenvalues[0] * 0.1))

# The silkworm derivator freezes the solution on dead time and applies
# u(t+) = u(t) (1 - lambda dg) + f dg at the impulses. First the hypotheses:
# a mode with lambda * dg = 1 would be annihilated at a jump.
silk = silkworm_derivator()
problem = ParabolicProblem(silk, basis.eigenvalues, coeffs, 15.0, forcing_coeffs=[1.0] + [0.0] * 11)
report = check_hypotheses(problem)
# High modes meet unit jumps with |1 - lambda| >> 1, which inflates C2.
print("hypotheses pass:", report.all_pass, " C1 =", f"{report.C1:.4g}", " C2 =", f"{report.C2:.4g}")
bad = check_hypotheses(ParabolicProblem(silk, [1.0], [1.0], 15.0))
print("lambda = 1 fails H1 at:", bad.h1_violations)

# By t = 4 the forced first mode sits at f / lambda_1, a fixed point of the
# jump update, so the impulse leaves it almost unchanged.
b = solve(problem)
i = int(np.flatnonzero(b.grid == 4.0)[0])
print("mode 1 across the impulse at 4:", b.left[i, 0], "->", b.right[i, 0])
u_at_4 = evaluate(b.left[i], basis)
print("max of u(4, .) on the nodes:", u_at_4.max())

# The energy estimate and the defect of the weak formulation.
energy = energy_check(problem, b, report)
print(f"energy: lhs {energy.lhs:.4f} <= rhs {energy.rhs:.4f}  (ratio {energy.ratio:.2e})")
print("residual over 12 test modes:", solution_residual(problem, b, 12))
