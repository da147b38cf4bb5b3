"""
Truncated spectral (Galerkin) solution of the Stieltjes parabolic problem

    u'_g + A u = f,   u(0) = u0,

where ``A`` is diagonalised by an L2-orthonormal basis with eigenvalues
``lambda_k``. Each modal coefficient solves the scalar g-ODE

    xi_k'_g + lambda_k xi_k = f_k,   xi_k(0) = u0_k.

Besides solving, this module checks the existence hypotheses (H1-H5) mode by
mode, evaluates the norms of the discrete solution and verifies the a-priori
energy bound.

Notation used below, for one mode with eigenvalue ``lam``:

    E(t)   = exp(-2 lam mu_c([0,t))) * prod_{u in [0,t) cap D_g} |1 - lam dg(u)|^2
    K(s,t) = exp(-2 lam mu_c([s,t))) * prod_{u in (s,t) cap D_g} |1 - lam dg(u)|^2
    G(t)   = int_[0,t) K(s,t) dmu_g(s)

with ``mu_c`` the part of mu_g off the jump set. H2 = sup E, H3 = int lam E,
H4 = sup G, H5 = int lam G. Between consecutive jumps E decreases and G
moves monotonically towards 1/(2 lam), so both suprema are attained at
breakpoints or at right limits across jumps.
"""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from functools import cached_property
from typing import Callable, Sequence

import numpy as np

from .derivator import Derivator
from .g_ode import GFunctionSample, LinearGODE, RegressivityError, residual, solve_linear
from .stieltjes_integral import DEFAULT_TOL, integrate, integrate_panels

__all__ = [
    "HYPOTHESIS_SCHEMA",
    "ParabolicProblem",
    "HypothesisReport",
    "SolutionBundle",
    "EnergyReport",
    "default_grid",
    "h1_violations",
    "check_hypotheses",
    "solve",
    "solution_residual",
    "energy_check",
]

HYPOTHESIS_SCHEMA = 1


@dataclass(frozen=True)
class ParabolicProblem:
    """Modal data of the parabolic problem on ``[0, T]``.

    ``forcing_coeffs`` is ``None`` (no source) or one entry per mode, each
    a number or a vectorised callable of time.
    """

    derivator: Derivator
    eigenvalues: np.ndarray
    u0_coeffs: np.ndarray
    T: float
    forcing_coeffs: Sequence[float | Callable] | None = None
    n_modes: int | None = None

    def __post_init__(self):
        lam = np.asarray(self.eigenvalues, dtype=float).ravel()
        n = len(lam) if self.n_modes is None else int(self.n_modes)
        if n < 1:
            raise ValueError("n_modes must be at least 1")
        if n > len(lam):
            raise ValueError(f"n_modes={n} exceeds the {len(lam)} eigenvalues supplied")
        lam = lam[:n]
        if np.any(lam <= 0):
            raise ValueError("eigenvalues must be positive")
        if np.any(np.diff(lam) < 0):
            raise ValueError("eigenvalues must be ascending")
        u0 = np.asarray(self.u0_coeffs, dtype=float).ravel()
        if len(u0) < n:
            raise ValueError(f"need {n} initial coefficients, got {len(u0)}")
        if not self.T > 0:
            raise ValueError("T must be positive")
        if not self.derivator.is_continuous_at_zero():
            raise ValueError("the derivator must be continuous at t=0")
        if self.T > self.derivator.t_max:
            raise ValueError(f"T={self.T} exceeds the derivator domain [0, {self.derivator.t_max}]")
        f = self.forcing_coeffs
        if f is not None:
            f = list(f)
            if len(f) < n:
                raise ValueError(f"need {n} forcing entries, got {len(f)}")
            f = tuple(f[:n])
        object.__setattr__(self, "eigenvalues", lam)
        object.__setattr__(self, "u0_coeffs", u0[:n])
        object.__setattr__(self, "forcing_coeffs", f)
        object.__setattr__(self, "n_modes", n)

    def forcing(self, k: int):
        return 0.0 if self.forcing_coeffs is None else self.forcing_coeffs[k]

    def mode_ode(self, k: int) -> LinearGODE:
        return LinearGODE(float(self.eigenvalues[k]), self.forcing(k), float(self.u0_coeffs[k]), (0.0, float(self.T)))

    def forcing_matrix(self, s) -> np.ndarray:
        """Forcing coefficients at times ``s`` as an ``(len(s), n_modes)`` array."""
        s = np.asarray(s, dtype=float)
        out = np.zeros((s.size, self.n_modes))
        if self.forcing_coeffs is None:
            return out
        for k, fk in enumerate(self.forcing_coeffs):
            out[:, k] = np.asarray(fk(s), dtype=float) if callable(fk) else float(fk)
        return out


def default_grid(d: Derivator, T: float, n_per_stretch: int = 200) -> np.ndarray:
    """Breakpoints and jump times of ``d`` on ``[0, T]`` plus uniform points on smooth pieces."""
    pts = [np.array([0.0, float(T)]), np.asarray(d.jumps_in(0.0, T).times, dtype=float)]
    for piece in d.pieces(0.0, T):
        if piece.is_constant:
            pts.append(np.array([piece.lo, piece.hi]))
        else:
            pts.append(np.linspace(piece.lo, piece.hi, n_per_stretch + 1))
    grid = np.unique(np.concatenate(pts))
    return grid[(grid >= 0.0) & (grid <= T)]


def h1_violations(problem: ParabolicProblem) -> list[tuple[int, float]]:
    """Pairs ``(mode, t)`` (mode 1-based) with ``lambda_k dg(t) = 1`` for t in [0, T]."""
    d, T = problem.derivator, problem.T
    jumps = d.jumps_in(0.0, T)
    times = list(jumps.times)
    deltas = list(jumps.deltas)
    if d.delta(T) > 0:
        times.append(float(T))
        deltas.append(d.delta(T))
    out = []
    for tj, dg in zip(times, deltas):
        bad = np.flatnonzero(np.abs(1.0 - problem.eigenvalues * dg) <= 1e-14)
        out.extend((int(k) + 1, float(tj)) for k in bad)
    return sorted(out, key=lambda p: (p[1], p[0]))


# ---------------------------------------------------------------------------
# hypothesis checker
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class _Skeleton:
    """Breakpoints with the continuous measure between them and the jumps on them."""

    points: np.ndarray   # 0 = b_0 < ... < b_m = T
    gplus: np.ndarray    # g(b_i+)
    delta: np.ndarray    # dg(b_i)
    cont: np.ndarray     # mu_c([b_i, b_{i+1})), length m


def _skeleton(d: Derivator, T: float, grid=None) -> _Skeleton:
    pts = [np.array([0.0, float(T)]), np.asarray(d.breakpoints(0.0, T), dtype=float),
           np.asarray(d.jumps_in(0.0, T).times, dtype=float)]
    if grid is not None:
        pts.append(np.asarray(grid, dtype=float))
    b = np.unique(np.concatenate(pts))
    b = b[(b >= 0.0) & (b <= T)]
    gplus = np.array([d.right_limit(float(t)) for t in b])
    delta = np.array([d.delta(float(t)) for t in b])
    cont = np.array([d.measure_minus_jumps(float(lo), float(hi)) for lo, hi in zip(b[:-1], b[1:])])
    return _Skeleton(b, gplus, delta, cont)


@dataclass(frozen=True)
class _ModeProfile:
    """log E and G at every breakpoint, left and right of it."""

    lam: float
    logE: np.ndarray
    logE_plus: np.ndarray
    G: np.ndarray
    G_plus: np.ndarray


def _profile(lam: float, sk: _Skeleton) -> _ModeProfile:
    m = len(sk.points)
    logE = np.empty(m)
    logEp = np.empty(m)
    G = np.empty(m)
    Gp = np.empty(m)
    le, gg = 0.0, 0.0
    with np.errstate(divide="ignore"):
        for i in range(m):
            logE[i], G[i] = le, gg
            dg = sk.delta[i]
            if dg > 0:
                fac = abs(1.0 - lam * dg)
                le = le + 2.0 * math.log(fac) if fac > 0 else -math.inf
                gg = fac * fac * gg + dg
            logEp[i], Gp[i] = le, gg
            if i < m - 1:
                decay = 2.0 * lam * sk.cont[i]
                le = le - decay
                gg = gg * math.exp(-decay) - math.expm1(-decay) / (2.0 * lam)
    return _ModeProfile(lam, logE, logEp, G, Gp)


def _profile_integrals(d: Derivator, sk: _Skeleton, prof: _ModeProfile, tol: float) -> np.ndarray:
    """``int_[0,T) E dmu_g`` and ``int_[0,T) G dmu_g``.

    Each open stretch between breakpoints uses the closed form started from
    the right value at its left end, so quadrature nodes that round onto a
    jump time still see the post-jump profile. Atoms use the left values;
    every stretch is integrated to ``tol`` (absolute for order-one values,
    relative beyond).
    """
    lo, hi = sk.points[:-1], sk.points[1:]

    def kernel(which):
        def f(s, j, gs):
            decay = np.maximum(2.0 * prof.lam * (gs - sk.gplus[j]), 0.0)
            if which == 0:
                return np.exp(prof.logE_plus[j] - decay)
            return prof.G_plus[j] * np.exp(-decay) - np.expm1(-decay) / (2.0 * prof.lam)
        return f

    atoms = sk.delta[:-1]
    out = np.empty(2)
    for which, left in ((0, np.exp(prof.logE[:-1])), (1, prof.G[:-1])):
        cont = integrate_panels(d, kernel(which), lo, hi, tol)
        out[which] = float(np.sum(cont) + np.sum(left * atoms))
    return out


@dataclass
class HypothesisReport:
    """Per-mode results of the H1-H5 checks and the realised constants."""

    eigenvalues: np.ndarray
    h1_pass: np.ndarray
    h1_violations: list
    h2: np.ndarray
    h3: np.ndarray
    h4: np.ndarray
    h5: np.ndarray
    sufficient_condition: np.ndarray
    T: float

    @property
    def all_pass(self) -> bool:
        return bool(self.h1_pass.all()) and all(
            np.all(np.isfinite(q)) for q in (self.h2, self.h3, self.h4, self.h5)
        )

    @property
    def C1(self) -> float:
        """Smallest constant satisfying H2 and H3 for every mode."""
        return float(max(self.h2.max(), self.h3.max())) if self.all_pass else math.inf

    @property
    def C2(self) -> float:
        """Smallest constant satisfying H4 and H5 for every mode."""
        return float(max(self.h4.max(), self.h5.max())) if self.all_pass else math.inf

    def to_dict(self) -> dict:
        def num(x):
            x = float(x)
            return x if math.isfinite(x) else None

        return {
            "schema_version": HYPOTHESIS_SCHEMA,
            "T": float(self.T),
            "all_pass": self.all_pass,
            "C1": num(self.C1),
            "C2": num(self.C2),
            "h1_violations": [{"mode": m, "t": t} for m, t in self.h1_violations],
            "modes": [
                {
                    "mode": k + 1,
                    "lambda": float(self.eigenvalues[k]),
                    "H1": bool(self.h1_pass[k]),
                    "H2": num(self.h2[k]),
                    "H3": num(self.h3[k]),
                    "H4": num(self.h4[k]),
                    "H5": num(self.h5[k]),
                    "sufficient_condition": bool(self.sufficient_condition[k]),
                }
                for k in range(len(self.eigenvalues))
            ],
        }


def _sufficient(lam: float, sk: _Skeleton) -> bool:
    """sum_{[s,t) cap D_g} ln|1 - lam dg| / lam < mu_c([s,t)) for all breakpoint pairs s < t."""
    # F(t) = mu_c([0,t)) - sum_{[0,t) cap D_g} ln|1 - lam dg| / lam must be strictly increasing
    with np.errstate(divide="ignore"):
        logs = np.where(sk.delta > 0, np.log(np.abs(1.0 - lam * sk.delta)), 0.0)
    if not np.all(np.isfinite(logs)):
        return False
    steps = sk.cont - logs[:-1] / lam
    F = np.concatenate([[0.0], np.cumsum(steps)])
    return bool(np.all(F[1:] > np.maximum.accumulate(F[:-1])))


def check_hypotheses(problem: ParabolicProblem, grid=None, tol: float = DEFAULT_TOL) -> HypothesisReport:
    """Evaluate H1-H5 for every mode.

    H1 is exact over the jump set in ``[0, T]``. H2 and H4 are suprema over
    breakpoints, jump right limits and ``grid`` (if given); H3 and H5 are
    Stieltjes integrals of the closed-form profiles E and G.
    """
    d, T = problem.derivator, float(problem.T)
    sk = _skeleton(d, T, grid)
    viol = h1_violations(problem)
    n = problem.n_modes
    h1 = np.ones(n, dtype=bool)
    for mode, _ in viol:
        h1[mode - 1] = False
    h2, h3, h4, h5 = (np.full(n, np.nan) for _ in range(4))
    suff = np.zeros(n, dtype=bool)
    interior = sk.points < T
    for k, lam in enumerate(problem.eigenvalues):
        lam = float(lam)
        suff[k] = _sufficient(lam, sk) if h1[k] else False
        if not h1[k]:
            continue
        prof = _profile(lam, sk)
        h2[k] = float(np.exp(max(prof.logE.max(), prof.logE_plus[interior].max(initial=-np.inf))))
        h4[k] = float(max(prof.G.max(), prof.G_plus[interior].max(initial=-np.inf)))
        h3[k], h5[k] = lam * _profile_integrals(d, sk, prof, tol)
    return HypothesisReport(problem.eigenvalues, h1, viol, h2, h3, h4, h5, suff, T)


# ---------------------------------------------------------------------------
# solving
# ---------------------------------------------------------------------------

@dataclass
class SolutionBundle:
    """Modal solutions sampled on a common grid."""

    problem: ParabolicProblem
    grid: np.ndarray
    modes: list[GFunctionSample]
    tol: float = DEFAULT_TOL

    @property
    def left(self) -> np.ndarray:
        """``(len(grid), n_modes)`` array of left values."""
        return np.column_stack([m.left_values for m in self.modes])

    @property
    def right(self) -> np.ndarray:
        """Right limits (equal to left values off the jump set)."""
        return np.column_stack([m.plus_values for m in self.modes])

    @property
    def is_jump(self) -> np.ndarray:
        return self.modes[0].is_jump

    def evaluate(self, s) -> np.ndarray:
        """Modal coefficients at arbitrary times, shape ``(len(s), n_modes)``."""
        s = np.atleast_1d(np.asarray(s, dtype=float))
        return np.column_stack([m(s) for m in self.modes])

    @cached_property
    def norm_linf_l2(self) -> float:
        """sup over grid points and right limits of (sum_k xi_k^2)^(1/2)."""
        return float(max(np.sqrt((self.left ** 2).sum(axis=1)).max(),
                         np.sqrt((self.right ** 2).sum(axis=1)).max()))

    def _window_integral(self, fun) -> float:
        return float(integrate(self.problem.derivator, fun, 0.0, float(self.grid[-1]), self.tol))

    @cached_property
    def norm_l2_h1(self) -> float:
        """(int sum_k lambda_k xi_k^2 dmu_g)^(1/2)."""
        lam = self.problem.eigenvalues

        def fun(s):
            return (self.evaluate(s) ** 2) @ lam

        return math.sqrt(max(self._window_integral(fun), 0.0))

    @cached_property
    def dual_norm(self) -> float:
        """(int sum_k (f_k - lambda_k xi_k)^2 / lambda_k dmu_g)^(1/2), the dual norm of u'_g."""
        lam = self.problem.eigenvalues

        def fun(s):
            r = self.problem.forcing_matrix(s) - self.evaluate(s) * lam
            return (r ** 2) @ (1.0 / lam)

        return math.sqrt(max(self._window_integral(fun), 0.0))


def _check_grid(problem: ParabolicProblem, grid) -> np.ndarray:
    grid = np.asarray(grid, dtype=float)
    if grid.ndim != 1 or grid.size < 2:
        raise ValueError("grid must be a 1-d array with at least two points")
    if grid[0] != 0.0 or grid[-1] != problem.T:
        raise ValueError(f"grid must run from 0 to T={problem.T}")
    if np.any(np.diff(grid) <= 0):
        raise ValueError("grid must be strictly increasing")
    return grid


def solve(problem: ParabolicProblem, grid=None, workers: int = 1, tol: float = DEFAULT_TOL,
          compute_norms: bool = True) -> SolutionBundle:
    """Solve every modal g-ODE on ``grid`` (default: :func:`default_grid`).

    Raises :class:`RegressivityError` naming the first offending mode and
    time if H1 fails. Modes are independent, so ``workers > 1`` only
    changes scheduling, never the result.
    """
    viol = h1_violations(problem)
    if viol:
        mode, t = viol[0]
        lam = float(problem.eigenvalues[mode - 1])
        raise RegressivityError(t, lam, problem.derivator.delta(t), mode=mode)
    d = problem.derivator
    grid = default_grid(d, problem.T) if grid is None else _check_grid(problem, grid)

    def one(k):
        return solve_linear(problem.mode_ode(k), d, grid, tol)

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            modes = list(pool.map(one, range(problem.n_modes)))
    else:
        modes = [one(k) for k in range(problem.n_modes)]
    for m in modes:
        # the solution lives on [0, T]: a jump at T is reported by its left value only
        m.right_values[-1] = np.nan
        m.is_jump[-1] = False
    bundle = SolutionBundle(problem, grid, modes, tol)
    if compute_norms:
        bundle.norm_linf_l2, bundle.norm_l2_h1, bundle.dual_norm  # noqa: B018
    return bundle


def solution_residual(problem: ParabolicProblem, bundle: SolutionBundle, test_mode_count: int = 20,
                      tol: float = DEFAULT_TOL) -> float:
    """Max defect of the weak formulation tested against the first modes.

    For the basis function ``w_j`` the defect at a grid time t is
    ``|xi_j(t) - u0_j - int_[0,t) (f_j - lambda_j xi_j) dmu_g|``.
    """
    count = min(int(test_mode_count), problem.n_modes)
    if count < 1:
        raise ValueError("test_mode_count must be at least 1")
    return max(residual(problem.mode_ode(k), problem.derivator, bundle.modes[k], tol) for k in range(count))


@dataclass(frozen=True)
class EnergyReport:
    lhs: float
    rhs: float
    C1: float
    C2: float
    u0_norm: float
    f_norm: float

    @property
    def holds(self) -> bool:
        return self.lhs <= self.rhs * (1.0 + 1e-12) + 1e-300

    @property
    def ratio(self) -> float:
        return self.lhs / self.rhs if self.rhs > 0 else (0.0 if self.lhs == 0 else math.inf)


def energy_check(problem: ParabolicProblem, bundle: SolutionBundle,
                 report: HypothesisReport | None = None) -> EnergyReport:
    """Compare ``|u|_{Linf(L2)} + |u|_{L2(H1)}`` with ``2 sqrt(C1) |u0| + 2 sqrt(C2) |f|``.

    Constants are the realised ones from :func:`check_hypotheses`, evaluated
    on the bundle's grid so that the suprema are taken over the same points.
    """
    if report is None:
        report = check_hypotheses(problem, bundle.grid, bundle.tol)
    if not report.all_pass:
        raise ValueError("hypotheses fail; the energy bound does not apply")
    u0_norm = float(np.linalg.norm(problem.u0_coeffs))
    if problem.forcing_coeffs is None:
        f_norm = 0.0
    else:
        f_sq = integrate(problem.derivator, lambda s: (problem.forcing_matrix(s) ** 2).sum(axis=1),
                         0.0, float(problem.T), bundle.tol)
        f_norm = math.sqrt(max(float(f_sq), 0.0))
    lhs = bundle.norm_linf_l2 + bundle.norm_l2_h1
    rhs = 2.0 * math.sqrt(report.C1) * u0_norm + 2.0 * math.sqrt(report.C2) * f_norm
    return EnergyReport(lhs, rhs, report.C1, report.C2, u0_norm, f_norm)
