"""
Scalar linear Stieltjes ODEs ``x'_g + d(t) x = h(t)``, ``x(a) = x0``.

Solutions are built from the signed g-exponential

    e(t) = (-1)^j exp( int_[a,t) dhat dmu_g ),
    dhat = d                          off the jump set,
    dhat = -ln|1 - d dg| / dg         at a jump of size dg,

where ``j`` counts the jumps before ``t`` at which ``1 + dtilde dg < 0``
(``dtilde = d / (1 - d dg)``). Then

    x(t) = e(t)^-1 x0 + e(t)^-1 int_[a,t) e(s) htilde(s) dmu_g(s),   htilde = h / (1 - d dg).

``e`` is tracked as (log|e|, sign) so that ratios ``e(s)/e(t)`` never
overflow; the formula is evaluated interval by interval between grid
points, which requires every jump time in the window to be a grid point.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Mapping

import numpy as np

from .derivator import Derivator
from .stieltjes_integral import DEFAULT_TOL, cumulative, integrate, integrate_panels

__all__ = [
    "RegressivityError",
    "LinearGODE",
    "GFunctionSample",
    "regressive_coefficients",
    "log_coefficient",
    "log_g_exponential",
    "g_exponential",
    "jump_update",
    "solve_linear",
    "residual",
]

_REGRESSIVE_EPS = 1e-14


class RegressivityError(ValueError):
    """``d(t) * dg(t) == 1`` at a jump: the solution operator is singular there."""

    def __init__(self, time: float, coefficient: float, delta: float, mode: int | None = None):
        self.time = time
        self.coefficient = coefficient
        self.delta = delta
        self.mode = mode
        where = "" if mode is None else f" (mode {mode})"
        super().__init__(
            f"regressivity violated at t={time}{where}: coefficient*delta_g = {coefficient * delta}"
        )


def _at(coef, t):
    """Evaluate a constant-or-callable coefficient at array ``t``."""
    t = np.asarray(t, dtype=float)
    if callable(coef):
        return np.broadcast_to(np.asarray(coef(t), dtype=float), t.shape).astype(float)
    return np.full(t.shape, float(coef))


def _phi1(z):
    """(1 - exp(-z)) / z, continuous at 0."""
    z = np.asarray(z, dtype=float)
    out = np.ones_like(z)
    big = np.abs(z) > 1e-8
    out[big] = -np.expm1(-z[big]) / z[big]
    small = ~big
    out[small] = 1.0 - z[small] / 2.0
    return out


@dataclass(frozen=True)
class LinearGODE:
    """``x'_g + lambda_coef(t) x = forcing(t)`` on ``window`` with ``x(a) = x0``.

    ``lambda_coef`` and ``forcing`` are numbers or vectorised callables.
    ``jump_forcing`` and ``jump_coefficient`` override the forcing and the
    coefficient at given atom times; this is how impulses with their own
    law are attached to otherwise constant coefficients.
    """

    lambda_coef: float | Callable = 0.0
    forcing: float | Callable = 0.0
    x0: float = 0.0
    window: tuple[float, float] = (0.0, 1.0)
    jump_forcing: Mapping[float, float] = field(default_factory=dict)
    jump_coefficient: Mapping[float, float] = field(default_factory=dict)

    @property
    def constant_coefficients(self) -> bool:
        return not callable(self.lambda_coef) and not callable(self.forcing)

    def lam(self, t):
        t = np.asarray(t, dtype=float)
        out = np.array(_at(self.lambda_coef, t), dtype=float)
        for tj, val in self.jump_coefficient.items():
            out[t == tj] = val
        return out

    def h(self, t):
        t = np.asarray(t, dtype=float)
        out = np.array(_at(self.forcing, t), dtype=float)
        for tj, val in self.jump_forcing.items():
            out[t == tj] = val
        return out

    def check_regressive(self, d: Derivator, upto: float | None = None) -> None:
        a, b = self.window
        b = b if upto is None else upto
        jumps = d.jumps_in(a, b)
        if not len(jumps):
            return
        times = np.asarray(jumps.times)
        prod = self.lam(times) * np.asarray(jumps.deltas)
        bad = np.abs(1.0 - prod) <= _REGRESSIVE_EPS
        if bad.any():
            i = int(np.argmax(bad))
            raise RegressivityError(float(times[i]), float(self.lam(times[i:i + 1])[0]), jumps.deltas[i])


def regressive_coefficients(lambda_coef, d: Derivator, t: float) -> tuple[float, float]:
    """``(lambda / (1 - lambda dg), 1 / (1 - lambda dg))`` at ``t``."""
    lam = float(_at(lambda_coef, [t])[0])
    dg = d.delta(t)
    den = 1.0 - lam * dg
    if abs(den) <= _REGRESSIVE_EPS:
        raise RegressivityError(t, lam, dg)
    return lam / den, 1.0 / den


def log_coefficient(lambda_coef, d: Derivator, t: float) -> float:
    lam = float(_at(lambda_coef, [t])[0])
    dg = d.delta(t)
    if dg == 0.0:
        return lam
    den = 1.0 - lam * dg
    if abs(den) <= _REGRESSIVE_EPS:
        raise RegressivityError(t, lam, dg)
    return -math.log(abs(den)) / dg


def _continuous_exponent(lambda_coef, d: Derivator, a: float, b: float, tol: float) -> float:
    """int over [a, b) minus D_g of lambda dmu_g."""
    if callable(lambda_coef):
        return float(integrate(d, lambda_coef, a, b, tol, atoms=False))
    return float(lambda_coef) * d.measure_minus_jumps(a, b)


def log_g_exponential(lambda_coef, d: Derivator, t: float, a: float = 0.0,
                      tol: float = DEFAULT_TOL) -> tuple[float, float, int]:
    """Return ``(log|e(t)|, sign, flips)`` of the g-exponential started at ``a``."""
    log_abs = _continuous_exponent(lambda_coef, d, a, t, tol)
    flips = 0
    for tj, dg in d.jumps_in(a, t):
        d_tilde, _ = regressive_coefficients(lambda_coef, d, tj)
        lam = float(_at(lambda_coef, [tj])[0])
        log_abs -= math.log(abs(1.0 - lam * dg))
        if 1.0 + d_tilde * dg < 0:
            flips += 1
    return log_abs, (-1.0) ** flips, flips


def g_exponential(lambda_coef, d: Derivator, t: float, a: float = 0.0, tol: float = DEFAULT_TOL) -> float:
    log_abs, sign, _ = log_g_exponential(lambda_coef, d, t, a, tol)
    return sign * math.exp(log_abs)


def jump_update(x, lam, f, delta):
    """Right limit across a jump: ``x (1 - lam delta) + f delta``."""
    return x * (1.0 - lam * delta) + f * delta


@dataclass
class GFunctionSample:
    """A function of time sampled on a grid honouring the jump structure.

    ``right_values`` is NaN except at grid points in D_g. When the sample
    comes from :func:`solve_linear` it keeps the problem so that values
    between grid points are computed from the closed form; otherwise they
    are interpolated linearly in g.
    """

    grid: np.ndarray
    left_values: np.ndarray
    right_values: np.ndarray
    is_jump: np.ndarray
    ode: LinearGODE | None = None
    derivator: Derivator | None = None
    log_exp: np.ndarray | None = None
    exp_sign: np.ndarray | None = None
    tol: float = DEFAULT_TOL

    def _g_structure(self):
        cache = self.__dict__.get("_gcache")
        if cache is None:
            d = self.derivator
            g_plus = np.array([d.right_limit(float(t)) for t in self.grid])
            spans = d.eval_array(self.grid[1:]) - g_plus[:-1]
            cache = self.__dict__["_gcache"] = (g_plus, spans)
        return cache

    @property
    def plus_values(self) -> np.ndarray:
        """x(t_i+) at every grid point (equal to x(t_i) off D_g)."""
        return np.where(self.is_jump, self.right_values, self.left_values)

    def value_at(self, t: float, side: str = "left") -> float:
        i = int(np.searchsorted(self.grid, t))
        if i >= len(self.grid) or self.grid[i] != t:
            return float(self(np.array([t]))[0])
        return float(self.plus_values[i] if side == "right" else self.left_values[i])

    def __call__(self, s) -> np.ndarray:
        if self.derivator is None:
            raise ValueError("sample has no derivator attached; cannot evaluate between nodes")
        s = np.atleast_1d(np.asarray(s, dtype=float))
        grid = self.grid
        if s.size and (s.min() < grid[0] or s.max() > grid[-1]):
            raise ValueError("evaluation outside the sampled window")
        d = self.derivator
        idx = np.searchsorted(grid, s, side="left")
        out = np.empty_like(s)
        on = (idx < len(grid)) & (grid[np.minimum(idx, len(grid) - 1)] == s)
        out[on] = self.left_values[idx[on]]
        off = ~on
        if not off.any():
            return out
        i = idx[off] - 1
        ss = s[off]
        g_plus, spans = self._g_structure()
        du = d.eval_array(ss) - g_plus[i]
        x_plus = self.plus_values[i]
        if self.ode is None:
            span = spans[i]
            x_next = self.left_values[i + 1]
            frac = np.divide(du, span, out=np.zeros_like(du), where=span > 0)
            out[off] = x_plus + frac * (x_next - x_plus)
            return out
        ode = self.ode
        if ode.constant_coefficients:
            lam, h = float(ode.lambda_coef), float(ode.forcing)
            out[off] = x_plus * np.exp(-lam * du) + h * du * _phi1(lam * du)
            return out
        if callable(ode.lambda_coef):
            out[off] = [
                _propagate(ode, d, float(grid[k]), float(xp), float(sk), self.tol)
                for k, xp, sk in zip(i, x_plus, ss)
            ]
            return out
        # constant coefficient, time-dependent forcing: one batched pass
        lam = float(ode.lambda_coef)
        g_end = d.eval_array(ss)

        def kernel(r, j, gr):
            return np.exp(-lam * (g_end[j] - gr)) * ode.h(r)

        conv = integrate_panels(d, kernel, grid[i], ss, self.tol)
        out[off] = x_plus * np.exp(-lam * du) + conv
        return out


def _propagate(ode: LinearGODE, d: Derivator, t0: float, x_plus: float, t1: float, tol: float) -> float:
    """Closed-form value at ``t1`` from ``x(t0+)`` when (t0, t1) has no jumps."""
    lam = ode.lambda_coef
    expo = _continuous_exponent(lam, d, t0, t1, tol)
    hom = x_plus * math.exp(-expo)
    if not callable(ode.forcing) and float(ode.forcing) == 0.0:
        return hom
    if callable(lam):
        def kernel(s):
            e = np.array([_continuous_exponent(lam, d, float(si), t1, tol) for si in s])
            return np.exp(-e) * ode.h(s)
    else:
        g1 = d.eval(t1)
        lam = float(lam)

        def kernel(s):
            return np.exp(-lam * (g1 - d.eval_array(s))) * ode.h(s)
    return hom + float(integrate(d, kernel, t0, t1, tol, atoms=False))


def solve_linear(ode: LinearGODE, d: Derivator, grid, tol: float = DEFAULT_TOL) -> GFunctionSample:
    """Sample the solution on ``grid`` (left values, and right limits on D_g).

    ``grid`` must start at the window start, stay inside the window and
    contain every jump time it spans.

    A jump at the final grid point need not be regressive: its right limit
    is still given by the forward jump relation.
    """
    grid = np.asarray(grid, dtype=float)
    a, b = ode.window
    if grid.ndim != 1 or grid.size < 1:
        raise ValueError("grid must be a nonempty 1-d array")
    if grid[0] != a or grid[-1] > b:
        raise ValueError(f"grid must start at {a} and end inside the window [{a}, {b}]")
    if np.any(np.diff(grid) <= 0):
        raise ValueError("grid must be strictly increasing")
    jumps = d.jumps_in(a, float(grid[-1]))
    missing = sorted(set(jumps.times) - set(grid.tolist()))
    if missing:
        raise ValueError(f"grid is missing jump times {missing[:5]}")
    ode.check_regressive(d, upto=float(grid[-1]))

    n = len(grid)
    left = np.empty(n)
    right = np.full(n, np.nan)
    is_jump = np.zeros(n, dtype=bool)
    log_e = np.empty(n)
    sign_e = np.empty(n)
    lam_grid = ode.lam(grid)
    h_grid = ode.h(grid)
    const = ode.constant_coefficients

    x, log_abs, sign = float(ode.x0), 0.0, 1.0
    for i in range(n):
        t = float(grid[i])
        left[i], log_e[i], sign_e[i] = x, log_abs, sign
        dg = d.delta(t)
        if dg > 0:
            is_jump[i] = True
            lam = lam_grid[i]
            den = 1.0 - lam * dg
            x = jump_update(x, lam, h_grid[i], dg)
            right[i] = x
            log_abs = log_abs - math.log(abs(den)) if den != 0.0 else math.inf
            # 1 + dtilde dg = 1 / (1 - lam dg)
            if den < 0:
                sign = -sign
        if i == n - 1:
            break
        t1 = float(grid[i + 1])
        # e(t_i+)/e(t_{i+1}) = exp(-E): the sign does not change off D_g
        if const:
            du = d.measure_minus_jumps(t, t1)
            lam = float(ode.lambda_coef)
            expo = lam * du
            x = x * math.exp(-expo) + float(ode.forcing) * du * float(_phi1(np.array([expo]))[0])
        else:
            expo = _continuous_exponent(ode.lambda_coef, d, t, t1, tol)
            x = _propagate(ode, d, t, x, t1, tol)
        log_abs += expo

    return GFunctionSample(grid, left, right, is_jump, ode, d, log_e, sign_e, tol)


def residual(ode: LinearGODE, d: Derivator, sol: GFunctionSample, tol: float = DEFAULT_TOL) -> float:
    """Sup over grid points of ``|x(t) - x0 - int_[a,t) (h - lambda x) dmu_g|``.

    Uses the sample's own evaluation between grid points: the closed form
    when the sample was produced by :func:`solve_linear`, linear-in-g
    interpolation otherwise.
    """
    evaluator = sol
    if sol.derivator is None:
        evaluator = GFunctionSample(sol.grid, sol.left_values, sol.right_values, sol.is_jump, None, d)

    def integrand(s):
        return ode.h(s) - ode.lam(s) * evaluator(s)

    cum = cumulative(d, integrand, sol.grid, tol)
    return float(np.max(np.abs(sol.left_values - ode.x0 - cum.values)))
