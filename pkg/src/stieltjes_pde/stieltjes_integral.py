"""
Lebesgue-Stieltjes quadrature against a derivator's measure mu_g.

An integral over ``[a, b)`` splits into the absolutely continuous part,
handled piece by piece with adaptive Gauss-Legendre quadrature in each
segment's smooth parameter, and the atoms ``f(t) * delta_g(t)`` at the jump
times in ``[a, b)``. Constant segments carry no mass and are skipped.

Integrands are called with 1-d arrays of times and must return either a
scalar (broadcast), an array of shape ``(n,)``, or ``(n, m)`` for
vector-valued integrands.
"""
from __future__ import annotations

import math
import os
import warnings
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Callable, Sequence

import numpy as np

from .derivator import Derivator, Piece

__all__ = [
    "DEFAULT_TOL",
    "Integrand",
    "CumulativeIntegral",
    "adaptive_gauss_legendre",
    "integrate",
    "integrate_vector",
    "integrate_dt",
    "cumulative",
    "lp_norm",
]

DEFAULT_TOL = float(os.environ.get("STIELTJES_PDE_TOL", "1e-10"))
_GL_ORDER = 15
_MAX_LEVEL = 60
_MAX_PANELS = 200_000


@dataclass(frozen=True)
class Integrand:
    """A callable plus the times where it is known to be discontinuous."""

    value: Callable
    known_discontinuities: Sequence[float] = field(default_factory=tuple)

    def __call__(self, s):
        return self.value(s)


@dataclass(frozen=True)
class CumulativeIntegral:
    """``values[i]`` integrates over ``[grid[0], grid[i])``; ``right_values[i]`` over ``[grid[0], grid[i]]``."""

    grid: np.ndarray
    values: np.ndarray
    right_values: np.ndarray


@lru_cache(maxsize=8)
def _gauss_legendre(n: int):
    x, w = np.polynomial.legendre.leggauss(n)
    return x, w


def _evaluate(f, s: np.ndarray) -> np.ndarray:
    vals = np.asarray(f(s), dtype=float)
    if vals.ndim == 0:
        vals = np.full(s.shape, float(vals))
    elif vals.shape[0] != s.shape[0]:
        if vals.ndim == 1 and s.shape[0] != vals.shape[0]:
            # a constant vector returned for all nodes
            vals = np.broadcast_to(vals, (s.shape[0],) + vals.shape).copy()
        else:
            raise ValueError(
                f"integrand returned shape {vals.shape} for {s.shape[0]} nodes"
            )
    if not np.all(np.isfinite(vals)):
        bad = s[~np.isfinite(vals).reshape(len(s), -1).all(axis=1)]
        raise ValueError(f"non-finite integrand value at s = {bad[:3].tolist()}")
    return vals


def _adaptive_batch(fun, lo, hi, tol, order: int = _GL_ORDER, pass_owner: bool = False):
    """Adaptive Gauss-Legendre on many panels at once.

    Panel ``j`` (``[lo[j], hi[j]]``) is bisected until the rule on a
    sub-panel and the sum over its two halves differ by less than
    ``tol[j]`` times the sub-panel's share of the original panel, or by
    less than ``tol[j]`` times the magnitude of the sub-panel's integral,
    whichever is larger; the (more accurate) halves are kept. All sub-panels of one bisection level
    are evaluated in a single call to ``fun``. Returns one result per panel.
    With ``pass_owner`` the call is ``fun(nodes, panel_index_of_each_node)``.
    """
    lo = np.asarray(lo, dtype=float)
    hi = np.asarray(hi, dtype=float)
    tol = np.broadcast_to(np.asarray(tol, dtype=float), lo.shape)
    x, w = _gauss_legendre(order)

    def rule(a, b, own):
        half = 0.5 * (b - a)
        nodes = (0.5 * (a + b))[:, None] + half[:, None] * x[None, :]
        vals = fun(nodes.ravel(), np.repeat(own, order)) if pass_owner else fun(nodes.ravel())
        vals = vals.reshape(len(a), order, *vals.shape[1:])
        return np.einsum("pk...,k->p...", vals, w) * half.reshape((-1,) + (1,) * (vals.ndim - 2))

    owner = np.arange(lo.size)
    width = hi - lo
    a, b = lo.copy(), hi.copy()
    whole = rule(a, b, owner)
    total = np.zeros((lo.size,) + whole.shape[1:])
    for level in range(_MAX_LEVEL):
        mid = 0.5 * (a + b)
        both = rule(np.concatenate([a, mid]), np.concatenate([mid, b]), np.concatenate([owner, owner]))
        left, right = both[: len(a)], both[len(a):]
        refined = left + right
        err = np.abs(whole - refined).reshape(len(a), -1).max(axis=1)
        scale = np.abs(refined).reshape(len(a), -1).max(axis=1)
        span = width[owner]
        # absolute tolerance for O(1) values, relative beyond
        bound = tol[owner] * (b - a) / span * np.maximum(scale * span / (b - a), 1.0)
        ok = (err <= bound) | (err <= 1e-15 * scale) | (b - a <= 1e-13 * span)
        if level == _MAX_LEVEL - 1 or (~ok).sum() > _MAX_PANELS:
            if not ok.all():
                warnings.warn("adaptive quadrature stopped before reaching the tolerance",
                              RuntimeWarning, stacklevel=3)
            ok[:] = True
        np.add.at(total, owner[ok], refined[ok])
        if ok.all():
            break
        keep = ~ok
        a, mid, b, owner = a[keep], mid[keep], b[keep], owner[keep]
        whole = np.concatenate([left[keep], right[keep]])
        a, b = np.concatenate([a, mid]), np.concatenate([mid, b])
        owner = np.concatenate([owner, owner])
    return total


def adaptive_gauss_legendre(fun, lo: float, hi: float, tol: float, order: int = _GL_ORDER):
    """Adaptive bisection with a fixed Gauss-Legendre rule on ``[lo, hi]``.

    See :func:`_adaptive_batch` for the acceptance rule (absolute ``tol``
    for integrals of order one, relative ``tol`` for larger ones).
    """
    if hi <= lo:
        return 0.0
    total = _adaptive_batch(fun, [lo], [hi], tol, order)[0]
    return total if total.ndim else float(total)


def _piece_integral(piece: Piece, f, tol: float, weight: str, breaks: Sequence[float]):
    th0, th1 = piece.theta_range()
    cuts = [th0]
    inner = [s for s in breaks if piece.lo < s < piece.hi]
    if inner:
        cuts.extend(float(v) for v in np.sort(piece.segment.theta(np.asarray(inner) - piece.t_shift)))
    cuts.append(th1)

    def integrand(theta):
        t, dt, dg = piece.from_theta(theta)
        wgt = dg if weight == "dg" else dt
        vals = _evaluate(f, t)
        return vals * wgt.reshape((-1,) + (1,) * (vals.ndim - 1))

    share = tol / (len(cuts) - 1)
    parts = [adaptive_gauss_legendre(integrand, lo, hi, share) for lo, hi in zip(cuts, cuts[1:])]
    return sum(parts[1:], parts[0])


def _breaks_of(f) -> Sequence[float]:
    return tuple(getattr(f, "known_discontinuities", ()) or ())


def integrate(d: Derivator, f, a: float, b: float, tol: float = DEFAULT_TOL, *, atoms: bool = True):
    """Integral of ``f`` over ``[a, b)`` with respect to mu_g.

    ``f`` may be a number, a callable on arrays of times, or an
    :class:`Integrand`. With ``atoms=False`` only the part of mu_g off the
    jump set is used.
    """
    if not tol > 0:
        raise ValueError("tol must be positive")
    if not a <= b:
        raise ValueError(f"inverted interval [{a}, {b})")
    if isinstance(f, (int, float, np.floating)):
        c = float(f)
        mass = d.measure_minus_jumps(a, b) if not atoms else d.measure(a, b)
        return c * mass
    smooth = [p for p in d.pieces(a, b) if not p.is_constant]
    breaks = _breaks_of(f)
    total = 0.0
    for p in smooth:
        total = total + _piece_integral(p, f, tol / max(len(smooth), 1), "dg", breaks)
    if atoms:
        jumps = d.jumps_in(a, b)
        if len(jumps):
            times = np.asarray(jumps.times)
            vals = _evaluate(f, times)
            deltas = np.asarray(jumps.deltas).reshape((-1,) + (1,) * (vals.ndim - 1))
            total = total + (vals * deltas).sum(axis=0)
    if isinstance(total, np.ndarray) and total.ndim == 0:
        return float(total)
    return total


def integrate_vector(d: Derivator, f, a: float, b: float, tol: float = DEFAULT_TOL, *, atoms: bool = True) -> np.ndarray:
    """Componentwise :func:`integrate` for integrands returning ``(n, m)`` arrays."""
    probe = np.asarray(f(np.array([a])), dtype=float)
    if probe.ndim != 2 and not (probe.ndim == 1 and probe.shape[0] != 1):
        raise ValueError("vector integrand must return an (n, m) array")
    out = integrate(d, f, a, b, tol, atoms=atoms)
    out = np.asarray(out, dtype=float)
    if out.ndim == 0:
        raise ValueError("integrand is scalar-valued")
    return out


def integrate_dt(d: Derivator, f, a: float, b: float, tol: float = DEFAULT_TOL):
    """Classical Lebesgue integral of ``f`` over ``[a, b]``.

    The derivator only supplies subdivision points and smooth
    parametrisations, so integrands of the form ``h(g(s))`` are smooth in
    the quadrature variable even where g' is unbounded.
    """
    if not tol > 0:
        raise ValueError("tol must be positive")
    if not a <= b:
        raise ValueError(f"inverted interval [{a}, {b}]")
    pieces = d.pieces(a, b)
    breaks = _breaks_of(f)
    total = 0.0
    for p in pieces:
        total = total + _piece_integral(p, f, tol / max(len(pieces), 1), "dt", breaks)
    return total


def integrate_panels(d: Derivator, kernel, a, b, tol: float = DEFAULT_TOL) -> np.ndarray:
    """Continuous part of ``int_[a_j, b_j) kernel(s, j, g(s)) dmu_g(s)`` for many intervals at once.

    ``kernel(s, j, gs)`` receives times, the interval index of each time
    and ``g(s)`` computed from the smooth parameter (more accurate than
    ``d.eval_array(s)`` where g is steep).
    Jumps are ignored (``atoms=False`` semantics). Every interval is
    integrated with tolerance ``tol``; all intervals meeting one smooth
    piece of ``d`` share a single batched adaptive pass.
    """
    a = np.asarray(a, dtype=float).ravel()
    b = np.asarray(b, dtype=float).ravel()
    if a.shape != b.shape:
        raise ValueError("interval endpoint arrays differ in length")
    if np.any(b < a):
        raise ValueError("inverted interval")
    if not tol > 0:
        raise ValueError("tol must be positive")
    out = np.zeros(a.size)
    if a.size == 0:
        return out
    for piece in d.pieces(float(a.min()), float(b.max())):
        if piece.is_constant:
            continue
        lo = np.maximum(a, piece.lo)
        hi = np.minimum(b, piece.hi)
        use = np.flatnonzero(hi > lo)
        if use.size == 0:
            continue
        th_lo = piece.segment.theta(lo[use] - piece.t_shift)
        th_hi = piece.segment.theta(hi[use] - piece.t_shift)
        th0, th1 = piece.theta_range()
        th_lo = np.where(lo[use] == piece.lo, th0, th_lo)
        th_hi = np.where(hi[use] == piece.hi, th1, th_hi)

        def integrand(theta, panel, piece=piece, use=use):
            t, _, dg = piece.from_theta(theta)
            gs = piece.value_from_theta(theta)
            return _evaluate(lambda s: kernel(s, use[panel], gs), t) * dg

        out[use] += _adaptive_batch(integrand, th_lo, th_hi, tol, pass_owner=True)
    return out


def cumulative(d: Derivator, f, grid, tol: float = DEFAULT_TOL) -> CumulativeIntegral:
    """``F(t_i) = int_[t_0, t_i) f dmu_g`` and ``F(t_i+)`` for every grid point.

    All grid intervals lying in one smooth piece of ``d`` are integrated in
    a single batched adaptive pass, each with tolerance ``tol``.
    """
    grid = np.asarray(grid, dtype=float)
    if grid.ndim != 1 or grid.size == 0:
        raise ValueError("grid must be a nonempty 1-d array")
    if np.any(np.diff(grid) <= 0):
        raise ValueError("grid must be strictly increasing")
    if not tol > 0:
        raise ValueError("tol must be positive")
    a, b = float(grid[0]), float(grid[-1])
    probe = _evaluate(f, grid[:1]) if not isinstance(f, (int, float, np.floating)) else None
    if probe is None:
        c = float(f)
        f = lambda s, c=c: np.full(np.shape(s), c)  # noqa: E731
        probe = np.array([c])
    incs = np.zeros((max(grid.size - 1, 0),) + probe.shape[1:])
    breaks = np.asarray(_breaks_of(f), dtype=float)
    for piece in d.pieces(a, b):
        if piece.is_constant:
            continue
        inner = np.concatenate([grid[(grid > piece.lo) & (grid < piece.hi)],
                                breaks[(breaks > piece.lo) & (breaks < piece.hi)]])
        cuts_t = np.unique(np.concatenate([[piece.lo, piece.hi], inner]))
        th = piece.segment.theta(cuts_t - piece.t_shift)
        th[0], th[-1] = piece.theta_range()
        lo_t = cuts_t[:-1]
        owner = np.searchsorted(grid, lo_t, side="right") - 1

        def integrand(theta, piece=piece):
            t, _, dg = piece.from_theta(theta)
            vals = _evaluate(f, t)
            return vals * dg.reshape((-1,) + (1,) * (vals.ndim - 1))

        parts = _adaptive_batch(integrand, th[:-1], th[1:], tol)
        np.add.at(incs, owner, parts)
    jumps = d.jumps_in(a, b)
    if len(jumps):
        times = np.asarray(jumps.times)
        vals = _evaluate(f, times)
        deltas = np.asarray(jumps.deltas).reshape((-1,) + (1,) * (vals.ndim - 1))
        owner = np.searchsorted(grid, times, side="right") - 1
        np.add.at(incs, owner, vals * deltas)
    values = np.concatenate([np.zeros((1,) + incs.shape[1:]), np.cumsum(incs, axis=0)])
    delta = np.array([d.delta(float(t)) for t in grid])
    atoms = np.zeros_like(values)
    on = delta > 0
    if on.any():
        fv = _evaluate(f, grid[on])
        atoms[on] = fv * delta[on].reshape((-1,) + (1,) * (fv.ndim - 1))
    return CumulativeIntegral(grid, values, values + atoms)


def _norm_at(f, s):
    vals = _evaluate(f, s)
    if vals.ndim == 1:
        return np.abs(vals)
    return np.sqrt((vals ** 2).sum(axis=1))


def lp_norm(d: Derivator, f, p: float, a: float, b: float, tol: float = DEFAULT_TOL) -> float:
    """L^p_g norm of ``f`` on ``[a, b)``.

    For ``p = inf`` this is the maximum of ``|f|`` over the jump times and
    over panel edges and quadrature nodes of the non-constant pieces, a grid
    approximation of the mu_g-essential supremum (exact in the limit for
    integrands continuous on each piece) that ignores mu_g-null constancy
    intervals.
    """
    if isinstance(f, (int, float, np.floating)):
        c = float(f)
        f = lambda s, c=c: np.full(np.shape(s), c)  # noqa: E731
    if p == math.inf:
        pts = [np.asarray(d.jumps_in(a, b).times, dtype=float)]
        x, _ = _gauss_legendre(_GL_ORDER)
        for piece in d.pieces(a, b):
            if piece.is_constant:
                continue
            th0, th1 = piece.theta_range()
            edges = np.linspace(th0, th1, 65)
            mids = 0.5 * (edges[:-1] + edges[1:])
            half = 0.5 * (edges[1] - edges[0])
            theta = np.concatenate([edges, (mids[:, None] + half * x[None, :]).ravel()])
            pts.append(piece.from_theta(theta)[0])
        s = np.concatenate(pts)
        return float(_norm_at(f, s).max()) if s.size else 0.0
    if p < 1:
        raise ValueError("p must be >= 1 or inf")
    val = integrate(d, lambda s: _norm_at(f, s) ** p, a, b, tol)
    return float(max(val, 0.0) ** (1.0 / p))
