"""
Derivators: nondecreasing, left-continuous functions g and their measures.

A derivator is stored as an ordered list of segments tiling ``[0, T_max)``.
Each segment carries a closed-form shape (affine, constant, or a circular
square-root arc) and an optional jump appended at its right end. Because
``g`` is left-continuous, the value at a junction ``b`` is the left limit of
the segment ending at ``b`` and ``g(b+) = g(b) + jump_after``.

Periodic derivators repeat the base pattern with a constant increment::

    g(t) = n * increment + g_base(t - n * period),   t - n * period in (0, period]

so jump times come out as exact sums of representable numbers.
"""
from __future__ import annotations

import bisect
import json
import math
from dataclasses import dataclass, field
from typing import Iterator, Mapping

import numpy as np

__all__ = [
    "DomainError",
    "Segment",
    "Piece",
    "JumpList",
    "Derivator",
    "identity_derivator",
    "silkworm_derivator",
    "step_derivator",
    "builtin_derivator",
    "load_derivator",
    "BUILTINS",
]

_JUNCTION_TOL = 1e-12

SHAPES = ("identity", "affine", "constant", "sqrt_rise", "sqrt_fall")


class DomainError(ValueError):
    """Raised for times or intervals outside the derivator's domain."""


# ---------------------------------------------------------------------------
# segments
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Segment:
    """One closed-form piece of a derivator on ``[start, end)``.

    Shapes and parameters
    ---------------------
    identity   : g = t
    affine     : g = intercept + slope * t               (slope >= 0)
    constant   : g = level
    sqrt_rise  : g = offset + scale * sqrt(radius^2 - (t - center)^2),
                 span inside ``[center - radius, center]``
    sqrt_fall  : g = offset - scale * sqrt(radius^2 - (t - center)^2),
                 span inside ``[center, center + radius]``

    The square-root arcs have densities that blow up at the circle's
    horizontal tangents, so quadrature is done in the angle ``theta`` of
    the arc, where both ``t`` and ``g`` are smooth.
    """

    shape: str
    start: float
    end: float
    params: Mapping[str, float] = field(default_factory=dict)
    jump_after: float = 0.0

    def __post_init__(self):
        if self.shape not in SHAPES:
            raise ValueError(f"unknown segment shape {self.shape!r}")
        if not self.end > self.start:
            raise ValueError(f"segment [{self.start}, {self.end}) is empty")
        if not (self.jump_after >= 0 and math.isfinite(self.jump_after)):
            raise ValueError("jump_after must be a finite nonnegative number")
        object.__setattr__(self, "params", dict(self.params))
        p = self.params
        if self.shape == "affine":
            if p.get("slope", 0.0) < 0:
                raise ValueError("affine segment must be nondecreasing")
        elif self.shape in ("sqrt_rise", "sqrt_fall"):
            c, r = p["center"], p["radius"]
            if r <= 0 or p.get("scale", 1.0) < 0:
                raise ValueError("sqrt arcs need radius > 0 and scale >= 0")
            lo, hi = (c - r, c) if self.shape == "sqrt_rise" else (c, c + r)
            if self.start < lo - 1e-14 or self.end > hi + 1e-14:
                raise ValueError(
                    f"{self.shape} span [{self.start}, {self.end}] leaves the "
                    f"monotone arc [{lo}, {hi}]"
                )

    # -- closed forms -------------------------------------------------------
    @property
    def is_constant(self) -> bool:
        if self.shape == "constant":
            return True
        if self.shape == "affine":
            return self.params.get("slope", 0.0) == 0.0
        if self.shape in ("sqrt_rise", "sqrt_fall"):
            return self.params.get("scale", 1.0) == 0.0
        return False

    def value(self, t):
        t = np.asarray(t, dtype=float)
        p = self.params
        if self.shape == "identity":
            return t + 0.0
        if self.shape == "affine":
            return p.get("intercept", 0.0) + p.get("slope", 0.0) * t
        if self.shape == "constant":
            return np.full_like(t, p["level"])
        c, r = p["center"], p["radius"]
        x = t - c
        # factored form stays accurate near the arc ends
        root = np.sqrt(np.maximum((r - x) * (r + x), 0.0))
        sign = 1.0 if self.shape == "sqrt_rise" else -1.0
        return p.get("offset", 0.0) + sign * p.get("scale", 1.0) * root

    def density(self, t):
        """Classical derivative g'(t) (infinite at arc tangents)."""
        t = np.asarray(t, dtype=float)
        p = self.params
        if self.shape == "identity":
            return np.ones_like(t)
        if self.shape == "affine":
            return np.full_like(t, p.get("slope", 0.0))
        if self.shape == "constant":
            return np.zeros_like(t)
        c, r = p["center"], p["radius"]
        x = t - c
        # factored form stays accurate near the arc ends
        root = np.sqrt(np.maximum((r - x) * (r + x), 0.0))
        sign = 1.0 if self.shape == "sqrt_rise" else -1.0
        with np.errstate(divide="ignore", invalid="ignore"):
            return -sign * p.get("scale", 1.0) * x / root

    # -- smooth parametrisation --------------------------------------------
    def theta(self, t):
        """Map times in the span to the smooth parameter."""
        t = np.asarray(t, dtype=float)
        if self.shape == "sqrt_rise":
            c, r = self.params["center"], self.params["radius"]
            return np.arccos(np.clip((c - t) / r, -1.0, 1.0))
        if self.shape == "sqrt_fall":
            c, r = self.params["center"], self.params["radius"]
            return np.arcsin(np.clip((t - c) / r, -1.0, 1.0))
        return t + 0.0

    def from_theta(self, theta):
        """Return ``(t, dt/dtheta, dg/dtheta)`` at the given parameters."""
        theta = np.asarray(theta, dtype=float)
        p = self.params
        if self.shape == "sqrt_rise":
            c, r, s = p["center"], p["radius"], p.get("scale", 1.0)
            t = c - r * np.cos(theta)
            return t, r * np.sin(theta), s * r * np.cos(theta)
        if self.shape == "sqrt_fall":
            c, r, s = p["center"], p["radius"], p.get("scale", 1.0)
            t = c + r * np.sin(theta)
            return t, r * np.cos(theta), s * r * np.sin(theta)
        ones = np.ones_like(theta)
        return theta + 0.0, ones, self.density(theta) * ones

    def value_from_theta(self, theta):
        """g at the smooth parameter, without the rounding of an intermediate time."""
        theta = np.asarray(theta, dtype=float)
        p = self.params
        if self.shape == "sqrt_rise":
            return p.get("offset", 0.0) + p.get("scale", 1.0) * p["radius"] * np.sin(theta)
        if self.shape == "sqrt_fall":
            return p.get("offset", 0.0) - p.get("scale", 1.0) * p["radius"] * np.cos(theta)
        return self.value(theta)

    def to_dict(self) -> dict:
        return {
            "kind": "constant" if self.is_constant else "smooth",
            "shape": self.shape,
            "span": [self.start, self.end],
            "params": dict(self.params),
            "jump_after": self.jump_after,
        }

    @classmethod
    def from_dict(cls, data: Mapping) -> "Segment":
        start, end = data["span"]
        shape = data.get("shape", data.get("tag"))
        if shape is None:
            shape = "constant" if data.get("kind") == "constant" else None
        if shape is None:
            raise ValueError("segment description needs a 'shape' tag")
        return cls(
            shape=shape,
            start=float(start),
            end=float(end),
            params={k: float(v) for k, v in data.get("params", {}).items()},
            jump_after=float(data.get("jump_after", 0.0)),
        )


@dataclass(frozen=True)
class Piece:
    """Overlap of an (unrolled) segment with a query window.

    On ``[lo, hi]`` the derivator equals ``g_shift + segment.value(t - t_shift)``.
    """

    lo: float
    hi: float
    segment: Segment
    t_shift: float
    g_shift: float

    @property
    def is_constant(self) -> bool:
        return self.segment.is_constant

    def value(self, t):
        return self.g_shift + self.segment.value(np.asarray(t) - self.t_shift)

    @property
    def increment(self) -> float:
        """Continuous growth of g across the piece."""
        if self.is_constant:
            return 0.0
        seg = self.segment
        return float(seg.value(self.hi - self.t_shift) - seg.value(self.lo - self.t_shift))

    def theta_range(self) -> tuple[float, float]:
        seg = self.segment
        th = seg.theta(np.array([self.lo, self.hi]) - self.t_shift)
        return float(th[0]), float(th[1])

    def from_theta(self, theta):
        t, dt, dg = self.segment.from_theta(theta)
        return t + self.t_shift, dt, dg

    def value_from_theta(self, theta):
        return self.g_shift + self.segment.value_from_theta(theta)


@dataclass(frozen=True)
class JumpList:
    times: tuple[float, ...] = ()
    deltas: tuple[float, ...] = ()

    def __len__(self):
        return len(self.times)

    def __iter__(self):
        return iter(zip(self.times, self.deltas))

    @property
    def total(self) -> float:
        return float(math.fsum(self.deltas))


# ---------------------------------------------------------------------------
# derivator
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Derivator:
    """Piecewise closed-form derivator, optionally periodic.

    Parameters
    ----------
    segments : sequence of Segment
        Must tile ``[0, T_max)`` without gaps. The last ``end`` may be
        ``inf`` for non-periodic derivators.
    period : float, optional
        If given it must equal ``T_max`` and the derivator is extended to
        all ``t >= 0``.
    """

    segments: tuple[Segment, ...]
    period: float | None = None
    name: str = ""

    def __post_init__(self):
        segs = tuple(self.segments)
        object.__setattr__(self, "segments", segs)
        if not segs:
            raise ValueError("a derivator needs at least one segment")
        if segs[0].start != 0.0:
            raise ValueError("segments must start at t = 0")
        for prev, nxt in zip(segs, segs[1:]):
            if nxt.start != prev.end:
                raise ValueError(
                    f"segments must tile the domain: gap/overlap at {prev.end} vs {nxt.start}"
                )
            if not math.isfinite(prev.end):
                raise ValueError("only the last segment may be unbounded")
            left = float(prev.value(prev.end)) + prev.jump_after
            right = float(nxt.value(nxt.start))
            if abs(left - right) > _JUNCTION_TOL * max(1.0, abs(left)):
                raise ValueError(
                    f"inconsistent junction at t={prev.end}: "
                    f"g(t)+jump = {left} but next segment starts at {right}"
                )
        if self.period is not None:
            if not (self.period > 0 and self.period == segs[-1].end):
                raise ValueError("period must equal the end of the last segment")
        object.__setattr__(self, "_ends", [s.end for s in segs])
        g0 = float(segs[0].value(0.0))
        object.__setattr__(self, "_g0", g0)
        if self.period is not None:
            last = segs[-1]
            inc = float(last.value(last.end)) + last.jump_after - g0
            object.__setattr__(self, "_increment", inc)

    # -- basic properties ---------------------------------------------------
    @property
    def t_max(self) -> float:
        return math.inf if self.period is not None else self.segments[-1].end

    @property
    def increment(self) -> float:
        """Growth of g over one period (periodic derivators only)."""
        if self.period is None:
            raise AttributeError("increment is defined for periodic derivators only")
        return self._increment

    def _check(self, t: float) -> None:
        if not (t >= 0):
            raise DomainError(f"t = {t} is outside the domain [0, {self.t_max}]")
        if t > self.t_max:
            raise DomainError(f"t = {t} is outside the domain [0, {self.t_max}]")

    def _check_interval(self, a: float, b: float) -> None:
        if not a <= b:
            raise DomainError(f"inverted interval [{a}, {b})")
        self._check(a)
        self._check(b)

    def _split(self, t: float) -> tuple[int, float]:
        """Return ``(n, tau)`` with ``t = n * period + tau`` and ``tau`` in (0, P]."""
        if self.period is None or t <= self.period:
            return 0, t
        n = math.ceil(t / self.period) - 1
        tau = t - n * self.period
        # guard against rounding putting tau outside (0, P]
        if tau <= 0.0:
            n -= 1
            tau = t - n * self.period
        elif tau > self.period:
            n += 1
            tau = t - n * self.period
        return n, tau

    def _base_index(self, tau: float) -> int:
        idx = bisect.bisect_left(self._ends, tau)
        return min(idx, len(self.segments) - 1)

    # -- evaluation ---------------------------------------------------------
    def eval(self, t: float) -> float:
        """g(t) with the left-continuous convention at junctions."""
        t = float(t)
        self._check(t)
        n, tau = self._split(t)
        seg = self.segments[self._base_index(tau)]
        val = float(seg.value(tau))
        return val + n * self._increment if n else val

    __call__ = eval

    def eval_array(self, t) -> np.ndarray:
        t = np.asarray(t, dtype=float)
        flat = t.ravel()
        if flat.size and (not np.all(flat >= 0) or flat.max() > self.t_max):
            raise DomainError("times outside the derivator domain")
        out = np.empty_like(flat)
        n = np.zeros_like(flat)
        tau = flat
        if self.period is not None:
            P = self.period
            n = np.where(flat > P, np.ceil(flat / P) - 1, 0.0)
            tau = flat - n * P
            low = (tau <= 0) & (flat > 0)
            n[low] -= 1
            tau = flat - n * P
        idx = np.searchsorted(self._ends, tau, side="left")
        idx = np.minimum(idx, len(self.segments) - 1)
        for k in np.unique(idx):
            mask = idx == k
            out[mask] = self.segments[k].value(tau[mask])
        if self.period is not None:
            out += n * self._increment
        return out.reshape(t.shape)

    def delta(self, t: float) -> float:
        """Jump size g(t+) - g(t)."""
        t = float(t)
        self._check(t)
        if t == 0.0:
            return 0.0
        _, tau = self._split(t)
        idx = self._base_index(tau)
        seg = self.segments[idx]
        return seg.jump_after if tau == seg.end else 0.0

    def right_limit(self, t: float) -> float:
        return self.eval(t) + self.delta(t)

    # -- interval structure -------------------------------------------------
    def _unrolled(self, a: float, b: float) -> Iterator[tuple[Segment, float, float]]:
        """Yield ``(segment, t_shift, g_shift)`` for unrolled segments meeting [a, b]."""
        if self.period is None:
            for seg in self.segments:
                if seg.end >= a and seg.start <= b:
                    yield seg, 0.0, 0.0
            return
        P = self.period
        n0 = max(int(math.floor(a / P)) - 1, 0)
        n = n0
        while n * P <= b:
            shift = n * P
            for seg in self.segments:
                if seg.end + shift >= a and seg.start + shift <= b:
                    yield seg, shift, n * self._increment
            n += 1

    def pieces(self, a: float, b: float) -> list[Piece]:
        """Nonempty overlaps of unrolled segments with ``[a, b]``, in order."""
        self._check_interval(a, b)
        out = []
        for seg, ts, gs in self._unrolled(a, b):
            lo = max(a, seg.start + ts)
            hi = min(b, seg.end + ts)
            if hi > lo:
                out.append(Piece(lo, hi, seg, ts, gs))
        return out

    def jumps_in(self, a: float, b: float) -> JumpList:
        """All jump times in ``[a, b)`` with their sizes."""
        self._check_interval(a, b)
        times, deltas = [], []
        for seg, ts, _ in self._unrolled(a, b):
            if seg.jump_after > 0:
                tj = seg.end + ts
                if a <= tj < b:
                    times.append(tj)
                    deltas.append(seg.jump_after)
        return JumpList(tuple(times), tuple(deltas))

    def breakpoints(self, a: float, b: float) -> list[float]:
        """Segment junctions inside ``[a, b]``, endpoints included."""
        self._check_interval(a, b)
        pts = {a, b}
        for seg, ts, _ in self._unrolled(a, b):
            for x in (seg.start + ts, seg.end + ts):
                if a <= x <= b:
                    pts.add(x)
        return sorted(pts)

    def measure(self, a: float, b: float) -> float:
        """mu_g([a, b)) = g(b) - g(a)."""
        self._check_interval(a, b)
        return self.eval(b) - self.eval(a)

    def measure_minus_jumps(self, a: float, b: float) -> float:
        """mu_g([a, b) minus D_g), summed piece by piece (exact on constancy)."""
        self._check_interval(a, b)
        return math.fsum(p.increment for p in self.pieces(a, b))

    def constancy_components(self, a: float, b: float) -> list[tuple[float, float]]:
        """Maximal open subintervals of (a, b) where g is constant."""
        self._check_interval(a, b)
        comps: list[list[float]] = []
        prev_jump = True
        for seg, ts, _ in self._unrolled(a, b):
            s, e = seg.start + ts, seg.end + ts
            if seg.is_constant:
                if comps and not prev_jump and comps[-1][1] == s:
                    comps[-1][1] = e
                else:
                    comps.append([s, e])
            prev_jump = seg.jump_after > 0 or not seg.is_constant
        out = []
        for s, e in comps:
            lo, hi = max(s, a), min(e, b)
            if hi > lo:
                out.append((lo, hi))
        return out

    def is_continuous_at_zero(self) -> bool:
        return self.delta(0.0) == 0.0

    # -- serialisation ------------------------------------------------------
    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "period": self.period,
            "segments": [s.to_dict() for s in self.segments],
        }

    def to_json(self, **kw) -> str:
        return json.dumps(self.to_dict(), **kw)

    @classmethod
    def from_dict(cls, data: Mapping) -> "Derivator":
        segs = [Segment.from_dict(s) for s in data["segments"]]
        period = data.get("period")
        return cls(tuple(segs), None if period is None else float(period), data.get("name", ""))

    @classmethod
    def from_json(cls, text: str) -> "Derivator":
        return cls.from_dict(json.loads(text))


# ---------------------------------------------------------------------------
# builtins
# ---------------------------------------------------------------------------

def identity_derivator(t_max: float = math.inf) -> Derivator:
    """g(t) = t; recovers classical derivatives."""
    return Derivator((Segment("identity", 0.0, t_max),), name="identity")


def silkworm_derivator() -> Derivator:
    """Life-cycle derivator of the silkworm model, period 5, increment 4.

    On one period::

        1/2 sqrt(4t - t^2)      0 <= t <= 2
        1                       2 <  t <= 3
        2 - sqrt(6t - t^2 - 8)  3 <  t <= 4
        3                       4 <  t <= 5

    with unit jumps at 4 (death) and 5 (birth).
    """
    segs = (
        Segment("sqrt_rise", 0.0, 2.0, {"center": 2.0, "radius": 2.0, "scale": 0.5, "offset": 0.0}),
        Segment("constant", 2.0, 3.0, {"level": 1.0}),
        Segment("sqrt_fall", 3.0, 4.0, {"center": 3.0, "radius": 1.0, "scale": 1.0, "offset": 2.0},
                jump_after=1.0),
        Segment("constant", 4.0, 5.0, {"level": 3.0}, jump_after=1.0),
    )
    return Derivator(segs, period=5.0, name="silkworm")


def step_derivator(t0: float = 1.0, height: float = 2.0, t_max: float = math.inf) -> Derivator:
    """Pure jump measure: constant 0, then constant ``height`` after ``t0``."""
    segs = (
        Segment("constant", 0.0, t0, {"level": 0.0}, jump_after=height),
        Segment("constant", t0, t_max, {"level": height}),
    )
    return Derivator(segs, name="step")


BUILTINS = {
    "identity": identity_derivator,
    "silkworm": silkworm_derivator,
    "step": step_derivator,
}


def builtin_derivator(name: str) -> Derivator:
    try:
        return BUILTINS[name]()
    except KeyError:
        raise ValueError(f"unknown builtin derivator {name!r}; choose from {sorted(BUILTINS)}") from None


def load_derivator(spec: str) -> Derivator:
    """Resolve a builtin name or a path to a JSON description."""
    if spec in BUILTINS:
        return builtin_derivator(spec)
    with open(spec, encoding="utf-8") as fh:
        return Derivator.from_json(fh.read())
