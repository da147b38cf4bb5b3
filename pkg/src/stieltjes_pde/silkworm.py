"""
Silkworm population model with a life-cycle derivator.

The time scale g has period 5: a smooth first stage on [0, 2], a lapse on
(2, 3], a second stage on (3, 4], a unit jump at 4 (death of the adults),
a lapse on (4, 5] and a unit jump at 5 (hatching). The population law is

    x'_g = f(t, x, x),   f(t, x, phi) = -c x                                off the impulses,
                                      = -x                                  at t = 5k + 4,
                                      = lambda_birth int_{t-5}^{t-1} phi    at t = 5(k+1),

so that the population is wiped out at 5k + 4 and reborn at 5(k+1) in
proportion to the life of the previous generation. In two space dimensions
with diffusion the modal coefficients obey the same law with the decay
rate ``c`` replaced by ``lambda_h + c - 1`` (``lambda_h`` an eigenvalue of
``eta K + M``); diffusion acts only on the smooth stages, not at impulses.

``solve_0d`` integrates the mean model with :mod:`g_ode`, one generation at
a time. ``solve_2d`` evaluates the modal closed form. The spatial mean of
the second equals the first because the constant function is a discrete
eigenfunction with ``lambda_h = 1``.
"""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .derivator import Derivator, silkworm_derivator
from .fem import EigenBasis, Mesh, assemble_mass, eigenbasis, evaluate, project
from .g_ode import GFunctionSample, LinearGODE, jump_update, solve_linear
from .spectral_solver import default_grid
from .stieltjes_integral import DEFAULT_TOL, integrate_dt

__all__ = [
    "PERIOD",
    "DEATH_OFFSET",
    "SilkwormParams",
    "ModelOutput",
    "forcing",
    "closed_form_mode",
    "memory_integral",
    "initial_profile",
    "solve_0d",
    "solve_2d",
]

PERIOD = 5.0
DEATH_OFFSET = 4.0
_TIME_EPS = 1e-12


@dataclass(frozen=True)
class SilkwormParams:
    c: float = 1.0
    lambda_birth: float = 2.0
    x0_total: float = 1.0
    eta: float = 1e-3
    T: float = 15.0
    n_modes: int = 150

    def __post_init__(self):
        for name in ("c", "lambda_birth", "x0_total", "eta", "T"):
            val = getattr(self, name)
            if not (isinstance(val, (int, float)) and math.isfinite(val) and val > 0):
                raise ValueError(f"{name} must be a positive number, got {val!r}")
        if int(self.n_modes) < 1:
            raise ValueError("n_modes must be at least 1")

    @classmethod
    def from_dict(cls, data) -> "SilkwormParams":
        unknown = set(data) - set(cls.__dataclass_fields__)
        if unknown:
            raise ValueError(f"unknown parameter(s): {sorted(unknown)}")
        return cls(**data)

    @classmethod
    def from_json(cls, path) -> "SilkwormParams":
        return cls.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))

    def to_dict(self) -> dict:
        return asdict(self)


def _cycle(t: float) -> tuple[int, float]:
    """Generation index k and phase in [0, 5) with t = 5k + phase."""
    k = math.floor(t / PERIOD + _TIME_EPS)
    return k, t - PERIOD * k


def _is_birth(t: float) -> bool:
    k, phase = _cycle(t)
    return k >= 1 and abs(phase) <= _TIME_EPS


def _is_death(t: float) -> bool:
    return abs(_cycle(t)[1] - DEATH_OFFSET) <= _TIME_EPS


def forcing(t: float, x: float, history=None, params: SilkwormParams | None = None,
            derivator: Derivator | None = None, tol: float = DEFAULT_TOL) -> float:
    """Right-hand side of the population law.

    ``history`` is a vectorised callable giving the population on
    ``[t - 5, t - 1]``; it is only needed at hatching times.
    """
    if t < 0:
        raise ValueError("t must be nonnegative")
    p = params or SilkwormParams()
    if _is_birth(t):
        if history is None:
            raise ValueError(f"history on [{t - 5}, {t - 1}] is required at hatching time t={t}")
        return p.lambda_birth * memory_integral(history, t - PERIOD, t - 1.0, derivator, tol)
    if _is_death(t):
        return -x
    return -p.c * x


def memory_integral(history, a: float, b: float, derivator: Derivator | None = None,
                    tol: float = DEFAULT_TOL):
    """``int_a^b history(s) ds`` split at the derivator's breakpoints.

    ``history`` may return one value per time or an ``(n, m)`` array.
    """
    d = derivator or silkworm_derivator()
    return integrate_dt(d, history, a, b, tol)


def _rate(lambda_h, params: SilkwormParams):
    return np.asarray(lambda_h, dtype=float) + params.c - 1.0


def closed_form_mode(lambda_h: float, params: SilkwormParams, t: float,
                     prev_cycle_integral: float | None = None, xi0: float | None = None,
                     derivator: Derivator | None = None) -> float:
    """Modal coefficient at time ``t`` (left value).

    On [0, 4] it is ``xi0 exp(-(lambda_h + c - 1) g(t))``; on (5k, 5k+4]
    it is ``lambda_birth I exp(-(lambda_h + c - 1)(g(t) - g(5k+)))`` with
    ``I`` the previous generation's integral; it vanishes elsewhere.
    ``xi0`` defaults to ``x0_total``, the constant-mode value.
    """
    d = derivator or silkworm_derivator()
    rate = float(_rate(lambda_h, params))
    k, phase = _cycle(t)
    if k == 0 and phase <= DEATH_OFFSET:
        x0 = params.x0_total if xi0 is None else xi0
        return x0 * math.exp(-rate * (d.eval(t) - d.eval(0.0)))
    if k >= 1 and _TIME_EPS < phase <= DEATH_OFFSET + _TIME_EPS:
        if prev_cycle_integral is None:
            raise ValueError(f"prev_cycle_integral is required at t={t}")
        start = d.right_limit(PERIOD * k)
        return params.lambda_birth * prev_cycle_integral * math.exp(-rate * (d.eval(t) - start))
    return 0.0


@dataclass
class ModelOutput:
    """Sampled model output.

    ``mean_left`` holds values at grid times and ``mean_right`` the right
    limits (equal to ``mean_left`` off the jump set). The modal arrays are
    ``(len(grid), n_modes)`` and only filled by :func:`solve_2d`.
    """

    grid: np.ndarray
    mean_left: np.ndarray
    mean_right: np.ndarray
    is_jump: np.ndarray
    modal_left: np.ndarray | None = None
    modal_right: np.ndarray | None = None
    eigenvalues: np.ndarray | None = None
    snapshots: dict = field(default_factory=dict)
    cycle_integrals: np.ndarray | None = None

    @property
    def mean_series(self) -> np.ndarray:
        return self.mean_left


def initial_profile(mesh: Mesh, x0_total: float, M=None) -> np.ndarray:
    """Nodal values of ``x0 (x^2 + y^2) / int (r^2 + s^2)``.

    The normalising integral is the discrete one, ``1' M q``, so that the
    discrete total population is exactly ``x0``.
    """
    if M is None:
        M = assemble_mass(mesh)
    q = (mesh.nodes ** 2).sum(axis=1)
    return x0_total * q / float(np.ones(mesh.n_nodes) @ (M @ q))


def _model_grid(d: Derivator, T: float, grid, n_per_stretch: int) -> np.ndarray:
    if grid is None:
        return default_grid(d, T, n_per_stretch)
    grid = np.asarray(grid, dtype=float)
    if grid[0] != 0.0 or np.any(np.diff(grid) <= 0):
        raise ValueError("grid must start at 0 and be strictly increasing")
    missing = sorted(set(d.jumps_in(0.0, grid[-1]).times) - set(grid.tolist()))
    if missing:
        raise ValueError(f"grid is missing jump times {missing[:5]}")
    return grid


def solve_0d(params: SilkwormParams, derivator: Derivator | None = None, grid=None,
             n_per_stretch: int = 200, tol: float = DEFAULT_TOL) -> ModelOutput:
    """Mean population, generation by generation with :func:`g_ode.solve_linear`.

    Each generation is the linear g-ODE with rate ``c`` on [5k, 5k+4], started
    by the hatching impulse at 5k (coefficient 0, source from the previous
    generation's integral). The death impulse at 5k+4 is applied with the
    jump relation ``x+ = x + f(t, x) dg`` and the population stays at its
    right limit across the following lapse.
    """
    d = derivator or silkworm_derivator()
    T = float(params.T)
    grid = _model_grid(d, T, grid, n_per_stretch)
    left = np.zeros(len(grid))
    right = np.zeros(len(grid))
    is_jump = np.array([d.delta(float(t)) > 0 for t in grid])
    integrals = []
    prev: GFunctionSample | None = None
    n_gen = int(math.floor(T / PERIOD + _TIME_EPS))
    for k in range(n_gen + 1):
        a = PERIOD * k
        b = min(a + DEATH_OFFSET, T)
        if a > T:
            break
        sel = (grid >= a) & (grid <= b)
        if k == 0:
            ode = LinearGODE(params.c, 0.0, params.x0_total, (a, b))
        else:
            birth = forcing(a, 0.0, prev, params, d, tol)
            integrals.append(birth / params.lambda_birth)
            ode = LinearGODE(params.c, 0.0, 0.0, (a, b),
                             jump_forcing={a: birth}, jump_coefficient={a: 0.0})
        # the last point is handled below: the death impulse follows its own law
        sample = solve_linear(ode, d, grid[sel], tol)
        left[sel] = sample.left_values
        right[sel] = sample.plus_values
        if b == a + DEATH_OFFSET:
            i = np.flatnonzero(sel)[-1]
            x = sample.left_values[-1]
            right[i] = jump_update(x, 0.0, forcing(b, x, None, params, d), d.delta(b))
            lapse = (grid > b) & (grid <= a + PERIOD)
            left[lapse] = right[i]
            right[lapse] = right[i]
            # the hatching right limit at 5(k+1) is written by the next generation
        prev = sample
    mean_right = np.where(is_jump, right, left)
    return ModelOutput(grid, left, mean_right, is_jump, cycle_integrals=np.array(integrals))


def _modal_values(rates: np.ndarray, amps: np.ndarray, d: Derivator, s: np.ndarray, side: str = "left") -> np.ndarray:
    """Closed-form modal values at times ``s`` from per-generation amplitudes.

    ``amps[k]`` is the right limit of every mode at 5k (the initial
    coefficients for k = 0).
    """
    s = np.asarray(s, dtype=float)
    out = np.zeros((s.size, rates.size))
    g = d.eval_array(s)
    if side == "right":
        g = np.array([d.right_limit(float(t)) for t in s])
    for n, t in enumerate(s):
        k, phase = _cycle(float(t))
        if k >= amps.shape[0]:
            continue
        if side == "right" and (abs(phase - DEATH_OFFSET) <= _TIME_EPS):
            continue
        if k >= 1 and phase <= _TIME_EPS and side == "left":
            continue
        if phase > DEATH_OFFSET + _TIME_EPS:
            continue
        start = d.right_limit(PERIOD * k) if k >= 1 else d.eval(0.0)
        out[n] = amps[k] * np.exp(-rates * (g[n] - start))
    return out


def solve_2d(params: SilkwormParams, mesh: Mesh, derivator: Derivator | None = None, grid=None,
             snapshots=(), basis: EigenBasis | None = None, n_per_stretch: int = 200,
             tol: float = DEFAULT_TOL) -> ModelOutput:
    """Diffusive model on ``mesh`` by modal closed forms.

    ``snapshots`` lists times whose nodal field is returned; a string such
    as ``"5+"`` asks for the right limit at that time.
    """
    d = derivator or silkworm_derivator()
    T = float(params.T)
    grid = _model_grid(d, T, grid, n_per_stretch)
    M = assemble_mass(mesh)
    if basis is None:
        basis = eigenbasis(mesh, min(params.n_modes, mesh.n_nodes), params.eta, 1.0, "neumann")
    lam = basis.eigenvalues
    if np.any(lam <= 0):
        raise ValueError("eigenvalues must be positive")
    rates = _rate(lam, params)
    u0 = initial_profile(mesh, params.x0_total, M)
    xi0 = project(u0, basis, M)

    n_gen = int(math.floor(T / PERIOD + _TIME_EPS))
    amps = [xi0]
    integrals = []
    for k in range(1, n_gen + 1):
        prev_amp = amps[-1]
        a = PERIOD * (k - 1)

        def history(s, prev_amp=prev_amp, a=a):
            s = np.asarray(s, dtype=float)
            start = d.right_limit(a) if a > 0 else d.eval(0.0)
            return prev_amp[None, :] * np.exp(-rates[None, :] * (d.eval_array(s) - start)[:, None])

        integ = np.asarray(memory_integral(history, a, a + DEATH_OFFSET, d, tol), dtype=float)
        integrals.append(integ)
        amps.append(params.lambda_birth * integ)
    amps = np.array(amps)

    modal_left = _modal_values(rates, amps, d, grid, "left")
    modal_right = _modal_values(rates, amps, d, grid, "right")
    is_jump = np.array([d.delta(float(t)) > 0 for t in grid])
    modal_right[~is_jump] = modal_left[~is_jump]
    weights = basis.vectors.T @ (M @ np.ones(mesh.n_nodes))
    mean_left = modal_left @ weights
    mean_right = modal_right @ weights

    snaps = {}
    for spec in snapshots:
        text = str(spec).strip()
        side = "right" if text.endswith("+") else "left"
        t = float(text.rstrip("+"))
        if not 0.0 <= t <= T:
            raise ValueError(f"snapshot time {t} outside [0, {T}]")
        coeffs = _modal_values(rates, amps, d, np.array([t]), side)[0]
        if side == "right" and d.delta(t) == 0:
            coeffs = _modal_values(rates, amps, d, np.array([t]), "left")[0]
        snaps[text] = evaluate(coeffs, basis)
    return ModelOutput(grid, mean_left, mean_right, is_jump, modal_left, modal_right, lam, snaps,
                       np.array(integrals) if integrals else np.zeros((0, lam.size)))
