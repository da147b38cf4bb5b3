import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.integrate import quad

from stieltjes_pde.derivator import identity_derivator, silkworm_derivator, step_derivator
from stieltjes_pde.stieltjes_integral import (
    Integrand,
    adaptive_gauss_legendre,
    cumulative,
    integrate,
    integrate_dt,
    integrate_panels,
    integrate_vector,
    lp_norm,
)

SILK = silkworm_derivator()
IDENT = identity_derivator()


def g_ref(t):
    """Silkworm g on one period, written independently."""
    if t <= 2:
        return 0.5 * math.sqrt(max(4 * t - t * t, 0.0))
    if t <= 3:
        return 1.0
    if t <= 4:
        return 2 - math.sqrt(max(6 * t - t * t - 8, 0.0))
    return 3.0


def test_worked_integrals():
    assert integrate(SILK, lambda s: np.ones_like(s), 0.0, 5.0) == pytest.approx(3.0, abs=1e-10)
    assert integrate(SILK, 1.0, 0.0, 5.0) == pytest.approx(3.0, abs=1e-15)
    assert integrate(IDENT, lambda s: s, 0.0, 1.0) == pytest.approx(0.5, abs=1e-12)
    assert integrate(step_derivator(1.0, 2.0), lambda s: 5.0 + 0 * s, 0.0, 2.0) == pytest.approx(10.0, abs=1e-14)


def test_atoms_are_left_closed():
    d = step_derivator(1.0, 2.0)
    f = lambda s: s  # noqa: E731
    assert integrate(d, f, 1.0, 2.0) == pytest.approx(2.0)
    assert integrate(d, f, 0.0, 1.0) == 0.0
    assert integrate(d, f, 0.0, 2.0, atoms=False) == 0.0


def test_vector_integrals():
    out = integrate_vector(IDENT, lambda s: np.column_stack([np.ones_like(s), s]), 0.0, 1.0)
    assert out == pytest.approx([1.0, 0.5], abs=1e-12)
    out = integrate_vector(SILK, lambda s: np.tile([2.0, -1.0, 0.5], (len(s), 1)), 0.0, 7.0)
    mu = SILK.measure(0.0, 7.0)
    assert out == pytest.approx([2 * mu, -mu, 0.5 * mu], abs=1e-10)
    out = integrate_vector(IDENT, lambda s: np.column_stack([np.cos(s), np.sin(s)]), 0.0, math.pi)
    assert out == pytest.approx([0.0, 2.0], abs=1e-12)
    with pytest.raises(ValueError):
        integrate_vector(IDENT, lambda s: s, 0.0, 1.0)


def test_cumulative_examples():
    c = cumulative(SILK, lambda s: np.ones_like(s), [0, 2, 3, 5])
    assert c.values == pytest.approx([0, 1, 1, 3], abs=1e-10)
    assert np.all(cumulative(SILK, lambda s: 0 * s, np.linspace(0, 10, 11)).values == 0)
    assert cumulative(IDENT, 1.0, [0, 1, 2]).values == pytest.approx([0, 1, 2])
    with pytest.raises(ValueError):
        cumulative(IDENT, 1.0, [0, 2, 1])


def test_cumulative_matches_interval_integrals():
    grid = np.union1d(np.linspace(0, 12, 49), [4, 5, 9, 10])
    f = lambda s: np.cos(s) + s  # noqa: E731
    c = cumulative(SILK, f, grid)
    ref = [integrate(SILK, f, 0.0, t) for t in grid]
    assert np.max(np.abs(c.values - ref)) < 1e-12


def test_lp_norms():
    assert lp_norm(SILK, 2.0, 2, 0.0, 5.0) == pytest.approx(2 * math.sqrt(3), abs=1e-10)
    assert lp_norm(SILK, -3.5, math.inf, 0.0, 5.0) == 3.5
    assert lp_norm(IDENT, lambda s: s, 1, 0.0, 1.0) == pytest.approx(0.5, abs=1e-12)
    with pytest.raises(ValueError):
        lp_norm(IDENT, 1.0, 0.5, 0.0, 1.0)


def test_errors():
    with pytest.raises(ValueError):
        integrate(IDENT, lambda s: 1.0 / (s - 0.5) ** 0 * np.where(s > 0.5, np.nan, 1.0), 0.0, 1.0)
    with pytest.raises(ValueError):
        integrate(IDENT, 1.0, 0.0, 1.0, tol=0.0)
    with pytest.raises(ValueError):
        integrate(IDENT, 1.0, 2.0, 1.0)


@pytest.mark.parametrize("fun", [np.exp, np.cos, lambda s: 1 / (1 + s * s), lambda s: np.sqrt(s + 1)])
def test_classical_limit(fun):
    ref, _ = quad(fun, 0.0, 3.0, epsabs=1e-13, epsrel=1e-13)
    assert integrate(IDENT, fun, 0.0, 3.0) == pytest.approx(ref, abs=1e-10)


def test_silkworm_density_integral_against_quad():
    # smooth part of the measure on the first stage: int_0^2 s g'(s) ds
    dens = lambda s: (2 - s) / (2 * math.sqrt(4 * s - s * s))  # noqa: E731
    ref, _ = quad(lambda s: s * dens(s), 0.0, 2.0, epsabs=1e-13, limit=200)
    assert integrate(SILK, lambda s: s, 0.0, 2.0) == pytest.approx(ref, abs=1e-9)


def test_integrate_dt_against_quad():
    ref, _ = quad(lambda s: math.exp(-g_ref(s)), 0.0, 4.0, points=[2.0, 3.0], epsabs=1e-14, limit=200)
    assert integrate_dt(SILK, lambda s: np.exp(-SILK.eval_array(s)), 0.0, 4.0) == pytest.approx(ref, abs=1e-12)


def test_known_discontinuities_split_panels():
    f = Integrand(lambda s: np.where(s < 0.3, 0.0, 1.0), known_discontinuities=[0.3])
    assert integrate(IDENT, f, 0.0, 1.0) == pytest.approx(0.7, abs=1e-14)


def test_adaptive_rule_on_peaked_integrand():
    val = adaptive_gauss_legendre(lambda x: 1e-3 / (x * x + 1e-6), -1.0, 1.0, 1e-12)
    assert val == pytest.approx(2 * math.atan(1e3), rel=1e-11)


@settings(max_examples=60, deadline=None)
@given(st.floats(-5, 5), st.floats(-5, 5), st.floats(0, 6), st.floats(0, 6))
def test_linearity(alpha, beta, a, b):
    a, b = sorted((a, b))
    f = lambda s: np.sin(s)  # noqa: E731
    h = lambda s: s ** 2  # noqa: E731
    lhs = integrate(SILK, lambda s: alpha * f(s) + beta * h(s), a, b)
    rhs = alpha * integrate(SILK, f, a, b) + beta * integrate(SILK, h, a, b)
    assert lhs == pytest.approx(rhs, abs=1e-9)


def test_differentiation_on_first_stage():
    f = lambda s: np.cos(3 * s) + s  # noqa: E731
    h = 1e-6
    for t in np.linspace(0.05, 1.9, 25):
        F0 = integrate(SILK, f, 0.0, t)
        F1 = integrate(SILK, f, 0.0, t + h)
        quotient = (F1 - F0) / (SILK.eval(t + h) - SILK.eval(t))
        assert abs(quotient - f(np.array([t]))[0]) < 1e-4


def test_differentiation_at_jumps_is_exact():
    f = lambda s: np.exp(-s) + 2  # noqa: E731
    grid = np.union1d(np.linspace(0, 15, 31), SILK.jumps_in(0, 15).times)
    c = cumulative(SILK, f, grid)
    for i, t in enumerate(grid):
        dg = SILK.delta(float(t))
        if dg > 0:
            fi = f(np.array([t]))[0]
            # the atom is f(t) dg by construction; the difference only loses the running sum's rounding
            assert (c.right_values[i] - c.values[i]) / dg == pytest.approx(fi, abs=1e-13)
            assert integrate(SILK, f, float(t), float(t) + 0.5) - integrate(SILK, f, float(t), float(t) + 0.5, atoms=False) == pytest.approx(fi * dg, abs=1e-14)


def test_integrate_panels_matches_single_integrals():
    a = np.array([0.0, 0.5, 3.5, 4.0, 6.0, 9.5])
    b = np.array([2.0, 4.7, 5.0, 4.0, 11.0, 14.0])
    kernel = lambda s, j, gs: np.cos(s) * (1 + j) + gs  # noqa: E731
    got = integrate_panels(SILK, kernel, a, b)
    ref = [integrate(SILK, lambda s, j=j: np.cos(s) * (1 + j) + SILK.eval_array(s), float(lo), float(hi), atoms=False)
           for j, (lo, hi) in enumerate(zip(a, b))]
    assert np.max(np.abs(got - ref)) < 1e-9
    with pytest.raises(ValueError):
        integrate_panels(SILK, kernel, [1.0], [0.5])
