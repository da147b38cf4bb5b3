"""Independent reference computations used by the test-suite."""
from __future__ import annotations

import math

import numpy as np
from scipy.integrate import quad, solve_ivp


def hypothesis_bruteforce(d, lam, T, n_grid=100):
    """H2-H5 from their defining expressions, by direct summation.

    Between consecutive jumps the continuous part of mu_g is integrated in
    closed form in the variable m = mu_c([0, s)); atoms are summed directly.
    The sup-grid is ``n_grid`` uniform points plus every jump time and its
    right limit.
    """
    jumps = [(float(t), float(dg)) for t, dg in d.jumps_in(0.0, T)]
    J = np.array([t for t, _ in jumps])
    D = np.array([dg for _, dg in jumps])

    def mu_c(t):
        return d.measure_minus_jumps(0.0, t)

    def E(t, plus=False):
        prod = 1.0
        for u, dg in jumps:
            if u < t or (plus and u == t):
                prod *= abs(1.0 - lam * dg) ** 2
        return math.exp(-2.0 * lam * mu_c(t)) * prod

    # continuous stretches between jumps: [c_i, c_{i+1}) with m-range [m_i, m_{i+1}]
    cuts = [0.0] + [u for u, _ in jumps] + [T]

    def G(t, plus=False):
        """int_[0,t) K(s,t) dmu_g(s), K(s,t) = exp(-2 lam mu_c([s,t))) prod_{(s,t)} |1-lam dg|^2."""
        mt = mu_c(t)
        total = 0.0
        for u, dg in jumps:
            if u < t or (plus and u == t):
                prod = 1.0
                for v, dv in jumps:
                    if u < v < t or (plus and v == t and u < t):
                        prod *= abs(1.0 - lam * dv) ** 2
                total += math.exp(-2.0 * lam * (mt - mu_c(u))) * prod * dg
        for a, b in zip(cuts[:-1], cuts[1:]):
            if a >= t:
                break
            b = min(b, t)
            prod = 1.0
            for v, dv in jumps:
                if b <= v < t or (plus and v == t):
                    prod *= abs(1.0 - lam * dv) ** 2
            ma, mb = mu_c(a), mu_c(b)
            # int over m in [ma, mb] of exp(-2 lam (mt - m)) dm
            total += prod * (math.exp(-2 * lam * (mt - mb)) - math.exp(-2 * lam * (mt - ma))) / (2 * lam)
        return total

    grid = sorted(set(np.linspace(0.0, T, n_grid).tolist()) | set(J.tolist()))
    h2 = max(max(E(t) for t in grid), max((E(u, True) for u in J if u < T), default=0.0))
    h4 = max(max(G(t) for t in grid), max((G(u, True) for u in J if u < T), default=0.0))

    # H3, H5: atoms plus continuous parts; on a stretch between jumps E and G
    # are explicit functions of m, integrated in closed form.
    h3 = sum(lam * E(u) * dg for u, dg in jumps if u < T)
    h5 = sum(lam * G(u) * dg for u, dg in jumps if u < T)
    for a, b in zip(cuts[:-1], cuts[1:]):
        if a >= T:
            break
        b = min(b, T)
        ma, mb = mu_c(a), mu_c(b)
        w = mb - ma
        if w <= 0:
            continue
        Ea = E(a, plus=True)
        Ga = G(a, plus=True)
        x = 2 * lam * w
        ex = -math.expm1(-x)
        h3 += lam * Ea * ex / (2 * lam)
        # G(m) = Ga e^{-2 lam (m - ma)} + (1 - e^{-2 lam (m - ma)}) / (2 lam)
        h5 += lam * (Ga * ex / (2 * lam) + (w - ex / (2 * lam)) / (2 * lam))
    return h2, h3, h4, h5


def g_ref(t):
    """Silkworm g, written independently of the package."""
    k = 0
    while t > 5:
        t -= 5
        k += 1
    if t <= 2:
        v = 0.5 * math.sqrt(max(4 * t - t * t, 0.0))
    elif t <= 3:
        v = 1.0
    elif t <= 4:
        v = 2 - math.sqrt(max(6 * t - t * t - 8, 0.0))
    else:
        v = 3.0
    return 4 * k + v


def stepwise_godeint(d, lam, f, x0, grid, rtol=1e-13, atol=1e-15):
    """Linear g-ODE by an explicit ODE integrator in the time variable.

    Smooth stretches integrate ``x' = g'(t) (f - lam x)`` with DOP853 and
    jumps apply ``x <- x (1 - lam dg) + f dg``. Only for derivators whose
    non-constant segments are affine (bounded density).
    """
    grid = np.asarray(grid, dtype=float)
    out = np.empty(len(grid))
    x = float(x0)
    for i, t in enumerate(grid):
        out[i] = x
        dg = d.delta(float(t))
        if dg > 0:
            x = x * (1 - lam * dg) + f * dg
        if i + 1 < len(grid):
            t1 = float(grid[i + 1])
            for p in d.pieces(float(t), t1):
                if p.is_constant:
                    continue
                rate = (p.segment.density(np.array([0.5 * (p.lo + p.hi) - p.t_shift]))[0])
                sol = solve_ivp(lambda s, y: rate * (f - lam * y), (p.lo, p.hi), [x],
                                method="DOP853", rtol=rtol, atol=atol)
                x = float(sol.y[0, -1])
    return out


def classical_ds(fun, a, b, breaks=()):
    pts = [p for p in breaks if a < p < b]
    val, _ = quad(fun, a, b, points=pts or None, epsabs=1e-14, epsrel=1e-13, limit=500)
    return val


def random_affine_derivator(rng, T=3.0, max_jumps=5, lam=None, min_gap=0.05):
    """Random derivator on [0, T]: affine or constant pieces and up to ``max_jumps`` jumps.

    Jumps sit at piece ends; when ``lam`` is given their sizes keep
    ``|1 - lam * dg| >= min_gap``.
    """
    from stieltjes_pde.derivator import Derivator, Segment

    n_seg = int(rng.integers(2, 8))
    cuts = np.round(np.sort(rng.uniform(0.05, T - 0.05, n_seg - 1)), 6)
    cuts = np.unique(cuts)
    bounds = np.concatenate([[0.0], cuts, [T]])
    n_jumps = int(rng.integers(0, max_jumps + 1))
    jump_at = set(rng.choice(len(bounds) - 2, size=min(n_jumps, len(bounds) - 2), replace=False).tolist()) if len(bounds) > 2 else set()
    segs = []
    value = 0.0
    for i, (a, b) in enumerate(zip(bounds[:-1], bounds[1:])):
        slope = 0.0 if (i > 0 and rng.random() < 0.25) else float(rng.uniform(0.2, 2.0))
        jump = 0.0
        if i in jump_at:
            while True:
                jump = float(rng.uniform(0.01, 0.5))
                if lam is None or abs(1.0 - lam * jump) >= min_gap:
                    break
        if slope == 0.0:
            segs.append(Segment("constant", float(a), float(b), {"level": value}, jump_after=jump))
            end = value
        else:
            segs.append(Segment("affine", float(a), float(b), {"intercept": value - slope * a, "slope": slope}, jump_after=jump))
            end = value + slope * (b - a)
        value = end + jump
    return Derivator(tuple(segs), name="random")
