"""
Command-line tools for Stieltjes-derivative parabolic problems.

Subcommands: gcalc, integrate, godesolve, eig, check-hyp, solve, silkworm.
Numbers are written with 17 significant digits and a ``.`` decimal
separator, so identical inputs give identical output bytes. Errors go to
stderr as one JSON object; exit code 2 signals a regressivity (H1) failure,
1 any other error.
"""
from __future__ import annotations

import argparse
import csv
import json
import math
import sys
from pathlib import Path

import numpy as np

from . import fem, g_ode, silkworm, spectral_solver, stieltjes_integral
from .derivator import load_derivator

SCHEMA_VERSION = 1
EXIT_OK, EXIT_ERROR, EXIT_H1 = 0, 1, 2


def fmt(x) -> str:
    x = float(x)
    if math.isnan(x):
        return ""
    return "%.17g" % x


# ---------------------------------------------------------------------------
# named profiles
# ---------------------------------------------------------------------------

INTEGRANDS = {
    "one": lambda s: np.ones_like(s),
    "t": lambda s: s,
    "t2": lambda s: s ** 2,
    "exp-neg-t": lambda s: np.exp(-s),
    "sin": np.sin,
    "cos": np.cos,
}

MODAL_U0 = {
    "first-mode": lambda n: np.eye(1, n)[0],
    "ones": lambda n: np.ones(n),
    "harmonic": lambda n: 1.0 / np.arange(1, n + 1),
}

NODAL_U0 = {
    "constant": lambda xy: np.ones(len(xy)),
    "quadratic": lambda xy: (xy ** 2).sum(axis=1),
    "bump": lambda xy: np.exp(-20.0 * ((xy - xy.mean(axis=0)) ** 2).sum(axis=1)),
}

FORCING = {
    "zero": lambda n: None,
    "first-mode": lambda n: [1.0] + [0.0] * (n - 1),
    "harmonic": lambda n: list(1.0 / np.arange(1, n + 1)),
}


def parse_floats(text: str) -> list[float]:
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def load_mesh_arg(spec: str) -> fem.Mesh:
    if spec.startswith("square:"):
        n = int(spec.split(":", 1)[1])
        return fem.generate_rect_mesh(n, n)
    return fem.load_mesh(spec)


def analytic_square_eigenvalues(n_modes: int, k1: float = 1.0, k2: float = 0.0) -> np.ndarray:
    """Dirichlet eigenvalues ``k1 pi^2 (m^2 + n^2) + k2`` of the unit square, ascending."""
    side = int(math.ceil(math.sqrt(n_modes))) + 2
    m, n = np.meshgrid(np.arange(1, side + 1), np.arange(1, side + 1))
    vals = np.sort((k1 * math.pi ** 2 * (m ** 2 + n ** 2) + k2).ravel())
    return vals[:n_modes]


# ---------------------------------------------------------------------------
# output helpers
# ---------------------------------------------------------------------------

def _open_out(path):
    if path in (None, "-"):
        return sys.stdout, False
    return open(path, "w", newline="", encoding="utf-8"), True


def write_csv(path, header, rows) -> None:
    fh, own = _open_out(path)
    try:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([fmt(v) if isinstance(v, (float, np.floating)) else v for v in row])
    finally:
        if own:
            fh.close()


def write_json(path, payload) -> None:
    text = json.dumps(payload, indent=2, sort_keys=True, allow_nan=False) + "\n"
    if path in (None, "-"):
        sys.stdout.write(text)
    else:
        Path(path).write_text(text, encoding="utf-8")


class CliError(Exception):
    def __init__(self, payload: dict, code: int = EXIT_ERROR):
        super().__init__(payload.get("message", ""))
        self.payload = payload
        self.code = code


def _h1_error(violations) -> CliError:
    mode, t = violations[0]
    return CliError({
        "error": "H1",
        "message": f"regressivity fails: lambda * dg = 1 at t={fmt(t)} for mode {mode}",
        "mode": mode,
        "t": t,
        "violations": [{"mode": m, "t": tt} for m, tt in violations],
    }, EXIT_H1)


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------

def cmd_gcalc(args) -> int:
    d = load_derivator(args.derivator)
    if args.dump:
        sys.stdout.write(d.to_json(indent=2, sort_keys=True) + "\n")
        return EXIT_OK
    if args.measure is not None:
        if len(args.measure) != 2:
            raise CliError({"error": "usage", "message": "--measure takes two numbers a,b"})
        lo, hi = args.measure
        write_csv("-", ["a", "b", "measure", "measure_minus_jumps"],
                  [(lo, hi, d.measure(lo, hi), d.measure_minus_jumps(lo, hi))])
        return EXIT_OK
    times = args.t or []
    if not times:
        raise CliError({"error": "usage", "message": "gcalc needs --t, --measure or --dump"})
    if args.csv:
        write_csv("-", ["t", "g", "g_right", "delta"],
                  [(t, d.eval(t), d.right_limit(t), d.delta(t)) for t in times])
        return EXIT_OK
    for t in times:
        if args.delta:
            val = d.delta(t)
        elif args.right:
            val = d.right_limit(t)
        else:
            val = d.eval(t)
        print(fmt(val))
    return EXIT_OK


def cmd_integrate(args) -> int:
    d = load_derivator(args.derivator)
    if args.integrand not in INTEGRANDS:
        raise CliError({"error": "usage", "message": f"unknown integrand {args.integrand!r}; choose from {sorted(INTEGRANDS)}"})
    f = INTEGRANDS[args.integrand]
    if args.norm is not None:
        p = math.inf if args.norm == "inf" else float(args.norm)
        val = stieltjes_integral.lp_norm(d, f, p, args.a, args.b, args.tol)
    else:
        val = stieltjes_integral.integrate(d, f, args.a, args.b, args.tol)
    print(fmt(val))
    return EXIT_OK


def cmd_godesolve(args) -> int:
    d = load_derivator(args.derivator)
    ode = g_ode.LinearGODE(args.lam, args.f, args.x0, (0.0, args.T))
    grid = spectral_solver.default_grid(d, args.T, args.points)
    try:
        sol = g_ode.solve_linear(ode, d, grid, args.tol)
    except g_ode.RegressivityError as exc:
        raise _h1_error([(1, exc.time)]) from None
    rows = [(t, l, r) for t, l, r in zip(sol.grid, sol.left_values, sol.right_values)]
    write_csv(args.out, ["t", "value", "right_value"], rows)
    return EXIT_OK


def cmd_eig(args) -> int:
    mesh = load_mesh_arg(args.mesh)
    basis = fem.eigenbasis(mesh, args.modes, args.eta, args.kappa, args.boundary)
    fh, own = _open_out(args.out)
    try:
        fem.write_eigenvalues_csv(basis, fh)
    finally:
        if own:
            fh.close()
    return EXIT_OK


def _eigenvalues_from_args(args):
    """Eigenvalues plus (mesh, basis) when a mesh is used."""
    if getattr(args, "lam", None):
        return np.sort(np.asarray(args.lam, dtype=float)), None, None
    if args.mesh:
        mesh = load_mesh_arg(args.mesh)
        basis = fem.eigenbasis(mesh, args.modes, args.eta, args.kappa, args.boundary)
        return basis.eigenvalues, mesh, basis
    return analytic_square_eigenvalues(args.modes, args.eta, args.kappa), None, None


def cmd_check_hyp(args) -> int:
    d = load_derivator(args.derivator)
    lam, _, _ = _eigenvalues_from_args(args)
    problem = spectral_solver.ParabolicProblem(d, lam, np.zeros(len(lam)), args.T)
    report = spectral_solver.check_hypotheses(problem, tol=args.tol)
    payload = report.to_dict()
    if args.report:
        write_json(args.report, payload)
    if report.h1_violations:
        raise _h1_error(report.h1_violations)
    if not args.report:
        write_json("-", payload)
    return EXIT_OK


def _u0_coeffs(args, n, mesh, basis):
    name = args.u0
    if name in MODAL_U0:
        return MODAL_U0[name](n)
    if name in NODAL_U0:
        if mesh is None:
            raise CliError({"error": "usage", "message": f"u0 profile {name!r} needs --mesh"})
        M = fem.assemble_mass(mesh)
        return fem.project(NODAL_U0[name](mesh.nodes), basis, M)
    raise CliError({"error": "usage", "message": f"unknown u0 profile {name!r}; choose from {sorted(MODAL_U0) + sorted(NODAL_U0)}"})


def cmd_solve(args) -> int:
    d = load_derivator(args.derivator)
    lam, mesh, basis = _eigenvalues_from_args(args)
    n = len(lam)
    if args.forcing not in FORCING:
        raise CliError({"error": "usage", "message": f"unknown forcing profile {args.forcing!r}; choose from {sorted(FORCING)}"})
    problem = spectral_solver.ParabolicProblem(d, lam, _u0_coeffs(args, n, mesh, basis), args.T,
                                               FORCING[args.forcing](n))
    report = spectral_solver.check_hypotheses(problem, tol=args.tol)
    if args.report:
        write_json(args.report, report.to_dict())
    if report.h1_violations:
        raise _h1_error(report.h1_violations)
    bundle = spectral_solver.solve(problem, spectral_solver.default_grid(d, args.T, args.points), tol=args.tol)
    rows = []
    for i, t in enumerate(bundle.grid):
        for k, mode in enumerate(bundle.modes):
            rows.append((float(t), k + 1, float(mode.left_values[i]), float(mode.right_values[i])))
    write_csv(args.out, ["t", "mode", "value", "right_value"], rows)
    return EXIT_OK


def cmd_silkworm(args) -> int:
    params = silkworm.SilkwormParams.from_json(args.params) if args.params else silkworm.SilkwormParams()
    if args.modes is not None:
        params = silkworm.SilkwormParams(**{**params.to_dict(), "n_modes": args.modes})
    mesh = load_mesh_arg(args.mesh)
    snaps = [s.strip() for s in args.snapshots.split(",") if s.strip()] if args.snapshots else []
    out0 = silkworm.solve_0d(params, n_per_stretch=args.points, tol=args.tol)
    out2 = silkworm.solve_2d(params, mesh, snapshots=snaps, n_per_stretch=args.points, tol=args.tol)
    prefix = args.out_prefix
    rows = zip(out0.grid, out0.mean_left, out2.mean_left, out0.mean_right, out2.mean_right)
    write_csv(f"{prefix}_mean.csv", ["t", "mean_0d", "mean_2d", "mean_0d_right", "mean_2d_right"],
              ((float(a), float(b), float(c), float(e), float(f)) for a, b, c, e, f in rows))
    for key, field in out2.snapshots.items():
        tag = key.replace("+", "plus")
        write_csv(f"{prefix}_snapshot_{tag}.csv", ["node", "x", "y", "u"],
                  ((i + 1, float(x), float(y), float(u)) for i, ((x, y), u) in enumerate(zip(mesh.nodes, field))))
    return EXIT_OK


# ---------------------------------------------------------------------------
# parser
# ---------------------------------------------------------------------------

def _add_eig_flags(p, default_modes=150, boundary="neumann", kappa=1.0):
    p.add_argument("--modes", type=int, default=default_modes)
    p.add_argument("--eta", type=float, default=1.0, help="diffusion coefficient (k1)")
    p.add_argument("--kappa", type=float, default=kappa, help="reaction coefficient (k2)")
    p.add_argument("--boundary", choices=["neumann", "dirichlet"], default=boundary)


class _Parser(argparse.ArgumentParser):
    """Reports usage errors as structured errors instead of exiting."""

    def error(self, message):
        raise CliError({"error": "usage", "message": message, "usage": self.format_usage().strip()})


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="stieltjes-pde", description=__doc__.strip().splitlines()[0])
    parser.add_argument("--tol", type=float, default=stieltjes_integral.DEFAULT_TOL,
                        help="quadrature tolerance (default from STIELTJES_PDE_TOL or 1e-10)")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gcalc", help="evaluate a derivator")
    p.add_argument("--derivator", default="silkworm", help="builtin name or JSON path")
    p.add_argument("--t", type=float, action="append", help="time (repeatable)")
    p.add_argument("--delta", action="store_true", help="print the jump size instead")
    p.add_argument("--right", action="store_true", help="print the right limit instead")
    p.add_argument("--csv", action="store_true", help="print t, g, g_right, delta as CSV")
    p.add_argument("--measure", type=parse_floats, default=None, help="print mu_g([a, b)) for 'a,b'")
    p.add_argument("--dump", action="store_true", help="print the derivator as JSON")
    p.set_defaults(func=cmd_gcalc)

    p = sub.add_parser("integrate", help="Lebesgue-Stieltjes integral over [a, b)")
    p.add_argument("--derivator", default="silkworm")
    p.add_argument("--integrand", default="one", help=f"one of {sorted(INTEGRANDS)}")
    p.add_argument("--a", type=float, default=0.0)
    p.add_argument("--b", type=float, required=True)
    p.add_argument("--norm", default=None, help="print the L^p_g norm instead (p or 'inf')")
    p.set_defaults(func=cmd_integrate)

    p = sub.add_parser("godesolve", help="solve x'_g + lambda x = f, x(0) = x0")
    p.add_argument("--derivator", default="silkworm")
    p.add_argument("--lambda", dest="lam", type=float, required=True)
    p.add_argument("--f", type=float, default=0.0)
    p.add_argument("--x0", type=float, default=1.0)
    p.add_argument("--T", type=float, required=True)
    p.add_argument("--points", type=int, default=200, help="grid points per smooth stretch")
    p.add_argument("--out", default="-")
    p.set_defaults(func=cmd_godesolve)

    p = sub.add_parser("eig", help="P1 generalized eigenproblem")
    p.add_argument("--mesh", required=True, help="mesh file or square:N")
    _add_eig_flags(p)
    p.add_argument("--out", default="-")
    p.set_defaults(func=cmd_eig)

    p = sub.add_parser("check-hyp", help="check the existence hypotheses H1-H5")
    p.add_argument("--derivator", default="silkworm")
    p.add_argument("--lambda", dest="lam", type=parse_floats, default=None,
                   help="comma-separated eigenvalues (overrides --mesh)")
    p.add_argument("--mesh", default=None, help="mesh file or square:N (default: analytic unit square)")
    _add_eig_flags(p, default_modes=20, boundary="dirichlet", kappa=0.0)
    p.add_argument("--T", type=float, default=15.0)
    p.add_argument("--report", default=None)
    p.set_defaults(func=cmd_check_hyp)

    p = sub.add_parser("solve", help="spectral solution of the parabolic problem")
    p.add_argument("--derivator", default="silkworm")
    src = p.add_mutually_exclusive_group()
    src.add_argument("--mesh", default=None, help="mesh file or square:N")
    src.add_argument("--analytic-square", action="store_true",
                     help="analytic Dirichlet eigenvalues of the unit square (default)")
    _add_eig_flags(p, default_modes=20, boundary="dirichlet", kappa=0.0)
    p.add_argument("--T", type=float, default=15.0)
    p.add_argument("--u0", default="first-mode", help=f"one of {sorted(MODAL_U0) + sorted(NODAL_U0)}")
    p.add_argument("--forcing", default="zero", help=f"one of {sorted(FORCING)}")
    p.add_argument("--points", type=int, default=200)
    p.add_argument("--out", default="-")
    p.add_argument("--report", default=None)
    p.set_defaults(func=cmd_solve, lam=None)

    p = sub.add_parser("silkworm", help="silkworm experiment: 0-d mean vs 2-d spatial mean")
    p.add_argument("--params", default=None, help="JSON config with c, lambda_birth, x0_total, eta, T, n_modes")
    p.add_argument("--mesh", default="square:16", help="mesh file or square:N")
    p.add_argument("--modes", type=int, default=None, help="number of modes (default 150)")
    p.add_argument("--snapshots", default="", help="comma-separated times; append + for right limits")
    p.add_argument("--points", type=int, default=200)
    p.add_argument("--out-prefix", default="silkworm")
    p.set_defaults(func=cmd_silkworm)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if not args.tol > 0:
            raise CliError({"error": "usage", "message": "--tol must be positive"})
        return args.func(args)
    except CliError as exc:
        payload = {"schema_version": SCHEMA_VERSION, **exc.payload}
        sys.stderr.write(json.dumps(payload, sort_keys=True) + "\n")
        return exc.code
    except (ValueError, OSError, np.linalg.LinAlgError) as exc:
        payload = {"schema_version": SCHEMA_VERSION, "error": type(exc).__name__, "message": str(exc)}
        sys.stderr.write(json.dumps(payload, sort_keys=True) + "\n")
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
