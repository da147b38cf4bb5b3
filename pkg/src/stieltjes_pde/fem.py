"""
P1 finite elements on triangle meshes: assembly and modal bases.

Mesh text format (1-based vertex indices)::

    nv nt [nbe]
    x y flag          # nv lines
    i j k [label]     # nt lines
    [nbe boundary-edge lines, ignored]

The optional third header field and per-triangle labels make FreeFem++
``.msh`` files load unchanged.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from scipy.spatial import cKDTree

__all__ = [
    "MeshError",
    "Mesh",
    "EigenBasis",
    "generate_rect_mesh",
    "load_mesh",
    "save_mesh",
    "element_mass",
    "element_stiffness",
    "assemble_mass",
    "assemble_stiffness",
    "solve_generalized_eig",
    "eigenbasis",
    "project",
    "evaluate",
    "spatial_mean",
    "write_eigenvalues_csv",
]

DENSE_LIMIT = 2000
_MIN_AREA = 1e-14


class MeshError(ValueError):
    """Malformed mesh file or invalid mesh data."""


@dataclass(frozen=True)
class Mesh:
    nodes: np.ndarray          # (nv, 2)
    triangles: np.ndarray      # (nt, 3), 0-based, counter-clockwise
    boundary_flags: np.ndarray  # (nv,), nonzero on the boundary

    def __post_init__(self):
        nodes = np.asarray(self.nodes, dtype=float)
        tris = np.asarray(self.triangles, dtype=np.int64)
        flags = np.asarray(self.boundary_flags, dtype=np.int64)
        object.__setattr__(self, "nodes", nodes)
        object.__setattr__(self, "triangles", tris)
        object.__setattr__(self, "boundary_flags", flags)
        if nodes.ndim != 2 or nodes.shape[1] != 2 or len(nodes) == 0:
            raise MeshError("no nodes")
        if tris.ndim != 2 or tris.shape[1] != 3 or len(tris) == 0:
            raise MeshError("no triangles")
        if flags.shape != (len(nodes),):
            raise MeshError("boundary_flags must have one entry per node")
        bad = np.flatnonzero((tris < 0).any(axis=1) | (tris >= len(nodes)).any(axis=1))
        if bad.size:
            raise MeshError(f"triangle {bad[0] + 1} references a vertex out of range")
        areas = self.areas
        inv = np.flatnonzero(areas <= 0)
        if inv.size:
            raise MeshError(f"triangle {inv[0] + 1} is inverted or degenerate (signed area {areas[inv[0]]:.3e})")
        pairs = cKDTree(nodes).query_pairs(1e-12)
        if pairs:
            i, j = sorted(next(iter(pairs)))
            raise MeshError(f"duplicate nodes {i + 1} and {j + 1}")

    @property
    def n_nodes(self) -> int:
        return len(self.nodes)

    @property
    def areas(self) -> np.ndarray:
        """Signed triangle areas (positive for counter-clockwise triangles)."""
        p = self.nodes[self.triangles]
        e1 = p[:, 1] - p[:, 0]
        e2 = p[:, 2] - p[:, 0]
        return 0.5 * (e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0])

    @property
    def area(self) -> float:
        return float(self.areas.sum())

    @property
    def interior(self) -> np.ndarray:
        return np.flatnonzero(self.boundary_flags == 0)


def generate_rect_mesh(nx: int, ny: int, width: float = 1.0, height: float = 1.0) -> Mesh:
    """Structured mesh of ``[0, width] x [0, height]``, each cell cut along its diagonal."""
    if nx < 1 or ny < 1 or width <= 0 or height <= 0:
        raise MeshError("rectangle mesh needs nx, ny >= 1 and positive dimensions")
    xs = np.linspace(0.0, width, nx + 1)
    ys = np.linspace(0.0, height, ny + 1)
    X, Y = np.meshgrid(xs, ys)  # node (i, j) -> j * (nx + 1) + i
    nodes = np.column_stack([X.ravel(), Y.ravel()])
    i, j = np.meshgrid(np.arange(nx), np.arange(ny))
    n00 = (j * (nx + 1) + i).ravel()
    n10, n01, n11 = n00 + 1, n00 + nx + 1, n00 + nx + 2
    tris = np.vstack([np.column_stack([n00, n10, n11]), np.column_stack([n00, n11, n01])])
    bx = (X == 0) | (X == width) | (Y == 0) | (Y == height)
    return Mesh(nodes, tris, bx.ravel().astype(np.int64))


def load_mesh(path) -> Mesh:
    """Read a mesh in the node/element text format."""
    lines = Path(path).read_text(encoding="utf-8").splitlines()
    rows = [(k + 1, ln.split()) for k, ln in enumerate(lines) if ln.strip() and not ln.lstrip().startswith("#")]
    if not rows:
        raise MeshError("no nodes: empty mesh file")
    lineno, head = rows[0]
    try:
        counts = [int(v) for v in head]
    except ValueError:
        raise MeshError(f"line {lineno}: header must be 'nv nt [nbe]'") from None
    if len(counts) not in (2, 3):
        raise MeshError(f"line {lineno}: header must be 'nv nt [nbe]'")
    nv, nt = counts[0], counts[1]
    if nv <= 0:
        raise MeshError("no nodes")
    if len(rows) < 1 + nv + nt:
        raise MeshError(f"expected {nv} node and {nt} triangle lines, file has {len(rows) - 1} data lines")
    errors = []
    nodes = np.empty((nv, 2))
    flags = np.zeros(nv, dtype=np.int64)
    for k in range(nv):
        lineno, parts = rows[1 + k]
        try:
            nodes[k] = float(parts[0]), float(parts[1])
            flags[k] = int(parts[2]) if len(parts) > 2 else 0
        except (ValueError, IndexError):
            errors.append(f"line {lineno}: malformed node '{' '.join(parts)}'")
    tris = np.empty((nt, 3), dtype=np.int64)
    for k in range(nt):
        lineno, parts = rows[1 + nv + k]
        try:
            tri = [int(v) for v in parts[:3]]
            if len(tri) != 3:
                raise ValueError
        except ValueError:
            errors.append(f"line {lineno}: malformed triangle '{' '.join(parts)}'")
            continue
        if min(tri) < 1 or max(tri) > nv:
            errors.append(f"line {lineno}: triangle {k + 1} has vertex index out of range {tri}")
        tris[k] = tri
    if errors:
        raise MeshError("; ".join(errors))
    return Mesh(nodes, tris - 1, flags)


def save_mesh(mesh: Mesh, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"{mesh.n_nodes} {len(mesh.triangles)}\n")
        for (x, y), f in zip(mesh.nodes, mesh.boundary_flags):
            fh.write(f"{x:.17g} {y:.17g} {int(f)}\n")
        for tri in mesh.triangles + 1:
            fh.write(f"{tri[0]} {tri[1]} {tri[2]}\n")


# ---------------------------------------------------------------------------
# element matrices and assembly
# ---------------------------------------------------------------------------

_MASS_REF = np.array([[2.0, 1.0, 1.0], [1.0, 2.0, 1.0], [1.0, 1.0, 2.0]]) / 12.0


def _gradients(p: np.ndarray):
    """Constant gradients of the three hat functions and the areas.

    ``p`` has shape (nt, 3, 2); returns grads (nt, 3, 2) and areas (nt,).
    """
    x, y = p[..., 0], p[..., 1]
    area = 0.5 * ((x[:, 1] - x[:, 0]) * (y[:, 2] - y[:, 0]) - (x[:, 2] - x[:, 0]) * (y[:, 1] - y[:, 0]))
    b = np.stack([y[:, 1] - y[:, 2], y[:, 2] - y[:, 0], y[:, 0] - y[:, 1]], axis=1)
    c = np.stack([x[:, 2] - x[:, 1], x[:, 0] - x[:, 2], x[:, 1] - x[:, 0]], axis=1)
    grads = np.stack([b, c], axis=2) / (2.0 * area)[:, None, None]
    return grads, area


def element_mass(coords) -> np.ndarray:
    """A/12 [[2,1,1],[1,2,1],[1,1,2]] for one triangle (3x2 coordinates)."""
    p = np.asarray(coords, dtype=float)[None]
    _, area = _gradients(p)
    return abs(area[0]) * _MASS_REF


def element_stiffness(coords) -> np.ndarray:
    """Gradient products A * grad(phi_i) . grad(phi_j) for one triangle."""
    p = np.asarray(coords, dtype=float)[None]
    grads, area = _gradients(p)
    return abs(area[0]) * grads[0] @ grads[0].T


def _check_areas(area: np.ndarray) -> None:
    bad = np.flatnonzero(np.abs(area) < _MIN_AREA)
    if bad.size:
        raise MeshError(f"triangle {bad[0] + 1} is degenerate (area {area[bad[0]]:.3e})")


def _scatter(mesh: Mesh, local: np.ndarray) -> sp.csr_matrix:
    tris = mesh.triangles
    rows = np.repeat(tris, 3, axis=1).ravel()
    cols = np.tile(tris, (1, 3)).ravel()
    n = mesh.n_nodes
    mat = sp.coo_matrix((local.ravel(), (rows, cols)), shape=(n, n)).tocsr()
    mat.sum_duplicates()
    # entries are summed in element order; symmetrise to kill rounding asymmetry
    return ((mat + mat.T) * 0.5).tocsr()


def assemble_mass(mesh: Mesh) -> sp.csr_matrix:
    _, area = _gradients(mesh.nodes[mesh.triangles])
    _check_areas(area)
    local = np.abs(area)[:, None, None] * _MASS_REF[None]
    return _scatter(mesh, local)


def assemble_gradient(mesh: Mesh) -> sp.csr_matrix:
    grads, area = _gradients(mesh.nodes[mesh.triangles])
    _check_areas(area)
    local = np.abs(area)[:, None, None] * np.einsum("tid,tjd->tij", grads, grads)
    return _scatter(mesh, local)


def assemble_stiffness(mesh: Mesh, eta: float = 1.0, kappa: float = 1.0) -> sp.csr_matrix:
    """R = eta * K + kappa * M."""
    if not eta > 0:
        raise ValueError("eta must be positive")
    if kappa < 0:
        raise ValueError("kappa must be nonnegative")
    R = eta * assemble_gradient(mesh)
    if kappa:
        R = R + kappa * assemble_mass(mesh)
    return R.tocsr()


# ---------------------------------------------------------------------------
# generalized eigenproblem
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class EigenBasis:
    """Ascending eigenvalues and M-orthonormal nodal coefficient vectors.

    ``vectors[:, k]`` holds the nodal values of the k-th eigenfunction on
    the full node set (zeros on Dirichlet nodes).
    """

    eigenvalues: np.ndarray
    vectors: np.ndarray

    @property
    def n_modes(self) -> int:
        return len(self.eigenvalues)


def _fix_signs(V: np.ndarray, tol: float = 1e-10) -> np.ndarray:
    for k in range(V.shape[1]):
        col = V[:, k]
        nz = np.flatnonzero(np.abs(col) > tol * np.abs(col).max())
        if nz.size and col[nz[0]] < 0:
            V[:, k] = -col
    return V


def solve_generalized_eig(R, M, n_modes: int, dense_limit: int = DENSE_LIMIT) -> EigenBasis:
    """Lowest ``n_modes`` pairs of ``R v = lambda M v`` with ``v' M v = 1``.

    Dense symmetric-definite solve below ``dense_limit`` unknowns,
    shift-invert Lanczos above it.
    """
    n = R.shape[0]
    if not 1 <= n_modes <= n:
        raise ValueError(f"n_modes must be in [1, {n}]")
    if n < dense_limit:
        Rd = R.toarray() if sp.issparse(R) else np.asarray(R)
        Md = M.toarray() if sp.issparse(M) else np.asarray(M)
        try:
            vals, vecs = sla.eigh(Rd, Md, subset_by_index=[0, n_modes - 1])
        except sla.LinAlgError as exc:
            raise np.linalg.LinAlgError(f"mass matrix factorisation failed: {exc}") from exc
    else:
        Rs, Ms = sp.csc_matrix(R), sp.csc_matrix(M)
        # shift slightly below the spectrum so that R - sigma M stays definite
        sigma = -1e-6 * abs(Rs.diagonal()).max() / max(abs(Ms.diagonal()).max(), 1e-300)
        vals, vecs = spla.eigsh(Rs, k=n_modes, M=Ms, sigma=sigma, which="LM")
        order = np.argsort(vals)
        vals, vecs = vals[order], vecs[:, order]
        Md = Ms
        gram = vecs.T @ (Md @ vecs)
        vecs = vecs / np.sqrt(np.diag(gram))[None, :]
    return EigenBasis(np.asarray(vals, dtype=float), _fix_signs(np.array(vecs, dtype=float)))


def eigenbasis(mesh: Mesh, n_modes: int = 150, eta: float = 1.0, kappa: float = 1.0,
               boundary: str = "neumann") -> EigenBasis:
    """Modal basis of ``-div(eta grad u) + kappa u`` on the mesh.

    ``boundary='dirichlet'`` removes boundary nodes before the solve and
    pads the vectors with zeros there.
    """
    R = assemble_stiffness(mesh, eta, kappa)
    M = assemble_mass(mesh)
    if boundary == "neumann":
        return solve_generalized_eig(R, M, min(n_modes, mesh.n_nodes))
    if boundary != "dirichlet":
        raise ValueError("boundary must be 'neumann' or 'dirichlet'")
    free = mesh.interior
    if free.size == 0:
        raise MeshError("mesh has no interior nodes")
    sub = solve_generalized_eig(R[free][:, free], M[free][:, free], min(n_modes, free.size))
    full = np.zeros((mesh.n_nodes, sub.n_modes))
    full[free] = sub.vectors
    return EigenBasis(sub.eigenvalues, full)


def project(nodal_values, basis: EigenBasis, M) -> np.ndarray:
    """Modal coefficients ``v_k' M u``."""
    u = np.asarray(nodal_values, dtype=float)
    if u.shape[0] != basis.vectors.shape[0]:
        raise ValueError(f"expected {basis.vectors.shape[0]} nodal values, got {u.shape[0]}")
    return basis.vectors.T @ (M @ u)


def evaluate(coeffs, basis: EigenBasis) -> np.ndarray:
    """Nodal values of ``sum_k coeffs[k] psi_k``."""
    c = np.asarray(coeffs, dtype=float)
    if c.shape[0] != basis.n_modes:
        raise ValueError(f"expected {basis.n_modes} coefficients, got {c.shape[0]}")
    return basis.vectors @ c


def spatial_mean(mesh: Mesh, nodal_values, M=None, normalize: bool = False) -> float:
    """Integral of the P1 interpolant over the mesh (mean if ``normalize``)."""
    u = np.asarray(nodal_values, dtype=float)
    if u.shape[0] != mesh.n_nodes:
        raise ValueError(f"expected {mesh.n_nodes} nodal values, got {u.shape[0]}")
    if M is None:
        M = assemble_mass(mesh)
    total = float(np.ones(mesh.n_nodes) @ (M @ u))
    return total / mesh.area if normalize else total


def write_eigenvalues_csv(basis: EigenBasis, path_or_file) -> None:
    own = isinstance(path_or_file, (str, Path))
    fh = open(path_or_file, "w", newline="", encoding="utf-8") if own else path_or_file
    try:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["mode", "lambda"])
        for k, lam in enumerate(basis.eigenvalues, start=1):
            w.writerow([k, f"{lam:.17g}"])
    finally:
        if own:
            fh.close()
