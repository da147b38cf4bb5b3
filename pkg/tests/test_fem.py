import io
import math

import numpy as np
import pytest
import scipy.linalg as sla
from hypothesis import given, settings
from hypothesis import strategies as st

from stieltjes_pde.fem import (
    Mesh,
    MeshError,
    assemble_mass,
    assemble_stiffness,
    eigenbasis,
    element_mass,
    element_stiffness,
    evaluate,
    generate_rect_mesh,
    load_mesh,
    project,
    save_mesh,
    solve_generalized_eig,
    spatial_mean,
    write_eigenvalues_csv,
)

UNIT = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]])
SQUARE_FILE = """4 2
0 0 1
1 0 1
1 1 1
0 1 1
1 2 3
1 3 4
"""


def barycentric_oracle(p):
    """Mass and stiffness by an independent route.

    Mass: edge-midpoint rule (exact for quadratics). Stiffness: gradients
    from inverting the affine map of the hat functions.
    """
    area = 0.5 * abs(np.linalg.det(np.column_stack([p[1] - p[0], p[2] - p[0]])))
    mids = 0.5 * (p[[0, 1, 2]] + p[[1, 2, 0]])
    V = np.column_stack([np.ones(3), p])
    coef = np.linalg.inv(V)  # phi_i(x, y) = coef[0, i] + coef[1, i] x + coef[2, i] y
    phi = np.column_stack([np.ones(3), mids]) @ coef
    M = area / 3.0 * phi.T @ phi
    G = coef[1:, :]
    K = area * G.T @ G
    return M, K


# -- meshes --------------------------------------------------------------------

@pytest.mark.parametrize("n,nodes,tris", [(1, 4, 2), (2, 9, 8), (5, 36, 50)])
def test_rect_mesh_counts(n, nodes, tris):
    m = generate_rect_mesh(n, n)
    assert m.n_nodes == nodes and len(m.triangles) == tris
    assert np.all(m.areas > 0)


def test_rect_mesh_area():
    assert abs(generate_rect_mesh(10, 10).area - 1.0) < 1e-14
    assert generate_rect_mesh(3, 4, 2.0, 0.5).area == pytest.approx(1.0, abs=1e-14)
    with pytest.raises(MeshError):
        generate_rect_mesh(2, 2, width=0.0)
    with pytest.raises(MeshError):
        generate_rect_mesh(0, 2)


def test_mesh_validation():
    with pytest.raises(MeshError):
        Mesh(UNIT, np.array([[0, 2, 1]]), np.zeros(3, int))  # clockwise
    with pytest.raises(MeshError):
        Mesh(UNIT, np.array([[0, 1, 3]]), np.zeros(3, int))
    with pytest.raises(MeshError):
        Mesh(np.vstack([UNIT, [[0.0, 0.0]]]), np.array([[0, 1, 2]]), np.zeros(4, int))


def test_load_mesh(tmp_path):
    p = tmp_path / "sq.msh"
    p.write_text(SQUARE_FILE)
    m = load_mesh(p)
    assert len(m.triangles) == 2 and m.area == pytest.approx(1.0)
    bad = tmp_path / "bad.msh"
    bad.write_text(SQUARE_FILE.replace("1 3 4", "1 3 7"))
    with pytest.raises(MeshError, match=r"line 7: triangle 2"):
        load_mesh(bad)
    empty = tmp_path / "empty.msh"
    empty.write_text("")
    with pytest.raises(MeshError, match="no nodes"):
        load_mesh(empty)
    garbled = tmp_path / "garbled.msh"
    garbled.write_text(SQUARE_FILE.replace("1 1 1\n", "1 x 1\n"))
    with pytest.raises(MeshError, match="line 4"):
        load_mesh(garbled)


def test_load_mesh_with_edge_count_and_labels(tmp_path):
    text = "4 2 4\n0 0 1\n1 0 2\n1 1 3\n0 1 4\n1 2 3 0\n1 3 4 0\n"
    p = tmp_path / "ff.msh"
    p.write_text(text)
    m = load_mesh(p)
    assert list(m.boundary_flags) == [1, 2, 3, 4]


def test_save_load_round_trip(tmp_path):
    m = generate_rect_mesh(3, 2, 1.5, 1.0)
    p = tmp_path / "m.msh"
    save_mesh(m, p)
    back = load_mesh(p)
    assert np.array_equal(back.nodes, m.nodes) and np.array_equal(back.triangles, m.triangles)


# -- element matrices ------------------------------------------------------------

def test_reference_element_matrices():
    M = element_mass(UNIT)
    assert np.allclose(np.diag(M), 1 / 12, atol=1e-15, rtol=0)
    assert np.allclose(M[~np.eye(3, dtype=bool)], 1 / 24, atol=1e-15, rtol=0)
    K = element_stiffness(UNIT)
    assert np.max(np.abs(K - 0.5 * np.array([[2, -1, -1], [-1, 1, 0], [-1, 0, 1]]))) < 1e-15


def test_random_elements_against_oracle():
    rng = np.random.default_rng(7)
    done = 0
    while done < 100:
        p = rng.uniform(-3, 3, (3, 2))
        cross = (p[1, 0] - p[0, 0]) * (p[2, 1] - p[0, 1]) - (p[1, 1] - p[0, 1]) * (p[2, 0] - p[0, 0])
        if abs(cross) < 0.5:
            continue
        if cross < 0:
            p = p[[0, 2, 1]]
        Mo, Ko = barycentric_oracle(p)
        assert np.max(np.abs(element_mass(p) - Mo)) < 1e-13 * max(1, np.abs(Mo).max())
        assert np.max(np.abs(element_stiffness(p) - Ko)) < 1e-13 * max(1, np.abs(Ko).max())
        done += 1


def test_assembly_identities():
    m = generate_rect_mesh(7, 5, 2.0, 1.0)
    M = assemble_mass(m)
    K = assemble_stiffness(m, 1.0, 0.0)
    assert abs(M.sum() - m.area) < 1e-13
    # row sums are the integrals of the hat functions: area of the patch / 3
    hat = np.zeros(m.n_nodes)
    np.add.at(hat, m.triangles.ravel(), np.repeat(m.areas / 3, 3))
    assert np.max(np.abs(np.asarray(M.sum(axis=1)).ravel() - hat)) < 1e-13
    assert np.max(np.abs(K @ np.full(m.n_nodes, 3.7))) < 1e-12
    R = assemble_stiffness(m, 1.0, 1.0)
    assert abs(R - (K + M)).max() < 1e-15
    assert abs(R - R.T).max() == 0.0
    assert abs(assemble_mass(generate_rect_mesh(1, 1)).sum() - 1.0) < 1e-15
    with pytest.raises(ValueError):
        assemble_stiffness(m, 0.0, 1.0)


# -- eigenproblem ----------------------------------------------------------------

def check_basis(R, M, basis):
    V = basis.vectors
    for k, lam in enumerate(basis.eigenvalues):
        Rv = R @ V[:, k]
        assert np.linalg.norm(Rv - lam * (M @ V[:, k])) <= 1e-8 * max(np.linalg.norm(Rv), 1e-300)
    gram = V.T @ (M @ V)
    assert np.max(np.abs(gram - np.eye(V.shape[1]))) <= 1e-10
    assert np.all(np.diff(basis.eigenvalues) >= 0)


def test_neumann_first_mode_is_constant():
    m = generate_rect_mesh(12, 12)
    b = eigenbasis(m, 20, eta=1.0, kappa=1.0)
    assert b.eigenvalues[0] == pytest.approx(1.0, abs=1e-10)
    v = b.vectors[:, 0]
    assert np.ptp(v) < 1e-10 and v[0] > 0
    check_basis(assemble_stiffness(m, 1.0, 1.0), assemble_mass(m), b)


def test_dense_oracle_on_two_triangles():
    m = generate_rect_mesh(1, 1)
    R, M = assemble_stiffness(m, 0.7, 1.0), assemble_mass(m)
    b = solve_generalized_eig(R, M, 4)
    ref = sla.eigvalsh(R.toarray(), M.toarray())
    assert np.max(np.abs(b.eigenvalues - ref)) < 1e-10
    check_basis(R, M, b)


def test_iterative_path_matches_dense():
    m = generate_rect_mesh(46, 46)
    assert m.n_nodes > 2000
    R, M = assemble_stiffness(m, 1.0, 1.0), assemble_mass(m)
    it = solve_generalized_eig(R, M, 6)
    dense = solve_generalized_eig(R, M, 6, dense_limit=10**6)
    assert np.max(np.abs(it.eigenvalues - dense.eigenvalues) / dense.eigenvalues) < 1e-10
    check_basis(R, M, it)


def test_sign_convention():
    m = generate_rect_mesh(6, 6)
    b = eigenbasis(m, 10)
    for k in range(b.n_modes):
        v = b.vectors[:, k]
        first = v[np.flatnonzero(np.abs(v) > 1e-10 * np.abs(v).max())[0]]
        assert first > 0


def test_dirichlet_square():
    b = eigenbasis(generate_rect_mesh(24, 24), 3, eta=1.0, kappa=0.0, boundary="dirichlet")
    assert b.eigenvalues[0] == pytest.approx(2 * math.pi ** 2, rel=1e-2)
    assert b.eigenvalues[1] == pytest.approx(5 * math.pi ** 2, rel=3e-2)


def test_refinement_is_monotone():
    exact = 1 + math.pi ** 2
    vals = [eigenbasis(generate_rect_mesh(n, n), 3, 1.0, 1.0).eigenvalues[1] for n in (4, 8, 16)]
    assert vals[0] >= vals[1] >= vals[2] >= exact - 1e-9


# -- projection and means --------------------------------------------------------

def test_projection():
    m = generate_rect_mesh(5, 5)
    M = assemble_mass(m)
    b = eigenbasis(m, m.n_nodes)
    assert np.allclose(project(b.vectors[:, 3], b, M), np.eye(b.n_modes)[3], atol=1e-10)
    assert np.all(project(np.zeros(m.n_nodes), b, M) == 0)
    u = np.sin(3 * m.nodes[:, 0]) * m.nodes[:, 1]
    err = u - evaluate(project(u, b, M), b)
    assert math.sqrt(err @ (M @ err)) < 1e-10
    with pytest.raises(ValueError):
        project(np.ones(3), b, M)


def test_spatial_mean():
    m = generate_rect_mesh(4, 4)
    assert spatial_mean(m, np.ones(m.n_nodes)) == pytest.approx(1.0, abs=1e-14)
    m2 = generate_rect_mesh(3, 3, 2.0, 1.5)
    assert spatial_mean(m2, np.full(m2.n_nodes, 2.5)) == pytest.approx(7.5, abs=1e-13)
    assert spatial_mean(m2, np.full(m2.n_nodes, 2.5), normalize=True) == pytest.approx(2.5, abs=1e-13)
    tri = Mesh(UNIT, np.array([[0, 1, 2]]), np.ones(3, int))
    assert spatial_mean(tri, [1.0, 0.0, 0.0]) == pytest.approx(1 / 6, abs=1e-15)
    with pytest.raises(ValueError):
        spatial_mean(m, np.ones(2))


def test_eigenvalue_csv():
    b = eigenbasis(generate_rect_mesh(3, 3), 4)
    buf = io.StringIO()
    write_eigenvalues_csv(b, buf)
    lines = buf.getvalue().splitlines()
    assert lines[0] == "mode,lambda"
    assert len(lines) == 5 and float(lines[1].split(",")[1]) == b.eigenvalues[0]


@settings(max_examples=30, deadline=None)
@given(st.integers(1, 6), st.integers(1, 6), st.floats(0.2, 3.0), st.floats(0.2, 3.0))
def test_mass_total_equals_area(nx, ny, w, h):
    m = generate_rect_mesh(nx, ny, w, h)
    assert assemble_mass(m).sum() == pytest.approx(w * h, rel=1e-13)
