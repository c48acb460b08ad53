from dataclasses import replace

import numpy as np
import pytest
import scipy.linalg as la

from gaplab.eigen import EigenRequest, eigs_in_interval, lowest_eigenvalue
from gaplab.geometry import ChainConfig, assemble_chain, sphere_profile
from gaplab.operators import (block_graph_laplacian, block_laplacian, lift_operator, neck_dirichlet_operator,
                              parse_covering, quotient_operator, read_triplets, sl_discretize)


@pytest.fixture(scope="module")
def sphere_fine():
    return sphere_profile(1e-3)


def test_sphere_mode0_lowest_three(sphere_fine):
    vals = eigs_in_interval(sl_discretize(sphere_fine, 0), EigenRequest(-0.5, 7.0, tol=1e-10))
    assert np.allclose(vals, [0.0, 2.0, 6.0], atol=5e-3)


def test_sphere_mode1_lowest(sphere_fine):
    assert lowest_eigenvalue(sl_discretize(sphere_fine, 1)) == pytest.approx(2.0, abs=5e-3)


@pytest.mark.parametrize("bc", ["neumann", "dirichlet"])
def test_mode_m_vanishes_at_poles_via_barrier(sphere_fine, bc):
    # the m^2/f^2 barrier makes both end rules agree to discretisation accuracy for m >= 1
    vals = eigs_in_interval(sl_discretize(sphere_fine, 2, bc), EigenRequest(0.0, 13.0, tol=1e-10))
    assert np.allclose(vals, [6.0, 12.0], atol=5e-2)


def test_constants_are_harmonic():
    for prof, bc in [(sphere_profile(0.01), "neumann"),
                     (assemble_chain(ChainConfig(blocks=3, eps=0.1, h=0.01, periodic=False)), "neumann"),
                     (assemble_chain(ChainConfig(blocks=2, eps=0.1, h=0.01)), "periodic")]:
        op = sl_discretize(prof, 0, bc)
        assert np.linalg.norm(op.apply(np.ones(op.size))) <= 1e-9


def test_mode0_is_positive_semidefinite(chain_eps02):
    op = sl_discretize(chain_eps02, 0, "periodic")
    scale = np.max(np.abs(op.diag))
    assert np.linalg.eigvalsh(op.matrix())[0] / scale >= -1e-9


def test_weighted_symmetry(chain_eps02):
    rng = np.random.default_rng(3)
    for m in range(3):
        op = sl_discretize(chain_eps02, m, "periodic")
        for _ in range(5):
            u, v = rng.standard_normal((2, op.size))
            lhs = op.inner(op.apply(u), v)
            rhs = op.inner(u, op.apply(v))
            scale = op.norm(u) * op.norm(v) * np.max(np.abs(op.diag))
            assert abs(lhs - rhs) <= 1e-12 * scale


def test_symmetrised_matrix_is_exactly_symmetric(chain_eps005):
    for m in range(3):
        S = sl_discretize(chain_eps005, m, "periodic").matrix()
        assert np.array_equal(S, S.T)


def test_stencil_matches_formula():
    prof = sphere_profile(0.05)
    op = sl_discretize(prof, 2, half="geometric")
    f, h = prof.f, prof.h
    fh = np.sqrt(f[:-1] * f[1:])
    i = 10
    phi = np.sin(3 * prof.s)
    expected = (fh[i] * (phi[i] - phi[i + 1]) + fh[i - 1] * (phi[i] - phi[i - 1])) / (f[i] * h * h) \
        + 4 * phi[i] / f[i] ** 2
    assert op.apply(phi)[i] == pytest.approx(expected, rel=1e-12)


def test_operator_errors(chain_eps02):
    with pytest.raises(ValueError):
        sl_discretize(chain_eps02, -1, "periodic")
    with pytest.raises(ValueError):
        sl_discretize(sphere_profile(0.01), 0, "periodic")
    with pytest.raises(ValueError):
        sl_discretize(chain_eps02, 0, "robin")


def test_second_order_convergence():
    def errors(h):
        out = []
        for m in range(3):
            vals = eigs_in_interval(sl_discretize(sphere_profile(h), m), EigenRequest(0.5, 12.5, tol=1e-12))
            out += [abs(v - k * (k + 1)) for k, v in zip(range(max(m, 1), 4), vals)]
        return np.array(out)

    ratio = errors(4e-3) / errors(2e-3)
    assert np.all(ratio >= 3.5)


def test_neck_eigenvalue_minimised_at_mode0(chain_eps01):
    lam = [lowest_eigenvalue(op) for op in neck_dirichlet_operator(chain_eps01, 3)]
    assert int(np.argmin(lam)) == 0
    assert all(b > a for a, b in zip(lam, lam[1:]))


def test_neck_eigenvalue_increases_as_eps_shrinks(chain_eps01, chain_eps005):
    l01 = lowest_eigenvalue(neck_dirichlet_operator(chain_eps01, 0)[0])
    l005 = lowest_eigenvalue(neck_dirichlet_operator(chain_eps005, 0)[0])
    assert l005 > l01


def test_neck_operator_is_principal_submatrix(chain_eps02):
    full = sl_discretize(chain_eps02, 1, "periodic").matrix()
    op = neck_dirichlet_operator(chain_eps02, 1)[1]
    idx = op.index
    sub = full[np.ix_(idx, idx)]
    # several neck runs are decoupled from each other
    assert np.allclose(np.linalg.eigvalsh(sub), np.linalg.eigvalsh(op.matrix()), rtol=1e-12, atol=1e-9)


def test_degenerate_neck_rejected(chain_eps02):
    g = chain_eps02.neck_geometry
    centre = next(seg.centre for seg in chain_eps02.segments if seg.kind == "neck")
    waist = int(np.argmin(np.abs(chain_eps02.s - centre)))
    f = np.ones_like(chain_eps02.f)
    f[waist] = g.f_match
    with pytest.raises(ValueError):
        neck_dirichlet_operator(replace(chain_eps02, f=f), 0)
    with pytest.raises(ValueError):
        neck_dirichlet_operator(sphere_profile(0.01), 0)


def test_mode_decoupling_against_tensor_discretisation():
    """Full cylinder-function spectrum vs the union of mode spectra.

    The 2-D operator uses the radial stencil tensored with a Fourier
    differentiation matrix in the angle, assembled densely.
    """
    prof = assemble_chain(ChainConfig(blocks=2, eps=0.2, h=0.02, periodic=False))
    n_theta = 8
    k = np.fft.fftfreq(n_theta, 1.0 / n_theta)
    F = np.fft.fft(np.eye(n_theta), axis=0)
    D = np.real(np.fft.ifft(k[:, None] ** 2 * F, axis=0))   # -d^2/dtheta^2, spectral
    D = 0.5 * (D + D.T)
    S0 = sl_discretize(prof, 0).matrix()
    A = np.kron(S0, np.eye(n_theta)) + np.kron(np.diag(1.0 / prof.f ** 2), D)
    full = np.linalg.eigvalsh(A)
    top = 10.0
    full = full[full < top]
    union = []
    for m in range(4):
        vals = la.eigvalsh_tridiagonal(sl_discretize(prof, m).diag, sl_discretize(prof, m).offdiag)
        union += list(vals[vals < top]) * (1 if m == 0 else 2)
    assert len(full) == len(union)
    assert np.allclose(full, np.sort(union), atol=1e-8)


# --------------------------------------------------------------------------
# block graphs


def test_cycle_block_spectrum_closed_form():
    op = block_graph_laplacian(4, "cycle", 0.0, ("line", 3))
    vals = np.linalg.eigvalsh(op.dense())
    expected = np.sort(np.tile(2 - 2 * np.cos(2 * np.pi * np.arange(4) / 4), 3))
    assert np.allclose(vals, expected, atol=1e-12)


def test_line_cover_weak_coupling_near_block_spectrum():
    block = np.linalg.eigvalsh(block_laplacian(6, "cycle"))
    for L in (5, 20, 50):
        vals = np.linalg.eigvalsh(block_graph_laplacian(6, "cycle", 0.01, ("line", L)).dense())
        assert np.max(np.min(np.abs(vals[:, None] - block[None, :]), axis=1)) <= 0.05


def test_base_without_coupling_is_block():
    for kind in ("cycle", "discrete_sphere"):
        op = block_graph_laplacian(5, kind, 0.0)
        assert np.array_equal(op.dense(), block_laplacian(5, kind))


def test_covering_bookkeeping():
    base = block_graph_laplacian(6, "discrete_sphere", 0.05)
    assert lift_operator(base, ("line", 7)).size == 7 * base.size
    assert lift_operator(base, "cyclic(1)").dense().tolist() == base.dense().tolist()
    with pytest.raises(ValueError):
        block_graph_laplacian(6, "cycle", 0.05, ("cyclic", 1))
    with pytest.raises(ValueError):
        lift_operator(lift_operator(base, ("cyclic", 2)), ("cyclic", 2))
    with pytest.raises(ValueError):
        parse_covering("tree(3)")
    with pytest.raises(ValueError):
        block_graph_laplacian(2, "cycle", 0.1)


@pytest.mark.parametrize("cov", [("cyclic", 2), ("cyclic", 3), ("cyclic", 5)])
def test_quotient_of_cyclic_cover_is_base(cov):
    base = block_graph_laplacian(6, "cycle", 0.3)
    assert np.allclose(quotient_operator(lift_operator(base, cov)), base.dense(), atol=1e-14)


@pytest.mark.parametrize("cov", [("line", 3), ("line", 10), ("cyclic", 2), ("cyclic", 4)])
def test_lifted_neck_eigenvalue_not_smaller(cov):
    base = block_graph_laplacian(6, "cycle", 0.01)
    assert lift_operator(base, cov).neck_lambda1() >= base.neck_lambda1() - 1e-9


def test_block_graph_laplacian_structure():
    op = block_graph_laplacian(7, "discrete_sphere", 0.2, ("cyclic", 3))
    A = op.dense()
    assert np.array_equal(A, A.T)
    assert np.allclose(A.sum(axis=1), 0.0, atol=1e-14)
    assert all(i <= j for i, j, _ in op.entries)
    ports = set(op.port_vertices().tolist())
    for i in range(op.size):
        if i not in ports:
            assert A[i, i] >= np.sum(np.abs(A[i])) - A[i, i] - 1e-14


def test_triplet_roundtrip(tmp_path, chain_eps02):
    op = sl_discretize(chain_eps02, 1, "periodic")
    text = op.to_triplets(tmp_path / "op.txt")
    first = text.splitlines()[0].split()
    assert len(first) == 3 and len(first[2].replace("-", "").replace(".", "").split("e")[0]) >= 16
    back = read_triplets(tmp_path / "op.txt", op.size)
    assert np.array_equal(back.toarray(), op.sparse().toarray())
    g = block_graph_laplacian(5, "cycle", 0.1, ("line", 4))
    assert np.array_equal(read_triplets(g.to_triplets()).toarray(), g.dense())
