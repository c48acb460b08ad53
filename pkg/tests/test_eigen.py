import math

import numpy as np
import pytest
import scipy.linalg as la

from gaplab.eigen import (ConvergenceError, EigenRequest, determinant_defect, discriminant, discriminant_sweep_csv,
                          eigs_in_interval, gershgorin_bounds, lanczos, monodromy, smallest_eigs, sturm_count)
from gaplab.geometry import ChainConfig, assemble_chain, cylinder_profile, sphere_profile
from gaplab.operators import TridiagOp, block_graph_laplacian, sl_discretize


def tri(diag, off, corner=None):
    diag = np.asarray(diag, dtype=float)
    return TridiagOp(diag=diag, offdiag=np.asarray(off, dtype=float), mass=np.ones(len(diag)), mode=0,
                     bc="periodic" if corner is not None else "dirichlet", h=1.0, corner=corner)


def random_tri(rng, n, periodic=False):
    return tri(rng.standard_normal(n) * 3, rng.standard_normal(n - 1), rng.standard_normal() if periodic else None)


def test_sturm_count_small_examples():
    op = tri([1, 2, 3], [0, 0])
    assert sturm_count(op, 2.5) == 2
    lo, _ = gershgorin_bounds(op)
    assert sturm_count(op, lo - 1) == 0
    assert list(sturm_count(op, np.array([0.5, 1.5, 2.5, 3.5]))) == [0, 1, 2, 3]


@pytest.mark.parametrize("periodic", [False, True])
def test_sturm_count_matches_dense(periodic):
    rng = np.random.default_rng(11)
    for _ in range(100):
        n = int(rng.integers(3, 60))
        op = random_tri(rng, n, periodic)
        ev = np.linalg.eigvalsh(op.matrix())
        shifts = rng.uniform(ev[0] - 1, ev[-1] + 1, 5)
        shifts = shifts[np.min(np.abs(shifts[:, None] - ev[None, :]), axis=1) > 1e-8]
        assert np.array_equal(sturm_count(op, shifts), np.searchsorted(ev, shifts))


def test_sturm_count_jumps_by_multiplicity():
    op = tri([1, 1, 1, 4, 4, 7], [0, 0, 0, 0, 0])
    counts = sturm_count(op, np.array([0.5, 1.5, 3.5, 4.5, 6.5, 7.5]))
    assert list(counts) == [0, 3, 3, 5, 5, 6]


def test_sturm_count_pivot_breakdown_guard():
    # a zero leading pivot at this shift; 1 is not an eigenvalue of the matrix
    op = tri([1.0, 3.0, 2.0], [1.0, 1.0])
    ev = np.linalg.eigvalsh(op.matrix())
    assert np.min(np.abs(ev - 1.0)) > 1e-3
    assert sturm_count(op, 1.0) == int(np.sum(ev < 1.0))


def test_sturm_count_periodic_zero_pivot():
    # the second leading pivot vanishes exactly at shift 0
    op = tri(np.ones(10), np.ones(9), corner=1.0)
    ev = np.linalg.eigvalsh(op.matrix())
    shifts = np.array([-0.5, 0.0, 0.1, 2.0])
    assert np.array_equal(sturm_count(op, shifts), np.searchsorted(ev, shifts))
    # here the bordered leading block itself is singular at the shift
    op = tri([3.5e-245, 0.0, 0.0, 0.0], [1.0, 1.0, 1.0], corner=0.0)
    assert sturm_count(op, 0.0) == 2


def test_eigs_in_interval_sphere():
    op = sl_discretize(sphere_profile(2e-3), 0)
    vals = eigs_in_interval(op, EigenRequest(-0.1, 7.0, tol=1e-6))
    assert len(vals) == 3
    assert np.allclose(vals, [0, 2, 6], atol=5e-3)


def test_eigs_in_interval_empty_and_invalid():
    op = tri([1, 2, 3], [0, 0])
    assert len(eigs_in_interval(op, EigenRequest(1.2, 1.8))) == 0
    with pytest.raises(ValueError):
        EigenRequest(1.0, 1.0)
    with pytest.raises(ValueError):
        EigenRequest(0.0, 1.0, tol=0.0)


def test_bisection_against_dense():
    rng = np.random.default_rng(5)
    tol = 1e-9
    for _ in range(100):
        op = random_tri(rng, int(rng.integers(2, 80)), periodic=bool(rng.integers(2)))
        ev = np.linalg.eigvalsh(op.matrix())
        a, b = np.sort(rng.uniform(ev[0] - 1, ev[-1] + 1, 2))
        vals = eigs_in_interval(op, EigenRequest(a, b, tol=tol, max_dim_dense=100))
        ref = ev[(ev >= a) & (ev < b)]
        assert len(vals) == len(ref)
        assert np.all(np.abs(vals - ref) <= tol + 1e-12)


def test_bisection_honours_tolerance():
    op = sl_discretize(assemble_chain(ChainConfig(eps=0.2, h=0.01)), 1, "periodic")
    coarse = eigs_in_interval(op, EigenRequest(0.0, 13.0, tol=1e-6))
    fine = eigs_in_interval(op, EigenRequest(0.0, 13.0, tol=1e-7))
    assert np.all(np.abs(coarse - fine) <= 1e-6)


def test_dense_cross_check_raises_on_mismatch():
    class Lying(TridiagOp):
        pass

    op = tri([1, 2, 3], [0.1, 0.1])
    bad = Lying(diag=op.diag, offdiag=op.offdiag, mass=op.mass, mode=0, bc="dirichlet", h=1.0)
    import gaplab.eigen as eg

    real = eg.dense_eigvals
    eg.dense_eigvals = lambda o: real(o) + 0.5
    try:
        with pytest.raises(ConvergenceError):
            eigs_in_interval(bad, EigenRequest(0.0, 5.0, max_dim_dense=10))
    finally:
        eg.dense_eigvals = real


# --------------------------------------------------------------------------
# Krylov


def test_smallest_eigs_cycle_block():
    op = block_graph_laplacian(4, "cycle", 0.0)
    vals = smallest_eigs(op, 4, tol=1e-12, max_dim_dense=0)
    assert np.allclose(vals, [0, 2, 2, 4], atol=1e-8)


def test_smallest_eigs_constant_ground_state():
    op = block_graph_laplacian(6, "discrete_sphere", 0.05, ("line", 12))
    vals, vecs = smallest_eigs(op, 3, tol=1e-12, max_dim_dense=0, return_vectors=True)
    assert abs(vals[0]) <= 1e-10
    v = vecs[:, 0] / vecs[0, 0]
    assert np.allclose(v, 1.0, atol=1e-8)


@pytest.mark.parametrize("L", [10, 40, 80])
def test_smallest_eigs_matches_dense(L):
    op = block_graph_laplacian(6, "cycle", 0.01, ("line", L))
    assert op.size <= 500
    vals = smallest_eigs(op, op.size, tol=1e-11, max_dim_dense=0)
    assert np.max(np.abs(vals - np.linalg.eigvalsh(op.dense()))) <= 1e-8


def test_smallest_eigs_residuals():
    op = block_graph_laplacian(5, "discrete_sphere", 0.2, ("cyclic", 9))
    vals, vecs = smallest_eigs(op, 10, tol=1e-10, max_dim_dense=0, return_vectors=True)
    A = op.sparse()
    res = np.linalg.norm(A @ vecs - vecs * vals, axis=0)
    assert np.all(res <= 1e-10 * la.norm(op.dense(), 2) * 10)


def test_lanczos_reports_nonconvergence():
    A = np.diag(np.linspace(0, 1, 200))
    with pytest.raises(ConvergenceError) as info:
        lanczos(lambda x: A @ x, 200, 5, tol=1e-14, max_iter=8)
    assert "iterations" in info.value.diagnostics


def test_smallest_eigs_validates_k():
    with pytest.raises(ValueError):
        smallest_eigs(block_graph_laplacian(4, "cycle", 0.0), 5)


# --------------------------------------------------------------------------
# Floquet discriminant


def test_discriminant_cylinder_values():
    cyl = cylinder_profile(math.pi, 1e-3)
    assert discriminant(cyl, 0, 1.0) == pytest.approx(-2.0, abs=1e-8)
    assert discriminant(cylinder_profile(2.7, 1e-3), 0, 0.0) == pytest.approx(2.0, abs=1e-12)


def test_discriminant_cylinder_sweep():
    cyl = cylinder_profile(math.pi, 1e-3)
    lam = np.linspace(0, 20, 400)
    D = discriminant(cyl, 0, lam)
    assert np.max(np.abs(D - 2 * np.cos(math.pi * np.sqrt(lam)))) <= 1e-6


def test_discriminant_cylinder_higher_mode():
    # mode m on f = 1 shifts lambda by m^2
    cyl = cylinder_profile(2.0, 1e-3)
    lam = np.linspace(5, 15, 21)
    D = discriminant(cyl, 2, lam)
    assert np.max(np.abs(D - 2 * np.cos(2.0 * np.sqrt(lam - 4)))) <= 1e-6


def test_monodromy_unimodular(chain_eps005):
    lam = np.linspace(0, 13, 60)
    for m in range(3):
        assert np.max(determinant_defect(monodromy(chain_eps005, m, lam))) <= 1e-8


def test_discriminant_argument_checks(chain_eps02):
    with pytest.raises(ValueError):
        discriminant(chain_eps02, 0, 1.0, step=2e-3)
    with pytest.raises(ValueError):
        discriminant(sphere_profile(0.01), 0, 1.0)


def test_discriminant_independent_of_chunking(chain_eps02):
    lam = np.linspace(0, 13, 150)
    a = monodromy(chain_eps02, 1, lam, chunk=7)
    b = monodromy(chain_eps02, 1, lam, chunk=64)
    assert np.array_equal(a, b)


def test_periodic_eigenvalues_inside_bands(chain_eps02):
    op = sl_discretize(chain_eps02, 0, "periodic")
    vals = eigs_in_interval(op, EigenRequest(-1.0, 13.0, tol=1e-11))
    D = discriminant(chain_eps02, 0, vals)
    # |D| <= 2 up to the discretisation error of the matrix eigenvalues
    dD = np.abs(discriminant(chain_eps02, 0, vals + 1e-6) - D) / 1e-6
    slack = 10 * chain_eps02.h ** 2 * dD
    assert np.all(np.abs(D) <= 2 + slack + 1e-9)


def test_discriminant_csv():
    text = discriminant_sweep_csv([(0.5, 0, 1.25), (1.0, 1, -0.3)])
    lines = text.strip().splitlines()
    assert lines[0] == "lambda,m,D"
    assert lines[2].split(",") == ["1", "1", "-0.29999999999999999"]
