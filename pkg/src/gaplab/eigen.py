"""Eigenvalue machinery: Sturm counting, bisection, Lanczos and Floquet discriminants."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import scipy.linalg as la

from .geometry import Profile
from .operators import BlockGraphOp, TridiagOp

# pivots smaller than this (relative to the matrix scale) are replaced by -guard
PIVOT_GUARD = 1e-30
# periodic shifts whose smallest leading pivot falls below this (relative to the norm) are recounted
BORDER_GUARD = 1e-6


class ConvergenceError(RuntimeError):
    def __init__(self, message, diagnostics=None):
        super().__init__(message)
        self.diagnostics = diagnostics or {}


@dataclass(frozen=True)
class EigenRequest:
    a: float
    b: float
    tol: float = 1e-10
    max_dim_dense: int = 0

    def __post_init__(self):
        if not self.a < self.b:
            raise ValueError(f"empty eigenvalue interval [{self.a}, {self.b}]")
        if not self.tol > 0:
            raise ValueError(f"tol must be positive, got {self.tol}")


def gershgorin_bounds(op: TridiagOp) -> tuple[float, float]:
    r = np.zeros(op.size)
    r[:-1] += np.abs(op.offdiag)
    r[1:] += np.abs(op.offdiag)
    if op.corner is not None:
        r[0] += abs(op.corner)
        r[-1] += abs(op.corner)
    return float(np.min(op.diag - r)), float(np.max(op.diag + r))


def _guard(d, pivmin):
    return np.where(np.abs(d) < pivmin, -pivmin, d)


def _bordered_count(a, b, corner, sig, pivmin):
    """Negative pivots of the bordered LDL^T of a periodic tridiagonal, and the smallest leading pivot."""
    n = len(a)
    m = n - 1
    d = _guard(a[0] - sig, pivmin)
    count = (d < 0).astype(np.int64)
    dmin = np.abs(d)
    u_last = b[m - 1]
    y = corner + (u_last if m == 1 else 0.0)
    schur = (a[n - 1] - sig) - y * y / d
    for i in range(1, m):
        l = b[i - 1] / d
        d = _guard(a[i] - sig - b[i - 1] * l, pivmin)
        count += d < 0
        dmin = np.minimum(dmin, np.abs(d))
        y = (u_last if i == m - 1 else 0.0) - l * y
        schur = schur - y * y / d
    return count + (_guard(schur, pivmin) < 0), dmin


def _dense_count(op: TridiagOp, sigma: float) -> int:
    """Inertia from a Bunch-Kaufman LDL^T of the dense shifted matrix."""
    _, D, _ = la.ldl(op.matrix() - sigma * np.eye(op.size))
    return int(np.sum(np.linalg.eigvalsh(D) < 0))


def sturm_count(op: TridiagOp, shift) -> np.ndarray | int:
    """Number of eigenvalues strictly below ``shift`` (vectorised over shifts).

    Counts negative pivots of the LDL^T factorisation of ``S - shift``.  A
    periodic corner coupling is handled by bordering: the inertia of the
    leading tridiagonal block plus the sign of the scalar Schur complement.
    When a leading pivot nearly vanishes the border recurrence loses all
    accuracy, so the ring is rotated to border a different row; if every
    rotation tried breaks down, a dense pivoted LDL^T decides.
    """
    sig = np.atleast_1d(np.asarray(shift, dtype=float))
    a = op.diag
    b = op.offdiag
    n = op.size
    scale = max(1.0, float(np.max(np.abs(a))), float(np.max(b * b)) if n > 1 else 0.0)
    pivmin = PIVOT_GUARD * scale
    if op.corner is not None and n > 2:
        count, dmin = _bordered_count(a, b, op.corner, sig, pivmin)
        # breakdown is judged against the matrix norm, not the pivmin scale
        norm = float(np.max(np.abs(a))) + 2 * max(float(np.max(np.abs(b))), abs(op.corner))
        cut = BORDER_GUARD * max(norm, 1e-300)
        bad = np.flatnonzero(dmin < cut)
        ring = np.append(b, op.corner)
        for k in sorted({n // 2, n // 3, 1}):
            if len(bad) == 0:
                break
            rb = np.roll(ring, -k)
            c, dm = _bordered_count(np.roll(a, -k), rb[:-1], rb[-1], sig[bad], pivmin)
            ok = dm >= cut
            count[bad[ok]] = c[ok]
            bad = bad[~ok]
        for j in bad:
            count[j] = _dense_count(op, sig[j])
    else:
        d = _guard(a[0] - sig, pivmin)
        count = (d < 0).astype(np.int64)
        for i in range(1, n):
            d = _guard(a[i] - sig - b[i - 1] * (b[i - 1] / d), pivmin)
            count += d < 0
    if np.ndim(shift) == 0:
        return int(count[0])
    return count


def dense_eigvals(op: TridiagOp) -> np.ndarray:
    """Reference spectrum from a dense symmetric eigensolver."""
    if op.corner is None:
        return la.eigvalsh_tridiagonal(op.diag, op.offdiag)
    return np.linalg.eigvalsh(op.matrix())


def eigs_in_interval(op: TridiagOp, request: EigenRequest) -> np.ndarray:
    """All eigenvalues in ``[a, b)`` to absolute accuracy ``tol`` by Sturm bisection.

    When the operator is no larger than ``request.max_dim_dense`` the result is
    cross-checked against a dense solve and a mismatch raises.
    """
    a, b, tol = request.a, request.b, request.tol
    lo_n, hi_n = sturm_count(op, np.array([a, b]))
    idx = np.arange(lo_n, hi_n)
    if len(idx) == 0:
        return np.zeros(0)
    lo = np.full(len(idx), float(a))
    hi = np.full(len(idx), float(b))
    while True:
        open_ = (hi - lo) > tol
        if not np.any(open_):
            break
        mid = 0.5 * (lo + hi)
        c = sturm_count(op, mid[open_])
        sel = np.flatnonzero(open_)
        above = c > idx[sel]
        hi[sel[above]] = mid[open_][above]
        lo[sel[~above]] = mid[open_][~above]
    vals = 0.5 * (lo + hi)
    if 0 < op.size <= request.max_dim_dense:
        ref = dense_eigvals(op)
        ref = ref[(ref >= a) & (ref < b)]
        if len(ref) != len(vals) or np.max(np.abs(ref - vals), initial=0.0) > tol + 1e-9 * max(1.0, abs(b)):
            raise ConvergenceError("bisection disagrees with dense eigensolver",
                                   {"bisection": vals.tolist(), "dense": ref.tolist()})
    return vals


def lowest_eigenvalue(op: TridiagOp, tol: float = 1e-11) -> float:
    """Smallest eigenvalue to relative accuracy ``tol`` (absolute below 1)."""
    lo, hi = gershgorin_bounds(op)
    scale = max(1.0, abs(lo), abs(hi))
    rough = float(eigs_in_interval(op, EigenRequest(lo - 1.0, hi + 1.0, tol=1e-6 * scale))[0])
    width = 2e-6 * scale
    fine = eigs_in_interval(op, EigenRequest(rough - width, rough + width, tol=tol * max(1.0, abs(rough))))
    return float(fine[0])


# --------------------------------------------------------------------------
# Lanczos


def _inertia_below(A: np.ndarray, shift: float) -> int:
    _, D, _ = la.ldl(A - shift * np.eye(A.shape[0]))
    # D is block diagonal with 1x1 and 2x2 blocks; count its negative eigenvalues
    return int(np.sum(np.linalg.eigvalsh(D) < 0))


def lanczos(matvec, n: int, k: int, tol: float, max_iter: int | None = None, seed: int = 0,
            check_every: int = 10, verify=None):
    """Lanczos tridiagonalisation with full reorthogonalisation.

    On breakdown the iteration restarts from a fresh random vector orthogonal
    to the current basis, so repeated eigenvalues are picked up one copy per
    restart.  ``verify(theta)`` may return the exact number of eigenvalues
    below ``theta``; a mismatch forces another restart.

    Returns ``(values, vectors, info)`` for the ``k`` smallest Ritz pairs.
    """
    rng = np.random.default_rng(seed)
    max_iter = max_iter or n
    Q = np.zeros((n, min(max_iter, n) + 1))
    alpha = np.zeros(max_iter + 1)
    beta = np.zeros(max_iter + 1)

    def fresh(j):
        for _ in range(5):
            q = rng.standard_normal(n)
            for _ in range(2):
                q -= Q[:, :j] @ (Q[:, :j].T @ q)
            nq = np.linalg.norm(q)
            if nq > 1e-8:
                return q / nq
        return None

    q = fresh(0)
    Q[:, 0] = q
    anorm = 0.0
    restarts = 0
    j = 0
    theta = Y = None
    while True:
        w = matvec(Q[:, j])
        alpha[j] = Q[:, j] @ w
        w -= Q[:, :j + 1] @ (Q[:, :j + 1].T @ w)
        w -= Q[:, :j + 1] @ (Q[:, :j + 1].T @ w)
        bj = np.linalg.norm(w)
        anorm = max(anorm, abs(alpha[j]) + bj + (beta[j - 1] if j > 0 else 0.0))
        dim = j + 1
        last = dim >= n or dim >= max_iter
        breakdown = bj <= 1e-10 * max(anorm, 1.0)
        if breakdown or last or dim % check_every == 0 or dim >= k and dim < k + check_every and dim == k:
            T_off = beta[:dim - 1]
            # stev (QL) rather than the default MRRR driver, which can fail on split matrices
            if dim > 1:
                theta, Y = la.eigh_tridiagonal(alpha[:dim], T_off, lapack_driver="stev")
            else:
                theta, Y = alpha[:1].copy(), np.ones((1, 1))
            resid = np.abs((0.0 if breakdown else bj) * Y[-1, :])
            if dim >= k and np.all(resid[:k] <= tol * max(anorm, 1.0)):
                ok = True
                if verify is not None and dim < n:
                    cut = theta[k - 1] + max(tol * max(anorm, 1.0), 1e-9 * max(anorm, 1.0)) * 10
                    ok = verify(cut) <= int(np.sum(theta < cut))
                if ok:
                    break
                breakdown = True
            if last:
                if dim >= n or dim >= k and np.all(resid[:k] <= tol * max(anorm, 1.0)):
                    break
                raise ConvergenceError("Lanczos did not converge", {
                    "iterations": dim, "restarts": restarts, "residuals": resid[:k].tolist(),
                    "anorm": anorm})
        if breakdown:
            beta[j] = 0.0
            q = fresh(dim)
            if q is None:
                break
            restarts += 1
        else:
            beta[j] = bj
            q = w / bj
        Q[:, dim] = q
        j = dim
    dim = j + 1
    vecs = Q[:, :dim] @ Y[:, :k]
    info = {"iterations": dim, "restarts": restarts, "anorm": anorm}
    return theta[:k], vecs, info


def _as_matrix(op):
    if isinstance(op, BlockGraphOp):
        return op.sparse()
    if isinstance(op, TridiagOp):
        return op.sparse()
    return op


def smallest_eigs(op, k: int, tol: float = 1e-10, max_dim_dense: int = 64, seed: int = 0,
                  return_vectors: bool = False, inertia_check_limit: int = 2000):
    """The ``k`` smallest eigenvalues of a symmetric operator.

    Sizes up to ``max_dim_dense`` use a dense solve; larger ones run Lanczos
    with full reorthogonalisation.  Every returned pair satisfies
    ``||A v - lam v|| <= tol * ||A||``.
    """
    A = _as_matrix(op)
    n = A.shape[0]
    if not 1 <= k <= n:
        raise ValueError(f"k must lie in [1, {n}], got {k}")
    if n <= max_dim_dense:
        dense = A.toarray() if hasattr(A, "toarray") else np.asarray(A)
        vals, vecs = np.linalg.eigh(dense)
        return (vals[:k], vecs[:, :k]) if return_vectors else vals[:k]
    verify = None
    if n <= inertia_check_limit:
        dense = A.toarray() if hasattr(A, "toarray") else np.asarray(A)
        verify = lambda x: _inertia_below(dense, x)  # noqa: E731
    vals, vecs, info = lanczos(lambda x: A @ x, n, k, tol, seed=seed, verify=verify)
    anorm = max(info["anorm"], 1.0)
    res = np.linalg.norm(A @ vecs - vecs * vals, axis=0)
    if np.any(res > tol * anorm * 10):
        raise ConvergenceError("Ritz residuals above tolerance", {**info, "residuals": res.tolist()})
    return (vals, vecs) if return_vectors else vals


# --------------------------------------------------------------------------
# Floquet discriminant


@dataclass(frozen=True)
class Discriminant:
    lam: float
    value: float
    mode: int


def _propagators(inv_f0, f0, inv_fm, fm, inv_f1, f1, m, lam, hs):
    """RK4 one-step propagators for ``y' = [[0, 1/f], [m^2/f - lam f, 0]] y``.

    Shapes: radius arrays ``(N,)``, ``lam`` ``(L,)``; result ``(N, L, 2, 2)``.
    """
    m2 = float(m * m)

    def M(inv_f, f):
        out = np.zeros((len(f), len(lam), 2, 2))
        out[:, :, 0, 1] = inv_f[:, None]
        out[:, :, 1, 0] = m2 * inv_f[:, None] - lam[None, :] * f[:, None]
        return out

    I = np.eye(2)
    M1, M2, M4 = M(inv_f0, f0), M(inv_fm, fm), M(inv_f1, f1)
    K1 = M1
    K2 = M2 @ (I + 0.5 * hs * K1)
    K3 = M2 @ (I + 0.5 * hs * K2)
    K4 = M4 @ (I + hs * K3)
    return I + (hs / 6.0) * (K1 + 2 * K2 + 2 * K3 + K4)


def _ordered_product(P: np.ndarray) -> np.ndarray:
    """``P[N-1] @ ... @ P[0]`` by a fixed pairwise tree."""
    while P.shape[0] > 1:
        if P.shape[0] % 2:
            eye = np.broadcast_to(np.eye(2), (1,) + P.shape[1:]).copy()
            P = np.concatenate([P, eye], axis=0)
        P = P[1::2] @ P[0::2]
    return P[0]


def monodromy(profile: Profile, m: int, lam, step: float = 1e-3, chunk: int = 64) -> np.ndarray:
    """Monodromy matrices over one period for ``y1 = u``, ``y2 = f u'``.

    Fixed-step classical Runge-Kutta; the step is shrunk so it divides the period.
    """
    if not profile.periodic:
        raise ValueError("monodromy needs a periodic profile")
    if step > 1e-3 * (1 + 1e-12):
        raise ValueError(f"step {step} too large: need step <= 1e-3")
    if m < 0:
        raise ValueError(f"mode must be non-negative, got {m}")
    lam = np.atleast_1d(np.asarray(lam, dtype=float))
    N = int(math.ceil(profile.period / step - 1e-9))
    hs = profile.period / N
    nodes = np.arange(N + 1) * hs
    f_nodes = np.asarray(profile.radius(nodes), dtype=float)
    f_mid = np.asarray(profile.radius(nodes[:-1] + 0.5 * hs), dtype=float)
    out = np.empty((len(lam), 2, 2))
    for start in range(0, len(lam), chunk):
        lc = lam[start:start + chunk]
        P = _propagators(1 / f_nodes[:-1], f_nodes[:-1], 1 / f_mid, f_mid, 1 / f_nodes[1:], f_nodes[1:], m, lc, hs)
        out[start:start + chunk] = _ordered_product(P)
    return out


def discriminant(profile: Profile, m: int, lam, step: float = 1e-3):
    """Trace of the monodromy matrix, ``D(lam)``; ``|D| <= 2`` marks a Floquet band."""
    M = monodromy(profile, m, lam, step)
    D = M[:, 0, 0] + M[:, 1, 1]
    return float(D[0]) if np.ndim(lam) == 0 else D


def determinant_defect(M: np.ndarray) -> np.ndarray:
    """``|det M - 1|`` relative to the size of the products ``ad`` and ``bc``.

    The absolute defect is returned when the entries are O(1); for the huge
    monodromies of high modes the scaled value measures what rounding allows.
    """
    ad = M[..., 0, 0] * M[..., 1, 1]
    bc = M[..., 0, 1] * M[..., 1, 0]
    return np.abs(ad - bc - 1.0) / np.maximum(1.0, np.abs(ad) + np.abs(bc))


def discriminant_sweep_csv(rows, path=None) -> str:
    text = "lambda,m,D\n" + "".join(f"{lam:.17g},{m},{d:.17g}\n" for lam, m, d in rows)
    if path is not None:
        from pathlib import Path

        Path(path).write_text(text, encoding="utf-8")
    return text
