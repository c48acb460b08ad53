"""Discrete Laplace-Beltrami operators on profiles and covering block-graph Laplacians."""
from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy.sparse as sp

from .geometry import Profile

BCS = ("dirichlet", "neumann", "periodic")


@dataclass(frozen=True)
class TridiagOp:
    """Symmetrised three-point operator for one Fourier mode.

    ``diag``/``offdiag`` hold ``S = W^{-1/2} K W^{-1/2}`` where ``K`` is the
    stiffness matrix and ``W = diag(mass)``.  The operator on nodal values is
    ``A = W^{-1} K``; it is self-adjoint for ``<u, v> = sum(u * v * mass)``.
    """

    diag: np.ndarray
    offdiag: np.ndarray
    mass: np.ndarray
    mode: int
    bc: str
    h: float
    corner: float | None = None
    index: np.ndarray | None = None

    @property
    def size(self) -> int:
        return len(self.diag)

    def matrix(self) -> np.ndarray:
        S = np.diag(self.diag) + np.diag(self.offdiag, 1) + np.diag(self.offdiag, -1)
        if self.corner is not None:
            S[0, -1] += self.corner
            S[-1, 0] += self.corner
        return S

    def sparse(self) -> sp.csr_matrix:
        S = sp.diags([self.offdiag, self.diag, self.offdiag], [-1, 0, 1], format="lil")
        if self.corner is not None:
            S[0, self.size - 1] += self.corner
            S[self.size - 1, 0] += self.corner
        return S.tocsr()

    def apply_symmetric(self, x: np.ndarray) -> np.ndarray:
        y = self.diag * x
        y[:-1] += self.offdiag * x[1:]
        y[1:] += self.offdiag * x[:-1]
        if self.corner is not None:
            y[0] += self.corner * x[-1]
            y[-1] += self.corner * x[0]
        return y

    def apply(self, u: np.ndarray) -> np.ndarray:
        """``A u`` on nodal values."""
        r = np.sqrt(self.mass)
        return self.apply_symmetric(u * r) / r

    def inner(self, u: np.ndarray, v: np.ndarray) -> float:
        return float(np.sum(u * v * self.mass))

    def norm(self, u: np.ndarray) -> float:
        return float(np.sqrt(self.inner(u, u)))

    def energy(self, u: np.ndarray) -> float:
        """``<A u, u>`` in the weighted inner product (the discrete Dirichlet form plus potential)."""
        r = np.sqrt(self.mass)
        x = u * r
        return float(x @ self.apply_symmetric(x))

    def coupling(self, i: int, j: int) -> float:
        n = self.size
        if j == i + 1:
            return float(self.offdiag[i])
        if i == j + 1:
            return float(self.offdiag[j])
        if self.corner is not None and {i, j} == {0, n - 1}:
            return float(self.corner)
        return 0.0

    def restrict(self, idx) -> "TridiagOp":
        """Principal submatrix along an index run (zero Dirichlet data outside it).

        ``idx`` lists positions in chain order and may wrap around a periodic seam.
        """
        pos = np.asarray(idx)
        if pos.dtype == bool:
            pos = np.flatnonzero(pos)
        a, b = pos[:-1], pos[1:]
        off = np.zeros(len(a))
        fwd, bwd = b == a + 1, a == b + 1
        off[fwd] = self.offdiag[a[fwd]]
        off[bwd] = self.offdiag[b[bwd]]
        if self.corner is not None:
            seam = ((a == 0) & (b == self.size - 1)) | ((a == self.size - 1) & (b == 0))
            off[seam] = self.corner
        base = self.index if self.index is not None else np.arange(self.size)
        return TridiagOp(diag=self.diag[pos].copy(), offdiag=off, mass=self.mass[pos].copy(), mode=self.mode,
                         bc="dirichlet", h=self.h, corner=None, index=base[pos])

    def to_triplets(self, path=None) -> str:
        return write_triplets(self.sparse(), path)


def _half_radii(f: np.ndarray) -> np.ndarray:
    """Geometric means of neighbouring samples (length n-1)."""
    return np.sqrt(f[:-1] * f[1:])


def _face_radii(profile: Profile, half: str) -> tuple[np.ndarray, float | None]:
    """Radii on the interior faces and on the periodic seam face."""
    f = np.asarray(profile.f, dtype=float)
    exact = half == "exact" or (half == "auto" and profile.segments)
    if half not in ("auto", "exact", "geometric"):
        raise ValueError(f"unknown half-grid rule {half!r}")
    if not exact:
        return _half_radii(f), (float(np.sqrt(f[-1] * f[0])) if profile.periodic else None)
    faces = 0.5 * (profile.s[:-1] + profile.s[1:])
    fh = np.asarray(profile.radius(faces), dtype=float)
    seam = None
    if profile.periodic:
        seam = float(profile.radius(np.array([profile.s[-1] + 0.5 * profile.h]))[0])
    return fh, seam


def sl_discretize(profile: Profile, m: int, bc: str = "neumann", half: str = "auto") -> TridiagOp:
    """Mode-``m`` Laplacian ``-f^{-1}(f u')' + m^2 f^{-2} u`` on a profile.

    Capped ends are poles: the flux through them vanishes, which is the
    one-sided Neumann rule for m = 0 and, together with the ``m^2/f^2``
    barrier, regular vanishing for m >= 1.  On capped profiles
    ``bc="dirichlet"`` additionally clamps the two end cells to zero.
    Periodic profiles accept ``periodic``, or ``neumann``/``dirichlet`` at the
    two ends of the period (half a cell outside the first and last node).
    """
    if m < 0 or int(m) != m:
        raise ValueError(f"mode must be a non-negative integer, got {m}")
    if bc not in BCS:
        raise ValueError(f"unknown boundary condition {bc!r}")
    f = np.asarray(profile.f, dtype=float)
    h = profile.h
    n = len(f)
    if n < 3:
        raise ValueError("profile needs at least three samples")
    capped = not profile.periodic
    if capped and bc == "periodic":
        raise ValueError("periodic boundary condition on a profile with poles")

    fh, fw = _face_radii(profile, half)
    K_diag = np.zeros(n)
    K_diag[:-1] += fh / h
    K_diag[1:] += fh / h
    K_off = -fh / h
    corner = None
    if bc == "periodic":
        K_diag[0] += fw / h
        K_diag[-1] += fw / h
        corner_k = -fw / h
    elif bc == "dirichlet" and not capped:
        # ghost value -u at the half-cell boundary
        K_diag[0] += 2 * f[0] / h
        K_diag[-1] += 2 * f[-1] / h
    K_diag += m * m * h / f
    mass = f * h
    r = np.sqrt(mass)
    diag = K_diag / mass
    off = K_off / (r[:-1] * r[1:])
    if bc == "periodic":
        corner = corner_k / (r[0] * r[-1])
    op = TridiagOp(diag=diag, offdiag=off, mass=mass, mode=int(m), bc=bc, h=h, corner=corner,
                   index=np.arange(n))
    if capped and bc == "dirichlet":
        op = op.restrict(np.arange(1, n - 1))
    return op


def neck_dirichlet_operator(profile: Profile, m_max: int) -> list[TridiagOp]:
    """Dirichlet operators of the neck region, one per mode ``0..m_max``.

    With several necks the operator is block diagonal; the returned operator
    concatenates the runs with zero coupling between them.
    """
    regions = profile.neck_regions()
    if not regions or sum(len(r) for r in regions) == 0:
        raise ValueError("profile has an empty neck region")
    if any(len(r) < 2 for r in regions):
        raise ValueError("neck region must span at least two grid points")
    ops = []
    bc = "periodic" if profile.periodic else "neumann"
    for m in range(m_max + 1):
        full = sl_discretize(profile, m, bc)
        parts = [full.restrict(run) for run in regions]
        off = np.concatenate([np.append(p.offdiag, 0.0) for p in parts])[:-1]
        ops.append(TridiagOp(diag=np.concatenate([p.diag for p in parts]), offdiag=off,
                             mass=np.concatenate([p.mass for p in parts]), mode=m, bc="dirichlet",
                             h=profile.h, index=np.concatenate([p.index for p in parts])))
    return ops


# --------------------------------------------------------------------------
# block graphs

BLOCK_KINDS = ("cycle", "discrete_sphere")


def parse_covering(covering, allow_trivial: bool = False) -> tuple[str, int]:
    """Accept ``"base"``, ``("cyclic", k)``, ``("line", L)`` or strings like ``"line(10)"``.

    ``cyclic(1)`` is the base itself; it is only accepted with ``allow_trivial``.
    """
    if isinstance(covering, str):
        c = covering.strip()
        if c == "base":
            return ("base", 1)
        if "(" in c and c.endswith(")"):
            kind, num = c[:-1].split("(")
            return parse_covering((kind.strip(), int(num)), allow_trivial)
        raise ValueError(f"unrecognised covering {covering!r}")
    kind, k = covering
    k = int(k)
    if kind == "cyclic":
        if k == 1 and allow_trivial:
            return ("base", 1)
        if k < 2:
            raise ValueError(f"cyclic covering needs k >= 2, got {k}")
        return ("cyclic", k)
    if kind == "line":
        if k < 2:
            raise ValueError(f"line covering needs L >= 2, got {k}")
        return ("line", k)
    if kind == "base":
        return ("base", 1)
    raise ValueError(f"unrecognised covering {covering!r}")


def _block_edges(block_size: int, block_kind: str) -> tuple[list[tuple[int, int]], tuple[int, int], int]:
    """Edges, port pair and vertex count of one block."""
    if block_kind == "cycle":
        n = block_size
        edges = [(i, (i + 1) % n) for i in range(n)]
        return edges, (0, n // 2), n
    if block_kind == "discrete_sphere":
        # bipyramid: an equatorial cycle plus two poles joined to every equator vertex
        n = block_size + 2
        edges = [(i, (i + 1) % block_size) for i in range(block_size)]
        north, south = block_size, block_size + 1
        edges += [(north, i) for i in range(block_size)] + [(south, i) for i in range(block_size)]
        return edges, (north, south), n
    raise ValueError(f"unknown block kind {block_kind!r}")


def block_laplacian(block_size: int, block_kind: str) -> np.ndarray:
    edges, _, n = _block_edges(block_size, block_kind)
    L = np.zeros((n, n))
    for i, j in edges:
        L[i, i] += 1
        L[j, j] += 1
        L[i, j] -= 1
        L[j, i] -= 1
    return L


@dataclass(frozen=True)
class BlockGraphOp:
    entries: tuple      # (i, j, value) with i <= j
    size: int
    block_ranges: tuple  # (start, stop) per block copy
    coupling: float
    covering: tuple     # ("base", 1) | ("cyclic", k) | ("line", L)
    ports: tuple        # (port_a, port_b) within one block
    block_size: int
    block_kind: str
    coupling_edges: tuple = field(default=())

    def sparse(self) -> sp.csr_matrix:
        if not self.entries:
            return sp.csr_matrix((self.size, self.size))
        i, j, v = (np.array(x) for x in zip(*self.entries))
        A = sp.coo_matrix((v, (i, j)), shape=(self.size, self.size)).tocsr()
        return (A + sp.triu(A, 1).T).tocsr()

    def dense(self) -> np.ndarray:
        return self.sparse().toarray()

    def matvec(self, x: np.ndarray) -> np.ndarray:
        return self.sparse() @ x

    def port_vertices(self) -> np.ndarray:
        a, b = self.ports
        return np.array(sorted({start + p for start, _ in self.block_ranges for p in (a, b)}))

    def neck_lambda1(self) -> float:
        """Lowest Dirichlet eigenvalue on the neck subgraph (the coupling ports)."""
        idx = self.port_vertices()
        sub = self.dense()[np.ix_(idx, idx)]
        return float(np.linalg.eigvalsh(sub)[0])

    def to_triplets(self, path=None) -> str:
        return write_triplets(self.sparse(), path)


def _assemble(block_size, block_kind, coupling, covering, copies) -> BlockGraphOp:
    edges, ports, nb = _block_edges(block_size, block_kind)
    acc: dict[tuple[int, int], float] = {}

    def add(i, j, w):
        if i == j:
            return
        a, b = min(i, j), max(i, j)
        acc[(a, a)] = acc.get((a, a), 0.0) + w
        acc[(b, b)] = acc.get((b, b), 0.0) + w
        acc[(a, b)] = acc.get((a, b), 0.0) - w

    ranges = []
    for c in range(copies):
        off = c * nb
        ranges.append((off, off + nb))
        for i, j in edges:
            add(off + i, off + j, 1.0)
    kind, k = covering
    pa, pb = ports
    cedges = []
    if kind == "base":
        cedges.append((pa, pb))
    elif kind == "cyclic":
        cedges += [(c * nb + pb, ((c + 1) % k) * nb + pa) for c in range(k)]
    else:
        cedges += [(c * nb + pb, (c + 1) * nb + pa) for c in range(k - 1)]
    if coupling != 0:
        for i, j in cedges:
            add(i, j, coupling)
    else:
        for i, j in cedges:
            a, b = min(i, j), max(i, j)
            acc.setdefault((a, b), 0.0)
    entries = tuple((i, j, v) for (i, j), v in sorted(acc.items()))
    return BlockGraphOp(entries=entries, size=copies * nb, block_ranges=tuple(ranges), coupling=float(coupling),
                        covering=covering, ports=ports, block_size=block_size, block_kind=block_kind,
                        coupling_edges=tuple(cedges))


def block_graph_laplacian(block_size: int, block_kind: str, coupling: float, covering="base") -> BlockGraphOp:
    """Graph Laplacian of block copies joined port-to-port with weight ``coupling``.

    The base is one block whose two antipodal ports are joined by a single
    coupling edge; ``cyclic(k)`` closes k copies into a ring and ``line(L)``
    is the length-L truncation of the infinite cyclic cover.
    """
    if block_size < 3:
        raise ValueError(f"block_size must be >= 3, got {block_size}")
    if coupling < 0:
        raise ValueError(f"coupling must be non-negative, got {coupling}")
    if block_kind not in BLOCK_KINDS:
        raise ValueError(f"unknown block kind {block_kind!r}")
    cov = parse_covering(covering)
    copies = cov[1]
    return _assemble(block_size, block_kind, coupling, cov, copies)


def lift_operator(base: BlockGraphOp, covering) -> BlockGraphOp:
    """Lift a base operator to a covering; the deck group permutes block copies."""
    if base.covering[0] != "base":
        raise ValueError("operator is already a covering; lift the base instead")
    cov = parse_covering(covering, allow_trivial=True)
    return _assemble(base.block_size, base.block_kind, base.coupling, cov, cov[1])


def quotient_operator(op: BlockGraphOp) -> np.ndarray:
    """Push a cyclic covering down to the base by summing over deck orbits."""
    kind, k = op.covering
    if kind not in ("cyclic", "base"):
        raise ValueError("only cyclic coverings have a finite deck group quotient")
    nb = op.size // k
    A = op.dense()
    Q = np.zeros((nb, nb))
    for c in range(k):
        for d in range(k):
            Q += A[c * nb:(c + 1) * nb, d * nb:(d + 1) * nb]
    return Q / k


def write_triplets(A, path=None) -> str:
    """Coordinate triplets ``i j value`` (upper triangle, 17 significant digits)."""
    A = sp.coo_matrix(A)
    rows = sorted((int(i), int(j), float(v)) for i, j, v in zip(A.row, A.col, A.data) if i <= j)
    text = "".join(f"{i} {j} {v:.17g}\n" for i, j, v in rows)
    if path is not None:
        Path(path).write_text(text, encoding="utf-8")
    return text


def read_triplets(path_or_text, size: int | None = None) -> sp.csr_matrix:
    text = path_or_text
    if isinstance(path_or_text, Path) or (isinstance(path_or_text, str) and "\n" not in path_or_text):
        text = Path(path_or_text).read_text(encoding="utf-8")
    rows = [line.split() for line in text.strip().splitlines() if line.strip()]
    i = np.array([int(r[0]) for r in rows])
    j = np.array([int(r[1]) for r in rows])
    v = np.array([float(r[2]) for r in rows])
    n = size if size is not None else int(max(i.max(), j.max())) + 1
    A = sp.coo_matrix((v, (i, j)), shape=(n, n)).tocsr()
    return (A + sp.triu(A, 1).T).tocsr()
