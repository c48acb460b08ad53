"""Cutoff quasi-modes, residuals, the Donnelly test and sampled inequality checks."""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field

import numpy as np
import scipy.linalg as la
from scipy.optimize import brentq
from scipy.special import j0, j1, lpmv, y0, y1

from . import __version__
from .geometry import SCHEMA_VERSION, Profile
from .operators import TridiagOp, neck_dirichlet_operator, sl_discretize

CUTOFF_KINDS = ("log", "linear", "smoothstep")


@dataclass(frozen=True)
class CutoffSpec:
    """Radial cutoff: 0 inside ``rho``, 1 outside ``r_outer`` (default ``sqrt(rho)``).

    ``log`` is linear in ``log r``; ``smoothstep`` applies ``3t^2 - 2t^3`` to the
    same log variable so the cutoff is C^1 and its Laplacian stays in L^2.
    """
    rho: float
    r_outer: float | None = None
    kind: str = "log"

    def __post_init__(self):
        if not self.rho > 0:
            raise ValueError(f"rho must be positive, got {self.rho}")
        if self.kind not in CUTOFF_KINDS:
            raise ValueError(f"unknown cutoff kind {self.kind!r}")
        if not self.outer > self.rho:
            raise ValueError(f"need rho < r_outer, got {self.rho} and {self.outer}")

    @property
    def outer(self) -> float:
        return math.sqrt(self.rho) if self.r_outer is None else float(self.r_outer)

    @property
    def log_width(self) -> float:
        return math.log(self.outer / self.rho)


def log_cutoff_value(spec: CutoffSpec, r):
    r_arr = np.asarray(r, dtype=float)
    if np.any(r_arr <= 0):
        raise ValueError("cutoff radius must be positive")
    if spec.kind == "linear":
        t = (r_arr - spec.rho) / (spec.outer - spec.rho)
    else:
        t = np.log(r_arr / spec.rho) / spec.log_width
    t = np.clip(t, 0.0, 1.0)
    if spec.kind == "smoothstep":
        t = t * t * (3 - 2 * t)
    return float(t) if np.ndim(r) == 0 else t


def cutoff_energy(spec: CutoffSpec, cells: int = 4000) -> float:
    """Flat-plane Dirichlet energy of the cutoff over its annulus.

    Uses a geometric radial grid so the log variable is sampled uniformly.
    """
    r = spec.rho * (spec.outer / spec.rho) ** (np.arange(cells + 1) / cells)
    z = log_cutoff_value(spec, r)
    dr = np.diff(r)
    rm = 0.5 * (r[:-1] + r[1:])
    return float(2 * np.pi * np.sum(rm * (np.diff(z) / dr) ** 2 * dr))


# --------------------------------------------------------------------------
# quasi-modes


@dataclass
class QuasiMode:
    values: np.ndarray
    lambda_target: float
    block_index: int
    cutoff: CutoffSpec | None
    mode: int
    k: int
    weights: np.ndarray
    h: float
    residual: float | None = None
    extension: str = "legendre"

    @property
    def size(self) -> int:
        return len(self.values)

    def inner(self, other: "QuasiMode") -> float:
        return float(np.sum(self.values * other.values * self.weights))

    def to_csv(self, s: np.ndarray) -> str:
        lines = ["s,u"] + [f"{a:.17g},{b:.17g}" for a, b in zip(s, self.values)]
        return "\n".join(lines) + "\n"


def _offsets(profile: Profile, centre: float) -> np.ndarray:
    d = profile.s - centre
    if profile.periodic:
        d = (d + profile.period / 2) % profile.period - profile.period / 2
    return d


def block_coordinates(profile: Profile, block: int):
    """Polar angle, geodesic and conformal distance to the nearest pole of a block's sphere.

    The conformal radius is ``2 exp(-|tau|)`` with ``tau = int ds / f`` measured
    from the block's equator; on the round sphere it equals ``2 tan(theta/2)``
    (close to the geodesic distance near the pole) and through a neck it is the
    continuation that keeps ``log r`` a conformal coordinate.
    """
    centres = profile.block_centres()
    if not 0 <= block < len(centres):
        raise ValueError(f"block index {block} out of range 0..{len(centres) - 1}")
    c = centres[block]
    d = _offsets(profile, c)
    theta = d + np.pi / 2
    order = np.argsort(d, kind="stable")
    ds = d[order]
    # tau via the midpoint rule on the exact radius, anchored at the equator
    mids = 0.5 * (ds[:-1] + ds[1:])
    inc = np.diff(ds) / np.asarray(profile.radius(mids + c), dtype=float)
    tau_sorted = np.concatenate([[0.0], np.cumsum(inc)])
    j = int(np.searchsorted(ds, 0.0))
    j = min(max(j, 1), len(ds) - 1)
    # shift so tau(0) = 0 using the cell containing the equator
    t0 = tau_sorted[j - 1] + (0.0 - ds[j - 1]) / float(profile.radius(np.array([c + 0.5 * ds[j - 1]]))[0])
    tau = np.empty_like(d)
    tau[order] = tau_sorted - t0
    geo = np.minimum(np.abs(theta), np.abs(np.pi - theta))
    conf = 2.0 * np.exp(-np.abs(tau))
    return theta, geo, conf, d


def _chain_order(op: TridiagOp, order: np.ndarray):
    """Diagonal and consecutive couplings along a (possibly wrapped) run of indices."""
    a = op.diag[order]
    i, j = order[:-1], order[1:]
    lo = np.minimum(i, j)
    hi = np.maximum(i, j)
    b = np.where(hi - lo == 1, op.offdiag[np.minimum(lo, op.size - 2)], 0.0)
    seam = (hi - lo) == op.size - 1
    if op.corner is not None:
        b = np.where(seam, op.corner, b)
    return a, b


def _continue(a, b, lam, i0, x0, x1):
    """Solve ``b[i-1] x[i-1] + a[i] x[i] + b[i] x[i+1] = lam x[i]`` from two seed values."""
    n = len(a)
    x = np.zeros(n)
    x[i0], x[i0 + 1] = x0, x1
    for i in range(i0 + 1, n - 1):
        x[i + 1] = ((lam - a[i]) * x[i] - b[i - 1] * x[i - 1]) / b[i]
    for i in range(i0, 0, -1):
        x[i - 1] = ((lam - a[i]) * x[i] - b[i] * x[i + 1]) / b[i - 1]
    return x


def build_quasimode(profile: Profile, block_index: int, m: int, k: int, spec: CutoffSpec | None,
                    extension: str = "auto", radius: str = "conformal") -> QuasiMode:
    """Cut-off sphere eigenfunction ``u = zeta * v`` on one block.

    ``v`` is the associated Legendre function ``P_k^m(cos theta)`` of the block's
    sphere.  With ``extension="continuation"`` it is carried through the necks
    as the exact discrete solution at ``lambda = k(k+1)``, so the residual comes
    from the cutoff alone; ``"legendre"`` keeps the sphere formula on
    ``0 <= theta <= pi`` and zero beyond.  ``"auto"`` continues only when the
    profile has necks.  ``spec=None`` means no cutoff.
    """
    if int(m) != m or int(k) != k or m < 0 or k < m:
        raise ValueError(f"(m, k) = ({m}, {k}) does not label a sphere eigenfunction")
    if extension not in ("auto", "continuation", "legendre"):
        raise ValueError(f"unknown extension {extension!r}")
    if radius not in ("conformal", "geodesic"):
        raise ValueError(f"unknown radius {radius!r}")
    lam = float(k * (k + 1))
    has_necks = bool(profile.junctions)
    if extension == "auto":
        extension = "continuation" if has_necks else "legendre"
    bc = "periodic" if profile.periodic else "neumann"
    op = sl_discretize(profile, m, bc)
    theta, geo, conf, d = block_coordinates(profile, block_index)
    r = conf if radius == "conformal" else geo
    zeta = np.ones(profile.n) if spec is None else log_cutoff_value(spec, np.maximum(r, 1e-300))
    support = zeta > 0
    if extension == "legendre":
        inside = (theta >= 0) & (theta <= np.pi)
        v = np.where(inside, lpmv(m, k, np.cos(np.clip(theta, 0, np.pi))), 0.0)
    else:
        order = np.argsort(d, kind="stable")
        sup = support[order]
        lo = int(np.argmax(sup))
        hi = len(sup) - int(np.argmax(sup[::-1]))
        if profile.periodic and (lo == 0 or hi == len(sup)):
            raise ValueError("cutoff support wraps around the period; use a longer chain or larger rho")
        run = order[max(lo - 1, 0):min(hi + 1, len(order))]
        a, b = _chain_order(op, run)
        i0 = int(np.searchsorted(d[run], 0.0)) - 1
        i0 = min(max(i0, 0), len(run) - 2)
        sq = np.sqrt(op.mass[run])
        p = lpmv(m, k, np.cos(theta[run[i0:i0 + 2]]))
        x = _continue(a, b, lam, i0, p[0] * sq[i0], p[1] * sq[i0 + 1])
        v = np.zeros(profile.n)
        v[run] = x / sq
    u = zeta * v
    nrm = math.sqrt(float(np.sum(u * u * op.mass)))
    if nrm == 0:
        raise ValueError("quasi-mode vanishes identically (cutoff removes the whole block)")
    return QuasiMode(values=u / nrm, lambda_target=lam, block_index=int(block_index), cutoff=spec, mode=int(m),
                     k=int(k), weights=op.mass.copy(), h=profile.h, extension=extension)


def residual(op: TridiagOp, qm: QuasiMode) -> float:
    """``||A u - lambda u||_w / ||u||_w``; the value is also stored on ``qm``."""
    if op.size != qm.size or op.mode != qm.mode or not np.allclose(op.mass, qm.weights, rtol=1e-12, atol=0):
        raise ValueError("quasi-mode and operator live on different grids or modes")
    u = qm.values
    r = op.apply(u) - qm.lambda_target * u
    qm.residual = op.norm(r) / op.norm(u)
    return qm.residual


def quasimode_family(profile: Profile, m: int, k: int, spec: CutoffSpec | None, blocks) -> list[QuasiMode]:
    bc = "periodic" if profile.periodic else "neumann"
    op = sl_discretize(profile, m, bc)
    family = []
    for b in blocks:
        qm = build_quasimode(profile, b, m, k, spec)
        residual(op, qm)
        family.append(qm)
    return family


@dataclass
class DonnellyReport:
    lambda_target: float
    eps0: float
    count: int
    max_residual: float
    gram_min_eig: float
    passes: bool
    schema_version: str = SCHEMA_VERSION
    version: str = __version__

    def to_dict(self) -> dict:
        return asdict(self)


def donnelly_report(qms: list[QuasiMode], lam: float, eps0: float) -> DonnellyReport:
    """Finite proxy for the Donnelly criterion: small residuals and a well-conditioned family."""
    if not qms:
        raise ValueError("need at least one quasi-mode")
    if any(abs(q.lambda_target - lam) > 1e-12 for q in qms):
        raise ValueError("quasi-modes must share the target eigenvalue")
    if any(q.residual is None for q in qms):
        raise ValueError("measure residuals before building the report")
    G = np.array([[a.inner(b) for b in qms] for a in qms])
    nrm = np.sqrt(np.diag(G))
    G = G / np.outer(nrm, nrm)
    gmin = float(np.linalg.eigvalsh(G)[0])
    rmax = float(max(q.residual for q in qms))
    return DonnellyReport(lambda_target=float(lam), eps0=float(eps0), count=len(qms), max_residual=rmax,
                          gram_min_eig=gmin, passes=bool(rmax <= eps0 and gmin >= 0.5))


def harmonic_extension_quasimode(profile: Profile, block_index: int, k: int, m: int = 0, tau: float | None = None):
    """Glue a block eigenfunction to discrete harmonic extensions across its necks.

    On each neck run next to the block the values solve the discrete mode-m
    Laplace equation with the sphere value at the block side and zero at the
    far side.  Returns ``(quasimode, info)``; ``info`` holds the measured ratio
    ``max|grad h| / ||grad h||_2^tau`` (``tau = 1/(2n)`` with n = 2 by default).
    """
    tau = 0.25 if tau is None else tau
    lam = float(k * (k + 1))
    bc = "periodic" if profile.periodic else "neumann"
    op = sl_discretize(profile, m, bc)
    theta, _, _, _ = block_coordinates(profile, block_index)
    on_block = (profile.blocks == block_index) & (profile.tags == "sphere")
    v = np.where(on_block, lpmv(m, k, np.cos(np.clip(theta, 0, np.pi))), 0.0)
    ratios = []
    for run in profile.neck_regions():
        run = np.asarray(run)
        left, right = (run[0] - 1) % profile.n, (run[-1] + 1) % profile.n
        if not (on_block[left] or on_block[right]):
            continue
        sub = op.restrict(run)
        # boundary data: the sphere value on the block side, zero on the other
        K = sub.matrix() * np.sqrt(np.outer(sub.mass, sub.mass))
        rhs = np.zeros(len(run))
        w_l = op.coupling(left, run[0]) * math.sqrt(op.mass[left] * op.mass[run[0]])
        w_r = op.coupling(run[-1], right) * math.sqrt(op.mass[right] * op.mass[run[-1]])
        rhs[0] -= w_l * v[left]
        rhs[-1] -= w_r * v[right]
        hvals = la.solve(K, rhs, assume_a="sym")
        v[run] = hvals
        grad = np.diff(np.concatenate([[v[left]], hvals, [v[right]]])) / profile.h
        fh = np.asarray(profile.radius(profile.s[run[0]] - 0.5 * profile.h + profile.h * np.arange(len(run) + 1)))
        l2 = math.sqrt(float(np.sum(grad ** 2 * fh * profile.h)))
        ratios.append(float(np.max(np.abs(grad)) / l2 ** tau) if l2 > 0 else 0.0)
    nrm = math.sqrt(float(np.sum(v * v * op.mass)))
    qm = QuasiMode(values=v / nrm, lambda_target=lam, block_index=int(block_index), cutoff=None, mode=int(m),
                   k=int(k), weights=op.mass.copy(), h=profile.h, extension="harmonic")
    residual(op, qm)
    return qm, {"gradient_ratio": ratios, "tau": tau}


# --------------------------------------------------------------------------
# sampled inequality checks


@dataclass
class IneqReport:
    inequality_id: str
    samples: int
    empirical_c: float
    seed: int
    extra: dict = field(default_factory=dict)
    schema_version: str = SCHEMA_VERSION
    version: str = __version__

    def to_dict(self) -> dict:
        return asdict(self)


def sample_streams(seed: int, n: int) -> list[np.random.Generator]:
    """Independent per-sample generators spawned from one master seed."""
    return [np.random.default_rng(s) for s in np.random.SeedSequence(seed).spawn(n)]


def _smoothed_noise(rng, n, width_cells):
    """White noise convolved with a Gaussian of ``width_cells`` standard deviation."""
    half = int(4 * width_cells) + 1
    x = np.arange(-half, half + 1)
    kern = np.exp(-0.5 * (x / width_cells) ** 2)
    return np.convolve(rng.standard_normal(n + 2 * half), kern, mode="valid")[:n]


def _bump(t):
    """Smooth compactly supported window on (-1, 1)."""
    out = np.zeros_like(t)
    inside = np.abs(t) < 1
    out[inside] = np.exp(1 - 1 / (1 - t[inside] ** 2))
    return out


def _block_window_sample(profile: Profile, rng, block_rng, width_blocks: float = 1.0):
    """Smoothed noise under a bump centred at a random point of a random block.

    The shape depends only on ``rng`` and the position only on ``block_rng``,
    so statistics are unchanged when the chain is lengthened.
    """
    nb = profile.n_blocks
    period = profile.period if profile.periodic else profile.length
    L = period / nb
    half_cells = int(round(width_blocks * L / profile.h))
    offset = rng.uniform(-0.5, 0.5) * L
    sigma = rng.uniform(0.02, 0.3) / profile.h
    shape = _smoothed_noise(rng, 2 * half_cells + 1, sigma)
    shape *= _bump(np.linspace(-1, 1, 2 * half_cells + 1))
    b = int(block_rng.integers(nb))
    centre = profile.block_centres()[b] + offset
    i0 = int(round((centre - profile.s[0]) / profile.h)) - half_cells
    idx = i0 + np.arange(2 * half_cells + 1)
    u = np.zeros(profile.n)
    if profile.periodic:
        np.add.at(u, idx % profile.n, shape)
    else:
        keep = (idx >= 0) & (idx < profile.n)
        u[idx[keep]] = shape[keep]
    return u


def neck_ratio(op: TridiagOp, neck: np.ndarray, u: np.ndarray) -> float:
    """``int_N u^2 / (int u^2 + int |grad u|^2)`` for a mode-m function ``u``."""
    mass = op.mass
    num = float(np.sum((u * u * mass)[neck]))
    den = float(np.sum(u * u * mass)) + op.energy(u)
    return num / den


def neck_estimate_check(profile: Profile, n_samples: int, seed: int, m_max: int = 1) -> IneqReport:
    """Sampled constant in ``int_N u^2 <= c int_M (u^2 + |grad u|^2)``.

    Samples are smoothed noise under a smooth one-block window, each in a
    random Fourier mode ``m <= m_max``.  The exact supremum for modes up to
    ``m_max`` (largest generalised eigenvalue) is reported alongside.
    """
    if n_samples < 100:
        raise ValueError("need at least 100 samples")
    neck = profile.neck_mask()
    bc = "periodic" if profile.periodic else "neumann"
    ops = [sl_discretize(profile, m, bc) for m in range(m_max + 1)]
    streams = sample_streams(seed, 2 * n_samples)
    ratios = []
    for i in range(n_samples):
        rng, brng = streams[2 * i], streams[2 * i + 1]
        m = int(rng.integers(m_max + 1))
        u = _block_window_sample(profile, rng, brng)
        ratios.append(neck_ratio(ops[m], neck, u))
    exact = max(_neck_sup(op, neck) for op in ops)
    lam1 = min(float(la.eigvalsh_tridiagonal(o.diag, o.offdiag, select="i", select_range=(0, 0))[0])
               for o in neck_dirichlet_operator(profile, m_max))
    return IneqReport("neck_estimate", n_samples, float(max(ratios)), int(seed),
                      {"exact_sup": exact, "lambda1_neck": lam1, "m_max": m_max,
                       "eps": profile.config.eps if profile.config else None})


def _neck_sup(op: TridiagOp, neck: np.ndarray) -> float:
    """Exact supremum of the neck ratio for one mode (dense; nan above 4000 cells).

    Maximising ``x_N^T x_N / x^T (I + S) x`` reduces, after eliminating the
    variables off the neck, to the smallest eigenvalue of a Schur complement.
    """
    # maximise x_N^T x_N / x^T (I + S) x: eliminate the non-neck variables
    n = op.size
    M = op.sparse().toarray() if n <= 4000 else None
    if M is None:
        return float("nan")
    M = M + np.eye(n)
    idx = np.flatnonzero(neck)
    rest = np.flatnonzero(~neck)
    schur = M[np.ix_(idx, idx)] - M[np.ix_(idx, rest)] @ np.linalg.solve(M[np.ix_(rest, rest)], M[np.ix_(rest, idx)])
    return float(1.0 / np.linalg.eigvalsh(schur)[0])


def core_space(profile: Profile, lam: float, m: int, spec: CutoffSpec | None = None) -> np.ndarray:
    """Basis (columns) of the cutoff block eigenfunctions in mode m with eigenvalue below ``lam``."""
    rho = profile.neck_geometry.s_match if profile.neck_geometry is not None else 1e-3
    spec = spec or CutoffSpec(rho=rho)
    cols = []
    for b in range(profile.n_blocks):
        for k in range(m, 64):
            if k * (k + 1) >= lam:
                break
            qm = build_quasimode(profile, b, m, k, spec, extension="legendre", radius="geodesic")
            cols.append(qm.values)
    return np.array(cols).T if cols else np.zeros((profile.n, 0))


def _ratio_u0(op, lam, u):
    nrm = float(np.sum(u * u * op.mass))
    den = lam * nrm - op.energy(u)
    return nrm / den if den > 0 else math.inf


def _ratio_u1(op, lam, u):
    nrm = float(np.sum(u * u * op.mass))
    den = op.energy(u) - lam * nrm
    return nrm / den if den > 0 else math.inf


def approx_space_check(profile: Profile, lam: float, n_samples: int, seed: int, m_max: int | None = None,
                       spec: CutoffSpec | None = None) -> tuple[IneqReport, IneqReport]:
    """Sampled constants of the two inequalities for the approximate eigenspace ``E0``.

    ``E0`` is spanned by cutoff block eigenfunctions with eigenvalue below
    ``lam``.  Samples ``u0`` are random combinations inside a window of three
    blocks; samples ``u1`` are windowed smoothed noise with ``E0`` projected
    out in the weighted inner product.  The exact worst case over ``E0`` is
    reported for ``u0``.
    """
    ks = np.arange(0, 64)
    S = ks * (ks + 1)
    dist = float(np.min(np.abs(S - lam)))
    if dist < 1e-6:
        raise ValueError(f"lambda={lam} lies on the model spectrum")
    if m_max is None:
        m_max = int(max(k for k in ks if k * (k + 1) < lam)) if lam > 0 else 0
    bc = "periodic" if profile.periodic else "neumann"
    ops = [sl_discretize(profile, m, bc) for m in range(m_max + 1)]
    bases = [core_space(profile, lam, m, spec) for m in range(m_max + 1)]
    nb = profile.n_blocks
    streams = sample_streams(seed, 2 * n_samples)
    r0, r1 = [], []
    for i in range(n_samples):
        rng, brng = streams[2 * i], streams[2 * i + 1]
        m = int(rng.integers(m_max + 1))
        op, E = ops[m], bases[m]
        per_block = E.shape[1] // nb
        if per_block:
            centre = int(brng.integers(nb))
            cols = [((centre + off) % nb) * per_block + j for off in (-1, 0, 1) for j in range(per_block)]
            coef = rng.standard_normal(len(cols))
            u0 = E[:, cols] @ coef
            r0.append(_ratio_u0(op, lam, u0))
        u = _block_window_sample(profile, rng, brng)
        if E.shape[1]:
            W = E * op.mass[:, None]
            G = E.T @ W
            u = u - E @ np.linalg.solve(G, W.T @ u)
        r1.append(_ratio_u1(op, lam, u))
    exact0 = []
    for op, E in zip(ops, bases):
        if E.shape[1] == 0:
            continue
        W = E * op.mass[:, None]
        G = E.T @ W
        KE = np.column_stack([_energy_matrix_col(op, E[:, j]) for j in range(E.shape[1])])
        Kq = E.T @ KE
        top = float(la.eigh(Kq, G, eigvals_only=True)[-1])
        exact0.append(1.0 / (lam - top) if top < lam else math.inf)
    rep0 = IneqReport("approx_space_u0", len(r0), float(max(r0)) if r0 else 0.0, int(seed),
                      {"lambda": lam, "d": dist, "exact_sup": max(exact0) if exact0 else 0.0,
                       "blocks": nb, "m_max": m_max})
    rep1 = IneqReport("approx_space_u1", len(r1), float(max(r1)), int(seed),
                      {"lambda": lam, "d": dist, "blocks": nb, "m_max": m_max})
    return rep0, rep1


def _energy_matrix_col(op: TridiagOp, u: np.ndarray) -> np.ndarray:
    """``K u`` where ``u^T K u`` is the Dirichlet energy (mass-weighted form)."""
    r = np.sqrt(op.mass)
    return r * op.apply_symmetric(r * u)


def mixed_eigenvalue(r0: float, r1: float) -> float:
    """First radial eigenvalue on ``r1 < r < r0`` with u(r0) = 0 and u'(r1) = 0 (flat disc)."""
    def g(k):
        return j0(k * r0) * y1(k * r1) - y0(k * r0) * j1(k * r1)

    ks = np.linspace(1e-6, 10 * math.pi / (r0 - r1), 4000)
    vals = g(ks)
    i = int(np.flatnonzero(np.sign(vals[1:]) != np.sign(vals[:-1]))[0])
    k = brentq(g, ks[i], ks[i + 1], xtol=1e-14)
    return k * k


def annulus_inequality_check(metric_scale: float, r0: float, r1: float, n_samples: int, seed: int,
                             cells: int = 400, inequality: str = "poincare") -> IneqReport:
    """Sampled constants on the annulus ``r1 < r < r0`` under radially perturbed metrics.

    The metric is ``alpha(r) dr^2 + beta(r) r^2 dtheta^2`` with
    ``alpha = C^{t_a(r)}``, ``beta = C^{t_b(r)}`` and smooth random exponents in
    ``[-1, 1]`` drawn once per seed, so changing ``C`` rescales the same metric
    family.  ``poincare`` samples radial u with u(r0) = 0 and reports
    ``max int u^2 / int |grad u|^2``; ``sobolev3`` uses the flat 3-ball
    ``(int u^6)^(1/3) <= c int |grad u|^2`` for radial u vanishing at r0.
    """
    if not 0 < r1 < r0:
        raise ValueError("need 0 < r1 < r0")
    if metric_scale < 1:
        raise ValueError("metric scale must be >= 1")
    rng_metric, *streams = sample_streams(seed, n_samples + 1)
    r = r1 + (r0 - r1) * (np.arange(cells + 1) / cells)
    rm = 0.5 * (r[:-1] + r[1:])
    dr = np.diff(r)
    x = (rm - r1) / (r0 - r1)
    modes = np.arange(1, 5)
    ta = np.tanh(rng_metric.standard_normal(4) @ np.sin(np.outer(modes, np.pi * x)))
    tb = np.tanh(rng_metric.standard_normal(4) @ np.sin(np.outer(modes, np.pi * x)))
    alpha = metric_scale ** ta
    beta = metric_scale ** tb
    vol = np.sqrt(alpha * beta) * rm
    basis = np.cos(np.outer(np.arange(8) + 0.5, np.pi * (r - r1) / (r0 - r1)))
    ratios = []
    for rng in streams:
        coef = rng.standard_normal(8) / (1.0 + np.arange(8)) ** 2
        u = coef @ basis
        um = 0.5 * (u[:-1] + u[1:])
        du = np.diff(u) / dr
        if inequality == "poincare":
            num = np.sum(um ** 2 * vol * dr)
            den = np.sum(du ** 2 / alpha * vol * dr)
        elif inequality == "sobolev3":
            num = np.sum(um ** 6 * rm ** 2 * dr) ** (1 / 3)
            den = np.sum(du ** 2 * rm ** 2 * dr)
        else:
            raise ValueError(f"unknown inequality {inequality!r}")
        ratios.append(float(num / den))
    extra = {"metric_scale": metric_scale, "r0": r0, "r1": r1}
    if inequality == "poincare":
        extra["flat_optimal"] = 1.0 / mixed_eigenvalue(r0, r1)
    return IneqReport(f"annulus_{inequality}", n_samples, float(max(ratios)), int(seed), extra)
