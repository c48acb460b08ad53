"""Model blocks, neck profiles and sphere chains as surfaces of revolution.

A profile is the metric ``ds^2 + f(s)^2 dtheta^2`` sampled on a uniform
arclength grid.  Chains are built from unit-sphere arcs joined by catenoid
necks ``f = eps * cosh((s - s0) / eps)`` with a C^1 junction.

Grid conventions
----------------
* periodic profiles: nodes ``s_i = i * h``, ``i = 0..n-1``, ``n * h = period``.
* capped profiles: cell centres ``s_i = (i + 1/2) * h``; the poles sit on the
  half-grid points ``s = 0`` and ``s = length`` so every sample has ``f > 0``.
"""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

SCHEMA_VERSION = "1"

SPHERE = "sphere"
NECK = "neck"


@dataclass(frozen=True)
class ClassParams:
    """Class parameters: max neck sphere radius, C^1 closeness, neck eigenvalue floor."""

    rho_bar: float
    delta_bar: float
    Lambda: float

    def __post_init__(self):
        if not self.rho_bar > 0:
            raise ValueError(f"rho_bar must be positive, got {self.rho_bar}")
        if not self.delta_bar >= 0:
            raise ValueError(f"delta_bar must be non-negative, got {self.delta_bar}")
        if not self.Lambda > 0:
            raise ValueError(f"Lambda must be positive, got {self.Lambda}")


@dataclass(frozen=True)
class ModelBlock:
    dim: int
    kind: str = "unit_sphere"
    spectrum: tuple = ()

    @classmethod
    def unit_sphere(cls, dim: int = 2, k_max: int = 10) -> "ModelBlock":
        return cls(dim=dim, kind="unit_sphere", spectrum=tuple(sphere_spectrum(dim, k_max)))

    def eigenvalues(self, upto: float | None = None) -> list[float]:
        vals = [lam for lam, _ in self.spectrum]
        if upto is not None:
            vals = [v for v in vals if v <= upto]
        return vals


@dataclass(frozen=True)
class ChainConfig:
    blocks: int = 1
    eps: float = 0.05
    h: float = 0.005
    periodic: bool = True
    seed: int = 0

    def __post_init__(self):
        if int(self.blocks) != self.blocks or self.blocks < 1:
            raise ValueError(f"blocks must be an integer >= 1, got {self.blocks}")
        if not 0 < self.eps < 0.5:
            raise ValueError(f"eps must lie in (0, 0.5), got {self.eps}")
        if not self.h > 0:
            raise ValueError(f"h must be positive, got {self.h}")
        if self.h > self.eps / 10 * (1 + 1e-12):
            raise ValueError(f"h={self.h} does not resolve the neck: need h <= eps/10 = {self.eps / 10}")

    @classmethod
    def from_dict(cls, data: dict) -> "ChainConfig":
        unknown = set(data) - {"blocks", "eps", "h", "periodic", "seed"}
        if unknown:
            raise ValueError(f"unknown chain config keys: {sorted(unknown)}")
        return cls(**data)

    def with_(self, **changes) -> "ChainConfig":
        d = asdict(self)
        d.update(changes)
        return ChainConfig(**d)


@dataclass(frozen=True)
class Segment:
    """One analytic piece of a chain profile.

    ``kind == "sphere"``: ``f(s) = cos(s - centre)`` (centre is the equator).
    ``kind == "neck"``: ``f(s) = eps * cosh((s - centre) / eps)`` (centre is the waist).
    """

    kind: str
    start: float
    end: float
    centre: float
    block: int
    eps: float = 0.0

    def radius(self, s):
        if self.kind == SPHERE:
            return np.cos(s - self.centre)
        return self.eps * np.cosh((s - self.centre) / self.eps)

    def slope(self, s):
        if self.kind == SPHERE:
            return -np.sin(s - self.centre)
        return np.sinh((s - self.centre) / self.eps)


@dataclass(frozen=True)
class Profile:
    s: np.ndarray
    f: np.ndarray
    h: float
    period: float | None = None
    boundary: tuple = ("capped", "capped")
    junctions: tuple | None = None
    tags: np.ndarray | None = None
    blocks: np.ndarray | None = None
    segments: tuple = ()
    config: ChainConfig | None = None
    neck_geometry: "NeckGeometry | None" = None

    @property
    def n(self) -> int:
        return len(self.f)

    @property
    def periodic(self) -> bool:
        return self.period is not None

    @property
    def length(self) -> float:
        return self.period if self.periodic else self.n * self.h

    @property
    def n_blocks(self) -> int:
        return 0 if self.blocks is None else int(self.blocks.max()) + 1

    def radius(self, s):
        """Exact radius at arbitrary arclength (periodic profiles wrap)."""
        s = np.asarray(s, dtype=float)
        if self.periodic:
            s = np.mod(s, self.period)
        if not self.segments:
            return self._interp(s)
        out = np.empty_like(s)
        starts = np.array([seg.start for seg in self.segments])
        idx = np.clip(np.searchsorted(starts, s, side="right") - 1, 0, len(self.segments) - 1)
        for k, seg in enumerate(self.segments):
            mask = idx == k
            if np.any(mask):
                out[mask] = seg.radius(s[mask])
        return out

    def _interp(self, s):
        from scipy.interpolate import CubicSpline

        if self.periodic:
            x = np.append(self.s, self.period)
            y = np.append(self.f, self.f[0])
            return CubicSpline(x, y, bc_type="periodic")(s)
        return CubicSpline(self.s, self.f)(s)

    def neck_regions(self) -> list[np.ndarray]:
        """Index runs of the neck region N (f <= 2 * f_match around each waist)."""
        if self.junctions is None:
            raise ValueError("profile carries no junction metadata")
        if self.neck_geometry is None or not any(seg.kind == NECK for seg in self.segments):
            return []
        thresh = 2.0 * self.neck_geometry.f_match
        regions = []
        for seg in self.segments:
            if seg.kind != NECK:
                continue
            c = int(np.argmin(np.abs(self._wrap_offset(seg.centre))))
            lo = c
            while self.f[(lo - 1) % self.n] <= thresh and (self.periodic or lo - 1 >= 0):
                lo -= 1
            hi = c
            while self.f[(hi + 1) % self.n] <= thresh and (self.periodic or hi + 1 < self.n):
                hi += 1
            regions.append(np.arange(lo, hi + 1) % self.n)
        return regions

    def neck_mask(self) -> np.ndarray:
        mask = np.zeros(self.n, dtype=bool)
        for idx in self.neck_regions():
            mask[idx] = True
        return mask

    def _wrap_offset(self, x: float) -> np.ndarray:
        d = self.s - x
        if self.periodic:
            d = (d + self.period / 2) % self.period - self.period / 2
        return d

    def local_sphere_coordinate(self, block: int) -> np.ndarray:
        """Polar angle of the block's model sphere, continued along the whole grid.

        Values in [0, pi] lie on the block's sphere arc or its neck caps; outside
        that range the coordinate is meaningless and callers mask it out.
        """
        centre = self.block_centres()[block]
        return self._wrap_offset(centre) + np.pi / 2

    def block_centres(self) -> list[float]:
        """Equator position of each block's sphere arc."""
        out = {}
        for seg in self.segments:
            if seg.kind == SPHERE and seg.block not in out:
                out[seg.block] = seg.centre
        return [out[j] for j in sorted(out)]

    def to_csv(self, path) -> None:
        tags = self.tags if self.tags is not None else np.array([SPHERE] * self.n)
        lines = ["s,f,piece"]
        lines += [f"{s:.17g},{f:.17g},{t}" for s, f, t in zip(self.s, self.f, tags)]
        Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")

    def metadata(self) -> dict:
        return {
            "schema_version": SCHEMA_VERSION,
            "config": asdict(self.config) if self.config else None,
            "h": self.h,
            "n": self.n,
            "period": self.period,
            "boundary": list(self.boundary),
            "junctions": None if self.junctions is None else list(self.junctions),
            "segments": [asdict(seg) for seg in self.segments],
            "neck_geometry": asdict(self.neck_geometry) if self.neck_geometry else None,
        }

    def to_json(self, path) -> None:
        Path(path).write_text(json.dumps(self.metadata(), indent=2, sort_keys=True), encoding="utf-8")


def profile_from_csv(path, period: float | None = None, junctions=None) -> Profile:
    """Load a sampled profile; without segments, exact evaluation falls back to splines."""
    rows = Path(path).read_text(encoding="utf-8").strip().splitlines()[1:]
    s, f, tags = [], [], []
    for row in rows:
        a, b, c = row.split(",")
        s.append(float(a))
        f.append(float(b))
        tags.append(c)
    s = np.array(s)
    h = float(s[1] - s[0])
    boundary = ("periodic", "periodic") if period is not None else ("capped", "capped")
    return Profile(s=s, f=np.array(f), h=h, period=period, boundary=boundary,
                   junctions=None if junctions is None else tuple(junctions), tags=np.array(tags))


# --------------------------------------------------------------------------
# closed forms


def sphere_spectrum(n: int, k_max: int) -> list[tuple[float, int]]:
    """Laplacian spectrum of the unit n-sphere: ``k(k+n-1)`` with harmonic-polynomial multiplicities."""
    if n < 2:
        raise ValueError(f"sphere dimension must be >= 2, got {n}")
    if k_max < 0:
        raise ValueError(f"k_max must be >= 0, got {k_max}")
    out = []
    for k in range(k_max + 1):
        mult = math.comb(n + k, k) - (math.comb(n + k - 2, k - 2) if k >= 2 else 0)
        out.append((float(k * (k + n - 1)), mult))
    return out


def conformal_factor(x: float, eps: float) -> float:
    """``2 / (eps + x^2 / eps)``: the factor making the unit ball a large spherical cap."""
    if not 0 < eps < 1:
        raise ValueError(f"eps must lie in (0, 1), got {eps}")
    if not 0 <= x <= 1:
        raise ValueError(f"x must lie in [0, 1], got {x}")
    return 2.0 / (eps + x * x / eps)


def spherical_radius(r: float, eps: float) -> float:
    """Geodesic radius on the unit sphere of the Euclidean circle ``|x| = r``.

    Measured from the point of the sphere that the exterior ``|x| > 1`` shrinks onto.
    """
    arg = r * conformal_factor(r, eps)
    assert -1.0 <= arg <= 1.0 + 1e-15, arg
    return math.asin(min(arg, 1.0))


def spherical_radius_inverse(theta: float, eps: float, tol: float = 1e-14) -> float:
    """Radius ``r in [eps, 1]`` (the outer, decreasing branch) with ``spherical_radius(r) = theta``."""
    from scipy.optimize import bisect

    lo_val, hi_val = spherical_radius(1.0, eps), math.pi / 2
    if not lo_val <= theta <= hi_val:
        raise ValueError(f"theta={theta} outside the range [{lo_val}, {hi_val}] of the outer branch")
    return bisect(lambda r: spherical_radius(r, eps) - theta, eps, 1.0, xtol=tol)


def neck_core_radius(eps: float) -> float:
    """``asin(2 / (eps + 1/eps))``, which is about ``2 eps`` for small eps."""
    return spherical_radius(1.0, eps)


@dataclass(frozen=True)
class NeckGeometry:
    """Closed-form C^1 junction between a unit-sphere arc and a catenoid waist."""

    eps: float
    tau: float       # catenoid parameter at the junction
    s_match: float   # sphere polar angle of the junction
    f_match: float   # radius at the junction

    @property
    def half_length(self) -> float:
        return self.tau * self.eps


def neck_profile(eps: float) -> NeckGeometry:
    """Catenoid neck of waist ``eps`` matched in value and slope to the unit sphere.

    Matching ``sin(s) = eps cosh(tau)`` and ``cos(s) = sinh(tau)`` gives
    ``cosh(tau)^2 = 2 / (1 + eps^2)``.
    """
    if not 0 < eps < 0.5:
        raise ValueError(f"eps must lie in (0, 0.5), got {eps}")
    tau = math.acosh(math.sqrt(2.0 / (1.0 + eps * eps)))
    s_match = math.atan2(eps * math.cosh(tau), math.sinh(tau))
    return NeckGeometry(eps=eps, tau=tau, s_match=s_match, f_match=eps * math.cosh(tau))


def block_length(eps: float) -> float:
    """Arclength of one sphere arc plus one neck."""
    g = neck_profile(eps)
    return math.pi - 2 * g.s_match + 2 * g.half_length


def _segments(config: ChainConfig, geo: NeckGeometry) -> tuple[list[Segment], list[float], float]:
    arc_half = math.pi / 2 - geo.s_match
    step = block_length(config.eps)
    segs: list[Segment] = []
    junctions: list[float] = []
    B = config.blocks
    if config.periodic:
        # period starts at the equator of block 0 so no neck straddles the seam
        total = B * step
        for j in range(B + 1):
            c = j * step
            lo = max(c - arc_half, 0.0)
            hi = min(c + arc_half, total)
            if hi > lo:
                segs.append(Segment(SPHERE, lo, hi, c, j % B))
            if j < B:
                wc = c + arc_half + geo.half_length
                segs.append(Segment(NECK, c + arc_half, c + arc_half + 2 * geo.half_length, wc, j, eps=config.eps))
                junctions += [c + arc_half, c + arc_half + 2 * geo.half_length]
        return segs, junctions, total
    total = B * math.pi - (B - 1) * 2 * (geo.s_match - geo.half_length)
    for j in range(B):
        c = math.pi / 2 + j * step
        lo = 0.0 if j == 0 else c - arc_half
        hi = total if j == B - 1 else c + arc_half
        segs.append(Segment(SPHERE, lo, hi, c, j))
        if j < B - 1:
            wc = c + arc_half + geo.half_length
            segs.append(Segment(NECK, hi, hi + 2 * geo.half_length, wc, j, eps=config.eps))
            junctions += [hi, hi + 2 * geo.half_length]
    return segs, junctions, total


def assemble_chain(config: ChainConfig) -> Profile:
    """Sample a chain of unit spheres joined by catenoid necks.

    Periodic chains return one period of ``config.blocks`` spheres; finite
    chains end in two smooth poles.  The grid step is the largest value
    ``<= config.h`` that divides the total length (and, for periodic chains,
    the length of one block).
    """
    if config.h > config.eps / 10 * (1 + 1e-12):
        raise ValueError(f"h={config.h} too coarse for eps={config.eps}")
    geo = neck_profile(config.eps)
    segs, junctions, total = _segments(config, geo)
    if config.periodic:
        # a whole number of cells per block keeps block translations on the grid
        per_block = int(math.ceil(total / config.blocks / config.h - 1e-9))
        n = per_block * config.blocks
    else:
        n = int(math.ceil(total / config.h - 1e-9))
    h = total / n
    if config.periodic:
        s = np.arange(n) * h
        boundary = ("periodic", "periodic")
        period = total
    else:
        s = (np.arange(n) + 0.5) * h
        boundary = ("capped", "capped")
        period = None
    starts = np.array([seg.start for seg in segs])
    idx = np.clip(np.searchsorted(starts, s, side="right") - 1, 0, len(segs) - 1)
    f = np.empty(n)
    tags = np.empty(n, dtype=object)
    blocks = np.empty(n, dtype=int)
    for k, seg in enumerate(segs):
        mask = idx == k
        f[mask] = seg.radius(s[mask])
        tags[mask] = seg.kind
        blocks[mask] = seg.block
    return Profile(s=s, f=f, h=h, period=period, boundary=boundary, junctions=tuple(junctions),
                   tags=tags.astype(str), blocks=blocks, segments=tuple(segs), config=config,
                   neck_geometry=geo if config.blocks > 1 or config.periodic else None)


def sphere_profile(h: float) -> Profile:
    """The closed unit sphere as a capped profile with no necks."""
    n = int(math.ceil(math.pi / h - 1e-9))
    h = math.pi / n
    s = (np.arange(n) + 0.5) * h
    seg = Segment(SPHERE, 0.0, math.pi, math.pi / 2, 0)
    return Profile(s=s, f=np.sin(s), h=h, boundary=("capped", "capped"), junctions=(),
                   tags=np.array([SPHERE] * n), blocks=np.zeros(n, dtype=int), segments=(seg,))


def cylinder_profile(period: float, h: float, radius: float = 1.0) -> Profile:
    """Flat periodic cylinder ``f = radius`` (constant-coefficient test case)."""
    n = int(math.ceil(period / h - 1e-9))
    h = period / n
    s = np.arange(n) * h
    return Profile(s=s, f=np.full(n, float(radius)), h=h, period=period,
                   boundary=("periodic", "periodic"), junctions=(), tags=np.array(["cylinder"] * n),
                   blocks=np.zeros(n, dtype=int))


def junction_slope_jumps(profile: Profile) -> np.ndarray:
    """Jump of the discrete derivative across each junction.

    Each side is extrapolated to the junction with a quadratic through its three
    nearest samples, so the measurement is second order on either side.
    """
    jumps = []
    for x in profile.junctions or ():
        d = profile._wrap_offset(x)
        left = np.argsort(np.where(d < 0, -d, np.inf))[:3]
        right = np.argsort(np.where(d >= 0, d, np.inf))[:3]
        slopes = []
        for idx in (left, right):
            p = np.polyfit(d[idx], profile.f[idx], 2)
            slopes.append(p[1])
        jumps.append(abs(slopes[1] - slopes[0]))
    return np.array(jumps)


# --------------------------------------------------------------------------
# class membership


@dataclass
class MembershipReport:
    rho_measured: float
    delta_measured: float
    lambda1_neck: float
    overlap_ratio: float
    passes: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return asdict(self)


def _centered_slope(profile: Profile) -> np.ndarray:
    f = profile.f
    if profile.periodic:
        return (np.roll(f, -1) - np.roll(f, 1)) / (2 * profile.h)
    d = np.empty_like(f)
    d[1:-1] = (f[2:] - f[:-2]) / (2 * profile.h)
    d[0] = d[-1] = np.nan
    return d


def core_mask(profile: Profile) -> np.ndarray:
    if profile.tags is None:
        raise ValueError("profile carries no piece tags")
    return profile.tags == SPHERE


def class_report(profile: Profile, params: ClassParams, m_max: int = 3) -> MembershipReport:
    """Measure the discrete analogues of the four class conditions.

    rho: geodesic radius of the core boundary circles on the model sphere.
    delta: discrete C^1 distance of the sampled radius to the round model on the core.
    lambda1_neck: smallest first Dirichlet eigenvalue of the neck over modes 0..m_max.
    """
    from .eigen import EigenRequest, lowest_eigenvalue
    from .operators import neck_dirichlet_operator

    if profile.junctions is None:
        raise ValueError("class_report needs junction metadata")
    core = core_mask(profile)
    slope = _centered_slope(profile)
    if profile.periodic:
        nb_ok = core & np.roll(core, 1) & np.roll(core, -1)
    else:
        nb_ok = core.copy()
        nb_ok[1:-1] &= core[:-2] & core[2:]
        nb_ok[0] = nb_ok[-1] = False
    model_f = np.empty(profile.n)
    model_df = np.empty(profile.n)
    for seg in profile.segments:
        if seg.kind != SPHERE:
            continue
        d = profile._wrap_offset(seg.centre)
        mask = (np.abs(d) <= np.pi / 2) & core
        model_f[mask] = np.cos(d[mask])
        model_df[mask] = -np.sin(d[mask])
    delta = float(np.max(np.abs(profile.f[core] - model_f[core])))
    if np.any(nb_ok):
        delta += float(np.max(np.abs(slope[nb_ok] - model_df[nb_ok])))

    geo = profile.neck_geometry
    if geo is None or not profile.junctions:
        rho = 0.0
        ratio = 2.0
        lam1 = math.inf
    else:
        rho = geo.s_match
        # outer edge of the overlap annulus, as a polar angle on the model sphere
        ratio = math.asin(min(2 * geo.f_match, 1.0)) / rho
        ops = neck_dirichlet_operator(profile, m_max)
        lam1 = min(lowest_eigenvalue(op) for op in ops)
    passes = {
        "1": bool(rho <= params.rho_bar),
        "2": bool(delta <= params.delta_bar),
        "3": bool(abs(ratio - 2.0) <= 0.05 and rho <= params.rho_bar),
        "4": bool(lam1 >= params.Lambda),
    }
    return MembershipReport(rho_measured=rho, delta_measured=delta, lambda1_neck=float(lam1),
                            overlap_ratio=float(ratio), passes=passes)
