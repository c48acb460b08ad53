"""Band structure, gap detection, truncation scans and comparison with the model spectrum."""
from __future__ import annotations

import csv
import io
import json
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np

from . import __version__
from .eigen import EigenRequest, discriminant, eigs_in_interval, smallest_eigs, sturm_count
from .geometry import SCHEMA_VERSION, ChainConfig, Profile, assemble_chain, sphere_spectrum
from .operators import block_graph_laplacian, block_laplacian, lift_operator, sl_discretize

GAP_SLOPE = 0.05
BAND_SLOPE = 0.5


def default_workers() -> int:
    return os.cpu_count() or 1


def _map(fn, items, workers):
    items = list(items)
    workers = default_workers() if workers is None else int(workers)
    if workers <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=workers) as ex:
        return list(ex.map(fn, items))


@dataclass(frozen=True)
class Band:
    lo: float
    hi: float
    mode: int

    def __post_init__(self):
        if self.lo > self.hi:
            raise ValueError(f"band with lo > hi: [{self.lo}, {self.hi}]")


@dataclass
class GapReport:
    lambda_max: float
    bands: list          # merged [lo, hi] pairs
    gaps: list           # complement of the bands in [0, lambda_max]
    model_spectrum: list
    method: str
    verdicts: list = field(default_factory=list)
    mode_bands: list = field(default_factory=list)
    warnings: list = field(default_factory=list)
    extra: dict = field(default_factory=dict)
    schema_version: str = SCHEMA_VERSION
    version: str = __version__

    @property
    def interior_gaps(self) -> list:
        """Gaps with a band on both sides (the top one may continue past lambda_max)."""
        return [g for g in self.gaps if g[1] < self.lambda_max and g[0] > 0]

    @property
    def gap_count(self) -> int:
        return len(self.interior_gaps)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["mode_bands"] = [asdict(b) if isinstance(b, Band) else b for b in self.mode_bands]
        d["gap_count"] = self.gap_count
        return d

    def to_json(self, path=None) -> str:
        text = dumps(self.to_dict())
        if path is not None:
            with open(path, "w", encoding="utf-8") as fh:
                fh.write(text)
        return text

    def bands_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["kind", "lo", "hi", "mode"])
        for b in self.mode_bands:
            w.writerow(["band", fmt(b.lo), fmt(b.hi), b.mode])
        for lo, hi in self.gaps:
            w.writerow(["gap", fmt(lo), fmt(hi), ""])
        return buf.getvalue()


def fmt(x) -> str:
    return f"{float(x):.17g}"


def _round_floats(obj):
    if isinstance(obj, float):
        if math.isfinite(obj):
            return float(fmt(obj))
        return str(obj)
    if isinstance(obj, dict):
        return {k: _round_floats(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_round_floats(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _round_floats(obj.tolist())
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.floating):
        return _round_floats(float(obj))
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def dumps(obj) -> str:
    # repr of a float already round-trips; 17 digits are used for CSV tables
    return json.dumps(_round_floats(obj), indent=2, sort_keys=True) + "\n"


# --------------------------------------------------------------------------
# intervals


def merge_intervals(intervals, tol: float = 0.0) -> list[list[float]]:
    out: list[list[float]] = []
    for lo, hi in sorted((float(a), float(b)) for a, b in intervals):
        if out and lo <= out[-1][1] + tol:
            out[-1][1] = max(out[-1][1], hi)
        else:
            out.append([lo, hi])
    return out


def complement(intervals, lo: float, hi: float) -> list[list[float]]:
    out = []
    cur = lo
    for a, b in merge_intervals(intervals):
        if b <= lo or a >= hi:
            continue
        if a > cur:
            out.append([cur, min(a, hi)])
        cur = max(cur, b)
    if cur < hi:
        out.append([cur, hi])
    return out


def distance_to_intervals(x: float, intervals) -> float:
    best = math.inf
    for a, b in intervals:
        if a <= x <= b:
            return 0.0
        best = min(best, abs(x - a), abs(x - b))
    return best


def hausdorff(intervals, points) -> float:
    """Hausdorff distance between a finite union of intervals and a finite point set."""
    pts = np.sort(np.asarray(points, dtype=float))
    if len(intervals) == 0 or len(pts) == 0:
        return math.inf
    d1 = max(distance_to_intervals(p, intervals) for p in pts)
    d2 = 0.0
    mids = 0.5 * (pts[:-1] + pts[1:])
    for a, b in intervals:
        cand = [a, b] + [m for m in mids if a < m < b]
        d2 = max(d2, max(float(np.min(np.abs(pts - c))) for c in cand))
    return max(d1, d2)


# --------------------------------------------------------------------------
# Floquet bands


def mode_cutoff(profile: Profile, lambda_max: float) -> int:
    """Smallest m with m^2 / max(f)^2 > lambda_max."""
    if not lambda_max > 0:
        raise ValueError(f"lambda_max must be positive, got {lambda_max}")
    fmax = float(np.max(profile.f))
    m = int(math.floor(math.sqrt(lambda_max) * fmax))
    while m * m / fmax ** 2 <= lambda_max:
        m += 1
    return m


def _bisect(fun, lo, hi, tol):
    """Vectorised bisection for sign changes of ``fun`` on brackets ``[lo, hi]``."""
    lo = np.array(lo, dtype=float)
    hi = np.array(hi, dtype=float)
    if len(lo) == 0:
        return lo
    flo = fun(lo)
    while np.max(hi - lo) > tol:
        mid = 0.5 * (lo + hi)
        fm = fun(mid)
        same = np.sign(fm) == np.sign(flo)
        lo = np.where(same, mid, lo)
        flo = np.where(same, fm, flo)
        hi = np.where(same, hi, mid)
    return 0.5 * (lo + hi)


def mode_bands(profile: Profile, m: int, lambda_max: float, grid: float = 0.01,
               refine_tol: float = 1e-9, step: float = 1e-3):
    """Floquet bands ``{|D_m| <= 2}`` of one mode inside ``[0, lambda_max]``.

    Returns ``(bands, narrow)`` where ``narrow`` flags bands thinner than the
    scan grid: a band of that size can fall between two grid points unnoticed
    unless D changes sign across it.
    """
    lam = np.linspace(0.0, lambda_max, int(math.ceil(lambda_max / grid)) + 1)
    D = discriminant(profile, m, lam, step)
    g = np.abs(D) - 2.0
    g[0] = min(g[0], 0.0) if abs(g[0]) < 1e-9 else g[0]
    inside = g <= 0

    def G(x):
        return np.abs(discriminant(profile, m, x, step)) - 2.0

    flips = np.flatnonzero(inside[1:] != inside[:-1])
    brackets = [(lam[i], lam[i + 1]) for i in flips]
    roots = _bisect(G, [b[0] for b in brackets], [b[1] for b in brackets], refine_tol)
    root_of = dict(zip(flips.tolist(), roots.tolist()))

    bands = []
    start = 0.0 if inside[0] else None
    for i in range(len(lam) - 1):
        if i in root_of:
            if inside[i]:
                bands.append((start, root_of[i]))
                start = None
            else:
                start = root_of[i]
    if start is not None:
        bands.append((start, float(lam[-1])))

    # bands hidden between two outside points where D jumps from one side to the other
    hidden = np.flatnonzero(~inside[1:] & ~inside[:-1] & (np.sign(D[1:]) != np.sign(D[:-1])))
    if len(hidden):
        z = _bisect(lambda x: discriminant(profile, m, x, step), lam[hidden], lam[hidden + 1], refine_tol)
        lo = _bisect(G, lam[hidden], z, refine_tol)
        hi = _bisect(G, z, lam[hidden + 1], refine_tol)
        bands += list(zip(lo.tolist(), hi.tolist()))
    bands = [Band(float(a), float(b), int(m)) for a, b in sorted(bands)]
    narrow = len(hidden) > 0 or any(b.hi - b.lo < grid for b in bands)
    return bands, narrow


def band_structure(profile: Profile, lambda_max: float, grid: float = 0.01, refine_tol: float = 1e-9,
                   step: float = 1e-3, workers: int | None = None,
                   model: list | None = None) -> GapReport:
    """Union over modes of the Floquet bands below ``lambda_max`` and the gaps between them."""
    if not profile.periodic:
        raise ValueError("band structure needs a periodic profile")
    m_max = mode_cutoff(profile, lambda_max)
    results = _map(lambda m: mode_bands(profile, m, lambda_max, grid, refine_tol, step),
                   range(m_max + 1), workers)
    all_bands = [b for bands, _ in results for b in bands]
    warnings = [f"mode {m}: band narrower than scan grid {grid}; bands may be missed"
                for m, (_, narrow) in enumerate(results) if narrow]
    merged = merge_intervals([(b.lo, b.hi) for b in all_bands])
    S = model if model is not None else [lam for lam, _ in sphere_spectrum(2, 40) if lam <= lambda_max]
    return GapReport(lambda_max=float(lambda_max), bands=merged, gaps=complement(merged, 0.0, lambda_max),
                     model_spectrum=[float(x) for x in S], method="floquet", mode_bands=all_bands,
                     warnings=warnings,
                     extra={"modes": m_max + 1, "grid": grid, "refine_tol": refine_tol, "step": step})


def band_distance(report: GapReport, lam: float) -> float:
    return distance_to_intervals(lam, report.bands)


def periodic_eigenvalues(profile: Profile, lambda_max: float, tol: float = 1e-11) -> list[tuple[int, float]]:
    """Eigenvalues below ``lambda_max`` of the periodic-bc operator on one period, with their mode."""
    out = []
    for m in range(mode_cutoff(profile, lambda_max) + 1):
        op = sl_discretize(profile, m, "periodic")
        for v in eigs_in_interval(op, EigenRequest(-1.0, lambda_max, tol=tol)):
            out.append((m, float(v)))
    return out


# --------------------------------------------------------------------------
# model comparison


def compare_to_model(report: GapReport, S, d: float) -> list[dict]:
    """Verdicts for the complement of the model spectrum and for each model eigenvalue.

    A complement interval (shrunk by ``d`` at model points) passes iff it meets
    a computed gap; a model eigenvalue passes iff it lies within ``d`` of a band.
    """
    if not d > 0:
        raise ValueError(f"margin d must be positive, got {d}")
    lmax = report.lambda_max
    pts = sorted(float(x) for x in S if 0 <= x <= lmax)
    verdicts = []
    cuts = [0.0] + pts + [lmax]
    for a, b in zip(cuts[:-1], cuts[1:]):
        lo = a + d if a in pts else a
        hi = b - d if b in pts else b
        if hi <= lo:
            continue
        hit = any(min(hi, g1) > max(lo, g0) for g0, g1 in report.gaps)
        verdicts.append({"kind": "complement", "interval": [lo, hi], "passes": bool(hit)})
    for lam in pts:
        dist = distance_to_intervals(lam, report.bands)
        verdicts.append({"kind": "model_point", "lambda": lam, "distance": dist, "passes": bool(dist <= d)})
    return verdicts


# --------------------------------------------------------------------------
# truncation scans


def classify_slope(slope: float) -> str:
    if abs(slope) <= GAP_SLOPE:
        return "gap"
    if slope >= BAND_SLOPE:
        return "band"
    return "indeterminate"


def fit_slopes(lengths, counts) -> np.ndarray:
    """Least-squares slope of ``counts`` (rows = lengths) against the length."""
    L = np.asarray(lengths, dtype=float)
    C = np.asarray(counts, dtype=float)
    Lc = L - L.mean()
    return (Lc @ (C - C.mean(axis=0))) / (Lc @ Lc)


@dataclass
class ScanResult:
    lengths: list
    intervals: list
    counts_neumann: list
    counts_dirichlet: list
    counts: list
    slopes: list
    classes: list
    config: dict
    schema_version: str = SCHEMA_VERSION
    version: str = __version__

    def to_dict(self) -> dict:
        return asdict(self)

    def counts_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["L", "a", "b", "count_neumann", "count_dirichlet", "count"])
        for i, L in enumerate(self.lengths):
            for j, (a, b) in enumerate(self.intervals):
                w.writerow([L, fmt(a), fmt(b), self.counts_neumann[i][j], self.counts_dirichlet[i][j],
                            self.counts[i][j]])
        return buf.getvalue()


def interval_counts(profile: Profile, intervals, bc: str) -> np.ndarray:
    """Eigenvalue counts of the full (all-mode) operator in each ``[a, b)``."""
    top = max(b for _, b in intervals)
    shifts = np.array([x for ab in intervals for x in ab], dtype=float)
    total = np.zeros(len(intervals), dtype=np.int64)
    # below zero every mode is empty; only m = 0 needs counting
    for m in range(mode_cutoff(profile, top) + 1 if top > 0 else 1):
        c = sturm_count(sl_discretize(profile, m, bc), shifts).reshape(-1, 2)
        total += (1 if m == 0 else 2) * (c[:, 1] - c[:, 0])
    return total


def truncation_scan(config: ChainConfig, lengths, intervals, workers: int | None = None) -> ScanResult:
    """Count growth of capped chains of increasing length in fixed intervals.

    Counts are taken with both end conditions (natural pole rule and clamped
    end cells); the smaller one is classified, so cap-localised edge states
    cannot masquerade as spectrum.
    """
    intervals = [(float(a), float(b)) for a, b in intervals]
    for a, b in intervals:
        if not a < b:
            raise ValueError(f"empty interval [{a}, {b}]")

    def run(L):
        prof = assemble_chain(config.with_(blocks=int(L), periodic=False))
        return interval_counts(prof, intervals, "neumann"), interval_counts(prof, intervals, "dirichlet")

    res = _map(run, lengths, workers)
    cn = np.array([r[0] for r in res])
    cd = np.array([r[1] for r in res])
    c = np.minimum(cn, cd)
    slopes = fit_slopes(lengths, c)
    return ScanResult(lengths=[int(x) for x in lengths], intervals=[list(x) for x in intervals],
                      counts_neumann=cn.tolist(), counts_dirichlet=cd.tolist(), counts=c.tolist(),
                      slopes=slopes.tolist(), classes=[classify_slope(s) for s in slopes],
                      config=asdict(config))


# --------------------------------------------------------------------------
# covering block graphs


def block_spectrum(block_size: int, block_kind: str) -> np.ndarray:
    return np.linalg.eigvalsh(block_laplacian(block_size, block_kind))


def covering_gap_experiment(block_kind: str, block_size: int, coupling: float, lengths,
                            tol: float = 1e-10, dense_limit: int = 500, margin: float = 0.05) -> GapReport:
    """Spectra of line coverings and gap classification against the block spectrum.

    Each covering is solved by Lanczos and, up to ``dense_limit`` vertices, by a
    dense eigensolver as an oracle.  Complement intervals of the block spectrum
    shrunk by ``margin`` are classified by count growth over the lengths.
    """
    base = block_graph_laplacian(block_size, block_kind, coupling, "base")
    spec = block_spectrum(block_size, block_kind)
    pts = np.unique(np.round(spec, 12))
    lam_max = float(pts[-1]) + margin
    intervals = [(a + margin, b - margin) for a, b in zip(pts[:-1], pts[1:]) if b - a > 2 * margin]
    counts, max_dev, oracle_err, neck = [], 0.0, 0.0, []
    spectra = {}
    for L in lengths:
        op = lift_operator(base, ("line", int(L)))
        vals = smallest_eigs(op, op.size, tol=tol)
        if op.size <= dense_limit:
            dense = np.linalg.eigvalsh(op.dense())
            oracle_err = max(oracle_err, float(np.max(np.abs(dense - vals))))
        max_dev = max(max_dev, float(np.max(np.min(np.abs(vals[:, None] - pts[None, :]), axis=1))))
        counts.append([int(np.sum((vals >= a) & (vals < b))) for a, b in intervals])
        neck.append({"covering": f"line({L})", "lambda1": op.neck_lambda1()})
        spectra[int(L)] = vals
    slopes = fit_slopes(lengths, np.array(counts)) if intervals else np.zeros(0)
    classes = [classify_slope(s) for s in slopes]
    for k in (2, 3):
        op = lift_operator(base, ("cyclic", k))
        neck.append({"covering": f"cyclic({k})", "lambda1": op.neck_lambda1()})
    base_neck = base.neck_lambda1()
    all_vals = np.concatenate(list(spectra.values()))
    bands = merge_intervals([(v, v) for v in all_vals], tol=2 * margin)
    verdicts = []
    for (a, b), cls in zip(intervals, classes):
        mid = 0.5 * (a + b)
        verdicts.append({"kind": "midpoint", "lambda": mid, "interval": [a, b], "class": cls,
                         "passes": cls == "gap"})
    verdicts.append({"kind": "spectrum_near_blocks", "max_deviation": max_dev, "passes": max_dev <= margin})
    verdicts.append({"kind": "dense_oracle", "error": oracle_err, "passes": oracle_err <= 1e-8})
    for entry in neck:
        verdicts.append({"kind": "neck_lift", **entry, "base_lambda1": base_neck,
                         "passes": entry["lambda1"] >= base_neck - 1e-9})
    return GapReport(lambda_max=lam_max, bands=bands, gaps=complement(bands, 0.0, lam_max), model_spectrum=pts.tolist(),
                     method="truncation", verdicts=verdicts,
                     extra={"lengths": [int(x) for x in lengths], "intervals": [list(x) for x in intervals],
                            "counts": counts, "slopes": slopes.tolist(), "dense_oracle_error": oracle_err,
                            "block_kind": block_kind, "block_size": block_size, "coupling": coupling,
                            "spectra": {str(L): v.tolist() for L, v in spectra.items()}})
