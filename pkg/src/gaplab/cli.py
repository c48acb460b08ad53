"""Config-driven experiment runner.

Every subcommand reads a JSON config (defaults below, unknown keys rejected),
writes ``report.json`` plus CSV tables into the output directory and a
separate ``metadata.json`` holding the timestamp and worker count.  The
report itself depends only on the resolved config, so reruns are
byte-identical.

Exit codes: 0 success, 2 at least one verdict failed, 1 error.
"""
from __future__ import annotations

import argparse
import copy
import csv
import io
import json
import math
import os
import sys
import time
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import __version__
from .eigen import EigenRequest, discriminant, eigs_in_interval, lowest_eigenvalue
from .geometry import (SCHEMA_VERSION, ChainConfig, ClassParams, assemble_chain, class_report,
                       sphere_profile, sphere_spectrum)
from .gaps import (band_structure, compare_to_model, covering_gap_experiment, default_workers, distance_to_intervals,
                   dumps, fmt, hausdorff, mode_cutoff, periodic_eigenvalues, truncation_scan)
from .operators import neck_dirichlet_operator, sl_discretize
from .quasimode import (CutoffSpec, annulus_inequality_check, approx_space_check, build_quasimode, donnelly_report,
                        harmonic_extension_quasimode, mixed_eigenvalue, neck_estimate_check, residual)

FIXTURE_ENV = "GAPLAB_FIXTURES"

_CHAIN = {"blocks": 1, "eps": 0.05, "h": 0.005, "periodic": True, "seed": 0}

DEFAULTS = {
    "bands": {
        "chain": dict(_CHAIN),
        "lambda_max": 13.0, "grid": 0.01, "refine_tol": 1e-9, "step": 1e-3,
        "margin": 0.3, "model": None, "discriminant_csv": False,
    },
    "scan": {
        "chain": {**_CHAIN, "eps": 0.02, "h": 0.002, "periodic": False},
        "lengths": [5, 10, 20],
        "intervals": [[3.5, 4.5], [1.9, 2.1]],
        "expect": None,
    },
    "gaps": {
        "sweep": [[0.2, 0.01], [0.1, 0.005], [0.05, 0.005], [0.02, 0.002]],
        "lambda_max": 13.0, "grid": 0.01, "refine_tol": 1e-9, "step": 1e-3,
        "min_gaps": 3,
    },
    "quasimode": {
        "chain": {**_CHAIN, "blocks": 20},
        "m": 1, "k": 1, "block": 0,
        "rhos": [1e-2, 1e-3, 1e-4],
        "kind": "smoothstep", "radius": "conformal", "extension": "auto",
        "scaling_factor": 3.0,
        "family_rho": 1e-3, "family_blocks": [0, 2, 4, 6, 8, 10, 12, 14, 16, 18], "eps0": 0.2,
        "dump_csv": True,
    },
    "scaling": {
        "sweep": [[0.2, 0.01], [0.1, 0.005], [0.05, 0.005], [0.02, 0.002]],
        "m_max": 3, "min_exponent": 1.5,
        "n_samples": 200, "seed": 0, "sample_m_max": 1,
        "annulus": {"r0": 1.0, "r1": 0.5, "scales": [1.0, 2.0, 4.0], "n_samples": 200, "seed": 0},
    },
    "classcheck": {
        "chain": dict(_CHAIN),
        "params": {"rho_bar": 0.2, "delta_bar": 0.05, "Lambda": 100.0},
        "m_max": 3,
        "approx_space": {"lambda": 4.0, "blocks": [2, 4], "n_samples": 200, "seed": 0, "tolerance": 0.2},
    },
    "cover": {
        "block_kind": "cycle", "block_size": 6, "coupling": 0.01, "lengths": [10, 20, 40],
        "tol": 1e-10, "dense_limit": 500, "margin": 0.05,
    },
    "sphere-verify": {
        "h": 1e-3, "k_max": 4, "m_max": 3, "tolerance": 5e-3, "min_ratio": 3.5, "tol": 1e-12,
    },
}

# nested blocks whose keys are validated too; null switches an optional block off
NESTED = {"chain", "params", "approx_space", "annulus"}


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


# --------------------------------------------------------------------------
# config handling


def fixture_dir() -> Path:
    return Path(os.environ.get(FIXTURE_ENV, "fixtures"))


def resolve_config_path(name: str) -> Path:
    """A path as given, else a name looked up in the fixture directory."""
    p = Path(name)
    if p.is_file():
        return p
    for cand in (fixture_dir() / name, fixture_dir() / f"{name}.json"):
        if cand.is_file():
            return cand
    raise FileNotFoundError(f"config {name!r} not found (also looked in {fixture_dir()})")


def _merge(defaults: dict, given: dict, where: str) -> dict:
    unknown = sorted(set(given) - set(defaults))
    if unknown:
        raise ValueError(f"unknown config keys in {where}: {unknown}")
    out = copy.deepcopy(defaults)
    for k, v in given.items():
        if k in NESTED and isinstance(defaults.get(k), dict) and v is not None:
            if not isinstance(v, dict):
                raise ValueError(f"{where}.{k} must be an object")
            out[k] = _merge(defaults[k], v, f"{where}.{k}")
        else:
            out[k] = v
    return out


def load_config(sub: str, path: str | None, overrides: list[str]) -> tuple[dict, str | None]:
    given = {}
    if path is not None:
        with open(resolve_config_path(path), encoding="utf-8") as fh:
            given = json.load(fh)
        if not isinstance(given, dict):
            raise ValueError("config must be a JSON object")
    given = dict(given)
    for item in overrides:
        key, sep, raw = item.partition("=")
        if not sep:
            raise ValueError(f"--set expects key=value, got {item!r}")
        try:
            val = json.loads(raw)
        except json.JSONDecodeError:
            val = raw
        node = given
        parts = key.split(".")
        for p in parts[:-1]:
            node = node.setdefault(p, {})
        node[parts[-1]] = val
    output = given.pop("output", None)
    schema = given.pop("schema_version", SCHEMA_VERSION)
    if str(schema) != SCHEMA_VERSION:
        raise ValueError(f"unsupported schema_version {schema!r} (expected {SCHEMA_VERSION!r})")
    named = given.pop("subcommand", sub)
    if named != sub:
        raise ValueError(f"config is for subcommand {named!r}, not {sub!r}")
    return _merge(DEFAULTS[sub], given, sub), output


def _chain(cfg: dict) -> ChainConfig:
    return ChainConfig.from_dict(cfg)


def _csv(rows, header) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([fmt(x) if isinstance(x, (float, np.floating)) else x for x in row])
    return buf.getvalue()


def _verdict(name, passes, **info) -> dict:
    return {"kind": name, **info, "passes": bool(passes)}


# --------------------------------------------------------------------------
# subcommands; each returns (report dict, {filename: text})


def cmd_bands(cfg, workers):
    prof = assemble_chain(_chain(cfg["chain"]).with_(periodic=True))
    rep = band_structure(prof, cfg["lambda_max"], cfg["grid"], cfg["refine_tol"], cfg["step"], workers,
                         model=cfg["model"])
    rep.verdicts = compare_to_model(rep, rep.model_spectrum, cfg["margin"])
    files = {"bands.csv": rep.bands_csv()}
    if cfg["discriminant_csv"]:
        lam = np.linspace(0.0, cfg["lambda_max"], int(math.ceil(cfg["lambda_max"] / cfg["grid"])) + 1)
        rows = []
        for m in range(mode_cutoff(prof, cfg["lambda_max"]) + 1):
            D = discriminant(prof, m, lam, cfg["step"])
            rows += [(float(x), m, float(d)) for x, d in zip(lam, D)]
        files["discriminant.csv"] = _csv(rows, ["lambda", "m", "D"])
    return rep.to_dict(), files


def cmd_scan(cfg, workers):
    res = truncation_scan(_chain(cfg["chain"]), cfg["lengths"], cfg["intervals"], workers)
    out = res.to_dict()
    verdicts = [_verdict("not_indeterminate", c != "indeterminate", interval=iv, slope=s, **{"class": c})
                for iv, s, c in zip(res.intervals, res.slopes, res.classes)]
    if cfg["expect"] is not None:
        if len(cfg["expect"]) != len(res.intervals):
            raise ValueError("expect must list one class per interval")
        verdicts += [_verdict("expected_class", c == e, interval=iv, expected=e, **{"class": c})
                     for iv, c, e in zip(res.intervals, res.classes, cfg["expect"])]
    out["verdicts"] = verdicts
    rows = [(a, b, s, c) for (a, b), s, c in zip(res.intervals, res.slopes, res.classes)]
    return out, {"counts.csv": res.counts_csv(), "classes.csv": _csv(rows, ["a", "b", "slope", "class"])}


def cmd_gaps(cfg, workers):
    lmax = cfg["lambda_max"]
    S = [lam for lam, _ in sphere_spectrum(2, 40) if lam <= lmax]
    rows, band_rows, entries = [], [], []
    for eps, h in cfg["sweep"]:
        prof = assemble_chain(ChainConfig(blocks=1, eps=eps, h=h, periodic=True))
        rep = band_structure(prof, lmax, cfg["grid"], cfg["refine_tol"], cfg["step"], workers, model=S)
        pe = periodic_eigenvalues(prof, lmax)
        tol = 10 * h * h
        bad = [(m, v) for m, v in pe if distance_to_intervals(v, rep.bands) > tol]
        hd = hausdorff(rep.bands, S)
        entries.append({"eps": eps, "h": h, "gap_count": rep.gap_count, "gaps": rep.interior_gaps,
                        "bands": rep.bands, "hausdorff": hd, "periodic_eigenvalues": len(pe),
                        "violations": [list(x) for x in bad], "warnings": rep.warnings})
        rows.append((eps, h, rep.gap_count, hd, len(pe), len(bad)))
        band_rows += [(eps, b.lo, b.hi, b.mode) for b in rep.mode_bands]
    counts = [e["gap_count"] for e in entries]
    hds = [e["hausdorff"] for e in entries]
    verdicts = [
        _verdict("gap_count_nondecreasing", all(a <= b for a, b in zip(counts, counts[1:])), counts=counts),
        _verdict("min_gaps_at_smallest_eps", counts[-1] >= cfg["min_gaps"], count=counts[-1]),
        _verdict("hausdorff_nonincreasing", all(a >= b for a, b in zip(hds, hds[1:])), distances=hds),
        _verdict("floquet_truncation_consistency", all(not e["violations"] for e in entries),
                 violations=sum(len(e["violations"]) for e in entries)),
    ]
    report = {"model_spectrum": S, "sweep": entries, "verdicts": verdicts}
    return report, {"sweep.csv": _csv(rows, ["eps", "h", "gap_count", "hausdorff", "periodic_eigs", "violations"]),
                    "bands.csv": _csv(band_rows, ["eps", "lo", "hi", "mode"])}


def cmd_quasimode(cfg, workers):
    chain = _chain(cfg["chain"])
    prof = assemble_chain(chain)
    m, k = cfg["m"], cfg["k"]
    lam = float(k * (k + 1))
    op = sl_discretize(prof, m, "periodic" if prof.periodic else "neumann")
    rows, res = [], []
    for rho in cfg["rhos"]:
        spec = CutoffSpec(rho=rho, kind=cfg["kind"])
        qm = build_quasimode(prof, cfg["block"], m, k, spec, cfg["extension"], cfg["radius"])
        r = residual(op, qm)
        res.append(r)
        rows.append((rho, r, r * r * abs(math.log(rho))))
    scaled = [x[2] for x in rows]
    spread = max(scaled) / min(scaled) if min(scaled) > 0 else math.inf
    spec = CutoffSpec(rho=cfg["family_rho"], kind=cfg["kind"])
    fam = []
    for b in cfg["family_blocks"]:
        qm = build_quasimode(prof, b, m, k, spec, cfg["extension"], cfg["radius"])
        residual(op, qm)
        fam.append(qm)
    don = donnelly_report(fam, lam, cfg["eps0"])
    one = assemble_chain(chain.with_(blocks=1, periodic=True))
    bands = band_structure(one, lam + cfg["eps0"] + 0.5, workers=workers)
    hit = any(min(hi, lam + cfg["eps0"]) > max(lo, lam - cfg["eps0"]) for lo, hi in bands.bands)
    _, harm = harmonic_extension_quasimode(prof, cfg["block"], k, m)
    verdicts = [
        _verdict("residual_decreasing", all(a > b for a, b in zip(res, res[1:])), residuals=res),
        _verdict("log_rate_spread", spread <= cfg["scaling_factor"], spread=spread, limit=cfg["scaling_factor"]),
        _verdict("donnelly", don.passes, max_residual=don.max_residual, gram_min_eig=don.gram_min_eig),
        _verdict("window_meets_bands", hit, window=[lam - cfg["eps0"], lam + cfg["eps0"]]),
    ]
    report = {"lambda": lam, "residuals": [{"rho": a, "residual": b, "residual2_log": c} for a, b, c in rows],
              "family": {"rho": cfg["family_rho"], "blocks": cfg["family_blocks"],
                         "residuals": [q.residual for q in fam], "donnelly": don.to_dict()},
              "bands": bands.bands, "harmonic_extension": harm, "verdicts": verdicts}
    files = {"residuals.csv": _csv(rows, ["rho", "residual", "residual2_log_rho"])}
    if cfg["dump_csv"]:
        files["quasimode.csv"] = fam[0].to_csv(prof.s)
    return report, files


def _fit_exponent(eps, lam1) -> float:
    slope, _ = np.polyfit(np.log(eps), np.log(lam1), 1)
    return float(-slope)


def cmd_scaling(cfg, workers):
    rows, entries = [], []
    for eps, h in cfg["sweep"]:
        prof = assemble_chain(ChainConfig(blocks=1, eps=eps, h=h, periodic=True))
        ops = neck_dirichlet_operator(prof, cfg["m_max"])
        per_mode = [lowest_eigenvalue(op) for op in ops]
        est = neck_estimate_check(prof, cfg["n_samples"], cfg["seed"], cfg["sample_m_max"])
        entries.append({"eps": eps, "h": h, "lambda1_neck": min(per_mode), "lambda1_by_mode": per_mode,
                        "neck_estimate": est.to_dict()})
        rows.append((eps, h, min(per_mode), est.empirical_c, est.extra["exact_sup"]))
    p = _fit_exponent([e["eps"] for e in entries], [e["lambda1_neck"] for e in entries])
    emp = [e["neck_estimate"]["empirical_c"] for e in entries]
    ann = cfg["annulus"]
    ann_reps = [annulus_inequality_check(C, ann["r0"], ann["r1"], ann["n_samples"], ann["seed"])
                for C in ann["scales"]]
    cs = [r.empirical_c for r in ann_reps]
    flat = 1.0 / mixed_eigenvalue(ann["r0"], ann["r1"])
    verdicts = [
        _verdict("neck_exponent", p >= cfg["min_exponent"], exponent=p, limit=cfg["min_exponent"]),
        _verdict("neck_estimate_decreasing", all(a > b for a, b in zip(emp, emp[1:])), values=emp),
        _verdict("lowest_mode_is_zero", all(e["lambda1_by_mode"][0] == e["lambda1_neck"] for e in entries)),
    ]
    if 1.0 in ann["scales"]:
        c1 = cs[ann["scales"].index(1.0)]
        verdicts.append(_verdict("annulus_flat_vs_oracle", flat / 2 <= c1 <= 2 * flat, empirical=c1, oracle=flat))
    sc = ann["scales"]
    pairs = [(cs[i], cs[j]) for i in range(len(sc)) for j in range(len(sc)) if sc[j] == 2 * sc[i]]
    verdicts.append(_verdict("annulus_doubling", all(b <= 4 * a for a, b in pairs), pairs=[list(x) for x in pairs]))
    report = {"sweep": entries, "exponent": p, "annulus": [r.to_dict() for r in ann_reps],
              "annulus_flat_optimum": flat, "verdicts": verdicts}
    return report, {"neck.csv": _csv(rows, ["eps", "h", "lambda1_neck", "neck_estimate", "neck_exact_sup"]),
                    "annulus.csv": _csv([(C, c) for C, c in zip(sc, cs)], ["metric_scale", "empirical_c"])}


def cmd_classcheck(cfg, workers):
    chain = _chain(cfg["chain"])
    prof = assemble_chain(chain)
    rep = class_report(prof, ClassParams(**cfg["params"]), cfg["m_max"])
    verdicts = [_verdict(f"condition_{k}", v) for k, v in sorted(rep.passes.items())]
    report = {"membership": rep.to_dict()}
    files = {}
    ap = cfg["approx_space"]
    if ap is not None:
        rows, per = [], []
        for nb in ap["blocks"]:
            p = assemble_chain(chain.with_(blocks=nb, periodic=True))
            r0, r1 = approx_space_check(p, ap["lambda"], ap["n_samples"], ap["seed"])
            per.append({"blocks": nb, "u0": r0.to_dict(), "u1": r1.to_dict()})
            rows.append((nb, r0.empirical_c, r0.extra["exact_sup"], r1.empirical_c))
        report["approx_space"] = per
        for key in ("u0", "u1"):
            vals = [e[key]["empirical_c"] for e in per]
            finite = all(math.isfinite(v) for v in vals)
            stable = finite and max(vals) <= (1 + ap["tolerance"]) * min(vals)
            verdicts.append(_verdict(f"approx_space_{key}_finite", finite, values=vals))
            verdicts.append(_verdict(f"approx_space_{key}_stable", stable, values=vals))
        files["approx_space.csv"] = _csv(rows, ["blocks", "u0_empirical", "u0_exact_sup", "u1_empirical"])
    report["verdicts"] = verdicts
    return report, files


def cmd_cover(cfg, workers):
    rep = covering_gap_experiment(cfg["block_kind"], cfg["block_size"], cfg["coupling"], cfg["lengths"],
                                  cfg["tol"], cfg["dense_limit"], cfg["margin"])
    rows = [(int(L), i, v) for L, vals in rep.extra["spectra"].items() for i, v in enumerate(vals)]
    return rep.to_dict(), {"eigenvalues.csv": _csv(rows, ["L", "index", "value"]), "bands.csv": rep.bands_csv()}


def sphere_errors(h: float, k_max: int, m_max: int, tol: float = 1e-12) -> list[tuple]:
    """(m, k, exact, computed, error) for the unit-sphere profile at step h."""
    prof = sphere_profile(h)
    top = k_max * (k_max + 1)
    out = []
    for m in range(m_max + 1):
        vals = eigs_in_interval(sl_discretize(prof, m), EigenRequest(-0.5, top + 0.5 * (k_max + 1), tol=tol))
        for k in range(m, k_max + 1):
            exact = float(k * (k + 1))
            got = float(vals[k - m])
            out.append((m, k, exact, got, abs(got - exact)))
    return out


def cmd_sphere_verify(cfg, workers):
    h = cfg["h"]
    fine = sphere_errors(h, cfg["k_max"], cfg["m_max"], cfg["tol"])
    finer = sphere_errors(h / 2, cfg["k_max"], cfg["m_max"], cfg["tol"])
    err = max(r[4] for r in fine)
    # the exact zero eigenvalue sits at the bisection floor and carries no order information
    ratios = [a[4] / b[4] for a, b in zip(fine, finer) if a[2] > 0]
    rows = [(h,) + r for r in fine] + [(h / 2,) + r for r in finer]
    verdicts = [_verdict("max_error", err <= cfg["tolerance"], error=err, limit=cfg["tolerance"]),
                _verdict("halving_ratio", min(ratios) >= cfg["min_ratio"], min_ratio=min(ratios))]
    report = {"table": [dict(zip(["h", "m", "k", "exact", "computed", "error"], r)) for r in rows],
              "max_error": err, "max_error_half": max(r[4] for r in finer), "min_ratio": min(ratios),
              "verdicts": verdicts}
    lines = [f"{'m':>2} {'k':>2} {'k(k+1)':>7} {'computed':>20} {'error':>10}"]
    lines += [f"{m:>2} {k:>2} {ex:>7.0f} {got:>20.12f} {e:>10.3e}" for m, k, ex, got, e in fine]
    lines.append(f"max error {err:.3e} at h={h:g}; min halving ratio {min(ratios):.3f}")
    print("\n".join(lines))
    return report, {"sphere.csv": _csv(rows, ["h", "m", "k", "exact", "computed", "error"])}


COMMANDS = {
    "bands": (cmd_bands, "Floquet bands and gaps of a periodic chain, compared with the model spectrum"),
    "scan": (cmd_scan, "eigenvalue-count growth of capped chains in fixed intervals"),
    "gaps": (cmd_gaps, "gap count and band distance along an eps sweep, with periodic-bc cross-check"),
    "quasimode": (cmd_quasimode, "cutoff quasi-mode residuals and the Donnelly family test"),
    "scaling": (cmd_scaling, "neck eigenvalue exponent, neck estimate and annulus inequality constants"),
    "classcheck": (cmd_classcheck, "class membership of a chain and approximate-eigenspace constants"),
    "cover": (cmd_cover, "line coverings of a block graph against the block spectrum"),
    "sphere-verify": (cmd_sphere_verify, "unit-sphere eigenvalues against k(k+1)"),
}


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="gaplab", description="Spectral gap experiments on sphere chains and block graphs.")
    parser.add_argument("--version", action="version", version=f"gaplab {__version__}")
    subs = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    for name, (_, helptext) in COMMANDS.items():
        p = subs.add_parser(name, help=helptext, description=helptext)
        p.add_argument("--config", help="JSON config file, or a fixture name looked up in $GAPLAB_FIXTURES")
        p.add_argument("--out", help="output directory (overrides the config's 'output')")
        p.add_argument("--workers", type=int, default=None,
                       help="worker threads (default: available parallelism); results do not depend on it")
        p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                       help="override a config entry; dotted keys reach nested blocks, values parse as JSON")
    return parser


def _error_line(exc: BaseException) -> str:
    return f"error type={type(exc).__name__} message={json.dumps(str(exc))}"


def run(argv=None) -> int:
    started = time.time()
    try:
        args = build_parser().parse_args(argv)
    except SystemExit as exc:  # --help and --version
        return int(exc.code or 0)
    except UsageError as exc:
        print(_error_line(exc), file=sys.stderr)
        return 1
    try:
        workers = default_workers() if args.workers is None else args.workers
        if workers < 1:
            raise ValueError(f"--workers must be >= 1, got {workers}")
        cfg, output = load_config(args.command, args.config, args.set)
        out_dir = Path(args.out or output or Path("gaplab-out") / args.command)
        fn = COMMANDS[args.command][0]
        body, files = fn(cfg, workers)
        report = {"subcommand": args.command, "config": cfg, "version": __version__,
                  "schema_version": SCHEMA_VERSION, **body}
        out_dir.mkdir(parents=True, exist_ok=True)
        (out_dir / "report.json").write_text(dumps(report), encoding="utf-8")
        for name, text in files.items():
            (out_dir / name).write_text(text, encoding="utf-8")
        meta = {"started": datetime.fromtimestamp(started, timezone.utc).isoformat(),
                "elapsed_s": round(time.time() - started, 3), "workers": workers,
                "argv": list(sys.argv[1:] if argv is None else argv), "version": __version__}
        (out_dir / "metadata.json").write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    except Exception as exc:
        print(_error_line(exc), file=sys.stderr)
        return 1
    failed = [v for v in report.get("verdicts", []) if not v.get("passes", True)]
    print(f"{args.command}: {len(report.get('verdicts', [])) - len(failed)} verdicts passed, "
          f"{len(failed)} failed; report in {out_dir}")
    return 2 if failed else 0


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
