"""Manifest-driven command line runner.

    gradsoliton verify MANIFEST [--out PATH] [--seed N] [--tol-algebraic X] [--tol-elliptic X]
    gradsoliton classify MANIFEST [...]
    gradsoliton models

Exit codes: 0 all verdicts pass, 1 some verification failed, 2 the manifest
could not be parsed or validated, 3 a model could not be built.
"""

from __future__ import annotations

import argparse
import math
import os
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import numpy as np
import yaml

from .diagnostics import (
    classify,
    constant_scal_diagnostics,
    kernel_parallelism_check,
    phi_diagnostic,
    second_eigenvalue_check,
    spectral_diagnostics,
    weyl_decay_ratio,
)
from .errors import GeometryError, HypothesisViolated, NotApplicable, SolitonResidualFailed
from .grid import ResidualReport, SampleGrid
from .labels import ModelClass
from .models import (
    SolitonInstance,
    WarpedProductSpec,
    build_model,
    build_warped_product,
    f_volume_estimate,
    list_models,
    perturb_potential,
    unit_sphere_fiber,
)
from .verify import (
    TOL_ALGEBRAIC,
    TOL_ELLIPTIC,
    verify_elliptic_equations,
    verify_pointwise_identities,
    verify_sharp_trace_consistency,
)

SCHEMA_VERSION = "1"
SUITES = ("identities", "elliptic", "spectra", "classify", "volume")
DEFAULT_SUITES = ("identities", "elliptic")
OUTPUT_ENV = "GRADSOLITON_OUTPUT_DIR"
SOLITON_TOL = 1e-8
DEFAULT_TOLERANCES = {
    "identities": TOL_ALGEBRAIC,
    "elliptic": TOL_ELLIPTIC,
    "spectra": TOL_ELLIPTIC,
    "classify": SOLITON_TOL,
    "volume": 0.01,
}

EXIT_PASS, EXIT_FAIL, EXIT_PARSE, EXIT_BUILD = 0, 1, 2, 3


class ManifestError(Exception):
    def __init__(self, location: str, message: str):
        self.location = location
        super().__init__(f"{location}: {message}")


class BuildError(Exception):
    pass


# --------------------------------------------------------------------------
# manifest


@dataclass
class ModelEntry:
    ident: str
    builder: str | None
    params: dict
    chart: str | None = None
    perturb: float | None = None
    expect: str | None = None
    warped: dict | None = None
    grid: dict | None = None
    volume: dict | None = None


@dataclass
class RunManifest:
    models: list[ModelEntry]
    suites: list[str]
    grid: dict
    tolerances: dict[str, float]
    output_path: str | None
    source: dict = field(default_factory=dict)


def _expect(cond: bool, location: str, message: str) -> None:
    if not cond:
        raise ManifestError(location, message)


def _real(value, location: str) -> float:
    if isinstance(value, bool):
        raise ManifestError(location, "expected a number")
    if isinstance(value, str) and value.strip().lower() in ("inf", "+inf", "infinity"):
        return math.inf
    try:
        return float(value)
    except (TypeError, ValueError):
        raise ManifestError(location, f"expected a number, got {value!r}") from None


def _parse_grid(raw, location: str) -> dict:
    _expect(isinstance(raw, dict), location, "grid must be a mapping")
    unknown = set(raw) - {"seed", "count", "bounds"}
    _expect(not unknown, location, f"unknown grid key(s) {sorted(unknown)}")
    out = {}
    if "seed" in raw:
        _expect(isinstance(raw["seed"], int) and not isinstance(raw["seed"], bool), f"{location}.seed", "seed must be an integer")
        out["seed"] = raw["seed"]
    if "count" in raw:
        c = raw["count"]
        _expect(isinstance(c, int) and not isinstance(c, bool) and c > 0, f"{location}.count", "count must be a positive integer")
        out["count"] = c
    if "bounds" in raw:
        b = raw["bounds"]
        loc = f"{location}.bounds"
        if isinstance(b, dict):
            _expect(set(b) == {"r"}, loc, "mapping bounds must be {r: [lo, hi]}")
            r = b["r"]
            _expect(isinstance(r, list) and len(r) == 2, f"{loc}.r", "expected [lo, hi]")
            lo, hi = (_real(v, f"{loc}.r[{i}]") for i, v in enumerate(r))
            _expect(lo < hi, f"{loc}.r", "need lo < hi")
            out["radial"] = [lo, hi]
        else:
            _expect(isinstance(b, list) and all(isinstance(p, list) and len(p) == 2 for p in b), loc,
                    "box bounds must be a list of [lo, hi] pairs")
            box = [[_real(v, f"{loc}[{i}][{j}]") for j, v in enumerate(p)] for i, p in enumerate(b)]
            _expect(all(lo < hi for lo, hi in box), loc, "need lo < hi on every axis")
            out["box"] = box
    return out


def _parse_model(raw, i: int) -> ModelEntry:
    loc = f"models[{i}]"
    _expect(isinstance(raw, dict), loc, "each model must be a mapping")
    allowed = {"id", "builder", "params", "chart", "perturb", "expect", "warped_product", "grid", "volume"}
    unknown = set(raw) - allowed
    _expect(not unknown, loc, f"unknown key(s) {sorted(unknown)}")
    has_builder, has_warp = "builder" in raw, "warped_product" in raw
    _expect(has_builder != has_warp, loc, "give exactly one of 'builder' or 'warped_product'")
    params = raw.get("params", {}) or {}
    _expect(isinstance(params, dict), f"{loc}.params", "params must be a mapping")
    params = {k: _real(v, f"{loc}.params.{k}") for k, v in params.items()}
    perturb = raw.get("perturb")
    if perturb is not None:
        perturb = _real(perturb, f"{loc}.perturb")
    expect = raw.get("expect")
    if expect is not None:
        _expect(expect in {str(c) for c in ModelClass}, f"{loc}.expect", f"unknown class label {expect!r}")
    warped = None
    if has_warp:
        warped = raw["warped_product"]
        wl = f"{loc}.warped_product"
        _expect(isinstance(warped, dict), wl, "must be a mapping")
        for key in ("h", "topology", "r_domain"):
            _expect(key in warped, wl, f"missing key {key!r}")
        wunknown = set(warped) - {"h", "topology", "r_domain", "fiber_dimension", "f", "lam", "name"}
        _expect(not wunknown, wl, f"unknown key(s) {sorted(wunknown)}")
        _expect(isinstance(warped["r_domain"], list) and len(warped["r_domain"]) == 2, f"{wl}.r_domain", "expected [lo, hi]")
        warped = dict(warped)
        warped["r_domain"] = [_real(v, f"{wl}.r_domain[{j}]") for j, v in enumerate(warped["r_domain"])]
        warped["lam"] = _real(warped.get("lam", 0.0), f"{wl}.lam")
        fd = warped.get("fiber_dimension", 1)
        _expect(isinstance(fd, int) and fd >= 1, f"{wl}.fiber_dimension", "must be a positive integer")
    grid = _parse_grid(raw["grid"], f"{loc}.grid") if "grid" in raw else None
    volume = raw.get("volume")
    if volume is not None:
        vl = f"{loc}.volume"
        _expect(isinstance(volume, dict) and "box" in volume, vl, "volume needs a 'box'")
        box = [[_real(v, f"{vl}.box") for v in p] for p in volume["box"]]
        res = volume.get("resolution", None)
        if res is not None:
            _expect(isinstance(res, (int, list)), f"{vl}.resolution", "integer or list of integers")
        volume = {"box": box, "resolution": res}
    ident = raw.get("id") or (raw.get("builder") or "warped_product")
    return ModelEntry(str(ident), raw.get("builder"), params, raw.get("chart"), perturb, expect, warped, grid, volume)


def parse_manifest(text: str) -> RunManifest:
    try:
        raw = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        where = f"line {mark.line + 1}, column {mark.column + 1}" if mark else "manifest"
        raise ManifestError(where, f"YAML syntax error: {getattr(exc, 'problem', exc)}") from None
    _expect(isinstance(raw, dict), "manifest", "top level must be a mapping")
    unknown = set(raw) - {"schema_version", "models", "suites", "grid", "tolerances", "output"}
    _expect(not unknown, "manifest", f"unknown key(s) {sorted(unknown)}")
    version = str(raw.get("schema_version", SCHEMA_VERSION))
    _expect(version == SCHEMA_VERSION, "schema_version", f"unsupported version {version!r}")
    models = raw.get("models")
    _expect(isinstance(models, list) and models, "models", "need a non-empty list of models")
    entries = [_parse_model(m, i) for i, m in enumerate(models)]
    ids = [e.ident for e in entries]
    for i, e in enumerate(entries):
        if ids.count(e.ident) > 1:
            e.ident = f"{e.ident}#{i}"
    suites = raw.get("suites", list(DEFAULT_SUITES))
    _expect(isinstance(suites, list) and suites, "suites", "need a non-empty list")
    for j, s in enumerate(suites):
        _expect(s in SUITES, f"suites[{j}]", f"unknown suite {s!r}; choose from {list(SUITES)}")
    grid = _parse_grid(raw.get("grid", {}) or {}, "grid")
    tol_raw = raw.get("tolerances", {}) or {}
    _expect(isinstance(tol_raw, dict), "tolerances", "must be a mapping of suite -> tolerance")
    tolerances = dict(DEFAULT_TOLERANCES)
    for k, v in tol_raw.items():
        _expect(k in SUITES, f"tolerances.{k}", "tolerance overrides are per suite")
        t = _real(v, f"tolerances.{k}")
        _expect(t > 0 and math.isfinite(t), f"tolerances.{k}", "must be a positive real")
        tolerances[k] = t
    out = raw.get("output")
    _expect(out is None or isinstance(out, str), "output", "must be a path string")
    return RunManifest(entries, list(dict.fromkeys(suites)), grid, tolerances, out, raw)


# --------------------------------------------------------------------------
# model construction


def _expression(text, name: str):
    import jax.numpy as jnp
    import sympy

    r = sympy.Symbol("r", real=True)
    try:
        expr = sympy.sympify(str(text), locals={"r": r})
    except (sympy.SympifyError, SyntaxError, TypeError) as exc:
        raise BuildError(f"cannot parse {name} = {text!r}: {exc}") from None
    extra = expr.free_symbols - {r}
    if extra:
        raise BuildError(f"{name} may only depend on r, found {sorted(map(str, extra))}")
    fn = sympy.lambdify(r, expr, modules="jax")
    return lambda x: fn(x) + 0.0 * x + jnp.zeros_like(x)


def build_entry(entry: ModelEntry) -> SolitonInstance:
    try:
        if entry.builder is not None:
            inst = build_model(entry.builder, entry.params, entry.chart)
        else:
            w = entry.warped
            h = _expression(w["h"], "h")
            f = _expression(w["f"], "f") if "f" in w else None
            spec = WarpedProductSpec(h, unit_sphere_fiber(int(w.get("fiber_dimension", 1))), w["topology"],
                                     tuple(w["r_domain"]), w.get("name", entry.ident))
            metric = build_warped_product(spec, f=f, lam=w["lam"])
            inst = SolitonInstance(metric, entry.ident, None, validated=False)
        if entry.perturb is not None:
            inst = perturb_potential(inst, entry.perturb)
    except SolitonResidualFailed:
        raise
    except (GeometryError, BuildError, ValueError) as exc:
        raise BuildError(f"{entry.ident}: {exc}") from None
    return inst


# --------------------------------------------------------------------------
# running suites


def _grid_for(inst: SolitonInstance, settings: dict, seed: int | None) -> SampleGrid:
    s = dict(settings)
    return SampleGrid.sample(
        inst.metric,
        count=s.get("count", 40),
        seed=seed if seed is not None else s.get("seed", 0),
        bounds=s.get("box"),
        radial=s.get("radial"),
    )


def _suite_block(reports: list[ResidualReport], extra: dict | None = None) -> dict:
    block = {
        "status": "pass" if all(r.verdict for r in reports) else "fail",
        "reports": [r.to_dict() for r in reports],
    }
    if extra:
        block.update(extra)
    return block


def _scalar_report(identity: str, points: np.ndarray, values, tolerance: float, notes: str = "") -> ResidualReport:
    return ResidualReport.build(identity, points, np.asarray(values, dtype=float), tolerance, notes)


def _spectra(inst: SolitonInstance, grid: SampleGrid, tol: float) -> dict:
    m = inst.metric
    diag = spectral_diagnostics(inst, grid)
    reports = []
    extra: dict[str, Any] = {"summary": diag.summary()}
    n = m.n
    reports.append(_scalar_report(
        "ricci-trace", grid.points, np.abs(diag.ricci_eigenvalues.sum(axis=1) - diag.scal), 1e-9))
    if n >= 3 and m.lam > 0 and np.all(diag.scal > 0):
        phi = phi_diagnostic(diag, n)["phi"]
        reports.append(_scalar_report("phi-nonpositive", grid.points, np.maximum(phi, 0.0), 1e-12,
                                      "positive part of phi"))
        extra["phi_max"] = float(np.max(phi))
    cs = constant_scal_diagnostics(inst, grid)
    extra["constant_scal"] = cs.to_dict()
    if cs.constant:
        reports.append(_scalar_report("constant-scal-ricci-identity", grid.points,
                                      np.full(len(grid), cs.ricci_identity_residual), 1e-8,
                                      "| |Ric|^2 - lam scal | for constant scal"))
        reports.append(_scalar_report("constant-scal-bounds", grid.points,
                                      np.full(len(grid), 0.0 if cs.bounds_ok else 1.0), 0.5))
    try:
        reports.append(kernel_parallelism_check(inst, grid, tolerance=tol))
    except HypothesisViolated as exc:
        extra["kernel_parallelism"] = f"not applicable: {exc}"
    if m.lam > 0:
        audits = second_eigenvalue_check(inst, grid)
        extra["second_eigenvalue"] = {
            "lambda1_min": min(a.lambda1 for a in audits),
            "lambda2_min": min(a.lambda2 for a in audits),
            "restricted_sum_min": min(a.restricted_sum for a in audits),
            "degenerate_points": sum(a.degenerate for a in audits),
            "audit": sorted({a.audit for a in audits}),
        }
        reports.append(_scalar_report("second-eigenvalue-audit", grid.points,
                                      [1.0 if a.audit == "fail" else 0.0 for a in audits], 0.5))
    if n >= 3:
        w = weyl_decay_ratio(inst, grid)
        extra["weyl_decay_ratio_at_boundary"] = None if math.isnan(w["boundary_ratio"]) else w["boundary_ratio"]
    return _suite_block(reports, extra)


def _default_volume(inst: SolitonInstance) -> dict:
    m = inst.metric
    compact = {i: (a, b) for i, a, b in m.chart.compact_axes}
    half = max(8.0, math.sqrt(60.0 / abs(m.lam))) if m.lam != 0 else 8.0
    box = [list(compact[i]) if i in compact else [-half, half] for i in range(m.n)]
    return {"box": box, "resolution": None}


def _volume(inst: SolitonInstance, settings: dict | None, tol: float) -> dict:
    m = inst.metric
    settings = settings or _default_volume(inst)
    res = settings.get("resolution")
    if res is None:
        res = min(400, int(400 ** (2 / m.n)))
    est = f_volume_estimate(inst, settings["box"], res, divergence_tol=tol)
    block = {
        "box": [list(b) for b in est.box],
        "resolution": res,
        "value": est.value,
        "box_value": est.box_value,
        "doubled_box_value": est.doubled_value,
        "divergent": est.divergent,
    }
    if inst.kind == "shrinking":
        block["status"] = "fail" if est.divergent else "pass"
    else:
        block["status"] = "pass"
        block["notes"] = "finiteness is only claimed for shrinking solitons"
    return block


def run_model(entry: ModelEntry, manifest: RunManifest, suites: list[str], seed: int | None,
              tolerances: dict[str, float]) -> tuple[dict, list[str]]:
    inst = build_entry(entry)
    grid = _grid_for(inst, entry.grid or manifest.grid, seed)
    geo = inst.metric.geometry(grid.points, order=2)
    soliton = ResidualReport.build("soliton-residual", grid.points, geo.soliton_residual(), SOLITON_TOL)
    failures: list[str] = []
    block: dict[str, Any] = {
        "id": entry.ident,
        "label": inst.label,
        "kind": inst.kind,
        "dimension": inst.n,
        "lambda": float(inst.metric.lam),
        "grid": {"seed": grid.seed, "count": len(grid)},
        "soliton_residual": soliton.to_dict(),
        "suites": {},
    }
    if not soliton.verdict:
        failures.append(f"{entry.ident}: soliton-residual-failed")
    for suite in suites:
        tol = tolerances[suite]
        if not soliton.verdict:
            block["suites"][suite] = {
                "status": "refused",
                "reason": f"soliton-residual-failed (max {soliton.max_residual:.3e} >= {SOLITON_TOL:g})",
            }
            failures.append(f"{entry.ident}: {suite}: soliton-residual-failed")
            continue
        try:
            if suite == "identities":
                out = _suite_block(verify_pointwise_identities(inst, grid, tol, require_soliton=False))
            elif suite == "elliptic":
                reps = verify_elliptic_equations(inst, grid, tolerance=tol, require_soliton=False,
                                                 skip_unsupported=True)
                if inst.n >= 3:
                    reps.append(verify_sharp_trace_consistency(inst, grid, tolerances["identities"],
                                                               require_soliton=False))
                out = _suite_block(reps)
            elif suite == "spectra":
                out = _spectra(inst, grid, tol)
            elif suite == "classify":
                result = classify(inst, grid)
                out = result.to_dict()
                expected = entry.expect or (str(inst.expected_class) if inst.expected_class else None)
                out["expected"] = expected
                out["status"] = "pass" if expected is None or expected == str(result.label) else "fail"
            else:
                out = _volume(inst, entry.volume, tol)
        except (NotApplicable, HypothesisViolated, GeometryError) as exc:
            out = {"status": "fail", "error": f"{type(exc).__name__}: {exc}"}
        block["suites"][suite] = out
        if out["status"] == "fail":
            bad = [r["identity"] for r in out.get("reports", []) if r["verdict"] == "fail"] or [suite]
            failures.extend(f"{entry.ident}: {suite}: {b}" for b in bad)
    return block, failures


def _plain(obj):
    """Convert numpy scalars/arrays and tuples into YAML-safe builtins."""
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _plain(obj.tolist())
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if math.isfinite(v) else str(v)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    return obj


def run(manifest: RunManifest, command: str = "verify", seed: int | None = None,
        tol_algebraic: float | None = None, tol_elliptic: float | None = None) -> tuple[dict, int]:
    suites = ["classify"] if command == "classify" else manifest.suites
    tolerances = dict(manifest.tolerances)
    if tol_algebraic is not None:
        tolerances["identities"] = tol_algebraic
    if tol_elliptic is not None:
        tolerances["elliptic"] = tol_elliptic
        tolerances["spectra"] = tol_elliptic
    blocks, failures = [], []
    for entry in manifest.models:
        block, fails = run_model(entry, manifest, suites, seed, tolerances)
        blocks.append(block)
        failures.extend(fails)
    report = {
        "schema_version": SCHEMA_VERSION,
        "command": command,
        "manifest": manifest.source,
        "suites": suites,
        "tolerances": {k: tolerances[k] for k in suites},
        "seed_override": seed,
        "models": blocks,
        "failing": failures,
        "exit_status": "fail" if failures else "pass",
    }
    return _plain(report), EXIT_FAIL if failures else EXIT_PASS


def dump_report(report: dict) -> str:
    return yaml.safe_dump(report, sort_keys=True, allow_unicode=True, default_flow_style=False, width=100)


def _output_path(args, manifest: RunManifest, manifest_path: Path) -> Path:
    if args.out:
        return Path(args.out)
    if manifest.output_path:
        p = Path(manifest.output_path)
        return p if p.is_absolute() else manifest_path.parent / p
    directory = Path(os.environ.get(OUTPUT_ENV, "."))
    return directory / f"{manifest_path.stem}-{args.command}-report.yaml"


def _print_models(out) -> None:
    rows = list_models()
    for r in rows:
        r["defaults"] = "; ".join(f"{k}: {v}" for k, v in r["parameters"].items()) or "-"
    cols = (("builder", "signature"), ("parameters", "defaults"), ("expected class", "expected_class"))
    widths = [max(len(title), *(len(r[key]) for r in rows)) for title, key in cols]
    print("  ".join(t.ljust(w) for (t, _), w in zip(cols, widths)) + "  note", file=out)
    for r in rows:
        print("  ".join(r[k].ljust(w) for (_, k), w in zip(cols, widths)) + f"  {r['note']}", file=out)
    print(f"{len(rows)} models", file=out)


def make_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="gradsoliton", description="Verify gradient Ricci soliton identities.")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, text in (("verify", "run the manifest's suites"), ("classify", "classify every manifest model")):
        p = sub.add_parser(name, help=text)
        p.add_argument("manifest", type=Path)
        p.add_argument("--out", help="report path (default: manifest 'output', else $%s or cwd)" % OUTPUT_ENV)
        p.add_argument("--seed", type=int, help="override every grid seed")
        p.add_argument("--tol-algebraic", type=float, help="tolerance for the identities suite")
        p.add_argument("--tol-elliptic", type=float, help="tolerance for the elliptic and spectra suites")
    sub.add_parser("models", help="list catalog builders")
    return parser


def main(argv: list[str] | None = None) -> int:
    args = make_parser().parse_args(argv)
    if args.command == "models":
        _print_models(sys.stdout)
        return EXIT_PASS
    for flag in ("tol_algebraic", "tol_elliptic"):
        value = getattr(args, flag)
        if value is not None and not (value > 0 and math.isfinite(value)):
            print(f"error: --{flag.replace('_', '-')} must be a positive real", file=sys.stderr)
            return EXIT_PARSE
    try:
        text = args.manifest.read_text(encoding="utf-8")
    except OSError as exc:
        print(f"error: cannot read manifest: {exc}", file=sys.stderr)
        return EXIT_PARSE
    try:
        manifest = parse_manifest(text)
    except ManifestError as exc:
        print(f"error: {args.manifest}: {exc}", file=sys.stderr)
        return EXIT_PARSE
    try:
        report, code = run(manifest, args.command, args.seed, args.tol_algebraic, args.tol_elliptic)
    except (BuildError, SolitonResidualFailed) as exc:
        print(f"error: cannot build model: {exc}", file=sys.stderr)
        return EXIT_BUILD
    path = _output_path(args, manifest, args.manifest)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(dump_report(report), encoding="utf-8")
    for block in report["models"]:
        statuses = ", ".join(f"{k}={v['status']}" for k, v in sorted(block["suites"].items()))
        print(f"{block['id']}: soliton-residual={block['soliton_residual']['verdict']} {statuses}")
    if report["failing"]:
        print("FAILED:", file=sys.stderr)
        for item in report["failing"]:
            print(f"  {item}", file=sys.stderr)
    print(f"report written to {path}")
    return code


if __name__ == "__main__":
    sys.exit(main())
