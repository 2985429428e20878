"""Acceptance criteria, one pass/fail line each (run with ``pytest -s`` or ``-v`` to see them)."""

import json
import math
import os
import subprocess
import sys
import textwrap
from pathlib import Path

import numpy as np
import pytest
import yaml

from _catalog import CASES, EXPECTED, IDS, instance
from gradsoliton import (
    BivectorBasis,
    ModelClass,
    SampleGrid,
    classify,
    detect_warped_product,
    f_volume_estimate,
    build_model,
    perturb_potential,
    phi_diagnostic,
    phi_from_eigenvalues,
    random_algebraic_curvature,
    spectral_diagnostics,
    surface_soliton_residual,
    verify_elliptic_equations,
)
from gradsoliton.bivector import operator_from_frame_riemann, sharp_from_b, sharp_via_structure_constants, tensor_to_matrix, weyl_arrays, weyl_traces
from gradsoliton.models import cigar_radial_potential, warped_catalog, warped_spec

TESTS = Path(__file__).resolve().parent
GRID_POINTS = 40


def grid40(case_id):
    return SampleGrid.sample(instance(case_id).metric, count=GRID_POINTS, seed=0)


@pytest.fixture
def verdict(capsys):
    def emit(number, title, passed, detail):
        line = f"ACCEPTANCE {number}: {'PASS' if passed else 'FAIL'} | {title} | {detail}"
        with capsys.disabled():
            print("\n" + line)
        assert passed, line

    return emit


def test_criterion_1_identity_suite(verdict):
    env = dict(os.environ, PYTHONPATH=os.pathsep.join([str(TESTS), os.environ.get("PYTHONPATH", "")]))
    proc = subprocess.run([sys.executable, str(TESTS / "_acceptance_identities.py")], capture_output=True,
                          text=True, env=env, timeout=900)
    assert proc.returncode == 0, proc.stderr
    data = json.loads(proc.stdout)
    worst = max(max(v.values()) for v in data["worst"].values())
    passed = worst < 1e-6 and data["elapsed"] < 60 and len(data["worst"]) == len(CASES)
    verdict(1, "five pointwise identities on the catalog, 40-point grids", passed,
            f"max residual {worst:.2e} (< 1e-6), cold runtime {data['elapsed']:.1f} s (< 60 s), {len(CASES)} models")


def test_criterion_2_elliptic_suite(verdict):
    worst, per_eq = 0.0, {}
    for case_id in IDS:
        inst = instance(case_id)
        for rep in verify_elliptic_equations(inst, grid40(case_id), tolerance=1e-5, skip_unsupported=True):
            per_eq[rep.identity_id] = max(per_eq.get(rep.identity_id, 0.0), rep.max_residual)
            worst = max(worst, rep.max_residual)
    detail = ", ".join(f"{k} {v:.1e}" for k, v in sorted(per_eq.items()))
    verdict(2, "elliptic equations (curvature operator, Ricci, scalar, radial, Weyl-Ricci)", worst < 1e-5,
            f"max residual {worst:.2e} (< 1e-5; no floor needed): {detail}")


def test_criterion_3_sharp_dual_formula(verdict):
    worst = 0.0
    for case_id in IDS:
        inst = instance(case_id)
        if inst.n < 3:
            continue
        geo = inst.metric.geometry(SampleGrid.sample(inst.metric, 10, seed=0).points, order=2)
        for R in geo.frame_components(geo.riemann, 4):
            op = operator_from_frame_riemann(R, np.eye(inst.n))
            diff = tensor_to_matrix(sharp_from_b(R)) - sharp_via_structure_constants(op, BivectorBasis(inst.n))
            worst = max(worst, float(np.max(np.abs(diff))))
    count = 0
    for n in (3, 4, 5):
        rng = np.random.default_rng(100 + n)
        for _ in range(20):
            R = random_algebraic_curvature(n, rng)
            op = operator_from_frame_riemann(R, np.eye(n))
            diff = tensor_to_matrix(sharp_from_b(R)) - sharp_via_structure_constants(op, BivectorBasis(n))
            worst = max(worst, float(np.max(np.abs(diff))))
            count += 1
    verdict(3, "R^# via B-tensor vs structure constants", worst < 1e-10,
            f"max entry difference {worst:.2e} (< 1e-10) over catalog points and {count} random tensors")


def test_criterion_4_weyl(verdict):
    must_vanish = ["gaussian3", "sphere3", "cylinder3", "hyperbolic3", "hypcylinder3", "sphere4", "cylinder4"]
    worst_w, worst_trace = 0.0, 0.0
    for case_id in IDS:
        inst = instance(case_id)
        if inst.n < 3:
            continue
        geo = inst.metric.geometry(grid40(case_id).points, order=2)
        W, _ = weyl_arrays(geo.riemann, geo.ricci, geo.scal, geo.g)
        Wf = geo.frame_components(W, 4)
        if case_id in must_vanish:
            worst_w = max(worst_w, float(np.max(np.abs(Wf))))
        worst_trace = max(worst_trace, max(weyl_traces(w, np.eye(inst.n)) for w in Wf))
    passed = worst_w < 1e-9 and worst_trace < 1e-9
    verdict(4, "Weyl tensor vanishing and trace-free", passed,
            f"max |W| on n=3 / constant-curvature / S^(n-1)xR models {worst_w:.2e}, max trace {worst_trace:.2e} (< 1e-9)")


def test_criterion_5_phi(verdict):
    rng = np.random.default_rng(5)
    tuples = []
    while len(tuples) < 1000:
        n = int(rng.integers(3, 8))
        rho = np.sort(rng.normal(size=n) * rng.uniform(0.05, 20))
        if rho.sum() > 0:
            tuples.append(rho)
    worst_random = max(float(phi_from_eigenvalues(r)) for r in tuples)
    worst_grid = -np.inf
    for case_id in IDS:
        inst = instance(case_id)
        if inst.kind != "shrinking" or inst.n < 3:
            continue
        diag = spectral_diagnostics(inst, grid40(case_id))
        if np.any(diag.scal <= 0):
            continue
        worst_grid = max(worst_grid, float(np.max(phi_diagnostic(diag, inst.n)["phi"])))
    branch = 0.0
    for n in range(3, 8):
        for c in (0.25, 1.0, 7.0):
            branch = max(branch, abs(float(phi_from_eigenvalues(np.full(n, c)))))
            branch = max(branch, abs(float(phi_from_eigenvalues(np.r_[0.0, np.full(n - 1, c)]))))
    passed = worst_random <= 1e-12 and worst_grid <= 1e-12 and branch == 0.0
    verdict(5, "phi nonpositivity and vanishing branches", passed,
            f"max phi: random tuples {worst_random:.2e}, shrinking grids {worst_grid:.2e}; branch |phi| {branch:.1e}")


def test_criterion_6_classification(verdict):
    wrong = []
    for case_id in IDS:
        grid = SampleGrid.sample(instance(case_id).metric, 20, seed=0)
        label = classify(instance(case_id), grid).label
        scaled = classify(instance(case_id).scaled(2.0), grid).label
        if label != EXPECTED[case_id] or scaled != label:
            wrong.append(f"{case_id}: {label}/{scaled}")
    for case_id in ("gaussian3", "sphere3", "cylinder3"):
        bad = perturb_potential(instance(case_id), 0.01)
        label = classify(bad, SampleGrid.sample(bad.metric, 20, seed=0)).label
        if label != ModelClass.INCONCLUSIVE:
            wrong.append(f"perturbed {case_id}: {label}")
    verdict(6, "classification, negative controls, scale invariance", not wrong,
            f"{len(IDS)} catalog models, 3 perturbed controls, g -> 2g; mismatches: {wrong or 'none'}")


def test_criterion_7_f_volume(verdict):
    errors = {}
    for n, res in ((1, 400), (2, 400), (3, 60)):
        lam = 0.5
        est = f_volume_estimate(build_model("gaussian", {"n": n, "lam": lam}), [[-10, 10]] * n, res)
        errors[n] = math.inf if est.value is None else abs(est.value - (2 * math.pi / lam) ** (n / 2))
    worst = max(errors.values())
    verdict(7, "Gaussian f-volume (2 pi / lam)^(n/2)", worst < 1e-4,
            "abs errors " + ", ".join(f"n={n}: {e:.1e}" for n, e in errors.items()) + " (< 1e-4)")


def test_criterion_8_warped_products(verdict):
    worst_mu = 0.0
    detected = []
    import jax
    import jax.numpy as jnp

    from gradsoliton.models import WARP_PROFILES

    for m in warped_catalog():
        grid = SampleGrid.sample(m, 20, seed=0)
        det = detect_warped_product(m, grid)
        fpp = np.asarray(jax.vmap(jax.grad(WARP_PROFILES[m.name.split("-")[1]].h))(jnp.asarray(grid.points[:, 0])))
        worst_mu = max(worst_mu, float(np.max(np.abs(det.mu_values - fpp))))
        detected.append(det.is_warped)
    cigar = instance("cigar")
    grid = grid40("cigar")
    det = detect_warped_product(cigar, grid)
    r = np.arcsinh(np.linalg.norm(grid.points, axis=1))
    worst_mu = max(worst_mu, float(np.max(np.abs(det.mu_values + 2 / np.cosh(r) ** 2))))
    detected.append(det.is_warped)
    gauss = detect_warped_product(instance("gaussian3"), grid40("gaussian3"))
    worst_mu = max(worst_mu, float(np.max(np.abs(gauss.mu_values - 0.5))))
    detected.append(gauss.is_warped)
    r_grid = np.linspace(0.1, 3.0, 50)
    ode_cigar = surface_soliton_residual(warped_spec("cigar", 1), cigar_radial_potential, 0.0, r_grid)
    ode_sphere = surface_soliton_residual(warped_spec("sphere", 1), lambda s: 0.0 * s, 1.0, r_grid)
    control = surface_soliton_residual(warped_spec("cigar", 1), cigar_radial_potential, 1.0, r_grid)
    passed = (all(detected) and worst_mu < 1e-7 and ode_cigar.max_residual < 1e-9
              and ode_sphere.max_residual < 1e-9 and not control.verdict)
    verdict(8, "warped-product detection and surface soliton ODE", passed,
            f"{sum(detected)}/{len(detected)} detected, max |mu - f''| {worst_mu:.1e}; ODE cigar "
            f"{ode_cigar.max_residual:.1e}, S^2 {ode_sphere.max_residual:.1e}; wrong-lambda control "
            f"{control.max_residual:.2f} ({'fails' if not control.verdict else 'passes'})")


def test_criterion_9_negative_control(verdict, tmp_path):
    manifest = tmp_path / "perturbed.yaml"
    manifest.write_text(textwrap.dedent("""
        schema_version: "1"
        suites: [identities, elliptic, spectra, classify, volume]
        grid: {seed: 0, count: 20}
        models:
          - id: perturbed-gaussian
            builder: gaussian
            params: {n: 3, lam: 0.5}
            perturb: 0.01
    """))
    out = tmp_path / "report.yaml"
    proc = subprocess.run([sys.executable, "-m", "gradsoliton", "verify", str(manifest), "--out", str(out)],
                          capture_output=True, text=True, timeout=600)
    report = yaml.safe_load(out.read_text())
    statuses = {k: v["status"] for k, v in report["models"][0]["suites"].items()}
    passed = (proc.returncode == 1 and "soliton-residual-failed" in proc.stderr
              and len(statuses) == 5 and all(s != "pass" for s in statuses.values()))
    verdict(9, "every suite fails on the +0.01 x1^3 Gaussian perturbation", passed,
            f"exit {proc.returncode}, suite statuses {statuses}")
