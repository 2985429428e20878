"""Spectral and classification diagnostics for soliton grids."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from .bivector import _structure_constants, tensor_to_matrix, weyl_arrays
from .chart import STENCIL_STEP, MetricFamily, _correct
from .errors import ContractViolation, HypothesisViolated, NotApplicable, UnsupportedDimensionError
from .grid import ResidualReport, SampleGrid
from .labels import ModelClass
from .local import to_frame
from .models import SolitonInstance

ZERO_REL = 1e-7
EQUAL_REL = 1e-6
CLUSTER_TOL = 1e-8
SCAL_VARIANCE_TOL = 1e-10
SOLITON_TOL = 1e-8
SIMPLE_MARGIN = 1e-4


def _metric(model) -> MetricFamily:
    return model.metric if isinstance(model, SolitonInstance) else model


@dataclass(frozen=True, eq=False)
class SpectralDiagnostics:
    points: np.ndarray
    ricci_eigenvalues: np.ndarray
    curvop_eigenvalues: np.ndarray
    scal: np.ndarray
    cauchy_schwarz_gap: np.ndarray
    ricci_norm_sq: np.ndarray
    weyl_norm: np.ndarray
    grad_f_norm: np.ndarray
    f: np.ndarray
    lam: float
    soliton_residual: np.ndarray

    @property
    def n(self) -> int:
        return self.ricci_eigenvalues.shape[1]

    def summary(self) -> dict:
        return {
            "ricci_eigenvalues_min": float(np.min(self.ricci_eigenvalues)),
            "ricci_eigenvalues_max": float(np.max(self.ricci_eigenvalues)),
            "curvop_eigenvalues_min": float(np.min(self.curvop_eigenvalues)),
            "curvop_eigenvalues_max": float(np.max(self.curvop_eigenvalues)),
            "scal_min": float(np.min(self.scal)),
            "scal_max": float(np.max(self.scal)),
            "cauchy_schwarz_gap_min": float(np.min(self.cauchy_schwarz_gap)),
            "weyl_norm_max": float(np.max(self.weyl_norm)),
            "soliton_residual_max": float(np.max(self.soliton_residual)),
        }


def spectral_diagnostics(model, grid: SampleGrid) -> SpectralDiagnostics:
    m = _metric(model)
    geo = m.geometry(grid.points, order=2)
    n = m.n
    ric = geo.frame_components(geo.ricci, 2)
    R = geo.frame_components(geo.riemann, 4)
    rho = np.linalg.eigvalsh(ric)
    ops = np.stack([tensor_to_matrix(r) for r in R])
    lam_op = np.linalg.eigvalsh(0.5 * (ops + np.swapaxes(ops, 1, 2)))
    ric_sq = np.sum(ric**2, axis=(1, 2))
    scal = geo.scal
    gap = ric_sq - scal**2 / (n - 1) if n > 1 else np.zeros_like(scal)
    if n >= 3:
        W, _ = weyl_arrays(R, ric, scal, np.broadcast_to(np.eye(n), ric.shape))
        wnorm = np.sqrt(np.sum(W.reshape(len(W), -1) ** 2, axis=1))
    else:
        wnorm = np.zeros(len(scal))
    grad = np.sqrt(np.einsum("pi,pi->p", geo.df, geo.grad_f))
    return SpectralDiagnostics(
        grid.points, rho, lam_op, scal, gap, ric_sq, wnorm, grad, geo.f, m.lam, geo.soliton_residual()
    )


# --------------------------------------------------------------------------
# phi


def phi_from_eigenvalues(rho: np.ndarray, n: int | None = None) -> np.ndarray:
    """phi for sorted Ricci eigenvalues (last axis), scal = their sum."""
    rho = np.sort(np.asarray(rho, dtype=float), axis=-1)
    n = rho.shape[-1] if n is None else n
    scal = np.sum(rho, axis=-1)
    r1 = rho[..., 0]
    rest = rho[..., 1:]
    variance_part = (n - 1) * np.sum(rest**2, axis=-1) - np.sum(rest, axis=-1) ** 2
    first = r1**2 * (n * r1 - scal) / ((n - 1) * scal**2)
    second = ((n - 2) * r1 - scal) * variance_part / ((n - 1) * (n - 2) * scal**2)
    return first + second


def phi_diagnostic(diag: SpectralDiagnostics, n: int) -> dict[str, np.ndarray]:
    """phi and the weight h = f - log(scal^2) per point."""
    if n < 3:
        raise UnsupportedDimensionError("phi needs n >= 3")
    if np.any(diag.scal <= 0):
        raise NotApplicable("phi needs scal > 0 at every point")
    return {
        "phi": phi_from_eigenvalues(diag.ricci_eigenvalues, n),
        "h_weight": diag.f - np.log(diag.scal**2),
    }


# --------------------------------------------------------------------------
# K form


def _frame_at(m: MetricFamily, x) -> tuple[np.ndarray, object]:
    x = m.chart.require_valid(x)
    geo = m.geometry(np.asarray(x, dtype=float)[None], order=2)
    return x, geo


def _unit_direction(geo, direction) -> np.ndarray:
    Y = np.asarray(direction, dtype=float)
    if Y.shape != (geo.n,):
        raise ContractViolation("direction must have one component per coordinate")
    length = float(np.sqrt(Y @ geo.g[0] @ Y))
    if length < 1e-12:
        raise ContractViolation("direction must be nonzero")
    if abs(length - 1.0) > 1e-8:
        raise ContractViolation(f"direction must be g-unit (|Y| = {length:.6g})")
    return np.linalg.solve(geo.frame[0], Y)  # frame components


def k_quadratic_form(model, x, direction) -> float:
    """g(K(Y), Y) = sum_i R(Y, E_i, Ric(E_i), Y) for a g-unit coordinate vector Y."""
    m = _metric(model)
    _, geo = _frame_at(m, x)
    y = _unit_direction(geo, direction)
    R = geo.frame_components(geo.riemann, 4)[0]
    ric = geo.frame_components(geo.ricci, 2)[0]
    return float(np.einsum("a,aijb,ij,b->", y, R, ric, y))


def k_quadratic_form_eigenbasis(model, x, direction) -> float:
    """The same form as sum_i rho_i R(Y, e_i, e_i, Y) over a Ricci eigenbasis e_i."""
    m = _metric(model)
    _, geo = _frame_at(m, x)
    y = _unit_direction(geo, direction)
    R = geo.frame_components(geo.riemann, 4)[0]
    rho, vecs = np.linalg.eigh(geo.frame_components(geo.ricci, 2)[0])
    sec = np.einsum("a,aijb,ik,jk,b->k", y, R, vecs, vecs, y)
    return float(np.sum(rho * sec))


# --------------------------------------------------------------------------
# second curvature-operator eigenvalue


@dataclass(frozen=True)
class EigenAudit:
    lambda1: float
    lambda2: float
    restricted_sum: float
    sharp_diagonal: float
    degenerate: bool
    audit: str


def operator_eigen_audit(M: np.ndarray, n: int, soliton: bool = True, shrinking: bool = True) -> EigenAudit:
    """lambda_1, lambda_2 and sum_{a,b} (C_{1ab})^2 lambda_a lambda_b in an eigenbasis of M.

    When the lowest eigenvalue is repeated (within 1e-8) the sum is averaged
    over its eigenspace, which makes it basis independent, and ``degenerate``
    is set. The audit is "skipped" unless the input is a shrinking soliton with
    lambda_2 >= 0.
    """
    vals, vecs = np.linalg.eigh(0.5 * (M + M.T))
    C = _structure_constants(n)
    Ce = np.einsum("abc,ai,bj,ck->ijk", C, vecs, vecs, vecs)
    cluster = np.flatnonzero(vals - vals[0] <= CLUSTER_TOL)
    sums = [float(np.einsum("ab,a,b->", Ce[g] ** 2, vals, vals)) for g in cluster]
    restricted = float(np.mean(sums))
    l1 = float(vals[0])
    l2 = float(vals[1]) if len(vals) > 1 else l1
    if not (soliton and shrinking) or l2 < -1e-9:
        audit = "skipped"
    else:
        audit = "pass" if l1 >= -1e-9 else "fail"
    return EigenAudit(l1, l2, restricted, 0.5 * restricted, len(cluster) > 1, audit)


def second_eigenvalue_check(model, grid: SampleGrid) -> list[EigenAudit]:
    m = _metric(model)
    if m.lam <= 0:
        raise NotApplicable("the second-eigenvalue audit is for shrinking solitons")
    geo = m.geometry(grid.points, order=2)
    is_soliton = bool(np.max(geo.soliton_residual()) < SOLITON_TOL)
    R = geo.frame_components(geo.riemann, 4)
    return [operator_eigen_audit(tensor_to_matrix(r), m.n, soliton=is_soliton) for r in R]


# --------------------------------------------------------------------------
# batched stencils for numerically defined fields


def _stencil(batch_fn, points: np.ndarray, step: float, second: bool):
    """Richardson central differences of a batched field x -> values (p, ...)."""
    p, n = points.shape
    offsets = [np.zeros(n)]
    for h in (step, 2 * step):
        for a in range(n):
            for s in (1, -1):
                e = np.zeros(n)
                e[a] = s * h
                offsets.append(e)
        if second:
            for a in range(n):
                for b in range(a + 1, n):
                    for sa in (1, -1):
                        for sb in (1, -1):
                            e = np.zeros(n)
                            e[a], e[b] = sa * h, sb * h
                            offsets.append(e)
    offsets = np.array(offsets)
    all_pts = (points[:, None, :] + offsets[None]).reshape(-1, n)
    vals = batch_fn(all_pts)
    vals = vals.reshape((p, len(offsets)) + vals.shape[1:])
    index = {tuple(np.round(o / step, 6)): i for i, o in enumerate(offsets)}

    def at(*pairs):
        key = np.zeros(n)
        for a, c in pairs:
            key[a] = c
        return vals[:, index[tuple(np.round(key, 6))]]

    f0 = vals[:, 0]

    def d1(k):
        return np.stack([(at((a, k)) - at((a, -k))) / (2 * k * step) for a in range(n)], axis=1)

    first = (4 * d1(1) - d1(2)) / 3
    if not second:
        return f0, first, None

    def d2(k):
        h = k * step
        out = np.zeros((p, n, n) + f0.shape[1:])
        for a in range(n):
            out[:, a, a] = (at((a, k)) - 2 * f0 + at((a, -k))) / h**2
            for b in range(a + 1, n):
                v = (at((a, k), (b, k)) - at((a, k), (b, -k)) - at((a, -k), (b, k)) + at((a, -k), (b, -k))) / (
                    4 * h**2
                )
                out[:, a, b] = out[:, b, a] = v
        return out

    return f0, first, (4 * d2(1) - d2(2)) / 3


def _ricci_spectrum(m: MetricFamily, pts: np.ndarray):
    geo = m.geometry(pts, order=2, check=False)
    out_vals, out_vecs = [], []
    for ric, g in zip(geo.ricci, geo.g):
        vals, vecs = scipy.linalg.eigh(ric, g)
        out_vals.append(vals)
        out_vecs.append(vecs)
    return geo, np.array(out_vals), np.array(out_vecs)


# --------------------------------------------------------------------------
# kernel parallelism


def kernel_parallelism_check(model, grid: SampleGrid, tolerance: float = 1e-5) -> ResidualReport:
    """|nabla P| for the g-orthogonal projector P onto ker Ric (constant rank required)."""
    m = _metric(model)
    geo, rho, _ = _ricci_spectrum(m, grid.points)
    scale = max(float(np.max(np.abs(rho))), abs(m.lam), 1e-300)
    zero = np.abs(rho) <= ZERO_REL * scale
    nonzero_ok = np.all(np.abs(rho[~zero]) > EQUAL_REL * scale)
    ranks = zero.sum(axis=1)
    if np.any(ranks != ranks[0]) or not nonzero_ok:
        raise HypothesisViolated("the Ricci kernel does not have constant rank on the grid")
    rank = int(ranks[0])
    if rank == 0:
        raise HypothesisViolated("Ric has no zero eigenvalue on the grid")

    def projector(pts):
        g_all, vals, vecs = _ricci_spectrum(m, pts)
        out = []
        for g, v, V in zip(g_all.g, vals, vecs):
            K = V[:, np.argsort(np.abs(v))[:rank]]
            GK = g @ K
            out.append(GK @ GK.T)
        return np.array(out)

    P, dP, _ = _stencil(projector, grid.points, STENCIL_STEP, second=False)
    nabla = np.stack([dP[i] - _correct(geo.gamma[i], P[i]) for i in range(len(P))])
    norms = np.sqrt(np.sum(to_frame(nabla, geo.frame, 3).reshape(len(P), -1) ** 2, axis=1))
    return ResidualReport.build("kernel-parallelism", grid.points, norms, tolerance, f"kernel rank {rank}")


# --------------------------------------------------------------------------
# constant scalar curvature


@dataclass(frozen=True)
class ConstantScalReport:
    scal_mean: float
    scal_variance: float
    constant: bool
    bounds_ok: bool | None
    ricci_identity_residual: float | None
    endpoint: str | None

    def to_dict(self) -> dict:
        return {
            "scal_mean": self.scal_mean,
            "scal_variance": self.scal_variance,
            "constant": self.constant,
            "bounds_ok": self.bounds_ok,
            "ricci_identity_residual": self.ricci_identity_residual,
            "endpoint": self.endpoint,
        }


def constant_scal_diagnostics(model, grid: SampleGrid) -> ConstantScalReport:
    """If scal is constant: 0 <= scal <= n lam (reversed for expanders), |Ric|^2 = lam scal, endpoints."""
    d = spectral_diagnostics(model, grid)
    n, lam = d.n, d.lam
    var = float(np.var(d.scal))
    mean = float(np.mean(d.scal))
    if not var < SCAL_VARIANCE_TOL:
        return ConstantScalReport(mean, var, False, None, None, None)
    lo, hi = sorted((0.0, n * lam))
    slack = 1e-9 * max(1.0, abs(n * lam))
    bounds_ok = bool(np.all(d.scal >= lo - slack) and np.all(d.scal <= hi + slack))
    ident = float(np.max(np.abs(d.ricci_norm_sq - lam * d.scal)))
    endpoint = None
    if abs(mean) <= slack:
        endpoint = "flat"
    elif abs(mean - n * lam) <= slack:
        endpoint = "Einstein"
    return ConstantScalReport(mean, var, True, bounds_ok, ident, endpoint)


# --------------------------------------------------------------------------
# report-only fields


def rho_ratio_report(model, grid: SampleGrid) -> dict:
    """Delta_h(rho_1 / scal) against 2 phi, only where rho_1 is simple with margin 1e-4."""
    m = _metric(model)
    n = m.n
    if n < 3:
        raise UnsupportedDimensionError("phi needs n >= 3")
    geo, rho, _ = _ricci_spectrum(m, grid.points)
    scal = geo.scal
    simple = (rho[:, 1] - rho[:, 0] > SIMPLE_MARGIN) & (scal > 0)
    pts = grid.points[simple]
    result = {
        "evaluated": int(simple.sum()),
        "skipped_points": [list(map(float, x)) for x in grid.points[~simple]],
        "lhs": [],
        "two_phi": [],
        "holds": [],
    }
    if not len(pts):
        return result
    geo_s = m.geometry(pts, order=3, check=False)

    def ratio(q):
        g2, vals, _ = _ricci_spectrum(m, q)
        return vals[:, 0] / g2.scal

    u, du, ddu = _stencil(ratio, pts, STENCIL_STEP, second=True)
    hess = ddu - np.einsum("pkab,pk->pab", geo_s.gamma, du)
    lap = np.einsum("pab,pab->p", geo_s.ginv, hess)
    dh = geo_s.df - 2 * geo_s.d_scal / geo_s.scal[:, None]
    lhs = lap - np.einsum("pab,pa,pb->p", geo_s.ginv, dh, du)
    two_phi = 2 * phi_from_eigenvalues(rho[simple], n)
    result["lhs"] = lhs.tolist()
    result["two_phi"] = two_phi.tolist()
    result["holds"] = (lhs <= two_phi + 1e-6).tolist()
    return result


def weyl_decay_ratio(model, grid: SampleGrid) -> dict:
    """|W(grad f, ., ., grad f)| / |grad f|^2 per point and at the outermost grid point."""
    m = _metric(model)
    if m.n < 3:
        raise UnsupportedDimensionError("the Weyl tensor needs dimension >= 3")
    geo = m.geometry(grid.points, order=2)
    W, _ = weyl_arrays(geo.riemann, geo.ricci, geo.scal, geo.g)
    WF = np.einsum("pa,pabcd,pd->pbc", geo.grad_f, W, geo.grad_f)
    F2 = np.einsum("pi,pi->p", geo.df, geo.grad_f)
    norm = np.sqrt(np.sum(to_frame(WF, geo.frame, 2).reshape(len(F2), -1) ** 2, axis=1))
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.where(F2 > 1e-24, norm / F2, np.nan)
    radial = m.chart.radial or (lambda x: float(np.linalg.norm(x)))
    outer = int(np.argmax([radial(x) for x in grid.points]))
    return {"ratio": ratio, "boundary_point": grid.points[outer], "boundary_ratio": float(ratio[outer])}


# --------------------------------------------------------------------------
# classification


@dataclass(frozen=True)
class Evidence:
    diagnostic: str
    value: float
    threshold: float
    passed: bool

    def to_dict(self) -> dict:
        return {"diagnostic": self.diagnostic, "value": self.value, "threshold": self.threshold, "passed": self.passed}


@dataclass(frozen=True)
class ClassificationResult:
    label: ModelClass
    evidence: list[Evidence] = field(default_factory=list)
    scope: str = "per-grid diagnosis"

    def to_dict(self) -> dict:
        return {"label": str(self.label), "scope": self.scope, "evidence": [e.to_dict() for e in self.evidence]}


def _ev(name: str, value: float, threshold: float, below: bool = True) -> Evidence:
    value = float(value)
    passed = value <= threshold if below else value > threshold
    return Evidence(name, value, float(threshold), bool(passed))


def classify(model, grid: SampleGrid) -> ClassificationResult:
    """Decision tree over grid diagnostics; never a confident label on failed evidence."""
    d = spectral_diagnostics(model, grid)
    n, lam = d.n, d.lam
    trail: list[Evidence] = []

    residual = _ev("soliton-residual", np.max(d.soliton_residual), SOLITON_TOL)
    if not residual.passed:
        return ClassificationResult(ModelClass.INCONCLUSIVE, [residual])

    rho = d.ricci_eigenvalues
    scale = max(float(np.max(np.abs(rho))), float(np.max(np.abs(d.curvop_eigenvalues))), abs(lam))
    if scale == 0.0:
        scale = 1.0
    zero_tol = ZERO_REL * scale
    eq_tol = EQUAL_REL * scale

    curv = _ev("max |curvature operator eigenvalue|", np.max(np.abs(d.curvop_eigenvalues)), zero_tol)
    if curv.passed:
        return ClassificationResult(ModelClass.FLAT, [residual, curv])
    trail.append(curv)

    weyl = _ev("max |W|", np.max(d.weyl_norm), zero_tol)
    conformally_flat = n <= 3 or weyl.passed
    spread = _ev("max Ricci eigenvalue spread", np.max(rho[:, -1] - rho[:, 0]), eq_tol)
    if spread.passed:
        if not conformally_flat:
            return ClassificationResult(ModelClass.EINSTEIN_OTHER, [residual, spread, _ev("max |W|", weyl.value, zero_tol, below=False)])
        cited = [residual, spread] + ([weyl] if n > 3 else [])
        sign = float(np.mean(rho))
        if sign > 0 and lam > 0:
            return ClassificationResult(ModelClass.SPHERE_EINSTEIN, cited + [_ev("lambda", lam, 0.0, below=False)])
        if sign < 0 and lam < 0:
            return ClassificationResult(ModelClass.HYPERBOLIC_EINSTEIN, cited + [_ev("-lambda", -lam, 0.0, below=False)])
        trail.append(_ev("Einstein constant agrees in sign with lambda", 0.0, 0.0, below=False))
    trail.append(spread)

    scal_var = _ev("scal variance", np.var(d.scal), SCAL_VARIANCE_TOL * scale**2)
    if not scal_var.passed:
        return ClassificationResult(ModelClass.INCONCLUSIVE, [residual] + trail + [scal_var])

    zero = np.abs(rho) <= zero_tol
    k = zero.sum(axis=1)
    const_rank = bool(np.all(k == k[0]))
    k0 = int(k[0])
    if const_rank and k0 == 1 and n >= 3:
        others = np.where(zero, np.nan, rho)
        rest_spread = np.nanmax(others, axis=1) - np.nanmin(others, axis=1)
        target = d.scal / (n - 1)
        rest_err = np.nanmax(np.abs(others - target[:, None]), axis=1)
        cited = [
            residual,
            scal_var,
            _ev("kernel dimension of Ric", 1.0, 1.0),
            _ev("spread of nonzero Ricci eigenvalues", np.max(rest_spread), eq_tol),
            _ev("max |rho_j - scal/(n-1)|", np.max(rest_err), eq_tol),
        ]
        if n > 3:
            cited.append(weyl)
        if all(e.passed for e in cited):
            if lam > 0 and np.all(target > 0):
                return ClassificationResult(ModelClass.SPHERE_SPLIT, cited)
            if lam < 0 and np.all(target < 0):
                return ClassificationResult(ModelClass.HYPERBOLIC_SPLIT, cited)
        trail.extend(cited[2:])

    if const_rank and 1 <= k0 < n and lam != 0.0:
        off = np.min(np.stack([np.abs(rho), np.abs(rho - lam)]), axis=0)
        rigid = _ev("max distance of Ricci eigenvalues from {0, lambda}", np.max(off), eq_tol)
        if rigid.passed:
            return ClassificationResult(
                ModelClass.RIGID, [residual, scal_var, _ev("kernel dimension of Ric", float(k0), float(n - 1)), rigid]
            )
        trail.append(rigid)
    return ClassificationResult(ModelClass.INCONCLUSIVE, [residual] + trail)
