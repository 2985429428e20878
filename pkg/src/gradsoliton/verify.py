"""Grid verification of the pointwise and elliptic soliton identities.

All residuals are Frobenius norms of (left side - right side) in the
g-orthonormal frame at each point, so reports do not depend on coordinates.
"""

from __future__ import annotations

from typing import Iterable

import numpy as np

from .bivector import sharp_from_b, sharp_matrix, square_from_riemann, tensor_to_matrix, weyl_arrays
from .errors import SolitonResidualFailed, UnsupportedDimensionError
from .grid import ResidualReport, SampleGrid
from .local import LocalGeometry
from .models import SolitonInstance

TOL_ALGEBRAIC = 1e-8
TOL_ELLIPTIC = 1e-5
SOLITON_TOL = 1e-8

POINTWISE_IDS = (
    "scal-gradient",
    "ricci-curl",
    "ricci-along-grad-f",
    "riemann-divergence",
    "auxiliary-constant",
)
ELLIPTIC_IDS = {
    "curv_op": "elliptic-curvature-operator",
    "ricci": "elliptic-ricci",
    "scalar": "elliptic-scalar",
    "radial": "elliptic-radial-ricci",
    "weyl_ricci": "elliptic-weyl-ricci",
}


def _norm(T: np.ndarray) -> np.ndarray:
    return np.sqrt(np.sum(T.reshape(T.shape[0], -1) ** 2, axis=1))


class FrameData:
    """Frame components of everything the identities need, computed once per grid."""

    def __init__(self, geo: LocalGeometry):
        self.geo = geo
        fr = geo.frame_components
        self.n = geo.n
        self.lam = geo.lam
        self.R = fr(geo.riemann, 4)
        self.ric = fr(geo.ricci, 2)
        self.scal = geo.scal
        self.F = fr(geo.df, 1)
        self.H = fr(geo.hess_f, 2)
        self.f = geo.f
        if geo.order >= 3:
            self.dR = fr(geo.d_riemann, 5)
            self.dric = fr(geo.d_ricci, 3)
            self.dscal = fr(geo.d_scal, 1)
            self.dH = fr(geo.d_hess_f, 3)
        if geo.order >= 4:
            self.ddR = fr(geo.dd_riemann, 6)
            self.ddric = fr(geo.dd_ricci, 4)
            self.hess_scal = fr(geo.hess_scal, 2)

    def f_laplacian(self, first: np.ndarray, second: np.ndarray) -> np.ndarray:
        """Delta_f from frame components of nabla T and nabla^2 T (derivative slots first)."""
        return np.einsum("paa...->p...", second) - np.einsum("pa,pa...->p...", self.F, first)


def _geometry(inst: SolitonInstance | object, grid: SampleGrid, order: int, require_soliton: bool,
              soliton_tol: float = SOLITON_TOL) -> FrameData:
    metric = inst.metric if isinstance(inst, SolitonInstance) else inst
    geo = metric.geometry(grid.points, order=order)
    if require_soliton:
        worst = float(np.max(geo.soliton_residual()))
        if not worst < soliton_tol:
            raise SolitonResidualFailed(worst, soliton_tol)
    return FrameData(geo)


# --------------------------------------------------------------------------
# pointwise identities


def pointwise_residuals(d: FrameData) -> dict[str, np.ndarray]:
    div_ric = np.einsum("paab->pb", d.dric)
    ric_F = np.einsum("pbc,pc->pb", d.ric, d.F)
    eq1 = np.maximum(_norm(d.dscal - 2 * div_ric), _norm(d.dscal - 2 * ric_F))

    R_xyFz = np.einsum("pxyfz,pf->pxyz", d.R, d.F)
    curl = d.dric - np.einsum("pyxz->pxyz", d.dric)
    eq2 = _norm(curl + R_xyFz)

    nabla_F_ric = np.einsum("pa,payz->pyz", d.F, d.dric)
    ric2 = np.einsum("pya,paz->pyz", d.ric, d.ric)
    R_yFFz = np.einsum("pyabz,pa,pb->pyz", d.R, d.F, d.F)
    eq3 = _norm(nabla_F_ric + d.lam * d.ric - ric2 - R_yFFz - 0.5 * d.hess_scal)

    div_R = np.einsum("paaxyz->pxyz", d.dR)
    R_Fxyz = np.einsum("pa,paxyz->pxyz", d.F, d.R)
    eq4 = _norm(div_R - R_Fxyz)

    aux_value = d.scal + np.sum(d.F**2, axis=1) - 2 * d.lam * d.f
    aux = np.abs(aux_value - np.mean(aux_value))
    return dict(zip(POINTWISE_IDS, (eq1, eq2, eq3, eq4, aux)))


def verify_pointwise_identities(inst: SolitonInstance, grid: SampleGrid, tolerance: float = TOL_ALGEBRAIC,
                                require_soliton: bool = True) -> list[ResidualReport]:
    """One report per identity; refuses (SolitonResidualFailed) if the input is not a soliton."""
    d = _geometry(inst, grid, 4, require_soliton)
    res = pointwise_residuals(d)
    notes = {"auxiliary-constant": "deviation from the grid mean of scal + |grad f|^2 - 2 lam f"}
    return [ResidualReport.build(k, grid.points, v, tolerance, notes.get(k, "")) for k, v in res.items()]


# --------------------------------------------------------------------------
# elliptic equations


def _sum_R_ric(R: np.ndarray, ric: np.ndarray) -> np.ndarray:
    """sum_i R(y, E_i, Ric(E_i), z) in frame components."""
    return np.einsum("pyijz,pij->pyz", R, ric)


def _curvature_rhs_tensor(d: FrameData) -> np.ndarray:
    R = d.R
    sq = np.stack([square_from_riemann(r) for r in R])
    sh = np.stack([sharp_from_b(r) for r in R])
    return 2 * d.lam * R - 2 * (sq + sh)


def elliptic_residuals(d: FrameData, which: Iterable[str]) -> dict[str, np.ndarray]:
    n, lam = d.n, d.lam
    out = {}
    which = list(which)
    if "curv_op" in which:
        lhs = d.f_laplacian(d.dR, d.ddR)
        res = []
        for p in range(lhs.shape[0]):
            M = tensor_to_matrix(d.R[p])
            rhs = 2 * lam * M - 2 * (M @ M + sharp_matrix(M, n))
            res.append(np.linalg.norm(tensor_to_matrix(lhs[p]) - rhs))
        out["curv_op"] = np.array(res)
    if "ricci" in which:
        lhs = d.f_laplacian(d.dric, d.ddric)
        rhs = 2 * lam * d.ric - 2 * _sum_R_ric(d.R, d.ric)
        out["ricci"] = _norm(lhs - rhs)
    if "scalar" in which:
        lhs = np.einsum("paa->p", d.hess_scal) - np.einsum("pa,pa->p", d.F, d.dscal)
        rhs = 2 * lam * d.scal - 2 * np.sum(d.ric**2, axis=(1, 2))
        out["scalar"] = np.abs(lhs - rhs)
    if "radial" in which:
        lhs, parts = radial_lhs(d)
        rhs = (
            4 * lam * parts["q"]
            - 2 * parts["D_F_ric_sq"]
            + 2 * np.einsum("pab,pac,pbc->p", d.ric, d.H, d.H)
            + 2 * np.einsum("pa,pabcd,pbc,pd->p", d.F, d.R, d.ric, d.F)
        )
        out["radial"] = np.abs(lhs - rhs)
    if "weyl_ricci" in which:
        if n < 3:
            raise UnsupportedDimensionError("the Weyl-decomposed Ricci equation needs n >= 3")
        out["weyl_ricci"] = weyl_ricci_residual(d)
    return out


def radial_lhs(d: FrameData) -> tuple[np.ndarray, dict]:
    """Delta_f of q = Ric(grad f, grad f) by the product rule from exact jets."""
    F, H, ric = d.F, d.H, d.ric
    q = np.einsum("pab,pa,pb->p", ric, F, F)
    # nabla_a q = (nabla_a Ric)(F, F) + 2 Ric(H_a, F)
    grad_q = np.einsum("pacd,pc,pd->pa", d.dric, F, F) + 2 * np.einsum("pac,pcd,pd->pa", H, ric, F)
    lap = (
        np.einsum("paacd,pc,pd->p", d.ddric, F, F)
        + 4 * np.einsum("pacd,pac,pd->p", d.dric, H, F)
        + 2 * np.einsum("paac,pcd,pd->p", d.dH, ric, F)
        + 2 * np.einsum("pac,pcd,pad->p", H, ric, H)
    )
    lhs = lap - np.einsum("pa,pa->p", F, grad_q)
    D_F_ric_sq = 2 * np.einsum("pa,pabc,pbc->p", F, d.dric, ric)
    return lhs, {"q": q, "grad_q": grad_q, "D_F_ric_sq": D_F_ric_sq}


def weyl_ricci_residual(d: FrameData) -> np.ndarray:
    """Both Weyl-decomposed forms; the Weyl terms carry the factor 2 of the full equation."""
    n, lam = d.n, d.lam
    eye = np.eye(n)
    g = np.broadcast_to(eye, d.ric.shape)
    W, _ = weyl_arrays(d.R, d.ric, d.scal, g)
    ric_sq = np.sum(d.ric**2, axis=(1, 2))
    gap = ric_sq - d.scal**2 / (n - 1)
    ric2 = np.einsum("pya,paz->pyz", d.ric, d.ric)
    c = 2 * n * d.scal / ((n - 1) * (n - 2))

    lhs = d.f_laplacian(d.dric, d.ddric)
    rhs = (
        2 * lam * d.ric
        - c[:, None, None] * d.ric
        + 4 / (n - 2) * ric2
        - 2 / (n - 2) * gap[:, None, None] * eye
        - 2 * _sum_R_ric(W, d.ric)
    )
    form_tensor = _norm(lhs - rhs)

    F = d.F
    lhs_r, parts = radial_lhs(d)  # equals (1/2) Delta_f (D_F scal) on a soliton
    d_f_lap_scal = 2 * lam * np.einsum("pa,pa->p", F, d.dscal) - 2 * parts["D_F_ric_sq"]
    rhs_r = (
        d_f_lap_scal
        + 2 * np.einsum("pab,pac,pbc->p", d.ric, d.H, d.H)
        + c * parts["q"]
        - 4 / (n - 2) * np.einsum("pa,pab,pbc,pc->p", F, d.ric, d.ric, F)
        + 2 / (n - 2) * gap * np.sum(F**2, axis=1)
        + 2 * np.einsum("pa,pabcd,pbc,pd->p", F, W, d.ric, F)
    )
    return np.maximum(form_tensor, np.abs(lhs_r - rhs_r))


def verify_elliptic_equations(inst: SolitonInstance, grid: SampleGrid,
                              which: Iterable[str] = ("curv_op", "ricci", "scalar", "radial", "weyl_ricci"),
                              tolerance: float = TOL_ELLIPTIC, require_soliton: bool = True,
                              skip_unsupported: bool = False) -> list[ResidualReport]:
    """Residuals of the f-Laplacian equations for R, Ric, scal, Ric(grad f, grad f) and the Weyl form.

    ``skip_unsupported`` drops ``weyl_ricci`` for surfaces instead of raising.
    """
    which = list(which)
    unknown = set(which) - set(ELLIPTIC_IDS)
    if unknown:
        raise ValueError(f"unknown elliptic equation(s) {sorted(unknown)}")
    metric = inst.metric if isinstance(inst, SolitonInstance) else inst
    if "weyl_ricci" in which and metric.n < 3:
        if not skip_unsupported:
            raise UnsupportedDimensionError("the Weyl-decomposed Ricci equation needs n >= 3")
        which.remove("weyl_ricci")
    d = _geometry(inst, grid, 4, require_soliton)
    res = elliptic_residuals(d, which)
    notes = {"curv_op": "residual of the bivector operator matrices"}
    return [ResidualReport.build(ELLIPTIC_IDS[k], grid.points, res[k], tolerance, notes.get(k, "")) for k in which]


def sharp_trace_residuals(d: FrameData) -> np.ndarray:
    rhs4 = _curvature_rhs_tensor(d)
    traced = np.einsum("pyiiz->pyz", rhs4)
    ricci_rhs = 2 * d.lam * d.ric - 2 * _sum_R_ric(d.R, d.ric)
    return _norm(traced - ricci_rhs)


def verify_sharp_trace_consistency(inst: SolitonInstance, grid: SampleGrid, tolerance: float = TOL_ALGEBRAIC,
                                   require_soliton: bool = True) -> ResidualReport:
    """Tracing the right side of the curvature equation reproduces the right side of the Ricci equation."""
    metric = inst.metric if isinstance(inst, SolitonInstance) else inst
    if metric.n < 3:
        raise UnsupportedDimensionError("trace consistency is checked for n >= 3")
    d = _geometry(inst, grid, 2, require_soliton)
    return ResidualReport.build("sharp-trace-consistency", grid.points, sharp_trace_residuals(d), tolerance)


def contracted_bianchi_residual(geo: LocalGeometry) -> np.ndarray:
    """|g^{ae} nabla_a R_bcde - (nabla_b Ric_cd - nabla_c Ric_bd)| per point."""
    d = FrameData(geo)
    lhs = np.einsum("pebcde->pbcd", d.dR)
    rhs = d.dric - np.einsum("pcbd->pbcd", d.dric)
    return _norm(lhs - rhs)
