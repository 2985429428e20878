"""Curvature operator on bivectors, the Lie-algebra square, and Weyl decomposition.

Bivectors E_i ^ E_j (i < j) of a g-orthonormal frame are an orthonormal basis of
the second exterior power, ordered lexicographically. E_i ^ E_j acts as the skew
map v -> <E_i, v> E_j - <E_j, v> E_i, so the inner product is half the trace
form, <A, B> = tr(A^T B) / 2.

The curvature operator matrix has entries
``<R(E_i ^ E_j), E_k ^ E_l> = R(E_i, E_j, E_l, E_k)``, which makes the unit
sphere the identity.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property, lru_cache
from itertools import combinations

import numpy as np

from .chart import MetricFamily, TensorField, _point
from .errors import ContractViolation, UnsupportedDimensionError

CLUSTER_TOL = 1e-8


@dataclass(frozen=True)
class BivectorBasis:
    dimension: int

    @cached_property
    def pairs(self) -> tuple[tuple[int, int], ...]:
        return tuple(combinations(range(self.dimension), 2))

    @property
    def size(self) -> int:
        return len(self.pairs)

    @cached_property
    def matrices(self) -> np.ndarray:
        """Skew matrices phi[alpha] acting on frame components."""
        n = self.dimension
        out = np.zeros((self.size, n, n))
        for a, (i, j) in enumerate(self.pairs):
            out[a, j, i] = 1.0
            out[a, i, j] = -1.0
        return out

    @cached_property
    def structure_constants(self) -> np.ndarray:
        """C[alpha, beta, gamma] = <[phi_alpha, phi_beta], phi_gamma>."""
        return _structure_constants(self.dimension)

    def inner(self, A: np.ndarray, B: np.ndarray) -> float:
        return 0.5 * float(np.sum(A * B))


@lru_cache(maxsize=None)
def _structure_constants(n: int) -> np.ndarray:
    phi = BivectorBasis(n).matrices
    bracket = np.einsum("aij,bjk->abik", phi, phi) - np.einsum("bij,ajk->abik", phi, phi)
    C = 0.5 * np.einsum("abik,cik->abc", bracket, phi)
    C.setflags(write=False)
    return C


@dataclass(frozen=True, eq=False)
class CurvatureOperator:
    matrix: np.ndarray
    spectrum: np.ndarray
    eigenvectors: np.ndarray
    frame: np.ndarray

    @property
    def basis(self) -> BivectorBasis:
        return BivectorBasis(self.frame.shape[0])


def tensor_to_matrix(T: np.ndarray) -> np.ndarray:
    """Reassemble a frame (0,4) tensor as an operator on bivectors: M[(ij),(kl)] = T[i,j,l,k]."""
    n = T.shape[0]
    pairs = BivectorBasis(n).pairs
    idx_i = np.array([p[0] for p in pairs], dtype=int)
    idx_j = np.array([p[1] for p in pairs], dtype=int)
    return T[idx_i[:, None], idx_j[:, None], idx_j[None, :], idx_i[None, :]]


def matrix_to_tensor(M: np.ndarray, n: int) -> np.ndarray:
    """Inverse of :func:`tensor_to_matrix` for operators with pair antisymmetry."""
    T = np.zeros((n, n, n, n))
    for a, (i, j) in enumerate(BivectorBasis(n).pairs):
        for b, (k, l) in enumerate(BivectorBasis(n).pairs):
            v = M[a, b]
            T[i, j, l, k] = v
            T[j, i, l, k] = -v
            T[i, j, k, l] = -v
            T[j, i, k, l] = v
    return T


def _sorted_eigen(M: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    vals, vecs = np.linalg.eigh(0.5 * (M + M.T))
    # deterministic sign: the largest-magnitude component of each eigenvector is positive
    lead = np.argmax(np.abs(vecs), axis=0)
    signs = np.sign(vecs[lead, np.arange(vecs.shape[1])])
    signs[signs == 0] = 1.0
    return vals, vecs * signs


def operator_from_frame_riemann(R: np.ndarray, frame: np.ndarray) -> CurvatureOperator:
    M = tensor_to_matrix(R)
    M = 0.5 * (M + M.T)
    vals, vecs = _sorted_eigen(M)
    return CurvatureOperator(M, vals, vecs, frame)


def curvature_operator(m: MetricFamily, x) -> CurvatureOperator:
    """Curvature operator in the Gram-Schmidt frame of the coordinate vectors."""
    x = _point(m, x)
    geo = m.geometry(x[None], order=2)
    R = geo.frame_components(geo.riemann, 4)[0]
    return operator_from_frame_riemann(R, geo.frame[0])


# --------------------------------------------------------------------------
# R^#


def b_tensor(R: np.ndarray) -> np.ndarray:
    """B(X, Y, W, Z) = -sum_i g(R(X, E_i) Y, R(W, E_i) Z) for a frame (0,4) tensor."""
    return -np.einsum("xiym,wizm->xywz", R, R)


def sharp_from_b(R: np.ndarray) -> np.ndarray:
    """(0,4) form of R^# in frame components, built from the B-tensor.

    Returns B(X, Z, Y, W) - B(X, W, Y, Z), i.e. the sign that makes
    ``tensor_to_matrix`` of the result equal the structure-constant formula and
    the elliptic curvature-operator equation hold; with the opposite sign the
    unit sphere would give -I.
    """
    B = b_tensor(R)
    return np.einsum("xzyw->xyzw", B) - np.einsum("xwyz->xyzw", B)


def sharp_via_B(m: MetricFamily, x) -> TensorField:
    x = _point(m, x)
    geo = m.geometry(x[None], order=2)
    R = geo.frame_components(geo.riemann, 4)[0]
    return TensorField(sharp_from_b(R), "llll", x)


def sharp_matrix(M: np.ndarray, n: int) -> np.ndarray:
    """g(R^#(U), V) = 1/2 sum_{a,b} g([R phi_a, R phi_b], U) g([phi_a, phi_b], V)."""
    C = _structure_constants(n)
    if M.shape != (C.shape[0], C.shape[0]):
        raise ContractViolation("operator size does not match the bivector basis")
    return 0.5 * np.einsum("ma,nb,mnu,abv->uv", M, M, C, C)


def sharp_via_structure_constants(op: CurvatureOperator, basis: BivectorBasis) -> np.ndarray:
    if basis.dimension != op.frame.shape[0] or basis.size != op.matrix.shape[0]:
        raise ContractViolation("curvature operator and bivector basis do not share a frame")
    return sharp_matrix(op.matrix, basis.dimension)


def square_from_riemann(R: np.ndarray) -> np.ndarray:
    """(0,4) form of R^2: 1/2 sum_i g(R(W, Z) E_i, R(X, Y) E_i) at slot (X, Y, Z, W)."""
    return 0.5 * np.einsum("wzim,xyim->xyzw", R, R)


# --------------------------------------------------------------------------
# Kulkarni-Nomizu and Weyl


def kulkarni_nomizu_array(h: np.ndarray, k: np.ndarray) -> np.ndarray:
    """(h o k)_{ijkl} = h_il k_jk + h_jk k_il - h_ik k_jl - h_jl k_ik (batch axes allowed in front)."""
    return (
        np.einsum("...il,...jk->...ijkl", h, k)
        + np.einsum("...jk,...il->...ijkl", h, k)
        - np.einsum("...ik,...jl->...ijkl", h, k)
        - np.einsum("...jl,...ik->...ijkl", h, k)
    )


def kulkarni_nomizu(h: TensorField, k: TensorField) -> TensorField:
    for t in (h, k):
        if t.indices != "ll":
            raise ContractViolation("Kulkarni-Nomizu product takes two (0,2) tensors")
        if np.max(np.abs(t.components - t.components.T)) > 1e-10 * max(1.0, np.max(np.abs(t.components))):
            raise ContractViolation("Kulkarni-Nomizu product needs symmetric inputs")
    if not np.array_equal(h.base_point, k.base_point):
        raise ContractViolation("tensors live at different points")
    return TensorField(kulkarni_nomizu_array(h.components, k.components), "llll", h.base_point)


def weyl_arrays(riemann: np.ndarray, ricci: np.ndarray, scal: np.ndarray, g: np.ndarray):
    """Return (W, R - W) for batched coordinate components."""
    n = g.shape[-1]
    if n < 3:
        raise UnsupportedDimensionError("the Weyl tensor needs dimension >= 3")
    s = np.asarray(scal)[..., None, None, None, None]
    rest = kulkarni_nomizu_array(ricci, g) / (n - 2) - s * kulkarni_nomizu_array(g, g) / (2 * (n - 1) * (n - 2))
    return riemann - rest, rest


def weyl_decompose(m: MetricFamily, x) -> dict:
    x = _point(m, x)
    if m.n < 3:
        raise UnsupportedDimensionError("the Weyl tensor needs dimension >= 3")
    geo = m.geometry(x[None], order=2)
    W, rest = weyl_arrays(geo.riemann, geo.ricci, geo.scal, geo.g)
    return {"weyl": TensorField(W[0], "llll", x), "schouten_part": TensorField(rest[0], "llll", x)}


def weyl_traces(W: np.ndarray, ginv: np.ndarray) -> float:
    """Largest entry of any metric trace of a (0,4) tensor (single point)."""
    worst = 0.0
    for a, b in combinations(range(4), 2):
        letters = list("ijkl")
        letters[a], letters[b] = "x", "y"
        tr = np.einsum(f"xy,{''.join(letters)}", ginv, W)
        worst = max(worst, float(np.max(np.abs(tr))))
    return worst


# --------------------------------------------------------------------------
# random algebraic curvature tensors


def random_algebraic_curvature(n: int, rng: np.random.Generator) -> np.ndarray:
    """A random frame (0,4) tensor with Riemann symmetries and first Bianchi.

    Built as a sum of Kulkarni-Nomizu squares of random symmetric matrices,
    which spans the space of algebraic curvature tensors.
    """
    R = np.zeros((n, n, n, n))
    for _ in range(n * n * (n * n - 1) // 12 + 2):
        A = rng.normal(size=(n, n))
        A = A + A.T
        B = rng.normal(size=(n, n))
        B = B + B.T
        R += rng.normal() * kulkarni_nomizu_array(A, B)
    return R / np.max(np.abs(R))


def riemann_symmetry_defect(R: np.ndarray) -> float:
    """Max violation of skew/pair symmetries and first Bianchi for a (0,4) array (batch allowed)."""
    defects = [
        R + np.swapaxes(R, -4, -3),
        R + np.swapaxes(R, -2, -1),
        R - np.moveaxis(np.moveaxis(R, -2, -4), -1, -3),
        R + np.einsum("...jkil->...ijkl", R) + np.einsum("...kijl->...ijkl", R),
    ]
    return float(max(np.max(np.abs(d)) for d in defects))
