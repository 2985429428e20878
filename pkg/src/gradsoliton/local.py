"""Batched pointwise geometry computed from Taylor jets of g and f.

A model only has to supply its metric and potential as JAX-traceable functions.
Their derivative tensors up to order 4 are taken by nested forward-mode
differentiation. Curvature and its covariant derivatives are then assembled
from those jets by Leibniz-rule arithmetic in numpy, so everything up to second
covariant derivatives of the Riemann tensor is exact up to rounding and only
the (small) model functions are ever compiled.

Index conventions (all arrays carry a leading batch axis ``p``):

* ``gamma[p, k, i, j]`` is the Christoffel symbol Gamma^k_{ij}.
* ``riemann[p, i, j, k, l]`` is R(d_i, d_j, d_k, d_l) = g(R(d_i, d_j) d_k, d_l)
  with R(X, Y) = [nabla_X, nabla_Y] - nabla_[X,Y]. The unit sphere has
  sec(X, Y) = R(X, Y, Y, X) = +1.
* A covariant derivative index is always placed first:
  ``d_riemann[p, a, i, j, k, l] = (nabla_a R)_{ijkl}`` and
  ``dd_riemann[p, a, b, ...] = (nabla^2_{a,b} R)_{...}``.
"""

from __future__ import annotations

from functools import cached_property, lru_cache
from typing import Callable, Sequence

import jax
import jax.numpy as jnp
import numpy as np

from .errors import DegenerateMetricError

jax.config.update("jax_enable_x64", True)

CHUNK = 32


def enable_compilation_cache(path: str | None = None) -> None:
    """Persist compiled XLA programs between processes (opt-in)."""
    import os

    if path is None:
        path = os.environ.get(
            "GRADSOLITON_JAX_CACHE", os.path.join(os.path.expanduser("~"), ".cache", "gradsoliton-jax")
        )
    jax.config.update("jax_compilation_cache_dir", path)
    jax.config.update("jax_persistent_cache_min_compile_time_secs", 0.5)


# --------------------------------------------------------------------------
# jets of user functions


def _nested_jets(fn: Callable, order: int) -> Callable:
    """Return x, p -> [fn, D fn, ..., D^order fn] with derivative axes last."""

    def jets(x, p):
        out = []
        current = lambda y: fn(y, p)  # noqa: E731
        for _ in range(order + 1):
            out.append(current(x))
            current = jax.jacfwd(current)
        return out

    return jets


@lru_cache(maxsize=None)
def _compiled_jets(fn: Callable, static: tuple, order: int) -> Callable:
    kwargs = dict(static)
    base = lambda y, p: fn(y, p, **kwargs)  # noqa: E731
    return jax.jit(jax.vmap(_nested_jets(base, order), in_axes=(0, None)))


def _pad(points: np.ndarray) -> tuple[np.ndarray, int]:
    count = points.shape[0]
    total = max(CHUNK, -(-count // CHUNK) * CHUNK)
    if total == count:
        return points, count
    filler = np.repeat(points[:1], total - count, axis=0)
    return np.concatenate([points, filler], axis=0), count


def function_jets(
    fn: Callable, static: tuple, params: dict, points: np.ndarray, order: int
) -> list[np.ndarray]:
    """Derivative tensors D^k fn at each point, k = 0..order, batch axis first."""
    points = np.atleast_2d(np.asarray(points, dtype=float))
    padded, count = _pad(points)
    compiled = _compiled_jets(fn, static, order)
    p = {k: jnp.asarray(float(v)) for k, v in params.items()}
    pieces = []
    for start in range(0, padded.shape[0], CHUNK):
        block = compiled(jnp.asarray(padded[start : start + CHUNK]), p)
        pieces.append([np.asarray(b) for b in block])
    return [np.concatenate([piece[k] for piece in pieces], axis=0)[:count] for k in range(order + 1)]


# --------------------------------------------------------------------------
# jet arithmetic
#
# A jet of a tensor quantity Q is the list [Q, DQ, D^2 Q, ...] of batched
# arrays whose trailing axes are (symmetric) partial-derivative indices. Jets
# multiply by the Leibniz rule and each covariant derivative consumes one order.

_DERIV = "ABCDEFGH"


def _value_ndim(jet: Sequence[np.ndarray]) -> int:
    return jet[0].ndim - 1


def _subsets(k: int):
    for mask in range(1 << k):
        inside = [i for i in range(k) if mask >> i & 1]
        outside = [i for i in range(k) if not mask >> i & 1]
        yield inside, outside


def jet_mul(spec: str, A: Sequence[np.ndarray], B: Sequence[np.ndarray]) -> list[np.ndarray]:
    """Jet of einsum(spec, A, B) over value indices, truncated to the shorter input."""
    ins, out = spec.split("->")
    sa, sb = ins.split(",")
    order = min(len(A), len(B)) - 1
    result = []
    for k in range(order + 1):
        total = None
        for inside, outside in _subsets(k):
            da = "".join(_DERIV[i] for i in inside)
            db = "".join(_DERIV[i] for i in outside)
            term = np.einsum(
                f"...{sa}{da},...{sb}{db}->...{out}{_DERIV[:k]}", A[len(inside)], B[len(outside)], optimize=True
            )
            total = term if total is None else total + term
        result.append(total)
    return result


def jet_shift(jet: Sequence[np.ndarray]) -> list[np.ndarray]:
    """Jet of the partial derivative; the new derivative index becomes the last value index."""
    return list(jet[1:])


def jet_transpose(jet: Sequence[np.ndarray], perm: str, target: str) -> list[np.ndarray]:
    """Permute value indices, e.g. perm='lji', target='ijl'."""
    out = []
    for k, arr in enumerate(jet):
        d = _DERIV[:k]
        out.append(np.einsum(f"...{perm}{d}->...{target}{d}", arr))
    return out


def jet_inverse(jet: Sequence[np.ndarray]) -> list[np.ndarray]:
    """Jet of the matrix inverse, from D^k(G^{-1} G) = 0."""
    inv0 = np.linalg.inv(jet[0])
    out = [inv0]
    for k in range(1, len(jet)):
        acc = 0.0
        d = _DERIV[:k]
        for inside, outside in _subsets(k):
            if len(inside) == k:
                continue
            da = "".join(_DERIV[i] for i in inside)
            db = "".join(_DERIV[i] for i in outside)
            acc = acc + np.einsum(f"...ij{da},...jk{db}->...ik{d}", out[len(inside)], jet[len(outside)])
        out.append(-np.einsum(f"...ij{d},...jk->...ik{d}", acc, inv0))
    return out


def _combine(*terms: tuple[float, Sequence[np.ndarray]]) -> list[np.ndarray]:
    order = min(len(j) for _, j in terms)
    return [sum(c * j[k] for c, j in terms) for k in range(order)]


def christoffel_jet(gjet: Sequence[np.ndarray]) -> list[np.ndarray]:
    """Jet of Gamma^k_{ij} (value indices k, i, j)."""
    dg = jet_shift(gjet)  # value indices (a, b, c): d_c g_ab
    first = _combine(
        (0.5, jet_transpose(dg, "lji", "lij")),
        (0.5, jet_transpose(dg, "lij", "lij")),
        (-0.5, jet_transpose(dg, "ijl", "lij")),
    )
    return jet_mul("kl,lij->kij", jet_inverse(gjet), first)


def riemann_jet(gjet: Sequence[np.ndarray], gamma: Sequence[np.ndarray]) -> list[np.ndarray]:
    """Jet of R_{ijkl} = g(R(d_i, d_j) d_k, d_l)."""
    dG = jet_shift(gamma)  # (l, j, k, i): d_i Gamma^l_jk
    up = _combine(
        (1.0, jet_transpose(dG, "ljki", "ijkl")),
        (-1.0, jet_transpose(dG, "likj", "ijkl")),
        (1.0, jet_mul("mjk,lim->ijkl", gamma, gamma)),
        (-1.0, jet_mul("mik,ljm->ijkl", gamma, gamma)),
    )
    return jet_mul("ijkm,ml->ijkl", up, gjet)


_VALUE = "bcdefghijk"


def covariant_jet(T: Sequence[np.ndarray], gamma: Sequence[np.ndarray]) -> list[np.ndarray]:
    """Jet of nabla T for a covariant tensor, derivative index first."""
    rank = _value_ndim(T)
    idx = _VALUE[:rank]
    partial = jet_transpose(jet_shift(T), idx + "a", "a" + idx)
    terms = [(1.0, partial)]
    for s in range(rank):
        replaced = idx[:s] + "m" + idx[s + 1 :]
        terms.append((-1.0, jet_mul(f"ma{idx[s]},{replaced}->a{idx}", gamma, T)))
    return _combine(*terms)


def evaluate_jets(gjets: list[np.ndarray], fjets: list[np.ndarray], order: int) -> dict[str, np.ndarray]:
    """Curvature data from batched jets of g and f (order in {2, 3, 4})."""
    if order not in (2, 3, 4):
        raise ValueError("order must be 2, 3 or 4")
    gjet = [np.asarray(a, dtype=float) for a in gjets[: order + 1]]
    fjet = [np.asarray(a, dtype=float) for a in fjets[: order + 1]]
    gamma = christoffel_jet(gjet)
    R = riemann_jet(gjet, gamma)
    df = jet_shift(fjet)
    hess = covariant_jet(df, gamma)
    out = {
        "g": gjet[0],
        "gamma": gamma[0],
        "riemann": R[0],
        "f": fjet[0],
        "df": df[0],
        "hess_f": hess[0],
    }
    if order >= 3:
        dR = covariant_jet(R, gamma)
        dH = covariant_jet(hess, gamma)
        out["d_riemann"] = dR[0]
        out["d_hess_f"] = dH[0]
        if order >= 4:
            out["dd_riemann"] = covariant_jet(dR, gamma)[0]
            out["dd_hess_f"] = covariant_jet(dH, gamma)[0]
    return out


# --------------------------------------------------------------------------
# numpy-side derived quantities


def to_frame(T: np.ndarray, frame: np.ndarray, rank: int) -> np.ndarray:
    """Contract every one of the trailing ``rank`` covariant slots with the frame."""
    out = T
    for s in range(rank):
        axis = 1 + s
        out = np.moveaxis(np.einsum("pi...,pia->pa...", np.moveaxis(out, axis, 1), frame), 1, axis)
    return out


def frame_norm(T: np.ndarray, frame: np.ndarray, rank: int) -> np.ndarray:
    """Per-point Frobenius norm of a covariant tensor in a g-orthonormal frame."""
    F = to_frame(T, frame, rank)
    return np.sqrt(np.sum(F.reshape(F.shape[0], -1) ** 2, axis=1))


def orthonormal_frames(g: np.ndarray) -> np.ndarray:
    """Gram-Schmidt frames: columns E[:, a] with E^T g E = I (upper triangular)."""
    sym = np.max(np.abs(g - np.swapaxes(g, -1, -2)))
    if sym > 1e-10 * max(1.0, np.max(np.abs(g))):
        raise DegenerateMetricError("metric is not symmetric")
    try:
        L = np.linalg.cholesky(g)
    except np.linalg.LinAlgError as exc:
        raise DegenerateMetricError("metric is not positive definite") from exc
    return np.swapaxes(np.linalg.inv(L), -1, -2)


class LocalGeometry:
    """Curvature data at a batch of points (all arrays batch-first).

    Attributes present for every order: ``g``, ``gamma``, ``riemann``, ``f``,
    ``df``, ``hess_f``. Order >= 3 adds ``d_riemann`` and ``d_hess_f``; order 4
    adds ``dd_riemann`` and ``dd_hess_f``.
    """

    def __init__(self, points: np.ndarray, data: dict[str, np.ndarray], lam: float, order: int):
        self.points = np.asarray(points, dtype=float)
        self.lam = float(lam)
        self.order = order
        for key, value in data.items():
            setattr(self, key, value)
        self.frame = orthonormal_frames(self.g)

    def __len__(self) -> int:
        return self.points.shape[0]

    @property
    def n(self) -> int:
        return self.points.shape[1]

    def _require(self, order: int) -> None:
        if self.order < order:
            raise ValueError(f"quantity needs order {order} jets, geometry has order {self.order}")

    @cached_property
    def ginv(self) -> np.ndarray:
        return np.linalg.inv(self.g)

    @cached_property
    def ricci(self) -> np.ndarray:
        return np.einsum("pim,pijkm->pjk", self.ginv, self.riemann)

    @cached_property
    def ricci_op(self) -> np.ndarray:
        """(1,1) Ricci: ricci_op[p, i, j] = Ric^i_j."""
        return np.einsum("pik,pkj->pij", self.ginv, self.ricci)

    @cached_property
    def scal(self) -> np.ndarray:
        return np.einsum("pjk,pjk->p", self.ginv, self.ricci)

    @cached_property
    def grad_f(self) -> np.ndarray:
        return np.einsum("pij,pj->pi", self.ginv, self.df)

    @cached_property
    def d_ricci(self) -> np.ndarray:
        self._require(3)
        return np.einsum("pim,paijkm->pajk", self.ginv, self.d_riemann)

    @cached_property
    def d_scal(self) -> np.ndarray:
        self._require(3)
        return np.einsum("pjk,pajk->pa", self.ginv, self.d_ricci)

    @cached_property
    def dd_ricci(self) -> np.ndarray:
        self._require(4)
        return np.einsum("pim,pabijkm->pabjk", self.ginv, self.dd_riemann)

    @cached_property
    def hess_scal(self) -> np.ndarray:
        self._require(4)
        return np.einsum("pjk,pabjk->pab", self.ginv, self.dd_ricci)

    @cached_property
    def soliton_tensor(self) -> np.ndarray:
        return self.ricci + self.hess_f - self.lam * self.g

    def soliton_residual(self) -> np.ndarray:
        """Per-point max-abs entry of Ric + Hess f - lambda g in the orthonormal frame."""
        F = to_frame(self.soliton_tensor, self.frame, 2)
        return np.max(np.abs(F.reshape(len(self), -1)), axis=1)

    def laplacian(self, second: np.ndarray) -> np.ndarray:
        """Trace g^{ab} of a second covariant derivative with slots (a, b) first."""
        return np.einsum("pab,pab...->p...", self.ginv, second)

    def along_grad_f(self, first: np.ndarray) -> np.ndarray:
        return np.einsum("pa,pa...->p...", self.grad_f, first)

    def frame_components(self, T: np.ndarray, rank: int) -> np.ndarray:
        return to_frame(T, self.frame, rank)

    def norm(self, T: np.ndarray, rank: int) -> np.ndarray:
        return frame_norm(T, self.frame, rank)
