"""Coordinate-chart tensor calculus.

Metrics and potentials are plain functions ``fn(x, params, **static)`` written
with ``jax.numpy`` so that forward-mode differentiation can produce their
derivative oracles. Finite differences appear only in the ``method="stencil"``
routes, which exist to cross-check the differentiated path.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Callable, Mapping

import jax
import jax.numpy as jnp
import numpy as np

from .errors import (
    ContractViolation,
    DegenerateMetricError,
    DomainError,
    UnsupportedDimensionError,
)
from .local import LocalGeometry, evaluate_jets, function_jets, orthonormal_frames

STENCIL_STEP = 1e-3


def _always_valid(x: np.ndarray) -> bool:
    return True


@dataclass(frozen=True)
class Chart:
    """A coordinate patch.

    ``validity`` must be a pure, total predicate on R^n; it excludes coordinate
    singularities. ``default_box`` is where grids are sampled unless told
    otherwise. ``radial`` optionally maps coordinates to a geodesic distance used
    for radial sampling bounds, and ``compact_axes`` lists axes whose full range
    is a finite interval (angles) that quadrature should never enlarge.
    """

    dimension: int
    coordinate_names: tuple[str, ...]
    validity: Callable[[np.ndarray], bool] = _always_valid
    default_box: tuple[tuple[float, float], ...] | None = None
    radial: Callable[[np.ndarray], float] | None = None
    default_radial: tuple[float, float] | None = None
    compact_axes: tuple[tuple[int, float, float], ...] = ()

    def __post_init__(self):
        if self.dimension < 1:
            raise ValueError("chart dimension must be positive")
        if len(self.coordinate_names) != self.dimension:
            raise ValueError("need one coordinate name per dimension")

    def is_valid(self, x, margin: float = 0.0) -> bool:
        x = np.asarray(x, dtype=float)
        if x.shape != (self.dimension,) or not np.all(np.isfinite(x)):
            return False
        if not self.validity(x):
            return False
        if margin > 0.0:
            for i in range(self.dimension):
                for sign in (-1.0, 1.0):
                    y = x.copy()
                    y[i] += sign * margin
                    if not self.validity(y):
                        return False
        return True

    def require_valid(self, x, margin: float = 0.0) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if not self.is_valid(x, margin):
            what = "stencil around point" if margin > 0 else "point"
            raise DomainError(f"{what} {x.tolist()} is outside the chart")
        return x


def zero_potential(x, p):
    return jnp.zeros((), dtype=x.dtype) * x[0]


@dataclass(frozen=True, eq=False)
class MetricFamily:
    """A metric with a potential and soliton constant on a chart.

    ``g_fn(x, params, **g_static)`` returns the n x n metric components,
    ``f_fn(x, params, **f_static)`` the potential. ``scale`` multiplies the
    metric without retracing the compiled derivative oracles.
    """

    chart: Chart
    g_fn: Callable
    f_fn: Callable = zero_potential
    lam: float = 0.0
    params: Mapping[str, float] = field(default_factory=dict)
    g_static: tuple = ()
    f_static: tuple = ()
    scale: float = 1.0
    name: str = "metric"

    @property
    def n(self) -> int:
        return self.chart.dimension

    def _p(self) -> dict:
        return {k: jnp.asarray(float(v)) for k, v in self.params.items()}

    # -- values and derivative oracles ------------------------------------
    def g(self, x) -> np.ndarray:
        x = jnp.asarray(x, dtype=float)
        return self.scale * np.asarray(self.g_fn(x, self._p(), **dict(self.g_static)))

    def f(self, x) -> float:
        x = jnp.asarray(x, dtype=float)
        return float(self.f_fn(x, self._p(), **dict(self.f_static)))

    def metric_jets(self, points, order: int) -> list[np.ndarray]:
        jets = function_jets(self.g_fn, self.g_static, dict(self.params), points, order)
        return [self.scale * j for j in jets]

    def potential_jets(self, points, order: int) -> list[np.ndarray]:
        return function_jets(self.f_fn, self.f_static, dict(self.params), points, order)

    def dg(self, x) -> np.ndarray:
        """dg[i, j, k] = d_k g_ij."""
        return self.metric_jets(np.atleast_2d(x), 1)[1][0]

    def ddg(self, x) -> np.ndarray:
        return self.metric_jets(np.atleast_2d(x), 2)[2][0]

    def dddg(self, x) -> np.ndarray:
        return self.metric_jets(np.atleast_2d(x), 3)[3][0]

    def df(self, x) -> np.ndarray:
        return self.potential_jets(np.atleast_2d(x), 1)[1][0]

    # -- batched geometry --------------------------------------------------
    def geometry(self, points, order: int = 4, check: bool = True) -> LocalGeometry:
        """Curvature data at every point (each must be valid in the chart)."""
        points = np.atleast_2d(np.asarray(points, dtype=float))
        if points.shape[1] != self.n:
            raise ContractViolation(f"points must have {self.n} coordinates")
        if check:
            for x in points:
                self.chart.require_valid(x)
        gj = self.metric_jets(points, order)
        fj = self.potential_jets(points, order)
        data = evaluate_jets(gj, fj, order)
        return LocalGeometry(points, data, self.lam, order)

    # -- derived families --------------------------------------------------
    def scaled(self, c: float) -> "MetricFamily":
        """g -> c g with lambda -> lambda / c and f unchanged (again a soliton)."""
        if c <= 0:
            raise ValueError("scale factor must be positive")
        return replace(self, scale=self.scale * c, lam=self.lam / c)

    def with_potential(self, f_fn: Callable, f_static: tuple = (), lam: float | None = None) -> "MetricFamily":
        return replace(self, f_fn=f_fn, f_static=f_static, lam=self.lam if lam is None else lam)

    def traced_g(self) -> Callable:
        """x -> g(x) as a JAX-traceable function with parameters bound."""
        p, static, c = self._p(), dict(self.g_static), self.scale
        return lambda x: c * self.g_fn(x, p, **static)

    def traced_f(self) -> Callable:
        p, static = self._p(), dict(self.f_static)
        return lambda x: self.f_fn(x, p, **static)


# --------------------------------------------------------------------------
# tensor fields


_SYMMETRIES = ("symmetric", "antisymmetric-in-pair", "riemann")


@dataclass(frozen=True, eq=False)
class TensorField:
    """Components of a tensor at one point.

    ``indices`` lists the slot types in order, ``"l"`` for covariant and ``"u"``
    for contravariant, e.g. Gamma^k_{ij} is ``"ull"``.
    """

    components: np.ndarray
    indices: str
    base_point: np.ndarray
    symmetry: str | None = None

    def __post_init__(self):
        comps = np.asarray(self.components, dtype=float)
        object.__setattr__(self, "components", comps)
        object.__setattr__(self, "base_point", np.asarray(self.base_point, dtype=float))
        if set(self.indices) - {"u", "l"}:
            raise ContractViolation("indices must be a string of 'u'/'l'")
        n = self.base_point.shape[0]
        if comps.shape != (n,) * len(self.indices):
            raise ContractViolation(
                f"component array shape {comps.shape} does not match valence {self.valence} in dimension {n}"
            )
        if self.symmetry is not None:
            _check_symmetry(comps, self.symmetry)

    @property
    def valence(self) -> tuple[int, int]:
        """(covariant slots, contravariant slots)."""
        return self.indices.count("l"), self.indices.count("u")

    def lower(self, slot: int, g: np.ndarray) -> "TensorField":
        if self.indices[slot] != "u":
            raise ContractViolation(f"slot {slot} is already covariant")
        comps = np.moveaxis(np.tensordot(g, np.moveaxis(self.components, slot, 0), axes=(1, 0)), 0, slot)
        idx = self.indices[:slot] + "l" + self.indices[slot + 1 :]
        return TensorField(comps, idx, self.base_point)

    def raise_(self, slot: int, ginv: np.ndarray) -> "TensorField":
        if self.indices[slot] != "l":
            raise ContractViolation(f"slot {slot} is already contravariant")
        comps = np.moveaxis(np.tensordot(ginv, np.moveaxis(self.components, slot, 0), axes=(1, 0)), 0, slot)
        idx = self.indices[:slot] + "u" + self.indices[slot + 1 :]
        return TensorField(comps, idx, self.base_point)


def _check_symmetry(T: np.ndarray, kind: str, tol: float = 1e-10) -> None:
    if kind not in _SYMMETRIES:
        raise ContractViolation(f"unknown symmetry tag {kind!r}")
    scale = max(1.0, float(np.max(np.abs(T)))) if T.size else 1.0
    if kind == "symmetric":
        err = np.max(np.abs(T - np.swapaxes(T, 0, 1)))
    elif kind == "antisymmetric-in-pair":
        err = np.max(np.abs(T + np.swapaxes(T, 0, 1)))
    else:
        err = max(
            np.max(np.abs(T + np.swapaxes(T, 0, 1))),
            np.max(np.abs(T + np.swapaxes(T, 2, 3))),
            np.max(np.abs(T - np.transpose(T, (2, 3, 0, 1)))),
        )
    if err > tol * scale:
        raise ContractViolation(f"declared {kind} symmetry broken by {err:.2e}")


# --------------------------------------------------------------------------
# operations


def _point(m: MetricFamily, x) -> np.ndarray:
    x = m.chart.require_valid(x)
    g = m.g(x)
    orthonormal_frames(g[None])  # raises DegenerateMetricError
    return x


def christoffel_from_jets(g: np.ndarray, dg: np.ndarray) -> np.ndarray:
    """Gamma^k_{ij} from g_ij and dg[i, j, k] = d_k g_ij."""
    first = 0.5 * (np.einsum("lkj->ljk", dg) + dg - np.einsum("jkl->ljk", dg))
    return np.einsum("kl,lij->kij", np.linalg.inv(g), first)


def christoffel_derivative_from_jets(g: np.ndarray, dg: np.ndarray, ddg: np.ndarray) -> np.ndarray:
    """dGamma[a, k, i, j] = d_a Gamma^k_{ij}."""
    ginv = np.linalg.inv(g)
    first = 0.5 * (np.einsum("lkj->ljk", dg) + dg - np.einsum("jkl->ljk", dg))
    # ddg[i, j, k, a] = d_a d_k g_ij
    dfirst = 0.5 * (
        np.einsum("lkja->aljk", ddg) + np.einsum("ljka->aljk", ddg) - np.einsum("jkla->aljk", ddg)
    )
    dginv = -np.einsum("km,mna,nl->akl", ginv, dg, ginv)
    return np.einsum("akl,lij->akij", dginv, first) + np.einsum("kl,alij->akij", ginv, dfirst)


def christoffel(m: MetricFamily, x) -> TensorField:
    """Gamma^k_{ij} at x, as a (1,2) field with index string ``"ull"``."""
    x = _point(m, x)
    jets = m.metric_jets(x[None], 1)
    return TensorField(christoffel_from_jets(jets[0][0], jets[1][0]), "ull", x)


def curvature_suite(m: MetricFamily, x) -> dict:
    """Riemann (0,4), Ricci as (0,2) and (1,1), and scalar curvature at x."""
    x = _point(m, x)
    if m.n < 2:
        raise UnsupportedDimensionError("curvature needs dimension >= 2")
    geo = m.geometry(x[None], order=2)
    return {
        "riemann": TensorField(geo.riemann[0], "llll", x, symmetry="riemann"),
        "ricci": TensorField(geo.ricci[0], "ll", x, symmetry="symmetric"),
        "ricci_op": TensorField(geo.ricci_op[0], "ul", x),
        "scal": float(geo.scal[0]),
    }


def _correct(gamma: np.ndarray, T: np.ndarray) -> np.ndarray:
    """out[b, I] = sum_s Gamma^m_{b i_s} T_{I with i_s -> m}."""
    rank = T.ndim
    n = gamma.shape[0]
    out = np.zeros((n,) + T.shape)
    for s in range(rank):
        moved = np.moveaxis(T, s, 0)
        corr = np.einsum("mbi,m...->bi...", gamma, moved)
        out += np.moveaxis(corr, 1, s + 1)
    return out


def _as_array(value) -> np.ndarray:
    if isinstance(value, TensorField):
        if "u" in value.indices:
            raise ContractViolation("field oracles must return covariant components")
        return value.components
    return np.asarray(value, dtype=float)


def _stencil_partials(field_oracle: Callable, x: np.ndarray, step: float, second: bool):
    """Richardson-extrapolated central differences of a coordinate field."""
    n = x.shape[0]

    def ev(y):
        return _as_array(field_oracle(y))

    f0 = ev(x)

    def first_diff(h):
        out = []
        for a in range(n):
            e = np.zeros(n)
            e[a] = h
            out.append((ev(x + e) - ev(x - e)) / (2 * h))
        return np.stack(out)

    def second_diff(h):
        out = np.zeros((n, n) + f0.shape)
        for a in range(n):
            ea = np.zeros(n)
            ea[a] = h
            out[a, a] = (ev(x + ea) - 2 * f0 + ev(x - ea)) / h**2
            for b in range(a + 1, n):
                eb = np.zeros(n)
                eb[b] = h
                val = (ev(x + ea + eb) - ev(x + ea - eb) - ev(x - ea + eb) + ev(x - ea - eb)) / (4 * h**2)
                out[a, b] = out[b, a] = val
        return out

    d1 = (4 * first_diff(step) - first_diff(2 * step)) / 3
    if not second:
        return f0, d1, None
    d2 = (4 * second_diff(step) - second_diff(2 * step)) / 3
    return f0, d1, d2


def covariant_derivative(m: MetricFamily, field_oracle: Callable, x, method: str = "ad") -> TensorField:
    """nabla T at x for a covariant field oracle; the new slot comes first.

    ``method="ad"`` differentiates a JAX-traceable oracle exactly;
    ``method="stencil"`` uses Richardson-extrapolated central differences and
    accepts any callable returning components.
    """
    x = _point(m, x)
    jets = m.metric_jets(x[None], 1)
    gamma = christoffel_from_jets(jets[0][0], jets[1][0])
    if method == "ad":
        T = _as_array(field_oracle(jnp.asarray(x)))
        partial = np.moveaxis(np.asarray(jax.jacfwd(lambda y: jnp.asarray(field_oracle(y)))(jnp.asarray(x))), -1, 0)
    elif method == "stencil":
        m.chart.require_valid(x, margin=2 * STENCIL_STEP)
        T, partial, _ = _stencil_partials(field_oracle, x, STENCIL_STEP, second=False)
    else:
        raise ValueError(f"unknown method {method!r}")
    comps = partial - _correct(gamma, T) if T.ndim else partial
    return TensorField(comps, "l" * (T.ndim + 1), x)


def second_covariant_derivative(m: MetricFamily, field_oracle: Callable, x, method: str = "ad") -> np.ndarray:
    """nabla^2_{a,b} T at x as an array with (a, b) first."""
    x = _point(m, x)
    jets = m.metric_jets(x[None], 2)
    g, dg, ddg = jets[0][0], jets[1][0], jets[2][0]
    gamma = christoffel_from_jets(g, dg)
    dgamma = christoffel_derivative_from_jets(g, dg, ddg)
    if method == "ad":
        fn = lambda y: jnp.asarray(field_oracle(y))  # noqa: E731
        xj = jnp.asarray(x)
        T = np.asarray(fn(xj))
        d1 = np.moveaxis(np.asarray(jax.jacfwd(fn)(xj)), -1, 0)
        d2 = np.asarray(jax.jacfwd(jax.jacfwd(fn))(xj))
        d2 = np.moveaxis(np.moveaxis(d2, -1, 0), -1, 0)  # [a, b, ...] = d_a d_b T
    elif method == "stencil":
        m.chart.require_valid(x, margin=2 * STENCIL_STEP)
        T, d1, d2 = _stencil_partials(field_oracle, x, STENCIL_STEP, second=True)
    else:
        raise ValueError(f"unknown method {method!r}")
    return _covariant_hessian(gamma, dgamma, T, d1, d2)


def _covariant_hessian(gamma, dgamma, T, d1, d2) -> np.ndarray:
    n = gamma.shape[0]
    if T.ndim == 0:
        nabla = d1
        d_nabla = d2
    else:
        nabla = d1 - _correct(gamma, T)
        d_nabla = d2.copy()
        for a in range(n):
            d_nabla[a] -= _correct(dgamma[a], T)
            d_nabla[a] -= _correct(gamma, d1[a])
    out = d_nabla - np.einsum("cab,c...->ab...", gamma, nabla)
    if T.ndim:
        for b in range(n):
            out[:, b] -= _correct(gamma, nabla[b])
    return out


def hessian_and_gradient(m: MetricFamily, u: Callable, x) -> dict:
    """Gradient (index raised) and Hessian of a JAX-traceable scalar oracle."""
    x = _point(m, x)
    jets = m.metric_jets(x[None], 1)
    g, dg = jets[0][0], jets[1][0]
    gamma = christoffel_from_jets(g, dg)
    xj = jnp.asarray(x)
    du = np.asarray(jax.grad(lambda y: jnp.asarray(u(y), dtype=float))(xj))
    ddu = np.asarray(jax.hessian(lambda y: jnp.asarray(u(y), dtype=float))(xj))
    hess = ddu - np.einsum("kij,k->ij", gamma, du)
    hess = 0.5 * (hess + hess.T)
    return {
        "grad": TensorField(np.linalg.solve(g, du), "u", x),
        "hess": TensorField(hess, "ll", x, symmetry="symmetric"),
    }


def f_laplacian(m: MetricFamily, field_oracle: Callable, x, method: str = "ad") -> TensorField:
    """Delta_f T = tr nabla^2 T - nabla_{grad f} T for a covariant field oracle."""
    x = _point(m, x)
    g = m.g(x)
    ginv = np.linalg.inv(g)
    hess_T = second_covariant_derivative(m, field_oracle, x, method=method)
    nabla_T = covariant_derivative(m, field_oracle, x, method=method).components
    grad_f = ginv @ m.df(x)
    comps = np.einsum("ab,ab...->...", ginv, hess_T) - np.einsum("a,a...->...", grad_f, nabla_T)
    rank = np.ndim(comps)
    return TensorField(comps, "l" * rank, x)


# --------------------------------------------------------------------------
# fields derived from the metric itself, for use as oracles


def curvature_field(m: MetricFamily, quantity: str) -> Callable:
    """Numeric oracle x -> scal / ricci / riemann / g components (not traceable)."""

    def oracle(x):
        geo = m.geometry(np.asarray(x, dtype=float)[None], order=2, check=False)
        if quantity == "scal":
            return geo.scal[0]
        if quantity == "ricci":
            return geo.ricci[0]
        if quantity == "riemann":
            return geo.riemann[0]
        if quantity == "g":
            return geo.g[0]
        raise ValueError(f"unknown quantity {quantity!r}")

    return oracle


def finite_difference_jets(m: MetricFamily, x, step: float = 1e-5) -> tuple[np.ndarray, np.ndarray]:
    """Central-difference dg and ddg (cross-check oracles only)."""
    x = np.asarray(x, dtype=float)
    n = m.n
    dg = np.zeros((n, n, n))
    for k in range(n):
        e = np.zeros(n)
        e[k] = step
        dg[:, :, k] = (m.g(x + e) - m.g(x - e)) / (2 * step)
    ddg = np.zeros((n, n, n, n))
    for k in range(n):
        e = np.zeros(n)
        e[k] = step
        ddg[:, :, :, k] = (m.dg(x + e) - m.dg(x - e)) / (2 * step)
    return dg, ddg


__all__ = [
    "Chart",
    "MetricFamily",
    "TensorField",
    "christoffel",
    "curvature_suite",
    "covariant_derivative",
    "second_covariant_derivative",
    "hessian_and_gradient",
    "f_laplacian",
    "curvature_field",
    "finite_difference_jets",
    "christoffel_from_jets",
    "christoffel_derivative_from_jets",
    "zero_potential",
    "DegenerateMetricError",
    "STENCIL_STEP",
]
