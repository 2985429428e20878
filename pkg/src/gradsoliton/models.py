"""Closed-form soliton catalog and warped-product machinery."""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Callable, Mapping, Sequence

import jax
import jax.numpy as jnp
import numpy as np

from .chart import Chart, MetricFamily, zero_potential
from .errors import (
    DomainError,
    InvalidWarpError,
    ParameterError,
    SolitonResidualFailed,
    UnknownModelError,
    UnsupportedDimensionError,
)
from .grid import ResidualReport, SampleGrid
from .labels import ModelClass

TIP_MARGIN = 0.05
LOAD_CHECK_POINTS = 50
LOAD_CHECK_TOL = 1e-8


def soliton_kind(lam: float) -> str:
    if lam > 0:
        return "shrinking"
    if lam < 0:
        return "expanding"
    return "steady"


@dataclass(frozen=True, eq=False)
class SolitonInstance:
    metric: MetricFamily
    label: str
    expected_class: ModelClass | None = None
    validated: bool = True
    params: Mapping[str, float] = field(default_factory=dict)

    @property
    def kind(self) -> str:
        return soliton_kind(self.metric.lam)

    @property
    def n(self) -> int:
        return self.metric.n

    def scaled(self, c: float) -> "SolitonInstance":
        return replace(self, metric=self.metric.scaled(c), label=f"{self.label}*{c:g}")


# --------------------------------------------------------------------------
# metric component functions (module level so compiled jets are shared)


def flat_metric(x, p):
    return jnp.eye(x.shape[0], dtype=x.dtype)


def stereographic_sphere(y, a):
    """Round sphere of radius a, stereographic coordinates."""
    return (4 * a**2 / (1 + y @ y) ** 2) * jnp.eye(y.shape[0], dtype=y.dtype)


def poincare_ball(y, a):
    """Hyperbolic space of curvature -1/a^2 in the Poincare ball."""
    return (4 * a**2 / (1 - y @ y) ** 2) * jnp.eye(y.shape[0], dtype=y.dtype)


def hyperspherical_sphere(y, a):
    """Round sphere of radius a in angles psi_1 .. psi_m (psi_m the azimuth)."""
    m = y.shape[0]
    s = jnp.sin(y)
    diag = [jnp.ones((), dtype=y.dtype)]
    for i in range(1, m):
        diag.append(diag[-1] * s[i - 1] ** 2)
    return a**2 * jnp.diag(jnp.stack(diag))


_SPHERE_CHARTS = {"stereographic": stereographic_sphere, "polar": hyperspherical_sphere}


def sphere_metric(x, p, chart="stereographic"):
    return _SPHERE_CHARTS[chart](x, p["a"])


def hyperbolic_metric(x, p):
    return poincare_ball(x, p["a"])


def sphere_line_metric(x, p, chart="stereographic", k=1):
    """S^m(a) x R^k with the Euclidean factor in the last k coordinates."""
    y = x[: x.shape[0] - k]
    return jax.scipy.linalg.block_diag(_SPHERE_CHARTS[chart](y, p["a"]), jnp.eye(k, dtype=x.dtype))


def hyperbolic_line_metric(x, p):
    y = x[:-1]
    return jax.scipy.linalg.block_diag(poincare_ball(y, p["a"]), jnp.eye(1, dtype=x.dtype))


def cigar_metric(x, p):
    return jnp.eye(2, dtype=x.dtype) / (1 + x @ x)


def gaussian_potential(x, p):
    return 0.5 * p["c"] * (x @ x)


def tail_gaussian_potential(x, p, k=1):
    t = x[x.shape[0] - k :]
    return 0.5 * p["c"] * (t @ t)


def cigar_potential(x, p):
    return -jnp.log1p(x @ x)


def cigar_radial_potential(r):
    return -2 * jnp.log(jnp.cosh(r))


def cubic_perturbation(x, p, base=zero_potential, base_static=()):
    return base(x, p, **dict(base_static)) + p["perturb_eps"] * x[0] ** 3


# --------------------------------------------------------------------------
# charts


def _box(lo: float, hi: float, n: int) -> tuple[tuple[float, float], ...]:
    return tuple((lo, hi) for _ in range(n))


def euclidean_chart(n: int, half_width: float = 2.0) -> Chart:
    return Chart(
        n,
        tuple(f"x{i + 1}" for i in range(n)),
        default_box=_box(-half_width, half_width, n),
        radial=lambda x: float(np.linalg.norm(x)),
    )


def _polar_validity(m: int, offset: int = 0) -> Callable:
    def valid(x):
        y = x[offset : offset + m]
        # the azimuth is periodic and the metric never depends on it
        return bool(m == 1 or np.all((y[:-1] > 0) & (y[:-1] < np.pi)))

    return valid


def _polar_box(m: int) -> tuple[tuple[float, float], ...]:
    return tuple((0.3, np.pi - 0.3) for _ in range(m - 1)) + ((0.3, 2 * np.pi - 0.3),)


def _polar_compact(m: int, offset: int = 0) -> tuple[tuple[int, float, float], ...]:
    return tuple((offset + i, 0.0, np.pi) for i in range(m - 1)) + ((offset + m - 1, 0.0, 2 * np.pi),)


def _poincare_validity(m: int) -> Callable:
    return lambda x: bool(x[:m] @ x[:m] < 1.0)


# --------------------------------------------------------------------------
# parameter handling


def _integer(params: Mapping, key: str, default: int, minimum: int) -> int:
    value = params.get(key, default)
    if isinstance(value, bool) or float(value) != int(float(value)):
        raise ParameterError(f"{key} must be an integer, got {value!r}")
    value = int(float(value))
    if value < minimum:
        raise ParameterError(f"{key} must be >= {minimum}, got {value}")
    return value


def _positive(params: Mapping, key: str, default: float) -> float:
    value = float(params.get(key, default))
    if not (value > 0 and math.isfinite(value)):
        raise ParameterError(f"{key} must be a positive real, got {value!r}")
    return value


def _real(params: Mapping, key: str, default: float) -> float:
    value = float(params.get(key, default))
    if not math.isfinite(value):
        raise ParameterError(f"{key} must be finite")
    return value


def _check_keys(params: Mapping, allowed: Sequence[str], name: str) -> None:
    extra = set(params) - set(allowed)
    if extra:
        raise ParameterError(f"{name} does not take parameter(s) {sorted(extra)}")


def _check_chart(chart: str | None, allowed: Sequence[str], name: str) -> str:
    chart = chart or allowed[0]
    if chart not in allowed:
        raise ParameterError(f"{name} supports charts {list(allowed)}, not {chart!r}")
    return chart


# --------------------------------------------------------------------------
# catalog builders


def _gaussian(params, chart):
    _check_keys(params, ("n", "lam"), "gaussian")
    _check_chart(chart, ("cartesian",), "gaussian")
    n = _integer(params, "n", 3, 1)
    lam = _real(params, "lam", 0.5)
    c = euclidean_chart(n)
    m = MetricFamily(c, flat_metric, gaussian_potential, lam, {"c": lam}, name=f"gaussian(n={n}, lam={lam:g})")
    return m, ModelClass.FLAT


def _round_sphere(params, chart):
    _check_keys(params, ("n", "a"), "round_sphere")
    chart = _check_chart(chart, ("stereographic", "polar"), "round_sphere")
    n = _integer(params, "n", 3, 2)
    a = _positive(params, "a", 1.0)
    names = tuple(f"{'u' if chart == 'stereographic' else 'psi'}{i + 1}" for i in range(n))
    if chart == "stereographic":
        c = Chart(
            n,
            names,
            default_box=_box(-2.0, 2.0, n),
            radial=lambda y: 2 * a * math.atan(float(np.linalg.norm(y))),
        )
    else:
        c = Chart(n, names, _polar_validity(n), _polar_box(n), compact_axes=_polar_compact(n))
    m = MetricFamily(
        c, sphere_metric, zero_potential, (n - 1) / a**2, {"a": a}, (("chart", chart),),
        name=f"round_sphere(n={n}, a={a:g})",
    )
    return m, ModelClass.SPHERE_EINSTEIN


def _cylinder(params, chart):
    _check_keys(params, ("n", "a"), "cylinder")
    chart = _check_chart(chart, ("stereographic", "polar"), "cylinder")
    n = _integer(params, "n", 3, 3)
    a = _positive(params, "a", 1.0)
    lam = (n - 2) / a**2
    fib = n - 1
    if chart == "stereographic":
        names = tuple(f"u{i + 1}" for i in range(fib)) + ("t",)
        c = Chart(n, names, default_box=_box(-2.0, 2.0, n))
    else:
        names = tuple(f"psi{i + 1}" for i in range(fib)) + ("t",)
        c = Chart(
            n, names, _polar_validity(fib), _polar_box(fib) + ((-2.0, 2.0),), compact_axes=_polar_compact(fib)
        )
    m = MetricFamily(
        c, sphere_line_metric, tail_gaussian_potential, lam, {"a": a, "c": lam},
        (("chart", chart), ("k", 1)), (("k", 1),), name=f"cylinder(n={n}, a={a:g})",
    )
    return m, ModelClass.SPHERE_SPLIT


def _hyperbolic(params, chart):
    _check_keys(params, ("n", "a"), "hyperbolic")
    _check_chart(chart, ("poincare",), "hyperbolic")
    n = _integer(params, "n", 3, 2)
    a = _positive(params, "a", 1.0)
    c = Chart(
        n,
        tuple(f"y{i + 1}" for i in range(n)),
        _poincare_validity(n),
        _box(-0.6, 0.6, n),
        radial=lambda y: 2 * a * math.atanh(min(float(np.linalg.norm(y)), 1 - 1e-16)),
    )
    m = MetricFamily(c, hyperbolic_metric, zero_potential, -(n - 1) / a**2, {"a": a}, name=f"hyperbolic(n={n}, a={a:g})")
    return m, ModelClass.HYPERBOLIC_EINSTEIN


def _hyperbolic_cylinder(params, chart):
    _check_keys(params, ("n", "a"), "hyperbolic_cylinder")
    _check_chart(chart, ("poincare",), "hyperbolic_cylinder")
    n = _integer(params, "n", 3, 3)
    a = _positive(params, "a", 1.0)
    lam = -(n - 2) / a**2
    names = tuple(f"y{i + 1}" for i in range(n - 1)) + ("t",)
    c = Chart(n, names, _poincare_validity(n - 1), _box(-0.6, 0.6, n - 1) + ((-2.0, 2.0),))
    m = MetricFamily(
        c, hyperbolic_line_metric, tail_gaussian_potential, lam, {"a": a, "c": lam}, (), (("k", 1),),
        name=f"hyperbolic_cylinder(n={n}, a={a:g})",
    )
    return m, ModelClass.HYPERBOLIC_SPLIT


def _cigar(params, chart):
    _check_keys(params, (), "cigar")
    chart = _check_chart(chart, ("cartesian", "warped"), "cigar")
    if chart == "warped":
        spec = WarpedProductSpec(jnp.tanh, unit_circle(), "plane-like", (0.0, math.inf), name="cigar")
        m = build_warped_product(spec, f=cigar_radial_potential, lam=0.0)
        m = replace(m, chart=replace(m.chart, default_box=((0.1, 3.0), (0.3, 2 * np.pi - 0.3))), name="cigar(warped)")
        return m, ModelClass.INCONCLUSIVE
    w = math.sinh(3.0)
    c = Chart(
        2,
        ("x", "y"),
        default_box=_box(-w, w, 2),
        radial=lambda x: math.asinh(float(np.linalg.norm(x))),
        default_radial=(0.1, 3.0),
    )
    m = MetricFamily(c, cigar_metric, cigar_potential, 0.0, {}, name="cigar")
    return m, ModelClass.INCONCLUSIVE


def _einstein_product(params, chart):
    _check_keys(params, ("m", "k", "a"), "einstein_product")
    _check_chart(chart, ("stereographic",), "einstein_product")
    mdim = _integer(params, "m", 2, 2)
    k = _integer(params, "k", 2, 1)
    a = _positive(params, "a", 1.0)
    lam = (mdim - 1) / a**2
    n = mdim + k
    names = tuple(f"u{i + 1}" for i in range(mdim)) + tuple(f"t{i + 1}" for i in range(k))
    c = Chart(n, names, default_box=_box(-2.0, 2.0, n))
    m = MetricFamily(
        c, sphere_line_metric, tail_gaussian_potential, lam, {"a": a, "c": lam},
        (("chart", "stereographic"), ("k", k)), (("k", k),), name=f"einstein_product(m={mdim}, k={k}, a={a:g})",
    )
    if k == 1 and mdim >= 2:
        label = ModelClass.SPHERE_SPLIT
    else:
        label = ModelClass.RIGID
    return m, label


@dataclass(frozen=True)
class CatalogEntry:
    name: str
    builder: Callable
    parameters: Mapping[str, str]
    charts: tuple[str, ...]
    expected: str
    note: str

    @property
    def signature(self) -> str:
        keys = ", ".join(self.parameters)
        return f"{self.name}({keys})" if keys else self.name


CATALOG: dict[str, CatalogEntry] = {
    e.name: e
    for e in (
        CatalogEntry(
            "gaussian", _gaussian, {"n": "integer >= 1, default 3", "lam": "real, default 0.5"},
            ("cartesian",), str(ModelClass.FLAT), "flat R^n with f = lam |x|^2 / 2, any sign of lam",
        ),
        CatalogEntry(
            "round_sphere", _round_sphere, {"n": "integer >= 2, default 3", "a": "radius > 0, default 1"},
            ("stereographic", "polar"), str(ModelClass.SPHERE_EINSTEIN), "shrinking, f const, lam = (n-1)/a^2",
        ),
        CatalogEntry(
            "cylinder", _cylinder, {"n": "integer >= 3, default 3", "a": "radius > 0, default 1"},
            ("stereographic", "polar"), str(ModelClass.SPHERE_SPLIT),
            "shrinking S^{n-1}(a) x R, lam = (n-2)/a^2, f = lam t^2 / 2",
        ),
        CatalogEntry(
            "hyperbolic", _hyperbolic, {"n": "integer >= 2, default 3", "a": "curvature radius > 0, default 1"},
            ("poincare",), str(ModelClass.HYPERBOLIC_EINSTEIN), "expanding, f const, lam = -(n-1)/a^2",
        ),
        CatalogEntry(
            "hyperbolic_cylinder", _hyperbolic_cylinder,
            {"n": "integer >= 3, default 3", "a": "curvature radius > 0, default 1"},
            ("poincare",), str(ModelClass.HYPERBOLIC_SPLIT),
            "expanding H^{n-1}(a) x R, lam = -(n-2)/a^2, f = lam t^2 / 2",
        ),
        CatalogEntry(
            "cigar", _cigar, {}, ("cartesian", "warped"), str(ModelClass.INCONCLUSIVE),
            "steady, n=2, h=tanh r, f = -2 log cosh r",
        ),
        CatalogEntry(
            "einstein_product", _einstein_product,
            {"m": "sphere dimension >= 2, default 2", "k": "line factors >= 1, default 2", "a": "radius > 0, default 1"},
            ("stereographic",), str(ModelClass.RIGID),
            "shrinking S^m(a) x R^k, lam = (m-1)/a^2, f = lam |t|^2 / 2",
        ),
    )
}


def list_models() -> list[dict]:
    """One row per catalog builder."""
    return [
        {
            "name": e.name,
            "signature": e.signature,
            "parameters": dict(e.parameters),
            "charts": list(e.charts),
            "expected_class": e.expected,
            "note": e.note,
        }
        for e in CATALOG.values()
    ]


def check_soliton(metric: MetricFamily, count: int = LOAD_CHECK_POINTS, seed: int = 0,
                  tolerance: float = LOAD_CHECK_TOL) -> float:
    """Max frame residual of Ric + Hess f - lambda g on a seeded grid; raises if too large."""
    grid = SampleGrid.sample(metric, count=count, seed=seed)
    worst = float(np.max(metric.geometry(grid.points, order=2).soliton_residual()))
    if not worst < tolerance:
        raise SolitonResidualFailed(worst, tolerance)
    return worst


def build_model(name: str, params: Mapping[str, float] | None = None, chart: str | None = None,
                validate: bool = True) -> SolitonInstance:
    """Build a catalog soliton; by default its residual is checked on 50 seeded points."""
    if name not in CATALOG:
        raise UnknownModelError(f"unknown model {name!r}; known: {sorted(CATALOG)}")
    params = dict(params or {})
    metric, expected = CATALOG[name].builder(params, chart)
    if validate:
        check_soliton(metric)
    return SolitonInstance(metric, metric.name, expected, validated=validate, params=params)


def perturb_potential(inst: SolitonInstance, eps: float = 0.01) -> SolitonInstance:
    """Negative control: f -> f + eps * x_1^3 (no longer a soliton)."""
    m = inst.metric
    params = dict(m.params)
    params["perturb_eps"] = eps
    metric = replace(
        m,
        f_fn=cubic_perturbation,
        f_static=(("base", m.f_fn), ("base_static", m.f_static)),
        params=params,
        name=f"{m.name}+{eps:g}x1^3",
    )
    return SolitonInstance(metric, metric.name, ModelClass.INCONCLUSIVE, validated=False, params=inst.params)


# --------------------------------------------------------------------------
# warped products


def unit_circle() -> MetricFamily:
    c = Chart(1, ("theta",), lambda x: True, ((0.3, 2 * np.pi - 0.3),),
              compact_axes=((0, 0.0, 2 * np.pi),))
    return MetricFamily(c, flat_metric, name="S^1")


def unit_sphere_fiber(m: int, chart: str = "stereographic") -> MetricFamily:
    if m == 1:
        return unit_circle()
    metric, _ = _round_sphere({"n": m, "a": 1.0}, chart)
    return replace(metric, lam=0.0, name=f"S^{m}")


_TOPOLOGIES = ("plane-like", "sphere-like", "cylinder-like")


@dataclass(frozen=True, eq=False)
class WarpedProductSpec:
    """g = dr^2 + h(r)^2 g0 on (r, fiber coordinates).

    ``h`` must be JAX-traceable. ``antiderivative`` optionally gives a closed
    form of the integral of h, used as the canonical potential.
    """

    h: Callable
    g0: MetricFamily
    topology_tag: str
    r_domain: tuple[float, float]
    name: str = "warped"
    antiderivative: Callable | None = None

    def __post_init__(self):
        if self.topology_tag not in _TOPOLOGIES:
            raise InvalidWarpError(f"topology must be one of {_TOPOLOGIES}")
        lo, hi = self.r_domain
        if not lo < hi or not math.isfinite(lo):
            raise InvalidWarpError("r_domain must be an interval (lo, hi) with finite lo < hi")
        if self.topology_tag == "sphere-like" and not math.isfinite(hi):
            raise InvalidWarpError("a sphere-like warp needs a finite second tip")

    @property
    def valid_r(self) -> tuple[float, float]:
        lo, hi = self.r_domain
        if self.topology_tag in ("plane-like", "sphere-like"):
            lo = lo + TIP_MARGIN
        if self.topology_tag == "sphere-like":
            hi = hi - TIP_MARGIN
        return lo, hi

    @property
    def sample_r(self) -> tuple[float, float]:
        lo, hi = self.valid_r
        lo = lo + 0.05
        hi = hi - 0.05 if math.isfinite(hi) else lo + 3.0
        return lo, hi

    def potential(self) -> Callable:
        """r -> integral of h from the start of the domain."""
        if self.antiderivative is not None:
            return self.antiderivative
        return gauss_legendre_antiderivative(self.h, self.r_domain[0])


def gauss_legendre_antiderivative(h: Callable, start: float, nodes: int = 64) -> Callable:
    t, w = np.polynomial.legendre.leggauss(nodes)
    t = jnp.asarray(t)
    w = jnp.asarray(w)

    def F(r):
        half = 0.5 * (r - start)
        return half * jnp.sum(w * jax.vmap(h)(start + half * (t + 1)))

    return F


def _check_warp(spec: WarpedProductSpec) -> None:
    h, (lo, hi) = spec.h, spec.r_domain
    dh = jax.grad(h)
    if spec.topology_tag in ("plane-like", "sphere-like"):
        if abs(float(h(lo))) > 1e-10 or abs(float(dh(lo)) - 1.0) > 1e-10:
            raise InvalidWarpError(f"{spec.name}: needs h = 0 and h' = 1 at the tip r = {lo}")
    if spec.topology_tag == "sphere-like" and abs(float(h(hi))) > 1e-10:
        raise InvalidWarpError(f"{spec.name}: h must vanish at r = {hi}")
    top = hi if math.isfinite(hi) else lo + 20.0
    rs = np.linspace(lo, top, 1001)[1:-1]
    vals = np.asarray(jax.vmap(h)(jnp.asarray(rs)))
    if not np.all(vals > 0):
        bad = rs[np.argmin(vals)]
        raise InvalidWarpError(f"{spec.name}: h is not positive in the interior (h({bad:.4g}) <= 0)")


def warped_metric(x, p, h=jnp.tanh, fiber=flat_metric, fiber_static=(), fiber_keys=(), fiber_scale=1.0):
    r = x[0]
    fp = {k: p["fiber_" + k] for k in fiber_keys}
    G0 = fiber_scale * fiber(x[1:], fp, **dict(fiber_static))
    return jax.scipy.linalg.block_diag(jnp.ones((1, 1), dtype=x.dtype), h(r) ** 2 * G0)


def radial_potential(x, p, F=None):
    return F(x[0])


def build_warped_product(spec: WarpedProductSpec, f: Callable | None = None, lam: float = 0.0) -> MetricFamily:
    """Assemble g = dr^2 + h^2 g0; ``f`` is a function of r (default: integral of h)."""
    _check_warp(spec)
    fiber = spec.g0
    m = fiber.n
    lo, hi = spec.valid_r
    fiber_chart = fiber.chart

    def valid(x):
        return bool(lo < x[0] < hi) and fiber_chart.is_valid(x[1:])

    box_fiber = fiber_chart.default_box or _box(-2.0, 2.0, m)
    chart = Chart(
        m + 1,
        ("r",) + fiber_chart.coordinate_names,
        valid,
        (spec.sample_r,) + tuple(box_fiber),
        radial=lambda x: float(x[0]),
        compact_axes=tuple((i + 1, a, b) for i, a, b in fiber_chart.compact_axes),
    )
    params = {"fiber_" + k: v for k, v in fiber.params.items()}
    g_static = (
        ("h", spec.h),
        ("fiber", fiber.g_fn),
        ("fiber_static", fiber.g_static),
        ("fiber_keys", tuple(sorted(fiber.params))),
        ("fiber_scale", fiber.scale),
    )
    F = f if f is not None else spec.potential()
    return MetricFamily(
        chart, warped_metric, radial_potential, lam, params, g_static, (("F", F),), name=spec.name
    )


@dataclass(frozen=True)
class WarpProfile:
    h: Callable
    topology: str
    r_domain: tuple[float, float]
    antiderivative: Callable


WARP_PROFILES: dict[str, WarpProfile] = {
    "flat": WarpProfile(lambda r: r, "plane-like", (0.0, math.inf), lambda r: 0.5 * r**2),
    "sphere": WarpProfile(jnp.sin, "sphere-like", (0.0, math.pi), lambda r: -jnp.cos(r)),
    "hyperbolic": WarpProfile(jnp.sinh, "plane-like", (0.0, math.inf), jnp.cosh),
    "cigar": WarpProfile(jnp.tanh, "plane-like", (0.0, math.inf), lambda r: jnp.log(jnp.cosh(r))),
}


def warped_spec(profile: str, fiber_dim: int = 1, chart: str = "stereographic") -> WarpedProductSpec:
    if profile not in WARP_PROFILES:
        raise UnknownModelError(f"unknown warp profile {profile!r}; known: {sorted(WARP_PROFILES)}")
    p = WARP_PROFILES[profile]
    fiber = unit_sphere_fiber(fiber_dim, chart)
    return WarpedProductSpec(p.h, fiber, p.topology, p.r_domain, f"warped-{profile}-S{fiber_dim}", p.antiderivative)


def warped_catalog(fiber_dims: Sequence[int] = (1, 2)) -> list[MetricFamily]:
    """Warped models carrying the canonical potential f = integral of h, so Hess f = h' g."""
    return [build_warped_product(warped_spec(name, d)) for name in WARP_PROFILES for d in fiber_dims]


def surface_soliton_residual(spec: WarpedProductSpec, f: Callable, lam: float, r_grid,
                             tolerance: float = 1e-9) -> ResidualReport:
    """Residuals of the two scalar soliton equations of a warped surface.

    radial: -h''/h + f'' - lam;  fiber: -h''/h + f' h'/h - lam.
    """
    if spec.g0.n != 1:
        raise UnsupportedDimensionError("the surface soliton equations are for a 1-dimensional fiber")
    r = np.atleast_1d(np.asarray(r_grid, dtype=float))
    lo, hi = spec.r_domain
    h = spec.h
    dh, ddh = jax.grad(h), jax.grad(jax.grad(h))
    df, ddf = jax.grad(f), jax.grad(jax.grad(f))
    hv = np.asarray(jax.vmap(h)(jnp.asarray(r)))
    if np.any(r <= lo) or np.any(r >= hi) or np.any(np.abs(hv) < 1e-12):
        raise DomainError("r grid touches a zero of h or leaves the warp domain")
    rj = jnp.asarray(r)
    h1 = np.asarray(jax.vmap(dh)(rj))
    h2 = np.asarray(jax.vmap(ddh)(rj))
    f1 = np.asarray(jax.vmap(df)(rj))
    f2 = np.asarray(jax.vmap(ddf)(rj))
    radial = -h2 / hv + f2 - lam
    fiber = -h2 / hv + f1 * h1 / hv - lam
    res = np.maximum(np.abs(radial), np.abs(fiber))
    return ResidualReport.build("surface-soliton-ode", r[:, None], res, tolerance)


# --------------------------------------------------------------------------
# warped-product detection from Hess f = mu g


@dataclass(frozen=True, eq=False)
class WarpDetection:
    is_warped: bool
    mu_values: np.ndarray
    trace_free_norms: np.ndarray
    trivial: bool = False


def _as_metric(model) -> MetricFamily:
    return model.metric if isinstance(model, SolitonInstance) else model


def detect_warped_product(model, grid: SampleGrid | None = None, tolerance: float = 1e-7) -> WarpDetection:
    """Test Hess f = mu g on the grid; mu = (Laplacian f) / n per point."""
    m = _as_metric(model)
    pts = grid.points if grid is not None else SampleGrid.sample(m, 40, 0).points
    geo = m.geometry(pts, order=2)
    n = m.n
    H = geo.frame_components(geo.hess_f, 2)
    mu = np.trace(H, axis1=1, axis2=2) / n
    tf = H - mu[:, None, None] * np.eye(n)
    norms = np.sqrt(np.sum(tf**2, axis=(1, 2)))
    grad_norm = np.sqrt(np.einsum("pi,pi->p", geo.df, geo.grad_f))
    if np.max(grad_norm) < 1e-12:
        return WarpDetection(False, mu, norms, trivial=True)
    return WarpDetection(bool(np.all(norms < tolerance)), mu, norms)


# --------------------------------------------------------------------------
# f-volume


@dataclass(frozen=True)
class VolumeEstimate:
    value: float | None
    divergent: bool
    box_value: float
    doubled_value: float
    box: tuple[tuple[float, float], ...]


_VOLUME_BATCH = 1 << 15


def _density_fn(m: MetricFamily) -> Callable:
    gfn, ffn = m.traced_g(), m.traced_f()

    def density(x):
        return jnp.exp(-ffn(x)) * jnp.sqrt(jnp.linalg.det(gfn(x)))

    return jax.jit(jax.vmap(density))


def _midpoint(m: MetricFamily, density: Callable, box: np.ndarray, res: Sequence[int]) -> float:
    axes = []
    weights = []
    for (lo, hi), k in zip(box, res):
        step = (hi - lo) / k
        axes.append(lo + step * (np.arange(k) + 0.5))
        weights.append(step)
    total = 0.0
    corners = np.array(np.meshgrid(*[[a[0], a[-1]] for a in axes], indexing="ij")).reshape(len(axes), -1).T
    for x in corners:
        m.chart.require_valid(x)
    mesh = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, len(axes))
    for start in range(0, mesh.shape[0], _VOLUME_BATCH):
        block = mesh[start : start + _VOLUME_BATCH]
        if block.shape[0] < _VOLUME_BATCH:
            pad = np.repeat(block[:1], _VOLUME_BATCH - block.shape[0], axis=0)
            vals = np.asarray(density(jnp.asarray(np.concatenate([block, pad]))))[: block.shape[0]]
        else:
            vals = np.asarray(density(jnp.asarray(block)))
        total += float(np.sum(vals))
    if np.isnan(total):
        raise DomainError("density is undefined somewhere in the integration box")
    return total * float(np.prod(weights))


def f_volume_estimate(model, integration_box, resolution: int | Sequence[int] = 400,
                      divergence_tol: float = 0.01) -> VolumeEstimate:
    """Midpoint-rule integral of exp(-f) sqrt(det g) over a coordinate box.

    Non-compact axes are doubled about their center to test convergence; if the
    value moves by more than ``divergence_tol`` (relative), the integral is
    reported as divergent with ``value=None``.
    """
    m = _as_metric(model)
    box = np.asarray(integration_box, dtype=float)
    n = m.n
    if box.shape != (n, 2) or np.any(box[:, 1] <= box[:, 0]):
        raise ValueError(f"integration box must be {n} increasing (lo, hi) pairs")
    res = [int(resolution)] * n if np.isscalar(resolution) else [int(k) for k in resolution]
    if len(res) != n or min(res) < 1:
        raise ValueError("resolution must be a positive integer or one per axis")
    compact = {i for i, _, _ in m.chart.compact_axes}
    density = _density_fn(m)
    value = _midpoint(m, density, box, res)
    doubled = box.copy()
    for i in range(n):
        if i in compact:
            continue
        c, w = box[i].mean(), box[i, 1] - box[i, 0]
        doubled[i] = (c - w, c + w)
    res2 = [k if i in compact else 2 * k for i, k in enumerate(res)]
    big = _midpoint(m, density, doubled, res2)
    divergent = not (math.isfinite(big) and abs(big - value) <= divergence_tol * abs(value))
    return VolumeEstimate(
        None if divergent else value, divergent, value, big, tuple(map(tuple, box.tolist()))
    )
