import math

import jax
import jax.numpy as jnp
import numpy as np
import pytest

from _catalog import CASES, IDS, grid_for, instance
from gradsoliton import (
    CATALOG,
    DomainError,
    InvalidWarpError,
    ParameterError,
    SampleGrid,
    SolitonResidualFailed,
    UnknownModelError,
    UnsupportedDimensionError,
    WarpedProductSpec,
    build_model,
    build_warped_product,
    curvature_suite,
    detect_warped_product,
    f_volume_estimate,
    list_models,
    perturb_potential,
    surface_soliton_residual,
)
from gradsoliton.models import (
    WARP_PROFILES,
    cigar_radial_potential,
    gauss_legendre_antiderivative,
    unit_circle,
    unit_sphere_fiber,
    warped_catalog,
    warped_spec,
)


class TestCatalog:
    def test_size_and_names(self):
        assert len(CATALOG) >= 7
        rows = list_models()
        assert len(rows) == len(CATALOG)
        assert any(r["signature"].startswith("round_sphere(n") for r in rows)
        cigar = next(r for r in rows if r["name"] == "cigar")
        assert cigar["note"].startswith("steady, n=2, h=tanh r")

    @pytest.mark.parametrize("case_id", IDS)
    def test_soliton_residual(self, case_id):
        inst = instance(case_id)
        grid = grid_for(inst, count=30, seed=3)
        assert np.max(inst.metric.geometry(grid.points, order=2).soliton_residual()) < 1e-10

    def test_gaussian_exact(self):
        inst = instance("gaussian3")
        grid = grid_for(inst, count=10)
        assert np.max(inst.metric.geometry(grid.points, order=2).soliton_residual()) == 0.0

    def test_cigar_radial_band(self):
        inst = instance("cigar")
        grid = SampleGrid.sample(inst.metric, count=50, seed=1, radial=(0.1, 3.0))
        r = np.arcsinh(np.linalg.norm(grid.points, axis=1))
        assert r.min() >= 0.1 and r.max() <= 3.0
        assert np.max(inst.metric.geometry(grid.points, order=2).soliton_residual()) < 1e-8

    def test_kinds_and_lambda(self):
        assert instance("cylinder3").metric.lam == 1.0
        assert instance("cylinder3").kind == "shrinking"
        assert instance("cigar").kind == "steady"
        assert instance("hyperbolic3").kind == "expanding"
        assert instance("hypcylinder3").metric.lam == -1.0

    def test_expected_classes_are_labels(self):
        from _catalog import EXPECTED

        for case_id in IDS:
            assert instance(case_id).expected_class == EXPECTED[case_id]

    @pytest.mark.parametrize("name,chart", [("round_sphere", "polar"), ("cylinder", "polar"), ("cigar", "warped")])
    def test_alternative_charts(self, name, chart):
        inst = build_model(name, {}, chart)
        grid = grid_for(inst, count=10)
        assert np.max(inst.metric.geometry(grid.points, order=2).soliton_residual()) < 1e-10

    def test_sphere_radius_scales_lambda(self):
        inst = build_model("round_sphere", {"n": 3, "a": 2.0})
        assert inst.metric.lam == pytest.approx(0.5)
        assert curvature_suite(inst.metric, [0.1, 0.2, 0.3])["scal"] == pytest.approx(1.5, rel=1e-12)

    def test_scaled_instance_is_soliton(self):
        inst = instance("cylinder3").scaled(2.0)
        assert inst.metric.lam == 0.5
        grid = grid_for(inst, count=10)
        assert np.max(inst.metric.geometry(grid.points, order=2).soliton_residual()) < 1e-10


class TestErrors:
    def test_unknown_model(self):
        with pytest.raises(UnknownModelError):
            build_model("torus")

    @pytest.mark.parametrize(
        "name,params,chart",
        [
            ("gaussian", {"n": 0}, None),
            ("gaussian", {"n": 2.5}, None),
            ("round_sphere", {"a": -1.0}, None),
            ("cylinder", {"n": 2}, None),
            ("round_sphere", {"radius": 1.0}, None),
            ("gaussian", {}, "polar"),
        ],
    )
    def test_bad_parameters(self, name, params, chart):
        with pytest.raises(ParameterError):
            build_model(name, params, chart)

    def test_perturbed_is_not_a_soliton(self):
        bad = perturb_potential(instance("gaussian3"), 0.01)
        grid = grid_for(bad, count=10)
        assert np.max(bad.metric.geometry(grid.points, order=2).soliton_residual()) > 1e-4
        from gradsoliton.models import check_soliton

        with pytest.raises(SolitonResidualFailed, match="soliton-residual-failed"):
            check_soliton(bad.metric)


class TestWarpedProducts:
    def test_sine_gives_unit_sphere(self):
        m = build_warped_product(warped_spec("sphere", 1))
        assert curvature_suite(m, [1.0, 2.0])["scal"] == pytest.approx(2.0, rel=1e-12)

    @pytest.mark.parametrize("fiber_dim", [1, 2])
    def test_identity_warp_is_flat(self, fiber_dim):
        m = build_warped_product(warped_spec("flat", fiber_dim))
        x = np.array([1.3] + [0.4] * fiber_dim)
        assert np.max(np.abs(curvature_suite(m, x)["riemann"].components)) < 1e-13

    @pytest.mark.parametrize("r", [0.5, 2.0])
    def test_tanh_gives_cigar(self, r):
        m = build_warped_product(warped_spec("cigar", 1))
        scal = curvature_suite(m, [r, 1.0])["scal"]
        h = np.tanh(r)
        h2 = -2 * np.tanh(r) / np.cosh(r) ** 2
        assert scal == pytest.approx(-2 * h2 / h, rel=1e-12)
        assert scal == pytest.approx(4 / np.cosh(r) ** 2, rel=1e-12)

    def test_nonpositive_warp_rejected(self):
        with pytest.raises(InvalidWarpError):
            build_warped_product(WarpedProductSpec(jnp.sin, unit_circle(), "plane-like", (0.0, math.inf)))
        with pytest.raises(InvalidWarpError):
            build_warped_product(WarpedProductSpec(lambda r: 2 * r, unit_circle(), "plane-like", (0.0, math.inf)))
        with pytest.raises(InvalidWarpError):
            WarpedProductSpec(jnp.sin, unit_circle(), "plane-like", (1.0, 0.0))

    def test_numeric_antiderivative(self):
        F = gauss_legendre_antiderivative(jnp.tanh, 0.0)
        for r in (0.3, 1.0, 2.5):
            assert float(F(r)) == pytest.approx(math.log(math.cosh(r)), rel=1e-13)
        spec = WarpedProductSpec(jnp.tanh, unit_circle(), "plane-like", (0.0, math.inf))
        m = build_warped_product(spec)
        grid = SampleGrid.sample(m, 5, seed=0)
        geo = m.geometry(grid.points, order=2)
        hess = geo.frame_components(geo.hess_f, 2)
        mu = 1 / np.cosh(grid.points[:, 0]) ** 2
        np.testing.assert_allclose(hess, mu[:, None, None] * np.eye(2), atol=1e-12)


class TestDetection:
    @pytest.mark.parametrize("m", warped_catalog(), ids=lambda m: m.name)
    def test_canonical_potential(self, m):
        grid = SampleGrid.sample(m, 10, seed=0)
        det = detect_warped_product(m, grid)
        assert det.is_warped
        profile = WARP_PROFILES[m.name.split("-")[1]]
        hp = np.asarray(jax.vmap(jax.grad(profile.h))(jnp.asarray(grid.points[:, 0])))
        np.testing.assert_allclose(det.mu_values, hp, atol=1e-7)

    def test_gaussian(self):
        det = detect_warped_product(instance("gaussian3"))
        assert det.is_warped
        np.testing.assert_allclose(det.mu_values, 0.5, atol=1e-14)

    def test_cigar_mu_is_f_second_derivative(self):
        inst = instance("cigar")
        grid = grid_for(inst, count=20)
        det = detect_warped_product(inst, grid)
        assert det.is_warped
        r = np.arcsinh(np.linalg.norm(grid.points, axis=1))
        np.testing.assert_allclose(det.mu_values, -2 / np.cosh(r) ** 2, atol=1e-7)

    def test_cylinder_is_not_warped_by_f(self):
        assert not detect_warped_product(instance("cylinder3")).is_warped

    def test_constant_potential_is_trivial(self):
        det = detect_warped_product(instance("sphere3"))
        assert det.trivial and not det.is_warped

    def test_generic_potential_on_sphere(self):
        m = instance("sphere3").metric.with_potential(lambda x, p: x[0] * x[1])
        det = detect_warped_product(m, grid_for(instance("sphere3"), count=10))
        assert not det.is_warped
        assert np.max(det.trace_free_norms) > 1e-3


class TestSurfaceODE:
    def test_cigar(self):
        rep = surface_soliton_residual(warped_spec("cigar", 1), cigar_radial_potential, 0.0, np.linspace(0.1, 3, 50))
        assert rep.verdict and rep.max_residual < 1e-9

    def test_round_sphere(self):
        rep = surface_soliton_residual(warped_spec("sphere", 1), lambda r: 0.0 * r, 1.0, np.linspace(0.1, 3, 50))
        assert rep.max_residual == 0.0

    def test_wrong_lambda_fails(self):
        rep = surface_soliton_residual(warped_spec("cigar", 1), cigar_radial_potential, 1.0, np.linspace(0.1, 3, 50))
        assert not rep.verdict
        assert rep.per_point[-1][1] == pytest.approx(1.0, abs=1e-9)

    def test_grid_at_tip(self):
        with pytest.raises(DomainError):
            surface_soliton_residual(warped_spec("cigar", 1), cigar_radial_potential, 0.0, [0.0, 1.0])

    def test_higher_fiber_unsupported(self):
        with pytest.raises(UnsupportedDimensionError):
            surface_soliton_residual(warped_spec("cigar", 2), cigar_radial_potential, 0.0, [1.0])


class TestVolume:
    def test_line(self):
        est = f_volume_estimate(build_model("gaussian", {"n": 1, "lam": 1.0}), [[-6, 6]], 400)
        assert not est.divergent
        assert est.value == pytest.approx(math.sqrt(2 * math.pi), abs=1e-6)

    def test_plane(self):
        est = f_volume_estimate(build_model("gaussian", {"n": 2, "lam": 0.5}), [[-8, 8]] * 2, 400)
        assert est.value == pytest.approx(4 * math.pi, abs=1e-4)

    def test_sphere_times_line(self):
        inst = build_model("cylinder", {"n": 3}, chart="polar")
        est = f_volume_estimate(inst, [[0, math.pi], [0, 2 * math.pi], [-8, 8]], [400, 16, 200])
        assert est.value == pytest.approx(4 * math.pi * math.sqrt(2 * math.pi), abs=1e-3)
        # compact axes are never enlarged
        assert est.doubled_value == pytest.approx(est.value, rel=1e-9)

    def test_expander_diverges(self):
        est = f_volume_estimate(build_model("gaussian", {"n": 2, "lam": -0.5}), [[-8, 8]] * 2, 100)
        assert est.divergent and est.value is None

    def test_steady_cigar_diverges(self):
        est = f_volume_estimate(instance("cigar"), [[-10, 10]] * 2, 200)
        assert est.divergent

    def test_box_outside_chart(self):
        with pytest.raises(DomainError):
            f_volume_estimate(instance("hyperbolic3"), [[-2, 2]] * 3, 10)

    def test_bad_box(self):
        with pytest.raises(ValueError):
            f_volume_estimate(instance("gaussian3"), [[-1, 1]] * 2, 10)


def test_fiber_spheres():
    assert unit_sphere_fiber(1).n == 1
    assert unit_sphere_fiber(2).n == 2
    assert len(CASES) == len(IDS)
