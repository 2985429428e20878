import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from _catalog import grid_for, instance
from gradsoliton import (
    BivectorBasis,
    ContractViolation,
    TensorField,
    UnsupportedDimensionError,
    build_model,
    curvature_operator,
    kulkarni_nomizu,
    random_algebraic_curvature,
    sharp_via_B,
    sharp_via_structure_constants,
    weyl_decompose,
)
from gradsoliton.bivector import (
    matrix_to_tensor,
    operator_from_frame_riemann,
    riemann_symmetry_defect,
    sharp_from_b,
    sharp_matrix,
    square_from_riemann,
    tensor_to_matrix,
    weyl_arrays,
    weyl_traces,
)
from gradsoliton.verify import FrameData, _sum_R_ric

seeds = st.integers(min_value=0, max_value=2**31 - 1)
dims = st.sampled_from([3, 4, 5])


class TestBasis:
    def test_sizes(self):
        for n in range(2, 7):
            assert BivectorBasis(n).size == n * (n - 1) // 2

    def test_orthonormal(self):
        b = BivectorBasis(4)
        gram = np.array([[b.inner(A, B) for B in b.matrices] for A in b.matrices])
        np.testing.assert_array_equal(gram, np.eye(6))

    def test_so3_structure_constants(self):
        C = BivectorBasis(3).structure_constants
        np.testing.assert_array_equal(C, -np.swapaxes(C, 0, 1))
        # each ordered pair of distinct so(3) generators brackets to +-1 times the third
        assert np.count_nonzero(C) == 6
        assert set(np.abs(C[C != 0])) == {1.0}

    def test_structure_constants_totally_antisymmetric(self):
        C = BivectorBasis(5).structure_constants
        np.testing.assert_allclose(C, -np.swapaxes(C, 1, 2), atol=0)


class TestCurvatureOperator:
    def test_unit_sphere_identity(self):
        op = curvature_operator(instance("sphere3").metric, [0.2, 0.5, -0.1])
        np.testing.assert_allclose(op.matrix, np.eye(3), atol=1e-12)
        np.testing.assert_allclose(op.spectrum, [1, 1, 1], atol=1e-12)

    def test_sphere_line_mixed_planes_flat(self):
        op = curvature_operator(instance("cylinder3").metric, [0.3, -0.2, 1.0])
        np.testing.assert_allclose(op.spectrum, [0, 0, 1], atol=1e-12)

    def test_cigar_single_entry(self):
        m = build_model("cigar", chart="warped").metric
        op = curvature_operator(m, [1.0, 1.0])
        assert op.matrix.shape == (1, 1)
        assert op.matrix[0, 0] == pytest.approx(2 / np.cosh(1.0) ** 2, rel=1e-12)

    @given(seed=seeds, n=dims)
    @settings(max_examples=15, deadline=None)
    def test_matrix_tensor_roundtrip(self, seed, n):
        R = random_algebraic_curvature(n, np.random.default_rng(seed))
        np.testing.assert_allclose(matrix_to_tensor(tensor_to_matrix(R), n), R, atol=1e-14)

    def test_eigenvectors_diagonalize(self, rng):
        R = random_algebraic_curvature(4, rng)
        op = operator_from_frame_riemann(R, np.eye(4))
        np.testing.assert_allclose(op.eigenvectors.T @ op.matrix @ op.eigenvectors, np.diag(op.spectrum), atol=1e-12)
        assert np.all(np.diff(op.spectrum) >= 0)


class TestSharp:
    def test_zero(self):
        assert np.all(sharp_matrix(np.zeros((6, 6)), 4) == 0)

    def test_identity_n3(self):
        np.testing.assert_allclose(sharp_matrix(np.eye(3), 3), np.eye(3), atol=1e-15)

    def test_flat(self):
        m = instance("gaussian3").metric
        assert np.all(sharp_via_B(m, [0.1, 0.2, 0.3]).components == 0)

    def test_unit_sphere_three(self):
        m = instance("sphere3").metric
        x = [0.3, 0.1, -0.4]
        np.testing.assert_allclose(tensor_to_matrix(sharp_via_B(m, x).components), np.eye(3), atol=1e-12)

    @given(seed=seeds, n=dims)
    @settings(max_examples=30, deadline=None)
    def test_dual_formula_random(self, seed, n):
        R = random_algebraic_curvature(n, np.random.default_rng(seed))
        via_b = tensor_to_matrix(sharp_from_b(R))
        op = operator_from_frame_riemann(R, np.eye(n))
        via_c = sharp_via_structure_constants(op, BivectorBasis(n))
        np.testing.assert_allclose(via_b, via_c, atol=1e-10)

    def test_square_plus_sharp_is_curvature_tensor(self, rng):
        R = random_algebraic_curvature(4, rng)
        S = sharp_from_b(R)
        np.testing.assert_allclose(S, -np.swapaxes(S, 0, 1), atol=1e-14)
        np.testing.assert_allclose(S, np.transpose(S, (2, 3, 0, 1)), atol=1e-14)
        assert riemann_symmetry_defect(S + square_from_riemann(R)) < 1e-13

    def test_mismatched_frames(self, rng):
        op = operator_from_frame_riemann(random_algebraic_curvature(4, rng), np.eye(4))
        with pytest.raises(ContractViolation):
            sharp_via_structure_constants(op, BivectorBasis(3))
        with pytest.raises(ContractViolation):
            sharp_matrix(np.eye(3), 4)

    def test_square_matches_matrix_square(self, rng):
        R = random_algebraic_curvature(4, rng)
        M = tensor_to_matrix(R)
        np.testing.assert_allclose(tensor_to_matrix(square_from_riemann(R)), M @ M, atol=1e-12)


class TestRandomTensors:
    @given(seed=seeds, n=dims)
    @settings(max_examples=20, deadline=None)
    def test_symmetries(self, seed, n):
        assert riemann_symmetry_defect(random_algebraic_curvature(n, np.random.default_rng(seed))) < 1e-13

    def test_seeded(self):
        a = random_algebraic_curvature(4, np.random.default_rng(7))
        b = random_algebraic_curvature(4, np.random.default_rng(7))
        np.testing.assert_array_equal(a, b)


class TestKulkarniNomizu:
    def test_metric_with_itself(self):
        g = TensorField(np.eye(3), "ll", np.zeros(3))
        gg = kulkarni_nomizu(g, g).components
        assert gg[0, 1, 1, 0] == 2.0
        assert riemann_symmetry_defect(gg) == 0

    def test_zero(self):
        g = TensorField(np.eye(3), "ll", np.zeros(3))
        h = TensorField(np.zeros((3, 3)), "ll", np.zeros(3))
        assert np.all(kulkarni_nomizu(h, g).components == 0)

    def test_asymmetric_rejected(self):
        g = TensorField(np.eye(2), "ll", np.zeros(2))
        h = TensorField(np.array([[0.0, 1.0], [2.0, 0.0]]), "ll", np.zeros(2))
        with pytest.raises(ContractViolation):
            kulkarni_nomizu(h, g)


class TestWeyl:
    @pytest.mark.parametrize("case_id", ["sphere3", "cylinder3", "hyperbolic3", "hypcylinder3", "gaussian3", "sphere4", "cylinder4"])
    def test_conformally_flat_models(self, case_id):
        m = instance(case_id).metric
        for x in grid_for(instance(case_id), count=4).points:
            assert np.max(np.abs(weyl_decompose(m, x)["weyl"].components)) < 1e-9

    def test_trace_free(self):
        m = instance("rigid").metric
        for x in grid_for(instance("rigid"), count=4).points:
            W = weyl_decompose(m, x)["weyl"].components
            assert np.max(np.abs(W)) > 0.1
            assert weyl_traces(W, np.linalg.inv(m.g(x))) < 1e-9

    @given(seed=seeds, n=dims)
    @settings(max_examples=20, deadline=None)
    def test_trace_free_random(self, seed, n):
        rng = np.random.default_rng(seed)
        R = random_algebraic_curvature(n, rng)
        ric = np.einsum("ijjk->ik", R)
        W, rest = weyl_arrays(R, ric, np.trace(ric), np.eye(n))
        assert weyl_traces(W, np.eye(n)) < 1e-12
        np.testing.assert_allclose(W + rest, R, atol=1e-14)
        if n == 3:
            assert np.max(np.abs(W)) < 1e-12

    def test_surface_unsupported(self):
        with pytest.raises(UnsupportedDimensionError):
            weyl_decompose(instance("sphere2").metric, [0.1, 0.1])

    def test_weyl_term_coefficient_is_two(self):
        """On S^2 x R^2 the Weyl-decomposed Ricci equation closes only with factor 2 on W."""
        inst = instance("rigid")
        grid = grid_for(inst, count=5)
        d = FrameData(inst.metric.geometry(grid.points, order=4))
        n, lam = d.n, d.lam
        W, _ = weyl_arrays(d.R, d.ric, d.scal, np.broadcast_to(np.eye(n), d.ric.shape))
        gap = np.sum(d.ric**2, axis=(1, 2)) - d.scal**2 / (n - 1)
        c = 2 * n * d.scal / ((n - 1) * (n - 2))
        lhs = d.f_laplacian(d.dric, d.ddric)
        base = (
            2 * lam * d.ric
            - c[:, None, None] * d.ric
            + 4 / (n - 2) * np.einsum("pya,paz->pyz", d.ric, d.ric)
            - 2 / (n - 2) * gap[:, None, None] * np.eye(n)
        )
        weyl_term = _sum_R_ric(W, d.ric)
        assert np.max(np.abs(weyl_term)) > 0.1
        assert np.max(np.abs(lhs - (base - 2 * weyl_term))) < 1e-10
        assert np.max(np.abs(lhs - (base - weyl_term))) > 0.1
