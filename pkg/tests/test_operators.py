import math

import numpy as np
import pytest

from integrator_silt import (
    GridContext,
    GridFunction,
    InvalidSpec,
    OperatorSpec,
    UnsupportedSpec,
    build_operator,
    declared_kernel_split,
    kernel_indicators,
    make_indicator,
    orthonormalize,
)
from integrator_silt.grid import ProfileSpec
from integrator_silt.operators import KERNEL_TOL, compact_operator_norm


class TestBuildOperator:
    def test_identity(self):
        op = build_operator(OperatorSpec.identity(), GridContext(16))
        assert np.array_equal(op.matrix, np.eye(16))
        assert len(op.kernel_frame) == 0
        assert op.sigma_min_complement == pytest.approx(1.0, abs=1e-14)

    def test_projector_complement_full_interval(self):
        op = build_operator(OperatorSpec.bridge(), GridContext(16))
        assert len(op.kernel_frame) == 1
        member = op.kernel_frame.members[0]
        assert np.allclose(member.values, np.ones(16), atol=1e-12)  # normalized all-ones
        image = op.apply(make_indicator(op.ctx, 0.0, 1.0))
        assert image.norm() < 1e-12

    def test_fbm_self_similarity_exponent(self):
        # log-log regression of ||A 1_[0,t]||^2 against t; the kernel is
        # homogeneous, so the slope recovers twice the similarity exponent
        ctx = GridContext(64)
        op = build_operator(OperatorSpec.fbm_volterra(0.75), ctx)
        ts = np.arange(1, 65) / 64
        norms = np.array([op.indicator_image_norm_sq(0, j) for j in range(1, 65)])
        sel = ts >= 0.25
        slope = np.polyfit(np.log(ts[sel]), np.log(norms[sel]), 1)[0]
        assert abs(slope - 1.5) <= 0.03

    def test_fbm_unit_variance_at_one(self):
        op = build_operator(OperatorSpec.fbm_volterra(0.75), GridContext(64))
        assert op.indicator_image_norm_sq(0, 64) == pytest.approx(1.0, abs=2e-3)

    def test_invalid_alpha(self):
        with pytest.raises(InvalidSpec):
            OperatorSpec.fbm_volterra(0.5)
        with pytest.raises(InvalidSpec):
            OperatorSpec.fbm_volterra(1.0)

    def test_zero_direction_rejected(self):
        with pytest.raises(InvalidSpec):
            OperatorSpec.projector_complement(ProfileSpec(kind="zero"))

    def test_custom_matrix_shape_mismatch(self):
        with pytest.raises(InvalidSpec):
            build_operator(OperatorSpec.custom_matrix(np.eye(4)), GridContext(8))


class TestKernelAnalysis:
    def test_kernel_members_annihilated(self, catalog_ops_64):
        for name, op in catalog_ops_64.items():
            for e in op.kernel_frame:
                assert op.apply(e).norm() < 1e-8, name

    def test_complement_lower_bound_witness(self, catalog_ops_64):
        rng = np.random.default_rng(42)
        for name, op in catalog_ops_64.items():
            smc = op.sigma_min_complement
            assert smc > 0, name
            for _ in range(100):
                v = GridFunction(op.ctx, rng.standard_normal(op.ctx.n))
                v = v - op.kernel_frame.project(v)
                assert op.apply(v).norm() >= smc * v.norm() * (1 - 1e-10), name

    def test_small_compact_perturbation_invertible(self):
        ctx = GridContext(32)
        spec = OperatorSpec.compact_perturbation(kernel="sine", scale=1.0)
        norm = compact_operator_norm(spec, ctx)
        safe = OperatorSpec.compact_perturbation(kernel="sine", scale=0.9 / norm)
        op = build_operator(safe, ctx)
        assert len(op.kernel_frame) == 0


class TestKernelIndicators:
    def test_identity_empty(self, wiener_64):
        assert kernel_indicators(wiener_64) == []

    def test_full_interval_projector(self):
        op = build_operator(OperatorSpec.bridge(), GridContext(16))
        assert kernel_indicators(op) == [(0.0, 1.0)]

    def test_two_half_projectors_span_contains_sum(self):
        spec = OperatorSpec.projector_complement(
            ProfileSpec(kind="indicator", a=0.0, b=0.5),
            ProfileSpec(kind="indicator", a=0.5, b=1.0),
        )
        op = build_operator(spec, GridContext(16))
        found = kernel_indicators(op)
        assert found == [(0.0, 0.5), (0.0, 1.0), (0.5, 1.0)]
        for t1, t2 in found:
            assert op.apply(make_indicator(op.ctx, t1, t2)).norm() < 1e-10

    def test_stable_under_refinement(self):
        spec = OperatorSpec.projector_complement(
            ProfileSpec(kind="indicator", a=0.0, b=0.5),
            ProfileSpec(kind="indicator", a=0.5, b=1.0),
        )
        coarse = kernel_indicators(build_operator(spec, GridContext(32)))
        fine = kernel_indicators(build_operator(spec, GridContext(64)))
        assert coarse == fine


class TestDeclaredKernelSplit:
    def test_full_interval_is_step(self):
        ctx = GridContext(16)
        split = declared_kernel_split(OperatorSpec.projector_complement(
            ProfileSpec(kind="indicator", a=0.0, b=1.0)), ctx)
        assert len(split.step) == 1 and not split.smooth
        assert split.jump_nodes == (0.0, 1.0)
        assert np.allclose(split.step[0].values, np.ones(16), atol=1e-12)

    def test_sin_profile_is_smooth(self):
        ctx = GridContext(16)
        split = declared_kernel_split(OperatorSpec.projector_complement(
            ProfileSpec(kind="sinusoid", m=1)), ctx)
        assert not split.step and len(split.smooth) == 1

    def test_mixed_split_gram_schmidt_oracle(self):
        ctx = GridContext(16)
        ind = ProfileSpec(kind="indicator", a=0.0, b=0.5)
        sin = ProfileSpec(kind="sinusoid", m=1)
        split = declared_kernel_split(OperatorSpec.projector_complement(ind, sin), ctx)
        assert len(split.step) == 1 and len(split.smooth) == 1
        assert split.jump_nodes == (0.0, 0.5)
        # oracle: explicit Gram-Schmidt of [step, sin]
        frame = orthonormalize([ind.build(ctx), sin.build(ctx)])
        assert np.allclose(split.smooth[0].values, frame.members[1].values, atol=1e-12)
        assert split.step[0].inner(split.smooth[0]) == pytest.approx(0.0, abs=1e-12)

    def test_unsupported_kinds(self):
        with pytest.raises(UnsupportedSpec):
            declared_kernel_split(OperatorSpec.identity(), GridContext(8))


class TestSpecSerialization:
    def test_round_trip(self):
        specs = [
            OperatorSpec.identity(),
            OperatorSpec.generalized_bridge(),
            OperatorSpec.compact_perturbation(kernel="gauss", scale=0.3, width=0.2),
            OperatorSpec.fbm_volterra(0.8),
            OperatorSpec.custom_matrix(np.eye(3), assume_invertible=True),
        ]
        for spec in specs:
            assert OperatorSpec.from_dict(spec.to_dict()) == spec
