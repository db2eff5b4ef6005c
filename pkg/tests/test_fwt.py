import math

import numpy as np
import pytest

from integrator_silt import (
    FwtProbe,
    GridContext,
    GridFunction,
    KernelIndicator,
    NotAKernelIndicator,
    OperatorSpec,
    SingularGram,
    build_operator,
    fwt_integrand,
    lemma2_weak_convergence_scan,
    lemma3_ratio_scan,
    make_indicator,
    regularized_fwt_quadrature,
    regularized_integrand_thm1,
    theorem3_integral,
    thm2_integrand,
)
from integrator_silt.grid import ProfileSpec
from integrator_silt.silt import SimplexPoint

TWO_PI = 2.0 * math.pi


def random_tuple(rng, ctx, k, min_gap=2):
    while True:
        idx = np.sort(rng.choice(ctx.n + 1, size=k, replace=False))
        if np.all(np.diff(idx) >= min_gap):
            return idx / ctx.n


class TestFwtIntegrand:
    def test_zero_probe_is_gram_reciprocal(self, wiener_64):
        ctx = wiener_64.ctx
        probe = FwtProbe(GridFunction.zeros(ctx), GridFunction.zeros(ctx))
        times = SimplexPoint.from_times(ctx, (0.125, 0.5, 0.75))
        val = fwt_integrand(wiener_64, times, probe)
        G = 0.375 * 0.25  # independent Wiener increments
        assert val == pytest.approx(1.0 / (TWO_PI**2 * G), rel=1e-12)

    def test_wiener_k2_reciprocal_gap(self, wiener_64):
        ctx = wiener_64.ctx
        probe = FwtProbe(GridFunction.zeros(ctx), GridFunction.zeros(ctx))
        val = fwt_integrand(wiener_64, SimplexPoint.from_times(ctx, (0.25, 0.75)), probe)
        assert val == pytest.approx(1.0 / (TWO_PI * 0.5), rel=1e-13)

    def test_hand_projection_case(self, wiener_64):
        # h1 = 1_[0,1]: ||P h1||^2 = 0.5^2 / 0.5 = 0.5 at the pair (0.25, 0.75)
        ctx = wiener_64.ctx
        probe = FwtProbe(make_indicator(ctx, 0.0, 1.0), GridFunction.zeros(ctx))
        val = fwt_integrand(wiener_64, SimplexPoint.from_times(ctx, (0.25, 0.75)), probe)
        assert val == pytest.approx(math.exp(-0.25) / (TWO_PI * 0.5), rel=1e-12)

    def test_singular_gram_raises(self):
        # exactly annihilated increments put G at zero, below the floor
        ctx = GridContext(16)
        op = build_operator(OperatorSpec.custom_matrix(np.zeros((16, 16))), ctx)
        probe = FwtProbe(GridFunction.zeros(ctx), GridFunction.zeros(ctx))
        with pytest.raises(SingularGram):
            fwt_integrand(op, SimplexPoint.from_times(ctx, (0.0, 0.5)), probe)

    def test_near_kernel_pair_stays_above_floor(self, gen_bridge_64):
        # the grid image of a kernel indicator is roundoff, not exact zero:
        # the integrand is huge but finite, and the floor does not trigger
        ctx = gen_bridge_64.ctx
        probe = FwtProbe(GridFunction.zeros(ctx), GridFunction.zeros(ctx))
        val = fwt_integrand(gen_bridge_64, SimplexPoint.from_times(ctx, (0.0, 0.5)), probe)
        assert math.isfinite(val) and val > 1e20


class TestThm1Integrand:
    def test_identically_zero_at_zero_direction(self, catalog_ops_64):
        rng = np.random.default_rng(12)
        for name, op in catalog_ops_64.items():
            zero = GridFunction.zeros(op.ctx)
            for k in (2, 3, 4):
                for _ in range(5):
                    times = random_tuple(rng, op.ctx, k)
                    try:
                        val = regularized_integrand_thm1(op, times, zero)
                    except SingularGram:
                        continue
                    assert val == 0.0, (name, k)

    def test_orthogonal_direction_vanishes(self, wiener_64):
        ctx = wiener_64.ctx
        h = make_indicator(ctx, 0.75, 1.0)  # orthogonal to increments of (0, 1/4, 1/2)
        val = regularized_integrand_thm1(wiener_64, (0.0, 0.25, 0.5), h)
        assert val == pytest.approx(0.0, abs=1e-16)

    def test_k2_negates_thm2(self, catalog_ops_64):
        rng = np.random.default_rng(13)
        for name in ("identity", "compact", "generalized_bridge"):
            op = catalog_ops_64[name]
            for _ in range(200):
                t1, t2 = random_tuple(rng, op.ctx, 2)
                h = GridFunction(op.ctx, rng.standard_normal(op.ctx.n))
                try:
                    a = regularized_integrand_thm1(op, (t1, t2), h)
                    b = thm2_integrand(op, t1, t2, h)
                except (SingularGram, KernelIndicator):
                    continue
                assert a == pytest.approx(-b, rel=1e-12, abs=1e-300), name


class TestThm2Integrand:
    def test_zero_direction(self, wiener_64):
        assert thm2_integrand(wiener_64, 0.25, 0.75, GridFunction.zeros(wiener_64.ctx)) == 0.0

    def test_wiener_hand_formula(self, wiener_64):
        rng = np.random.default_rng(14)
        ctx = wiener_64.ctx
        for _ in range(50):
            t1, t2 = random_tuple(rng, ctx, 2)
            h = GridFunction(ctx, rng.standard_normal(ctx.n))
            e = make_indicator(ctx, t1, t2)
            expected = (math.exp(-0.5 * h.inner(e) ** 2 / e.norm_sq()) - 1.0) / (t2 - t1)
            assert thm2_integrand(wiener_64, t1, t2, h) == pytest.approx(expected, rel=1e-12)

    def test_always_nonpositive(self, catalog_ops_64):
        rng = np.random.default_rng(15)
        for name, op in catalog_ops_64.items():
            for _ in range(50):
                t1, t2 = random_tuple(rng, op.ctx, 2)
                h = GridFunction(op.ctx, rng.standard_normal(op.ctx.n))
                try:
                    assert thm2_integrand(op, t1, t2, h) <= 0.0, name
                except KernelIndicator:
                    continue

    def test_kernel_indicator_excluded(self, gen_bridge_64):
        with pytest.raises(KernelIndicator):
            thm2_integrand(gen_bridge_64, 0.0, 0.5, GridFunction.ones(gen_bridge_64.ctx))


class TestTheorem3:
    def test_wiener_k2_closed_form(self):
        op = build_operator(OperatorSpec.identity(), GridContext(320))
        report = theorem3_integral(op, k=2, delta=0.1, levels=(40, 80, 160))
        target = -math.log(0.1) - 0.9
        assert report.metadata["delta_effective"] == pytest.approx(0.1, abs=1e-15)
        assert report.value == pytest.approx(target, rel=1e-3)
        assert report.error_estimate == abs(report.levels[-1][1] - report.levels[-2][1])

    def test_generalized_bridge_k3_stable(self):
        op = build_operator(OperatorSpec.generalized_bridge(), GridContext(256))
        report = theorem3_integral(op, k=3, delta=0.1, levels=(32, 64, 128))
        assert math.isfinite(report.value)
        assert report.error_estimate / abs(report.value) < 0.01

    def test_wiener_k3_stable(self):
        op = build_operator(OperatorSpec.identity(), GridContext(128))
        report = theorem3_integral(op, k=3, delta=0.2, levels=(16, 32, 64))
        assert math.isfinite(report.value)
        assert report.error_estimate / abs(report.value) < 0.01

    def test_wiener_levels_monotone(self):
        # the separation-boundary cells dominate the error, so refinements
        # approach the integral monotonically from above
        op = build_operator(OperatorSpec.identity(), GridContext(320))
        report = theorem3_integral(op, k=2, delta=0.1, levels=(40, 80, 160))
        values = [v for _, v in report.levels]
        assert values[0] > values[1] > values[2] > -math.log(0.1) - 0.9

    def test_step_kernel_auxiliary_family_stays_integrable(self):
        # operators whose declared kernels are steps keep 1/G integrable on the
        # separated simplex; refinement stability is the testable surrogate
        spec = OperatorSpec.projector_complement(
            ProfileSpec(kind="indicator", a=0.0, b=0.25),
            ProfileSpec(kind="indicator", a=0.5, b=0.75),
        )
        op = build_operator(spec, GridContext(256))
        report = theorem3_integral(op, k=2, delta=0.1, levels=(32, 64, 128))
        assert math.isfinite(report.value)
        assert report.error_estimate / abs(report.value) < 0.01


class TestRegularizedQuadrature:
    def test_thm1_zero_probe_exactly_zero(self, gen_bridge_64):
        zero = GridFunction.zeros(gen_bridge_64.ctx)
        report = regularized_fwt_quadrature(gen_bridge_64, 2, zero, "thm1_full_simplex")
        assert report.value == 0.0

    def test_thm1_matches_pointwise_form(self, wiener_64):
        # quadrature integrand equals the subset-sum evaluation tuple by tuple
        rng = np.random.default_rng(16)
        ctx = wiener_64.ctx
        h = GridFunction(ctx, rng.standard_normal(ctx.n))
        report = regularized_fwt_quadrature(wiener_64, 2, h, "thm1_full_simplex", levels=(8, 16))
        from integrator_silt.silt import simplex_lattice

        lat = simplex_lattice(16, 2, 0)
        scale = ctx.n // 32
        total = 0.0
        for nodes, w in zip(lat.nodes * scale, lat.weights):
            if nodes[0] == nodes[1]:
                continue
            total += w * regularized_integrand_thm1(wiener_64, nodes / ctx.n, h)
        assert report.value == pytest.approx(total, rel=1e-10)

    def test_thm2_negates_thm1_within_error(self, wiener_64):
        h = make_indicator(wiener_64.ctx, 0.0, 1.0)
        a = regularized_fwt_quadrature(wiener_64, 2, h, "thm1_full_simplex")
        b = regularized_fwt_quadrature(wiener_64, 2, h, "thm2_k2")
        tol = a.error_estimate + b.error_estimate + 1e-12
        assert abs(a.value + b.value) <= tol

    def test_eq3_consistent_with_theorem3(self, gen_bridge_64):
        zero = GridFunction.zeros(gen_bridge_64.ctx)
        eq3 = regularized_fwt_quadrature(gen_bridge_64, 2, zero, "eq3_delta", delta=0.1)
        t3 = theorem3_integral(gen_bridge_64, 2, 0.1)
        assert eq3.value == pytest.approx(t3.value / TWO_PI, rel=1e-6)

    def test_thm2_requires_identity_plus_compact(self):
        op = build_operator(OperatorSpec.fbm_volterra(0.75), GridContext(32))
        with pytest.raises(ValueError):
            regularized_fwt_quadrature(op, 2, GridFunction.zeros(op.ctx), "thm2_k2")

    def test_near_diagonal_tuples_stay_finite(self, catalog_ops_64):
        # minimal-gap tuples do not overflow the regularized integrand
        for name, op in catalog_ops_64.items():
            n = op.ctx.n
            h = GridFunction.ones(op.ctx)
            for j in range(1, n - 2, 7):
                times = (j / n, (j + 1) / n, (j + 2) / n)
                try:
                    val = regularized_integrand_thm1(op, times, h)
                except SingularGram:
                    continue
                assert math.isfinite(val), (name, times)


class TestLemma2Scan:
    def test_zero_direction_all_zero(self):
        ctx = GridContext(256)
        vals = lemma2_weak_convergence_scan(GridFunction.zeros(ctx), (0.25, 0.75), (0.2, 0.1))
        assert vals == [0.0, 0.0]

    def test_cauchy_schwarz_equality(self):
        # h equal to one normalized difference makes that pairing exactly 1
        ctx = GridContext(256)
        t0 = (0.25, 0.75)
        r = 0.1
        e = make_indicator(ctx, t0[0] - r, t0[1]) - make_indicator(ctx, *t0)
        h = (1.0 / e.norm()) * e
        vals = lemma2_weak_convergence_scan(h, t0, (r,))
        assert vals[0] == pytest.approx(1.0, rel=1e-12)

    def test_all_ones_decreasing_linear_in_radius(self):
        ctx = GridContext(512)
        radii = (0.2, 0.1, 0.05, 0.025)
        vals = lemma2_weak_convergence_scan(GridFunction.ones(ctx), (0.25, 0.75), radii)
        assert all(a > b for a, b in zip(vals, vals[1:]))
        # window bound: squared pairing decays like the window measure 2r
        for r, v in zip(radii, vals):
            assert v == pytest.approx(2 * r, rel=0.05)


class TestLemma3Scan:
    def test_requires_kernel_indicator(self, wiener_64):
        with pytest.raises(NotAKernelIndicator):
            lemma3_ratio_scan(wiener_64, (0.25, 0.75), (0.1,))

    def test_generalized_bridge_window(self):
        op = build_operator(OperatorSpec.generalized_bridge(), GridContext(512))
        scans = lemma3_ratio_scan(op, (0.0, 0.5), (0.2, 0.1, 0.05))
        lo, hi = scans[-1]
        assert 0.85 <= lo <= hi <= 1.15
        devs = [max(abs(lo - 1), abs(hi - 1)) for lo, hi in scans]
        assert all(a > b for a, b in zip(devs, devs[1:]))

    def test_pure_projector_ratio_identity(self):
        # squared scan ratio equals 1 - ||P d||^2 / ||d||^2 with d the indicator difference
        ctx = GridContext(256)
        op = build_operator(OperatorSpec.generalized_bridge(), ctx)
        u = make_indicator(ctx, 0.0, 0.5)
        u = (1.0 / u.norm()) * u
        t0 = (0.0, 0.5)
        for t1, t2 in ((0.05, 0.45), (0.0, 0.55), (0.1, 0.5 + 3 / 256)):
            d = make_indicator(ctx, max(t1, 1 / 256), t2) if t1 > 0 else make_indicator(ctx, 0, t2)
            d = d - make_indicator(ctx, *t0)
            want = 1.0 - d.inner(u) ** 2 / d.norm_sq()
            i, j = ctx.snap(t1), ctx.snap(t2)
            got = float(op.indicator_image_norm_sq(i, j)) / d.norm_sq()
            assert got == pytest.approx(want, rel=1e-12)
