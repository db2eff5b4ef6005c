import numpy as np
import pytest

from integrator_silt import (
    DegenerateInterval,
    GridContext,
    OperatorSpec,
    build_operator,
    covariance,
    gram_det,
    increment_gram,
    make_indicator,
    sample_paths,
)
from integrator_silt.process import path_values


class TestCovariance:
    def test_wiener_min(self, wiener_64):
        assert covariance(wiener_64, 0.25, 0.75) == pytest.approx(0.25, abs=1e-14)

    def test_bridge_min_minus_product(self, bridge_64):
        # <(I-P)u, (I-P)v> = min(s,t) - s*t, hand computation at (0.5, 0.5)
        assert covariance(bridge_64, 0.5, 0.5) == pytest.approx(0.25, abs=1e-13)
        assert covariance(bridge_64, 0.25, 0.75) == pytest.approx(0.25 - 0.25 * 0.75, abs=1e-13)

    def test_zero_time(self, catalog_ops_64):
        for name, op in catalog_ops_64.items():
            assert covariance(op, 0.0, 0.625) == 0.0, name


class TestIncrementGram:
    def test_wiener_independent_increments(self, wiener_64):
        G = increment_gram(wiener_64, (0.0, 0.5, 1.0))
        assert np.allclose(G, np.diag([0.5, 0.5]), atol=1e-14)
        G = increment_gram(wiener_64, (0.0, 0.25, 0.5))
        assert np.allclose(G, np.diag([0.25, 0.25]), atol=1e-14)

    def test_bridge_degenerate_determinant(self, bridge_64):
        # increments sum to the image of the killed full indicator
        G = increment_gram(bridge_64, (0.0, 0.5, 1.0))
        assert np.allclose(G, [[0.25, -0.25], [-0.25, 0.25]], atol=1e-13)
        assert abs(np.linalg.det(G)) < 1e-15

    def test_non_increasing_times_raise(self, wiener_64):
        with pytest.raises(DegenerateInterval):
            increment_gram(wiener_64, (0.0, 0.5, 0.5))

    def test_agrees_with_gram_det_of_images(self, catalog_ops_64):
        rng = np.random.default_rng(10)
        for name, op in catalog_ops_64.items():
            for _ in range(20):
                idx = np.sort(rng.choice(op.ctx.n + 1, size=3, replace=False))
                if np.any(np.diff(idx) < 1):
                    continue
                times = idx / op.ctx.n
                imgs = [op.apply(make_indicator(op.ctx, a, b)) for a, b in zip(times[:-1], times[1:])]
                det_route_a = float(np.prod(np.clip(np.linalg.eigvalsh(increment_gram(op, times)), 0, None)))
                det_route_b = gram_det(imgs)
                assert det_route_a == pytest.approx(det_route_b, rel=1e-12, abs=1e-20), name


class TestSampling:
    def test_deterministic_given_seed(self, wiener_64):
        a = sample_paths(wiener_64, seed=123, count=3)
        b = sample_paths(wiener_64, seed=123, count=3)
        for pa, pb in zip(a, b):
            assert np.array_equal(pa.coord1, pb.coord1)
            assert np.array_equal(pa.coord2, pb.coord2)

    def test_starts_at_origin(self, gen_bridge_64):
        for p in sample_paths(gen_bridge_64, seed=5, count=2):
            assert p.coord1[0] == 0.0 and p.coord2[0] == 0.0

    def test_count_prefix_stability(self, wiener_64):
        # per-path substreams: the first paths do not depend on the total count
        a = sample_paths(wiener_64, seed=9, count=2)
        b = sample_paths(wiener_64, seed=9, count=5)
        assert np.array_equal(a[0].coord1, b[0].coord1)
        assert np.array_equal(a[1].coord2, b[1].coord2)

    def test_wiener_variance_at_one(self):
        op = build_operator(OperatorSpec.identity(), GridContext(64))
        x1, _ = path_values(sample_paths(op, seed=21, count=4000))
        v = np.var(x1[:, -1], ddof=1)
        se = np.sqrt(2.0 / (len(x1) - 1))  # SE of the sample variance at sigma^2 = 1
        assert abs(v - 1.0) < 3 * se

    def test_bridge_pinned_at_one(self):
        op = build_operator(OperatorSpec.bridge(), GridContext(64))
        x1, x2 = path_values(sample_paths(op, seed=22, count=2000))
        assert np.var(x1[:, -1]) < 1e-10
        assert np.var(x2[:, -1]) < 1e-10

    def test_empirical_covariance_all_operators(self, catalog_ops_64):
        rng = np.random.default_rng(77)
        count = 10_000
        for name, op in catalog_ops_64.items():
            x1, x2 = path_values(sample_paths(op, seed=99, count=count))
            nodes = rng.choice(np.arange(1, op.ctx.n + 1), size=(5, 2))
            for i, j in nodes:
                s, t = i / op.ctx.n, j / op.ctx.n
                target = covariance(op, s, t)
                c_ss, c_tt = covariance(op, s, s), covariance(op, t, t)
                se = np.sqrt((c_ss * c_tt + target**2) / count)
                for x in (x1, x2):
                    emp = float(np.mean(x[:, i] * x[:, j]))
                    assert abs(emp - target) < 3 * se + 1e-12, (name, s, t)

    def test_coordinates_uncorrelated(self, wiener_64):
        count = 10_000
        x1, x2 = path_values(sample_paths(wiener_64, seed=41, count=count))
        corr = np.corrcoef(x1[:, -1], x2[:, -1])[0, 1]
        assert abs(corr) < 3 / np.sqrt(count)
