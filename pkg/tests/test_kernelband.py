import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from ivdml import BandwidthRule, Kernel, bandwidth, check_kernel, gaussian_quantile, kernel_eval

from _oracles import simpson_normal_cdf

EPA = Kernel("epanechnikov")
GAUSS = Kernel("gaussian")


class TestKernelEval:
    def test_epanechnikov_at_zero(self):
        assert kernel_eval(EPA, 0.0) == pytest.approx(3.0 / (4.0 * math.sqrt(5.0)), rel=1e-15)
        assert kernel_eval(EPA, 0.0) == pytest.approx(0.3354102, abs=1e-7)

    def test_epanechnikov_support_boundary(self):
        assert kernel_eval(EPA, math.sqrt(5.0)) == 0.0
        assert kernel_eval(EPA, -math.sqrt(5.0)) == 0.0
        assert kernel_eval(EPA, 3.0) == 0.0

    def test_epanechnikov_at_one(self):
        assert kernel_eval(EPA, 1.0) == pytest.approx(0.2683282, abs=1e-7)
        assert kernel_eval(EPA, -1.0) == pytest.approx(0.2683282, abs=1e-7)

    @given(st.floats(-50, 50), st.sampled_from(["epanechnikov", "gaussian"]))
    def test_symmetric_and_nonnegative(self, x, kind):
        k = Kernel(kind)
        assert kernel_eval(k, x) == kernel_eval(k, -x)
        assert kernel_eval(k, x) >= 0.0

    def test_vectorized(self):
        xs = np.array([-1.0, 0.0, 1.0])
        vals = kernel_eval(EPA, xs)
        assert vals.shape == (3,)
        assert vals[0] == vals[2]

    def test_unknown_kind_rejected(self):
        with pytest.raises(ValueError, match="unknown kernel"):
            Kernel("tricube")


class TestBandwidth:
    def test_hand_example(self):
        v = np.array([1.0, 2.0, 3.0, 4.0, 5.0])
        h = bandwidth(BandwidthRule("silverman"), v)
        s = np.std(v, ddof=1)
        expected = 1.06 * min(s, 2.0 / 1.34) * 5 ** (-0.2)
        assert h == pytest.approx(expected, rel=1e-12)
        assert h == pytest.approx(1.1467, abs=1e-4)

    def test_undersmooth_ratio_is_exponent_algebra(self, rng):
        v = rng.normal(size=100)
        hs = bandwidth(BandwidthRule("silverman"), v)
        hu = bandwidth(BandwidthRule("undersmooth"), v)
        assert hu / hs == pytest.approx(100 ** (0.2 - 2.0 / 7.0), rel=1e-12)

    @given(st.floats(0.01, 100.0))
    def test_scale_equivariance(self, c):
        v = np.array([0.3, -1.2, 2.0, 0.9, -0.4, 1.1])
        assert bandwidth(BandwidthRule("silverman"), c * v) == pytest.approx(
            c * bandwidth(BandwidthRule("silverman"), v), rel=1e-12
        )

    def test_permutation_invariant(self, rng):
        v = rng.normal(size=40)
        rule = BandwidthRule("undersmooth")
        assert bandwidth(rule, v) == bandwidth(rule, v[rng.permutation(40)])

    def test_constant_vector_rejected(self):
        with pytest.raises(ValueError, match="degenerate V"):
            bandwidth(BandwidthRule("silverman"), np.ones(10))

    def test_exponent_override(self):
        v = np.array([1.0, 2.0, 3.0, 4.0, 5.0])
        h = bandwidth(BandwidthRule("undersmooth", exponent=0.2), v)
        assert h == bandwidth(BandwidthRule("silverman"), v)

    def test_positive(self, rng):
        assert bandwidth(BandwidthRule("undersmooth"), rng.normal(size=25)) > 0


class TestGaussianQuantile:
    def test_median(self):
        assert gaussian_quantile(0.5) == pytest.approx(0.0, abs=1e-12)

    def test_975(self):
        assert gaussian_quantile(0.975) == pytest.approx(1.959964, abs=1e-6)

    def test_phi_of_one(self):
        assert gaussian_quantile(0.841344746) == pytest.approx(1.0, abs=1e-6)

    @pytest.mark.parametrize("p", [1e-6, 0.001, 0.023, 0.2, 0.5, 0.8, 0.975, 0.999, 1 - 1e-6])
    def test_against_integration_oracle(self, p):
        x = gaussian_quantile(p)
        assert abs(simpson_normal_cdf(x) - p) <= 1e-9

    def test_strictly_increasing(self):
        grid = np.linspace(0.001, 0.999, 199)
        vals = [gaussian_quantile(p) for p in grid]
        assert all(a < b for a, b in zip(vals, vals[1:]))

    @pytest.mark.parametrize("p", [0.0, 1.0, -0.1, 1.5])
    def test_domain(self, p):
        with pytest.raises(ValueError):
            gaussian_quantile(p)


class TestCheckKernel:
    def test_epanechnikov_report(self):
        rep = check_kernel(EPA)
        assert rep.integral == pytest.approx(1.0, abs=1e-8)
        assert rep.second_moment == pytest.approx(1.0, abs=1e-8)
        assert rep.symmetry_defect == 0.0
        assert rep.sup_bound == pytest.approx(3.0 / (4.0 * math.sqrt(5.0)), rel=1e-12)

    def test_gaussian_report(self):
        rep = check_kernel(GAUSS)
        assert rep.integral == pytest.approx(1.0, abs=1e-8)
        assert rep.second_moment == pytest.approx(1.0, abs=1e-8)
        assert rep.symmetry_defect == 0.0

    def test_asymmetric_negative_control(self):
        shifted = lambda x: math.exp(-0.5 * (x - 0.3) ** 2) / math.sqrt(2 * math.pi)  # noqa: E731
        rep = check_kernel(shifted)
        assert rep.symmetry_defect > 0.01
