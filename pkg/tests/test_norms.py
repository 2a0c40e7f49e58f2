import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from gevreyns.norms import (
    EmpiricalConstantReport,
    GevreyOverflowError,
    GevreyParams,
    ParameterDomainError,
    analyticity_radius,
    check_bilinear_estimate,
    check_product_law,
    gevrey_norm,
    gevrey_series,
    interpolation_check,
    mode_weights,
    relative_change,
    run_sweep,
    safe_ratio,
    sobolev_norm,
    sup_in_time_norm,
)
from gevreyns.mild import heat_propagate
from gevreyns.spectral import GridSpec, SpectralField, random_field, single_mode

from oracles import gevrey_loop


@pytest.fixture
def unit_mode():
    return single_mode(GridSpec(8), (1, 0, 0), (0, 0, 1))


class TestGevreyParams:
    def test_negative_radius_rejected(self):
        with pytest.raises(ParameterDomainError):
            GevreyParams(0.5, -0.1)

    def test_banach_range(self):
        GevreyParams(1.0).require_banach()
        with pytest.raises(ParameterDomainError):
            GevreyParams(1.5).require_banach()


class TestGevreyNorm:
    def test_zero_field(self):
        assert gevrey_norm(SpectralField.zeros(GridSpec(4)), 0.7, 0.3) == 0.0

    def test_single_mode_value(self, unit_mode):
        # both k and -k carry |u_hat| = 1
        assert gevrey_norm(unit_mode, 0.5, 0.5) == pytest.approx(math.sqrt(2) * math.exp(0.5), rel=1e-15)

    def test_single_mode_per_coefficient(self):
        g = GridSpec(8)
        c = np.zeros((3, 8, 8, 8), complex)
        c[2, 1, 0, 0] = 1.0  # a lone coefficient, as in the one-term sum
        assert gevrey_norm(SpectralField(g, c), GevreyParams(0.5, 0.5)) == pytest.approx(1.6487212707001282, rel=1e-15)

    @pytest.mark.parametrize("s,a", [(0.5, 0.3), (0.5, 0.0), (1.5, 0.3), (-0.5, 0.2)])
    def test_loop_oracle(self, s, a):
        g = GridSpec(4)
        for seed in range(5):
            f = random_field(g, seed, shell=(1, 4))
            assert gevrey_norm(f, s, a) == pytest.approx(gevrey_loop(g, f.coeffs, s, a), rel=1e-12)

    def test_box_period_enters_frequency(self):
        g = GridSpec(8, box_period=4 * math.pi)
        f = single_mode(g, (1, 0, 0), (0, 0, 1))
        assert sobolev_norm(f, 1.0) == pytest.approx(math.sqrt(2) * 0.5)

    def test_overflow_reports_mode(self):
        g = GridSpec(8)
        f = single_mode(g, (3, 0, 0), (0, 1, 0))
        with pytest.raises(GevreyOverflowError) as info:
            gevrey_norm(f, 0.5, 200.0)
        assert sorted(abs(x) for x in info.value.mode) == [0, 0, 3]
        with pytest.raises(GevreyOverflowError):
            mode_weights(g, 0.5, 200.0)

    @settings(max_examples=30, deadline=None)
    @given(st.integers(0, 2**31 - 1), st.floats(0, 1), st.floats(0, 1), st.floats(1e-3, 4), st.booleans())
    def test_homogeneity_and_monotonicity(self, seed, a1, a2, mag, neg):
        alpha = -mag if neg else mag
        f = random_field(GridSpec(8), seed)
        lo, hi = sorted((a1, a2))
        assert gevrey_norm(alpha * f, 0.5, lo) == pytest.approx(abs(alpha) * gevrey_norm(f, 0.5, lo), rel=1e-13, abs=1e-300)
        assert gevrey_norm(f, 0.5, lo) <= gevrey_norm(f, 0.5, hi)
        assert gevrey_norm(f, 0.5, 0.0) <= gevrey_norm(f, 0.5, hi)


class TestSeries:
    @pytest.mark.parametrize("a", [0.0, 0.1, 0.5, 1.0])
    def test_identity(self, a):
        f = random_field(GridSpec(16), 11, shell=(1, 5))
        value, terms = gevrey_series(f, a)
        assert value == pytest.approx(gevrey_norm(f, 0.5, a) ** 2, rel=1e-10)


class TestSupInTime:
    def test_single_snapshot(self):
        f = random_field(GridSpec(8), 0)
        assert sup_in_time_norm([f], 0.5) == pytest.approx(gevrey_norm(f, 0.5))

    def test_pointwise_larger(self):
        f = random_field(GridSpec(8), 0)
        assert sup_in_time_norm([f, 2 * f], 1.0) == pytest.approx(gevrey_norm(2 * f, 1.0))

    def test_heat_flow_sup_at_start(self):
        f = random_field(GridSpec(8), 4)
        snaps = [heat_propagate(f, t) for t in (0.0, 0.05, 0.2)]
        assert sup_in_time_norm(snaps, 0.5) == pytest.approx(gevrey_norm(f, 0.5), rel=1e-15)

    def test_empty(self):
        with pytest.raises(ValueError):
            sup_in_time_norm([], 0.5)


class TestProductLaw:
    def test_zero(self):
        g = GridSpec(8)
        z = SpectralField.zeros(g)
        assert check_product_law(z, z, 0.5, 0.5, 0.0) == 0.0

    def test_single_mode_closed_form(self, unit_mode):
        # (2 cos x)^2 = 2 + 2 cos 2x: modes +-2 with coefficient 1 after dropping the mean
        # ||uv||^2_{-1/2} = 2 / 2 and ||u||_{1/2}^2 = 2, so the ratio is 1 / 2
        assert check_product_law(unit_mode, unit_mode, 0.5, 0.5, 0.0) == pytest.approx(0.5, rel=1e-14)

    def test_domain(self, unit_mode):
        with pytest.raises(ParameterDomainError):
            check_product_law(unit_mode, unit_mode, 1.5, 0.5, 0.0)
        with pytest.raises(ParameterDomainError):
            check_product_law(unit_mode, unit_mode, -0.5, 0.25, 0.0)
        assert np.isfinite(check_product_law(unit_mode, unit_mode, 1.5, 0.5, 0.2, strict=False))


class TestBilinear:
    def test_shear_is_zero(self):
        u = SpectralField.from_modes(GridSpec(8), {(0, 1, 0): (1.0, 0, 0)})
        assert check_bilinear_estimate(u, u, 0.5) == 0.0

    def test_self_interaction_vanishes(self, unit_mode):
        assert check_bilinear_estimate(unit_mode, unit_mode, 0.5) == 0.0


class TestInterpolation:
    def test_single_mode_equality(self, unit_mode):
        assert abs(interpolation_check(unit_mode, 4.0)) <= 1e-15

    def test_p_two_collapses(self):
        f = random_field(GridSpec(8), 3)
        assert abs(interpolation_check(f, 2.0)) <= 1e-12 * gevrey_norm(f, 1.5)

    def test_invalid_p(self, unit_mode):
        with pytest.raises(ParameterDomainError):
            interpolation_check(unit_mode, 1.5)

    @pytest.mark.parametrize("p", [3.0, 4.0, 6.0])
    def test_gap_nonnegative(self, p):
        g = GridSpec(8)
        rng = np.random.default_rng(int(p))
        for _ in range(300):
            f = random_field(g, rng)
            lhs = gevrey_norm(f, 0.5 + 2 / p)
            assert interpolation_check(f, p) >= -1e-12 * lhs


class TestSweeps:
    def test_ratio_convention(self):
        assert safe_ratio(0.0, 0.0) == 0.0
        assert safe_ratio(1.0, 0.0) == math.inf

    def test_report_witness_reproduces(self):
        rep = run_sweep("product", 12, 5, {"s": 0.5, "t": 0.5, "a": 0.2}, grid=GridSpec(8), shell_radius=2)
        assert rep.max_ratio == max(rep.ratios)
        assert rep.reevaluate() == pytest.approx(rep.max_ratio, rel=1e-10)
        assert "max_ratio = " in rep.to_text()

    def test_deterministic_per_seed(self):
        a = run_sweep("bilinear", 6, 42, {"a": 0.5}, grid=GridSpec(8), shell_radius=2)
        b = run_sweep("bilinear", 6, 42, {"a": 0.5}, grid=GridSpec(8), shell_radius=2)
        assert a.ratios == b.ratios

    def test_interpolation_tracks_violation(self):
        rep = run_sweep("interpolation", 10, 1, {"p": 4.0, "a": 0.0}, grid=GridSpec(8), shell_radius=3)
        assert rep.max_ratio == 0.0
        assert rep.extras["min_gap"] >= -1e-12
        assert rep.extras["max_plain_ratio"] <= 1.0

    def test_unknown_inequality(self):
        with pytest.raises(ValueError):
            run_sweep("nope", 1, 0, {})

    def test_negative_max_ratio_rejected(self):
        with pytest.raises(ValueError):
            EmpiricalConstantReport("product", 1, -1.0, ())

    def test_relative_change(self):
        assert relative_change(1.0, 1.1) == pytest.approx(0.1 / 1.1)


class TestAnalyticityRadius:
    @pytest.mark.parametrize("k,L", [((1, 0, 0), 2 * math.pi), ((2, 1, 0), 2 * math.pi), ((1, 1, 1), 4 * math.pi)])
    def test_single_mode_closed_form(self, k, L):
        g = GridSpec(8, box_period=L)
        f = single_mode(g, k, (0, 0, 1) if k[2] == 0 else (1, -1, 0))
        xi0 = math.sqrt(sum(x * x for x in k)) * 2 * math.pi / L
        assert analyticity_radius(f) == pytest.approx(math.log(10) / xi0, abs=1e-6)

    def test_zero_field_sentinel(self):
        assert analyticity_radius(SpectralField.zeros(GridSpec(4))) == math.inf

    def test_matches_scan(self):
        g = GridSpec(32)
        f = random_field(g, 0, shell=(1, 10), envelope=lambda r: np.exp(-(r**2) / 2))
        e = np.sum(np.abs(f.coeffs) ** 2, axis=0).ravel()
        r = g.xi_abs.ravel()
        keep = (e > 0) & (r > 0)
        r, e = r[keep], e[keep]
        alphas = np.arange(0, 3, 1e-3)
        sq = np.array([np.sum(r * np.exp(2 * x * r) * e) for x in alphas])
        last_ok = alphas[sq <= 100 * sq[0]][-1]
        assert analyticity_radius(f) == pytest.approx(last_ok, abs=1e-3)

    def test_nondecreasing_under_heat(self):
        f = random_field(GridSpec(16), 3, shell=(1, 5))
        radii = [analyticity_radius(heat_propagate(f, t)) for t in (0, 0.01, 0.1, 0.5, 1.0)]
        assert all(b >= a - 1e-12 for a, b in zip(radii, radii[1:]))
