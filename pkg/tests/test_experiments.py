import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from serrinlab.errors import ValidationError
from serrinlab.experiments import (
    frechet_check,
    inclusion_sweep,
    nonexistence_threshold,
    one_phase_stability_sweep,
    sigma_sweep,
    slope_fit,
)
from serrinlab.geometry import DomainSpec, InclusionSpec

ELLIPSE = DomainSpec("ellipse", a=1.2, b=1.0)
DISK = DomainSpec("disk", radius=1.0)


class TestSlopeFit:
    def test_linear(self):
        fit = slope_fit([(1, 3), (2, 6), (4, 12), (8, 24)])
        assert fit.slope == pytest.approx(1.0, abs=1e-12)
        assert fit.r_squared == pytest.approx(1.0, abs=1e-12)
        assert math.exp(fit.intercept) == pytest.approx(3.0, rel=1e-12)

    def test_quadratic(self):
        fit = slope_fit([(1, 2), (2, 8), (4, 32)], window=3)
        assert fit.slope == pytest.approx(2.0, abs=1e-12)
        assert fit.intercept == pytest.approx(math.log(2.0), abs=1e-12)

    def test_noisy_linear(self):
        # frozen instance of "y = x + 0.001 noise"; oracle np.polyfit on logs
        xs = [1.0, 2.0, 4.0, 8.0]
        ys = [1.001, 1.999, 4.001, 7.999]
        fit = slope_fit(list(zip(xs, ys)))
        oracle = np.polyfit(np.log(xs), np.log(ys), 1)
        assert fit.slope == pytest.approx(oracle[0], abs=1e-12)
        assert 0.95 <= fit.slope <= 1.05
        assert fit.r_squared >= 0.99

    def test_nonpositive_points_excluded(self):
        fit = slope_fit([(1, 1), (2, 0.0), (4, 4), (8, 8), (16, 16)])
        assert 1 not in fit.used_indices
        assert fit.slope == pytest.approx(1.0, abs=1e-12)

    def test_preconditions(self):
        with pytest.raises(ValidationError):
            slope_fit([(1, 1), (2, 2)])
        with pytest.raises(ValidationError):
            slope_fit([(1, 1), (3, 2), (2, 3)])

    @given(c=st.floats(0.1, 10), k=st.floats(-2, 2))
    @settings(max_examples=40)
    def test_exact_power_laws(self, c, k):
        xs = [0.5, 1.0, 2.0, 4.0]
        fit = slope_fit([(x, c * x ** k) for x in xs])
        assert fit.slope == pytest.approx(k, abs=1e-9)
        assert fit.r_squared == pytest.approx(1.0, abs=1e-9)


class TestStabilitySweep:
    def test_ellipse_family_slope(self):
        family = [DomainSpec("ellipse", a=1 + e, b=1.0)
                  for e in (0.2, 0.1, 0.05)]
        sweep = one_phase_stability_sweep(family, 0.03, window=3)
        assert sweep.status == "ok"
        assert 0.9 <= sweep.fit.slope <= 1.1
        # bounded-ratio form of the linear stability statement
        assert sweep.constants["ratio_smallest"] <= 2 * sweep.constants["ratio_largest"]

    def test_single_disk_degenerate(self):
        sweep = one_phase_stability_sweep([DISK], 0.08)
        assert sweep.status.startswith("degenerate")
        assert sweep.fit is None
        assert all(sweep.excluded)

    def test_star_family_slope(self):
        family = [DomainSpec("star", r0=1.0, eps=e, k=3)
                  for e in (0.08, 0.04, 0.02)]
        sweep = one_phase_stability_sweep(family, 0.05, window=3)
        assert sweep.fit is not None
        assert 0.8 <= sweep.fit.slope <= 1.2


class TestSigmaSweep:
    def test_ellipse_with_inclusion_slope(self):
        sweep = sigma_sweep(ELLIPSE, InclusionSpec("disk", radius=0.3),
                            [0.4, 0.2, 0.1, 0.05, 0.025], 0.06)
        assert sweep.status == "ok"
        assert 0.9 <= sweep.fit.slope <= 1.1
        assert sweep.constants["C7_empirical"] > 0

    def test_concentric_degenerate(self):
        sweep = sigma_sweep(DISK, InclusionSpec("disk", radius=0.5),
                            [0.4, 0.2, 0.1], 0.08)
        assert sweep.status == "degenerate: exact solution family"
        assert sweep.fit is None

    def test_no_inclusion_all_zero(self):
        sweep = sigma_sweep(DISK, None, [0.4, 0.2, 0.1], 0.1)
        assert all(r["delta_trace_Linf"] < 1e-9 for r in sweep.rows)

    def test_t_below_minus_one_rejected(self):
        with pytest.raises(ValidationError):
            sigma_sweep(DISK, None, [0.5, -1.5], 0.1)

    def test_triangle_inequality_rows(self):
        sweep = sigma_sweep(ELLIPSE, InclusionSpec("disk", radius=0.3),
                            [0.4, 0.2, 0.1], 0.08)
        dev0 = sweep.constants["dev0_Linf"]
        for row in sweep.rows:
            # ||dn u(t) - c|| <= ||dn u(t) - dn u(0)|| + ||dn u(0) - c||,
            # exact in the discrete sup norm
            assert row["dev_Linf"] <= row["delta_trace_Linf"] + dev0 + 1e-12


class TestFrechetCheck:
    def test_slope_near_one(self):
        sweep = frechet_check(ELLIPSE, InclusionSpec("disk", radius=0.3), 0.5,
                              [0.2, 0.1, 0.05, 0.025], 0.08)
        assert 0.85 <= sweep.fit.slope <= 1.15

    def test_no_inclusion_identically_zero(self):
        sweep = frechet_check(DISK, None, 0.5, [0.2, 0.1, 0.05], 0.1)
        assert sweep.status == "degenerate: derivative vanishes"
        assert all(r["fd_error_L2"] == 0.0 for r in sweep.rows)

    def test_tiny_epsilon_flagged(self):
        sweep = frechet_check(ELLIPSE, InclusionSpec("disk", radius=0.3), 0.0,
                              [0.1, 0.05, 0.025, 1e-9], 0.1)
        assert sweep.excluded[-1]

    def test_sigma_must_stay_positive(self):
        with pytest.raises(ValidationError):
            frechet_check(DISK, None, -1.5, [0.2, 0.1, 0.05], 0.1)
        with pytest.raises(ValidationError):
            frechet_check(DISK, None, -0.9, [-0.2, -0.1, -0.05], 0.1)


class TestInclusionSweep:
    def test_slope_above_half(self):
        sweep = inclusion_sweep(ELLIPSE, 2.0, [0.4, 0.3, 0.2], 0.06, window=3)
        assert sweep.status == "ok"
        assert sweep.fit.slope >= 0.5
        assert sweep.constants["slope_floor_coarse"] == 0.5
        assert sweep.constants["slope_improved"] == 1.0

    def test_sigma_one_w_vanishes(self):
        sweep = inclusion_sweep(ELLIPSE, 1.0, [0.3, 0.2, 0.1], 0.08, window=3)
        assert all(r["grad_w_boundary_Linf"] < 1e-9 for r in sweep.rows)
        assert sweep.status.startswith("degenerate")

    def test_concentric_degenerate(self):
        sweep = inclusion_sweep(DISK, 2.0, [0.3, 0.2, 0.1], 0.08, window=3)
        assert sweep.status.startswith("degenerate")

    def test_radii_must_decrease(self):
        with pytest.raises(ValidationError):
            inclusion_sweep(ELLIPSE, 2.0, [0.1, 0.2], 0.1)


class TestNonexistence:
    def test_threshold_formula(self):
        th = nonexistence_threshold(ELLIPSE, 5.0, 2.0, 0.05)
        assert th.sigma_threshold == pytest.approx(th.gap / 5.0, rel=1e-12)
        assert th.area_threshold == pytest.approx((th.gap / 2.0) ** 2, rel=1e-12)
        assert th.label == "empirical, conditional on fitted constants"

    def test_disk_rejected(self):
        with pytest.raises(ValidationError):
            nonexistence_threshold(DISK, 5.0, 2.0, 0.05)

    def test_threshold_monotone_in_eccentricity(self):
        th_12 = nonexistence_threshold(ELLIPSE, 5.0, 2.0, 0.06)
        th_14 = nonexistence_threshold(DomainSpec("ellipse", a=1.4, b=1.0),
                                       5.0, 2.0, 0.06)
        assert th_14.sigma_threshold > th_12.sigma_threshold

    def test_nonpositive_constants_rejected(self):
        with pytest.raises(ValidationError):
            nonexistence_threshold(ELLIPSE, 0.0, 2.0, 0.05)
