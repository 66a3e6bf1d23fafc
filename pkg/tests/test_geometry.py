import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from serrinlab.errors import ValidationError
from serrinlab.geometry import (
    DomainSpec,
    InclusionSpec,
    PolygonalBoundary,
    area_perimeter,
    curvature_max,
    diameter,
    exact_area,
    exact_perimeter,
    inclusion_margin,
    polygonize,
    rho_bounds,
    serrin_constant,
)


class TestPolygonize:
    def test_disk_n4_inscribed_square(self):
        poly = polygonize(DomainSpec("disk", radius=1.0), 4)
        area, perim = area_perimeter(poly)
        assert area == pytest.approx(2.0, abs=1e-14)

    def test_disk_fine_area_matches_inscribed_formula(self):
        n = 2048
        poly = polygonize(DomainSpec("disk", radius=1.0), n)
        area, _ = area_perimeter(poly)
        inscribed = 0.5 * n * math.sin(2 * math.pi / n)
        assert area == pytest.approx(inscribed, abs=1e-13)
        assert abs(area - math.pi) < 1e-5

    def test_star_eps0_equals_disk(self):
        star = polygonize(DomainSpec("star", r0=1.0, eps=0.0, k=5), 256)
        disk = polygonize(DomainSpec("disk", radius=1.0), 256)
        np.testing.assert_allclose(star.vertices, disk.vertices, atol=1e-15)

    def test_invalid_specs_rejected(self):
        with pytest.raises(ValidationError):
            DomainSpec("disk", radius=-1.0)
        with pytest.raises(ValidationError):
            DomainSpec("star", r0=1.0, eps=1.0, k=3)
        with pytest.raises(ValidationError):
            DomainSpec("disk", radius=1.0, boundary_samples=63)

    def test_ccw_orientation_and_normals(self):
        poly = polygonize(DomainSpec("ellipse", a=1.2, b=1.0), 128)
        assert area_perimeter(poly)[0] > 0
        norms = np.hypot(poly.edge_normals[:, 0], poly.edge_normals[:, 1])
        np.testing.assert_allclose(norms, 1.0, atol=1e-12)


class TestAreaPerimeter:
    def test_disk_fine(self):
        poly = polygonize(DomainSpec("disk", radius=1.0), 2048)
        area, perim = area_perimeter(poly)
        assert area == pytest.approx(math.pi, abs=1e-4)
        assert perim == pytest.approx(2 * math.pi, abs=1e-4)

    def test_ellipse_against_quadrature(self):
        # oracle: dense trapezoid quadrature of the arc-length integrand
        t = np.linspace(0, 2 * math.pi, 200001)
        speed = np.hypot(1.2 * np.sin(t), np.cos(t))
        perim_oracle = np.trapezoid(speed, t)
        poly = polygonize(DomainSpec("ellipse", a=1.2, b=1.0), 4096)
        area, perim = area_perimeter(poly)
        assert area == pytest.approx(math.pi * 1.2, abs=1e-3)
        assert perim == pytest.approx(perim_oracle, abs=1e-3)
        assert exact_perimeter(DomainSpec("ellipse", a=1.2, b=1.0)) == pytest.approx(
            perim_oracle, abs=1e-8)

    def test_square_explicit_polygon(self):
        square = PolygonalBoundary(np.array([[-1.0, -1.0], [1.0, -1.0],
                                             [1.0, 1.0], [-1.0, 1.0]]))
        area, perim = area_perimeter(square)
        assert area == pytest.approx(4.0)
        assert perim == pytest.approx(8.0)

    def test_second_order_convergence(self):
        # inscribed-polygon area and perimeter errors drop by ~4x when n doubles
        for spec in (DomainSpec("disk", radius=1.0),
                     DomainSpec("ellipse", a=1.2, b=1.0),
                     DomainSpec("star", r0=1.0, eps=0.05, k=3)):
            area_exact, perim_exact = exact_area(spec), exact_perimeter(spec)
            a_n, p_n = area_perimeter(polygonize(spec, 256))
            a_2n, p_2n = area_perimeter(polygonize(spec, 512))
            assert 3.5 <= (area_exact - a_n) / (area_exact - a_2n) <= 4.5
            assert 3.5 <= (perim_exact - p_n) / (perim_exact - p_2n) <= 4.5


class TestSerrinConstant:
    def test_unit_disk(self):
        assert serrin_constant(math.pi, 2 * math.pi) == pytest.approx(-0.5)

    def test_disk_radius2(self):
        assert serrin_constant(4 * math.pi, 4 * math.pi) == pytest.approx(-1.0)

    def test_ellipse(self):
        spec = DomainSpec("ellipse", a=1.2, b=1.0)
        c = serrin_constant(exact_area(spec), exact_perimeter(spec))
        assert c == pytest.approx(-0.54433, abs=1e-4)

    def test_rejects_nonpositive(self):
        with pytest.raises(ValidationError):
            serrin_constant(0.0, 1.0)
        with pytest.raises(ValidationError):
            serrin_constant(1.0, -2.0)

    @given(lam=st.floats(min_value=0.1, max_value=10.0,
                         allow_nan=False, allow_infinity=False))
    def test_scale_covariance(self, lam):
        # scaling the domain by lam multiplies c by lam
        for area, perim in ((math.pi, 2 * math.pi), (math.pi * 1.2, 6.92579)):
            c = serrin_constant(area, perim)
            c_scaled = serrin_constant(lam ** 2 * area, lam * perim)
            assert c_scaled == pytest.approx(lam * c, rel=1e-12)


class TestRhoBounds:
    def test_disk_center(self):
        poly = polygonize(DomainSpec("disk", radius=1.0), 256)
        assert rho_bounds(poly, (0.0, 0.0)) == pytest.approx((1.0, 1.0), abs=1e-10)

    def test_ellipse_center(self):
        poly = polygonize(DomainSpec("ellipse", a=1.2, b=1.0), 256)
        rho_i, rho_e = rho_bounds(poly, (0.0, 0.0))
        assert rho_i == pytest.approx(1.0, abs=1e-10)
        assert rho_e == pytest.approx(1.2, abs=1e-10)

    def test_disk_offcenter(self):
        poly = polygonize(DomainSpec("disk", radius=1.0), 256)
        rho_i, rho_e = rho_bounds(poly, (0.3, 0.0))
        assert rho_i == pytest.approx(0.7, abs=1e-10)
        assert rho_e == pytest.approx(1.3, abs=1e-10)

    def test_rejects_exterior_point(self):
        poly = polygonize(DomainSpec("disk", radius=1.0), 256)
        with pytest.raises(ValidationError):
            rho_bounds(poly, (1.5, 0.0))
        with pytest.raises(ValidationError):
            rho_bounds(poly, (1.0, 0.0))

    @given(r=st.floats(min_value=0.0, max_value=0.9), phi=st.floats(0, 2 * math.pi))
    @settings(max_examples=25, deadline=None)
    def test_disk_offcenter_closed_form(self, r, phi):
        poly = polygonize(DomainSpec("disk", radius=1.0), 256)
        z = (r * math.cos(phi), r * math.sin(phi))
        rho_i, rho_e = rho_bounds(poly, z)
        assert rho_i == pytest.approx(1.0 - r, abs=1e-9)
        assert rho_e == pytest.approx(1.0 + r, abs=1e-9)

    def test_gap_zero_iff_disk_at_center(self):
        disk = polygonize(DomainSpec("disk", radius=1.0), 256)
        ri, re = rho_bounds(disk, (0.0, 0.0))
        assert re - ri == pytest.approx(0.0, abs=1e-12)
        for poly, z in ((disk, (0.2, 0.1)),
                        (polygonize(DomainSpec("ellipse", a=1.2, b=1.0), 256), (0, 0)),
                        (polygonize(DomainSpec("star", r0=1, eps=0.05, k=3), 256), (0, 0))):
            ri, re = rho_bounds(poly, z)
            assert re - ri > 1e-3

    def test_star_against_brute_force(self):
        # oracle: dense 200k-sample scan of the boundary distance
        spec = DomainSpec("star", r0=1.0, eps=0.08, k=3)
        z = np.array([0.1, -0.05])
        t = 2 * math.pi * np.arange(200_000) / 200_000
        d = np.hypot(*(spec.point(t) - z).T)
        rho_i, rho_e = rho_bounds(polygonize(spec, 256), z)
        assert rho_i == pytest.approx(float(d.min()), abs=1e-6)
        assert rho_e == pytest.approx(float(d.max()), abs=1e-6)

    def test_rho_e_below_diameter(self):
        for spec in (DomainSpec("disk", radius=1.0),
                     DomainSpec("ellipse", a=1.2, b=1.0),
                     DomainSpec("star", r0=1.0, eps=0.05, k=3)):
            poly = polygonize(spec, 256)
            _, rho_e = rho_bounds(poly, (0.05, 0.02))
            assert rho_e <= diameter(spec) + 1e-12


class TestInclusionMargin:
    def test_concentric(self):
        m = inclusion_margin(DomainSpec("disk", radius=1.0),
                             InclusionSpec("disk", radius=0.5))
        assert m.margin == pytest.approx(0.5, abs=1e-8)
        assert m.M == pytest.approx(2.0, abs=1e-7)

    def test_offset(self):
        m = inclusion_margin(DomainSpec("disk", radius=1.0),
                             InclusionSpec("disk", center=(0.5, 0.0), radius=0.3))
        assert m.margin == pytest.approx(0.2, abs=1e-8)
        assert m.M == pytest.approx(5.0, abs=1e-6)

    def test_exits_domain(self):
        with pytest.raises(ValidationError):
            inclusion_margin(DomainSpec("disk", radius=1.0),
                             InclusionSpec("disk", center=(0.5, 0.0), radius=0.6))

    def test_none_inclusion_sentinel(self):
        m = inclusion_margin(DomainSpec("disk", radius=1.0), InclusionSpec("none"))
        assert math.isinf(m.margin)
        assert m.M == 1.0


class TestMisc:
    def test_diameter(self):
        assert diameter(DomainSpec("disk", radius=2.0)) == pytest.approx(4.0)
        assert diameter(DomainSpec("ellipse", a=1.2, b=1.0)) == pytest.approx(2.4)
        d_star = diameter(DomainSpec("star", r0=1.0, eps=0.05, k=4))
        assert d_star == pytest.approx(2.1, abs=1e-6)  # k even: antipodal bumps

    def test_curvature_max(self):
        assert curvature_max(DomainSpec("disk", radius=2.0)) == pytest.approx(0.5)
        assert curvature_max(DomainSpec("ellipse", a=1.2, b=1.0)) == pytest.approx(1.2)
