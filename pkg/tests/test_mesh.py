import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from pmclab.errors import ConfigurationError
from pmclab.mesh import (MAX_LEVEL, BoundaryFunction, boundary_frame, boundary_length, check_mesh,
                         generate_disk_mesh, l2_error_vs_function, quadrature_points, tangential_derivative)

from conftest import cached_mesh


@pytest.mark.parametrize("level", [0, 1, 2, 3, 4])
def test_counts_and_validity(level):
    m = cached_mesh(level)
    n = 2 ** level
    assert m.n_nodes == 1 + 3 * n * (n + 1)
    assert m.n_boundary == 6 * n
    assert m.n_triangles == 6 * n * n
    assert check_mesh(m)


def test_boundary_on_unit_circle_at_uniform_angles():
    m = cached_mesh(3)
    xy = m.nodes[m.boundary_nodes]
    th = 2 * np.pi * np.arange(m.n_boundary) / m.n_boundary
    assert np.allclose(xy, np.stack([np.cos(th), np.sin(th)], 1), atol=1e-14)
    assert np.allclose(np.mod(m.theta, 2 * np.pi), th)


def test_h_max_halves_under_refinement():
    for L in (2, 3, 4):
        ratio = cached_mesh(L + 1).h_max / cached_mesh(L).h_max
        assert 0.4 <= ratio <= 0.6


def test_areas_sum_to_polygon_area():
    m = cached_mesh(4)
    nb = m.n_boundary
    assert m.areas.sum() == pytest.approx(0.5 * nb * np.sin(2 * np.pi / nb), rel=1e-12)
    assert boundary_length(m) == pytest.approx(2 * nb * np.sin(np.pi / nb), rel=1e-12)


@pytest.mark.parametrize("bad", [-1, MAX_LEVEL + 1, 2.5])
def test_bad_level_rejected(bad):
    with pytest.raises(ConfigurationError):
        generate_disk_mesh(bad)


def test_frame_is_orthonormal_and_outward():
    m = cached_mesh(2)
    t, n = boundary_frame(m)
    assert np.allclose(np.sum(t * n, 1), 0)
    assert np.allclose(np.sum(n * m.nodes[m.boundary_nodes], 1), 1)
    assert np.allclose(t[:, 0] * n[:, 1] - t[:, 1] * n[:, 0], -1)


def test_tangential_derivative_of_trig_modes_is_exact():
    f = BoundaryFunction.from_callable(48, lambda th: np.sin(3 * th) + 0.5 * np.cos(7 * th))
    d1 = tangential_derivative(f, 1).values
    d2 = tangential_derivative(f, 2).values
    th = f.theta
    assert np.allclose(d1, 3 * np.cos(3 * th) - 3.5 * np.sin(7 * th), atol=1e-12)
    assert np.allclose(d2, -9 * np.sin(3 * th) - 24.5 * np.cos(7 * th), atol=1e-11)


def test_tangential_derivative_order_guard():
    with pytest.raises(ValueError):
        tangential_derivative(BoundaryFunction.zeros(8), 3)


@settings(max_examples=40, deadline=None)
@given(st.lists(st.floats(-5, 5), min_size=4, max_size=40))
def test_fourier_round_trip(vals):
    f = BoundaryFunction(np.array(vals))
    a, b = f.fourier()
    g = BoundaryFunction.from_fourier(a, b, len(f))
    assert np.allclose(g.values, f.values, atol=1e-10)


def test_fourier_of_single_mode():
    f = BoundaryFunction.from_callable(24, lambda th: 2 * np.cos(3 * th) - np.sin(5 * th))
    a, b = f.fourier(K=6)
    ea = np.zeros(7); ea[3] = 2
    eb = np.zeros(7); eb[5] = -1
    assert np.allclose(a, ea, atol=1e-14) and np.allclose(b, eb, atol=1e-14)


def test_boundary_function_rejects_nonfinite():
    with pytest.raises(ValueError):
        BoundaryFunction([0.0, np.nan])


def test_quadrature_integrates_quintic_exactly():
    m = cached_mesh(1)
    pts, w = quadrature_points(m)
    x, y = pts[..., 0], pts[..., 1]
    # x^4 y over the polygon by the divergence theorem: int x^4 y = int d/dy(x^4 y^2 / 2)
    ref = 0.0
    P = m.nodes[m.boundary_edges]
    for (x0, y0), (x1, y1) in P:
        s = np.linspace(0, 1, 7)
        gx = x0 + s * (x1 - x0); gy = y0 + s * (y1 - y0)
        # Gauss-Lobatto is overkill; use exact polynomial integration via numpy
        c = np.polynomial.polynomial.polyfit(s, gx ** 4 * gy ** 2 / 2, 6)
        ref += np.polynomial.polynomial.polyval(1, np.polynomial.polynomial.polyint(c)) * (x1 - x0)
    # Green: int_D d_y G = -oint G dx
    assert np.sum(w * x ** 4 * y) == pytest.approx(-ref, abs=1e-14)
    assert np.sum(w * x ** 3 * y ** 2) == pytest.approx(0.0, abs=1e-14)


def test_l2_error_zero_for_affine():
    m = cached_mesh(2)
    u = 1 + 2 * m.nodes[:, 0] - m.nodes[:, 1]
    assert l2_error_vs_function(m, u, lambda x, y: 1 + 2 * x - y) < 1e-14


def test_interpolate_reproduces_affine():
    m = cached_mesh(3)
    u = 0.3 - m.nodes[:, 0] + 2 * m.nodes[:, 1]
    pts = np.array([[0.1, 0.2], [-0.5, 0.3], [0.0, -0.9]])
    assert np.allclose(m.interpolate(u, pts), 0.3 - pts[:, 0] + 2 * pts[:, 1], atol=1e-13)
