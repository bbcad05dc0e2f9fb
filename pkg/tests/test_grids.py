import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from extremal_domains.errors import TruncationError
from extremal_domains.grids import (
    AngularFourier,
    PolarDiskGrid,
    RadialGrid,
    abs_weighted_cc_weights,
    barycentric_matrix,
    chebyshev_diff_matrix,
    chebyshev_lobatto,
    clenshaw_curtis_weights,
    fourier_diff_matrix,
)


@pytest.mark.parametrize("n", [8, 9, 16, 33])
def test_clenshaw_curtis_exact_on_polynomials(n):
    x = chebyshev_lobatto(n)
    w = clenshaw_curtis_weights(n)
    for k in range(n):
        exact = 2.0 / (k + 1) if k % 2 == 0 else 0.0
        assert abs(w @ x**k - exact) < 1e-13


@pytest.mark.parametrize("n", [9, 15, 31])
def test_abs_weighted_rule_exact(n):
    x = chebyshev_lobatto(n)
    w = abs_weighted_cc_weights(n)
    for k in range(n + 1):
        exact = 2.0 / (k + 2) if k % 2 == 0 else 0.0
        assert abs(w @ x**k - exact) < 1e-12


def test_chebyshev_differentiation_polynomial():
    n = 16
    x = chebyshev_lobatto(n)
    D = chebyshev_diff_matrix(n)
    assert np.abs(D @ x**5 - 5 * x**4).max() < 1e-10


def test_radial_grid_laplacian_center_row():
    g = RadialGrid(32)
    # u = 1 - r^2: u'' + (n-1)/r u' = -2n everywhere, including the L'Hopital row
    for n_dim in (2, 3):
        L = g.radial_laplacian(n_dim)
        vals = L @ (1.0 - g.r**2)
        assert np.abs(vals + 2.0 * n_dim).max() < 1e-9


@given(st.integers(min_value=1, max_value=7))
@settings(max_examples=7, deadline=None)
def test_fourier_differentiation_trig(k):
    n = 16
    theta = 2 * np.pi * np.arange(n) / n
    D = fourier_diff_matrix(n)
    assert np.abs(D @ np.sin(k * theta) - k * np.cos(k * theta)).max() < 1e-11


def test_barycentric_interpolation_exact_between_nodes():
    g = RadialGrid(24)
    targets = np.array([0.0, 0.123, 0.5, 0.987, 1.0])
    B = barycentric_matrix(g.r, targets)
    f = np.exp(g.r) * np.cos(3 * g.r)
    exact = np.exp(targets) * np.cos(3 * targets)
    assert np.abs(B @ f - exact).max() < 1e-12


class TestPolarDiskGrid:
    def test_rejects_odd_theta(self):
        with pytest.raises(ValueError):
            PolarDiskGrid(8, 15)

    def test_derivatives_on_polynomial_field(self, disk_grid):
        g = disk_grid
        r = g.r[:, None]
        th = g.theta[None, :]
        u = (r**2 - r**4) * np.cos(2 * th)
        assert np.abs(g.dr(u) - (2 * r - 4 * r**3) * np.cos(2 * th)).max() < 1e-12
        assert np.abs(g.dtheta(u) + 2 * (r**2 - r**4) * np.sin(2 * th)).max() < 1e-12

    def test_area_quadrature(self, disk_grid):
        g = disk_grid
        assert abs(g.integrate_area(np.ones(g.shape)) - np.pi) < 1e-14
        x_sq = (g.r[:, None] * np.cos(g.theta)[None, :]) ** 2
        assert abs(g.integrate_area(x_sq) - np.pi / 4) < 1e-13

    def test_no_node_at_origin(self, disk_grid):
        assert disk_grid.r.min() > 0
        assert disk_grid.r.max() == 1.0


class TestAngularFourier:
    def test_roundtrip(self):
        n = 32
        theta = 2 * np.pi * np.arange(n) / n
        vals = 0.3 + 0.5 * np.cos(2 * theta) - 0.2 * np.sin(5 * theta)
        f = AngularFourier.from_values(vals)
        assert abs(f.mean - 0.3) < 1e-14
        assert abs(f.cos_coeffs[2] - 0.5) < 1e-14
        assert abs(f.sin_coeffs[5] + 0.2) < 1e-14
        assert np.abs(f.evaluate(theta) - vals).max() < 1e-13

    def test_derivative(self):
        f = AngularFourier(np.array([0.0, 0.0, 1.0]), np.zeros(3))
        theta = np.linspace(0, 2 * np.pi, 17)
        assert np.abs(f.derivative().evaluate(theta) + 2 * np.sin(2 * theta)).max() < 1e-14

    def test_truncation_raises_on_content(self):
        f = AngularFourier(np.array([0.0, 0.0, 0.0, 1e-3]), np.zeros(4))
        with pytest.raises(TruncationError):
            f.truncated(2)

    @given(st.lists(st.floats(-1, 1), min_size=2, max_size=6))
    @settings(max_examples=25, deadline=None)
    def test_mean_is_mode_zero(self, coeffs):
        cos = np.array([0.0] + coeffs)
        f = AngularFourier(cos, np.zeros_like(cos))
        theta = 2 * np.pi * np.arange(64) / 64
        assert abs(f.evaluate(theta).mean() - f.mean) < 1e-12
