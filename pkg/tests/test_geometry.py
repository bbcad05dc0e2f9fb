import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from extremal_domains.errors import (
    MetricDegeneracyError,
    OutOfRangeError,
    PreconditionError,
)
from extremal_domains.geometry import (
    BoundaryShape,
    conformal_torus,
    custom_chart,
    exp_map,
    flat_torus,
    log_map,
    metric_shape_derivative,
    normal_metric,
    pullback_shape_metric,
    round_sphere,
    smoothstep_cutoff,
    smoothstep_cutoff_derivative,
    sphere_exp,
    sphere_log,
    volume,
    volume_shape_derivative,
)
from extremal_domains.grids import AngularFourier, PolarDiskGrid


class TestCharts:
    def test_flat_torus_metric_is_identity(self, torus):
        pts = np.random.default_rng(0).uniform(0, 2 * np.pi, (10, 2))
        assert np.abs(torus.metric(pts) - np.eye(2)).max() == 0.0

    def test_sphere_chart_covers_almost_pi(self, sphere):
        p = np.array([3.0, 0.5])
        assert np.linalg.norm(p) < np.pi * sphere.params["radius"]
        g = sphere.metric(p)
        assert np.all(np.linalg.eigvalsh(g) > 0)

    def test_invalid_metric_rejected(self):
        def bad(x):
            x = np.asarray(x, dtype=float)
            out = np.broadcast_to(np.diag([1.0, -1.0]), x.shape[:-1] + (2, 2))
            return out.copy()

        with pytest.raises(MetricDegeneracyError):
            custom_chart(bad, 1.0)

    def test_conformal_amplitude_bounds(self):
        with pytest.raises(ValueError):
            conformal_torus(1.5)


class TestExpMap:
    def test_flat_straight_line(self, torus):
        out = exp_map(torus, np.array([0.0, 0.0]), np.array([0.3, 0.4]))
        assert np.array_equal(out, np.array([0.3, 0.4]))

    def test_zero_vector_fixed_point_exact(self, sphere, torus):
        p = np.array([0.4, -0.2])
        for chart in (sphere, torus, conformal_torus(0.1)):
            assert np.array_equal(exp_map(chart, p, np.zeros(2)), p)

    def test_sphere_quarter_circle_against_closed_form(self, sphere):
        p = np.array([0.0, 0.0])
        x = np.array([np.pi / 2, 0.0])
        q = exp_map(sphere, p, x, n_steps=400)
        assert np.abs(q - np.array([np.pi / 2, 0.0])).max() < 1e-12
        q_cf = sphere_exp(p, x[None, :], 1.0)[0]
        assert np.abs(q - q_cf).max() < 1e-12

    def test_sphere_off_center_matches_embedding_formula(self, sphere):
        p = np.array([0.5, 0.3])
        v = np.array([0.2, -0.1])
        q_int = exp_map(sphere, p, v, n_steps=800)
        q_cf = sphere_exp(p, v[None, :], 1.0)[0]
        assert np.abs(q_int - q_cf).max() < 1e-10
        assert np.abs(sphere_log(p, q_cf[None, :], 1.0)[0] - v).max() < 1e-12

    def test_conformal_richardson_self_consistency(self):
        chart = conformal_torus(0.1)
        p = np.array([0.0, 0.0])
        x = np.array([0.2, 0.0])
        e1 = exp_map(chart, p, x, n_steps=64)
        e2 = exp_map(chart, p, x, n_steps=128)
        assert np.abs(e1 - e2).max() < 1e-8
        # parametrization is genuinely non-affine for the conformal metric
        assert abs(e1[0] - 0.2) > 1e-5

    def test_injectivity_precondition(self, sphere):
        with pytest.raises(PreconditionError):
            exp_map(sphere, np.array([0.0, 0.0]), np.array([3.5, 0.0]))

    def test_log_roundtrip_conformal(self):
        chart = conformal_torus(0.1)
        p = np.array([1.0, 2.0])
        v = np.array([0.05, -0.03])
        q = exp_map(chart, p, v)
        assert np.abs(log_map(chart, p, q) - v).max() < 1e-11

    def test_torus_log_min_image(self, torus):
        p = np.array([0.1, 0.1])
        q = np.array([2 * np.pi - 0.1, 0.1])
        assert np.abs(log_map(torus, p, q) - np.array([-0.2, 0.0])).max() < 1e-14


class TestNormalMetric:
    def test_flat_identity_any_epsilon(self, flat_nm):
        g, dg = flat_nm.evaluate(np.full((3, 32), 0.7))
        assert np.abs(g - np.eye(2)).max() == 0.0
        assert np.abs(dg).max() == 0.0

    def test_sphere_angular_factor(self, sphere, origin):
        nm = normal_metric(sphere, origin, 0.1, n_theta=16, n_radial=12)
        g, _ = nm.evaluate(np.ones((1, 16)))
        # at theta = 0 the tangential direction is e2
        assert abs(g[0, 0, 1, 1] - np.sin(0.1) ** 2 / 0.01) < 1e-14

    def test_identity_at_center_and_flat_derivative(self, sphere, origin):
        nm = normal_metric(sphere, origin, 0.2, n_theta=16, n_radial=12)
        assert np.abs(nm.values[0] - np.eye(2)).max() < 1e-12
        assert np.abs(nm.radial_derivs[0]).max() < 1e-10

    def test_epsilon_scaling_conformal(self, origin):
        chart = conformal_torus(0.1)
        devs = {}
        for eps in (0.1, 0.05):
            nm = normal_metric(chart, origin, eps, n_theta=16, n_radial=12)
            devs[eps] = np.abs(nm.values - np.eye(2)).max()
        # deviation decays at least linearly in epsilon (quadratically in fact)
        assert devs[0.05] <= 0.6 * devs[0.1]

    def test_jacobi_matches_closed_form_sphere(self, sphere, origin):
        as_custom = custom_chart(
            sphere.metric, np.pi, probe_points=np.array([[0.1, 0.1], [0.3, -0.2]])
        )
        nm_j = normal_metric(as_custom, origin, 0.1, n_theta=8, n_radial=10, r_max=1.2)
        nm_c = normal_metric(sphere, origin, 0.1, n_theta=8, n_radial=10, r_max=1.2)
        assert nm_j.provenance == "jacobi_integrated"
        assert np.abs(nm_j.values - nm_c.values).max() < 1e-8

    def test_rotation_invariance_on_grid(self, origin, sphere):
        """Rotating the tangent frame by a whole grid spacing permutes the
        rays; isotropic models must produce identical component tables."""
        as_custom = custom_chart(
            sphere.metric, np.pi, probe_points=np.array([[0.1, 0.1], [0.3, -0.2]])
        )
        n_theta = 8
        k = 2
        omega = 2 * np.pi * k / n_theta
        nm0 = normal_metric(as_custom, origin, 0.15, n_theta=n_theta, n_radial=10)
        nm1 = normal_metric(as_custom, origin, 0.15, n_theta=n_theta, n_radial=10, frame_angle=omega)
        R = np.array([[np.cos(omega), -np.sin(omega)], [np.sin(omega), np.cos(omega)]])
        rotated = np.einsum("ai,qtij,bj->qtab", R, np.roll(nm0.values, -k, axis=1), R)
        assert np.abs(nm1.values - rotated).max() < 1e-6

    def test_conjugate_point_detection(self, sphere, origin):
        lying = custom_chart(sphere.metric, 10.0, probe_points=np.array([[0.1, 0.0]]))
        with pytest.raises(MetricDegeneracyError):
            normal_metric(lying, origin, 2.9, n_theta=8, n_radial=16, r_max=1.2)

    def test_injectivity_precondition(self, sphere, origin):
        with pytest.raises(PreconditionError):
            normal_metric(sphere, origin, 3.0, n_theta=8, n_radial=8, r_max=1.3)


class TestCutoff:
    def test_support_and_smoothness(self):
        r = np.linspace(0, 1, 101)
        chi = smoothstep_cutoff(r)
        assert np.all(chi[r <= 0.5] == 0.0)
        assert np.all(chi[r >= 0.75] == 1.0)
        assert np.all(np.diff(chi) >= 0)
        h = 1e-6
        mid = np.array([0.6, 0.65, 0.7])
        fd = (smoothstep_cutoff(mid + h) - smoothstep_cutoff(mid - h)) / (2 * h)
        assert np.abs(fd - smoothstep_cutoff_derivative(mid)).max() < 1e-8


class TestBoundaryShape:
    def test_mean_mode_must_vanish(self):
        with pytest.raises(ValueError):
            BoundaryShape(0.0, AngularFourier(np.array([0.1, 0.0]), np.zeros(2)))

    def test_degenerate_shape_rejected(self):
        with pytest.raises(ValueError):
            BoundaryShape.from_coeffs(-0.5, [0, 0.8], [0, 0])

    @given(st.floats(-0.2, 0.2), st.floats(-0.2, 0.2))
    @settings(max_examples=20, deadline=None)
    def test_total_radius_positive(self, c2, s3):
        shape = BoundaryShape.from_coeffs(0.0, [0, 0, c2, 0], [0, 0, 0, s3])
        theta = np.linspace(0, 2 * np.pi, 64)
        assert np.all(shape.total(theta) > 0)


class TestPullback:
    def test_zero_shape_identity(self, flat_nm, disk_grid):
        pm = pullback_shape_metric(flat_nm, BoundaryShape.zero(4), disk_grid)
        assert np.abs(pm.cart - np.eye(2)).max() < 1e-15
        assert abs(volume(pm) - np.pi) < 1e-13

    def test_pure_dilation(self, flat_nm, disk_grid):
        pm = pullback_shape_metric(flat_nm, BoundaryShape.zero(4, v0=0.1), disk_grid)
        assert np.abs(pm.cart - 1.21 * np.eye(2)).max() < 1e-14
        assert abs(volume(pm) - 1.21 * np.pi) < 1e-12

    def test_polar_expansion_outside_cutoff(self, flat_nm, disk_grid):
        """In the chi = 1 region the flat pullback has the closed polar form
        g_rr = m^2, g_rt = s m r w', g_tt = r^2 (m^2 + s^2 w'^2)."""
        s = 0.01
        shape = BoundaryShape.from_coeffs(0.0, [0, 0, s], [0, 0, 0])
        pm = pullback_shape_metric(flat_nm, shape, disk_grid)
        th = disk_grid.theta
        w, wp = np.cos(2 * th), -2 * np.sin(2 * th)
        m = 1.0 + s * w
        i = 0  # boundary ring, r = 1
        assert np.abs(pm.g_rr[i] - m**2).max() < 1e-14
        assert np.abs(pm.g_rtheta[i] - s * m * wp).max() < 1e-14
        assert np.abs(pm.g_thetatheta[i] - (m**2 + s**2 * wp**2)).max() < 1e-14

    def test_out_of_range_shape(self, disk_grid, torus, origin):
        nm = normal_metric(torus, origin, 0.1, n_theta=32, n_radial=10, r_max=1.1)
        with pytest.raises(OutOfRangeError):
            pullback_shape_metric(nm, BoundaryShape.zero(2, v0=0.2), disk_grid)

    def test_volume_closed_form_with_shape(self, flat_nm, disk_grid):
        shape = BoundaryShape.from_coeffs(0.03, [0, 0, 0.05], [0, 0, 0.02])
        pm = pullback_shape_metric(flat_nm, shape, disk_grid)
        exact = np.pi * 1.03**2 + 0.5 * np.pi * (0.05**2 + 0.02**2)
        assert abs(volume(pm) - exact) < 5e-5  # cutoff is C^2: algebraic quadrature rate

    def test_sphere_cap_volume(self, sphere, origin, disk_grid):
        nm = normal_metric(sphere, origin, 0.2, n_theta=32, n_radial=16)
        pm = pullback_shape_metric(nm, BoundaryShape.zero(2), disk_grid)
        assert abs(volume(pm) - 2 * np.pi * (1 - np.cos(0.2)) / 0.04) < 1e-13

    def test_analytic_volume_derivative_matches_fd(self, flat_nm, disk_grid):
        shape = BoundaryShape.from_coeffs(0.03, [0, 0, 0.05], [0, 0, 0.02])
        pm = pullback_shape_metric(flat_nm, shape, disk_grid)
        h = 1e-6
        directions = [
            (0.0, AngularFourier(np.array([0.0, 0.0, 1.0]), np.zeros(3))),
            (1.0, AngularFourier.zero(2)),
        ]
        for dv0, dvbar in directions:
            def shape_at(t):
                return BoundaryShape(
                    shape.v0 + t * dv0,
                    AngularFourier(
                        shape.vbar.cos_coeffs + t * dvbar.cos_coeffs,
                        shape.vbar.sin_coeffs + t * dvbar.sin_coeffs,
                    ),
                )
            fd = (volume(pullback_shape_metric(flat_nm, shape_at(h), disk_grid))
                  - volume(pullback_shape_metric(flat_nm, shape_at(-h), disk_grid))) / (2 * h)
            an = volume_shape_derivative(pm, dv0, dvbar)
            assert abs(an - fd) < 1e-8

    @given(delta=st.floats(-0.01, 0.01))
    @settings(max_examples=15, deadline=None)
    def test_volume_continuity_in_shape(self, flat_nm, disk_grid, delta):
        base = BoundaryShape.from_coeffs(0.0, [0, 0, 0.05], [0, 0, 0])
        pert = BoundaryShape.from_coeffs(0.0, [0, 0, 0.05 + delta], [0, 0, 0])
        v0 = volume(pullback_shape_metric(flat_nm, base, disk_grid))
        v1 = volume(pullback_shape_metric(flat_nm, pert, disk_grid))
        assert abs(v1 - v0) <= 2.0 * abs(delta) + 1e-12

    def test_metric_shape_derivative_matches_fd_componentwise(self, flat_nm, disk_grid):
        shape = BoundaryShape.from_coeffs(0.02, [0, 0, 0.04], [0, 0, 0])
        pm = pullback_shape_metric(flat_nm, shape, disk_grid)
        dvbar = AngularFourier(np.array([0.0, 0.0, 0.0, 1.0]), np.zeros(4))
        d = metric_shape_derivative(pm, 0.0, dvbar)
        h = 1e-6
        def shape_at(t):
            cos = np.zeros(4)
            cos[2] = 0.04
            cos[3] = t
            return BoundaryShape(0.02, AngularFourier(cos, np.zeros(4)))
        pm_p = pullback_shape_metric(flat_nm, shape_at(h), disk_grid)
        pm_m = pullback_shape_metric(flat_nm, shape_at(-h), disk_grid)
        for attr, dval in (("g_rr", d.d_rr), ("g_rtheta", d.d_rtheta), ("g_thetatheta", d.d_thetatheta)):
            fd = (getattr(pm_p, attr) - getattr(pm_m, attr)) / (2 * h)
            assert np.abs(fd - dval).max() < 1e-8
