import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from extremal_domains.errors import ModeDegenerateError, PreconditionError, TruncationError
from extremal_domains.grids import AngularFourier, RadialGrid
from extremal_domains.mode_analysis import (
    apply_H,
    literal_limit_value,
    mode_eigenvalue,
    mode_eigenvalue_via_trace,
    mode_kernel_value,
    verify_assumption_a,
)
from extremal_domains.nonlinearity import NonlinearitySpec, constant_one, linear_plus_quadratic
from extremal_domains.radial_profile import continue_branch, solve_radial_profile

P = np.array([0.0, 0.0])


def affine_spec(slope):
    return NonlinearitySpec(
        f=lambda x, z: 1.0 + slope * np.asarray(z) + 0.0 * np.asarray(x)[..., 0],
        f_z=lambda x, z: slope + 0.0 * np.asarray(z) + 0.0 * np.asarray(x)[..., 0],
        F=lambda x, z: np.asarray(z) + slope * np.asarray(z) ** 2 / 2 + 0.0 * np.asarray(x)[..., 0],
        class_tag="positive_at_zero",
        position_independent=True,
    )


@pytest.fixture(scope="module")
def spectrum(flat_profile):
    return verify_assumption_a(flat_profile, j_max=16)


class TestKernelValues:
    @pytest.mark.parametrize("j", [0, 1, 2, 5, 16, 40])
    def test_zero_potential_gives_power_solution(self, flat_profile, j):
        # f = 1 has f_z = 0: the mode equation is Euler's, w = r^j, w(1) = 1
        assert mode_kernel_value(flat_profile, j) == pytest.approx(1.0, abs=1e-9)

    def test_matrix_eigensolver_oracle_mode0(self):
        """|w(1)| bounded away from zero iff the dense mode-0 operator has no
        eigenvalue near zero."""
        prof = solve_radial_profile(affine_spec(0.5), P, 2, 0.5)
        g = prof.grid
        A = g.radial_laplacian(2) + np.diag(prof.lambda_bar * prof.potential)
        # Dirichlet row at r = 1 and the regularity row at the center
        sys = A.copy()
        sys[0] = 0.0
        sys[0, 0] = 1.0
        sys[g.n] = g.D[g.n]
        eigs = np.linalg.eigvals(sys[1:, 1:])
        assert np.abs(eigs).min() > 1e-6
        w1 = mode_kernel_value(prof, 0)
        assert abs(w1) > 1e-3

    def test_noninvertible_point_detected(self):
        """At the bifurcation point itself (trivial profile, lambda = lambda_0)
        the mode-0 operator has a kernel: w(1) vanishes."""
        branch = continue_branch(linear_plus_quadratic(1.0, -1.0), P, 2, s_max=0.04, steps=2)
        trivial = branch.as_profile(branch.sample_at(0.0))
        assert abs(mode_kernel_value(trivial, 0)) < 1e-6
        verdict = verify_assumption_a(trivial, j_max=4)
        assert not verdict.invertible

    def test_negative_mode_rejected(self, flat_profile):
        with pytest.raises(PreconditionError):
            mode_kernel_value(flat_profile, -1)


class TestAlphas:
    @pytest.mark.parametrize("n_dim", [2, 3])
    def test_closed_form_spectrum(self, n_dim):
        """For f = 1, b_j = (lambda_bar / n)(r^j - r) solves the mode ODE with
        b(1) = 0, giving alpha_j = (j - 1)/n; verified by substitution."""
        prof = solve_radial_profile(constant_one(), P, n_dim, 1.0)
        g = prof.grid
        for j in (1, 2, 3, 8):
            b = (g.r**j - g.r) / n_dim
            mu = j * (j + n_dim - 2)
            interior = slice(1, g.n)
            resid = (
                (g.D2 @ b)[interior]
                + (n_dim - 1) / g.r[interior] * (g.D @ b)[interior]
                - mu / g.r[interior] ** 2 * b[interior]
                - (n_dim - 1 - mu) / g.r[interior] ** 2 * (g.D @ prof.phi)[interior]
            )
            assert np.abs(resid).max() < 1e-7  # substitution check of the oracle
            assert mode_eigenvalue(prof, j) == pytest.approx((j - 1) / n_dim, abs=1e-10)

    def test_alpha1_sharp_via_trace_route(self, flat_profile):
        assert abs(mode_eigenvalue_via_trace(flat_profile, 1)) <= 1e-8

    def test_trace_route_agrees_with_collocation(self, flat_profile):
        for j in range(2, 7):
            a = mode_eigenvalue(flat_profile, j)
            b = mode_eigenvalue_via_trace(flat_profile, j)
            assert abs(a - b) <= 1e-8

    def test_alpha1_zero_on_branch_profile(self):
        branch = continue_branch(linear_plus_quadratic(1.0, -1.0), P, 2, s_max=0.1, steps=5)
        prof = branch.as_profile(branch.sample_at(0.1))
        assert abs(mode_eigenvalue_via_trace(prof, 1)) <= 1e-7

    def test_branch_alphas_scale_with_s(self):
        """Along the bifurcation branch the mode multipliers are O(s)."""
        branch = continue_branch(linear_plus_quadratic(1.0, -1.0), P, 2, s_max=0.1, steps=5)
        small = verify_assumption_a(branch.as_profile(branch.sample_at(0.04)), j_max=6)
        large = verify_assumption_a(branch.as_profile(branch.sample_at(0.1)), j_max=6)
        assert small.all_pass and large.all_pass
        ratio = small.alphas[2] / large.alphas[2]
        assert 0.2 < ratio < 0.7  # roughly s_small / s_large = 0.4

    def test_mode_degenerate_error(self):
        branch = continue_branch(linear_plus_quadratic(1.0, -1.0), P, 2, s_max=0.04, steps=2)
        trivial = branch.as_profile(branch.sample_at(0.0))
        with pytest.raises(ModeDegenerateError):
            mode_eigenvalue(trivial, 2, kernel_value=0.0)


class TestLiteralForm:
    def test_backward_integration_matches_closed_form(self, flat_profile):
        """a_j = (r^j - r)/2 + (j-1)/(4j) (r^-j - r^j) satisfies a(1) = a'(1) = 0."""
        for j in (2, 3, 6):
            r = 0.02
            exact = (r**j - r) / 2 + (j - 1) / (4 * j) * (r**-j - r**j)
            got = literal_limit_value(flat_profile, j, r_stop=r)
            assert abs(got - exact) / abs(exact) < 1e-6

    def test_limit_bounded_away_from_zero_iff_alpha_nonzero(self, flat_profile, spectrum):
        for j in range(2, 7):
            assert abs(literal_limit_value(flat_profile, j, r_stop=0.02)) >= 1.0
            assert abs(spectrum.alphas[j]) > 1e-8


class TestVerdict:
    def test_all_pass_for_flat_profile(self, spectrum):
        assert spectrum.invertible
        assert spectrum.alpha1_zero
        assert spectrum.alphas_nonzero_j_ge_2
        assert spectrum.all_pass
        assert spectrum.tail_certified
        assert np.array_equal(spectrum.mus, np.arange(17) * np.arange(17))

    def test_tail_certificate_uses_potential_bound(self):
        prof = solve_radial_profile(affine_spec(0.5), P, 2, 0.5)
        verdict = verify_assumption_a(prof, j_max=2)
        # K = sup lambda f_z = 0.25 < mu_3 = 9: certified even with a tiny scan
        assert verdict.potential_bound == pytest.approx(0.125, abs=1e-12)
        assert verdict.tail_certified

    def test_growth_of_alphas(self, spectrum):
        js = np.arange(8, 17)
        ratios = spectrum.alphas[8:] / js
        assert ratios.min() > 0.4 and ratios.max() < 0.5


class TestApplyH:
    def test_first_harmonic_annihilated(self, spectrum):
        w = AngularFourier(np.array([0.0, 1.0]), np.zeros(2))
        out = apply_H(spectrum, w)
        assert np.abs(out.cos_coeffs).max() <= 1e-10

    def test_closed_form_action(self, spectrum):
        cos = np.zeros(6)
        cos[2] = 1.0
        sin = np.zeros(6)
        sin[5] = 1.0
        out = apply_H(spectrum, AngularFourier(cos, sin))
        assert out.cos_coeffs[2] == pytest.approx(0.5, abs=1e-10)
        assert out.sin_coeffs[5] == pytest.approx(2.0, abs=1e-10)
        assert out.mean == 0.0

    def test_requires_zero_mean(self, spectrum):
        with pytest.raises(PreconditionError):
            apply_H(spectrum, AngularFourier(np.array([1.0, 0.0]), np.zeros(2)))

    def test_truncation_flagged(self, spectrum):
        cos = np.zeros(spectrum.j_max + 3)
        cos[-1] = 1.0
        with pytest.raises(TruncationError):
            apply_H(spectrum, AngularFourier(cos, np.zeros_like(cos)))

    @given(
        c=st.lists(st.floats(-1, 1), min_size=4, max_size=4),
        s=st.lists(st.floats(-1, 1), min_size=4, max_size=4),
    )
    @settings(max_examples=25, deadline=None)
    def test_self_adjointness_exact(self, spectrum, c, s):
        """<w', H w> = <w, H w'> exactly: diagonal real multipliers."""
        w1 = AngularFourier(np.array([0.0] + c), np.array([0.0] + s))
        w2 = AngularFourier(np.array([0.0] + s), np.array([0.0] + c))
        H1, H2 = apply_H(spectrum, w1), apply_H(spectrum, w2)

        def inner(f, g):
            return np.pi * (f.cos_coeffs[1:] @ g.cos_coeffs[1:] + f.sin_coeffs[1:] @ g.sin_coeffs[1:])

        assert inner(w2, H1) == inner(w1, H2)
