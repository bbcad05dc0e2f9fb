import numpy as np
import pytest

from extremal_domains.errors import PositivityViolationError, PreconditionError
from extremal_domains.grids import RadialGrid
from extremal_domains.nonlinearity import (
    NonlinearitySpec,
    constant_one,
    linear_plus_quadratic,
)
from extremal_domains.radial_profile import (
    continue_branch,
    first_dirichlet_eigenvalue,
    solve_harmonic_radial,
    solve_radial_profile,
    sphere_density,
    unit_sphere_area,
)

from oracles import shoot_center_height

P = np.array([0.0, 0.0])
J01 = 2.404825557695773  # first zero of J_0, test oracle only


def affine_spec(slope):
    return NonlinearitySpec(
        f=lambda x, z: 1.0 + slope * np.asarray(z) + 0.0 * np.asarray(x)[..., 0],
        f_z=lambda x, z: slope + 0.0 * np.asarray(z) + 0.0 * np.asarray(x)[..., 0],
        F=lambda x, z: np.asarray(z) + slope * np.asarray(z) ** 2 / 2 + 0.0 * np.asarray(x)[..., 0],
        class_tag="positive_at_zero",
        position_independent=True,
    )


class TestProfile:
    @pytest.mark.parametrize("n_dim", [2, 3])
    def test_closed_form_linear_poisson(self, n_dim):
        prof = solve_radial_profile(constant_one(), P, n_dim, 1.0)
        exact = (1.0 - prof.grid.r**2) / (2 * n_dim)
        assert np.abs(prof.phi - exact).max() <= 1e-10
        assert prof.c1 == pytest.approx(-1.0 / n_dim, abs=1e-10)
        assert prof.c2 == pytest.approx(-1.0 / n_dim, abs=1e-8)
        assert prof.residual <= 1e-10
        assert prof.phi[0] == 0.0

    def test_scales_with_lambda_bar(self):
        prof = solve_radial_profile(constant_one(), P, 2, 0.5)
        assert np.abs(prof.phi - 0.5 * (1 - prof.grid.r**2) / 4).max() < 1e-10

    def test_shooting_oracle_nonlinear(self):
        """phi(0) against an independent fourth-order shooting integration."""
        prof = solve_radial_profile(affine_spec(0.5), P, 2, 0.5)
        h_star = shoot_center_height(
            lambda z: 1.0 + 0.5 * z, 0.5, 2, bracket=(0.10, 0.16), step=1e-5
        )
        assert abs(prof.phi[-1] - h_star) <= 1e-7

    def test_positivity_violation_reported(self):
        # the trivial solution of a bifurcation nonlinearity is not positive
        with pytest.raises(PositivityViolationError):
            solve_radial_profile(linear_plus_quadratic(1.0, -1.0), P, 2, 1.0)

    def test_lambda_bar_must_be_positive(self):
        with pytest.raises(PreconditionError):
            solve_radial_profile(constant_one(), P, 2, -1.0)

    def test_grid_refinement_convergence(self):
        a = solve_radial_profile(affine_spec(0.5), P, 2, 0.5, grid=RadialGrid(48))
        b = solve_radial_profile(affine_spec(0.5), P, 2, 0.5, grid=RadialGrid(96))
        assert abs(a.phi[-1] - b.phi[-1]) <= 1e-9


class TestEigen:
    def test_first_eigenvalue_matches_bessel(self):
        lam1, phi1 = first_dirichlet_eigenvalue(2)
        assert abs(lam1 - J01**2) < 1e-9

    def test_eigenfunction_normalized_positive(self):
        _, phi1 = first_dirichlet_eigenvalue(2)
        g = RadialGrid(64)
        norm2 = unit_sphere_area(2) * g.integrate(phi1**2 * g.r)
        assert abs(norm2 - 1.0) < 1e-12
        assert phi1[-1] > 0


class TestBranch:
    @pytest.fixture(scope="class")
    def branch_minus(self):
        return continue_branch(linear_plus_quadratic(1.0, -1.0), P, 2, s_max=0.12, steps=6)

    def test_base_point(self, branch_minus):
        base = min(branch_minus.samples, key=lambda s: abs(s.s))
        assert base.s == 0.0
        assert base.lambda_ == pytest.approx(branch_minus.lambda0)
        assert np.abs(base.phi).max() == 0.0
        assert branch_minus.lambda0 == pytest.approx(J01**2, abs=1e-9)

    def test_lambda_increasing_for_negative_fzz(self, branch_minus):
        assert branch_minus.direction_sign == 1

    def test_lambda_decreasing_for_positive_fzz(self):
        br = continue_branch(linear_plus_quadratic(1.0, +1.0), P, 2, s_max=0.08, steps=4)
        assert br.direction_sign == -1

    def test_slope_relation(self, branch_minus):
        """-(d lambda/ds) c = d mu/ds at the bifurcation point."""
        lhs = -branch_minus.lambda_slope() * 1.0
        rhs = branch_minus.mu_slope()
        assert abs(lhs - rhs) / abs(rhs) < 1e-2

    def test_mu_simple_and_vanishing_at_base(self, branch_minus):
        mus = {round(s.s, 4): s.mu for s in branch_minus.samples}
        assert mus[0.0] == 0.0
        pos = [s.mu for s in branch_minus.samples if s.s > 0]
        assert all(m < 0 for m in pos)  # principal eigenvalue drops along s > 0

    def test_phi_over_s_approaches_eigenfunction(self, branch_minus):
        smallest = min((s for s in branch_minus.samples if s.s > 0), key=lambda s: s.s)
        rel = np.abs(smallest.phi / smallest.s - branch_minus.phi1).max()
        rel /= np.abs(branch_minus.phi1).max()
        assert rel <= 0.05

    def test_branch_profile_is_valid(self, branch_minus):
        prof = branch_minus.as_profile(branch_minus.sample_at(0.1))
        prof.validate()
        assert prof.lambda_bar > branch_minus.lambda0

    def test_requires_bifurcation_class(self):
        with pytest.raises(PreconditionError):
            continue_branch(constant_one(), P, 2, s_max=0.1)


class TestHarmonicRadial:
    def test_flat_density_reduces_to_poisson(self):
        one = lambda z: np.ones_like(np.asarray(z, dtype=float))
        zero = lambda z: np.zeros_like(np.asarray(z, dtype=float))
        psi = solve_harmonic_radial(one, zero, lambda r: np.ones_like(np.asarray(r, dtype=float)), 2)
        g = RadialGrid(64)
        assert np.abs(psi - (1 - g.r**2) / 4).max() <= 1e-12

    def test_sphere_density_against_shooting(self):
        eps = 0.2
        one = lambda z: np.ones_like(np.asarray(z, dtype=float))
        zero = lambda z: np.zeros_like(np.asarray(z, dtype=float))
        psi = solve_harmonic_radial(one, zero, sphere_density(eps), 2)
        h_star = shoot_center_height(
            lambda z: np.ones_like(np.asarray(z, dtype=float)), 1.0, 2,
            bracket=(0.24, 0.26), density=sphere_density(eps), step=2e-5,
        )
        assert abs(psi[-1] - h_star) <= 1e-7

    def test_epsilon_squared_limit(self):
        one = lambda z: np.ones_like(np.asarray(z, dtype=float))
        zero = lambda z: np.zeros_like(np.asarray(z, dtype=float))
        devs = {}
        for eps in (0.2, 0.1):
            psi = solve_harmonic_radial(one, zero, sphere_density(eps), 2)
            devs[eps] = abs(psi[-1] - 0.25)
        assert devs[0.1] <= 0.3 * devs[0.2]  # quadratic decay, with slack

    def test_density_validation(self):
        one = lambda z: np.ones_like(np.asarray(z, dtype=float))
        zero = lambda z: np.zeros_like(np.asarray(z, dtype=float))
        with pytest.raises(PreconditionError):
            solve_harmonic_radial(one, zero, lambda r: 2.0 * np.ones_like(np.asarray(r, dtype=float)), 2)
