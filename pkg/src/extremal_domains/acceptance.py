"""Runnable acceptance criteria with their tolerances pinned.

Each criterion is a function returning a CriterionResult; ``run_all``
executes them in order and is what both the test suite and the CLI
``validate`` command call.  Expected values are closed forms or independent
oracles (shooting, bisection, finite differences) computed on the spot.
"""

from __future__ import annotations

import time
from dataclasses import dataclass
from typing import Callable, Iterable, Optional

import numpy as np

from .geometry import BoundaryShape, flat_torus, normal_metric, round_sphere
from .grids import AngularFourier, PolarDiskGrid, RadialGrid
from .dirichlet_solver import solve_dirichlet_volume
from .extremal_solver import neumann_residual, solve_extremal
from .landscape import ShapeDeformation, energy, scan, shape_derivative_check
from .mode_analysis import (
    apply_H,
    literal_limit_value,
    mode_eigenvalue_via_trace,
    verify_assumption_a,
)
from .nonlinearity import NonlinearitySpec, constant_one, linear_plus_quadratic, periodic_forcing
from .radial_profile import (
    RadialGrid,
    continue_branch,
    first_dirichlet_eigenvalue,
    solve_harmonic_radial,
    solve_radial_profile,
    sphere_density,
)

__all__ = ["CriterionResult", "run_all", "CRITERIA"]


@dataclass(frozen=True)
class CriterionResult:
    number: int
    name: str
    passed: bool
    detail: str
    seconds: float


def _result(number: int, name: str, start: float, passed: bool, detail: str) -> CriterionResult:
    return CriterionResult(number, name, bool(passed), detail, time.perf_counter() - start)


def _affine_spec(slope: float) -> NonlinearitySpec:
    """f = 1 + slope * z, used as a generic positive-at-zero nonlinearity."""
    return NonlinearitySpec(
        f=lambda x, z: 1.0 + slope * np.asarray(z) + 0.0 * np.asarray(x)[..., 0],
        f_z=lambda x, z: slope + 0.0 * np.asarray(z) + 0.0 * np.asarray(x)[..., 0],
        f_zz=lambda x, z: 0.0 * np.asarray(z) + 0.0 * np.asarray(x)[..., 0],
        F=lambda x, z: np.asarray(z) + slope * np.asarray(z) ** 2 / 2.0 + 0.0 * np.asarray(x)[..., 0],
        class_tag="positive_at_zero",
        position_independent=True,
        name="affine",
        params={"slope": slope},
    )


def criterion_1_closed_form_profile() -> CriterionResult:
    start = time.perf_counter()
    p = np.array([0.0, 0.0])
    worst_phi, worst_c1 = 0.0, 0.0
    for n_dim in (2, 3):
        prof = solve_radial_profile(constant_one(), p, n_dim, 1.0)
        worst_phi = max(worst_phi, float(np.abs(prof.phi - (1.0 - prof.grid.r**2) / (2 * n_dim)).max()))
        worst_c1 = max(worst_c1, abs(prof.c1 + 1.0 / n_dim))
    ok = worst_phi <= 1e-10 and worst_c1 <= 1e-10
    return _result(1, "closed-form profile", start, ok,
                   f"max|phi - exact| = {worst_phi:.2e}, max|c1 + 1/n| = {worst_c1:.2e}")


def criterion_2_closed_form_spectrum() -> CriterionResult:
    start = time.perf_counter()
    p = np.array([0.0, 0.0])
    worst = 0.0
    for n_dim in (2, 3):
        prof = solve_radial_profile(constant_one(), p, n_dim, 1.0)
        spec = verify_assumption_a(prof, j_max=16)
        js = np.arange(1, 17)
        worst = max(worst, float(np.abs(spec.alphas[1:] - (js - 1) / n_dim).max()))
    ok = worst <= 1e-8
    return _result(2, "closed-form mode spectrum", start, ok,
                   f"max|alpha_j - (j-1)/n| = {worst:.2e} over j = 1..16, n in {{2, 3}}")


def criterion_3_alpha1_universality() -> CriterionResult:
    start = time.perf_counter()
    p = np.array([0.0, 0.0])
    profiles = [
        solve_radial_profile(constant_one(), p, 2, 1.0),
        solve_radial_profile(constant_one(), p, 3, 1.0),
        solve_radial_profile(_affine_spec(0.5), p, 2, 0.5),
        solve_radial_profile(periodic_forcing(0.25), np.array([0.7, 0.3]), 2, 1.0),
    ]
    branch = continue_branch(linear_plus_quadratic(1.0, -1.0), p, 2, s_max=0.1, steps=5)
    profiles.append(branch.as_profile(branch.sample_at(0.1)))
    vals = [abs(mode_eigenvalue_via_trace(prof, 1)) for prof in profiles]
    worst = max(vals)
    ok = worst <= 1e-7
    return _result(3, "alpha_1 = 0 across profiles", start, ok,
                   f"max|alpha_1| = {worst:.2e} over {len(profiles)} profiles (trace route)")


def criterion_4_linearization_identity() -> CriterionResult:
    start = time.perf_counter()
    p = np.array([0.0, 0.0])
    chart = flat_torus()
    # production radial resolution: the cutoff-limited linearization floor
    # must sit below the linear-in-s term at s = 1e-4
    grid = PolarDiskGrid(48, 32)
    nm0 = normal_metric(chart, p, 0.0, n_theta=32, n_radial=8)
    spec = constant_one()
    prof = solve_radial_profile(spec, p, 2, 1.0)
    spectrum = verify_assumption_a(prof, j_max=8)

    base = solve_dirichlet_volume(nm0, spec, AngularFourier.zero(8), grid=grid, profile=prof)
    F0 = neumann_residual(base).modes
    worst_small, worst_ratio = 0.0, 0.0
    for j in range(2, 7):
        cos = np.zeros(9)
        cos[j] = 1.0
        w = AngularFourier(cos, np.zeros(9))
        Hw = apply_H(spectrum, w)
        errs = {}
        for s in (1e-3, 1e-4):
            vb = AngularFourier(s * cos, np.zeros(9))
            sol = solve_dirichlet_volume(nm0, spec, vb, grid=grid, init=base, profile=prof)
            Fs = neumann_residual(sol).modes
            theta = grid.theta
            quotient = (Fs.evaluate(theta) - F0.evaluate(theta)) / s
            target = Hw.evaluate(theta)
            errs[s] = float(np.abs(quotient - target).max() / np.abs(target).max())
        worst_small = max(worst_small, errs[1e-4])
        worst_ratio = max(worst_ratio, errs[1e-4] / errs[1e-3])
    ok = worst_small <= 1e-2 and worst_ratio <= 0.5
    return _result(4, "trace linearization is the mode operator", start, ok,
                   f"rel err at s = 1e-4: {worst_small:.2e}; decay ratio err(1e-4)/err(1e-3): {worst_ratio:.2f}")


def criterion_5_volume_neutrality() -> CriterionResult:
    start = time.perf_counter()
    p = np.array([0.0, 0.0])
    nm0 = normal_metric(flat_torus(), p, 0.0, n_theta=32, n_radial=8)
    grid = PolarDiskGrid(20, 32)
    spec = constant_one()
    worst = 0.0
    details = []
    cos = np.zeros(4)
    cos[2] = 1.0
    sin = np.zeros(4)
    sin[3] = 0.5
    for s in (1e-2, 1e-3):
        vb = AngularFourier(s * cos, s * sin)
        sol = solve_dirichlet_volume(nm0, spec, vb, grid=grid)
        ratio = abs(sol.v0) / (10.0 * s**2)
        worst = max(worst, ratio)
        details.append(f"s={s:g}: |v0|={abs(sol.v0):.2e}")
    ok = worst <= 1.0
    return _result(5, "first-order volume neutrality", start, ok,
                   "; ".join(details) + f" (bound 10 s^2, worst ratio {worst:.2f})")


def criterion_6_shape_derivative() -> CriterionResult:
    start = time.perf_counter()
    p = np.array([0.0, 0.0])
    nm0 = normal_metric(flat_torus(), p, 0.0, n_theta=32, n_radial=8)
    grid = PolarDiskGrid(24, 32)
    spec = constant_one()
    base = BoundaryShape.from_coeffs(0.0, [0, 0, 0.1], [0, 0, 0])
    d2 = ShapeDeformation(AngularFourier(np.array([0.0, 0.0, 1.0]), np.zeros(3)))
    an2, num2 = shape_derivative_check(nm0, spec, base, d2, h=1e-4, grid=grid)
    rel2 = abs(an2 - num2) / abs(an2)
    d_unif = ShapeDeformation(AngularFourier(np.array([1.0, 0.0]), np.zeros(2)))
    an_u, num_u = shape_derivative_check(nm0, spec, BoundaryShape.zero(4), d_unif, h=1e-4, grid=grid)
    rel_u = abs(an_u - num_u) / abs(an_u)
    target = -np.pi / 4.0
    rel_t = abs(an_u - target) / abs(target)
    ok = rel2 <= 1e-2 and rel_u <= 1e-2 and rel_t <= 1e-2
    return _result(6, "Hadamard shape-derivative identity", start, ok,
                   f"mode-2 rel {rel2:.2e}; uniform rel {rel_u:.2e}; -pi/4 match {rel_t:.2e}")


def criterion_7_flat_torus_exactness() -> CriterionResult:
    start = time.perf_counter()
    chart = flat_torus()
    spec = constant_one()
    grid = PolarDiskGrid(16, 32)
    prof = solve_radial_profile(spec, np.array([0.0, 0.0]), 2, 1.0)
    spectrum = verify_assumption_a(prof, j_max=4)
    xs = np.linspace(0.0, 2 * np.pi, 8, endpoint=False)
    worst_vbar = worst_a = worst_b = 0.0
    Js = []
    warm = None
    for i, x1 in enumerate(xs):
        cols = xs if i % 2 == 0 else xs[::-1]
        for x2 in cols:
            ex = solve_extremal(chart, spec, np.array([x1, x2]), 0.1,
                                j_max=4, grid=grid, profile=prof, spectrum=spectrum, warm=warm)
            warm = ex
            worst_vbar = max(worst_vbar, float(np.abs(ex.vbar.cos_coeffs).max()),
                             float(np.abs(ex.vbar.sin_coeffs).max()))
            worst_a = max(worst_a, float(np.linalg.norm(ex.a)))
            worst_b = max(worst_b, abs(ex.b + 0.5))
            Js.append(energy(ex))
    spread = max(Js) - min(Js)
    ok = worst_vbar <= 1e-9 and worst_a <= 1e-9 and worst_b <= 1e-9 and spread <= 1e-9
    return _result(7, "flat-torus exactness on an 8x8 grid", start, ok,
                   f"max|vbar| {worst_vbar:.1e}, max|a| {worst_a:.1e}, |b + 0.5| {worst_b:.1e}, J spread {spread:.1e}")


def criterion_8_harmonic_rigidity() -> CriterionResult:
    start = time.perf_counter()
    chart = round_sphere(1.0)
    spec = constant_one()
    grid = PolarDiskGrid(24, 32)
    eps = 0.1
    ex = solve_extremal(chart, spec, np.array([0.3, -0.2]), eps, j_max=6, grid=grid)
    vbar_norm = max(float(np.abs(ex.vbar.cos_coeffs).max()), float(np.abs(ex.vbar.sin_coeffs).max()))
    a_norm = float(np.linalg.norm(ex.a))
    sigma = 1.0 + ex.shape.v0
    rg = RadialGrid(64)
    psi = solve_harmonic_radial(
        lambda z: sigma**2 * np.ones_like(np.asarray(z, dtype=float)),
        lambda z: np.zeros_like(np.asarray(z, dtype=float)),
        sphere_density(eps * sigma),
        2,
        grid=rg,
    )
    psi_grid = rg.interpolate(psi, grid.r)
    field_err = float(np.abs(ex.dirichlet.u - psi_grid[:, None]).max())
    ok = vbar_norm <= 1e-6 and a_norm <= 1e-6 and field_err <= 1e-5
    return _result(8, "harmonic-space rigidity on the round sphere", start, ok,
                   f"|vbar| {vbar_norm:.1e}, |a| {a_norm:.1e}, field vs radial oracle {field_err:.1e}")


def criterion_9_symmetry_critical_points() -> CriterionResult:
    start = time.perf_counter()
    chart = flat_torus()
    spec = periodic_forcing(0.25)
    grid = PolarDiskGrid(16, 32)
    lg = scan(chart, spec, 0.05, 16, 4, j_max=8, grid=grid, refine=True)
    a2_max = float(np.nanmax(np.abs(lg.a[..., 1])))
    targets = np.array([np.pi / 2.0, 3.0 * np.pi / 2.0])
    found = {0: [], 1: []}
    worst_neumann = 0.0
    for cp in lg.critical_points:
        d = np.abs(cp.point[0] - targets)
        k = int(np.argmin(d))
        found[k].append(float(d[k]))
        sol = cp.solution
        trace_dev = float(np.abs(sol.trace.values - sol.b).max())
        worst_neumann = max(worst_neumann, trace_dev)
    c1 = abs(lg.critical_points[0].solution.spectrum.profile.c1) if lg.critical_points else 0.5
    loc_ok = all(found[k] and min(found[k]) <= 1e-4 for k in (0, 1))
    neumann_ok = worst_neumann <= 1e-7 * c1
    ok = loc_ok and a2_max <= 1e-8 and neumann_ok and int(lg.converged.sum()) == 64
    return _result(9, "symmetry-located critical points", start, ok,
                   f"zero offsets {[f'{min(v):.1e}' if v else 'none' for v in found.values()]}, "
                   f"max|a_2| {a2_max:.1e}, Neumann deviation {worst_neumann:.1e} (tol {1e-7 * c1:.1e})")


def _bessel_j0_first_zero_sq() -> float:
    """Bisection on the radial eigenproblem: shoot u'' + u'/r + lam u = 0 from
    the regular series and bisect lam on the sign of u(1)."""

    def endpoint(lam: float) -> float:
        r0 = 1e-3
        u = 1.0 - lam * r0**2 / 4.0 + lam**2 * r0**4 / 64.0
        du = -lam * r0 / 2.0 + lam**2 * r0**3 / 16.0
        n_steps = 4000
        h = (1.0 - r0) / n_steps
        r = r0
        for _ in range(n_steps):
            def f(rr, uu, vv):
                return vv, -vv / rr - lam * uu
            k1u, k1v = f(r, u, du)
            k2u, k2v = f(r + h / 2, u + h / 2 * k1u, du + h / 2 * k1v)
            k3u, k3v = f(r + h / 2, u + h / 2 * k2u, du + h / 2 * k2v)
            k4u, k4v = f(r + h, u + h * k3u, du + h * k3v)
            u += h / 6 * (k1u + 2 * k2u + 2 * k3u + k4u)
            du += h / 6 * (k1v + 2 * k2v + 2 * k3v + k4v)
            r += h
        return u

    lo, hi = 5.0, 6.5
    flo = endpoint(lo)
    for _ in range(60):
        mid = 0.5 * (lo + hi)
        fm = endpoint(mid)
        if (flo < 0) == (fm < 0):
            lo, flo = mid, fm
        else:
            hi = mid
    return 0.5 * (lo + hi)


def criterion_10_branch_signs() -> CriterionResult:
    start = time.perf_counter()
    p = np.array([0.0, 0.0])
    br_minus = continue_branch(linear_plus_quadratic(1.0, -1.0), p, 2, s_max=0.06, steps=3)
    br_plus = continue_branch(linear_plus_quadratic(1.0, +1.0), p, 2, s_max=0.06, steps=3)
    signs_ok = br_minus.direction_sign == 1 and br_plus.direction_sign == -1
    rel = abs(-br_minus.lambda_slope() * 1.0 - br_minus.mu_slope()) / abs(br_minus.mu_slope())
    oracle = _bessel_j0_first_zero_sq()
    lam_err = abs(br_minus.lambda0 - oracle)
    ok = signs_ok and rel <= 1e-2 and lam_err <= 1e-6
    return _result(10, "bifurcation-branch signs and slope relation", start, ok,
                   f"signs ({br_minus.direction_sign:+d}, {br_plus.direction_sign:+d}), "
                   f"slope relation rel err {rel:.2e}, |lambda0 - oracle| {lam_err:.2e}")


def criterion_11_literal_tail() -> CriterionResult:
    start = time.perf_counter()
    prof = solve_radial_profile(constant_one(), np.array([0.0, 0.0]), 2, 1.0)
    spec = verify_assumption_a(prof, j_max=6)
    vals = {}
    ok = True
    for j in range(2, 7):
        v = abs(literal_limit_value(prof, j, r_stop=0.02))
        vals[j] = v
        ok = ok and v >= 1.0 and abs(spec.alphas[j]) > 1e-8
    detail = ", ".join(f"|a_{j}(0.02)| = {v:.1e}" for j, v in vals.items())
    return _result(11, "literal backward-integrated nondegeneracy", start, ok, detail)


CRITERIA = [
    criterion_1_closed_form_profile,
    criterion_2_closed_form_spectrum,
    criterion_3_alpha1_universality,
    criterion_4_linearization_identity,
    criterion_5_volume_neutrality,
    criterion_6_shape_derivative,
    criterion_7_flat_torus_exactness,
    criterion_8_harmonic_rigidity,
    criterion_9_symmetry_critical_points,
    criterion_10_branch_signs,
    criterion_11_literal_tail,
]


def run_all(numbers: Optional[Iterable[int]] = None, printer: Optional[Callable[[str], None]] = None):
    results = []
    wanted = set(numbers) if numbers is not None else None
    for idx, fn in enumerate(CRITERIA, start=1):
        if wanted is not None and idx not in wanted:
            continue
        res = fn()
        results.append(res)
        if printer is not None:
            status = "PASS" if res.passed else "FAIL"
            printer(f"criterion {res.number:2d} [{status}] {res.name} ({res.seconds:.1f} s): {res.detail}")
    return results
