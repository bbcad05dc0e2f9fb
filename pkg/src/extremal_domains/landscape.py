"""Energy landscape over the manifold and critical-point search.

The energy of a solution on the rescaled domain,

    J = int ( 1/2 |grad u|^2_ghat - lambda_bar F(., u) ) dV_ghat,

is a function of the center point p once the shape solve has been run; its
critical points are exactly the zeros of the defect vector field a, and at
those points the Neumann trace is constant: the overdetermined problem is
solved.  The scan sweeps a chart grid in serpentine order so every solve
warm-starts from a converged neighbor, then refines candidate zeros of a by
a small damped Newton with finite-difference Jacobian; symmetric problems
have non-isolated critical manifolds, which surface as flagged degenerate
directions rather than errors.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional, Union

import numpy as np

from .errors import NoConvergenceError, PositivityViolationError, PreconditionError
from .geometry import BoundaryShape, ManifoldChart, NormalMetric
from .grids import AngularFourier, PolarDiskGrid, fourier_diff_matrix
from .dirichlet_solver import DirichletSolution, solve_dirichlet_fixed_shape
from .extremal_solver import ExtremalSolution, solve_extremal
from .nonlinearity import NonlinearitySpec
from .radial_profile import solve_radial_profile
from .mode_analysis import verify_assumption_a

__all__ = [
    "energy",
    "ShapeDeformation",
    "shape_derivative_check",
    "energy_gradient_prediction",
    "CriticalPoint",
    "LandscapeGrid",
    "scan",
    "refine_critical_point",
]


def energy(sol: Union[ExtremalSolution, DirichletSolution]) -> float:
    """Dirichlet energy minus nonlinearity potential, in rescaled-metric units."""
    if isinstance(sol, ExtremalSolution):
        sol = sol.dirichlet
    pm = sol.metric
    grid = sol.grid
    u = sol.u
    ur, ut = grid.dr(u), grid.dtheta(u)
    grad_sq = pm.inv_rr * ur**2 + 2.0 * pm.inv_rtheta * ur * ut + pm.inv_thetatheta * ut**2
    Fhat = sol.lambda_bar * np.asarray(sol.spec.F(sol.chart_points, u))
    return grid.integrate_area((0.5 * grad_sq - Fhat) * pm.sqrt_det_cart)


@dataclass(frozen=True)
class ShapeDeformation:
    """Boundary deformation given by its normal-speed Fourier coefficients."""

    normal_speed: AngularFourier

    @property
    def volume_preserving(self) -> bool:
        return self.normal_speed.mean == 0.0


def shape_derivative_check(
    nm: NormalMetric,
    spec: NonlinearitySpec,
    base_shape: BoundaryShape,
    deformation: ShapeDeformation,
    h: float = 1e-4,
    grid: Optional[PolarDiskGrid] = None,
    lambda_bar: float = 1.0,
):
    """Hadamard shape-derivative identity check on flat blow-up limits.

    Analytic value: J'(0) = -1/2 * int trace^2 <Xi, nu> dsigma over the moving
    boundary; numeric value: central difference of the energy across re-solved
    Dirichlet problems at the perturbed shapes (no volume constraint, so the
    full shape including its mean moves freely).  Returns (analytic, numeric).
    """
    if nm.epsilon != 0.0:
        raise PreconditionError("the deformation check runs on the epsilon = 0 flat limit")
    grid = grid or PolarDiskGrid(24, 32)
    from .extremal_solver import neumann_residual

    base = solve_dirichlet_fixed_shape(nm, spec, base_shape, grid=grid, lambda_bar=lambda_bar)
    trace = neumann_residual(base)
    n_quad = grid.n_theta
    theta = grid.theta
    w_vals = deformation.normal_speed.evaluate(theta)
    rho = base_shape.total(theta)
    # flat geometry: <xdot, nu> dsigma = w (1 + v) dtheta along the moving boundary
    analytic = -0.5 * (2.0 * np.pi / n_quad) * float(np.sum(trace.values**2 * w_vals * rho))

    w_mean = deformation.normal_speed.mean
    wbar_cos = deformation.normal_speed.cos_coeffs.copy()
    wbar_cos[0] = 0.0
    wbar = AngularFourier(wbar_cos, deformation.normal_speed.sin_coeffs)
    j_top = max(base_shape.vbar.max_mode, wbar.max_mode)

    def padded(f: AngularFourier) -> AngularFourier:
        cos = np.zeros(j_top + 1)
        sin = np.zeros(j_top + 1)
        cos[: f.max_mode + 1] = f.cos_coeffs
        sin[: f.max_mode + 1] = f.sin_coeffs
        return AngularFourier(cos, sin)

    v_base, w_pad = padded(base_shape.vbar), padded(wbar)
    energies = []
    for sign in (+1.0, -1.0):
        shape = BoundaryShape(
            base_shape.v0 + sign * h * w_mean,
            AngularFourier(
                v_base.cos_coeffs + sign * h * w_pad.cos_coeffs,
                v_base.sin_coeffs + sign * h * w_pad.sin_coeffs,
            ),
        )
        sol = solve_dirichlet_fixed_shape(
            nm, spec, shape, grid=grid, lambda_bar=lambda_bar, init=base.u
        )
        energies.append(energy(sol))
    numeric = (energies[0] - energies[1]) / (2.0 * h)
    return analytic, numeric


def energy_gradient_prediction(ex: ExtremalSolution, w: np.ndarray) -> float:
    """Boundary-formula prediction of the directional derivative of the
    landscape energy at center p along the chart direction w (flat charts).

    Uses the affine trace b - <a, z> and the domain-motion normal speed of a
    rigidly translated boundary; the constant b^2 part integrates to zero for
    the volume-preserving motion and is dropped explicitly to avoid
    cancellation noise.
    """
    nm = ex.dirichlet.metric.normal_metric
    if nm.chart.kind != "flat_torus":
        raise PreconditionError("the gradient prediction is implemented for flat charts")
    w = np.asarray(w, dtype=float)
    n_quad = 512
    theta = 2.0 * np.pi * np.arange(n_quad) / n_quad
    rho = ex.shape.total(theta)
    Dq = fourier_diff_matrix(n_quad)
    drho = Dq @ rho
    e = np.stack([np.cos(theta), np.sin(theta)], axis=-1)
    et = np.stack([-np.sin(theta), np.cos(theta)], axis=-1)
    az = ex.a[0] * np.cos(theta) + ex.a[1] * np.sin(theta)
    delta = az**2 - 2.0 * ex.b * az  # (b - <a,z>)^2 - b^2
    speed = rho * (e @ w) - drho * (et @ w)
    return -0.5 / ex.epsilon * (2.0 * np.pi / n_quad) * float(np.sum(delta * speed))


@dataclass(frozen=True)
class CriticalPoint:
    point: np.ndarray
    a_norm: float
    energy: float
    degenerate_directions: tuple  # unit 2-vectors of flagged null directions
    iterations: int
    solution: ExtremalSolution

    def __post_init__(self):
        self.point.flags.writeable = False


@dataclass(frozen=True)
class LandscapeGrid:
    """Sampled energy values and defect field over a chart grid."""

    epsilon: float
    points: np.ndarray  # (n1, n2, 2)
    J: np.ndarray  # (n1, n2)
    a: np.ndarray  # (n1, n2, 2)
    converged: np.ndarray  # (n1, n2) bool
    critical_points: tuple
    lambda_bar: float

    def __post_init__(self):
        for arr in (self.points, self.J, self.a, self.converged):
            arr.flags.writeable = False

    @property
    def lambda_physical(self) -> float:
        return self.lambda_bar / self.epsilon**2

    def a_norms(self) -> np.ndarray:
        return np.linalg.norm(self.a, axis=-1)


def _grid_points(chart: ManifoldChart, n1: int, n2: int, bounds=None) -> np.ndarray:
    if bounds is None:
        if chart.periods is not None:
            bounds = ((0.0, chart.periods[0]), (0.0, chart.periods[1]))
            x1 = np.linspace(*bounds[0], n1, endpoint=False)
            x2 = np.linspace(*bounds[1], n2, endpoint=False)
        else:
            half = 0.4 * chart.injectivity_radius_lower_bound
            x1 = np.linspace(-half, half, n1)
            x2 = np.linspace(-half, half, n2)
    else:
        periodic = chart.periods is not None
        x1 = np.linspace(bounds[0][0], bounds[0][1], n1, endpoint=not periodic)
        x2 = np.linspace(bounds[1][0], bounds[1][1], n2, endpoint=not periodic)
    return np.stack(np.meshgrid(x1, x2, indexing="ij"), axis=-1)


def _local_minima_candidates(a_norm: np.ndarray, converged: np.ndarray, periodic: bool):
    n1, n2 = a_norm.shape
    out = []
    for i in range(n1):
        for j in range(n2):
            if not converged[i, j]:
                continue
            val = a_norm[i, j]
            best = True
            for di in (-1, 0, 1):
                for dj in (-1, 0, 1):
                    if di == 0 and dj == 0:
                        continue
                    ii, jj = i + di, j + dj
                    if periodic:
                        ii, jj = ii % n1, jj % n2
                    elif not (0 <= ii < n1 and 0 <= jj < n2):
                        continue
                    if converged[ii, jj] and a_norm[ii, jj] < val:
                        best = False
            if best:
                out.append((i, j))
    return out


def scan(
    chart: ManifoldChart,
    spec: NonlinearitySpec,
    epsilon: float,
    n1: int,
    n2: int,
    bounds=None,
    lambda_bar: float = 1.0,
    j_max: int = 8,
    grid: Optional[PolarDiskGrid] = None,
    refine: bool = True,
    drift: Optional[Callable] = None,
    points: Optional[np.ndarray] = None,
    critical_tol_rel: float = 1e-8,
) -> LandscapeGrid:
    """Run the shape solve over a chart grid, warm-starting each point from
    its serpentine predecessor, and record the energy and the defect field.

    Per-point failures are recorded in the convergence flags and the scan
    continues.  Candidate critical points (local minima of |a|) are refined
    by a Newton on p -> a(p) when ``refine`` is set.
    """
    grid = grid or PolarDiskGrid(20, 32)
    pts = points if points is not None else _grid_points(chart, n1, n2, bounds)
    n1, n2 = pts.shape[:2]
    J = np.full((n1, n2), np.nan)
    avec = np.full((n1, n2, 2), np.nan)
    converged = np.zeros((n1, n2), dtype=bool)
    shared_profile = None
    shared_spectrum = None
    if spec.position_independent:
        shared_profile = solve_radial_profile(spec, pts[0, 0], 2, lambda_bar)
        shared_spectrum = verify_assumption_a(shared_profile, j_max=max(j_max, 2))
    warm = None
    for i in range(n1):
        cols = range(n2) if i % 2 == 0 else range(n2 - 1, -1, -1)
        for j in cols:
            try:
                ex = solve_extremal(
                    chart,
                    spec,
                    pts[i, j],
                    epsilon,
                    drift=drift,
                    lambda_bar=lambda_bar,
                    j_max=j_max,
                    grid=grid,
                    profile=shared_profile,
                    spectrum=shared_spectrum,
                    warm=warm,
                )
            except (NoConvergenceError, PositivityViolationError, PreconditionError):
                warm = None
                continue
            warm = ex
            J[i, j] = energy(ex)
            avec[i, j] = ex.a
            converged[i, j] = True
    criticals = []
    if refine:
        cands = _local_minima_candidates(
            np.linalg.norm(avec, axis=-1), converged, chart.periods is not None
        )
        spacing = np.inf
        if n1 > 1:
            spacing = min(spacing, float(np.linalg.norm(pts[1, 0] - pts[0, 0])))
        if n2 > 1:
            spacing = min(spacing, float(np.linalg.norm(pts[0, 1] - pts[0, 0])))
        for (i, j) in cands:
            try:
                cp = refine_critical_point(
                    chart, spec, epsilon, pts[i, j],
                    lambda_bar=lambda_bar, j_max=j_max, grid=grid,
                    critical_tol_rel=critical_tol_rel,
                    profile=shared_profile, spectrum=shared_spectrum,
                )
            except (NoConvergenceError, PositivityViolationError):
                continue
            if all(
                np.linalg.norm(cp.point - other.point) > 0.5 * spacing for other in criticals
            ):
                criticals.append(cp)
    return LandscapeGrid(
        epsilon=float(epsilon),
        points=pts.copy(),
        J=J,
        a=avec,
        converged=converged,
        critical_points=tuple(criticals),
        lambda_bar=float(lambda_bar),
    )


def refine_critical_point(
    chart: ManifoldChart,
    spec: NonlinearitySpec,
    epsilon: float,
    p0: np.ndarray,
    lambda_bar: float = 1.0,
    j_max: int = 8,
    grid: Optional[PolarDiskGrid] = None,
    critical_tol_rel: float = 1e-8,
    max_iter: int = 20,
    profile=None,
    spectrum=None,
) -> CriticalPoint:
    """Newton iteration on p -> a_p with a finite-difference 2x2 Jacobian
    (step epsilon/100); singular directions fall back to a pseudo-inverse
    step and are flagged as degenerate rather than treated as errors."""
    grid = grid or PolarDiskGrid(20, 32)
    p = np.asarray(p0, dtype=float).copy()
    fd = epsilon / 100.0

    def solve_at(q, warm=None):
        return solve_extremal(
            chart, spec, q, epsilon, lambda_bar=lambda_bar, j_max=j_max, grid=grid,
            profile=profile if spec.position_independent else None,
            spectrum=spectrum if spec.position_independent else None,
            warm=warm,
        )

    ex = solve_at(p)
    tol = critical_tol_rel * abs(ex.spectrum.profile.c1)

    def jacobian(ex_here, p_here):
        Jm = np.empty((2, 2))
        for col in range(2):
            dq = np.zeros(2)
            dq[col] = fd
            ex_p = solve_at(p_here + dq, warm=ex_here)
            Jm[:, col] = (ex_p.a - ex_here.a) / fd
        U, S, Vt = np.linalg.svd(Jm)
        # singular values below the finite-difference noise floor of the
        # defect solve cannot be distinguished from a flat direction
        floor = max(1e-6 * S[0], 10.0 * tol / fd)
        good = S > floor
        flags = tuple(Vt[k] for k in range(2) if not good[k])
        return U, S, Vt, good, flags

    degenerate = ()
    for it in range(max_iter):
        if np.linalg.norm(ex.a) <= tol:
            _, _, _, _, degenerate = jacobian(ex, p)
            return CriticalPoint(
                point=p.copy(),
                a_norm=float(np.linalg.norm(ex.a)),
                energy=energy(ex),
                degenerate_directions=degenerate,
                iterations=it,
                solution=ex,
            )
        U, S, Vt, good, degenerate = jacobian(ex, p)
        if not good.any():
            return CriticalPoint(
                point=p.copy(),
                a_norm=float(np.linalg.norm(ex.a)),
                energy=energy(ex),
                degenerate_directions=degenerate,
                iterations=it,
                solution=ex,
            )
        Sinv = np.where(good, 1.0 / np.where(good, S, 1.0), 0.0)
        step = -(Vt.T * Sinv) @ (U.T @ ex.a)
        scale_cap = 10.0 * epsilon
        if np.linalg.norm(step) > scale_cap:
            step *= scale_cap / np.linalg.norm(step)
        p = p + step
        ex = solve_at(p, warm=ex)
    if np.linalg.norm(ex.a) <= tol:
        return CriticalPoint(
            point=p.copy(), a_norm=float(np.linalg.norm(ex.a)), energy=energy(ex),
            degenerate_directions=degenerate, iterations=max_iter, solution=ex,
        )
    raise NoConvergenceError(
        f"critical-point refinement stalled with |a| = {np.linalg.norm(ex.a):.3e}"
    )
