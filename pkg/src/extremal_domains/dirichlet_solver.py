"""Volume-normalized semilinear Dirichlet solves on the pulled-back disk metric.

The discrete Laplace-Beltrami operator is assembled in divergence form,

    L u = det^{-1/2} [ d_r ( det^{1/2} (g^rr u_r + g^rt u_t) )
                     + d_t ( det^{1/2} (g^rt u_r + g^tt u_t) ) ],

on the Fourier x Chebyshev disk grid, so it is symmetric with respect to the
metric inner product up to discretization error.  The coupled unknowns
(v0, u) split triangularly: the volume constraint determines the dilation v0
alone (through the metric), so v0 is pinned first by a scalar Newton with the
analytic volume derivative, and the field Newton then runs with the exact
Jacobian L + lambda_bar f_z.  No finite-difference Jacobians anywhere.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional, Union

import numpy as np

from .errors import NoConvergenceError, PositivityViolationError, PreconditionError
from .geometry import (
    BoundaryShape,
    NormalMetric,
    PulledBackMetric,
    _rk4_jacobi,
    metric_shape_derivative,
    pullback_shape_metric,
    volume,
    volume_shape_derivative,
)
from .grids import AngularFourier, PolarDiskGrid
from .nonlinearity import NonlinearitySpec
from .radial_profile import RadialProfile, solve_radial_profile

__all__ = [
    "DiskField",
    "LaplaceBeltramiOperator",
    "assemble_laplace_beltrami",
    "apply_laplace_beltrami_shape_derivative",
    "DirichletSolution",
    "solve_dirichlet_volume",
    "solve_dirichlet_fixed_shape",
    "pull_back_drift",
]


@dataclass(frozen=True)
class DiskField:
    """Scalar field on the polar disk grid with pinned zero boundary trace."""

    grid: PolarDiskGrid
    values: np.ndarray

    def __post_init__(self):
        if self.values.shape != self.grid.shape:
            raise ValueError("field shape does not match the grid")
        if np.abs(self.values[0]).max() > 0.0:
            raise ValueError("boundary ring (r = 1) must be identically zero")
        self.values.flags.writeable = False

    def mode_coefficients(self) -> np.ndarray:
        return self.grid.field_mode_coeffs(self.values)

    def pole_regularity_defects(self, j_cap: int = 4) -> np.ndarray:
        """|mode-j coefficient at the innermost ring| / r0^min(j, j_cap),
        normalized by the field scale; O(1) values mean healthy decay."""
        coeffs = np.abs(self.mode_coefficients()[-1])
        r0 = self.grid.r[-1]
        j = np.arange(len(coeffs))
        scale = max(np.abs(self.values).max(), 1e-300)
        return coeffs / (scale * r0 ** np.minimum(j, j_cap))


@dataclass(frozen=True)
class LaplaceBeltramiOperator:
    """Dense collocation matrix of the metric Laplacian, boundary ring included."""

    grid: PolarDiskGrid
    metric: PulledBackMetric
    matrix: np.ndarray

    def __post_init__(self):
        self.matrix.flags.writeable = False

    def apply(self, u: np.ndarray) -> np.ndarray:
        return (self.matrix @ u.reshape(-1)).reshape(self.grid.shape)

    def weighted_inner(self, u: np.ndarray, v: np.ndarray) -> float:
        """Inner product against the metric area element."""
        return self.grid.integrate_area(u * v * self.metric.sqrt_det_cart)


def _divergence_coefficients(pm: PulledBackMetric):
    s = np.sqrt(pm.det_polar)
    c1 = pm.g_thetatheta / s  # sqrt(det) g^rr
    c2 = -pm.g_rtheta / s  # sqrt(det) g^rt
    c3 = pm.g_rr / s  # sqrt(det) g^tt
    return c1, c2, c3, 1.0 / s


def assemble_laplace_beltrami(pm: PulledBackMetric) -> LaplaceBeltramiOperator:
    """Assemble the dense Laplace-Beltrami matrix on the disk grid."""
    grid = pm.grid
    n_r, nt = grid.shape
    A, B = grid.Dpos, grid.Dneg
    Dt = grid.Dtheta
    sig = grid._shifted
    c1, c2, c3, w = _divergence_coefficients(pm)
    c2_sig = c2[:, sig]
    L4 = np.einsum("ij,jk,kl->ikjl", A, c2, Dt)
    L4 += np.einsum("ij,jk,kl->ikjl", B, c2_sig, Dt[sig, :])
    L4 += np.einsum("kl,il,ij->ikjl", Dt, c2, A)
    L4 += np.einsum("kl,il,ij->ikjl", Dt[:, sig], c2_sig, B)
    T4 = np.einsum("km,im,ml->ikl", Dt, c3, Dt)
    for i in range(n_r):
        L4[i, :, i, :] += T4[i]
    for k in range(nt):
        ks = sig[k]
        L4[:, k, :, k] += (A * c1[:, k]) @ A + (B * c1[:, ks]) @ B
        L4[:, k, :, ks] += (A * c1[:, k]) @ B + (B * c1[:, ks]) @ A
    L4 *= w[:, :, None, None]
    return LaplaceBeltramiOperator(grid=grid, metric=pm, matrix=L4.reshape(grid.size, grid.size))


def apply_laplace_beltrami_shape_derivative(
    pm: PulledBackMetric, dv0: float, dvbar: AngularFourier, u: np.ndarray
) -> np.ndarray:
    """Directional derivative of (Laplace_ghat u) in a shape direction,
    at fixed u, from the analytic metric derivative."""
    grid = pm.grid
    d = metric_shape_derivative(pm, dv0, dvbar)
    s = np.sqrt(pm.det_polar)
    ds = d.d_det / (2.0 * s)
    c1, c2, c3, w = _divergence_coefficients(pm)
    dc1 = (d.d_thetatheta - c1 * ds) / s
    dc2 = (-d.d_rtheta - c2 * ds) / s
    dc3 = (d.d_rr - c3 * ds) / s
    dw = -ds / pm.det_polar
    ur, ut = grid.dr(u), grid.dtheta(u)
    div = grid.dr(c1 * ur + c2 * ut) + grid.dtheta(c2 * ur + c3 * ut)
    ddiv = grid.dr(dc1 * ur + dc2 * ut) + grid.dtheta(dc2 * ur + dc3 * ut)
    return dw * div + w * ddiv


def pull_back_drift(
    pm: PulledBackMetric, drift: Callable[[np.ndarray], np.ndarray], n_steps: Optional[int] = None
):
    """Sample a chart vector field on the disk grid through the domain map Y.

    Returns (X_r, X_theta): polar components of eps^2 (DY)^{-1} X(Y(y)), the
    drift coefficients of the rescaled equation.  The Jacobian of Y composes
    the analytic Jacobian of the shape map beta with the differential of the
    exponential map (Jacobi integration on curved charts).
    """
    nm = pm.normal_metric
    grid = pm.grid
    eps = nm.epsilon
    if eps == 0.0:
        raise PreconditionError("drift requires epsilon > 0 (the domain map is constant at 0)")
    theta = grid.theta
    ct, st = np.cos(theta), np.sin(theta)
    er = np.stack([ct, st], axis=-1)
    et = np.stack([-st, ct], axis=-1)
    # analytic Jacobian of beta in disk Cartesian coordinates
    r = grid.r[:, None]
    from .geometry import smoothstep_cutoff, smoothstep_cutoff_derivative

    chi = smoothstep_cutoff(grid.r)[:, None]
    dchi = smoothstep_cutoff_derivative(grid.r)[:, None]
    vb = pm.shape.vbar.evaluate(theta)[None, :]
    vbp = pm.shape.vbar.derivative().evaluate(theta)[None, :]
    m = 1.0 + pm.shape.v0 + chi * vb
    Dbeta = m[..., None, None] * np.eye(2) + np.einsum(
        "ti,qtj->qtij",
        er,
        (r * dchi * vb)[..., None] * er[None] + (chi * vbp)[..., None] * et[None],
    )
    tangents = eps * pm.R[..., None] * np.einsum("ab,tb->ta", nm.frame, er)[None]
    W0 = eps * np.einsum("ab,qtbc->qtac", nm.frame, Dbeta)
    flatU = tangents.reshape(-1, 2)
    flatW = W0.reshape(-1, 2, 2)
    if nm.chart.kind == "flat_torus":
        Y = nm.center + flatU
        DY = flatW
    else:
        x = np.broadcast_to(nm.center, flatU.shape).copy()
        J = np.zeros_like(flatW)
        lengths = nm.chart.norm(x, flatU)
        steps = n_steps or max(16, int(np.ceil(64.0 * float(lengths.max()))))
        Y, _, J, _ = _rk4_jacobi(nm.chart, x, flatU.copy(), J, flatW.copy(), 1.0 / steps, steps)
        DY = J
    Xvals = np.asarray(drift(Y), dtype=float)
    Xhat = eps**2 * np.linalg.solve(DY, Xvals[..., None])[..., 0]
    Xhat = Xhat.reshape(grid.n_r, grid.n_theta, 2)
    X_r = np.einsum("qti,ti->qt", Xhat, er)
    X_t = np.einsum("qti,ti->qt", Xhat, et) / r
    return X_r, X_t


@dataclass(frozen=True)
class DirichletSolution:
    """Converged (v0, u) pair of the volume-normalized Dirichlet problem."""

    field: DiskField
    v0: float
    lambda_bar: float
    metric: PulledBackMetric
    spec: NonlinearitySpec
    residual_norm: float
    newton_iterations: int
    chart_points: np.ndarray
    drift: Optional[Callable] = None

    def __post_init__(self):
        self.chart_points.flags.writeable = False

    @property
    def grid(self) -> PolarDiskGrid:
        return self.field.grid

    @property
    def u(self) -> np.ndarray:
        return self.field.values


def _solve_v0(nm: NormalMetric, vbar: AngularFourier, grid: PolarDiskGrid, v0_start: float, tol: float):
    v0 = v0_start
    dvbar0 = AngularFourier.zero(max(1, vbar.max_mode))
    target = np.pi
    for _ in range(30):
        pm = pullback_shape_metric(nm, BoundaryShape(v0, vbar), grid)
        defect = volume(pm) - target
        if abs(defect) <= tol:
            return v0, pm
        dvol = volume_shape_derivative(pm, 1.0, dvbar0)
        v0 -= defect / dvol
    raise NoConvergenceError(f"volume constraint Newton stalled at defect {defect:.3e}")


def _field_newton(
    grid: PolarDiskGrid,
    L: LaplaceBeltramiOperator,
    spec: NonlinearitySpec,
    lambda_bar: float,
    Y: np.ndarray,
    u0: np.ndarray,
    drift_terms,
    tol: float,
    max_iter: int,
):
    n_r, nt = grid.shape
    interior = np.arange(grid.size).reshape(n_r, nt)[1:].ravel()
    Lmat = L.matrix[np.ix_(interior, interior)]
    if drift_terms is not None:
        X_r, X_t = drift_terms
        A, B, Dt = grid.Dpos, grid.Dneg, grid.Dtheta
        sig = grid._shifted
        Dr4 = np.zeros((n_r, nt, n_r, nt))
        for k in range(nt):
            Dr4[:, k, :, k] = A
            Dr4[:, k, :, sig[k]] += B
        Dt4 = np.zeros((n_r, nt, n_r, nt))
        for i in range(n_r):
            Dt4[i, :, i, :] = Dt
        drift_mat = (
            X_r.reshape(-1)[:, None] * Dr4.reshape(grid.size, grid.size)
            + X_t.reshape(-1)[:, None] * Dt4.reshape(grid.size, grid.size)
        )
        Lmat = Lmat + drift_mat[np.ix_(interior, interior)]

    def residual(u_int):
        u = np.zeros(grid.size)
        u[interior] = u_int
        z = u[interior].reshape(n_r - 1, nt)
        fhat = lambda_bar * np.asarray(spec.f(Y[1:], z))
        return Lmat @ u_int + fhat.ravel()

    u_int = u0.reshape(-1)[interior].copy()
    res = residual(u_int)
    norm = float(np.abs(res).max())
    history = [norm]
    for it in range(max_iter):
        if norm <= tol:
            u = np.zeros(grid.size)
            u[interior] = u_int
            return u.reshape(n_r, nt), norm, it
        z = u_int.reshape(n_r - 1, nt)
        fz = lambda_bar * np.asarray(spec.f_z(Y[1:], z))
        J = Lmat + np.diag(fz.ravel())
        step = np.linalg.solve(J, -res)
        scale = 1.0
        for _ in range(7):
            trial = u_int + scale * step
            res_trial = residual(trial)
            norm_trial = float(np.abs(res_trial).max())
            if norm_trial < norm or norm_trial <= tol:
                break
            scale *= 0.5
        u_int, res, norm = trial, res_trial, norm_trial
        history.append(norm)
    if norm <= tol:
        u = np.zeros(grid.size)
        u[interior] = u_int
        return u.reshape(n_r, nt), norm, max_iter
    raise NoConvergenceError(
        f"field Newton stalled at residual {norm:.3e}", residual_history=history
    )


def _default_initial_field(
    nm: NormalMetric, spec: NonlinearitySpec, lambda_bar: float, grid: PolarDiskGrid,
    profile: Optional[RadialProfile],
) -> np.ndarray:
    if profile is None:
        profile = solve_radial_profile(spec, nm.center, 2, lambda_bar)
    u0 = np.broadcast_to(profile.phi_at(grid.r)[:, None], grid.shape).copy()
    u0[0] = 0.0
    return u0


def solve_dirichlet_volume(
    nm: NormalMetric,
    spec: NonlinearitySpec,
    vbar: AngularFourier,
    drift: Optional[Callable] = None,
    init: Optional[Union[DirichletSolution, np.ndarray]] = None,
    grid: Optional[PolarDiskGrid] = None,
    lambda_bar: float = 1.0,
    profile: Optional[RadialProfile] = None,
    tol: float = 1e-10,
    vol_tol: float = 1e-12,
    max_iter: int = 40,
) -> DirichletSolution:
    """Solve the coupled system: the volume of the pulled-back metric equals
    pi and the field solves  Laplace_ghat u + <grad u, X> + lambda_bar f = 0
    with zero boundary values.

    The metric depends on v0 through the shape map; its contribution to the
    Jacobian is the analytic volume derivative.  The warm start defaults to
    the frozen radial profile.
    """
    grid = grid or PolarDiskGrid(24, nm.n_theta)
    if grid.n_theta != nm.n_theta:
        raise PreconditionError("grid and normal metric disagree on the angular resolution")
    if vbar.mean != 0.0:
        raise PreconditionError("vbar must be zero-mean; the dilation lives in v0")
    v0_start = init.v0 if isinstance(init, DirichletSolution) else 0.0
    v0, pm = _solve_v0(nm, vbar, grid, v0_start, vol_tol)
    L = assemble_laplace_beltrami(pm)
    Y = pm.chart_points()
    drift_terms = pull_back_drift(pm, drift) if drift is not None else None
    if isinstance(init, DirichletSolution):
        u0 = init.u
    elif init is not None:
        u0 = np.asarray(init, dtype=float)
    else:
        u0 = _default_initial_field(nm, spec, lambda_bar, grid, profile)
    u, res, iters = _field_newton(grid, L, spec, lambda_bar, Y, u0, drift_terms, tol, max_iter)
    if np.any(u[1:] <= 0.0):
        raise PositivityViolationError("converged field is not positive on the interior")
    return DirichletSolution(
        field=DiskField(grid, u),
        v0=float(v0),
        lambda_bar=float(lambda_bar),
        metric=pm,
        spec=spec,
        residual_norm=res,
        newton_iterations=iters,
        chart_points=Y,
        drift=drift,
    )


def solve_dirichlet_fixed_shape(
    nm: NormalMetric,
    spec: NonlinearitySpec,
    shape: BoundaryShape,
    drift: Optional[Callable] = None,
    init: Optional[np.ndarray] = None,
    grid: Optional[PolarDiskGrid] = None,
    lambda_bar: float = 1.0,
    profile: Optional[RadialProfile] = None,
    tol: float = 1e-10,
    max_iter: int = 40,
    require_positive: bool = True,
) -> DirichletSolution:
    """Dirichlet solve at a prescribed full shape (v0 fixed, no volume
    constraint); used by deformation checks that move the boundary freely."""
    grid = grid or PolarDiskGrid(24, nm.n_theta)
    pm = pullback_shape_metric(nm, shape, grid)
    L = assemble_laplace_beltrami(pm)
    Y = pm.chart_points()
    drift_terms = pull_back_drift(pm, drift) if drift is not None else None
    if init is None:
        init = _default_initial_field(nm, spec, lambda_bar, grid, profile)
    u, res, iters = _field_newton(grid, L, spec, lambda_bar, Y, init, drift_terms, tol, max_iter)
    if require_positive and np.any(u[1:] <= 0.0):
        raise PositivityViolationError("converged field is not positive on the interior")
    return DirichletSolution(
        field=DiskField(grid, u),
        v0=float(shape.v0),
        lambda_bar=float(lambda_bar),
        metric=pm,
        spec=spec,
        residual_norm=res,
        newton_iterations=iters,
        chart_points=Y,
        drift=drift,
    )
