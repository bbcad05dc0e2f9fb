"""Radial solves on the unit ball: frozen-point profiles, the bifurcation
branch from the first Dirichlet eigenvalue, and density-weighted solves for
rotationally symmetric model spaces.

All solves are Chebyshev collocation on [0, 1] with boundary conditions
phi(1) = 0 and phi'(0) = 0, Newton-iterated to residual <= 1e-10.  The
singular (n-1)/r coefficient is evaluated by its L'Hopital limit at the
center node, which folds an (n-1) phi''(0) contribution into the operator.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .errors import NoConvergenceError, PositivityViolationError, PreconditionError
from .grids import RadialGrid
from .nonlinearity import NonlinearitySpec

__all__ = [
    "RadialProfile",
    "solve_radial_profile",
    "first_dirichlet_eigenvalue",
    "smallest_radial_eigenvalue",
    "BranchSample",
    "BifurcationBranch",
    "continue_branch",
    "solve_harmonic_radial",
    "sphere_density",
    "unit_sphere_area",
]


def unit_sphere_area(n_dim: int) -> float:
    """Surface area of S^{n-1} in R^n."""
    return 2.0 * math.pi ** (n_dim / 2.0) / math.gamma(n_dim / 2.0)


@dataclass(frozen=True)
class RadialProfile:
    """Positive radial solution of the frozen-point Dirichlet problem
    phi'' + (n-1)/r phi' + lambda_bar f(p, phi) = 0, phi(1) = 0."""

    dimension: int
    lambda_bar: float
    point: np.ndarray
    grid: RadialGrid
    phi: np.ndarray
    c1: float  # phi'(1), negative by the Hopf boundary lemma
    c2: float  # phi''(1)
    potential: np.ndarray  # f_z(p, phi(r)) on the nodes
    residual: float

    def __post_init__(self):
        for arr in (self.point, self.phi, self.potential):
            arr.flags.writeable = False

    def phi_at(self, r: np.ndarray) -> np.ndarray:
        return self.grid.interpolate(self.phi, r)

    def potential_at(self, r: np.ndarray) -> np.ndarray:
        return self.grid.interpolate(self.potential, r)

    def dphi_at(self, r: np.ndarray) -> np.ndarray:
        return self.grid.interpolate(self.grid.D @ self.phi, r)

    def validate(self) -> None:
        if abs(self.phi[0]) > 0.0:
            raise ValueError("phi(1) must be pinned to zero")
        if np.any(self.phi[1:] <= 0.0):
            raise PositivityViolationError("phi must be positive at interior nodes")
        if self.c1 >= 0.0:
            raise PositivityViolationError("c1 = phi'(1) must be negative")


def _newton_bvp(
    grid: RadialGrid,
    operator: np.ndarray,
    rhs_fun: Callable[[np.ndarray], np.ndarray],
    rhs_jac: Callable[[np.ndarray], np.ndarray],
    phi0: np.ndarray,
    tol: float,
    max_iter: int,
):
    """Newton iteration for  operator @ phi + rhs(phi) = 0  at interior nodes
    with phi(1) = 0 and phi'(0) = 0.  Returns (phi, residual_norm)."""
    n = grid.n
    interior = slice(1, n)
    phi = phi0.copy()
    history = []
    for _ in range(max_iter):
        res_pde = operator @ phi + rhs_fun(phi)
        sys_res = np.concatenate(([phi[0]], res_pde[interior], [grid.D[n] @ phi]))
        norm = float(np.abs(sys_res).max())
        history.append(norm)
        if norm <= tol:
            return phi, float(np.abs(res_pde[interior]).max())
        J = operator + np.diag(rhs_jac(phi))
        sys = np.empty((n + 1, n + 1))
        sys[0] = 0.0
        sys[0, 0] = 1.0
        sys[1:n] = J[interior]
        sys[n] = grid.D[n]
        phi = phi - np.linalg.solve(sys, sys_res)
        phi[0] = 0.0  # keep the boundary node pinned exactly
    raise NoConvergenceError(
        f"radial Newton stalled at residual {history[-1]:.3e} after {max_iter} iterations",
        residual_history=history,
    )


def solve_radial_profile(
    spec: NonlinearitySpec,
    p: np.ndarray,
    n_dim: int,
    lambda_bar: float,
    init_guess: Optional[np.ndarray] = None,
    grid: Optional[RadialGrid] = None,
    tol: float = 1e-10,
    max_iter: int = 50,
) -> RadialProfile:
    """Solve the frozen-point radial Dirichlet problem by collocation Newton.

    The default initial guess is the explicit solution for z-independent f,
    lambda_bar f(p,0) (1 - r^2) / (2 n); bifurcation-class nonlinearities
    need a caller-provided guess to avoid the trivial branch.
    """
    if lambda_bar <= 0.0:
        raise PreconditionError("lambda_bar must be positive")
    p = np.asarray(p, dtype=float)
    grid = grid or RadialGrid(64)
    L = grid.radial_laplacian(n_dim)
    if init_guess is None:
        f0 = float(np.asarray(spec.f(p, 0.0)))
        init_guess = lambda_bar * f0 * (1.0 - grid.r**2) / (2.0 * n_dim)
    else:
        init_guess = np.asarray(init_guess, dtype=float)
        if abs(init_guess[0]) > 1e-14:
            raise PreconditionError("initial guess must satisfy phi(1) = 0")
    phi, res = _newton_bvp(
        grid,
        L,
        lambda phi: lambda_bar * np.asarray(spec.f(p, phi)),
        lambda phi: lambda_bar * np.asarray(spec.f_z(p, phi)),
        init_guess,
        tol,
        max_iter,
    )
    if np.any(phi[1:] <= 0.0):
        raise PositivityViolationError(
            "converged profile changes sign; outside the admissible regime"
        )
    profile = RadialProfile(
        dimension=n_dim,
        lambda_bar=float(lambda_bar),
        point=p.copy(),
        grid=grid,
        phi=phi,
        c1=float(grid.D[0] @ phi),
        c2=float(grid.D2[0] @ phi),
        potential=np.asarray(spec.f_z(p, phi)),
        residual=res,
    )
    profile.validate()
    return profile


def _reduced_operator(grid: RadialGrid, A: np.ndarray):
    """Eliminate phi(1) = 0 and phi'(0) = 0 from a radial operator.

    Returns the matrix of the operator acting on values at nodes 1..n-1,
    plus the reconstruction row for the center value phi(0)."""
    n = grid.n
    d = grid.D[n]
    center_row = -d[1:n] / d[n]  # phi_n = center_row @ phi_interior
    A_int = A[1:n, 1:n] + np.outer(A[1:n, n], center_row)
    return A_int, center_row


def _inverse_power(A: np.ndarray, shift: float, v0: np.ndarray, tol: float = 5e-13, max_iter: int = 300):
    """Eigenvalue of A nearest ``shift`` by inverse-power iteration.

    The eigenvalue is estimated from the inverse application itself,
    lambda = shift + (w.v)/(w.w) with w = (A - shift)^{-1} v, which stays
    stable on the strongly non-normal collocation matrices.
    """
    Minv = np.linalg.inv(A - shift * np.eye(len(A)))
    v = v0 / np.linalg.norm(v0)
    lam_prev = np.inf
    for _ in range(max_iter):
        w = Minv @ v
        lam = shift + float(w @ v) / float(w @ w)
        w /= np.linalg.norm(w)
        if abs(lam - lam_prev) <= tol * max(1.0, abs(lam)):
            return lam, w
        v, lam_prev = w, lam
    if abs(lam - lam_prev) <= 1e-9 * max(1.0, abs(lam)):
        return lam, w
    raise NoConvergenceError(f"inverse-power iteration stalled near shift {shift}")


def first_dirichlet_eigenvalue(n_dim: int, grid: Optional[RadialGrid] = None):
    """First Dirichlet eigenvalue of -Laplace on the unit ball and its radial
    eigenfunction, normalized positive with unit L^2 norm.

    Computed by inverse-power iteration on the collocation operator; Bessel
    values are used only as external test oracles.
    """
    grid = grid or RadialGrid(64)
    A = -grid.radial_laplacian(n_dim)
    A_int, center_row = _reduced_operator(grid, A)
    v0 = 1.0 - grid.r[1 : grid.n] ** 2
    lam, v = _inverse_power(A_int, 0.0, v0)
    phi = np.zeros(grid.n + 1)
    phi[1 : grid.n] = v
    phi[grid.n] = center_row @ v
    norm2 = unit_sphere_area(n_dim) * grid.integrate(phi**2 * grid.r ** (n_dim - 1))
    phi /= math.sqrt(norm2)
    if phi[grid.n] < 0:
        phi = -phi
    return float(lam), phi


def smallest_radial_eigenvalue(
    grid: RadialGrid,
    n_dim: int,
    potential: np.ndarray,
    shift: Optional[float] = None,
    v0: Optional[np.ndarray] = None,
) -> float:
    """Smallest eigenvalue of -(Laplace + potential) on radial Dirichlet
    functions, by shifted inverse-power iteration."""
    A = -(grid.radial_laplacian(n_dim) + np.diag(potential))
    A_int, _ = _reduced_operator(grid, A)
    if v0 is None:
        v0 = 1.0 - grid.r[1 : grid.n] ** 2
    if shift is None:
        shift = -1.0
    lam, _ = _inverse_power(A_int, shift, v0)
    return float(lam)


@dataclass(frozen=True)
class BranchSample:
    """One accepted continuation point.

    ``mu`` is the principal eigenvalue of the linearized radial operator
    Laplace + lambda f_z(p, phi) (the simple eigenvalue that vanishes at
    s = 0); its negative is the smallest eigenvalue of the sign-flipped
    operator."""

    s: float  # projection <phi, phi_1>_{L^2}
    lambda_: float
    phi: np.ndarray
    mu: float

    def __post_init__(self):
        self.phi.flags.writeable = False


@dataclass(frozen=True)
class BifurcationBranch:
    """Solution branch (lambda_s, phi_s) bifurcating from (lambda_0, 0)."""

    dimension: int
    point: np.ndarray
    grid: RadialGrid
    lambda0: float
    phi1: np.ndarray
    samples: tuple
    direction_sign: int  # sign of d lambda / ds at s = 0+
    fold: bool
    spec: NonlinearitySpec

    def __post_init__(self):
        self.point.flags.writeable = False
        self.phi1.flags.writeable = False

    def sample_at(self, s_target: float) -> BranchSample:
        ss = np.array([smp.s for smp in self.samples])
        return self.samples[int(np.argmin(np.abs(ss - s_target)))]

    def as_profile(self, sample: BranchSample) -> RadialProfile:
        grid = self.grid
        return RadialProfile(
            dimension=self.dimension,
            lambda_bar=sample.lambda_,
            point=self.point.copy(),
            grid=grid,
            phi=sample.phi.copy(),
            c1=float(grid.D[0] @ sample.phi),
            c2=float(grid.D2[0] @ sample.phi),
            potential=np.asarray(self.spec.f_z(self.point, sample.phi)),
            residual=0.0,
        )

    def lambda_slope(self) -> float:
        """Central estimate of d lambda / ds at s = 0."""
        pos = min((s for s in self.samples if s.s > 1e-12), key=lambda s: s.s)
        neg = max((s for s in self.samples if s.s < -1e-12), key=lambda s: s.s)
        return (pos.lambda_ - neg.lambda_) / (pos.s - neg.s)

    def mu_slope(self) -> float:
        pos = min((s for s in self.samples if s.s > 1e-12), key=lambda s: s.s)
        neg = max((s for s in self.samples if s.s < -1e-12), key=lambda s: s.s)
        return (pos.mu - neg.mu) / (pos.s - neg.s)


def continue_branch(
    spec: NonlinearitySpec,
    p: np.ndarray,
    n_dim: int,
    s_max: float,
    ds: float = 0.02,
    max_steps: Optional[int] = None,
    grid: Optional[RadialGrid] = None,
    tol: float = 1e-11,
    two_sided: bool = True,
) -> BifurcationBranch:
    """Pseudo-arclength continuation of the nontrivial branch from
    (lambda_1(B_1)/c, 0), with arclength measured in the
    (lambda, L^2 norm) plane (step ``ds``) and s recovered as
    <phi_s, phi_1>; the sweep stops once |s| reaches ``s_max``.

    Each accepted sample carries the principal eigenvalue mu of the
    linearized radial operator, computed by inverse-power iteration.
    """
    if spec.class_tag != "bifurcation":
        raise PreconditionError("branch continuation requires a bifurcation-class nonlinearity")
    p = np.asarray(p, dtype=float)
    grid = grid or RadialGrid(64)
    n = grid.n
    c = float(np.asarray(spec.f_z(p, 0.0)))
    lam1, phi1 = first_dirichlet_eigenvalue(n_dim, grid)
    lam0 = lam1 / c
    L = grid.radial_laplacian(n_dim)
    w_l2 = unit_sphere_area(n_dim) * grid.weights * grid.r ** (n_dim - 1)

    def l2_norm(phi):
        return math.sqrt(max(w_l2 @ phi**2, 0.0))

    def project_s(phi):
        return float(w_l2 @ (phi * phi1))

    if max_steps is None:
        max_steps = max(10, 12 * int(math.ceil(s_max / ds)))
    interior = slice(1, n)
    samples = [BranchSample(0.0, lam0, np.zeros(n + 1), 0.0)]
    fold = False
    directions = (1, -1) if two_sided else (1,)
    for direction in directions:
        lam_k, phi_k = lam0, np.zeros(n + 1)
        m_prev, lam_prev = 0.0, lam0
        tangent = np.array([0.0, 1.0])  # (t_lambda, t_norm)
        mu_shift = -1.0
        for step in range(max_steps):
            phi_pred = phi_k + direction * ds * phi1 if step == 0 else phi_k + (phi_k - phi_prev_vec) * (ds / ds_prev)
            lam_pred = lam_k if step == 0 else lam_k + (lam_k - lam_prev) * (ds / ds_prev)
            m_pred = l2_norm(phi_pred)
            lam, phi = lam_pred, phi_pred.copy()
            ok = False
            for _ in range(60):
                fval = np.asarray(spec.f(p, phi))
                res_pde = L @ phi + lam * fval
                m_phi = l2_norm(phi)
                res_arc = tangent[0] * (lam - lam_pred) + tangent[1] * (m_phi - m_pred)
                sys_res = np.concatenate(([phi[0]], res_pde[interior], [grid.D[n] @ phi], [res_arc]))
                if np.abs(sys_res).max() <= tol:
                    ok = True
                    break
                J = L + lam * np.diag(np.asarray(spec.f_z(p, phi)))
                sys = np.zeros((n + 2, n + 2))
                sys[0, 0] = 1.0
                sys[1:n, : n + 1] = J[interior]
                sys[1:n, n + 1] = fval[interior]
                sys[n, : n + 1] = grid.D[n]
                dm = (w_l2 * phi) / m_phi if m_phi > 0 else w_l2 * 0.0
                sys[n + 1, : n + 1] = tangent[1] * dm
                sys[n + 1, n + 1] = tangent[0]
                delta = np.linalg.solve(sys, sys_res)
                phi = phi - delta[: n + 1]
                lam = float(lam - delta[n + 1])
            if not ok:
                fold = True
                break
            s_val = project_s(phi)
            if abs(s_val) <= abs(project_s(phi_k)) and step > 0:
                fold = True
                break
            mu = -smallest_radial_eigenvalue(
                grid, n_dim, lam * np.asarray(spec.f_z(p, phi)), shift=mu_shift
            )
            mu_shift = -mu - 1.0
            samples.append(BranchSample(s_val, lam, phi.copy(), mu))
            phi_prev_vec, lam_prev = phi_k, lam_k
            ds_prev = math.hypot(lam - lam_k, l2_norm(phi) - l2_norm(phi_k))
            dlam, dm_ = lam - lam_k, l2_norm(phi) - l2_norm(phi_k)
            norm_t = math.hypot(dlam, dm_)
            tangent = np.array([dlam / norm_t, dm_ / norm_t])
            phi_k, lam_k = phi, lam
            if abs(s_val) >= s_max:
                break
    samples.sort(key=lambda smp: smp.s)
    pos = [smp for smp in samples if smp.s > 1e-12]
    sign = int(np.sign(pos[0].lambda_ - lam0)) if pos else 0
    return BifurcationBranch(
        dimension=n_dim,
        point=p.copy(),
        grid=grid,
        lambda0=lam0,
        phi1=phi1,
        samples=tuple(samples),
        direction_sign=sign,
        fold=fold,
        spec=spec,
    )


def sphere_density(epsilon: float, radius: float = 1.0) -> Callable[[np.ndarray], np.ndarray]:
    """Volume density theta(r) = sin(a r)/(a r), a = epsilon/radius, of the
    round sphere in rescaled normal coordinates; theta(0) = 1."""
    a = epsilon / radius

    def theta(r: np.ndarray) -> np.ndarray:
        u = a * np.asarray(r, dtype=float)
        small = np.abs(u) < 1e-8
        safe = np.where(small, 1.0, u)
        return np.where(small, 1.0 - u**2 / 6.0, np.sin(safe) / safe)

    return theta


def solve_harmonic_radial(
    G: Callable[[np.ndarray], np.ndarray],
    G_z: Callable[[np.ndarray], np.ndarray],
    density: Callable[[np.ndarray], np.ndarray],
    n_dim: int,
    grid: Optional[RadialGrid] = None,
    init_guess: Optional[np.ndarray] = None,
    tol: float = 1e-10,
    max_iter: int = 50,
) -> np.ndarray:
    """Density-weighted radial Dirichlet solve
    psi'' + ((n-1)/r + theta'/theta) psi' + G(psi) = 0, psi(1) = 0, psi'(0) = 0.

    Serves as the 1D oracle for full disk solves on rotationally symmetric
    model metrics.
    """
    grid = grid or RadialGrid(64)
    theta_vals = np.asarray(density(grid.r), dtype=float)
    if np.any(theta_vals[:-1] <= 0.0) or abs(theta_vals[-1] - 1.0) > 1e-10:
        raise PreconditionError("density must be positive with theta(0) = 1")
    dtheta = grid.D @ theta_vals
    L = grid.radial_laplacian(n_dim)
    ratio = np.zeros_like(theta_vals)
    ratio[:-1] = dtheta[:-1] / theta_vals[:-1]
    L = L + np.diag(ratio) @ grid.D  # center row contribution vanishes: theta'(0) psi'(0) = 0
    if init_guess is None:
        init_guess = float(np.asarray(G(0.0))) * (1.0 - grid.r**2) / (2.0 * n_dim)
    psi, _ = _newton_bvp(
        grid,
        L,
        lambda psi: np.asarray(G(psi)),
        lambda psi: np.asarray(G_z(psi)),
        np.asarray(init_guess, dtype=float),
        tol,
        max_iter,
    )
    return psi
