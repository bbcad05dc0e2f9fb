"""Per-mode nondegeneracy analysis of the linearized radial operator.

For a frozen-point profile phi with potential V(r) = lambda_bar f_z(p, phi(r))
and mode constants mu_j = j (j + n - 2), two families of radial ODEs are
solved:

* homogeneous kernel scans  w'' + (n-1)/r w' + (V - mu_j/r^2) w = 0, started
  from the regular Frobenius branch w ~ r^j; a nonzero w(1) certifies that
  mode j carries no Dirichlet kernel;
* the inhomogeneous problems with right-hand side
  (n - 1 - mu_j)/r^2 phi'(r), solved for the continuous-at-zero b_j with
  b_j(1) = 0; the boundary slopes alpha_j = b_j'(1) are the eigenvalues of
  the shape-linearization operator, which acts diagonally on Fourier modes.

The kernel scan integrates the rescaled unknown y = w / r^j, which removes
the r^j growth exactly, so no log-magnitude bookkeeping is needed for large
j.  A finite scan up to j_max is completed by a coercivity tail bound: modes
with mu_j above the potential's sup norm cannot carry kernel.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import ModeDegenerateError, PreconditionError, TruncationError
from .grids import AngularFourier
from .radial_profile import RadialProfile

__all__ = [
    "ModeSpectrum",
    "mode_kernel_value",
    "mode_eigenvalue",
    "mode_eigenvalue_via_trace",
    "verify_assumption_a",
    "apply_H",
    "literal_limit_value",
]

KERNEL_THRESHOLD = 1e-6  # |w(1)| > threshold * max_r |w| declares the mode kernel-free


def _kernel_scan(profile: RadialProfile, js: np.ndarray, r0: float = 1e-4, n_steps: int = 1200):
    """Integrate the regularized kernel ODEs for all modes in ``js`` at once.

    Returns (w1, w_max): endpoint values normalized to w(r0) = r0^j, and the
    running maximum of |w| along the integration.
    """
    n_dim = profile.dimension
    lam = profile.lambda_bar
    js = np.asarray(js, dtype=float)
    h = (1.0 - r0) / n_steps
    # potential at RK4 stage radii, interpolated once
    radii = r0 + 0.5 * h * np.arange(2 * n_steps + 1)
    V = lam * profile.potential_at(radii)
    V0 = lam * profile.potential_at(np.array([0.0]))[0]
    c = -V0 / (2.0 * (2.0 * js + n_dim))
    y = np.ones_like(js)
    dy = 2.0 * c * r0
    w_max = np.abs(y) * r0**js
    coef = 2.0 * js + n_dim - 1.0

    def rhs(idx_half, r, y, dy):
        return dy, -(coef / r) * dy - V[idx_half] * y

    for i in range(n_steps):
        r = r0 + i * h
        k1y, k1d = rhs(2 * i, r, y, dy)
        k2y, k2d = rhs(2 * i + 1, r + 0.5 * h, y + 0.5 * h * k1y, dy + 0.5 * h * k1d)
        k3y, k3d = rhs(2 * i + 1, r + 0.5 * h, y + 0.5 * h * k2y, dy + 0.5 * h * k2d)
        k4y, k4d = rhs(2 * i + 2, r + h, y + h * k3y, dy + h * k3d)
        y = y + (h / 6.0) * (k1y + 2 * k2y + 2 * k3y + k4y)
        dy = dy + (h / 6.0) * (k1d + 2 * k2d + 2 * k3d + k4d)
        w_max = np.maximum(w_max, np.abs(y) * (r + h) ** js)
    return y, w_max


def mode_kernel_value(profile: RadialProfile, j: int, r0: float = 1e-4, n_steps: int = 1200) -> float:
    """Endpoint value w(1) of the homogeneous mode-j solution with regular
    Frobenius data w ~ r^j; nonzero return certifies no kernel in mode j."""
    if j < 0:
        raise PreconditionError("mode index must be nonnegative")
    w1, _ = _kernel_scan(profile, np.array([j]), r0=r0, n_steps=n_steps)
    return float(w1[0])


def _mode_matrix(profile: RadialProfile, mu_j: float) -> np.ndarray:
    """Collocation matrix of the r^2-multiplied mode operator with the
    Dirichlet row at r = 1; the center row enforces continuity at zero."""
    grid = profile.grid
    r = grid.r
    V = profile.lambda_bar * profile.potential
    M = (
        np.diag(r**2) @ grid.D2
        + (profile.dimension - 1.0) * np.diag(r) @ grid.D
        + np.diag(V * r**2 - mu_j)
    )
    M[0, :] = 0.0
    M[0, 0] = 1.0
    return M


def mode_eigenvalue(profile: RadialProfile, j: int, kernel_value: Optional[float] = None) -> float:
    """Shape-linearization eigenvalue alpha_j = b_j'(1) for mode j >= 1.

    b_j solves the inhomogeneous mode ODE, continuous at 0 with b_j(1) = 0;
    condition (iii) of the nondegeneracy assumption holds for mode j exactly
    when alpha_j != 0."""
    if j < 1:
        raise PreconditionError("alpha_j is defined for modes j >= 1")
    if kernel_value is None:
        kernel_value = mode_kernel_value(profile, j)
    if abs(kernel_value) <= KERNEL_THRESHOLD:
        raise ModeDegenerateError(
            f"mode {j} kernel value {kernel_value:.3e} below threshold; solve is near-singular"
        )
    n_dim = profile.dimension
    mu_j = float(j * (j + n_dim - 2))
    grid = profile.grid
    M = _mode_matrix(profile, mu_j)
    rhs = (n_dim - 1.0 - mu_j) * (grid.D @ profile.phi)
    rhs[0] = 0.0
    b = np.linalg.solve(M, rhs)
    return float(grid.D[0] @ b)


def mode_eigenvalue_via_trace(profile: RadialProfile, j: int) -> float:
    """alpha_j through the operator definition: solve the homogeneous mode ODE
    with boundary value -c1 and return the boundary slope plus c2.

    Equivalent to the b_j formulation in exact arithmetic; for j = 1 the
    cancellation against c2 is a sharp consistency check on the profile.
    """
    if j < 1:
        raise PreconditionError("the trace route is defined for modes j >= 1")
    n_dim = profile.dimension
    mu_j = float(j * (j + n_dim - 2))
    grid = profile.grid
    M = _mode_matrix(profile, mu_j)
    rhs = np.zeros(grid.n + 1)
    rhs[0] = -profile.c1
    psi = np.linalg.solve(M, rhs)
    return float(grid.D[0] @ psi + profile.c2)


def literal_limit_value(profile: RadialProfile, j: int, r_stop: float = 0.02, n_steps: int = 4000) -> float:
    """Backward-integrate the mode ODE from r = 1 with a(1) = a'(1) = 0 and
    return a(r_stop).

    The characteristic exponent -j makes the literal r -> 0 limit blow up
    whenever alpha_j != 0, so this is kept as a low-j consistency check only.
    """
    n_dim = profile.dimension
    lam = profile.lambda_bar
    mu_j = float(j * (j + n_dim - 2))
    h = (1.0 - r_stop) / n_steps
    radii = 1.0 - 0.5 * h * np.arange(2 * n_steps + 1)
    V = lam * profile.potential_at(radii)
    dphi = profile.dphi_at(radii)

    def rhs(idx, r, a, da):
        force = (n_dim - 1.0 - mu_j) / r**2 * dphi[idx]
        return da, force - (n_dim - 1.0) / r * da - (V[idx] - mu_j / r**2) * a

    a, da = 0.0, 0.0
    for i in range(n_steps):
        r = 1.0 - i * h
        k1a, k1d = rhs(2 * i, r, a, da)
        k2a, k2d = rhs(2 * i + 1, r - 0.5 * h, a - 0.5 * h * k1a, da - 0.5 * h * k1d)
        k3a, k3d = rhs(2 * i + 1, r - 0.5 * h, a - 0.5 * h * k2a, da - 0.5 * h * k2d)
        k4a, k4d = rhs(2 * i + 2, r - h, a - h * k3a, da - h * k3d)
        a = a - (h / 6.0) * (k1a + 2 * k2a + 2 * k3a + k4a)
        da = da - (h / 6.0) * (k1d + 2 * k2d + 2 * k3d + k4d)
    return float(a)


@dataclass(frozen=True)
class ModeSpectrum:
    """Kernel values, shape eigenvalues, and the nondegeneracy verdict."""

    profile: RadialProfile
    j_max: int
    kernel_values: np.ndarray  # w_j(1), j = 0..j_max
    kernel_scales: np.ndarray  # max_r |w_j|
    alphas: np.ndarray  # alpha_j, j = 0..j_max; entry 0 is NaN (undefined)
    mus: np.ndarray  # j (j + n - 2), exact integers
    potential_bound: float  # sup |lambda_bar f_z(p, phi)|
    tail_certified: bool
    invertible: bool
    alpha1_zero: bool
    alphas_nonzero_j_ge_2: bool

    def __post_init__(self):
        for arr in (self.kernel_values, self.kernel_scales, self.alphas, self.mus):
            arr.flags.writeable = False

    @property
    def dimension(self) -> int:
        return self.profile.dimension

    @property
    def all_pass(self) -> bool:
        return self.invertible and self.alpha1_zero and self.alphas_nonzero_j_ge_2

    @property
    def min_alpha_j_ge_2(self) -> float:
        """Conditioning diagnostic used by the shape Newton solver."""
        return float(np.abs(self.alphas[2:]).min())

    def alpha(self, j: int) -> float:
        if not 1 <= j <= self.j_max:
            raise PreconditionError(f"mode {j} outside the computed range 1..{self.j_max}")
        return float(self.alphas[j])


def verify_assumption_a(
    profile: RadialProfile,
    j_max: int = 16,
    kernel_threshold: float = KERNEL_THRESHOLD,
    alpha_tol: float = 1e-8,
) -> ModeSpectrum:
    """Assemble kernel values and alphas for j <= j_max, evaluate the
    coercivity tail certificate, and return the verdict record.

    The tail bound: with K = sup_r |lambda_bar f_z(p, phi)|, any mode with
    mu_j > K is coercive and carries no kernel, so the finite scan certifies
    invertibility whenever mu_{j_max + 1} > K.
    """
    if j_max < 2:
        raise PreconditionError("j_max must be at least 2")
    n_dim = profile.dimension
    js = np.arange(j_max + 1)
    w1, w_scale = _kernel_scan(profile, js)
    scan_ok = np.all(np.abs(w1) > kernel_threshold * w_scale)
    K = float(np.abs(profile.lambda_bar * profile.potential).max())
    mu_next = (j_max + 1) * (j_max + n_dim - 1)
    tail_certified = mu_next > K
    alphas = np.full(j_max + 1, np.nan)
    for j in range(1, j_max + 1):
        alphas[j] = mode_eigenvalue(profile, j, kernel_value=float(w1[j]))
    mus = js * (js + n_dim - 2)
    return ModeSpectrum(
        profile=profile,
        j_max=j_max,
        kernel_values=w1,
        kernel_scales=w_scale,
        alphas=alphas,
        mus=mus,
        potential_bound=K,
        tail_certified=tail_certified,
        invertible=bool(scan_ok and tail_certified),
        alpha1_zero=bool(abs(alphas[1]) <= alpha_tol),
        alphas_nonzero_j_ge_2=bool(np.all(np.abs(alphas[2:]) > alpha_tol)),
    )


def apply_H(spectrum: ModeSpectrum, w: AngularFourier, truncation_tol: float = 0.0) -> AngularFourier:
    """Apply the shape-linearization operator: multiply mode j by alpha_j.

    Input must have zero mean; modes above j_max raise unless their content
    is below ``truncation_tol``.  The output is again zero-mean (the operator
    maps into zero-average boundary functions).
    """
    if w.mean != 0.0:
        raise PreconditionError("apply_H requires a zero-mean angular function")
    if w.max_mode > spectrum.j_max:
        w = w.truncated(spectrum.j_max, tol=truncation_tol)
    mult = np.zeros(w.max_mode + 1)
    mult[1:] = spectrum.alphas[1 : w.max_mode + 1]
    return AngularFourier(mult * w.cos_coeffs, mult * w.sin_coeffs)
