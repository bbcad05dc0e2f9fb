"""Spectral grids: Chebyshev collocation in radius, Fourier collocation in angle.

Two grid families are used throughout:

* ``RadialGrid`` -- Chebyshev-Lobatto nodes on [0, 1] (both endpoints
  included) for radial two-point boundary value problems.
* ``PolarDiskGrid`` -- tensor grid on the unit disk.  The radial nodes are
  the positive half of a Chebyshev-Lobatto grid of odd degree on [-1, 1],
  so r = 0 is not a node, and radial differentiation reaches through the
  pole via the identification u(-r, theta) = u(r, theta + pi).  This is the
  standard spectral realization of pole regularity: the Fourier mode j of
  any smooth field automatically behaves like r^j near the center.

Quadrature is Clenshaw-Curtis in radius and trapezoid (exact for trig
polynomials) in angle.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import TruncationError

__all__ = [
    "chebyshev_lobatto",
    "chebyshev_diff_matrix",
    "clenshaw_curtis_weights",
    "fourier_diff_matrix",
    "barycentric_matrix",
    "AngularFourier",
    "RadialGrid",
    "PolarDiskGrid",
]


def chebyshev_lobatto(n: int) -> np.ndarray:
    """Nodes x_j = cos(j pi / n), j = 0..n, descending on [-1, 1]."""
    if n < 1:
        raise ValueError("need polynomial degree n >= 1")
    return np.cos(np.pi * np.arange(n + 1) / n)


def chebyshev_diff_matrix(n: int) -> np.ndarray:
    """Differentiation matrix on the Chebyshev-Lobatto nodes (Trefethen form)."""
    x = chebyshev_lobatto(n)
    c = np.ones(n + 1)
    c[0] = c[n] = 2.0
    c = c * (-1.0) ** np.arange(n + 1)
    dx = x[:, None] - x[None, :]
    D = np.outer(c, 1.0 / c) / (dx + np.eye(n + 1))
    D -= np.diag(D.sum(axis=1))
    return D


def clenshaw_curtis_weights(n: int) -> np.ndarray:
    """Quadrature weights on the Chebyshev-Lobatto nodes for [-1, 1]."""
    if n == 1:
        return np.array([1.0, 1.0])
    j = np.arange(n + 1)
    w = np.ones(n + 1)
    ks = np.arange(1, n // 2 + 1)
    b = np.where(2 * ks == n, 1.0, 2.0)
    # w_j = (c_j/n) [1 - sum_k b_k cos(2 k j pi / n) / (4 k^2 - 1)]
    cosines = np.cos(2.0 * np.pi * np.outer(j, ks) / n)
    w = 1.0 - cosines @ (b / (4.0 * ks**2 - 1.0))
    cj = np.full(n + 1, 2.0)
    cj[0] = cj[n] = 1.0
    return cj * w / n


def fourier_diff_matrix(n: int) -> np.ndarray:
    """Differentiation matrix on theta_k = 2 pi k / n, n even."""
    if n % 2 != 0:
        raise ValueError("angular grid size must be even")
    k = np.arange(n)
    diff = k[:, None] - k[None, :]
    with np.errstate(divide="ignore", invalid="ignore"):
        D = 0.5 * (-1.0) ** diff / np.tan(np.pi * diff / n)
    np.fill_diagonal(D, 0.0)
    return D


def _chebyshev_coeff_matrix(n: int) -> np.ndarray:
    """Map values on the degree-n Lobatto nodes to Chebyshev coefficients."""
    j = np.arange(n + 1)
    p = np.ones(n + 1)
    p[0] = p[n] = 2.0
    return (2.0 / n) * np.cos(np.pi * np.outer(j, j) / n) / np.outer(p, p)


def abs_weighted_cc_weights(n: int) -> np.ndarray:
    """Weights W_j on the degree-n Lobatto nodes with
    sum_j W_j f(x_j) = int_{-1}^{1} f(x) |x| dx, exact for deg(f) <= n.

    This is the Clenshaw-Curtis rule for the area measure of the disk seen
    along a diameter line; the |x| factor belongs to the measure, so smooth
    fields are integrated at spectral accuracy."""
    from numpy.polynomial import chebyshev as C

    moments = np.zeros(n + 1)
    for k in range(0, n + 1, 2):
        # x T_k(x) = (T_{k+1} + T_{k-1}) / 2 for k >= 1, x T_0 = T_1
        if k == 0:
            series = np.zeros(2)
            series[1] = 1.0
        else:
            series = np.zeros(k + 2)
            series[k + 1] = 0.5
            series[k - 1] += 0.5
        anti = C.chebint(series)
        moments[k] = 2.0 * (C.chebval(1.0, anti) - C.chebval(0.0, anti))
    return _chebyshev_coeff_matrix(n).T @ moments


def _chebyshev_barycentric_weights(m: int) -> np.ndarray:
    w = (-1.0) ** np.arange(m)
    w[0] *= 0.5
    w[-1] *= 0.5
    return w


def barycentric_matrix(nodes: np.ndarray, targets: np.ndarray) -> np.ndarray:
    """Interpolation matrix from Chebyshev-Lobatto ``nodes`` (any affine image)
    to ``targets``: values_at_targets = B @ values_at_nodes."""
    w = _chebyshev_barycentric_weights(len(nodes))
    diff = targets[:, None] - nodes[None, :]
    exact_rows, exact_cols = np.nonzero(diff == 0.0)
    with np.errstate(divide="ignore", invalid="ignore"):
        ratios = w[None, :] / diff
        B = ratios / ratios.sum(axis=1, keepdims=True)
    for i, jcol in zip(exact_rows, exact_cols):
        B[i, :] = 0.0
        B[i, jcol] = 1.0
    return B


@dataclass(frozen=True)
class AngularFourier:
    """Real Fourier series a_0 + sum_j (a_j cos(j t) + b_j sin(j t)) on the circle.

    ``cos_coeffs[j]`` and ``sin_coeffs[j]`` are indexed by mode number;
    ``sin_coeffs[0]`` is ignored and kept at zero.
    """

    cos_coeffs: np.ndarray
    sin_coeffs: np.ndarray

    def __post_init__(self):
        cos = np.atleast_1d(np.asarray(self.cos_coeffs, dtype=float))
        sin = np.atleast_1d(np.asarray(self.sin_coeffs, dtype=float))
        if cos.shape != sin.shape:
            raise ValueError("cos/sin coefficient arrays must have equal length")
        sin = sin.copy()
        sin[0] = 0.0
        for name, arr in (("cos_coeffs", cos), ("sin_coeffs", sin)):
            arr.flags.writeable = False
            object.__setattr__(self, name, arr)

    @property
    def max_mode(self) -> int:
        return len(self.cos_coeffs) - 1

    @property
    def mean(self) -> float:
        return float(self.cos_coeffs[0])

    def evaluate(self, theta: np.ndarray) -> np.ndarray:
        theta = np.asarray(theta, dtype=float)
        j = np.arange(self.max_mode + 1)
        phases = np.multiply.outer(theta, j)
        return np.cos(phases) @ self.cos_coeffs + np.sin(phases) @ self.sin_coeffs

    def derivative(self) -> "AngularFourier":
        j = np.arange(self.max_mode + 1, dtype=float)
        return AngularFourier(j * self.sin_coeffs, -j * self.cos_coeffs)

    def truncated(self, j_max: int, tol: float = 0.0) -> "AngularFourier":
        """Drop modes above ``j_max``; raise if they carry content above ``tol``."""
        if j_max >= self.max_mode:
            return self
        tail = max(
            np.abs(self.cos_coeffs[j_max + 1 :]).max(initial=0.0),
            np.abs(self.sin_coeffs[j_max + 1 :]).max(initial=0.0),
        )
        if tail > tol:
            raise TruncationError(
                f"coefficients beyond mode {j_max} carry magnitude {tail:.3e}"
            )
        return AngularFourier(self.cos_coeffs[: j_max + 1], self.sin_coeffs[: j_max + 1])

    @staticmethod
    def zero(j_max: int) -> "AngularFourier":
        return AngularFourier(np.zeros(j_max + 1), np.zeros(j_max + 1))

    @staticmethod
    def from_values(values: np.ndarray) -> "AngularFourier":
        """Collocation coefficients of samples on theta_k = 2 pi k / n (n even)."""
        values = np.asarray(values, dtype=float)
        n = len(values)
        spec = np.fft.rfft(values)
        cos = 2.0 * spec.real / n
        sin = -2.0 * spec.imag / n
        cos[0] *= 0.5
        if n % 2 == 0:
            cos[-1] *= 0.5
            sin[-1] = 0.0
        return AngularFourier(cos, sin)


@dataclass(frozen=True)
class RadialGrid:
    """Chebyshev-Lobatto collocation grid on [0, 1]; node 0 is r = 1, node n is r = 0."""

    n: int
    r: np.ndarray = field(init=False)
    D: np.ndarray = field(init=False)
    D2: np.ndarray = field(init=False)
    weights: np.ndarray = field(init=False)

    def __post_init__(self):
        x = chebyshev_lobatto(self.n)
        D = 2.0 * chebyshev_diff_matrix(self.n)  # d/dr with r = (1+x)/2
        for name, arr in (
            ("r", (1.0 + x) / 2.0),
            ("D", D),
            ("D2", D @ D),
            ("weights", clenshaw_curtis_weights(self.n) / 2.0),
        ):
            arr.flags.writeable = False
            object.__setattr__(self, name, arr)

    def radial_laplacian(self, n_dim: int) -> np.ndarray:
        """Matrix of u'' + (n_dim - 1)/r u' with the 1/r term replaced by its
        L'Hopital limit at the center node: the whole row becomes n_dim * u''(0)."""
        L = self.D2.copy()
        interior = slice(0, self.n)  # all nodes with r > 0
        L[interior, :] += (n_dim - 1.0) / self.r[interior, None] * self.D[interior, :]
        L[self.n, :] = n_dim * self.D2[self.n, :]
        return L

    def interpolate(self, values: np.ndarray, targets: np.ndarray) -> np.ndarray:
        return barycentric_matrix(self.r, np.asarray(targets, dtype=float)) @ values

    def integrate(self, values: np.ndarray) -> float:
        """Clenshaw-Curtis integral over r in [0, 1]."""
        return float(self.weights @ values)


class PolarDiskGrid:
    """Fourier (angle) x Chebyshev (radius) collocation grid on the unit disk.

    Radial nodes are the positive half of the degree-(2 n_r - 1) Lobatto grid
    on [-1, 1]; differentiation couples antipodal rays.  Fields are arrays of
    shape (n_r, n_theta) with ring 0 on the boundary r = 1.
    """

    def __init__(self, n_r: int, n_theta: int):
        if n_theta % 2 != 0:
            raise ValueError("n_theta must be even")
        if n_r < 4:
            raise ValueError("need at least 4 radial rings")
        self.n_r = n_r
        self.n_theta = n_theta
        m_full = 2 * n_r - 1
        x_full = chebyshev_lobatto(m_full)
        D_full = chebyshev_diff_matrix(m_full)
        D2_full = D_full @ D_full
        self.r = x_full[:n_r]
        # column m of the "neg" blocks multiplies u(r_m, theta + pi)
        flip = np.arange(m_full, n_r - 1, -1)
        self.Dpos = D_full[:n_r, :n_r].copy()
        self.Dneg = D_full[:n_r, flip].copy()
        self.D2pos = D2_full[:n_r, :n_r].copy()
        self.D2neg = D2_full[:n_r, flip].copy()
        self.theta = 2.0 * np.pi * np.arange(n_theta) / n_theta
        self.Dtheta = fourier_diff_matrix(n_theta)
        self.shift = n_theta // 2
        v_full = abs_weighted_cc_weights(m_full)
        # area-measure radial weights: int_0^1 g(r) r dr = sum_i W_i g(r_i)
        # for fields whose doubled extension along diameter lines is smooth
        self.radial_weights = 0.5 * (v_full[:n_r] + v_full[flip])
        self._shifted = (np.arange(n_theta) + self.shift) % n_theta
        for arr in (
            self.r,
            self.Dpos,
            self.Dneg,
            self.D2pos,
            self.D2neg,
            self.theta,
            self.Dtheta,
            self.radial_weights,
        ):
            arr.flags.writeable = False

    @property
    def shape(self) -> tuple[int, int]:
        return (self.n_r, self.n_theta)

    @property
    def size(self) -> int:
        return self.n_r * self.n_theta

    def nodes_xy(self) -> np.ndarray:
        """Cartesian coordinates of the grid nodes, shape (n_r, n_theta, 2)."""
        r = self.r[:, None]
        return np.stack(
            [r * np.cos(self.theta)[None, :], r * np.sin(self.theta)[None, :]], axis=-1
        )

    def antipodal(self, u: np.ndarray) -> np.ndarray:
        return u[:, self._shifted]

    def dr(self, u: np.ndarray) -> np.ndarray:
        return self.Dpos @ u + self.Dneg @ self.antipodal(u)

    def dtheta(self, u: np.ndarray) -> np.ndarray:
        return u @ self.Dtheta.T

    def integrate_area(self, h: np.ndarray) -> float:
        """Integral of a smooth field against the flat area measure r dr dtheta.

        Metric volume integrals pass h = (smooth integrand) * sqrt(det g) with
        the determinant taken in Cartesian components, which keeps h smooth
        through the pole.
        """
        return float(2.0 * np.pi / self.n_theta * (self.radial_weights @ h).sum())

    def ring_fourier(self, ring_values: np.ndarray) -> AngularFourier:
        return AngularFourier.from_values(ring_values)

    def field_mode_coeffs(self, u: np.ndarray) -> np.ndarray:
        """Complex Fourier coefficients per ring, shape (n_r, n_theta//2 + 1)."""
        return np.fft.rfft(u, axis=1) / self.n_theta

    def boundary_dr(self, u: np.ndarray) -> np.ndarray:
        """Radial derivative on the boundary ring r = 1."""
        return self.Dpos[0] @ u + self.Dneg[0] @ self.antipodal(u)
