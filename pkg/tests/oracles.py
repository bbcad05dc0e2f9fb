"""Independent numerical oracles used by the tests.

These deliberately avoid the library's collocation machinery: radial solves
are cross-checked by fourth-order shooting on the initial value problem, and
eigenvalues by bisection on the shooting endpoint.
"""

from __future__ import annotations

import numpy as np


def shoot_radial(f_of_phi, lam, n_dim, heights, density=None, r0=1e-4, step=1e-5):
    """Integrate phi'' + (n-1)/r phi' + (theta'/theta) phi' + lam f(phi) = 0
    from r0 to 1 for a batch of center heights; returns phi(1) per height.

    Series start: phi = h - lam f(h) r^2 / (2 n) near the center.
    """
    heights = np.atleast_1d(np.asarray(heights, dtype=float))
    lam_f = lambda z: lam * np.asarray(f_of_phi(z))
    phi = heights - lam_f(heights) * r0**2 / (2.0 * n_dim)
    dphi = -lam_f(heights) * r0 / n_dim

    if density is None:
        def coef(r):
            return (n_dim - 1.0) / r
    else:
        h_fd = 1e-7

        def coef(r):
            th = density(np.array([r - h_fd, r, r + h_fd]))
            return (n_dim - 1.0) / r + (th[2] - th[0]) / (2.0 * h_fd) / th[1]

    n_steps = int(round((1.0 - r0) / step))
    h = (1.0 - r0) / n_steps

    def rhs(r, y, dy):
        return dy, -coef(r) * dy - lam_f(y)

    r = r0
    for _ in range(n_steps):
        k1y, k1d = rhs(r, phi, dphi)
        k2y, k2d = rhs(r + h / 2, phi + h / 2 * k1y, dphi + h / 2 * k1d)
        k3y, k3d = rhs(r + h / 2, phi + h / 2 * k2y, dphi + h / 2 * k2d)
        k4y, k4d = rhs(r + h, phi + h * k3y, dphi + h * k3d)
        phi = phi + h / 6 * (k1y + 2 * k2y + 2 * k3y + k4y)
        dphi = dphi + h / 6 * (k1d + 2 * k2d + 2 * k3d + k4d)
        r += h
    return phi


def shoot_center_height(f_of_phi, lam, n_dim, bracket, density=None, step=1e-5, tol=1e-12):
    """Center height h with phi(1; h) = 0, by secant on the shooting endpoint."""
    h0, h1 = bracket
    f0, f1 = shoot_radial(f_of_phi, lam, n_dim, [h0, h1], density=density, step=step)
    for _ in range(60):
        if abs(f1 - f0) < 1e-300:
            break
        h2 = h1 - f1 * (h1 - h0) / (f1 - f0)
        if abs(h2 - h1) < tol:
            return h2
        f2 = shoot_radial(f_of_phi, lam, n_dim, [h2], density=density, step=step)[0]
        h0, f0, h1, f1 = h1, f1, h2, f2
    return h1
