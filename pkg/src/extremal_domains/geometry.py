"""Model 2-manifolds, exponential maps, and pulled-back disk metrics.

A chart is a single coordinate patch with a metric callable.  Around a
center point p the rescaled normal-coordinate metric is

    gbar_ij(x) = g_ij(eps x)        (components in a g(p)-orthonormal frame),

obtained in closed form for the flat torus and the round sphere and by
integrating Jacobi fields along radial geodesics otherwise.  A boundary
shape (v0, vbar) deforms the unit disk through

    beta(y) = (1 + v0 + chi(|y|) vbar(y/|y|)) y,

and the solver works on the fixed disk with the pulled-back metric
ghat = beta^* gbar.  The Jacobian of beta is assembled analytically from
the Fourier representation of vbar; nothing here is finite-differenced.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .errors import (
    GeodesicIntegrationError,
    MetricDegeneracyError,
    OutOfRangeError,
    PreconditionError,
)
from .grids import AngularFourier, PolarDiskGrid, barycentric_matrix, chebyshev_diff_matrix, chebyshev_lobatto

__all__ = [
    "ManifoldChart",
    "flat_torus",
    "round_sphere",
    "conformal_torus",
    "custom_chart",
    "exp_map",
    "exp_map_batch",
    "log_map",
    "log_map_batch",
    "sphere_exp",
    "sphere_log",
    "NormalMetric",
    "normal_metric",
    "BoundaryShape",
    "smoothstep_cutoff",
    "smoothstep_cutoff_derivative",
    "PulledBackMetric",
    "pullback_shape_metric",
    "metric_shape_derivative",
    "volume",
    "volume_shape_derivative",
]


# ---------------------------------------------------------------------------
# charts


@dataclass(frozen=True)
class ManifoldChart:
    """A 2-manifold presented in a single coordinate chart.

    ``metric`` maps points of shape (..., 2) to matrices (..., 2, 2).
    ``metric_grad`` returns d_k g_ij indexed (..., k, i, j) and
    ``metric_hess`` returns d_l d_k g_ij indexed (..., l, k, i, j); both are
    optional and fall back to central differences of ``metric``.
    """

    kind: str
    metric: Callable[[np.ndarray], np.ndarray]
    injectivity_radius_lower_bound: float
    params: dict = field(default_factory=dict)
    metric_grad: Optional[Callable[[np.ndarray], np.ndarray]] = None
    metric_hess: Optional[Callable[[np.ndarray], np.ndarray]] = None
    known_isometry_tags: tuple = ()
    periods: Optional[tuple] = None

    def __post_init__(self):
        if self.injectivity_radius_lower_bound <= 0:
            raise ValueError("injectivity radius bound must be positive")
        probe = self.params.get("probe_points")
        if probe is None:
            half = min(self.injectivity_radius_lower_bound, 1.0)
            s = np.linspace(-half, half, 5)
            probe = np.stack(np.meshgrid(s, s), axis=-1).reshape(-1, 2)
        g = self.metric(np.asarray(probe, dtype=float))
        eigs = np.linalg.eigvalsh(g)
        if not np.all(eigs > 0.0):
            raise MetricDegeneracyError("chart metric is not positive definite at a probe point")
        sym = np.abs(g - np.swapaxes(g, -1, -2)).max()
        if sym > 1e-12:
            raise ValueError("chart metric is not symmetric")

    def norm(self, x: np.ndarray, v: np.ndarray) -> np.ndarray:
        g = self.metric(x)
        return np.sqrt(np.einsum("...i,...ij,...j->...", v, g, v))

    def wrap(self, x: np.ndarray) -> np.ndarray:
        """Reduce coordinates modulo the periods, when the chart has any."""
        if self.periods is None:
            return x
        return np.mod(x, np.asarray(self.periods))

    def orthonormal_frame(self, p: np.ndarray, angle: float = 0.0) -> np.ndarray:
        """Columns form a g(p)-orthonormal tangent basis, rotated by ``angle``."""
        L = np.linalg.cholesky(self.metric(np.asarray(p, dtype=float)))
        E = np.linalg.inv(L).T
        c, s = np.cos(angle), np.sin(angle)
        return E @ np.array([[c, -s], [s, c]])


def _identity_metric(x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    return np.broadcast_to(np.eye(2), x.shape[:-1] + (2, 2)).copy()


def _zero_grad(x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    return np.zeros(x.shape[:-1] + (2, 2, 2))


def flat_torus(periods: tuple = (2.0 * np.pi, 2.0 * np.pi)) -> ManifoldChart:
    """Flat torus R^2 / (periods Z^2); also the chart for periodic problems on R^2."""
    inj = 0.5 * min(periods)
    tags = ("translation_x1", "translation_x2", "reflection_x1", "reflection_x2")
    return ManifoldChart(
        kind="flat_torus",
        metric=_identity_metric,
        metric_grad=_zero_grad,
        injectivity_radius_lower_bound=inj,
        params={"periods": tuple(periods)},
        known_isometry_tags=tags,
        periods=tuple(periods),
    )


def _sphere_metric_factory(radius: float):
    def metric(x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        rho = np.linalg.norm(x, axis=-1)
        u = rho / radius
        # tangential coefficient sin(u)^2 / u^2, radial coefficient 1
        fac = np.where(u < 1e-8, 1.0 - u**2 / 3.0, np.sin(np.where(u < 1e-8, 1.0, u)) ** 2 / np.where(u < 1e-8, 1.0, u) ** 2)
        rho_safe = np.where(rho > 0, rho, 1.0)
        xhat = x / rho_safe[..., None]
        proj = np.einsum("...i,...j->...ij", xhat, xhat)
        eye = np.broadcast_to(np.eye(2), proj.shape)
        g = fac[..., None, None] * (eye - proj) + proj
        return np.where(rho[..., None, None] > 0, g, np.broadcast_to(np.eye(2), g.shape))

    return metric


def round_sphere(radius: float = 1.0) -> ManifoldChart:
    """Round 2-sphere in normal coordinates about a chart center; covers
    geodesic distance < pi * radius."""
    probe_r = 0.8 * np.pi * radius
    s = np.linspace(-probe_r, probe_r, 7)
    probe = np.stack(np.meshgrid(s, s), axis=-1).reshape(-1, 2)
    probe = probe[np.linalg.norm(probe, axis=1) < 0.95 * np.pi * radius]
    return ManifoldChart(
        kind="round_sphere",
        metric=_sphere_metric_factory(radius),
        injectivity_radius_lower_bound=np.pi * radius,
        params={"radius": float(radius), "probe_points": probe},
        known_isometry_tags=("full_rotation_group",),
    )


def conformal_torus(amplitude: float = 0.1, periods: tuple = (2.0 * np.pi, 2.0 * np.pi)) -> ManifoldChart:
    """Torus with conformal metric (1 + amplitude cos x1) I."""
    if not -1.0 < amplitude < 1.0:
        raise ValueError("conformal amplitude must lie in (-1, 1)")
    a = float(amplitude)

    def metric(x):
        x = np.asarray(x, dtype=float)
        c = 1.0 + a * np.cos(x[..., 0])
        return c[..., None, None] * np.broadcast_to(np.eye(2), x.shape[:-1] + (2, 2))

    def metric_grad(x):
        x = np.asarray(x, dtype=float)
        out = np.zeros(x.shape[:-1] + (2, 2, 2))
        dc = -a * np.sin(x[..., 0])
        out[..., 0, 0, 0] = dc
        out[..., 0, 1, 1] = dc
        return out

    def metric_hess(x):
        x = np.asarray(x, dtype=float)
        out = np.zeros(x.shape[:-1] + (2, 2, 2, 2))
        ddc = -a * np.cos(x[..., 0])
        out[..., 0, 0, 0, 0] = ddc
        out[..., 0, 0, 1, 1] = ddc
        return out

    inj = 0.5 * min(periods) * np.sqrt(1.0 - abs(a))
    return ManifoldChart(
        kind="conformal_torus",
        metric=metric,
        metric_grad=metric_grad,
        metric_hess=metric_hess,
        injectivity_radius_lower_bound=inj,
        params={"amplitude": a, "periods": tuple(periods)},
        known_isometry_tags=("translation_x2", "reflection_x1", "reflection_x2"),
        periods=tuple(periods),
    )


def custom_chart(
    metric: Callable,
    injectivity_radius_lower_bound: float,
    metric_grad: Optional[Callable] = None,
    metric_hess: Optional[Callable] = None,
    periods: Optional[tuple] = None,
    known_isometry_tags: tuple = (),
    probe_points: Optional[np.ndarray] = None,
) -> ManifoldChart:
    params = {}
    if probe_points is not None:
        params["probe_points"] = np.asarray(probe_points, dtype=float)
    return ManifoldChart(
        kind="custom_chart",
        metric=metric,
        metric_grad=metric_grad,
        metric_hess=metric_hess,
        injectivity_radius_lower_bound=injectivity_radius_lower_bound,
        params=params,
        known_isometry_tags=tuple(known_isometry_tags),
        periods=periods,
    )


# ---------------------------------------------------------------------------
# geodesics


_FD_H = 1e-6


def _metric_grad_any(chart: ManifoldChart, x: np.ndarray) -> np.ndarray:
    if chart.metric_grad is not None:
        return chart.metric_grad(x)
    x = np.asarray(x, dtype=float)
    out = np.zeros(x.shape[:-1] + (2, 2, 2))
    for k in range(2):
        e = np.zeros(2)
        e[k] = _FD_H
        out[..., k, :, :] = (chart.metric(x + e) - chart.metric(x - e)) / (2.0 * _FD_H)
    return out


def christoffel(chart: ManifoldChart, x: np.ndarray) -> np.ndarray:
    """Christoffel symbols Gamma^k_ij indexed (..., k, i, j)."""
    g = chart.metric(x)
    dg = _metric_grad_any(chart, x)
    ginv = np.linalg.inv(g)
    # term_{l i j} = d_i g_{j l} + d_j g_{i l} - d_l g_{i j}
    term = np.einsum("...ijl->...lij", dg) + np.einsum("...jil->...lij", dg) - dg
    return 0.5 * np.einsum("...kl,...lij->...kij", ginv, term)


def christoffel_grad(chart: ManifoldChart, x: np.ndarray) -> np.ndarray:
    """d_m Gamma^k_ij indexed (..., m, k, i, j)."""
    if chart.metric_grad is not None and chart.metric_hess is not None:
        g = chart.metric(x)
        dg = _metric_grad_any(chart, x)
        ddg = chart.metric_hess(x)  # (..., m, k, i, j) = d_m d_k g_ij
        ginv = np.linalg.inv(g)
        dginv = -np.einsum("...ka,...mab,...bl->...mkl", ginv, dg, ginv)
        term = np.einsum("...ijl->...lij", dg) + np.einsum("...jil->...lij", dg) - dg
        dterm = (
            np.einsum("...mijl->...mlij", ddg)
            + np.einsum("...mjil->...mlij", ddg)
            - ddg
        )
        return 0.5 * (
            np.einsum("...mkl,...lij->...mkij", dginv, term)
            + np.einsum("...kl,...mlij->...mkij", ginv, dterm)
        )
    x = np.asarray(x, dtype=float)
    out = np.zeros(x.shape[:-1] + (2, 2, 2, 2))
    for m in range(2):
        e = np.zeros(2)
        e[m] = _FD_H
        out[..., m, :, :, :] = (christoffel(chart, x + e) - christoffel(chart, x - e)) / (2.0 * _FD_H)
    return out


def _geodesic_rhs(chart: ManifoldChart, x: np.ndarray, v: np.ndarray):
    gam = christoffel(chart, x)
    acc = -np.einsum("...kij,...i,...j->...k", gam, v, v)
    return v, acc


def _rk4_geodesic(chart: ManifoldChart, x: np.ndarray, v: np.ndarray, t_total: float, n_steps: int):
    h = t_total / n_steps
    for _ in range(n_steps):
        k1x, k1v = _geodesic_rhs(chart, x, v)
        k2x, k2v = _geodesic_rhs(chart, x + 0.5 * h * k1x, v + 0.5 * h * k1v)
        k3x, k3v = _geodesic_rhs(chart, x + 0.5 * h * k2x, v + 0.5 * h * k2v)
        k4x, k4v = _geodesic_rhs(chart, x + h * k3x, v + h * k3v)
        x = x + (h / 6.0) * (k1x + 2 * k2x + 2 * k3x + k4x)
        v = v + (h / 6.0) * (k1v + 2 * k2v + 2 * k3v + k4v)
        if not np.all(np.isfinite(x)):
            raise GeodesicIntegrationError("geodesic integration diverged", last_point=x)
    return x, v


def _default_steps(length: float, steps_per_unit: float = 64.0) -> int:
    return max(16, int(np.ceil(length * steps_per_unit)))


def exp_map(chart: ManifoldChart, p: np.ndarray, x: np.ndarray, n_steps: Optional[int] = None) -> np.ndarray:
    """Endpoint of the unit-time geodesic from p with initial velocity x.

    Fixed fourth-order integration with a step count adapted to the geodesic
    length; deterministic for fixed step parameters.  Flat charts shortcut to
    the exact straight line.
    """
    p = np.asarray(p, dtype=float)
    x = np.asarray(x, dtype=float)
    length = float(chart.norm(p, x))
    if length >= chart.injectivity_radius_lower_bound:
        raise PreconditionError(
            f"|x|_g = {length:.4g} exceeds the injectivity radius bound "
            f"{chart.injectivity_radius_lower_bound:.4g}"
        )
    if chart.kind == "flat_torus":
        return p + x
    if length == 0.0:
        return p.copy()
    steps = n_steps or _default_steps(length)
    end, _ = _rk4_geodesic(chart, p.copy(), x.copy(), 1.0, steps)
    if chart.kind == "round_sphere":
        limit = np.pi * chart.params["radius"]
        if np.linalg.norm(end) > 0.999 * limit:
            raise GeodesicIntegrationError("geodesic left the sphere chart", last_point=end)
    return end


def exp_map_batch(chart: ManifoldChart, p: np.ndarray, xs: np.ndarray, n_steps: Optional[int] = None) -> np.ndarray:
    """Vectorized exp_map for many tangent vectors at the same base point."""
    p = np.asarray(p, dtype=float)
    xs = np.asarray(xs, dtype=float)
    flat = xs.reshape(-1, 2)
    if chart.kind == "flat_torus":
        return (p + xs).reshape(xs.shape)
    if chart.kind == "round_sphere":
        return sphere_exp(p, flat, chart.params["radius"]).reshape(xs.shape)
    lengths = chart.norm(np.broadcast_to(p, flat.shape), flat)
    steps = n_steps or _default_steps(float(lengths.max(initial=0.0)))
    base = np.broadcast_to(p, flat.shape).copy()
    end, _ = _rk4_geodesic(chart, base, flat.copy(), 1.0, steps)
    return end.reshape(xs.shape)


def log_map(chart: ManifoldChart, p: np.ndarray, q: np.ndarray, tol: float = 1e-13) -> np.ndarray:
    """Tangent vector xi with exp_p(xi) = q, for q near p."""
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    if chart.kind == "flat_torus":
        d = q - p
        per = np.asarray(chart.periods)
        return d - per * np.round(d / per)
    if chart.kind == "round_sphere":
        return sphere_log(p, q, chart.params["radius"])
    xi = q - p
    for _ in range(60):
        err = q - exp_map(chart, p, xi)
        xi = xi + err
        if np.linalg.norm(err) < tol:
            return xi
    raise GeodesicIntegrationError("log map iteration did not converge", last_point=xi)


def log_map_batch(chart: ManifoldChart, p: np.ndarray, qs: np.ndarray, tol: float = 1e-13) -> np.ndarray:
    """Vectorized log map: tangent vectors at p reaching each row of ``qs``.

    Curved generic charts use the contraction xi <- xi + (q - exp_p(xi)),
    which converges at rate O(curvature * distance^2) for nearby targets.
    """
    p = np.asarray(p, dtype=float)
    qs = np.atleast_2d(np.asarray(qs, dtype=float))
    if chart.kind == "flat_torus":
        d = qs - p
        per = np.asarray(chart.periods)
        return d - per * np.round(d / per)
    if chart.kind == "round_sphere":
        return sphere_log(p, qs, chart.params["radius"])
    xi = qs - p
    for _ in range(60):
        err = qs - exp_map_batch(chart, p, xi)
        xi = xi + err
        if np.abs(err).max() < tol:
            return xi
    raise GeodesicIntegrationError("batched log map did not converge", last_point=xi)


# closed-form sphere geodesics via the round embedding -----------------------


def _sphere_embed(x: np.ndarray, radius: float) -> np.ndarray:
    x = np.atleast_2d(np.asarray(x, dtype=float))
    rho = np.linalg.norm(x, axis=-1)
    u = rho / radius
    sinc = np.where(rho > 0, np.sin(u) / np.where(rho > 0, rho, 1.0), 1.0 / radius)
    out = np.empty(x.shape[:-1] + (3,))
    out[..., :2] = radius * sinc[..., None] * x
    out[..., 2] = radius * np.cos(u)
    return out


def _sphere_unembed(P: np.ndarray, radius: float) -> np.ndarray:
    P = np.atleast_2d(np.asarray(P, dtype=float))
    rho = radius * np.arccos(np.clip(P[..., 2] / radius, -1.0, 1.0))
    planar = np.linalg.norm(P[..., :2], axis=-1)
    scale = np.where(planar > 1e-300, rho / np.where(planar > 0, planar, 1.0), 0.0)
    return scale[..., None] * P[..., :2]


def _sphere_push_tangent(x: np.ndarray, v: np.ndarray, radius: float) -> np.ndarray:
    """Push a chart tangent vector at x to the embedded tangent space."""
    x = np.atleast_2d(np.asarray(x, dtype=float))
    v = np.atleast_2d(np.asarray(v, dtype=float))
    rho = np.linalg.norm(x, axis=-1)
    safe = np.where(rho > 0, rho, 1.0)
    xhat = np.where(rho[..., None] > 0, x / safe[..., None], 0.0)
    u = rho / radius
    v_rad = np.einsum("...i,...i->...", v, xhat)
    v_tan = v - v_rad[..., None] * xhat
    out = np.empty(v.shape[:-1] + (3,))
    sinc = np.where(rho > 0, np.sin(u) / np.where(rho > 0, u, 1.0), 1.0)
    out[..., :2] = v_rad[..., None] * np.cos(u)[..., None] * xhat + sinc[..., None] * v_tan
    out[..., 2] = -v_rad * np.sin(u)
    # at the chart center the differential is the identity into the plane
    center = rho[..., None] == 0.0
    if np.any(center):
        out[..., :2] = np.where(center, v, out[..., :2])
        out[..., 2] = np.where(center[..., 0], 0.0, out[..., 2])
    return out


def _sphere_pull_tangent(x: np.ndarray, V: np.ndarray, radius: float) -> np.ndarray:
    x = np.atleast_2d(np.asarray(x, dtype=float))
    V = np.atleast_2d(np.asarray(V, dtype=float))
    rho = np.linalg.norm(x, axis=-1)
    safe = np.where(rho > 0, rho, 1.0)
    xhat = np.where(rho[..., None] > 0, x / safe[..., None], 0.0)
    u = rho / radius
    # invert the push: radial part from the vertical component where possible
    v_rad = np.einsum("...i,...i->...", V[..., :2], xhat) * np.cos(u) - V[..., 2] * np.sin(u)
    sinc = np.where(rho > 0, np.sin(u) / np.where(rho > 0, u, 1.0), 1.0)
    V_tan = V[..., :2] - np.einsum("...i,...i->...", V[..., :2], xhat)[..., None] * xhat
    v = v_rad[..., None] * xhat + V_tan / sinc[..., None]
    center = rho[..., None] == 0.0
    if np.any(center):
        v = np.where(center, V[..., :2], v)
    return v


def sphere_exp(p: np.ndarray, v: np.ndarray, radius: float) -> np.ndarray:
    """Closed-form exponential map in the sphere chart (great circles)."""
    p = np.asarray(p, dtype=float)
    v = np.atleast_2d(np.asarray(v, dtype=float))
    P = _sphere_embed(p, radius)
    V = _sphere_push_tangent(np.broadcast_to(p, v.shape), v, radius)
    speed = np.linalg.norm(V, axis=-1)
    ang = speed / radius
    safe = np.where(speed > 0, speed, 1.0)
    Q = np.cos(ang)[..., None] * P + radius * np.sin(ang)[..., None] * V / safe[..., None]
    Q = np.where(speed[..., None] > 0, Q, np.broadcast_to(P, Q.shape))
    return _sphere_unembed(Q, radius)


def sphere_log(p: np.ndarray, q: np.ndarray, radius: float) -> np.ndarray:
    p = np.asarray(p, dtype=float)
    single = np.asarray(q).ndim == 1
    q = np.atleast_2d(np.asarray(q, dtype=float))
    P = _sphere_embed(p, radius)[0]
    Q = _sphere_embed(q, radius)
    cosang = np.clip(np.einsum("...i,i->...", Q, P) / radius**2, -1.0, 1.0)
    ang = np.arccos(cosang)
    V = Q - cosang[..., None] * P
    norms = np.linalg.norm(V, axis=-1)
    scale = np.where(norms > 1e-300, radius * ang / np.where(norms > 0, norms, 1.0), 0.0)
    V3 = scale[..., None] * V
    out = _sphere_pull_tangent(np.broadcast_to(p, q.shape), V3, radius)
    return out[0] if single else out


# ---------------------------------------------------------------------------
# normal-coordinate metrics


@dataclass(frozen=True)
class NormalMetric:
    """Rescaled normal-coordinate metric around a center point.

    ``values`` holds the frame components gbar_ij on the polar grid
    (radial_nodes x theta), ``radial_derivs`` the derivative along each ray.
    The evaluator interpolates both to arbitrary radii per ray, which is what
    the shape pullback needs.
    """

    chart: ManifoldChart
    center: np.ndarray
    epsilon: float
    frame: np.ndarray
    r_max: float
    radial_nodes: np.ndarray
    theta: np.ndarray
    values: np.ndarray
    radial_derivs: np.ndarray
    provenance: str

    def __post_init__(self):
        for arr in (self.center, self.frame, self.radial_nodes, self.theta, self.values, self.radial_derivs):
            arr.flags.writeable = False

    @property
    def n_theta(self) -> int:
        return len(self.theta)

    def evaluate(self, radii: np.ndarray):
        """Frame components and their radial derivative at per-ray radii.

        ``radii`` has shape (m, n_theta); returns two arrays (m, n_theta, 2, 2).
        """
        radii = np.asarray(radii, dtype=float)
        if radii.max() > self.r_max + 1e-12:
            raise OutOfRangeError(
                f"requested radius {radii.max():.4g} outside the metric grid ({self.r_max:.4g})"
            )
        if self.provenance == "closed_form":
            return _closed_form_normal_metric(self.chart, self.epsilon, self.theta, radii)
        g = np.empty(radii.shape + (2, 2))
        dg = np.empty_like(g)
        for k in range(radii.shape[1]):
            B = barycentric_matrix(self.radial_nodes, radii[:, k])
            g[:, k] = np.einsum("qm,mab->qab", B, self.values[:, k])
            dg[:, k] = np.einsum("qm,mab->qab", B, self.radial_derivs[:, k])
        return g, dg

    def chart_points(self, radii: np.ndarray, n_steps: Optional[int] = None) -> np.ndarray:
        """Chart coordinates of exp_p(eps * frame * (radius * e(theta)))."""
        radii = np.asarray(radii, dtype=float)
        if self.epsilon == 0.0:
            return np.broadcast_to(self.center, radii.shape + (2,)).copy()
        e = np.stack([np.cos(self.theta), np.sin(self.theta)], axis=-1)
        tangents = self.epsilon * radii[..., None] * np.einsum("ab,tb->ta", self.frame, e)
        return exp_map_batch(self.chart, self.center, tangents, n_steps=n_steps)

    def to_csv(self, path) -> None:
        import csv

        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["r", "theta", "g11", "g12", "g22"])
            for q, r in enumerate(self.radial_nodes):
                for k, t in enumerate(self.theta):
                    v = self.values[q, k]
                    w.writerow([f"{r:.17g}", f"{t:.17g}", f"{v[0,0]:.17g}", f"{v[0,1]:.17g}", f"{v[1,1]:.17g}"])


def _closed_form_normal_metric(chart: ManifoldChart, epsilon: float, theta: np.ndarray, radii: np.ndarray):
    """Exact gbar and its radial derivative for the flat and sphere models."""
    shape = radii.shape + (2, 2)
    if chart.kind == "flat_torus" or epsilon == 0.0:
        return np.broadcast_to(np.eye(2), shape).copy(), np.zeros(shape)
    radius = chart.params["radius"]
    a = epsilon / radius
    u = a * radii
    small = np.abs(u) < 1e-6
    safe = np.where(small, 1.0, u)
    q = np.where(small, 1.0 - u**2 / 3.0 + 2.0 * u**4 / 45.0, (np.sin(safe) / safe) ** 2)
    dq_du = np.where(
        small,
        -2.0 * u / 3.0 + 8.0 * u**3 / 45.0,
        2.0 * np.sin(safe) * (safe * np.cos(safe) - np.sin(safe)) / safe**3,
    )
    ct, st = np.cos(theta), np.sin(theta)
    ortho = np.empty(shape)  # I - xhat xhat^T per ray, constant along the ray
    ortho[..., 0, 0] = st[None, :] ** 2
    ortho[..., 0, 1] = -st[None, :] * ct[None, :]
    ortho[..., 1, 0] = ortho[..., 0, 1]
    ortho[..., 1, 1] = ct[None, :] ** 2
    eye = np.broadcast_to(np.eye(2), shape)
    g = eye + (q - 1.0)[..., None, None] * ortho
    dg = (a * dq_du)[..., None, None] * ortho
    return g, dg


def _jacobi_rhs(chart, x, v, J, K):
    gam = christoffel(chart, x)
    dgam = christoffel_grad(chart, x)
    acc = -np.einsum("...kij,...i,...j->...k", gam, v, v)
    # J, K have shape (..., 2, a) with a indexing the two Jacobi fields
    dK = -2.0 * np.einsum("...kij,...i,...ja->...ka", gam, v, K) - np.einsum(
        "...mkij,...ma,...i,...j->...ka", dgam, J, v, v
    )
    return v, acc, K, dK


def _rk4_jacobi(chart, x, v, J, K, h, n_steps):
    for _ in range(n_steps):
        k1 = _jacobi_rhs(chart, x, v, J, K)
        k2 = _jacobi_rhs(chart, x + 0.5 * h * k1[0], v + 0.5 * h * k1[1], J + 0.5 * h * k1[2], K + 0.5 * h * k1[3])
        k3 = _jacobi_rhs(chart, x + 0.5 * h * k2[0], v + 0.5 * h * k2[1], J + 0.5 * h * k2[2], K + 0.5 * h * k2[3])
        k4 = _jacobi_rhs(chart, x + h * k3[0], v + h * k3[1], J + h * k3[2], K + h * k3[3])
        x = x + (h / 6.0) * (k1[0] + 2 * k2[0] + 2 * k3[0] + k4[0])
        v = v + (h / 6.0) * (k1[1] + 2 * k2[1] + 2 * k3[1] + k4[1])
        J = J + (h / 6.0) * (k1[2] + 2 * k2[2] + 2 * k3[2] + k4[2])
        K = K + (h / 6.0) * (k1[3] + 2 * k2[3] + 2 * k3[3] + k4[3])
    return x, v, J, K


def normal_metric(
    chart: ManifoldChart,
    p: np.ndarray,
    epsilon: float,
    n_theta: int = 64,
    n_radial: int = 48,
    r_max: float = 1.3,
    frame_angle: float = 0.0,
    steps_per_unit: float = 64.0,
) -> NormalMetric:
    """Rescaled normal-coordinate metric gbar_ij(x) = g_ij(eps x) on the polar
    grid |x| <= r_max.

    Closed forms for the flat torus and the round sphere; otherwise the
    differential of the exponential map is obtained by integrating Jacobi
    fields along the radial geodesics with a fixed fourth-order scheme.
    At epsilon = 0 the metric is the identity (the blow-up limit).
    """
    p = np.asarray(p, dtype=float)
    if epsilon < 0:
        raise PreconditionError("epsilon must be nonnegative")
    if epsilon * r_max >= chart.injectivity_radius_lower_bound:
        raise PreconditionError(
            f"epsilon * r_max = {epsilon * r_max:.4g} reaches the injectivity bound"
        )
    frame = chart.orthonormal_frame(p, frame_angle)
    nodes = r_max * (1.0 + chebyshev_lobatto(n_radial)[::-1]) / 2.0  # ascending, 0 .. r_max
    theta = 2.0 * np.pi * np.arange(n_theta) / n_theta
    closed = chart.kind in ("flat_torus", "round_sphere") or epsilon == 0.0
    if closed:
        node_radii = np.broadcast_to(nodes[:, None], (len(nodes), n_theta)).copy()
        vals, derivs = _closed_form_normal_metric(chart, float(epsilon), theta, node_radii)
        return NormalMetric(
            chart=chart,
            center=p.copy(),
            epsilon=float(epsilon),
            frame=frame,
            r_max=float(r_max),
            radial_nodes=nodes,
            theta=theta,
            values=vals,
            radial_derivs=derivs,
            provenance="closed_form",
        )

    e = np.stack([np.cos(theta), np.sin(theta)], axis=-1)
    w_dirs = np.einsum("ab,tb->ta", frame, e)  # unit frame directions per ray
    V = epsilon * r_max * w_dirs
    x = np.broadcast_to(p, (n_theta, 2)).copy()
    v = V.copy()
    J = np.zeros((n_theta, 2, 2))
    K = np.stack([frame] * n_theta, axis=0)  # K[t, :, a] = frame column a
    values = np.empty((len(nodes), n_theta, 2, 2))
    values[0] = np.eye(2)
    t_prev = 0.0
    for q in range(1, len(nodes)):
        t_q = nodes[q] / r_max
        seg = t_q - t_prev
        n_steps = max(1, int(np.ceil(seg * r_max * steps_per_unit)))
        x, v, J, K = _rk4_jacobi(chart, x, v, J, K, seg / n_steps, n_steps)
        t_prev = t_q
        Jt = J / t_q  # columns: d exp at radius nodes[q] applied to frame vectors
        dets = Jt[:, 0, 0] * Jt[:, 1, 1] - Jt[:, 0, 1] * Jt[:, 1, 0]
        if np.any(dets <= 0.0):
            raise MetricDegeneracyError(
                f"conjugate point detected at radius {nodes[q] * epsilon:.4g} (Jacobi determinant <= 0)"
            )
        gx = chart.metric(x)
        values[q] = np.einsum("tia,tij,tjb->tab", Jt, gx, Jt)
    D = (2.0 / r_max) * chebyshev_diff_matrix(len(nodes) - 1)[::-1, ::-1]  # d/dr on ascending nodes
    derivs = np.einsum("qm,mtab->qtab", D, values)
    return NormalMetric(
        chart=chart,
        center=p.copy(),
        epsilon=float(epsilon),
        frame=frame,
        r_max=float(r_max),
        radial_nodes=nodes,
        theta=theta,
        values=values,
        radial_derivs=derivs,
        provenance="jacobi_integrated",
    )


# ---------------------------------------------------------------------------
# boundary shapes and the pulled-back metric


def smoothstep_cutoff(r: np.ndarray) -> np.ndarray:
    """Quintic smoothstep: 0 for r <= 1/2, 1 for r >= 3/4."""
    s = np.clip((np.asarray(r, dtype=float) - 0.5) / 0.25, 0.0, 1.0)
    return s**3 * (10.0 - 15.0 * s + 6.0 * s**2)


def smoothstep_cutoff_derivative(r: np.ndarray) -> np.ndarray:
    r = np.asarray(r, dtype=float)
    s = np.clip((r - 0.5) / 0.25, 0.0, 1.0)
    inside = (r > 0.5) & (r < 0.75)
    return np.where(inside, 30.0 * s**2 * (1.0 - s) ** 2 / 0.25, 0.0)


@dataclass(frozen=True)
class BoundaryShape:
    """Dilation v0 plus a zero-mean angular perturbation vbar of the disk boundary."""

    v0: float
    vbar: AngularFourier

    def __post_init__(self):
        if self.vbar.cos_coeffs[0] != 0.0:
            raise ValueError("vbar must have exactly zero mean (mode-0 coefficient)")
        theta = 2.0 * np.pi * np.arange(max(256, 8 * (self.vbar.max_mode + 1))) / max(256, 8 * (self.vbar.max_mode + 1))
        if np.min(1.0 + self.v0 + self.vbar.evaluate(theta)) <= 0.0:
            raise ValueError("shape degenerates: 1 + v0 + vbar(theta) must stay positive")

    @staticmethod
    def from_coeffs(v0: float, cos_coeffs, sin_coeffs) -> "BoundaryShape":
        cos = np.asarray(cos_coeffs, dtype=float).copy()
        cos[0] = 0.0
        return BoundaryShape(float(v0), AngularFourier(cos, np.asarray(sin_coeffs, dtype=float)))

    @staticmethod
    def zero(j_max: int = 1, v0: float = 0.0) -> "BoundaryShape":
        return BoundaryShape(float(v0), AngularFourier.zero(j_max))

    def with_v0(self, v0: float) -> "BoundaryShape":
        return BoundaryShape(float(v0), self.vbar)

    def total(self, theta: np.ndarray) -> np.ndarray:
        return 1.0 + self.v0 + self.vbar.evaluate(theta)

    def max_radius(self) -> float:
        theta = 2.0 * np.pi * np.arange(512) / 512
        return float(self.total(theta).max())


@dataclass(frozen=True)
class PulledBackMetric:
    """Polar components of ghat = beta^* gbar on the unit-disk grid."""

    grid: PolarDiskGrid
    shape: BoundaryShape
    normal_metric: NormalMetric
    g_rr: np.ndarray
    g_rtheta: np.ndarray
    g_thetatheta: np.ndarray
    det_polar: np.ndarray
    sqrt_det_cart: np.ndarray
    inv_rr: np.ndarray
    inv_rtheta: np.ndarray
    inv_thetatheta: np.ndarray
    cart: np.ndarray
    # geometry of the shape map, kept for analytic shape derivatives
    R: np.ndarray
    R_r: np.ndarray
    R_theta: np.ndarray
    gbar_cart: np.ndarray
    dgbar_cart: np.ndarray

    def __post_init__(self):
        for name in (
            "g_rr",
            "g_rtheta",
            "g_thetatheta",
            "det_polar",
            "sqrt_det_cart",
            "inv_rr",
            "inv_rtheta",
            "inv_thetatheta",
            "cart",
            "R",
            "R_r",
            "R_theta",
            "gbar_cart",
            "dgbar_cart",
        ):
            getattr(self, name).flags.writeable = False

    def chart_points(self) -> np.ndarray:
        """Chart coordinates Y(y) of the grid nodes."""
        return self.normal_metric.chart_points(self.R)

    def boundary_length_element(self) -> np.ndarray:
        """sqrt(ghat_thetatheta) on the boundary ring r = 1."""
        return np.sqrt(self.g_thetatheta[0])

    def to_csv(self, path) -> None:
        import csv

        xy = self.grid.nodes_xy()
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["r", "theta", "g11", "g12", "g22", "sqrt_det"])
            for i in range(self.grid.n_r):
                for k in range(self.grid.n_theta):
                    c = self.cart[i, k]
                    w.writerow(
                        [
                            f"{self.grid.r[i]:.17g}",
                            f"{self.grid.theta[k]:.17g}",
                            f"{c[0,0]:.17g}",
                            f"{c[0,1]:.17g}",
                            f"{c[1,1]:.17g}",
                            f"{self.sqrt_det_cart[i,k]:.17g}",
                        ]
                    )


def _shape_map_data(grid: PolarDiskGrid, shape: BoundaryShape):
    r = grid.r[:, None]
    chi = smoothstep_cutoff(grid.r)[:, None]
    dchi = smoothstep_cutoff_derivative(grid.r)[:, None]
    vb = shape.vbar.evaluate(grid.theta)[None, :]
    vbp = shape.vbar.derivative().evaluate(grid.theta)[None, :]
    m = 1.0 + shape.v0 + chi * vb
    R = r * m
    R_r = m + r * dchi * vb
    R_theta = r * chi * vbp
    return R, R_r, R_theta


def pullback_shape_metric(nm: NormalMetric, shape: BoundaryShape, grid: PolarDiskGrid) -> PulledBackMetric:
    """ghat = beta^* gbar on the disk grid, with the Jacobian of beta computed
    analytically from the Fourier representation of vbar."""
    if grid.n_theta != nm.n_theta:
        raise ValueError("disk grid and normal metric must share the angular grid")
    R, R_r, R_theta = _shape_map_data(grid, shape)
    if R.max() > nm.r_max:
        raise OutOfRangeError(
            f"shape radius {R.max():.4g} exceeds the normal-metric grid ({nm.r_max:.4g})"
        )
    gbar, dgbar = nm.evaluate(R)
    ct, st = np.cos(grid.theta), np.sin(grid.theta)
    er = np.stack([ct, st], axis=-1)
    et = np.stack([-st, ct], axis=-1)
    g_RR = np.einsum("ti,qtij,tj->qt", er, gbar, er)
    g_Rt_unit = np.einsum("ti,qtij,tj->qt", er, gbar, et)
    g_tt_unit = np.einsum("ti,qtij,tj->qt", et, gbar, et)
    h_RT = R * g_Rt_unit
    h_TT = R**2 * g_tt_unit
    g_rr = R_r**2 * g_RR
    g_rt = R_r * R_theta * g_RR + R_r * h_RT
    g_tt = R_theta**2 * g_RR + 2.0 * R_theta * h_RT + h_TT
    det = g_rr * g_tt - g_rt**2
    if np.any(det <= 0.0) or np.any(g_rr <= 0.0):
        raise MetricDegeneracyError("pulled-back metric lost positive definiteness")
    r = grid.r[:, None]
    sqrt_det_cart = np.sqrt(det) / r
    inv_rr = g_tt / det
    inv_rt = -g_rt / det
    inv_tt = g_rr / det
    cart = (
        g_rr[..., None, None] * np.einsum("ti,tj->tij", er, er)[None]
        + (g_rt / r)[..., None, None]
        * (np.einsum("ti,tj->tij", er, et) + np.einsum("ti,tj->tij", et, er))[None]
        + (g_tt / r**2)[..., None, None] * np.einsum("ti,tj->tij", et, et)[None]
    )
    return PulledBackMetric(
        grid=grid,
        shape=shape,
        normal_metric=nm,
        g_rr=g_rr,
        g_rtheta=g_rt,
        g_thetatheta=g_tt,
        det_polar=det,
        sqrt_det_cart=sqrt_det_cart,
        inv_rr=inv_rr,
        inv_rtheta=inv_rt,
        inv_thetatheta=inv_tt,
        cart=cart,
        R=R,
        R_r=R_r,
        R_theta=R_theta,
        gbar_cart=gbar,
        dgbar_cart=dgbar,
    )


@dataclass(frozen=True)
class ShapeMetricDerivative:
    """Directional derivative of the pulled-back metric in a shape direction."""

    d_rr: np.ndarray
    d_rtheta: np.ndarray
    d_thetatheta: np.ndarray
    d_det: np.ndarray
    d_sqrt_det_cart: np.ndarray


def metric_shape_derivative(pm: PulledBackMetric, dv0: float, dvbar: AngularFourier) -> ShapeMetricDerivative:
    """d/dt of the polar metric components along shape(t) = shape + t (dv0, dvbar).

    Analytic: beta is affine in the shape, and the base-metric dependence
    enters through the stored radial derivative of gbar along each ray.
    """
    grid = pm.grid
    r = grid.r[:, None]
    chi = smoothstep_cutoff(grid.r)[:, None]
    dchi = smoothstep_cutoff_derivative(grid.r)[:, None]
    dvb = dvbar.evaluate(grid.theta)[None, :]
    dvbp = dvbar.derivative().evaluate(grid.theta)[None, :]
    dm = dv0 + chi * dvb
    dR = r * dm
    dR_r = dm + r * dchi * dvb
    dR_theta = r * chi * dvbp
    ct, st = np.cos(grid.theta), np.sin(grid.theta)
    er = np.stack([ct, st], axis=-1)
    et = np.stack([-st, ct], axis=-1)
    gbar, dgbar = pm.gbar_cart, pm.dgbar_cart
    dg_dir = dgbar * dR[..., None, None]
    g_RR = np.einsum("ti,qtij,tj->qt", er, gbar, er)
    g_Rt_unit = np.einsum("ti,qtij,tj->qt", er, gbar, et)
    g_tt_unit = np.einsum("ti,qtij,tj->qt", et, gbar, et)
    d_RR = np.einsum("ti,qtij,tj->qt", er, dg_dir, er)
    d_Rt_unit = np.einsum("ti,qtij,tj->qt", er, dg_dir, et)
    d_tt_unit = np.einsum("ti,qtij,tj->qt", et, dg_dir, et)
    R, R_r, R_t = pm.R, pm.R_r, pm.R_theta
    h_RT = R * g_Rt_unit
    d_hRT = dR * g_Rt_unit + R * d_Rt_unit
    d_hTT = 2.0 * R * dR * g_tt_unit + R**2 * d_tt_unit
    d_rr = 2.0 * R_r * dR_r * g_RR + R_r**2 * d_RR
    d_rt = (
        (dR_r * R_t + R_r * dR_theta) * g_RR
        + R_r * R_t * d_RR
        + dR_r * h_RT
        + R_r * d_hRT
    )
    d_tt = (
        2.0 * R_t * dR_theta * g_RR
        + R_t**2 * d_RR
        + 2.0 * dR_theta * h_RT
        + 2.0 * R_t * d_hRT
        + d_hTT
    )
    d_det = d_rr * pm.g_thetatheta + pm.g_rr * d_tt - 2.0 * pm.g_rtheta * d_rt
    d_sqrt_det_cart = d_det / (2.0 * r**2 * pm.sqrt_det_cart)
    return ShapeMetricDerivative(d_rr, d_rt, d_tt, d_det, d_sqrt_det_cart)


def volume(pm: PulledBackMetric) -> float:
    """Metric volume of the unit disk, by Clenshaw-Curtis x trapezoid quadrature."""
    return pm.grid.integrate_area(pm.sqrt_det_cart)


def volume_shape_derivative(pm: PulledBackMetric, dv0: float, dvbar: AngularFourier) -> float:
    d = metric_shape_derivative(pm, dv0, dvbar)
    return pm.grid.integrate_area(d.d_sqrt_det_cart)
