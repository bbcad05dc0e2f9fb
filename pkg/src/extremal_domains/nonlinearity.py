"""Position-dependent nonlinearities f(p, z) and their energy densities.

A spec bundles f, its z-derivatives, and the antiderivative
F(p, z) = int_0^z f(p, s) ds used by the energy functional.  Callables take
chart points of shape (..., 2) and broadcast over z.  Derivatives are
supplied analytically; there is no automatic differentiation here.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .errors import ConsistencyError

__all__ = [
    "NonlinearitySpec",
    "constant_one",
    "linear_plus_quadratic",
    "periodic_forcing",
    "ClassificationReport",
    "check_class",
]


@dataclass(frozen=True)
class NonlinearitySpec:
    """f(x, z) with z-derivatives and antiderivative F(x, z).

    ``class_tag`` is one of ``positive_at_zero`` (f(x, 0) > 0 everywhere),
    ``bifurcation`` (f(x, 0) = 0, f_z(x, 0) = c > 0 constant, f_zz(x, 0) != 0),
    or ``custom``.  ``position_independent`` lets solvers reuse frozen-point
    data across centers.
    """

    f: Callable[[np.ndarray, np.ndarray], np.ndarray]
    f_z: Callable[[np.ndarray, np.ndarray], np.ndarray]
    F: Callable[[np.ndarray, np.ndarray], np.ndarray]
    class_tag: str = "custom"
    f_zz: Optional[Callable[[np.ndarray, np.ndarray], np.ndarray]] = None
    position_independent: bool = False
    name: str = "custom"
    params: dict = field(default_factory=dict)


def constant_one() -> NonlinearitySpec:
    """f = 1; the model overdetermined (torsion-type) problem."""
    return NonlinearitySpec(
        f=lambda x, z: np.broadcast_to(1.0, np.broadcast(np.asarray(x)[..., 0], z).shape).copy(),
        f_z=lambda x, z: np.zeros(np.broadcast(np.asarray(x)[..., 0], z).shape),
        f_zz=lambda x, z: np.zeros(np.broadcast(np.asarray(x)[..., 0], z).shape),
        F=lambda x, z: np.broadcast_to(z, np.broadcast(np.asarray(x)[..., 0], z).shape).copy(),
        class_tag="positive_at_zero",
        position_independent=True,
        name="constant_one",
    )


def linear_plus_quadratic(c: float, q: float) -> NonlinearitySpec:
    """f = c z + q z^2 with constant coefficients; bifurcation class for c > 0, q != 0."""
    tag = "bifurcation" if c > 0 and q != 0 else "custom"
    return NonlinearitySpec(
        f=lambda x, z: c * z + q * np.asarray(z) ** 2 + 0.0 * np.asarray(x)[..., 0],
        f_z=lambda x, z: c + 2.0 * q * z + 0.0 * np.asarray(x)[..., 0],
        f_zz=lambda x, z: 2.0 * q + 0.0 * np.asarray(z) + 0.0 * np.asarray(x)[..., 0],
        F=lambda x, z: c * np.asarray(z) ** 2 / 2.0 + q * np.asarray(z) ** 3 / 3.0 + 0.0 * np.asarray(x)[..., 0],
        class_tag=tag,
        position_independent=True,
        name="linear_plus_quadratic",
        params={"c": float(c), "q": float(q)},
    )


def periodic_forcing(amplitude: float = 0.25) -> NonlinearitySpec:
    """f = 1 + amplitude * sin(x1); z-independent periodic forcing."""
    a = float(amplitude)
    return NonlinearitySpec(
        f=lambda x, z: 1.0 + a * np.sin(np.asarray(x)[..., 0]) + 0.0 * np.asarray(z),
        f_z=lambda x, z: np.zeros(np.broadcast(np.asarray(x)[..., 0], z).shape),
        f_zz=lambda x, z: np.zeros(np.broadcast(np.asarray(x)[..., 0], z).shape),
        F=lambda x, z: (1.0 + a * np.sin(np.asarray(x)[..., 0])) * np.asarray(z),
        class_tag="positive_at_zero",
        position_independent=False,
        name="periodic_forcing",
        params={"amplitude": a},
    )


BUILTINS = {
    "constant_one": constant_one,
    "linear_plus_quadratic": linear_plus_quadratic,
    "periodic_forcing": periodic_forcing,
}


@dataclass(frozen=True)
class ClassificationReport:
    passed: bool
    class_tag: str
    inf_f_at_zero: float
    c_at_zero: Optional[float]
    f_zz_at_zero_range: tuple
    failures: tuple
    max_derivative_deviation: float
    worst_point: Optional[np.ndarray]


def check_class(spec: NonlinearitySpec, sample_points: np.ndarray, z_samples=None) -> ClassificationReport:
    """Verify the class invariants of a nonlinearity on a chart sample.

    Checks F(x, 0) = 0, dF/dz = f by central differences (tolerance 1e-6),
    and the tagged class conditions; returns pass/fail with witnesses.
    """
    pts = np.atleast_2d(np.asarray(sample_points, dtype=float))
    if z_samples is None:
        z_samples = np.linspace(0.0, 0.5, 6)
    failures = []

    F0 = np.asarray(spec.F(pts, np.zeros(len(pts))))
    if np.abs(F0).max() > 1e-14:
        failures.append("F(x, 0) != 0")

    h = 1e-5
    worst_dev, worst_pt = 0.0, None
    for z in z_samples:
        dF = (np.asarray(spec.F(pts, z + h)) - np.asarray(spec.F(pts, z - h))) / (2.0 * h)
        dev = np.abs(dF - np.asarray(spec.f(pts, z + 0.0 * dF)))
        i = int(np.argmax(dev))
        if dev.flat[i] > worst_dev:
            worst_dev, worst_pt = float(dev.flat[i]), pts[i]
    if worst_dev > 1e-6:
        raise ConsistencyError(
            f"dF/dz deviates from f by {worst_dev:.3e}", max_deviation=worst_dev, location=worst_pt
        )

    f0 = np.asarray(spec.f(pts, np.zeros(len(pts))))
    fz0 = np.asarray(spec.f_z(pts, np.zeros(len(pts))))
    inf_f0 = float(f0.min())
    c0 = None
    fzz_range = (np.nan, np.nan)
    if spec.class_tag == "positive_at_zero":
        if inf_f0 <= 0.0:
            failures.append(f"inf f(x, 0) = {inf_f0:.3e} <= 0")
    elif spec.class_tag == "bifurcation":
        if np.abs(f0).max() > 1e-12:
            failures.append("f(x, 0) != 0")
        c0 = float(fz0.mean())
        if fz0.max() - fz0.min() > 1e-10:
            failures.append("f_z(x, 0) is not constant over the sample")
        if c0 <= 0.0:
            failures.append(f"f_z(x, 0) = {c0:.3e} <= 0")
        if spec.f_zz is None:
            failures.append("bifurcation class requires f_zz")
        else:
            fzz0 = np.asarray(spec.f_zz(pts, np.zeros(len(pts))))
            fzz_range = (float(fzz0.min()), float(fzz0.max()))
            if np.any(np.abs(fzz0) < 1e-12):
                failures.append("f_zz(x, 0) vanishes at a sample point")
    return ClassificationReport(
        passed=not failures,
        class_tag=spec.class_tag,
        inf_f_at_zero=inf_f0,
        c_at_zero=c0,
        f_zz_at_zero_range=fzz_range,
        failures=tuple(failures),
        max_derivative_deviation=worst_dev,
        worst_point=worst_pt,
    )
