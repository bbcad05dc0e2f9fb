"""Command dispatch, JSON configuration, and structured artifact output.

Subcommands: profile | modes | solve | extremal | landscape | validate.
Configuration comes from a JSON file (--config); command-specific flags
override the file.  Artifacts are CSV for grids and curves, JSON for
summaries, and a self-contained SVG for the optional landscape heatmap.
All output is byte-identical across repeated runs of the same config.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from . import acceptance
from .errors import PreconditionError
from .geometry import ManifoldChart, conformal_torus, flat_torus, round_sphere
from .grids import AngularFourier, PolarDiskGrid, RadialGrid
from .dirichlet_solver import solve_dirichlet_volume
from .extremal_solver import solve_extremal
from .landscape import _local_minima_candidates, energy, refine_critical_point, scan
from .mode_analysis import verify_assumption_a
from .nonlinearity import BUILTINS, NonlinearitySpec
from .radial_profile import solve_radial_profile

__all__ = ["RunConfig", "load_config", "run", "main"]


class ConfigError(ValueError):
    def __init__(self, messages):
        super().__init__("; ".join(messages))
        self.messages = list(messages)


CONFIG_SCHEMA = {
    "type": "object",
    "properties": {
        "chart": {
            "type": "object",
            "properties": {
                "kind": {"enum": ["flat_torus", "round_sphere", "conformal_torus"]},
                "periods": {
                    "type": "array", "items": {"type": "number", "exclusiveMinimum": 0},
                    "minItems": 2, "maxItems": 2,
                },
                "radius": {"type": "number", "exclusiveMinimum": 0},
                "amplitude": {"type": "number", "exclusiveMinimum": -1, "exclusiveMaximum": 1},
            },
            "required": ["kind"],
            "additionalProperties": False,
        },
        "nonlinearity": {
            "type": "object",
            "properties": {
                "name": {"enum": sorted(BUILTINS)},
                "c": {"type": "number"},
                "q": {"type": "number"},
                "amplitude": {"type": "number"},
            },
            "required": ["name"],
            "additionalProperties": False,
        },
        "numerics": {
            "type": "object",
            "properties": {
                "n_r": {"type": "integer", "minimum": 4},
                "n_theta": {"type": "integer", "minimum": 8},
                "j_max": {"type": "integer", "minimum": 2},
                "n_radial": {"type": "integer", "minimum": 16},
                "n_radial_metric": {"type": "integer", "minimum": 8},
                "r_max": {"type": "number", "exclusiveMinimum": 1},
                "lambda_bar": {"type": "number", "exclusiveMinimum": 0},
                "dimension": {"type": "integer", "minimum": 2},
                "epsilon": {"type": "number", "exclusiveMinimum": 0},
                "epsilons": {"type": "array", "items": {"type": "number", "exclusiveMinimum": 0}},
                "grid": {"type": "array", "items": {"type": "integer", "minimum": 1},
                         "minItems": 2, "maxItems": 2},
                "tolerances": {
                    "type": "object",
                    "properties": {
                        "pde": {"type": "number"},
                        "volume": {"type": "number"},
                        "trace_rel": {"type": "number"},
                        "center": {"type": "number"},
                    },
                    "additionalProperties": False,
                },
            },
            "additionalProperties": False,
        },
        "point": {"type": "array", "items": {"type": "number"}, "minItems": 2, "maxItems": 2},
        "vbar": {"type": "array", "items": {"type": "number"}},
        "drift": {"type": "array", "items": {"type": "number"}, "minItems": 2, "maxItems": 2},
        "bounds": {"type": "array"},
        "svg": {"type": "boolean"},
        "refine": {"type": "boolean"},
    },
    "required": ["chart", "nonlinearity"],
    "additionalProperties": False,
}

_TOL_DEFAULTS = {"pde": 1e-10, "volume": 1e-12, "trace_rel": 1e-8, "center": 1e-10}


@dataclass(frozen=True)
class RunConfig:
    """Validated run configuration: chart, nonlinearity, numerical parameters."""

    raw: dict
    n_r: int = 48
    n_theta: int = 64
    j_max: int = 16
    n_radial: int = 64
    n_radial_metric: int = 48
    r_max: float = 1.3
    lambda_bar: float = 1.0
    dimension: int = 2
    epsilon: Optional[float] = None
    grid_shape: tuple = (8, 8)
    tolerances: dict = field(default_factory=lambda: dict(_TOL_DEFAULTS))

    @staticmethod
    def from_dict(cfg: dict) -> "RunConfig":
        errors = []
        try:
            import jsonschema

            validator = jsonschema.Draft202012Validator(CONFIG_SCHEMA)
            for err in sorted(validator.iter_errors(cfg), key=lambda e: list(e.absolute_path)):
                pointer = "/" + "/".join(str(x) for x in err.absolute_path)
                errors.append(f"{pointer}: {err.message}")
        except ImportError:  # validation degrades to the invariant checks below
            pass
        num = dict(cfg.get("numerics", {}))
        tol = dict(_TOL_DEFAULTS)
        tol.update(num.pop("tolerances", {}))
        values = {
            "n_r": num.get("n_r", 48),
            "n_theta": num.get("n_theta", 64),
            "j_max": num.get("j_max", 16),
            "n_radial": num.get("n_radial", 64),
            "n_radial_metric": num.get("n_radial_metric", 48),
            "r_max": num.get("r_max", 1.3),
            "lambda_bar": num.get("lambda_bar", 1.0),
            "dimension": num.get("dimension", 2),
            "epsilon": num.get("epsilon"),
            "grid_shape": tuple(num.get("grid", (8, 8))),
        }
        for name, value in tol.items():
            if not value > 0:
                errors.append(f"/numerics/tolerances/{name}: must be positive")
        if values["n_theta"] % 2 != 0:
            errors.append("/numerics/n_theta: must be even")
        if values["j_max"] > values["n_theta"] // 2 - 2:
            errors.append("/numerics/j_max: must be <= n_theta/2 - 2 (dealiasing headroom)")
        if errors:
            raise ConfigError(errors)
        return RunConfig(raw=cfg, tolerances=tol, **values)

    def disk_grid(self) -> PolarDiskGrid:
        return PolarDiskGrid(self.n_r, self.n_theta)

    def radial_grid(self) -> RadialGrid:
        return RadialGrid(self.n_radial)


def build_chart(chart_cfg: dict) -> ManifoldChart:
    kind = chart_cfg["kind"]
    if kind == "flat_torus":
        return flat_torus(tuple(chart_cfg.get("periods", (2 * np.pi, 2 * np.pi))))
    if kind == "round_sphere":
        return round_sphere(chart_cfg.get("radius", 1.0))
    if kind == "conformal_torus":
        return conformal_torus(
            chart_cfg.get("amplitude", 0.1),
            tuple(chart_cfg.get("periods", (2 * np.pi, 2 * np.pi))),
        )
    raise ConfigError([f"/chart/kind: unknown kind {kind!r}"])


def build_spec(nl_cfg: dict) -> NonlinearitySpec:
    name = nl_cfg["name"]
    factory = BUILTINS[name]
    kwargs = {k: v for k, v in nl_cfg.items() if k != "name"}
    return factory(**kwargs)


def load_config(path) -> dict:
    with open(path) as fh:
        return json.load(fh)


# ---------------------------------------------------------------------------
# artifact writers (deterministic formatting)


def _fmt(x) -> str:
    if isinstance(x, (bool, np.bool_)):
        return "1" if x else "0"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return f"{float(x):.17g}"


def _write_csv(path: Path, header, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(x) if not isinstance(x, str) else x for x in row])


def _write_json(path: Path, payload: dict) -> None:
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")


_VIRIDIS = [
    (0.267, 0.005, 0.329),
    (0.283, 0.141, 0.458),
    (0.254, 0.265, 0.530),
    (0.207, 0.372, 0.553),
    (0.164, 0.471, 0.558),
    (0.128, 0.567, 0.551),
    (0.135, 0.659, 0.518),
    (0.267, 0.749, 0.441),
    (0.478, 0.821, 0.318),
    (0.741, 0.873, 0.150),
    (0.993, 0.906, 0.144),
]


def _colormap(t: float) -> str:
    t = min(max(t, 0.0), 1.0)
    x = t * (len(_VIRIDIS) - 1)
    i = min(int(x), len(_VIRIDIS) - 2)
    frac = x - i
    rgb = [(1 - frac) * _VIRIDIS[i][k] + frac * _VIRIDIS[i + 1][k] for k in range(3)]
    return "#%02x%02x%02x" % tuple(int(round(255 * c)) for c in rgb)


def write_landscape_svg(path: Path, lg) -> None:
    """Heatmap of the energy with the defect field as a quiver overlay."""
    n1, n2 = lg.J.shape
    cell = 40
    W, H = n1 * cell, n2 * cell
    vals = lg.J[np.isfinite(lg.J)]
    lo, hi = (float(vals.min()), float(vals.max())) if len(vals) else (0.0, 1.0)
    span = hi - lo if hi > lo else 1.0
    a_max = float(np.nanmax(np.linalg.norm(lg.a, axis=-1))) if np.isfinite(lg.a).any() else 0.0
    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" '
        f'viewBox="0 0 {W} {H}">'
    ]
    for i in range(n1):
        for j in range(n2):
            x, y = i * cell, H - (j + 1) * cell
            if np.isfinite(lg.J[i, j]):
                color = _colormap((lg.J[i, j] - lo) / span)
            else:
                color = "#888888"
            parts.append(f'<rect x="{x}" y="{y}" width="{cell}" height="{cell}" fill="{color}"/>')
    if a_max > 0:
        scale = 0.45 * cell / a_max
        for i in range(n1):
            for j in range(n2):
                if not np.isfinite(lg.a[i, j]).all():
                    continue
                cx, cy = (i + 0.5) * cell, H - (j + 0.5) * cell
                dx, dy = lg.a[i, j, 0] * scale, -lg.a[i, j, 1] * scale
                parts.append(
                    f'<line x1="{cx:.2f}" y1="{cy:.2f}" x2="{cx + dx:.2f}" y2="{cy + dy:.2f}" '
                    f'stroke="#ffffff" stroke-width="1.5"/>'
                )
    for cp in lg.critical_points:
        # map chart coordinates back to cells through the stored grid points
        d = np.linalg.norm(lg.points - cp.point, axis=-1)
        i, j = np.unravel_index(np.argmin(d), d.shape)
        cx, cy = (i + 0.5) * cell, H - (j + 0.5) * cell
        parts.append(
            f'<circle cx="{cx:.2f}" cy="{cy:.2f}" r="{0.2 * cell:.2f}" fill="none" '
            f'stroke="#ff2222" stroke-width="2"/>'
        )
    parts.append("</svg>")
    path.write_text("\n".join(parts) + "\n")


# ---------------------------------------------------------------------------
# commands


def _point_from(cfg: dict, args) -> np.ndarray:
    if getattr(args, "point", None):
        return np.array([float(x) for x in args.point.split(",")], dtype=float)
    return np.asarray(cfg.get("point", (0.0, 0.0)), dtype=float)


def _epsilon_from(rc: RunConfig, args) -> float:
    eps = getattr(args, "epsilon", None)
    if eps is None:
        eps = rc.epsilon
    if eps is None:
        raise ConfigError(["/numerics/epsilon: required for this command"])
    return float(eps)


def _vbar_from(cfg: dict, args, j_max: int) -> AngularFourier:
    raw = getattr(args, "vbar", None)
    seq = [float(x) for x in raw.split(",")] if raw else list(cfg.get("vbar", []))
    cos = np.zeros(j_max + 1)
    sin = np.zeros(j_max + 1)
    for idx, val in enumerate(seq):
        j = idx // 2 + 1
        if j > j_max:
            raise ConfigError(["/vbar: more coefficient pairs than j_max"])
        if idx % 2 == 0:
            cos[j] = val
        else:
            sin[j] = val
    return AngularFourier(cos, sin)


def _drift_from(cfg: dict, args):
    raw = getattr(args, "drift", None)
    vec = [float(x) for x in raw.split(",")] if raw else cfg.get("drift")
    if vec is None:
        return None
    vec = np.asarray(vec, dtype=float)

    def constant_field(x):
        return np.broadcast_to(vec, np.asarray(x).shape).copy()

    return constant_field


def cmd_profile(cfg: dict, rc: RunConfig, out: Path, args) -> int:
    spec = build_spec(cfg["nonlinearity"])
    p = _point_from(cfg, args)
    prof = solve_radial_profile(
        spec, p, rc.dimension, rc.lambda_bar, grid=rc.radial_grid()
    )
    dphi = prof.grid.D @ prof.phi
    _write_csv(out / "profile.csv", ["r", "phi", "dphi"],
               zip(prof.grid.r, prof.phi, dphi))
    _write_json(out / "profile.json", {
        "lambda_bar": prof.lambda_bar,
        "c1": prof.c1,
        "c2": prof.c2,
        "residual": prof.residual,
        "dimension": prof.dimension,
        "point": list(p),
    })
    return 0


def cmd_modes(cfg: dict, rc: RunConfig, out: Path, args) -> int:
    spec = build_spec(cfg["nonlinearity"])
    p = _point_from(cfg, args)
    prof = solve_radial_profile(spec, p, rc.dimension, rc.lambda_bar, grid=rc.radial_grid())
    spectrum = verify_assumption_a(prof, j_max=rc.j_max)
    rows = []
    for j in range(rc.j_max + 1):
        alpha = "" if j == 0 else _fmt(spectrum.alphas[j])
        rows.append([j, _fmt(spectrum.kernel_values[j]), alpha])
    _write_csv(out / "modes.csv", ["j", "kernel_value", "alpha_j"], rows)
    _write_json(out / "modes.json", {
        "invertible": spectrum.invertible,
        "alpha1_zero": spectrum.alpha1_zero,
        "alphas_nonzero_j_ge_2": spectrum.alphas_nonzero_j_ge_2,
        "tail_certified": spectrum.tail_certified,
        "potential_bound": spectrum.potential_bound,
        "min_alpha_j_ge_2": spectrum.min_alpha_j_ge_2,
        "all_pass": spectrum.all_pass,
    })
    return 0


def cmd_solve(cfg: dict, rc: RunConfig, out: Path, args) -> int:
    from .geometry import normal_metric, volume

    chart = build_chart(cfg["chart"])
    spec = build_spec(cfg["nonlinearity"])
    p = _point_from(cfg, args)
    eps = _epsilon_from(rc, args)
    vbar = _vbar_from(cfg, args, rc.j_max)
    drift = _drift_from(cfg, args)
    grid = rc.disk_grid()
    nm = normal_metric(chart, p, eps, n_theta=rc.n_theta, n_radial=rc.n_radial_metric, r_max=rc.r_max)
    sol = solve_dirichlet_volume(
        nm, spec, vbar, drift=drift, grid=grid, lambda_bar=rc.lambda_bar,
        tol=rc.tolerances["pde"], vol_tol=rc.tolerances["volume"],
    )
    rows = []
    for i in range(grid.n_r):
        for k in range(grid.n_theta):
            rows.append([grid.r[i], grid.theta[k], sol.u[i, k]])
    _write_csv(out / "solution.csv", ["r", "theta", "u"], rows)
    _write_json(out / "solution.json", {
        "v0": sol.v0,
        "lambda_bar": sol.lambda_bar,
        "residual_norm": sol.residual_norm,
        "newton_iterations": sol.newton_iterations,
        "volume": volume(sol.metric),
        "epsilon": eps,
        "point": list(p),
    })
    return 0


def cmd_extremal(cfg: dict, rc: RunConfig, out: Path, args) -> int:
    chart = build_chart(cfg["chart"])
    spec = build_spec(cfg["nonlinearity"])
    p = _point_from(cfg, args)
    eps = _epsilon_from(rc, args)
    drift = _drift_from(cfg, args)
    ex = solve_extremal(
        chart, spec, p, eps, drift=drift, lambda_bar=rc.lambda_bar, j_max=rc.j_max,
        grid=rc.disk_grid(), n_radial_metric=rc.n_radial_metric,
        trace_tol_rel=rc.tolerances["trace_rel"], center_tol=rc.tolerances["center"],
        r_max=rc.r_max,
    )
    curve = ex.boundary_curve(256)
    theta = 2 * np.pi * np.arange(256) / 256
    _write_csv(out / "boundary.csv", ["theta", "x1", "x2"],
               zip(theta, curve[:, 0], curve[:, 1]))
    _write_json(out / "extremal.json", {
        "point": list(p),
        "epsilon": eps,
        "v0": ex.shape.v0,
        "vbar_cos": list(ex.vbar.cos_coeffs),
        "vbar_sin": list(ex.vbar.sin_coeffs),
        "a": list(ex.a),
        "b": ex.b,
        "residuals": ex.residuals,
        "lambda_bar": ex.lambda_bar,
        "lambda_physical": ex.lambda_physical,
        "outer_iterations": ex.outer_iterations,
        "warnings": list(ex.warnings),
    })
    return 0


def _scan_shard(payload):
    cfg = payload["config"]
    rc = RunConfig.from_dict(cfg)
    chart = build_chart(cfg["chart"])
    spec = build_spec(cfg["nonlinearity"])
    lg = scan(
        chart, spec, payload["epsilon"], 0, 0,
        points=payload["points"], lambda_bar=rc.lambda_bar, j_max=rc.j_max,
        grid=rc.disk_grid(), refine=False,
    )
    return payload["index"], lg.J, lg.a, lg.converged


def cmd_landscape(cfg: dict, rc: RunConfig, out: Path, args) -> int:
    chart = build_chart(cfg["chart"])
    spec = build_spec(cfg["nonlinearity"])
    eps = _epsilon_from(rc, args)
    if getattr(args, "grid", None):
        n1, n2 = (int(x) for x in args.grid.lower().split("x"))
    else:
        n1, n2 = rc.grid_shape
    bounds = cfg.get("bounds")
    workers = max(1, int(getattr(args, "workers", 1) or 1))
    refine = cfg.get("refine", True)
    from .landscape import _grid_points

    pts = _grid_points(chart, n1, n2, bounds)
    if workers == 1:
        lg = scan(chart, spec, eps, n1, n2, bounds=bounds, lambda_bar=rc.lambda_bar,
                  j_max=rc.j_max, grid=rc.disk_grid(), refine=refine, points=pts)
    else:
        # shard rows across the pool; warm-start chains stay inside shards
        blocks = np.array_split(np.arange(n1), min(workers, n1))
        payloads = [
            {"config": cfg, "epsilon": eps, "points": pts[idx], "index": k}
            for k, idx in enumerate(blocks) if len(idx)
        ]
        J = np.full((n1, n2), np.nan)
        avec = np.full((n1, n2, 2), np.nan)
        conv = np.zeros((n1, n2), dtype=bool)
        with ProcessPoolExecutor(max_workers=workers) as pool:
            for k, Jk, ak, ck in pool.map(_scan_shard, payloads):
                idx = blocks[k]
                J[idx], avec[idx], conv[idx] = Jk, ak, ck
        criticals = []
        if refine:
            cands = _local_minima_candidates(
                np.linalg.norm(avec, axis=-1), conv, chart.periods is not None
            )
            for (i, j) in cands:
                try:
                    criticals.append(refine_critical_point(
                        chart, spec, eps, pts[i, j], lambda_bar=rc.lambda_bar,
                        j_max=rc.j_max, grid=rc.disk_grid(),
                    ))
                except Exception:
                    continue
        from .landscape import LandscapeGrid

        lg = LandscapeGrid(epsilon=eps, points=pts.copy(), J=J, a=avec, converged=conv,
                           critical_points=tuple(criticals), lambda_bar=rc.lambda_bar)
    rows = []
    for i in range(lg.J.shape[0]):
        for j in range(lg.J.shape[1]):
            rows.append([
                i, j, lg.points[i, j, 0], lg.points[i, j, 1],
                lg.J[i, j], lg.a[i, j, 0], lg.a[i, j, 1], bool(lg.converged[i, j]),
            ])
    _write_csv(out / "landscape.csv",
               ["i", "j", "x1", "x2", "J", "a1", "a2", "converged"], rows)
    _write_json(out / "critical_points.json", {
        "epsilon": eps,
        "lambda_bar": rc.lambda_bar,
        "lambda_physical": rc.lambda_bar / eps**2,
        "critical_points": [
            {
                "point": list(cp.point),
                "a_norm": cp.a_norm,
                "energy": cp.energy,
                "iterations": cp.iterations,
                "degenerate_directions": [list(d) for d in cp.degenerate_directions],
            }
            for cp in lg.critical_points
        ],
    })
    if cfg.get("svg") or getattr(args, "svg", False):
        write_landscape_svg(out / "landscape.svg", lg)
    return 0


def cmd_validate(cfg: dict, rc: RunConfig, out: Path, args) -> int:
    lines = []

    def emit(line):
        lines.append(line)
        print(line)

    results = acceptance.run_all(printer=emit)
    passed = sum(r.passed for r in results)
    emit(f"{passed}/{len(results)} criteria passed")
    _write_json(out / "validate.json", {
        "passed": passed,
        "total": len(results),
        "criteria": [
            {"number": r.number, "name": r.name, "passed": r.passed, "detail": r.detail}
            for r in results
        ],
    })
    return 0 if passed == len(results) else 1


COMMANDS = {
    "profile": cmd_profile,
    "modes": cmd_modes,
    "solve": cmd_solve,
    "extremal": cmd_extremal,
    "landscape": cmd_landscape,
    "validate": cmd_validate,
}


def run(command: str, cfg: dict, out_dir, args=None) -> int:
    """Dispatch a command against a validated configuration."""
    rc = RunConfig.from_dict(cfg)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    ns = args if args is not None else argparse.Namespace()
    return COMMANDS[command](cfg, rc, out, ns)


def _build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="extremal-domains",
        description="Solvers for overdetermined boundary problems on perturbed geodesic balls",
    )
    ap.add_argument("--config", type=str, default=None, help="JSON configuration file")
    ap.add_argument("--out", type=str, default="out", help="output directory")
    ap.add_argument("--workers", type=int, default=1)
    ap.add_argument("--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        if name in ("solve", "extremal", "landscape"):
            p.add_argument("--epsilon", type=float, default=None)
        if name in ("profile", "modes", "solve", "extremal"):
            p.add_argument("--point", type=str, default=None, help="x1,x2")
        if name == "solve":
            p.add_argument("--vbar", type=str, default=None,
                           help="cos1,sin1,cos2,sin2,... coefficients")
            p.add_argument("--drift", type=str, default=None, help="constant field a,b")
        if name == "extremal":
            p.add_argument("--drift", type=str, default=None, help="constant field a,b")
        if name == "landscape":
            p.add_argument("--grid", type=str, default=None, help="N1xN2")
            p.add_argument("--svg", action="store_true")
    return ap


_DEFAULT_CONFIG = {
    "chart": {"kind": "flat_torus"},
    "nonlinearity": {"name": "constant_one"},
    "numerics": {},
}


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config) if args.config else dict(_DEFAULT_CONFIG)
        if args.verbose:
            print(f"running {args.command} -> {args.out}", file=sys.stderr)
        code = run(args.command, cfg, args.out, args)
    except ConfigError as err:
        print(json.dumps({"error": "config", "messages": err.messages}), file=sys.stderr)
        return 2
    except Exception as err:  # runtime failures: machine-readable envelope
        print(json.dumps({"error": type(err).__name__, "message": str(err)}), file=sys.stderr)
        return 1
    return code


if __name__ == "__main__":
    sys.exit(main())
