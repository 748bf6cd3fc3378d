"""Problem files, presets and result emitters.

Problem files are JSON::

    {
      "manifold": {"type": "sphere", "radius": 1.0},
      "K": 32,
      "sigma": 0.0001,
      "boundary": {"type": "natural"},
      "interpolation": [{"t": "0", "point": [1.0, 0.0]}, ...],
      "solver": {"tol_grad": 1e-08}
    }

Interpolation entries carry ``point`` (chart coordinates), ``shape_csv``
(closed polygon for rods) or ``obj`` (keyframe mesh for shells).  Times are
exact fractions (``"1/4"``) or decimals.  Relative paths are resolved against
the problem file's directory.
"""

from __future__ import annotations

import copy
import csv
import hashlib
import io
import json
import math
import platform
from dataclasses import dataclass
from fractions import Fraction
from pathlib import Path

import jsonschema
import numpy as np

from ._files import atomic_write_text, fmt
from .embedded import BUILTIN_SURFACES, EmbeddedManifold, builtin_surface
from .rods import RodManifold, RodShape
from .shells import ShellManifold, ShellMesh, ShellParams, read_obj, write_obj
from .solver import InterpolationProblem, ProblemError, SolverSettings, as_fraction

TOOL = "riemspline"
VERSION = "0.1.0"

_NUM = {"type": "number"}
_TIME = {"oneOf": [{"type": "number"}, {"type": "string", "pattern": r"^\s*-?\d+(\s*/\s*\d+|\.\d*)?\s*$"}]}

PROBLEM_SCHEMA = {
    "type": "object",
    "required": ["manifold", "K", "interpolation"],
    "additionalProperties": False,
    "properties": {
        "manifold": {
            "type": "object",
            "required": ["type"],
            "properties": {
                "type": {"enum": sorted(BUILTIN_SURFACES) + ["rod", "shell"]},
                "radius": _NUM, "R": _NUM, "r": _NUM, "perimeter": _NUM,
                "dim": {"type": "integer", "minimum": 1},
                "order": {"type": "integer", "minimum": 1},
                "nodes": {"type": "integer", "minimum": 4},
                "delta": _NUM, "c_min": _NUM,
                "lam": _NUM, "mu": _NUM, "zeta": _NUM, "eta": _NUM,
                "rho": _NUM, "max_diameter": _NUM,
            },
            "additionalProperties": False,
        },
        "K": {"type": "integer", "minimum": 2},
        "sigma": {"type": "number", "minimum": 0},
        "boundary": {
            "type": "object",
            "required": ["type"],
            "properties": {
                "type": {"enum": ["natural", "hermite", "periodic"]},
                "v0": {"type": "array", "items": _NUM},
                "v1": {"type": "array", "items": _NUM},
            },
            "additionalProperties": False,
        },
        "interpolation": {
            "type": "array",
            "minItems": 1,
            "items": {
                "type": "object",
                "required": ["t"],
                "properties": {
                    "t": _TIME,
                    "point": {"type": "array", "items": _NUM, "minItems": 1},
                    "shape_csv": {"type": "string"},
                    "obj": {"type": "string"},
                },
                "additionalProperties": False,
                "oneOf": [
                    {"required": ["point"]},
                    {"required": ["shape_csv"]},
                    {"required": ["obj"]},
                ],
            },
        },
        "solver": {
            "type": "object",
            "properties": {
                "tol_grad": {"type": "number", "exclusiveMinimum": 0},
                "tol_mid": {"type": "number", "exclusiveMinimum": 0},
                "max_iters": {"type": "integer", "minimum": 0},
                "memory": {"type": "integer", "minimum": 1},
                "restarts": {"type": "integer", "minimum": 0},
                "seed": {"type": ["integer", "null"]},
            },
            "additionalProperties": False,
        },
        "unwrap_periodic": {"type": "boolean"},
        "name": {"type": "string"},
    },
}


class InputError(ValueError):
    """Malformed problem file or command-line input."""


def _time_str(t):
    f = as_fraction(t)
    return str(f.numerator) if f.denominator == 1 else f"{f.numerator}/{f.denominator}"


@dataclass
class ProblemFile:
    """A validated, normalized problem description."""

    spec: dict
    base_dir: Path = Path(".")

    def to_dict(self):
        """Normalized JSON-ready dict (times as exact fraction strings)."""
        return copy.deepcopy(self.spec)

    def to_json(self):
        return json.dumps(self.spec, indent=2, sort_keys=True) + "\n"

    @property
    def name(self):
        return self.spec.get("name", "problem")

    def override(self, K=None, sigma=None, tol_grad=None, tol_mid=None, seed=None):
        spec = self.to_dict()
        if K is not None:
            spec["K"] = int(K)
        if sigma is not None:
            spec["sigma"] = float(sigma)
        solver = spec.setdefault("solver", {})
        if tol_grad is not None:
            solver["tol_grad"] = float(tol_grad)
        if tol_mid is not None:
            solver["tol_mid"] = float(tol_mid)
        if seed is not None:
            solver["seed"] = int(seed)
        if not solver:
            spec.pop("solver")
        return parse_problem(spec, self.base_dir)


def parse_problem(source, base_dir=None):
    """Validate and normalize a problem from a path, JSON string or dict.

    Raises
    ------
    InputError
        On schema violations, unreadable files or invalid times.
    """
    if isinstance(source, dict):
        raw = copy.deepcopy(source)
        base = Path(base_dir or ".")
    else:
        path = Path(source)
        try:
            raw = json.loads(path.read_text(encoding="utf-8"))
        except FileNotFoundError as exc:
            raise InputError(f"problem file not found: {path}") from exc
        except json.JSONDecodeError as exc:
            raise InputError(f"{path}: invalid JSON ({exc})") from exc
        base = Path(base_dir) if base_dir else path.parent
    try:
        jsonschema.validate(raw, PROBLEM_SCHEMA)
    except jsonschema.ValidationError as exc:
        loc = "/".join(str(p) for p in exc.absolute_path) or "<root>"
        raise InputError(f"problem file invalid at {loc}: {exc.message}") from exc
    spec = raw
    try:
        for item in spec["interpolation"]:
            item["t"] = _time_str(item["t"])
    except ProblemError as exc:
        raise InputError(str(exc)) from exc
    spec.setdefault("sigma", 1e-4)
    spec.setdefault("boundary", {"type": "natural"})
    spec["sigma"] = float(spec["sigma"])
    return ProblemFile(spec, base)


def serialize_problem(pf):
    return pf.to_json()


def _read_polygon_csv(path):
    rows = []
    with open(path, encoding="utf-8") as fh:
        for rec in csv.reader(fh):
            if not rec or rec[0].strip().startswith("#"):
                continue
            try:
                rows.append([float(rec[0]), float(rec[1])])
            except (ValueError, IndexError):
                if rows:
                    raise InputError(f"{path}: malformed row {rec!r}")
    if len(rows) < 3:
        raise InputError(f"{path}: a polygon needs at least 3 points")
    return np.array(rows)


def build_model(pf):
    """Instantiate the manifold backend of a problem file."""
    m = dict(pf.spec["manifold"])
    kind = m.pop("type")
    try:
        if kind in BUILTIN_SURFACES:
            return builtin_surface(kind, **m)
        if kind == "rod":
            return RodManifold(**m)
        if kind == "shell":
            params = ShellParams(**{k: m.pop(k) for k in ("lam", "mu", "zeta", "eta") if k in m})
            first = next((it for it in pf.spec["interpolation"] if "obj" in it), None)
            if first is None:
                raise InputError("shell problems need obj keyframes")
            V, T = read_obj(pf.base_dir / first["obj"])
            return ShellManifold(ShellMesh(V, T), params, **m)
    except TypeError as exc:
        raise InputError(f"manifold {kind}: {exc}") from exc
    except (OSError, ValueError) as exc:
        if isinstance(exc, InputError):
            raise
        raise InputError(f"manifold {kind}: {exc}") from exc
    raise InputError(f"unknown manifold type {kind!r}")


def _datum(pf, model, item):
    if "point" in item:
        return np.array(item["point"], dtype=float)
    if "shape_csv" in item:
        if not isinstance(model, RodManifold):
            raise InputError("shape_csv data requires a rod manifold")
        return RodShape.from_polygon(_read_polygon_csv(pf.base_dir / item["shape_csv"]), model.order).dofs
    if not isinstance(model, ShellManifold):
        raise InputError("obj data requires a shell manifold")
    try:
        V, T = read_obj(pf.base_dir / item["obj"])
    except OSError as exc:
        raise InputError(str(exc)) from exc
    if V.shape != model.mesh.vertices.shape or not np.array_equal(T, model.mesh.triangles):
        raise InputError(f"{item['obj']}: connectivity differs from the first keyframe")
    return model.to_reduced(V)


def build_problem(pf, model=None):
    """Return ``(model, InterpolationProblem)`` for a problem file."""
    model = model or build_model(pf)
    spec = pf.spec
    data = [_datum(pf, model, it) for it in spec["interpolation"]]
    for i, row in enumerate(data):
        if row.shape != (model.dof_count,):
            raise InputError(
                f"interpolation[{i}] has {row.size} coordinates, {model.name} needs {model.dof_count}"
            )
    bc = spec["boundary"]
    settings = SolverSettings(**spec.get("solver", {}))
    try:
        prob = InterpolationProblem(
            spec["K"], [it["t"] for it in spec["interpolation"]], np.array(data),
            bc=bc["type"], sigma=spec["sigma"], v0=bc.get("v0"), v1=bc.get("v1"),
            settings=settings, unwrap_periodic=spec.get("unwrap_periodic", True),
        )
    except ProblemError as exc:
        raise InputError(str(exc)) from exc
    return model, prob


# -- presets --------------------------------------------------------------------


def preset(name):
    """Built-in problem files: ``sphere3``, ``sphere-demo``, ``torus-demo``, ``euclid3``."""
    if name == "sphere3":
        spec = {
            "name": "sphere3",
            "manifold": {"type": "sphere", "radius": 1.0},
            "K": 8,
            "sigma": 1e-4,
            "interpolation": [
                {"t": "0", "point": [1.0, 0.0]},
                {"t": "1/2", "point": [1.5, 1.0]},
                {"t": "1", "point": [1.0, 2.0]},
            ],
        }
    elif name == "sphere-demo":
        spec = {
            "name": "sphere-demo",
            "manifold": {"type": "sphere", "radius": 1.0},
            "K": 32,
            "sigma": 0.0,
            "interpolation": [
                {"t": "0", "point": [0.9, 0.0]},
                {"t": "1/2", "point": [1.9, 1.2]},
                {"t": "1", "point": [1.0, 2.6]},
            ],
        }
    elif name == "torus-demo":
        spec = {
            "name": "torus-demo",
            "manifold": {"type": "torus", "R": 2.0, "r": 1.0},
            "K": 32,
            "sigma": 0.0,
            "interpolation": [
                {"t": "0", "point": [0.0, 0.0]},
                {"t": "1/2", "point": [1.6, 2.2]},
                {"t": "1", "point": [3.4, 0.6]},
            ],
        }
    elif name == "euclid3":
        spec = {
            "name": "euclid3",
            "manifold": {"type": "euclidean", "dim": 1},
            "K": 16,
            "sigma": 0.0,
            "interpolation": [
                {"t": "0", "point": [0.0]},
                {"t": "1/2", "point": [1.0]},
                {"t": "1", "point": [0.0]},
            ],
        }
    else:
        raise InputError(f"unknown preset {name!r}; choose sphere3, sphere-demo, torus-demo, euclid3")
    return parse_problem(spec)


# -- emitters ---------------------------------------------------------------------


def _embedded_columns(model, points):
    if isinstance(model, EmbeddedManifold):
        return model.embed(points), [f"x{i}" for i in range(model.param.embed_dim)]
    if isinstance(model, ShellManifold):
        X = model.to_full(points).reshape(len(points), -1)
        return X, [f"v{i // 3}{'xyz'[i % 3]}" for i in range(X.shape[1])]
    return np.zeros((len(points), 0)), []


def curve_csv(model, solution):
    """Rows ``k, t, chart coordinates..., embedded coordinates...``."""
    P = solution.points
    if P.size == 0:
        raise InputError("empty solution")
    K = len(P) - 1
    emb, names = _embedded_columns(model, P)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["k", "t"] + [f"y{i}" for i in range(P.shape[1])] + names)
    for k in range(K + 1):
        t = Fraction(k, K)
        w.writerow([k, fmt(float(t))] + [fmt(v) for v in P[k]] + [fmt(v) for v in emb[k]])
    return buf.getvalue()


def diagnostics_csv(solution):
    """Rows ``k, W[y_k, z_k]``."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["k", "W"])
    for k, val in enumerate(solution.diagnostics, start=1):
        w.writerow([k, fmt(val)])
    return buf.getvalue()


def read_curve_csv(path):
    """Chart coordinates from a curve CSV, shape ``(K+1, d)``."""
    with open(path, encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    header, body = rows[0], rows[1:]
    cols = [i for i, h in enumerate(header) if h.startswith("y")]
    if not body:
        raise InputError(f"{path}: empty curve")
    return np.array([[float(r[i]) for i in cols] for r in body])


def run_report(pf, solution, command, extra=None):
    """Machine-readable summary with a provenance block."""
    problem_json = pf.to_json()
    report = {
        "tool": TOOL,
        "version": VERSION,
        "command": command,
        "problem": pf.to_dict(),
        "status": solution.status,
        "converged": solution.converged,
        "message": solution.message,
        "energies": {k: float(v) for k, v in solution.energies().items()},
        "sigma": solution.sigma,
        "K": solution.path.K,
        "diagnostics": [float(v) for v in solution.diagnostics],
        "iterations": solution.iterations,
        "grad_norm": solution.grad_norm,
        "tol_grad": solution.tol_grad,
        "midpoint_residual_max": float(np.max(solution.midpoint_residuals, initial=0.0)),
        "timings": {"solve_seconds": solution.elapsed},
        "metadata": solution.metadata,
        "provenance": {
            "python": platform.python_version(),
            "numpy": np.__version__,
            "scipy": __import__("scipy").__version__,
            "platform": platform.platform(),
            "problem_sha256": hashlib.sha256(problem_json.encode()).hexdigest(),
        },
    }
    if extra:
        report.update(extra)
    return report


def write_json(path, obj):
    return atomic_write_text(path, json.dumps(obj, indent=2, sort_keys=True, allow_nan=True) + "\n")


def svg_text(model, solution, key_indices=(), nodes=256):
    """One polyline per time step; key shapes in orange, the rest green."""
    if not isinstance(model, RodManifold):
        raise InputError("SVG output requires a rod solution")
    P = solution.points
    if P.size == 0:
        raise InputError("empty solution")
    curves = [RodShape.from_dofs(p).sample(nodes) for p in P]
    allpts = np.vstack(curves)
    lo, hi = allpts.min(axis=0), allpts.max(axis=0)
    pad = 0.05 * float(max(hi - lo)) + 1e-9
    x0, y0 = lo - pad
    w, h = hi - lo + 2 * pad
    stroke = 0.004 * float(max(w, h))
    keys = set(int(k) for k in key_indices)
    out = [
        '<?xml version="1.0" encoding="UTF-8"?>',
        f'<svg xmlns="http://www.w3.org/2000/svg" viewBox="{fmt(x0)} {fmt(-(y0 + h))} {fmt(w)} {fmt(h)}">',
    ]
    for k, c in enumerate(curves):
        color = "#e67e22" if k in keys else "#27ae60"
        width = 2 * stroke if k in keys else stroke
        pts = " ".join(f"{fmt(x)},{fmt(-y)}" for x, y in np.vstack([c, c[:1]]))
        out.append(
            f'<polyline data-k="{k}" fill="none" stroke="{color}" stroke-width="{fmt(width)}" points="{pts}"/>'
        )
    out.append("</svg>")
    return "\n".join(out) + "\n"


def emit_svg(path, model, solution, key_indices=()):
    text = svg_text(model, solution, key_indices)
    return atomic_write_text(path, text)


def emit_obj_sequence(directory, model, solution):
    """Write ``frame_0000.obj``, ... for a shell solution; returns the paths."""
    if not isinstance(model, ShellManifold):
        raise InputError("OBJ sequences require a shell solution")
    P = solution.points
    if P.size == 0:
        raise InputError("empty solution")
    directory = Path(directory)
    paths = []
    for k, p in enumerate(P):
        paths.append(write_obj(directory / f"frame_{k:04d}.obj", model.to_full(p), model.mesh.triangles))
    return paths


def write_solution(out_dir, pf, model, problem, solution, command):
    """Write curve/diagnostics CSV, report JSON and backend-specific renders."""
    out = Path(out_dir)
    files = {
        "curve": atomic_write_text(out / "curve.csv", curve_csv(model, solution)),
        "diagnostics": atomic_write_text(out / "diagnostics.csv", diagnostics_csv(solution)),
    }
    if isinstance(model, RodManifold):
        files["svg"] = emit_svg(out / "curves.svg", model, solution, problem.indices)
    if isinstance(model, ShellManifold):
        files["frames"] = emit_obj_sequence(out / "frames", model, solution)[0].parent
    files["report"] = write_json(out / "report.json", run_report(pf, solution, command))
    return files


def finite_or_none(x):
    return x if x is None or math.isfinite(x) else None
