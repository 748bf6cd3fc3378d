"""Command-line front end.

Exit codes: 0 success/converged, 1 numerical failure (or a failed check),
2 input error, 3 optimizer did not converge.
"""

from __future__ import annotations

import argparse
import logging
import math
import os
import sys
import warnings
from pathlib import Path
from types import SimpleNamespace

from . import io as rio
from ._files import atomic_write_text, fmt
from .checks import BACKENDS, GRADCHECK_TOL, gradcheck_suite
from .continuum import convergence_study, rate_table_csv
from .embedded import dirichlet_sweep
from .manifold import ManifoldError
from .rods import RodManifold
from .shells import ShellManifold
from .solver import ProblemError, solve_geodesic, solve_spline

EXIT_OK, EXIT_NUMERIC, EXIT_INPUT, EXIT_NONCONV = 0, 1, 2, 3

logger = logging.getLogger("riemspline")


def _add_problem_args(p, out_required=True):
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--problem", type=Path, help="JSON problem file")
    src.add_argument("--preset", help="built-in problem (sphere3, sphere-demo, torus-demo, euclid3)")
    p.add_argument("--out", type=Path, required=out_required, help="output directory")
    p.add_argument("--k", type=int, help="override the number of time steps K")
    p.add_argument("--sigma", type=float, help="override the path-energy weight")
    p.add_argument("--tol-grad", type=float)
    p.add_argument("--tol-mid", type=float)
    p.add_argument("--threads", type=int, default=1,
                   help="recorded only; work is vectorized within one process")
    p.add_argument("--seed", type=int, help="seed for perturbed restarts")


def build_parser():
    parser = argparse.ArgumentParser(prog="riemspline", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    for name, helptext in (("geodesic", "discrete geodesic interpolation"),
                           ("spline", "discrete spline interpolation")):
        _add_problem_args(sub.add_parser(name, help=helptext))

    p = sub.add_parser("nonexistence", help="winding-curve energies on the cylinder")
    p.add_argument("--r", type=float, default=(math.sqrt(5) - 1) / 2)
    p.add_argument("--n-max", type=int, default=1000)
    p.add_argument("--out", type=Path, help="write the table as CSV here")

    p = sub.add_parser("gradcheck", help="adjoint gradient vs central differences")
    p.add_argument("--backend", action="append", choices=BACKENDS,
                   help="restrict to a backend (repeatable); default all")
    p.add_argument("--paths", type=int, default=10)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", type=Path, help="write a JSON report here")

    p = sub.add_parser("convergence", help="discrete vs continuous energy rates")
    _add_problem_args(p)
    p.add_argument("--k-list", default="8,16,32,64")

    p = sub.add_parser("render", help="render a saved curve CSV (SVG for rods, OBJ for shells)")
    _add_problem_args(p)
    p.add_argument("--curve", type=Path, required=True)
    return parser


def _load(args):
    pf = rio.preset(args.preset) if args.preset else rio.parse_problem(args.problem)
    return pf.override(K=args.k, sigma=args.sigma, tol_grad=args.tol_grad,
                       tol_mid=args.tol_mid, seed=args.seed)


def _solve(args, kind):
    pf = _load(args)
    model, problem = rio.build_problem(pf)
    solver = solve_spline if kind == "spline" else solve_geodesic
    sol = solver(model, problem)
    files = rio.write_solution(args.out, pf, model, problem, sol, kind)
    print(f"{kind}: status={sol.status} iterations={sol.iterations} "
          f"F={fmt(sol.spline_energy)} E={fmt(sol.path_energy)} |g|={sol.grad_norm:.3e}")
    for key, path in files.items():
        print(f"  {key}: {path}")
    return EXIT_OK if sol.converged else EXIT_NONCONV


def cmd_nonexistence(args):
    if not 0.0 < args.r < 1.0:
        raise rio.InputError(f"r must lie in (0, 1), got {args.r}")
    if args.n_max < 1:
        raise rio.InputError("n-max must be at least 1")
    records = dirichlet_sweep(args.r, args.n_max)
    lines = ["n,m,energy"] + [f"{r['n']},{r['m']},{fmt(r['energy'])}" for r in records]
    text = "\n".join(lines) + "\n"
    if args.out:
        atomic_write_text(args.out, text)
    sys.stdout.write(text)
    if records[-1]["energy"] == 0.0:
        last = records[-1]
        print(f"note: m + 1/2 = r n holds exactly at (m, n) = ({last['m']}, {last['n']}), so the "
              "energy vanishes; an infimum without a minimizer needs irrational r.")
    return EXIT_OK


def cmd_gradcheck(args):
    backends = tuple(args.backend) if args.backend else BACKENDS
    results = gradcheck_suite(backends, args.paths, args.seed)
    ok = True
    for r in results:
        flag = "PASS" if r["passed"] else "FAIL"
        print(f"{flag} {r['backend']}: max rel. err {r['max_rel_err']:.3e} "
              f"(tol {GRADCHECK_TOL:g}, {len(r['errors'])} paths, {r['seconds']:.2f}s)")
        ok &= r["passed"]
    if args.out:
        rio.write_json(args.out, {"tool": rio.TOOL, "version": rio.VERSION,
                                  "tolerance": GRADCHECK_TOL, "results": results})
    return EXIT_OK if ok else EXIT_NUMERIC


def cmd_convergence(args):
    pf = _load(args)
    model, problem = rio.build_problem(pf)
    try:
        K_list = [int(k) for k in args.k_list.split(",")]
    except ValueError as exc:
        raise rio.InputError(f"--k-list: {exc}") from exc
    study = convergence_study(model, problem, K_list)
    text = rate_table_csv(study)
    atomic_write_text(Path(args.out) / "rates.csv", text)
    rio.write_json(Path(args.out) / "convergence.json", {
        "tool": rio.TOOL, "version": rio.VERSION, "problem": pf.to_dict(),
        "rows": study["rows"], "slope": study["slope"], "slope_E": study["slope_E"],
        "exact": study["exact"], "decreasing": study["decreasing"],
    })
    sys.stdout.write(text)
    if study["exact"]:
        print("differences are exact zeros; slope check skipped")
        return EXIT_OK
    print(f"slope {study['slope']:.3f}, strictly decreasing: {study['decreasing']}")
    if not all(r["status"] == "converged" for r in study["rows"]):
        return EXIT_NONCONV
    return EXIT_OK if study["decreasing"] and study["slope"] <= -0.4 else EXIT_NUMERIC


def cmd_render(args):
    pf = _load(args)
    model, problem = rio.build_problem(pf)
    points = rio.read_curve_csv(args.curve)
    if points.shape[1] != model.dof_count:
        raise rio.InputError(f"{args.curve}: {points.shape[1]} chart columns, model needs {model.dof_count}")
    sol = SimpleNamespace(points=points)
    if isinstance(model, RodManifold):
        K = len(points) - 1
        keys = [int(K * t) for t in problem.times]
        print(rio.emit_svg(Path(args.out) / "curves.svg", model, sol, keys))
    elif isinstance(model, ShellManifold):
        paths = rio.emit_obj_sequence(Path(args.out) / "frames", model, sol)
        print(f"{len(paths)} frames in {paths[0].parent}")
    else:
        raise rio.InputError(f"render supports rod and shell problems, not {model.name}")
    return EXIT_OK


def main(argv=None):
    level = os.environ.get("RIEMSPLINE_LOG", "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING),
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    args = build_parser().parse_args(argv)
    handlers = {
        "geodesic": lambda a: _solve(a, "geodesic"),
        "spline": lambda a: _solve(a, "spline"),
        "nonexistence": cmd_nonexistence,
        "gradcheck": cmd_gradcheck,
        "convergence": cmd_convergence,
        "render": cmd_render,
    }
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("default")
            return handlers[args.command](args)
    except (rio.InputError, ProblemError) as exc:
        print(f"riemspline: input error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except ManifoldError as exc:
        print(f"riemspline: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except OSError as exc:
        print(f"riemspline: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
