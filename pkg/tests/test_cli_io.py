import json
import math
import re

import numpy as np
import pytest
from hypothesis import HealthCheck, given, settings
from hypothesis import strategies as st

from riemspline import io as rio
from riemspline.cli import main
from riemspline.embedded import EmbeddedManifold
from riemspline.shells import book_mesh, fold_book, read_obj, write_obj


def run(capsys, *argv):
    code = main([str(a) for a in argv])
    out, err = capsys.readouterr()
    return code, out, err


def ellipse_csv(path, a, b, n=200):
    s = np.arange(n) / n
    rows = "\n".join(f"{a * math.cos(2 * math.pi * t)!r},{b * math.sin(2 * math.pi * t)!r}" for t in s)
    path.write_text("x,y\n" + rows + "\n")
    return path.name


@pytest.fixture
def rod_problem(tmp_path):
    spec = {
        "name": "rods",
        "manifold": {"type": "rod", "order": 4, "nodes": 64},
        "K": 8,
        "sigma": 1e-3,
        "interpolation": [
            {"t": "0", "shape_csv": ellipse_csv(tmp_path / "a.csv", 1.0, 1.0)},
            {"t": "1/2", "shape_csv": ellipse_csv(tmp_path / "b.csv", 1.3, 0.8)},
            {"t": "1", "shape_csv": ellipse_csv(tmp_path / "c.csv", 1.0, 1.1)},
        ],
    }
    path = tmp_path / "rods.json"
    path.write_text(json.dumps(spec))
    return path


@pytest.fixture
def shell_problem(tmp_path):
    mesh = book_mesh()
    items = []
    for i, (t, ang) in enumerate((("0", 0.0), ("1/2", 0.6), ("1", 1.2))):
        write_obj(tmp_path / f"key{i}.obj", fold_book(mesh, ang), mesh.triangles)
        items.append({"t": t, "obj": f"key{i}.obj"})
    spec = {"manifold": {"type": "shell", "lam": 1, "mu": 1, "zeta": 1, "eta": 1e-4},
            "K": 4, "interpolation": items}
    path = tmp_path / "shell.json"
    path.write_text(json.dumps(spec))
    return path


# -- problem files ----------------------------------------------------------------


times = st.fractions(min_value=0, max_value=1, max_denominator=16)


@settings(max_examples=40, suppress_health_check=[HealthCheck.function_scoped_fixture])
@given(
    ts=st.lists(times, min_size=1, max_size=4, unique=True),
    sigma=st.floats(0, 10),
    K=st.integers(2, 64),
    name=st.sampled_from(["sphere", "torus", "cylinder"]),
)
def test_parse_serialize_round_trip(ts, sigma, K, name):
    spec = {
        "manifold": {"type": name},
        "K": K,
        "sigma": sigma,
        "interpolation": [{"t": f"{t.numerator}/{t.denominator}", "point": [1.0, float(i)]}
                          for i, t in enumerate(sorted(ts))],
        "solver": {"tol_grad": 1e-7},
    }
    pf = rio.parse_problem(spec)
    again = rio.parse_problem(json.loads(rio.serialize_problem(pf)))
    assert again.to_dict() == pf.to_dict()
    assert rio.serialize_problem(again) == rio.serialize_problem(pf)


def test_decimal_and_fraction_times_normalize():
    spec = {"manifold": {"type": "sphere"}, "K": 8,
            "interpolation": [{"t": 0.25, "point": [1, 0]}, {"t": "3/4", "point": [1, 1]}]}
    pf = rio.parse_problem(spec)
    assert [it["t"] for it in pf.spec["interpolation"]] == ["1/4", "3/4"]


@pytest.mark.parametrize(
    "spec, match",
    [
        ({"K": 8, "interpolation": []}, "manifold"),
        ({"manifold": {"type": "klein"}, "K": 8, "interpolation": [{"t": 0, "point": [0]}]}, "manifold/type"),
        ({"manifold": {"type": "sphere"}, "K": 8, "interpolation": [{"t": "x", "point": [0]}]}, "interpolation/0/t"),
        ({"manifold": {"type": "sphere"}, "K": 8, "interpolation": [{"t": 0}]}, "interpolation/0"),
    ],
)
def test_schema_errors(spec, match):
    with pytest.raises(rio.InputError, match=match):
        rio.parse_problem(spec)


def test_problem_level_errors(tmp_path):
    pf = rio.parse_problem({"manifold": {"type": "sphere"}, "K": 8,
                            "interpolation": [{"t": 0, "point": [1, 0, 0]}]})
    with pytest.raises(rio.InputError, match="3 coordinates"):
        rio.build_problem(pf)
    with pytest.raises(rio.InputError, match="not found"):
        rio.parse_problem(tmp_path / "missing.json")
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    with pytest.raises(rio.InputError, match="invalid JSON"):
        rio.parse_problem(bad)
    with pytest.raises(rio.InputError):
        rio.preset("nope")


# -- solve commands --------------------------------------------------------------


def test_sphere_demo_rows_and_determinism(tmp_path, capsys):
    a, b = tmp_path / "a", tmp_path / "b"
    code, out, _ = run(capsys, "spline", "--preset", "sphere-demo", "--out", a)
    assert code == 0 and "status=converged" in out
    assert run(capsys, "spline", "--preset", "sphere-demo", "--out", b)[0] == 0
    for name in ("curve.csv", "diagnostics.csv"):
        assert (a / name).read_bytes() == (b / name).read_bytes()
    lines = (a / "curve.csv").read_text().splitlines()
    assert len(lines) == 34
    assert lines[0] == "k,t,y0,y1,x0,x1,x2"
    report = json.loads((a / "report.json").read_text())
    assert report["converged"] and report["K"] == 32
    assert report["provenance"]["problem_sha256"]
    assert len(report["diagnostics"]) == 31
    e = report["energies"]
    assert e["regularized_energy"] == pytest.approx(e["spline_energy"] + report["sigma"] * e["path_energy"], rel=1e-12)
    # full round-trip precision in the CSV
    P = rio.read_curve_csv(a / "curve.csv")
    assert P.shape == (33, 2)


def test_malformed_time_exits_2(tmp_path, capsys):
    spec = {"manifold": {"type": "sphere"}, "K": 32,
            "interpolation": [{"t": "0", "point": [1, 0]}, {"t": "1/3", "point": [1.5, 1]},
                              {"t": "1", "point": [1, 2]}]}
    path = tmp_path / "p.json"
    path.write_text(json.dumps(spec))
    out_dir = tmp_path / "out"
    code, out, err = run(capsys, "spline", "--problem", path, "--out", out_dir)
    assert code == 2
    assert "K*t must be an integer" in err and "1/3" in err
    assert not out_dir.exists()
    assert "," not in err.split("input error")[0]


def test_geodesic_command_and_overrides(tmp_path, capsys):
    code, out, _ = run(capsys, "geodesic", "--preset", "sphere3", "--out", tmp_path, "--k", 16, "--sigma", 0.01)
    assert code == 0
    report = json.loads((tmp_path / "report.json").read_text())
    assert report["K"] == 16 and report["sigma"] == 0.01 and report["command"] == "geodesic"


def test_non_converged_exit_3(tmp_path, capsys):
    spec = rio.preset("sphere3").to_dict()
    spec["solver"] = {"max_iters": 0}
    path = tmp_path / "p.json"
    path.write_text(json.dumps(spec))
    code, _, _ = run(capsys, "spline", "--problem", path, "--out", tmp_path / "o")
    assert code == 3
    assert json.loads((tmp_path / "o" / "report.json").read_text())["status"] == "non_converged"


# -- emitters ------------------------------------------------------------------------


def test_rod_spline_svg(rod_problem, tmp_path, capsys):
    out = tmp_path / "rod_out"
    code, _, _ = run(capsys, "spline", "--problem", rod_problem, "--out", out)
    assert code == 0
    svg = (out / "curves.svg").read_text()
    assert svg.count("<polyline") == 9
    assert svg.count("#e67e22") == 3
    assert re.search(r'viewBox="[-\d.e]+ [-\d.e]+ [\d.e]+ [\d.e]+"', svg)
    header = (out / "curve.csv").read_text().splitlines()[0]
    assert header == "k,t," + ",".join(f"y{i}" for i in range(16))
    # re-render from the saved curve
    code, _, _ = run(capsys, "render", "--problem", rod_problem, "--curve", out / "curve.csv",
                     "--out", tmp_path / "re")
    assert code == 0
    assert (tmp_path / "re" / "curves.svg").read_text() == svg


def test_shell_obj_sequence_round_trip(shell_problem, tmp_path, capsys):
    out = tmp_path / "shell_out"
    code, _, _ = run(capsys, "spline", "--problem", shell_problem, "--out", out)
    assert code == 0
    frames = sorted((out / "frames").glob("frame_*.obj"))
    assert [f.name for f in frames] == [f"frame_{k:04d}.obj" for k in range(5)]
    pf = rio.parse_problem(shell_problem)
    model, _ = rio.build_problem(pf)
    P = rio.read_curve_csv(out / "curve.csv")
    for k, f in enumerate(frames):
        V, T = read_obj(f)
        assert np.max(np.abs(V - model.to_full(P[k]))) <= 1e-9
        assert np.array_equal(T, model.mesh.triangles)


def test_empty_solution_writes_nothing(tmp_path):
    pf = rio.preset("sphere3")
    model, prob = rio.build_problem(pf)
    from types import SimpleNamespace

    empty = SimpleNamespace(points=np.zeros((0, 2)), diagnostics=np.zeros(0))
    with pytest.raises(rio.InputError, match="empty"):
        rio.write_solution(tmp_path / "o", pf, model, prob, empty, "spline")
    assert not (tmp_path / "o").exists()
    with pytest.raises(rio.InputError):
        rio.svg_text(model, empty)


def test_render_rejects_surfaces(tmp_path, capsys):
    assert run(capsys, "spline", "--preset", "sphere3", "--out", tmp_path)[0] == 0
    code, _, err = run(capsys, "render", "--preset", "sphere3", "--curve", tmp_path / "curve.csv",
                       "--out", tmp_path / "r")
    assert code == 2 and "render supports" in err


# -- other commands ----------------------------------------------------------------


def test_nonexistence_rational_and_golden(tmp_path, capsys):
    code, out, _ = run(capsys, "nonexistence", "--r", 0.5, "--n-max", 10)
    assert code == 0
    assert "1,0,0.0" in out.splitlines() and "note:" in out
    code, out, _ = run(capsys, "nonexistence", "--out", tmp_path / "t.csv")
    rows = [line.split(",") for line in (tmp_path / "t.csv").read_text().splitlines()[1:]]
    energies = [float(r[2]) for r in rows]
    assert energies == sorted(energies, reverse=True)
    assert energies[-1] < 1e-3
    assert run(capsys, "nonexistence", "--r", 1.5)[0] == 2


def test_gradcheck_command(tmp_path, capsys):
    code, out, _ = run(capsys, "gradcheck", "--backend", "euclidean", "--backend", "torus",
                       "--paths", 3, "--out", tmp_path / "g.json")
    assert code == 0
    assert out.count("PASS") == 2
    rep = json.loads((tmp_path / "g.json").read_text())
    assert [r["backend"] for r in rep["results"]] == ["euclidean", "torus"]


def test_gradcheck_detects_corrupted_derivative(monkeypatch, capsys):
    # the mixed block only enters the adjoint, so midpoints still solve
    original = EmbeddedManifold._d12
    monkeypatch.setattr(EmbeddedManifold, "_d12", lambda self, a, b: 1.01 * original(self, a, b))
    code, out, _ = run(capsys, "gradcheck", "--backend", "sphere", "--paths", 2)
    assert code != 0 and "FAIL sphere" in out


def test_convergence_command(tmp_path, capsys):
    code, out, _ = run(capsys, "convergence", "--preset", "sphere3", "--out", tmp_path)
    assert code == 0
    lines = (tmp_path / "rates.csv").read_text().splitlines()
    assert lines[0] == "K,F_sigma_K,F_sigma_eta,diff,slope" and len(lines) == 5
    summary = json.loads((tmp_path / "convergence.json").read_text())
    assert summary["decreasing"] and summary["slope"] <= -0.4
    code, _, _ = run(capsys, "convergence", "--preset", "sphere3", "--out", tmp_path, "--k-list", "8,x")
    assert code == 2


def test_euclidean_convergence_flags_exact(tmp_path, capsys):
    code, out, _ = run(capsys, "convergence", "--preset", "euclid3", "--out", tmp_path, "--k-list", "8,16,32")
    assert code == 0 and "exact" in out
