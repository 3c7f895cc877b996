import math

import numpy as np
import pytest
import sympy
from hypothesis import given, settings, strategies as st

from cutdg.assembly1d import FluxModel, PenaltyConfig, PiecewiseField, build_operators
from cutdg.geometry1d import build_mesh
from cutdg.harness import (
    PRESETS,
    ExperimentSpec,
    HarnessError,
    alpha_values,
    condition_number,
    condition_number_blocks,
    conservation_error,
    convergence_table,
    error_norms,
    get_preset,
    least_squares_order,
    observed_orders,
    run_experiment,
)
from cutdg.harness.cli import main, read_config
from cutdg.harness.output import csv_text, format_value, line_plot
from cutdg.harness.presets import parallel_map
from cutdg.timestepper import BoundaryDataLadder, RkScheme, integrate

SCALAR = FluxModel.scalar(2.0, 1.0)


# ------------------------------------------------------------------ norms

def _symbolic_norms(f1, f2, xg):
    x = sympy.symbols("x", real=True)
    l2sq = sympy.integrate(f1(x) ** 2, (x, -1, xg)) + sympy.integrate(f2(x) ** 2, (x, xg, 1))
    return float(sympy.sqrt(l2sq))


def test_l2_norm_matches_symbolic_integration():
    # u_h = 0, so the error is the exact solution itself
    mesh = build_mesh(-1.0, 1.0, 40)
    xg = sympy.Rational(3, 1000)
    field = PiecewiseField.empty(mesh, 2)
    field.coef[:] = 0.0
    exact = lambda s, x: np.sin(np.pi * x) + 1.0 if s == 1 else np.exp(x) * np.cos(3 * x)
    nm = error_norms(field, float(xg), exact, points=8)
    ref = _symbolic_norms(lambda x: sympy.sin(sympy.pi * x) + 1, lambda x: sympy.exp(x) * sympy.cos(3 * x), xg)
    assert nm.L2 == pytest.approx(ref, rel=0, abs=1e-10)


def test_default_rule_is_exact_for_polynomial_errors():
    # r + 3 Gauss points integrate the square of a quadratic error exactly
    mesh = build_mesh(-1.0, 1.0, 10)
    field = PiecewiseField.empty(mesh, 1)
    field.coef[:] = 0.0
    nm = error_norms(field, 0.0137, lambda s, x: x**2 if s == 1 else 2 * x - 1)
    ref = _symbolic_norms(lambda x: x**2, lambda x: 2 * x - 1, sympy.Rational(137, 10000))
    assert nm.L2 == pytest.approx(ref, rel=0, abs=1e-14)


def test_l1_and_max_norms():
    mesh = build_mesh(-1.0, 1.0, 40)
    field = PiecewiseField.empty(mesh, 1)
    field.coef[:] = 0.0
    nm = error_norms(field, 1e-4, lambda s, x: np.sin(np.pi * x), points=10)
    assert nm.L1 == pytest.approx(4 / np.pi, abs=1e-10)
    assert nm.L2 == pytest.approx(1.0, abs=1e-10)
    assert nm.Linf == pytest.approx(1.0, abs=1e-15)  # x = 1/2 is a mesh node
    norm = error_norms(field, 1e-4, lambda s, x: np.sin(np.pi * x), points=10, normalize=True)
    assert norm.L1 == pytest.approx(nm.L1 / 2, rel=1e-15)
    assert norm.L2 == pytest.approx(nm.L2 / np.sqrt(2), rel=1e-15)


def test_max_norm_sees_interface_point():
    mesh = build_mesh(-1.0, 1.0, 4)
    field = PiecewiseField.empty(mesh, 0)
    field.coef[:] = 0.0
    xg = 0.123
    spike = lambda s, x: np.where(np.abs(x - xg) < 1e-12, 5.0, 0.0)
    assert error_norms(field, xg, spike, points=2).Linf == 5.0


def test_error_norm_errors():
    mesh = build_mesh(-1.0, 1.0, 4)
    field = PiecewiseField.empty(mesh, 1)
    with pytest.raises(HarnessError):
        error_norms(field, 0.1, lambda s, x: 0 * x)  # coefficients undefined
    field.coef[:] = 0.0
    with pytest.raises(HarnessError):
        error_norms(field, 0.1, lambda s, x: 0 * x, points=0)


# ---------------------------------------------------------- conservation

class _Trace:
    def __init__(self, influx, totals):
        self.influx, self.totals = influx, totals


def test_conservation_error_examples():
    e = conservation_error(_Trace(np.array([0.0, 1.0, 2.5]), np.array([3.0, 4.0, 5.0])))
    np.testing.assert_array_equal(e, [0.0, 0.0, 0.5])
    with pytest.raises(HarnessError):
        conservation_error(_Trace(None, np.zeros(2)))
    with pytest.raises(HarnessError):
        conservation_error(_Trace(np.zeros(0), np.zeros(0)))
    with pytest.raises(HarnessError):
        conservation_error(_Trace(np.zeros(3), np.zeros(2)))


def test_zero_data_gives_identically_zero_error():
    mesh = build_mesh(-1.0, 1.0, 20)
    ops = build_operators(mesh, 0.0137, 2, SCALAR)
    _, trace = integrate(ops, np.zeros(ops.layout.size), 0.1, 0.01, RkScheme.for_degree(2),
                         BoundaryDataLadder.zero((2, 1)))
    assert np.all(conservation_error(trace) == 0.0)


def test_conservation_presets():
    ok = run_experiment(ExperimentSpec("stationary_scalar_conservation"))
    assert ok.max_conservation_error <= 1e-12
    bad = run_experiment(ExperimentSpec("stationary_scalar_conservation", {"lambda1": 0.25, "lambda2": -0.25}))
    assert bad.final_conservation_error >= 1e-9


# ------------------------------------------------------- condition number

def test_condition_number_examples():
    assert condition_number(np.eye(5)) == 1.0
    assert condition_number_blocks(np.eye(5)) == pytest.approx(1.0, rel=1e-15)
    assert condition_number(np.diag([1.0, 4.0])) == pytest.approx(4.0, rel=1e-15)
    with pytest.raises(HarnessError, match="smallest eigenvalue"):
        condition_number(np.diag([1.0, -1.0]))
    with pytest.raises(HarnessError, match="smallest eigenvalue"):
        condition_number_blocks(np.diag([1.0, -1.0]))
    with pytest.raises(HarnessError):
        condition_number(np.array([[1.0, 2.0], [0.0, 1.0]]))


@settings(max_examples=30, deadline=None)
@given(alpha=st.floats(1e-6, 1 - 1e-6), r=st.integers(1, 3), rule=st.sampled_from(["small_side", "literal"]))
def test_block_route_matches_dense_svd(alpha, r, rule):
    mesh = build_mesh(-1.0, 1.0, 20)
    ops = build_operators(mesh, alpha * mesh.h, r, SCALAR, PenaltyConfig(face_rule=rule))
    assert condition_number_blocks(ops.mass) == pytest.approx(condition_number(ops.mass), rel=1e-8)


def test_unstabilized_mass_is_nearly_singular():
    mesh = build_mesh(-1.0, 1.0, 400)
    x = 1e-8 * mesh.h
    stab = condition_number(build_operators(mesh, x, 1, SCALAR).mass)
    M0 = build_operators(mesh, x, 1, SCALAR, PenaltyConfig(gamma_M=0.0)).mass.toarray()
    # the tiny cut block is singular to working precision, so the SPD check rejects it
    with pytest.raises(HarnessError, match="smallest eigenvalue"):
        condition_number(M0)
    s = np.linalg.svd(M0, compute_uv=False)
    assert s[0] / s[-1] >= 1e3 * stab
    assert stab < 100


# ------------------------------------------------------------ convergence

def test_observed_orders():
    h = [0.1, 0.05, 0.025]
    e = [1e-2, 2.5e-3, 6.25e-4]
    np.testing.assert_allclose(observed_orders(h, e)[1:], [2.0, 2.0], rtol=1e-14)
    assert math.isnan(observed_orders(h, e)[0])
    assert np.all(np.isnan(observed_orders(h, [1e-15, 1e-16, 2e-16])))
    assert least_squares_order(h, e) == pytest.approx(2.0, rel=1e-12)


def test_convergence_table_rows():
    from cutdg.harness import ErrorNorms

    norms = [ErrorNorms(1.0, 8.0, 1.0), ErrorNorms(0.5, 1.0, 0.5)]
    rows = convergence_table([10, 20], [0.2, 0.1], norms)
    assert rows[1].order_L2 == pytest.approx(3.0, rel=1e-14)
    with pytest.raises(HarnessError):
        convergence_table([10], [0.2, 0.1], norms)


# --------------------------------------------------------------- presets

def test_preset_defaults():
    p = get_preset("stationary_scalar_accuracy").defaults
    assert (p["lambda1"], p["lambda2"], p["gamma_M"], p["gamma_A"]) == (0.1, -0.9, 0.25, 0.75)
    assert p["t_end"] == 1.0
    assert get_preset("stationary_scalar_conservation").defaults["n"] == 40
    assert get_preset("stationary_scalar_conservation").defaults["degree"] == 2
    mc = get_preset("moving_conservation").defaults
    assert (mc["n"], mc["courant"], mc["formulation"]) == (400, 1.0 / 6.0, "ibp")
    assert get_preset("twod_conservation").defaults["n"] == 100
    assert get_preset("alpha_sweep").defaults["samples"] == 400
    assert set(PRESETS) == {"stationary_scalar_accuracy", "stationary_scalar_conservation", "acoustic",
                            "moving_accuracy", "moving_conservation", "coupled", "twod_convergence",
                            "twod_conservation", "alpha_sweep", "region_map"}


def test_override_validation():
    pr = get_preset("stationary_scalar_accuracy")
    assert pr.resolve({"n": "40", "degree": "2"})["n"] == 40
    for bad in ({"nope": 1}, {"degree": 7}, {"n": "1.5"}, {"n": 0}, {"face_rule": "other"}):
        with pytest.raises(HarnessError):
            pr.resolve(bad)
    with pytest.raises(HarnessError):
        get_preset("missing")


def test_alpha_values():
    a = alpha_values(4)
    np.testing.assert_allclose(a, [0.2, 0.4, 0.6, 0.8], rtol=1e-15)
    assert len(alpha_values(400)) == 400 and 0 < alpha_values(400).min() and alpha_values(400).max() < 1


CHEAP = {
    "stationary_scalar_accuracy": {"n": 10, "t_end": 0.05},
    "stationary_scalar_conservation": {"n": 10, "t_end": 0.05},
    "acoustic": {"n": 40, "degree": 1, "t_end": 0.005},
    "moving_accuracy": {"n": 10, "t_end": 0.02},
    "moving_conservation": {"n": 20, "t_end": 0.02},
    "coupled": {"n": 20, "t_end": 0.02},
    "twod_convergence": {"n": 4, "t_end": 0.02},
    "twod_conservation": {"n": 4, "t_end": 0.02},
    "alpha_sweep": {"n": 10, "samples": 3, "t_end": 0.05},
    "region_map": {"samples": 5},
}


@pytest.mark.parametrize("name", sorted(CHEAP))
def test_every_preset_reports(name):
    rep = run_experiment(ExperimentSpec(name, CHEAP[name]))
    assert rep.preset == name and rep.wall_time >= 0
    if rep.table is not None:
        header, rows = rep.table
        assert len(rows) > 0 and all(len(r) == len(header) for r in rows)
        return
    assert rep.norms is not None and all(np.isfinite(rep.norms.as_tuple()))
    assert len(rep.conservation) == len(rep.times) > 1
    assert rep.summary().startswith(f"preset={name}")


def test_parallel_map_matches_serial(monkeypatch):
    items = [ExperimentSpec("stationary_scalar_accuracy", {"n": n, "t_end": 0.05}) for n in (10, 12)]
    serial = [r.norms for r in parallel_map(run_experiment, items)]
    monkeypatch.setenv("CUTDG_THREADS", "2")
    assert [r.norms for r in parallel_map(run_experiment, items)] == serial
    monkeypatch.setenv("CUTDG_THREADS", "x")
    with pytest.raises(HarnessError):
        parallel_map(run_experiment, items)


# ---------------------------------------------------------------- output

def test_csv_format():
    assert format_value(1) == "1"
    assert format_value(True) == "1"
    assert format_value(0.000123456789) == "1.23457e-04"
    assert format_value(float("nan")) == ""
    assert format_value(float("inf")) == "inf"
    assert csv_text(("a", "b"), [(1, 2.5)]) == "a,b\n1,2.50000e+00\n"
    with pytest.raises(HarnessError):
        csv_text(("a", "b"), [(1,)])


def test_svg_is_standalone():
    svg = line_plot([("e", [1, 2, 3], [1e-3, 1e-4, 1e-5])], title="a<b", logy=True)
    assert svg.startswith("<svg") and svg.rstrip().endswith("</svg>")
    assert "<polyline" in svg and "a&lt;b" in svg
    assert "href" not in svg


# ------------------------------------------------------------------- CLI

def test_cli_csv_is_deterministic(tmp_path):
    args = ["run", "--preset", "stationary_scalar_accuracy", "--n", "10", "--t-end", "0.05"]
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    assert main(args + ["--csv", str(a)]) == 0
    assert main(args + ["--csv", str(b)]) == 0
    assert a.read_bytes() == b.read_bytes()
    assert a.read_text().splitlines()[0] == "t,e,energy"


def test_cli_converge_and_svg(tmp_path):
    out, svg = tmp_path / "c.csv", tmp_path / "c.svg"
    code = main(["converge", "--preset", "stationary_scalar_accuracy", "--n", "10,20,40", "--t-end", "0.05",
                 "--csv", str(out), "--svg", str(svg)])
    assert code == 0
    lines = out.read_text().splitlines()
    assert lines[0] == "N,h,L1,L2,Linf,order_L2" and len(lines) == 4
    assert svg.read_text().startswith("<svg")


def test_cli_sweep_and_region(tmp_path):
    out = tmp_path / "s.csv"
    assert main(["sweep-alpha", "--n", "10", "--samples", "3", "--no-errors", "--csv", str(out)]) == 0
    assert out.read_text().splitlines()[0] == "alpha,L1,L2,Linf,cond"
    out = tmp_path / "r.csv"
    assert main(["region-map", "--samples", "3", "--csv", str(out)]) == 0
    assert out.read_text().splitlines()[0] == "lambda1,lambda2,feasible,eta_lo,eta_hi"
    assert len(out.read_text().splitlines()) == 10


def test_cli_config_file(tmp_path):
    cfg = tmp_path / "run.cfg"
    cfg.write_text("# small run\npreset = stationary_scalar_accuracy\nn = 10\nt-end = 0.05\n")
    assert read_config(str(cfg)) == {"preset": "stationary_scalar_accuracy", "n": "10", "t_end": "0.05"}
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    assert main(["run", "--config", str(cfg), "--csv", str(a)]) == 0
    assert main(["run", "--preset", "stationary_scalar_accuracy", "--n", "10", "--t-end", "0.05",
                 "--csv", str(b)]) == 0
    assert a.read_bytes() == b.read_bytes()


@pytest.mark.parametrize("args", [
    ["run", "--preset", "nope"],
    ["run"],
    ["run", "--preset", "stationary_scalar_accuracy", "--degree", "9"],
    ["run", "--preset", "stationary_scalar_accuracy", "--set", "bogus=1"],
    ["run", "--preset", "stationary_scalar_accuracy", "--set", "novalue"],
    ["converge", "--preset", "stationary_scalar_accuracy", "--n", "10,20"],
    ["converge", "--preset", "stationary_scalar_accuracy", "--n", "a,b,c"],
    ["run", "--preset", "stationary_scalar_accuracy", "--n", "10", "--csv", "/nonexistent/dir/out.csv"],
])
def test_cli_errors_exit_two(args, capsys):
    assert main(args) == 2
    assert capsys.readouterr().err.startswith("error:")


def test_cli_bad_config(tmp_path, capsys):
    cfg = tmp_path / "bad.cfg"
    cfg.write_text("colour = red\n")
    assert main(["run", "--config", str(cfg)]) == 2
    assert main(["run", "--config", str(tmp_path / "missing.cfg")]) == 2


def test_cli_list_presets(capsys):
    assert main(["list-presets"]) == 0
    out = capsys.readouterr().out
    assert all(name in out for name in PRESETS)
