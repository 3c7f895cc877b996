"""End-to-end acceptance runs at desk scale; each prints one PASS/FAIL line."""
import time

import numpy as np
import pytest
import sympy

from cutdg.analysis import build_s_acoustic, build_s_scalar, eta_scan, feasible_eta, psd_check
from cutdg.assembly1d import FluxModel, PenaltyConfig, build_operators, project_initial
from cutdg.basis import gauss_rule, polygon_rule, triangle_rule
from cutdg.coupled import coupled_advance
from cutdg.geometry1d import InterfacePath, build_mesh
from cutdg.harness import ExperimentSpec, run_convergence, run_experiment
from cutdg.harness.presets import ACOUSTIC_MEDIA
from cutdg.spacetime import advance
from cutdg.timestepper import BoundaryDataLadder, RkScheme, integrate
from cutdg.twod import LineInterface, Problem2D, TriMesh, assemble_2d, clip_polygon, project_2d

SCALAR = FluxModel.scalar(2.0, 1.0)


def _spread(v):
    v = np.asarray(v, dtype=float)
    return (v.max() - v.min()) / v.min()


# ---------------------------------------------------------- stationary 1D

STATIONARY_REFERENCE = {1: (5.40e-4, 2.04), 2: (2.58e-6, 3.00), 3: (1.07e-8, 4.00)}


def test_stationary_scalar_convergence(verdict):
    ok, parts = True, []
    for r, (err, order) in STATIONARY_REFERENCE.items():
        rows, _ = run_convergence("stationary_scalar_accuracy", None, {"degree": r})
        last = rows[-1]
        good = abs(last.norms.L2 / err - 1) <= 0.10 and abs(last.order_L2 - order) <= 0.15
        ok &= good
        parts.append(f"r={r} L2={last.norms.L2:.3e} order={last.order_L2:.2f}")
    assert verdict("stationary scalar convergence", ok, "; ".join(parts))


def test_stationary_conservation(verdict):
    cons = run_experiment(ExperimentSpec("stationary_scalar_conservation"))
    ctrl = run_experiment(ExperimentSpec("stationary_scalar_conservation", {"lambda1": 0.25, "lambda2": -0.25}))
    ok = cons.max_conservation_error <= 1e-12 and ctrl.final_conservation_error >= 1e-9
    assert verdict("stationary conservation", ok,
                   f"max|e|={cons.max_conservation_error:.2e}, control |e(1)|={ctrl.final_conservation_error:.2e}")


@pytest.mark.parametrize("r", [
    1, 2,
    pytest.param(3, marks=pytest.mark.xfail(
        strict=True, reason="r=3 mass condition number varies by ~19x over the cut positions")),
])
def test_cut_robustness(r, verdict):
    sweep = {"degree": r, "n": 400, "samples": 400}
    if r > 1:
        sweep["errors"] = False  # the error profile is an r=1 experiment
    rows = run_experiment(ExperimentSpec("alpha_sweep", sweep)).table[1]
    cond = np.array([row[4] for row in rows])
    ratio = cond.max() / cond.min()
    ok = ratio <= 10
    detail = f"cond max/min={ratio:.2f}"
    if r == 1:
        spread = _spread([row[2] for row in rows])
        ok &= spread <= 0.20
        detail += f", L2 spread={spread:.3f}"
    assert verdict(f"cut robustness r={r}", ok, detail)


# ---------------------------------------------------------------- acoustic

def test_acoustic(verdict):
    rows, reps = run_convergence("acoustic", (200, 400, 800, 1600), {"degree": 2})
    order = rows[-1].order_L2
    cons = max(r.max_conservation_error for r in reps)
    S = np.abs(build_s_acoustic(ACOUSTIC_MEDIA, 0.5, -0.5).entries).max()
    ok = order >= 2.85 and cons <= 1e-11 and S <= 1e-14
    assert verdict("acoustic", ok, f"p order={order:.2f}, max|e| m,q={cons:.2e}, |S|={S:.1e}")


# -------------------------------------------------------------- moving 1D

def test_space_time_moving_interface(verdict):
    rows1, _ = run_convergence("moving_accuracy", (20, 40, 80, 160, 320), {"degree": 1})
    rows2, _ = run_convergence("moving_accuracy", (20, 40, 80, 160), {"degree": 2})
    e1, o1, o2 = rows1[-1].norms.L2, rows1[-1].order_L2, rows2[-1].order_L2
    ok = abs(e1 / 6.41e-4 - 1) <= 0.10 and abs(o1 - 1.99) <= 0.2 and abs(o2 - 3.0) <= 0.2
    assert verdict("space-time moving interface", ok,
                   f"r=(1,1) N=320 L2={e1:.3e} order={o1:.2f}; r=(2,1) order={o2:.2f}")


def test_space_time_conservation_contrast(verdict):
    ibp = run_experiment(ExperimentSpec("moving_conservation", {"formulation": "ibp"}))
    direct = run_experiment(ExperimentSpec("moving_conservation", {"formulation": "direct"}))
    ok = ibp.final_conservation_error <= 1e-12 and direct.final_conservation_error >= 1e-9
    assert verdict("space-time conservation contrast", ok,
                   f"ibp |e(1)|={ibp.final_conservation_error:.2e}, "
                   f"direct |e(1)|={direct.final_conservation_error:.2e}")


COUPLED_REFERENCE_ORDERS = (1.90, 1.96, 1.97, 1.99)


def test_locally_implicit(verdict):
    rows, reps = run_convergence("coupled", (20, 40, 80, 160, 320))
    orders = [r.order_L2 for r in rows[1:]]
    cons = max(r.max_conservation_error for r in reps)
    ok = all(abs(o - ref) <= 0.2 for o, ref in zip(orders, COUPLED_REFERENCE_ORDERS)) and cons <= 1e-12
    assert verdict("locally implicit", ok,
                   "orders=" + ",".join(f"{o:.2f}" for o in orders) + f", max|e|={cons:.2e}")


# -------------------------------------------------------------------- 2D

def test_twod_convergence(verdict):
    t0 = time.perf_counter()
    ok, parts = True, []
    for r in (1, 2):
        rows, _ = run_convergence("twod_convergence", (20, 40, 80, 160), {"degree": r})
        o = rows[-1].order_L2
        ok &= abs(o - (r + 1)) <= 0.25
        parts.append(f"r={r} order={o:.2f}")
    wall = time.perf_counter() - t0
    ok &= wall <= 600
    assert verdict("2D convergence", ok, "; ".join(parts) + f", {wall:.0f}s")


def test_twod_conservation(verdict):
    cons = run_experiment(ExperimentSpec("twod_conservation", {"lambda1": 0.0, "lambda2": -1.0}))
    bad = run_experiment(ExperimentSpec("twod_conservation", {"lambda1": 0.0, "lambda2": -0.75}))
    e = np.abs(bad.conservation)
    # the diffused P1 front starts touching the line around t = 0.03, the disc edge near t = 0.106
    before = e[bad.times <= 0.02].max()
    after = e[bad.times > 0.12].max()
    ok = cons.max_conservation_error <= 1e-11 and before <= 1e-11 and after >= max(1e-6, 1e4 * before)
    assert verdict("2D conservation", ok,
                   f"max|e|={cons.max_conservation_error:.2e}; non-conservative pair "
                   f"before contact {before:.1e}, after {after:.1e}")


# --------------------------------------------------------- property suite

def _exact_fitted_dg(n, node, r, a1, a2, l1, l2):
    """Two-domain upwind DG with the interface at a mesh node, in exact arithmetic."""
    x = sympy.symbols("x")
    P = [sympy.sqrt(2 * k + 1) * sympy.legendre(k, x) for k in range(r + 1)]
    D = [[sympy.integrate(sympy.diff(P[l], x) * P[k], (x, -1, 1)) for k in range(r + 1)] for l in range(r + 1)]
    pL = [p.subs(x, -1) for p in P]
    pR = [p.subs(x, 1) for p in P]
    a1, a2, l1, l2 = (sympy.nsimplify(v) for v in (a1, a2, l1, l2))
    nb = r + 1
    K = sympy.zeros(n * nb, n * nb)
    speed = lambda e: a1 if e < node else a2
    for e in range(n):
        for l in range(nb):
            for k in range(nb):
                K[e * nb + l, e * nb + k] = -speed(e) * D[l][k]
    for j in range(1, n):
        L, R = j - 1, j
        for l in range(nb):
            for k in range(nb):
                if j == node:
                    K[L * nb + l, L * nb + k] += (a1 - l1 * a1) * pR[k] * pR[l]
                    K[L * nb + l, R * nb + k] += l1 * a2 * pL[k] * pR[l]
                    K[R * nb + l, L * nb + k] += l2 * a1 * pR[k] * pL[l]
                    K[R * nb + l, R * nb + k] += (-a2 - l2 * a2) * pL[k] * pL[l]
                else:
                    a = speed(L)
                    K[L * nb + l, L * nb + k] += a * pR[k] * pR[l]
                    K[R * nb + l, L * nb + k] -= a * pR[k] * pL[l]
    for l in range(nb):
        for k in range(nb):
            K[(n - 1) * nb + l, (n - 1) * nb + k] += a2 * pR[k] * pR[l]
    M = sympy.Rational(2, n) * sympy.eye(n * nb)
    return np.array(M.evalf(20).tolist(), dtype=float), np.array(K.evalf(20).tolist(), dtype=float)


def _fitted_equivalence():
    worst = 0.0
    for r in range(4):
        n, node = 10, 4
        mesh = build_mesh(-1.0, 1.0, n)
        ops = build_operators(mesh, mesh.nodes[node], r, SCALAR, PenaltyConfig(0.1, -0.9))
        M, K = _exact_fitted_dg(n, node, r, 2.0, 1.0, 0.1, -0.9)
        worst = max(worst, np.abs(ops.mass.toarray() - M).max(), np.abs(ops.spatial.toarray() - K).max())
    return worst


def _steady_states():
    out = {}
    mesh = build_mesh(-1.0, 1.0, 40)
    # stationary: (a1 u1 = a2 u2) with u1 = 1, u2 = 2
    ops = build_operators(mesh, 0.0137, 2, SCALAR)
    u0 = project_initial(ops, lambda x: 1.0 + 0 * x, lambda x: 2.0 + 0 * x)
    col = lambda t: np.array([[1.0], [0.0]])
    u, _ = integrate(ops, u0, 0.1, mesh.h / 20, RkScheme.for_degree(2), BoundaryDataLadder(col))
    out["stationary"] = np.abs(u - u0).max()
    # space-time: moving interface with (a_i - v) u_i continuous
    v = 0.3
    u2 = (2.0 - v) / (1.0 - v)
    run = advance(mesh, 1, 1, SCALAR, PenaltyConfig(), InterfacePath.linear(0.0137, v),
                  (lambda x: 1.0 + 0 * x, lambda x: u2 + 0 * x), lambda t: 1.0, 0.1, mesh.h / 8)
    xg = run.x_gamma_final
    out["space-time"] = max(np.abs(run.final.evaluate(1, np.linspace(-1, xg, 50)) - 1.0).max(),
                            np.abs(run.final.evaluate(2, np.linspace(xg, 1, 50)) - u2).max())
    # coupled
    run = coupled_advance(mesh, SCALAR, PenaltyConfig(), InterfacePath.constant(0.0137),
                          (lambda x: 1.0 + 0 * x, lambda x: 2.0 + 0 * x), lambda t: 1.0, 0.1, mesh.h / 12)
    xg = run.x_gamma_final
    out["coupled"] = max(np.abs(run.final.evaluate(1, np.linspace(-1, xg, 50)) - 1.0).max(),
                         np.abs(run.final.evaluate(2, np.linspace(xg, 1, 50)) - 2.0).max())
    # 2D: (a1.n) u1 = (a2.n) u2 with a1 = (3, 1), a2 = (2, 1)
    tri = TriMesh.rectangle(-1.0, 1.0, -1.0, 1.0, 10, 10)
    ops2 = assemble_2d(tri, LineInterface.diagonal(0.5 + 1e-7), 2, Problem2D((3.0, 1.0), (2.0, 1.0)))
    w0 = project_2d(ops2, lambda x, y: 3.0 + 0 * x, lambda x, y: 4.0 + 0 * x)
    g = ops2.boundary_data(lambda x, y, t: np.where(x + y <= 0.5 + 1e-7, 3.0, 4.0))
    w, _ = integrate(ops2, w0, 0.02, 0.002, RkScheme.for_degree(2), BoundaryDataLadder(g), compiled=False)
    out["2D"] = np.abs(w - w0).max()
    return out


def _dissipativity():
    worst = np.inf
    rng = np.random.default_rng(11)
    mesh = build_mesh(-1.0, 1.0, 10)
    for _ in range(40):
        r = int(rng.integers(0, 4))
        l1 = rng.uniform(-1.0, 0.5)
        ops = build_operators(mesh, 0.2 + rng.uniform(1e-8, 1 - 1e-8) * mesh.h, r, SCALAR, PenaltyConfig(l1, l1 - 1))
        iv = feasible_eta(2.0, 1.0, l1, l1 - 1.0)
        for eta in (iv.lo, iv.midpoint, iv.hi):
            W = np.ones(ops.size)
            W[ops.layout.side_slice(2)] = eta
            WK = W[:, None] * ops.spatial.toarray()
            worst = min(worst, np.linalg.eigvalsh(0.5 * (WK + WK.T))[0])
    return worst


def _region_checks():
    rng = np.random.default_rng(3)
    grid = np.linspace(0.0, 20.0, 1001)[1:]  # spacing 0.02
    sound = sharp = True
    for _ in range(100):
        a1, a2 = rng.uniform(0.1, 4.0, 2)
        l1 = rng.uniform(-2.0, 0.5)
        iv = feasible_eta(a1, a2, l1, l1 - 1.0)
        sound &= (not iv.empty) and all(psd_check(build_s_scalar(a1, a2, l1, l1 - 1, e), 1e-10)[0]
                                         for e in (iv.lo, iv.midpoint, iv.hi))
        # brute-force scan agrees with the interval up to the grid spacing
        inside = grid[eta_scan(a1, a2, l1, l1 - 1.0, grid)]
        if len(inside):
            sharp &= inside.min() >= iv.lo - 0.02 and inside.max() <= iv.hi + 0.02
        if iv.hi - iv.lo > 0.1 and iv.lo < 19.0:
            sharp &= len(inside) > 0 and inside.min() <= iv.lo + 0.02 and inside.max() >= min(iv.hi, 20.0) - 0.02
        l1 = 0.5 + 10.0 ** rng.uniform(-4, 0)
        sharp &= feasible_eta(a1, a2, l1, l1 - 1.0).empty and not eta_scan(a1, a2, l1, l1 - 1.0, grid).any()
    return sound, sharp


def _quadrature_exactness():
    worst = 0.0
    for n in range(1, 11):
        rule = gauss_rule(n, (-0.3, 0.7))
        for p in range(2 * n):
            exact = (0.7 ** (p + 1) - (-0.3) ** (p + 1)) / (p + 1)
            worst = max(worst, abs(rule.integrate(lambda x: x**p) - exact))
    tri = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]])
    from math import factorial
    mono = lambda p, q: factorial(p) * factorial(q) / factorial(p + q + 2)
    for deg in range(0, 8):
        rule = triangle_rule(deg, tri)
        for p in range(deg + 1):
            for q in range(deg + 1 - p):
                worst = max(worst, abs(rule.integrate(lambda x, y: x**p * y**q) - mono(p, q)))
    c = 0.37
    piece = polygon_rule(5, clip_polygon(tri, LineInterface.diagonal(c), 2))
    for p in range(6):
        for q in range(6 - p):
            exact = (1 - c ** (p + q + 2)) * mono(p, q)
            worst = max(worst, abs(piece.integrate(lambda x, y: x**p * y**q) - exact))
    return worst


def test_property_suite(verdict):
    fitted = _fitted_equivalence()
    steady = _steady_states()
    diss = _dissipativity()
    sound, sharp = _region_checks()
    quad = _quadrature_exactness()
    ok = (fitted <= 1e-14 and max(steady.values()) <= 1e-12 and diss >= -1e-10 and sound and sharp
          and quad <= 1e-13)
    detail = (f"fitted {fitted:.1e}; steady " + ", ".join(f"{k} {v:.1e}" for k, v in steady.items())
              + f"; min dissipation eig {diss:.1e}; region sound={sound} sharp={sharp}; quadrature {quad:.1e}")
    assert verdict("property suite", ok, detail)
