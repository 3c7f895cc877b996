import math

import numpy as np
import pytest

from cutdg.assembly1d import FluxModel, PenaltyConfig, build_operators, project_initial
from cutdg.geometry1d import build_mesh
from cutdg.timestepper import (
    BoundaryDataLadder,
    RkScheme,
    cfl_dt,
    integrate,
    step,
    uniform_steps,
)

SCHEMES = [RkScheme.rk2_tvd(), RkScheme.tvd_rk3(), RkScheme.ssp_rk4_5()]


class Decay:
    """u' = -k u with a scalar flux record equal to -k u."""

    def __init__(self, k=1.0):
        self.k = k

    def rhs(self, u, g):
        return -self.k * u

    def net_flux(self, u, g):
        return np.atleast_1d(-self.k * np.sum(u))


def test_rk3_single_step_value():
    u = step(RkScheme.tvd_rk3(), Decay(), np.array([1.0]), 0.0, 0.1, BoundaryDataLadder.zero((2, 1)))
    assert u[0] == pytest.approx(1 - 0.1 + 0.005 - 0.1**3 / 6, rel=1e-15)
    assert u[0] == pytest.approx(0.9048333333333334, rel=1e-15)


@pytest.mark.parametrize("scheme", SCHEMES, ids=lambda s: s.kind)
def test_zero_operator_is_identity(scheme):
    u0 = np.random.default_rng(0).normal(size=7)
    u = step(scheme, Decay(0.0), u0, 0.3, 0.05, BoundaryDataLadder.zero((2, 1)))
    np.testing.assert_array_equal(u, u0)


@pytest.mark.parametrize("scheme", SCHEMES, ids=lambda s: s.kind)
def test_butcher_order_conditions(scheme):
    A, b, c = scheme.A, scheme.b, scheme.c
    conds = [(b.sum(), 1.0), (b @ c, 1 / 2)]
    if scheme.order >= 3:
        conds += [(b @ c**2, 1 / 3), (b @ A @ c, 1 / 6)]
    if scheme.order >= 4:
        conds += [(b @ c**3, 1 / 4), (b @ (c * (A @ c)), 1 / 8), (b @ A @ c**2, 1 / 12), (b @ A @ A @ c, 1 / 24)]
    for got, want in conds:
        assert got == pytest.approx(want, abs=1e-12)
    np.testing.assert_allclose(A.sum(axis=1), c, atol=1e-14)
    assert np.all(np.triu(A) == 0.0)


@pytest.mark.parametrize("scheme", SCHEMES, ids=lambda s: s.kind)
def test_local_error_order(scheme):
    dts = np.array([0.2, 0.1, 0.05, 0.025])
    err = [abs(step(scheme, Decay(), np.array([1.0]), 0.0, dt, BoundaryDataLadder.zero((2, 1)))[0] - math.exp(-dt))
           for dt in dts]
    slope = np.polyfit(np.log(dts), np.log(err), 1)[0]
    assert slope == pytest.approx(scheme.order + 1, abs=0.3)


def test_scheme_lookup():
    assert RkScheme.for_degree(1).kind == "tvd_rk3"
    assert RkScheme.for_degree(2).kind == "tvd_rk3"
    assert RkScheme.for_degree(3).kind == "ssp_rk4_5"
    assert RkScheme.by_name("rk2_tvd").stages == 2
    with pytest.raises(KeyError):
        RkScheme.by_name("euler")


def test_cfl_and_steps():
    flux = FluxModel.scalar(2.0, 1.0)
    assert cfl_dt(0.1, flux, 1) == pytest.approx(0.015, rel=1e-15)
    assert cfl_dt(0.1, flux, 3) == pytest.approx(0.005, rel=1e-15)
    assert cfl_dt(0.1, flux, 1, courant=0.5) == pytest.approx(0.025, rel=1e-15)
    with pytest.raises(ValueError):
        cfl_dt(0.1, flux, 4)
    assert uniform_steps(1.0, 0.3) == (4, 0.25)
    n, dt = uniform_steps(1.0, 0.25)
    assert n == 4 and dt == 0.25


def test_taylor_ladder_stage_values():
    g = lambda t: np.array([[t**2], [0.0]])
    dg = lambda t: np.array([[2 * t], [0.0]])
    ddg = lambda t: np.array([[2.0], [0.0]])
    t, dt = 0.3, 0.1
    vals = BoundaryDataLadder(g, dg, ddg).stage_values(RkScheme.tvd_rk3(), t, dt)
    np.testing.assert_allclose([v[0, 0] for v in vals], [t**2, t**2 + 2 * t * dt, t**2 + t * dt + dt**2 / 2],
                               rtol=1e-15)
    plain = BoundaryDataLadder(g, taylor=False).stage_values(RkScheme.tvd_rk3(), t, dt)
    np.testing.assert_allclose([v[0, 0] for v in plain], [t**2, (t + dt) ** 2, (t + dt / 2) ** 2], rtol=1e-15)


def test_ladder_finite_difference_fallback():
    lad = BoundaryDataLadder(lambda t: np.array([math.sin(t)]))
    assert lad.derivative(0.4, 1)[0] == pytest.approx(math.cos(0.4), abs=1e-8)
    assert lad.derivative(0.4, 2)[0] == pytest.approx(-math.sin(0.4), abs=1e-6)


def _dg_problem(r=2, x=0.0137, n=20):
    mesh = build_mesh(-1.0, 1.0, n)
    ops = build_operators(mesh, x, r, FluxModel.scalar(2.0, 1.0), PenaltyConfig())
    u0 = project_initial(ops, lambda s: np.sin(np.pi * s), lambda s: np.cos(2 * np.pi * s))
    g = lambda t: np.array([[np.sin(3 * t) + 0.5], [0.0]])
    dg = lambda t: np.array([[3 * np.cos(3 * t)], [0.0]])
    ddg = lambda t: np.array([[-9 * np.sin(3 * t)], [0.0]])
    return ops, u0, BoundaryDataLadder(g, dg, ddg)


@pytest.mark.parametrize("scheme", SCHEMES, ids=lambda s: s.kind)
def test_compiled_matches_stepwise(scheme):
    ops, u0, lad = _dg_problem()
    dt = 0.004
    u_a, tr_a = integrate(ops, u0, 0.2, dt, scheme, lad, compiled=True)
    u_b, tr_b = integrate(ops, u0, 0.2, dt, scheme, lad, compiled=False)
    np.testing.assert_allclose(u_a, u_b, atol=1e-10 * np.abs(u_b).max())
    np.testing.assert_allclose(tr_a.influx, tr_b.influx, atol=1e-12)
    np.testing.assert_allclose(tr_a.totals, tr_b.totals, atol=1e-12)


@pytest.mark.parametrize("x", [1e-6, 0.0137, 0.05])
def test_per_step_conservation(x):
    ops, u0, lad = _dg_problem(x=x)
    _, tr = integrate(ops, u0, 0.3, 0.003, RkScheme.tvd_rk3(), lad, compiled=False)
    assert np.abs(tr.conservation_error).max() <= 1e-13


def test_conservation_lost_without_conservative_pair():
    mesh = build_mesh(-1.0, 1.0, 20)
    ops = build_operators(mesh, 0.0137, 2, FluxModel.scalar(2.0, 1.0), PenaltyConfig(0.25, -0.25))
    u0 = project_initial(ops, lambda s: 1.0 + s, lambda s: 2.0 - s)
    _, tr = integrate(ops, u0, 0.3, 0.003, RkScheme.tvd_rk3(), BoundaryDataLadder.zero((2, 1)))
    assert np.abs(tr.conservation_error).max() > 1e-6


def test_integrate_rejects_non_dividing_step():
    ops, u0, lad = _dg_problem()
    with pytest.raises(ValueError):
        integrate(ops, u0, 0.1, 0.03, RkScheme.tvd_rk3(), lad)


def test_record_every_keeps_endpoints():
    ops, u0, lad = _dg_problem()
    _, tr = integrate(ops, u0, 0.1, 0.01, RkScheme.tvd_rk3(), lad, record_every=3)
    np.testing.assert_allclose(tr.times, [0.0, 0.03, 0.06, 0.09, 0.1], atol=1e-15)


def test_energy_decays_without_inflow():
    mesh = build_mesh(-1.0, 1.0, 20)
    ops = build_operators(mesh, 0.3, 1, FluxModel.scalar(1.0, 1.0), PenaltyConfig())
    u0 = project_initial(ops, lambda s: np.exp(-20 * s**2))
    M = ops.mass
    _, tr = integrate(ops, u0, 1.0, 0.01, RkScheme.tvd_rk3(), BoundaryDataLadder.zero((2, 1)),
                      energy=lambda u: float(u @ (M @ u)))
    assert np.all(np.diff(tr.energy) <= 1e-14)
    assert tr.energy[-1] < 0.5 * tr.energy[0]
