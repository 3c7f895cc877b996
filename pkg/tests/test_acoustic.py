import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from cutdg.acoustic import (
    AcousticError,
    AcousticMaterial,
    AcousticSystem,
    InterfaceWave,
    Pulse,
    acoustic_energy,
    energy_matrix,
    to_conservative,
    to_primitive,
)
from cutdg.analysis import build_s_acoustic
from cutdg.assembly1d import FluxModel, PenaltyConfig, build_operators, project_initial
from cutdg.geometry1d import build_mesh

WATER = AcousticMaterial(1000.0, 1500.0)
ROCK = AcousticMaterial(1200.0, 2800.0)
SYSTEM = AcousticSystem(WATER, ROCK)

materials = st.builds(AcousticMaterial, st.floats(0.5, 5000.0), st.floats(1.0, 6000.0))


def test_material_matrices():
    np.testing.assert_array_equal(WATER.A, [[0.0, 1000.0 * 1500.0**2], [1e-3, 0.0]])
    np.testing.assert_array_equal(WATER.B, np.diag([1e-3, 1000.0 * 1500.0**2]))
    assert WATER.impedance == 1.5e6
    np.testing.assert_allclose(sorted(np.linalg.eigvals(ROCK.A).real), [-2800.0, 2800.0], rtol=1e-14)
    with pytest.raises(AcousticError):
        AcousticMaterial(-1.0, 1.0)
    with pytest.raises(AcousticError):
        AcousticMaterial(1.0, 0.0)


def test_conversion_examples():
    m, q = to_conservative(WATER, 2.0, 4.5e6)
    assert m == 2000.0
    assert q == pytest.approx(4.5e6 / (1000.0 * 1500.0**2), rel=1e-15)
    u, p = to_primitive(WATER, m, q)
    assert u == 2.0 and p == pytest.approx(4.5e6, rel=1e-15)


@settings(max_examples=100, deadline=None)
@given(mat=materials, u=st.floats(-10, 10), p=st.floats(-1e7, 1e7))
def test_conversion_round_trip(mat, u, p):
    u2, p2 = to_primitive(mat, *to_conservative(mat, u, p))
    assert u2 == pytest.approx(u, rel=1e-14, abs=1e-300)
    assert p2 == pytest.approx(p, rel=1e-14, abs=1e-300)


@settings(max_examples=100, deadline=None)
@given(m1=materials, m2=materials)
def test_symmetrizer_identities(m1, m2):
    system = AcousticSystem(m1, m2)
    system.check_identities(1e-13)
    for mat in (m1, m2):
        BA = mat.B @ mat.A
        assert np.array_equal(BA, BA.T)
        # the symmetrized flux has eigenvalues +-c in the B-inner product
        lam = np.linalg.eigvals(mat.A).real
        np.testing.assert_allclose(sorted(lam), [-mat.c, mat.c], rtol=1e-12)
    # closed form of the cross identity
    cross = system.A_1.T @ system.B_2
    expect = np.array([[0.0, m2.rho * m2.c**2 / m1.rho], [m1.rho * m1.c**2 / m2.rho, 0.0]])
    np.testing.assert_allclose(cross, expect, rtol=1e-14)


def test_interface_matrix_vanishes_for_central_pair():
    S = build_s_acoustic(SYSTEM, 0.5, -0.5).entries
    assert np.all(S == 0.0)
    assert np.abs(build_s_acoustic(SYSTEM, 0.1, -0.9).entries).max() > 0


def test_energy_of_uniform_state():
    mesh = build_mesh(0.0, 300.0, 40)
    ops = build_operators(mesh, 150.0, 2, SYSTEM.flux)  # fitted: interface on a node
    u0, p0 = 0.3, 2.0e5

    def state(mat):
        m, q = to_conservative(mat, u0, p0)
        return lambda x: np.stack([m + 0 * x, q + 0 * x])

    u = project_initial(ops, state(WATER), state(ROCK))
    density = lambda mat: mat.rho * u0**2 + p0**2 / (mat.rho * mat.c**2)
    expect = 0.5 * 150.0 * (density(WATER) + density(ROCK))
    assert acoustic_energy(SYSTEM, ops, u) == pytest.approx(expect, rel=1e-12)
    scalar = build_operators(mesh, 150.0, 2, FluxModel.scalar(1.0, 1.0))
    with pytest.raises(AcousticError):
        acoustic_energy(SYSTEM, scalar, np.zeros(scalar.size))


@pytest.mark.parametrize("x", [96.3, 150.0 + 1e-6])
def test_semidiscrete_energy_dissipative(x):
    mesh = build_mesh(0.0, 300.0, 30)
    ops = build_operators(mesh, x, 2, SYSTEM.flux, PenaltyConfig(0.5, -0.5))
    E = energy_matrix(SYSTEM, ops).toarray()
    # E = D M with D the diagonal side/component weights, so dE/dt = -u^T D K u
    D = np.diag(E @ np.linalg.inv(ops.mass.toarray()))
    np.testing.assert_allclose(E, D[:, None] * ops.mass.toarray(), rtol=1e-10, atol=1e-12 * np.abs(E).max())
    Q = D[:, None] * ops.spatial.toarray()
    ev = np.linalg.eigvalsh(0.5 * (Q + Q.T))
    assert ev[0] >= -1e-10 * np.abs(ev).max()


def test_pulse_support_and_smoothness():
    f = Pulse()
    xi = np.linspace(-0.01, 0.03, 4001)
    v = f(xi)
    assert np.all(v[(xi <= 0) | (xi >= 0.02)] == 0.0)
    assert np.abs(v).max() > 0.5
    # vanishing derivatives at both ends of the support
    for end in (0.0, 0.02):
        h = 1e-6
        assert abs(f(end + h) - f(end - h)) / (2 * h) < 1e-3


@settings(max_examples=60, deadline=None)
@given(t=st.floats(0.0, 0.12))
def test_exact_wave_continuous_at_interface(t):
    w = InterfaceWave(SYSTEM, 150.0)
    u1, p1 = w.primitive(1, 150.0, t)
    u2, p2 = w.primitive(2, 150.0, t)
    assert p1 == pytest.approx(p2, rel=1e-12, abs=1e-6)
    assert u1 == pytest.approx(u2, rel=1e-12, abs=1e-12)


@pytest.mark.parametrize("side,x", [(1, 60.0), (1, 130.0), (2, 190.0), (2, 260.0)])
def test_exact_wave_satisfies_equations(side, x):
    w = InterfaceWave(SYSTEM, 150.0)
    mat = SYSTEM.material(side)
    eps_t, eps_x = 1e-7, 1e-4
    ts = np.linspace(0.0, 0.12, 241)
    P = lambda x, t: np.array([w.primitive(side, x, s) for s in np.atleast_1d(t)]).T
    du_t, dp_t = (P(x, ts + eps_t) - P(x, ts - eps_t)) / (2 * eps_t)
    du_x, dp_x = (P(x + eps_x, ts) - P(x - eps_x, ts)) / (2 * eps_x)
    assert np.abs(dp_x).max() > 1.0  # the pulse crosses x inside the window
    np.testing.assert_allclose(mat.rho * du_t, -dp_x, rtol=0, atol=1e-5 * np.abs(dp_x).max())
    np.testing.assert_allclose(dp_t, -mat.rho * mat.c**2 * du_x, rtol=0, atol=1e-5 * np.abs(dp_t).max())


def test_reflection_transmission():
    w = InterfaceWave(SYSTEM, 150.0)
    z1, z2 = 1.5e6, 1200.0 * 2800.0
    assert w.reflection == pytest.approx((z2 - z1) / (z1 + z2), rel=1e-15)
    assert w.transmission == pytest.approx(1.0 + w.reflection, rel=1e-15)
