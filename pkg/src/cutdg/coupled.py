"""Locally implicit scheme: space-time slabs near a moving interface, explicit
RK2 DG elsewhere (scalar, r = (1, 1), a_i - x' > 0).

Per slab the work is sequential: explicit step left of the interface region,
implicit slab in the interface region, explicit step right of it.  The flux
through each coupling edge is the trapezoid of two stage fluxes on both sides
of that edge, which makes the scheme globally conservative.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
import scipy.sparse as sp

from .assembly1d import (
    DofLayout,
    FluxModel,
    PenaltyConfig,
    PiecewiseField,
    evaluate,
    physical_mass,
    physical_pieces,
    spatial_parts,
)
from .basis import IntervalBasis, map_gauss
from .geometry1d import BackgroundMesh1D, InterfacePath, slab_topology
from .spacetime import SlabAssembler, SlabError, TimeQuadrature, _initial_load, solve_slab


class CouplingError(RuntimeError):
    pass


@dataclass(frozen=True)
class DomainPartition:
    """Element ranges [0, lo), [lo, hi], (hi, N) and coupling nodes e1 = lo, e2 = hi + 1."""
    n_elements: int
    lo: int
    hi: int

    def __post_init__(self):
        if not 0 < self.lo <= self.hi < self.n_elements - 1:
            raise CouplingError("interface region must leave explicit elements on both sides")

    @property
    def omega_l(self) -> np.ndarray:
        return np.arange(self.lo, self.hi + 1)

    @property
    def omega_1E(self) -> np.ndarray:
        return np.arange(0, self.lo)

    @property
    def omega_2E(self) -> np.ndarray:
        return np.arange(self.hi + 1, self.n_elements)

    @property
    def coupling_edges(self) -> tuple[int, int]:
        return self.lo, self.hi + 1


def partition_for_slab(mesh: BackgroundMesh1D, path: InterfacePath, t0: float, t1: float, pad: int = 0,
                       extra_times=()) -> DomainPartition:
    """Elements with an edge in the stabilised face sets of the slab (plus
    the elements the interface visits), optionally padded."""
    topo = slab_topology(mesh, path, t0, t1, extra_times)
    core = set(topo.swept_elements.tolist())
    if not core:
        core.update(mesh.locate(float(path.position(t0))))
    for faces in topo.faces:
        for k in faces:
            core.update((int(k) - 1, int(k)))
    lo, hi = min(core) - pad, max(core) + pad
    return DomainPartition(mesh.n_elements, lo, hi)


class ExplicitRegion:
    """Uncut one-material DG on a run of background elements.

    Inflow enters at the left end; the right end is an outflow boundary.
    """

    def __init__(self, mesh: BackgroundMesh1D, first: int, last: int, a: float, degree: int):
        self.offset = first
        self.mesh = mesh.submesh(first, last)
        self.a = a
        self.layout = DofLayout(self.mesh, degree, 1, np.arange(self.mesh.n_elements), np.zeros(0, dtype=int))
        flux = FluxModel.scalar(a, a)
        parts = spatial_parts(self.layout, None, flux, PenaltyConfig())
        M = physical_mass(self.layout, None)
        self.inv_mass = 1.0 / M.diagonal()
        self.L = (-sp.diags(self.inv_mass) @ parts.total).tocsr()
        self.G = self.inv_mass * parts.inflow_left[:, 0]
        self.flux_out = parts.flux_right_u[0]
        self.flux_in_u = parts.flux_left_u[0]
        self.flux_in_g = float(parts.flux_left_g[0, 0])

    def rhs(self, u: np.ndarray, g: float) -> np.ndarray:
        return self.L @ u + self.G * g

    def step(self, u: np.ndarray, dt: float, g0: float, g1: float):
        """Heun step; returns (stage-1 state, new state, influx, outflux)."""
        u1 = u + dt * self.rhs(u, g0)
        un = 0.5 * (u + u1) + 0.5 * dt * self.rhs(u1, g1)
        fin = 0.5 * dt * (self.flux_in_u @ u + self.flux_in_g * g0 + self.flux_in_u @ u1 + self.flux_in_g * g1)
        fout = 0.5 * dt * (self.flux_out @ u + self.flux_out @ u1)
        return u1, un, fin, fout

    def trace_right(self, u: np.ndarray) -> float:
        return float(evaluate(self.layout, u, 1, [self.mesh.x_right])[0])

    def gather(self, f: PiecewiseField, side: int) -> np.ndarray:
        n = self.mesh.n_elements
        vals = f.coef[side - 1, self.offset : self.offset + n]
        if np.any(np.isnan(vals)):
            raise CouplingError("explicit region reads undefined coefficients")
        return vals.ravel().copy()

    def scatter(self, f: PiecewiseField, side: int, u: np.ndarray) -> None:
        n = self.mesh.n_elements
        f.coef[side - 1, self.offset : self.offset + n] = u.reshape(n, -1)


def rk2_explicit_step(region: ExplicitRegion, u: np.ndarray, dt: float, g0: float = 0.0, g1: float = 0.0):
    u1, un, _, _ = region.step(u, dt, g0, g1)
    return u1, un


def project_elementwise(mesh: BackgroundMesh1D, degree: int, f1: Callable, f2: Callable) -> PiecewiseField:
    """L2 projection of f_i onto every full background element, both sides."""
    basis = IntervalBasis(degree)
    a, b = mesh.nodes[:-1], mesh.nodes[1:]
    xq, wq = map_gauss(a, b, degree + 6)
    phi = basis.eval(a[:, None], b[:, None], xq)
    out = PiecewiseField.empty(mesh, degree)
    for side, f in ((1, f1), (2, f2)):
        vals = np.asarray(f(xq), dtype=float)
        out.coef[side - 1] = np.einsum("eq,eq,eqa->ea", wq, vals, phi) / (b - a)[:, None]
    return out


def field_total(f: PiecewiseField, x_gamma: float) -> float:
    """Integral of side 1 over [x_L, x_gamma] plus side 2 over [x_gamma, x_R]."""
    mesh = f.mesh
    layout = DofLayout(mesh, f.degree, 1, np.arange(mesh.n_elements), np.arange(mesh.n_elements))
    total = 0.0
    basis = IntervalBasis(f.degree)
    for side in (1, 2):
        elems, a, b, lo, hi = physical_pieces(layout, side, x_gamma)
        xq, wq = map_gauss(lo, hi, f.degree + 2)
        phi = basis.eval(a[:, None], b[:, None], xq)
        total += float(np.einsum("eq,eqa,ea->", wq, phi, f.coef[side - 1, elems]))
    return total


@dataclass
class CoupledRun:
    times: np.ndarray
    influx: np.ndarray
    totals: np.ndarray
    final: PiecewiseField
    x_gamma_final: float
    partitions: list = field(default_factory=list)
    slab_balance: list = field(default_factory=list)  # per slab |Omega_l mass change - Omega_l net influx|

    @property
    def conservation_error(self) -> np.ndarray:
        return self.influx - (self.totals - self.totals[0])


def coupled_advance(mesh: BackgroundMesh1D, flux: FluxModel, penalties: PenaltyConfig, path: InterfacePath,
                    initial, g: Callable, t_end: float, dt: float, pad: int = 0, t0: float = 0.0,
                    on_partition: Optional[Callable] = None) -> CoupledRun:
    """March the locally implicit scheme with r = (1, 1).

    `initial` is a pair of callables (projected elementwise) or a PiecewiseField.
    """
    r = 1
    a1, a2 = float(flux.A1[0, 0]), float(flux.A2[0, 0])
    n = int(round((t_end - t0) / dt))
    if n < 1 or abs(n * dt - (t_end - t0)) > 1e-9 * max(1.0, abs(t_end)):
        raise CouplingError("dt must divide the integration interval")
    quad = TimeQuadrature.trapezoid()
    fld = initial if isinstance(initial, PiecewiseField) else project_elementwise(mesh, r, *initial)
    fld = PiecewiseField(mesh, r, fld.coef.copy())
    regions: dict = {}
    assemblers: dict = {}
    times, influx = [t0], [0.0]
    totals = [field_total(fld, float(path.position(t0)))]
    parts_seen: list = []
    balance: list = []
    cum = 0.0
    for k in range(n):
        ta, tb = t0 + k * dt, t0 + (k + 1) * dt
        tq = np.linspace(ta, tb, 5)
        v = np.asarray(path.velocity(tq), dtype=float) + 0.0 * tq
        if np.any(a1 - v <= 0) or np.any(a2 - v <= 0):
            raise CouplingError("sign condition a_i - x' > 0 violated")
        part = partition_for_slab(mesh, path, ta, tb, pad, extra_times=quad.points(ta, dt))
        if on_partition is not None:
            on_partition(k, part)
        if not parts_seen or parts_seen[-1] != (part.lo, part.hi):
            parts_seen.append((part.lo, part.hi))
        key = (part.lo, part.hi)
        if key not in regions:
            regions[key] = (ExplicitRegion(mesh, 0, part.lo - 1, a1, r),
                            ExplicitRegion(mesh, part.hi + 1, mesh.n_elements - 1, a2, r))
            sub = mesh.submesh(part.lo, part.hi)
            assemblers[key] = (sub, SlabAssembler(sub, r, 1, flux, penalties, path, quad, "ibp"))
        left, right = regions[key]
        sub, asm = assemblers[key]
        # (i) explicit step left of the interface region
        u = left.gather(fld, 1)
        u1, un, fin_left, _ = left.step(u, dt, float(np.ravel(g(ta))[0]), float(np.ravel(g(tb))[0]))
        e1_data = np.array([[left.trace_right(u), 0.0], [left.trace_right(u1), 0.0]])
        # (ii) space-time slab; inflow data at e1 are the explicit stage traces
        try:
            space = asm.space(ta, dt)
        except SlabError as exc:
            raise CouplingError(str(exc)) from exc
        xa = float(path.position(ta))
        sub_field = PiecewiseField(sub, r, fld.coef[:, part.lo : part.hi + 1])
        load = _initial_load(space.layout, xa, sub_field)
        system = asm.assemble(space, ta, dt, load, e1_data)
        sol = solve_slab(system)
        start = float(evaluate(space.layout, sol.start_trace, 2, [sub.x_right])[0])
        end = float(evaluate(space.layout, sol.end_trace, 2, [sub.x_right])[0])
        before = float(load[0 :: space.layout.nb].sum())
        # (iii) explicit step right of the interface region, inflow = slab traces at e2
        w = right.gather(fld, 2)
        _, wn, _, fout_right = right.step(w, dt, start, end)
        # hand the new states back to the background field
        left.scatter(fld, 1, un)
        right.scatter(fld, 2, wn)
        sub_new = PiecewiseField.from_layout(space.layout, sol.end_trace)
        for side in (1, 2):
            elems = space.layout.elements(side)
            fld.coef[side - 1, elems + part.lo] = sub_new.coef[side - 1, elems]
        xb = float(path.position(tb))
        after = field_total(PiecewiseField(sub, r, fld.coef[:, part.lo : part.hi + 1]), xb)
        balance.append(abs((after - before) - sol.influx))
        cum += fin_left - fout_right
        times.append(tb)
        influx.append(cum)
        totals.append(field_total(fld, xb))
    return CoupledRun(np.array(times), np.array(influx), np.array(totals), fld, float(path.position(t_end)),
                      parts_seen, balance)
