"""Space-time cut DG slabs for a moving interface (scalar flux).

Slab unknowns are u(x, t) = sum_l psi_l(t) U_l(x) with psi_l the orthonormal
Legendre polynomials on the slab, U_l living on the spatial dof layout of the
slab's active meshes.  Vectors are stored time-mode major: index l*ns + i.

Two weak forms are supported: "ibp" (time derivative moved onto the test
function, conservative for any time quadrature) and "direct" (time derivative
kept on the trial function, upwind jump at the slab start).
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from numpy.polynomial import legendre as npleg

from .assembly1d import (
    AssemblyError,
    DofLayout,
    FluxModel,
    PenaltyConfig,
    LocalDense,
    PiecewiseField,
    ghost_penalty_matrix,
    integration_weights,
    load_vector,
    local_dofs,
    physical_mass,
    select_faces,
    snap_interface,
    spatial_parts,
)
from .basis import IntervalBasis, map_gauss
from .geometry1d import BackgroundMesh1D, GeometryError, InterfacePath, SlabTopology, slab_topology


class SlabError(RuntimeError):
    pass


@dataclass(frozen=True)
class TimeQuadrature:
    kind: str
    nodes: np.ndarray  # relative positions in [0, 1]
    fractions: np.ndarray  # weights as fractions of the slab length

    @classmethod
    def trapezoid(cls) -> "TimeQuadrature":
        return cls("trapezoid", np.array([0.0, 1.0]), np.array([0.5, 0.5]))

    @classmethod
    def simpson(cls) -> "TimeQuadrature":
        return cls("simpson", np.array([0.0, 0.5, 1.0]), np.array([1.0, 4.0, 1.0]) / 6.0)

    @classmethod
    def by_name(cls, name: str) -> "TimeQuadrature":
        return {"trapezoid": cls.trapezoid, "simpson": cls.simpson}[name]()

    def points(self, t0: float, dt: float) -> np.ndarray:
        return t0 + dt * self.nodes

    def weights(self, dt: float) -> np.ndarray:
        return dt * self.fractions


def time_basis(r_t: int, tau) -> tuple[np.ndarray, np.ndarray]:
    """psi_l(tau) = sqrt(2l+1) P_l(2 tau - 1) and d psi_l / d tau; shapes (len(tau), r_t+1)."""
    tau = np.atleast_1d(np.asarray(tau, dtype=float))
    s = 2.0 * tau - 1.0
    vals = np.zeros((len(tau), r_t + 1))
    ders = np.zeros((len(tau), r_t + 1))
    for l in range(r_t + 1):
        c = np.zeros(l + 1)
        c[l] = np.sqrt(2 * l + 1)
        vals[:, l] = npleg.legval(s, c)
        ders[:, l] = 2.0 * npleg.legval(s, npleg.legder(c)) if l else 0.0
    return vals, ders


@dataclass
class SlabSpace:
    mesh: BackgroundMesh1D
    r_s: int
    r_t: int
    topology: SlabTopology
    layout: DofLayout = field(init=False)

    def __post_init__(self):
        if self.r_t not in (0, 1, 2):
            raise SlabError("time degree must be 0, 1 or 2")
        self.layout = DofLayout(self.mesh, self.r_s, 1, self.topology.active_1, self.topology.active_2)

    @property
    def ns(self) -> int:
        return self.layout.size

    @property
    def size(self) -> int:
        return (self.r_t + 1) * self.ns

    def trace(self, U: np.ndarray, tau: float) -> np.ndarray:
        """Spatial coefficients of the slab solution at relative time tau."""
        psi, _ = time_basis(self.r_t, [tau])
        return psi[0] @ U.reshape(self.r_t + 1, self.ns)



def _time_blocks(r_t: int, quad: TimeQuadrature, dt: float, formulation: str):
    """Temporal coefficient matrices (row = test mode, column = trial mode).

    Returns (TK[q], TM[q], T_end, end_tau): the slab matrix is
    sum_q kron(TK[q], K(t_q)) + kron(TM[q], M(t_q)) + kron(T_end, M(t_end_tau)).
    """
    psi, dpsi_tau = time_basis(r_t, quad.nodes)
    dpsi = dpsi_tau / dt
    w = quad.weights(dt)
    TK = [w[q] * np.outer(psi[q], psi[q]) for q in range(len(w))]
    if formulation == "ibp":
        TM = [-w[q] * np.outer(dpsi[q], psi[q]) for q in range(len(w))]
        p1, _ = time_basis(r_t, [1.0])
        return TK, TM, np.outer(p1[0], p1[0]), 1.0
    TM = [w[q] * np.outer(psi[q], dpsi[q]) for q in range(len(w))]
    p0, _ = time_basis(r_t, [0.0])
    return TK, TM, np.outer(p0[0], p0[0]), 0.0


class _SweptBlocks:
    """Interface-dependent part of M(t) and a_h(t) as dense blocks on the
    local dofs: volume terms of the swept elements, edges at their nodes and
    the interface coupling.  Same terms as the restricted sparse assembly,
    without the generic-collector overhead."""

    def __init__(self, layout: DofLayout, only: np.ndarray, local: np.ndarray, flux: FluxModel,
                 penalties: PenaltyConfig, formulation: str):
        self.layout, self.flux, self.formulation = layout, flux, formulation
        self.lambdas = penalties.lambdas
        mesh = layout.mesh
        self.mesh = mesh
        self.basis = IntervalBasis(layout.degree)
        self.nb = layout.nb
        self.nq = layout.degree + 2
        pos = np.full(layout.size, -1, dtype=int)
        pos[local] = np.arange(len(local))
        self.pos = pos
        self.d = len(local)
        self.elems = {}
        self.nodes = {}
        cand = np.unique(np.concatenate([only, only + 1]))
        cand = cand[(cand >= 1) & (cand <= mesh.n_elements - 1)]
        for side in (1, 2):
            el = only[layout.has(side, only)]
            self.elems[side] = (el, pos[layout.base(side, el)])
            ok = layout.has(side, cand - 1) & layout.has(side, cand)
            nd = cand[ok]
            self.nodes[side] = (nd, pos[layout.base(side, nd - 1)], pos[layout.base(side, nd)])
        pL, pR = self.basis.endpoint_values(0)
        self.edge = {}
        for side in (1, 2):
            A = flux.A1[0, 0] if side == 1 else flux.A2[0, 0]
            lam = flux.edge_speed(side)
            ap, am = 0.5 * (A + lam), 0.5 * (A - lam)
            self.edge[side] = (ap * np.outer(pR, pR), am * np.outer(pR, pL), -ap * np.outer(pL, pR),
                               -am * np.outer(pL, pL))

    def __call__(self, x: float, v: float) -> tuple[np.ndarray, np.ndarray]:
        mesh, nb, basis = self.mesh, self.nb, self.basis
        x = snap_interface(mesh, x)
        M = np.zeros((self.d, self.d))
        K = np.zeros((self.d, self.d))
        for side in (1, 2):
            A = self.flux.A1[0, 0] if side == 1 else self.flux.A2[0, 0]
            lo_s, hi_s = (mesh.x_left, x) if side == 1 else (x, mesh.x_right)
            el, lb = self.elems[side]
            if len(el):
                a, b = mesh.nodes[el], mesh.nodes[el + 1]
                lo, hi = np.maximum(a, lo_s), np.minimum(b, hi_s)
                xq, wq = map_gauss(lo, hi, self.nq)
                phi = basis.eval(a[:, None], b[:, None], xq)
                dphi = basis.eval(a[:, None], b[:, None], xq, 1) if nb > 1 else np.zeros_like(phi)
                mass = np.einsum("eq,eqa,eqb->eba", wq, phi, phi)
                adv = -A * np.einsum("eq,eqb,eqa->eba", wq, dphi, phi)
                for k in range(len(el)):
                    if hi[k] <= lo[k]:
                        continue
                    s = slice(lb[k], lb[k] + nb)
                    M[s, s] += (b[k] - a[k]) * np.eye(nb) if (lo[k] == a[k] and hi[k] == b[k]) else mass[k]
                    K[s, s] += adv[k]
            nd, bl, br = self.nodes[side]
            e_ll, e_lr, e_rl, e_rr = self.edge[side]
            for k in range(len(nd)):
                if not lo_s < mesh.nodes[nd[k]] < hi_s:
                    continue
                L, R = slice(bl[k], bl[k] + nb), slice(br[k], br[k] + nb)
                K[L, L] += e_ll
                K[L, R] += e_lr
                K[R, L] += e_rl
                K[R, R] += e_rr
        j1, j2 = mesh.locate(x)
        i1 = self.pos[self.layout.base(1, [j1])[0]]
        i2 = self.pos[self.layout.base(2, [j2])[0]]
        if i1 < 0 or i2 < 0:
            raise AssemblyError("interface element outside the local dof set")
        p1 = basis.eval(mesh.nodes[j1], mesh.nodes[j1 + 1], x)
        p2 = basis.eval(mesh.nodes[j2], mesh.nodes[j2 + 1], x)
        H1 = self.flux.A1[0, 0] - v
        H2 = self.flux.A2[0, 0] - v
        G1, G2 = (H1, H2) if self.formulation == "ibp" else (self.flux.A1[0, 0], self.flux.A2[0, 0])
        l1, l2 = self.lambdas
        s1, s2 = slice(i1, i1 + nb), slice(i2, i2 + nb)
        K[s1, s1] += (G1 - l1 * H1) * np.outer(p1, p1)
        K[s1, s2] += l1 * H2 * np.outer(p1, p2)
        K[s2, s1] += l2 * H1 * np.outer(p2, p1)
        K[s2, s2] += (-G2 - l2 * H2) * np.outer(p2, p2)
        return M, K


@dataclass
class _TopologyCache:
    key: tuple
    space: "SlabSpace"
    only: np.ndarray  # swept elements
    local: np.ndarray  # spatial dofs touched by interface-dependent terms
    slab_local: np.ndarray  # the same dofs in slab numbering
    mass_s: sp.csr_matrix
    spatial_s: sp.csr_matrix
    J0: sp.csr_matrix
    inflow: np.ndarray  # (ns, 2)
    flux_u: np.ndarray  # (2, ns): F_L, F_R acting on u
    flux_g: np.ndarray  # (2,): F_L per unit g_L, F_R per unit g_R
    blocks: Optional[_SweptBlocks] = None
    A_ref: Optional[sp.csr_matrix] = None
    bracket_ref: Optional[np.ndarray] = None
    lu: object = None
    Z: Optional[np.ndarray] = None


@dataclass
class SlabSystem:
    """A_ref + P E P^T with P selecting the interface-dependent slab dofs."""
    A_ref: sp.csr_matrix
    update: np.ndarray  # E, dense on slab_local
    slab_local: np.ndarray
    rhs: np.ndarray
    formulation: str
    space: SlabSpace
    t0: float
    dt: float
    quad: TimeQuadrature
    influx_u: np.ndarray  # influx over the slab = influx_u @ U + influx_g
    influx_g: float
    lu: object = None
    Z: Optional[np.ndarray] = None

    @property
    def matrix(self) -> sp.csr_matrix:
        idx = self.slab_local
        r, c = np.meshgrid(idx, idx, indexing="ij")
        upd = sp.coo_matrix((self.update.ravel(), (r.ravel(), c.ravel())), shape=self.A_ref.shape)
        return (self.A_ref + upd).tocsr()

    def apply(self, U: np.ndarray) -> np.ndarray:
        out = self.A_ref @ U
        out[self.slab_local] += self.update @ U[self.slab_local]
        return out


class SlabAssembler:
    """Assembles slab systems.

    Everything away from the swept elements is identical for all slabs that
    share a topology, so it is assembled and factorised once; the per-slab
    change is a small dense block handled by a low-rank update.
    """

    def __init__(self, mesh: BackgroundMesh1D, r_s: int, r_t: int, flux: FluxModel, penalties: PenaltyConfig,
                 path: InterfacePath, quad: TimeQuadrature, formulation: str = "ibp"):
        if flux.m != 1:
            raise SlabError("space-time slabs support scalar fluxes only")
        if formulation not in ("ibp", "direct"):
            raise SlabError(f"unknown formulation {formulation}")
        self.mesh, self.r_s, self.r_t = mesh, r_s, r_t
        self.flux, self.penalties, self.path = flux, penalties, path
        self.quad, self.formulation = quad, formulation
        self._cache: Optional[_TopologyCache] = None
        self.sign_warnings = 0

    def space(self, t0: float, dt: float) -> SlabSpace:
        tq = self.quad.points(t0, dt)
        x0 = float(self.path.position(t0))
        x1 = float(self.path.position(t0 + dt))
        if abs(x1 - x0) >= self.mesh.h:
            raise SlabError("slab sweeps more than one element; reduce the time step")
        try:
            topo = slab_topology(self.mesh, self.path, t0, t0 + dt, extra_times=tq)
        except GeometryError as exc:
            raise SlabError(str(exc)) from exc
        return SlabSpace(self.mesh, self.r_s, self.r_t, topo)

    def _check_signs(self, tq: np.ndarray) -> None:
        a1 = self.flux.A1[0, 0]
        a2 = self.flux.A2[0, 0]
        for t in tq:
            v = float(self.path.velocity(t))
            if (a1 - v) * (a2 - v) <= 0.0:
                self.sign_warnings += 1
                warnings.warn("a_i - x_gamma' changes sign; energy estimate does not apply", RuntimeWarning)
                return

    def _local(self, cache: _TopologyCache, t: float) -> tuple[np.ndarray, np.ndarray]:
        return cache.blocks(float(self.path.position(t)), float(self.path.velocity(t)))

    def _local_reference(self, cache: _TopologyCache, t: float) -> tuple[np.ndarray, np.ndarray]:
        """Same blocks through the generic restricted assembly (test route)."""
        layout = cache.space.layout
        x = float(self.path.position(t))
        v = float(self.path.velocity(t))
        make = lambda n: LocalDense(cache.local, n)
        M = physical_mass(layout, x, only=cache.only, collector=make)
        K = spatial_parts(layout, x, self.flux, self.penalties, v, self.formulation, only=cache.only,
                          collector=make).total
        return M, K

    def _slab_faces(self, topo, t0: float, dt: float) -> tuple[np.ndarray, np.ndarray]:
        """Union over the slab's sample times of the per-instant face choice,
        so a side that is small anywhere in the slab stays stabilised."""
        times = np.concatenate([[t0], self.quad.points(t0, dt), [t0 + dt]])
        keep = [np.zeros(0, dtype=int), np.zeros(0, dtype=int)]
        for t in times:
            sel = select_faces(self.mesh, topo.faces, float(self.path.position(t)), self.penalties.face_rule)
            keep = [np.union1d(k, f) for k, f in zip(keep, sel)]
        return keep[0].astype(int), keep[1].astype(int)

    def _topology(self, space: SlabSpace, t_ref: float, dt: float) -> _TopologyCache:
        topo = space.topology
        faces = self._slab_faces(topo, t_ref, dt)
        key = (tuple(topo.active_1), tuple(topo.active_2), tuple(topo.swept_elements),
               tuple(faces[0]), tuple(faces[1]), dt)
        if self._cache is not None and self._cache.key == key:
            return self._cache
        layout = space.layout
        ns = layout.size
        x = float(self.path.position(t_ref))
        v = float(self.path.velocity(t_ref))
        only = np.asarray(topo.swept_elements, dtype=int)
        if len(only) == 0:
            # interface parked on a node: its coupling still changes with x'
            only = np.unique(self.mesh.locate(x))
        local = local_dofs(layout, only)
        mass_full = physical_mass(layout, x)
        parts = spatial_parts(layout, x, self.flux, self.penalties, v, self.formulation)
        cache = _TopologyCache(
            key, space, only, local,
            np.concatenate([l * ns + local for l in range(self.r_t + 1)]),
            mass_full, parts.total,
            ghost_penalty_matrix(layout, faces, 0, self.penalties.omegas(self.r_s)),
            np.hstack([parts.inflow_left, parts.inflow_right]),
            np.vstack([parts.flux_left_u, parts.flux_right_u]),
            np.array([parts.flux_left_g[0, 0], parts.flux_right_g[0, 0]]),
        )
        cache.blocks = _SweptBlocks(layout, only, local, self.flux, self.penalties, self.formulation)
        if len(local):
            M_d, K_d = self._local(cache, t_ref)
            cache.mass_s = (mass_full - _scatter(M_d, local, ns)).tocsr()
            cache.spatial_s = (parts.total - _scatter(K_d, local, ns)).tocsr()
        self._cache = cache
        return cache

    def assemble(self, space: SlabSpace, t0: float, dt: float, prev_load: np.ndarray,
                 g_values: np.ndarray) -> SlabSystem:
        """g_values: (n_quad, 2) boundary data (left, right) at the quadrature times."""
        ns, nt = space.ns, self.r_t + 1
        tq = self.quad.points(t0, dt)
        wq = self.quad.weights(dt)
        self._check_signs(tq)
        cache = self._topology(space, t0, dt)
        space = cache.space
        TK, TM, T_end, end_tau = _time_blocks(self.r_t, self.quad, dt, self.formulation)
        d = len(cache.local)
        bracket = np.zeros((nt * d, nt * d))
        local_mass = {}
        for q, t in enumerate(tq):
            M_d, K_d = self._local(cache, t) if d else (np.zeros((0, 0)), np.zeros((0, 0)))
            local_mass[float(self.quad.nodes[q])] = M_d
            bracket += np.kron(TK[q], K_d) + np.kron(TM[q], M_d)
        if d:
            M_end = local_mass.get(end_tau)
            if M_end is None:
                M_end = self._local(cache, t0 + end_tau * dt)[0]
            bracket += np.kron(T_end, M_end)
        if cache.A_ref is None:
            A = (sp.kron(sum(TK), cache.spatial_s) + sp.kron(sum(TM) + T_end, cache.mass_s)
                 + sp.kron(dt * self.penalties.gamma_A * np.eye(nt), cache.J0))
            cache.A_ref = (A + _scatter(bracket, cache.slab_local, nt * ns)).tocsc()
            cache.bracket_ref = bracket.copy()
            try:
                cache.lu = spla.splu(cache.A_ref)
            except RuntimeError as exc:
                raise SlabError("singular slab system") from exc
            if d:
                P = np.zeros((nt * ns, nt * d))
                P[cache.slab_local, np.arange(nt * d)] = 1.0
                cache.Z = cache.lu.solve(P)
        psi, _ = time_basis(self.r_t, self.quad.nodes)
        p0, _ = time_basis(self.r_t, [0.0])
        rhs = np.kron(p0[0], prev_load)
        net_u = cache.flux_u[0] - cache.flux_u[1]
        influx_u = np.zeros(nt * ns)
        influx_g = 0.0
        for q in range(len(tq)):
            gq = np.asarray(g_values[q], dtype=float)
            rhs += wq[q] * np.kron(psi[q], cache.inflow @ gq)
            influx_u += wq[q] * np.kron(psi[q], net_u)
            influx_g += wq[q] * (cache.flux_g[0] * gq[0] - cache.flux_g[1] * gq[1])
        return SlabSystem(cache.A_ref, bracket - cache.bracket_ref, cache.slab_local, rhs, self.formulation, space,
                          t0, dt, self.quad, influx_u, float(influx_g), cache.lu, cache.Z)


def _scatter(block: np.ndarray, idx: np.ndarray, n: int) -> sp.csr_matrix:
    r, c = np.meshgrid(idx, idx, indexing="ij")
    return sp.coo_matrix((block.ravel(), (r.ravel(), c.ravel())), shape=(n, n)).tocsr()


@dataclass
class SlabSolution:
    U: np.ndarray
    condition_estimate: float
    end_trace: np.ndarray  # spatial coefficients at t^n,-
    start_trace: np.ndarray  # spatial coefficients at t^{n-1},+
    influx: float
    residual: float


def solve_slab(system: SlabSystem, estimate_condition: bool = False) -> SlabSolution:
    """Direct solve; with a cached factorisation of A_ref the update is applied
    by the Woodbury identity followed by one step of iterative refinement."""
    b = system.rhs
    if system.lu is None:
        try:
            lu = spla.splu(system.matrix.tocsc())
        except RuntimeError as exc:
            raise SlabError("singular slab system") from exc
        U = lu.solve(b)
    else:
        U = _woodbury(system, b)
        U = U + _woodbury(system, b - system.apply(U))
    if not np.all(np.isfinite(U)):
        raise SlabError("singular slab system")
    res = float(np.linalg.norm(b - system.apply(U)) / max(np.linalg.norm(b), 1e-300))
    cond = float(np.linalg.cond(system.matrix.toarray())) if estimate_condition else float("nan")
    space = system.space
    return SlabSolution(U, cond, space.trace(U, 1.0), space.trace(U, 0.0),
                        float(system.influx_u @ U + system.influx_g), res)


def _woodbury(system: SlabSystem, b: np.ndarray) -> np.ndarray:
    y = system.lu.solve(b)
    E = system.update
    if E.size == 0 or not np.any(E):
        return y
    idx = system.slab_local
    Z = system.Z
    k = len(idx)
    S = np.eye(k) + E @ Z[idx]
    w = np.linalg.solve(S, E @ y[idx])
    return y - Z @ w


@dataclass
class SpaceTimeRun:
    times: np.ndarray
    influx: np.ndarray  # cumulative boundary influx
    totals: np.ndarray  # integral of u^{n,-} over Omega(t^n)
    final: PiecewiseField
    final_layout: DofLayout
    final_coefficients: np.ndarray
    x_gamma_final: float
    energies: Optional[np.ndarray] = None

    @property
    def conservation_error(self) -> np.ndarray:
        return self.influx - (self.totals - self.totals[0])


def _initial_load(layout: DofLayout, x: float, initial) -> np.ndarray:
    if isinstance(initial, PiecewiseField):
        return load_vector(layout, x, lambda xq: initial.evaluate(1, xq), lambda xq: initial.evaluate(2, xq))
    f1, f2 = initial
    return load_vector(layout, x, f1, f2)


def advance(
    mesh: BackgroundMesh1D,
    r_s: int,
    r_t: int,
    flux: FluxModel,
    penalties: PenaltyConfig,
    path: InterfacePath,
    initial,
    g: Callable,
    t_end: float,
    dt: float,
    quad: TimeQuadrature = TimeQuadrature.simpson(),
    formulation: str = "ibp",
    energy_eta: Optional[float] = None,
    t0: float = 0.0,
) -> SpaceTimeRun:
    """March slabs of equal length dt from t0 to t_end.

    `initial` is a pair of callables (side 1, side 2) or a PiecewiseField.
    g(t) returns the inflow data; a scalar is used at the left boundary and
    zero at the right, or a pair (left, right).
    """
    n = int(round((t_end - t0) / dt))
    if n < 1 or abs(n * dt - (t_end - t0)) > 1e-9 * max(1.0, abs(t_end)):
        raise SlabError("dt must divide the integration interval")
    asm = SlabAssembler(mesh, r_s, r_t, flux, penalties, path, quad, formulation)
    field_prev = initial
    times = [t0]
    influx = [0.0]
    totals: list = []
    energies: list = []
    cum = 0.0
    space = None
    U_end = None
    for k in range(n):
        ta = t0 + k * dt
        space = asm.space(ta, dt)
        xa = float(path.position(ta))
        load = _initial_load(space.layout, xa, field_prev)
        if k == 0:
            totals.append(_constant_total(space.layout, load))
        gq = np.array([_boundary_pair(g, t) for t in quad.points(ta, dt)])
        system = asm.assemble(space, ta, dt, load, gq)
        sol = solve_slab(system)
        cum += sol.influx
        xb = float(path.position(ta + dt))
        U_end = sol.end_trace
        totals.append(float(integration_weights(space.layout, xb)[0] @ U_end))
        influx.append(cum)
        times.append(ta + dt)
        if energy_eta is not None:
            from .analysis import weighted_energy_layout
            energies.append(weighted_energy_layout(space.layout, xb, U_end, energy_eta))
        field_prev = PiecewiseField.from_layout(space.layout, U_end, mesh=mesh)
    return SpaceTimeRun(np.array(times), np.array(influx), np.array(totals), field_prev, space.layout, U_end,
                        float(path.position(t_end)), np.array(energies) if energies else None)


def _constant_total(layout: DofLayout, load: np.ndarray) -> float:
    """Sum of the constant-mode load entries = integral of the loaded function."""
    nb = layout.nb
    return float(load[0::nb].sum())


def _boundary_pair(g: Callable, t: float) -> np.ndarray:
    val = np.asarray(g(t), dtype=float).ravel()
    if val.size == 1:
        return np.array([val[0], 0.0])
    return val[:2]
