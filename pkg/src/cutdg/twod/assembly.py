"""Cut DG for  u_t + div(a_i u) = 0  on a triangle mesh with a straight interface.

Same conventions as the 1D assembly: mass u' = -spatial u + inflow g, interface
blocks C = [[H1 - l1 H1, l1 H2], [l2 H1, -H2 - l2 H2]] with H_i = a_i . n,
Lax-Friedrichs fluxes on interior edges with lambda_e = |a_i . n_e| and ghost
penalties on normal-derivative jumps.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property
from typing import Callable, Optional

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from ..assembly1d import PenaltyConfig
from ..basis import TriangleBasis, map_gauss, map_triangles, polygon_rule
from .mesh import Classification2D, Geometry2DError, LineInterface, TriMesh, classify_2d

INFLOW_TAGS = ("x_min", "y_min")


class Assembly2DError(ValueError):
    pass


@dataclass(frozen=True)
class Layout2D:
    degree: int
    nb: int
    n_triangles: int
    active: tuple  # (side-1 triangles, side-2 triangles)

    @cached_property
    def slots(self) -> tuple[np.ndarray, np.ndarray]:
        out = []
        for act in self.active:
            s = np.full(self.n_triangles, -1)
            s[act] = np.arange(len(act))
            out.append(s)
        return tuple(out)

    @property
    def n1(self) -> int:
        return len(self.active[0]) * self.nb

    @property
    def size(self) -> int:
        return (len(self.active[0]) + len(self.active[1])) * self.nb

    def base(self, side: int, tris) -> np.ndarray:
        s = self.slots[side - 1][np.asarray(tris)]
        if np.any(s < 0):
            raise Assembly2DError("triangle not active on this side")
        return (0 if side == 1 else self.n1) + s * self.nb

    def side_slice(self, side: int) -> slice:
        return slice(0, self.n1) if side == 1 else slice(self.n1, self.size)


class TriBasis:
    """The orthonormalised triangle basis bound to the frames of one mesh."""

    def __init__(self, mesh: TriMesh, degree: int):
        self.degree = degree
        self.basis = TriangleBasis(degree)
        self.nb = self.basis.dof_count
        self.frames = self.basis.frames(mesh.corners)

    def eval(self, tris, pts, dx: int = 0, dy: int = 0) -> np.ndarray:
        """Values at pts (k, nq, 2) for triangles tris (k,)."""
        return self.basis.eval(self.frames, np.asarray(tris)[:, None], pts, (dx, dy))

    def grad(self, tris, pts) -> np.ndarray:
        return np.stack([self.eval(tris, pts, 1, 0), self.eval(tris, pts, 0, 1)], axis=-1)

    def normal_derivative(self, tris, pts, n, k: int) -> np.ndarray:
        """k-th derivative along n (k, 2) per triangle."""
        return self.basis.eval_normal(self.frames, np.asarray(tris)[:, None], pts, np.asarray(n)[:, None, :], k)


def segment_rule(p, q, degree: int) -> tuple[np.ndarray, np.ndarray]:
    """Gauss rule on segments p -> q (k, 2); points (k, nq, 2), weights (k, nq)."""
    p = np.atleast_2d(np.asarray(p, dtype=float))
    q = np.atleast_2d(np.asarray(q, dtype=float))
    s, w = map_gauss(0.0, 1.0, degree // 2 + 1)
    pts = p[:, None, :] + s[None, :, None] * (q - p)[:, None, :]
    return pts, np.linalg.norm(q - p, axis=1)[:, None] * w[None, :]


def _polygon(poly: np.ndarray, degree: int) -> tuple[np.ndarray, np.ndarray]:
    if len(poly) < 3:
        return np.zeros((0, 2)), np.zeros(0)
    rule = polygon_rule(degree, poly)
    return rule.points, rule.weights


class _Coo:
    def __init__(self, n: int):
        self.n = n
        self.rows, self.cols, self.vals = [], [], []

    def add(self, rbase, cbase, blocks) -> None:
        rbase = np.asarray(rbase)
        cbase = np.asarray(cbase)
        blocks = np.asarray(blocks)
        if blocks.size == 0:
            return
        nb_r, nb_c = blocks.shape[-2:]
        r = rbase[:, None, None] + np.arange(nb_r)[None, :, None]
        c = cbase[:, None, None] + np.arange(nb_c)[None, None, :]
        self.rows.append(np.broadcast_to(r, blocks.shape).ravel())
        self.cols.append(np.broadcast_to(c, blocks.shape).ravel())
        self.vals.append(blocks.ravel())

    def tocsr(self) -> sp.csr_matrix:
        if not self.rows:
            return sp.csr_matrix((self.n, self.n))
        return sp.coo_matrix((np.concatenate(self.vals), (np.concatenate(self.rows), np.concatenate(self.cols))),
                             shape=(self.n, self.n)).tocsr()


@dataclass(frozen=True)
class Problem2D:
    a1: tuple
    a2: tuple

    def velocity(self, side: int) -> np.ndarray:
        return np.asarray(self.a1 if side == 1 else self.a2, dtype=float)

    @property
    def max_speed(self) -> float:
        return float(max(np.linalg.norm(self.a1), np.linalg.norm(self.a2)))


def _physical_parts(cls: Classification2D, side: int, degree: int):
    """Quadrature on the side's physical region: (triangles, points, weights) per
    uncut batch plus one entry per cut triangle."""
    mesh = cls.mesh
    topo = cls.topologies[side - 1]
    pts, w = map_triangles(degree, mesh.corners[topo.uncut])
    parts = [(topo.uncut, pts, w)]
    for t, region in sorted(cls.cuts.items()):
        poly = region.polygons[side - 1]
        p, wq = _polygon(poly, degree)
        if len(wq):
            parts.append((np.array([t]), p[None], wq[None]))
    return parts


def _clip_edges(cls: Classification2D, edges: np.ndarray, side: int):
    """Vectorised clip of edges to the closed side; returns (edges, p, q) with positive length."""
    tab = cls.mesh.edges
    v = cls.mesh.vertices[tab.vertices[edges]]  # (k, 2, 2)
    s = cls.line.level(v.reshape(-1, 2)).reshape(-1, 2)
    s = np.where(np.abs(s) <= cls.tol, 0.0, s)
    if side == 2:
        s = -s
    sp_, sq = s[:, 0], s[:, 1]
    keep = np.minimum(sp_, sq) < 0
    p, q = v[:, 0].copy(), v[:, 1].copy()
    mixed = (sp_ * sq < 0)
    tstar = np.where(mixed, sp_ / np.where(mixed, sp_ - sq, 1.0), 0.0)
    x = v[:, 0] + tstar[:, None] * (v[:, 1] - v[:, 0])
    q = np.where((mixed & (sp_ < 0))[:, None], x, q)
    p = np.where((mixed & (sq < 0))[:, None], x, p)
    return edges[keep], p[keep], q[keep]


@dataclass
class Operators2D:
    layout: Layout2D
    classification: Classification2D
    basis: TriBasis
    problem: Problem2D
    penalties: PenaltyConfig
    mass: sp.csr_matrix
    mass_physical: sp.csr_matrix
    J0: sp.csr_matrix
    J1: sp.csr_matrix
    volume_edges: sp.csr_matrix
    interface: sp.csr_matrix
    outflow: sp.csr_matrix
    inflow: sp.csr_matrix  # (n, ng): load = inflow @ g
    inflow_points: np.ndarray  # (ng, 2)
    inflow_weights: np.ndarray  # (ng,) rate of mass entering per unit g
    outflow_functional: np.ndarray  # (n,) rate of mass leaving
    totals: np.ndarray  # (n,) integral over the physical domain

    @cached_property
    def spatial(self) -> sp.csr_matrix:
        return (self.volume_edges + self.interface + self.outflow + self.penalties.gamma_A * self.J0).tocsr()

    @cached_property
    def _lu(self) -> "BlockMassSolver":
        return BlockMassSolver(self.mass, self.layout, self.classification)

    @property
    def size(self) -> int:
        return self.layout.size

    @cached_property
    def _rhs_parts(self):
        S = self._lu
        ci = S.coupled_idx
        K, B = self.spatial, self.inflow
        return ((-(S.free_inv @ K)).tocsr(), (S.free_inv @ B).tocsr(), ci, (-K[ci]).tocsr(), B[ci].tocsr())

    def rhs(self, u: np.ndarray, g) -> np.ndarray:
        """mass^{-1} (-spatial u + inflow g)."""
        LK, LB, ci, KC, BC = self._rhs_parts
        g = np.asarray(g, dtype=float)
        x = LK @ u + LB @ g
        if self._lu.lu is not None:
            x[ci] = self._lu.lu.solve(KC @ u + BC @ g)
        return x

    def net_flux(self, u: np.ndarray, g) -> np.ndarray:
        return np.array([self.inflow_weights @ np.asarray(g, dtype=float) - self.outflow_functional @ u])

    def total(self, u: np.ndarray) -> np.ndarray:
        return np.array([self.totals @ u])

    def boundary_data(self, g: Callable) -> Callable:
        """g(x, y, t) -> g_vec(t) at the inflow quadrature points."""
        x, y = self.inflow_points[:, 0], self.inflow_points[:, 1]
        return lambda t: np.asarray(g(x, y, t), dtype=float) * np.ones_like(x)


class BlockMassSolver:
    """Exact solves with the stabilised mass: triangles not touching a
    stabilised face have independent nb x nb blocks (batched inverses); the
    ghost-coupled rest is factorised sparsely."""

    def __init__(self, mass: sp.csr_matrix, layout: Layout2D, cls: Classification2D):
        nb = layout.nb
        tab = cls.mesh.edges
        coupled = []
        free = []
        for side in (1, 2):
            faces = cls.topologies[side - 1].stabilized_faces
            tied = np.union1d(tab.left[faces], tab.right[faces]).astype(int)
            act = layout.active[side - 1]
            coupled.append(layout.base(side, np.intersect1d(act, tied)))
            free.append(layout.base(side, np.setdiff1d(act, tied)))
        cb = np.concatenate(coupled)
        fb = np.concatenate(free)
        self.free_idx = (fb[:, None] + np.arange(nb)[None, :])  # (nf, nb)
        self.coupled_idx = (cb[:, None] + np.arange(nb)[None, :]).ravel()
        M = mass.tocsr()
        r = np.repeat(self.free_idx, nb, axis=1).ravel()
        c = np.tile(self.free_idx, (1, nb)).ravel()
        blocks = np.asarray(M[r, c]).reshape(len(fb), nb, nb)
        inv = np.linalg.inv(blocks) if len(fb) else np.zeros((0, nb, nb))
        self.free_inv = sp.coo_matrix((inv.ravel(), (r, c)), shape=M.shape).tocsr()
        sub = M[self.coupled_idx][:, self.coupled_idx].tocsc()
        self.lu = spla.splu(sub) if len(self.coupled_idx) else None
        self.n = M.shape[0]

    def solve(self, b: np.ndarray) -> np.ndarray:
        x = self.free_inv @ b
        if self.lu is not None:
            x[self.coupled_idx] = self.lu.solve(b[self.coupled_idx])
        return x


def _ghost(layout: Layout2D, basis: TriBasis, mesh: TriMesh, faces, side: int, omega, s: int, coo: _Coo) -> None:
    if len(faces) == 0:
        return
    tab = mesh.edges
    r = layout.degree
    v = mesh.vertices[tab.vertices[faces]]
    pts, w = segment_rule(v[:, 0], v[:, 1], 2 * r)
    L, R = tab.left[faces], tab.right[faces]
    n = tab.normal[faces]
    h = mesh.h
    bl, br = layout.base(side, L), layout.base(side, R)
    for k in range(r + 1):
        DL = basis.normal_derivative(L, pts, n, k)
        DR = basis.normal_derivative(R, pts, n, k)
        c = omega[k] * h ** (2 * k + s)
        coo.add(bl, bl, c * np.einsum("eq,eqa,eqb->eab", w, DL, DL))
        coo.add(bl, br, -c * np.einsum("eq,eqa,eqb->eab", w, DL, DR))
        coo.add(br, bl, -c * np.einsum("eq,eqa,eqb->eab", w, DR, DL))
        coo.add(br, br, c * np.einsum("eq,eqa,eqb->eab", w, DR, DR))


def assemble_2d(mesh: TriMesh, line: LineInterface, degree: int, problem: Problem2D,
                penalties: PenaltyConfig = PenaltyConfig()) -> Operators2D:
    cls = classify_2d(mesh, line)
    n_vec = line.n
    for side in (1, 2):
        if abs(problem.velocity(side) @ n_vec) < 1e-14:
            raise Assembly2DError("zero normal speed at the interface")
    H1, H2 = problem.velocity(1) @ n_vec, problem.velocity(2) @ n_vec
    if H1 * H2 < 0:
        raise Assembly2DError("normal speeds of opposite sign: ill-posed interface")
    basis = TriBasis(mesh, degree)
    layout = Layout2D(degree, basis.nb, mesh.n_triangles, tuple(t.triangles for t in cls.topologies))
    n = layout.size
    r = degree
    tab = mesh.edges
    M, K, Kb, Ki = _Coo(n), _Coo(n), _Coo(n), _Coo(n)
    totals = np.zeros(n)
    out_fun = np.zeros(n)
    in_rows, in_cols, in_vals, in_pts, in_w = [], [], [], [], []
    for side in (1, 2):
        a = problem.velocity(side)
        for tris, pts, w in _physical_parts(cls, side, 2 * r + 1):
            if len(tris) == 0:
                continue
            phi = basis.eval(tris, pts)
            grad = basis.grad(tris, pts)
            adv = grad @ a  # (k, nq, nb)
            base = layout.base(side, tris)
            M.add(base, base, np.einsum("eq,eqa,eqb->eab", w, phi, phi))
            K.add(base, base, -np.einsum("eq,eqa,eqb->eab", w, adv, phi))
            idx = base[:, None] + np.arange(layout.nb)[None, :]
            np.add.at(totals, idx, np.einsum("eq,eqa->ea", w, phi))
        # interior edges, clipped to the side
        edges, p, q = _clip_edges(cls, cls.topologies[side - 1].interior_edges, side)
        if len(edges):
            pts, w = segment_rule(p, q, 2 * r + 1)
            L, R = tab.left[edges], tab.right[edges]
            an = tab.normal[edges] @ a
            lam = np.abs(an)
            Ap, Am = 0.5 * (an + lam), 0.5 * (an - lam)
            pl = basis.eval(L, pts)
            pr = basis.eval(R, pts)
            bl, br = layout.base(side, L), layout.base(side, R)
            K.add(bl, bl, Ap[:, None, None] * np.einsum("eq,eqa,eqb->eab", w, pl, pl))
            K.add(bl, br, Am[:, None, None] * np.einsum("eq,eqa,eqb->eab", w, pl, pr))
            K.add(br, bl, -Ap[:, None, None] * np.einsum("eq,eqa,eqb->eab", w, pr, pl))
            K.add(br, br, -Am[:, None, None] * np.einsum("eq,eqa,eqb->eab", w, pr, pr))
        # boundary edges
        edges, p, q = _clip_edges(cls, tab.boundary, side)
        if len(edges):
            pts, w = segment_rule(p, q, 2 * r + 1)
            L = tab.left[edges]
            an = tab.normal[edges] @ a
            phi = basis.eval(L, pts)
            bl = layout.base(side, L)
            inflow = np.isin(tab.tag[edges].astype(str), INFLOW_TAGS)
            o = ~inflow
            Kb.add(bl[o], bl[o], an[o, None, None] * np.einsum("eq,eqa,eqb->eab", w[o], phi[o], phi[o]))
            idx = bl[o][:, None] + np.arange(layout.nb)[None, :]
            np.add.at(out_fun, idx, an[o, None] * np.einsum("eq,eqa->ea", w[o], phi[o]))
            for e in np.flatnonzero(inflow):
                start = sum(len(x) for x in in_w)
                cols = start + np.arange(pts.shape[1])
                vals = -an[e] * w[e][None, :] * phi[e].T  # (nb, nq)
                in_rows.append(np.repeat(bl[e] + np.arange(layout.nb), len(cols)))
                in_cols.append(np.tile(cols, layout.nb))
                in_vals.append(vals.ravel())
                in_pts.append(pts[e])
                in_w.append(-an[e] * w[e])
    # interface segments
    l1, l2 = penalties.lambdas
    for t, region in sorted(cls.cuts.items()):
        seg = region.segment
        pts, w = segment_rule(seg[0], seg[1], 2 * r)
        phi = basis.eval(np.array([t]), pts)[0]
        P = np.einsum("q,qa,qb->ab", w[0], phi, phi)
        b1, b2 = layout.base(1, [t]), layout.base(2, [t])
        Ki.add(b1, b1, ((H1 - l1 * H1) * P)[None])
        Ki.add(b1, b2, (l1 * H2 * P)[None])
        Ki.add(b2, b1, (l2 * H1 * P)[None])
        Ki.add(b2, b2, ((-H2 - l2 * H2) * P)[None])
    omega = penalties.omegas(r)
    J0, J1 = _Coo(n), _Coo(n)
    for side in (1, 2):
        faces = cls.topologies[side - 1].stabilized_faces
        _ghost(layout, basis, mesh, faces, side, omega, 0, J0)
        _ghost(layout, basis, mesh, faces, side, omega, 1, J1)
    J0m, J1m = J0.tocsr(), J1.tocsr()
    Mphys = M.tocsr()
    ng = sum(len(x) for x in in_w)
    B = sp.coo_matrix((np.concatenate(in_vals) if in_vals else np.zeros(0),
                       (np.concatenate(in_rows) if in_rows else np.zeros(0, int),
                        np.concatenate(in_cols) if in_cols else np.zeros(0, int))), shape=(n, ng)).tocsr()
    return Operators2D(
        layout, cls, basis, problem, penalties,
        (Mphys + penalties.gamma_M * J1m).tocsr(), Mphys, J0m, J1m,
        K.tocsr(), Ki.tocsr(), Kb.tocsr(), B,
        np.concatenate(in_pts) if in_pts else np.zeros((0, 2)),
        np.concatenate(in_w) if in_w else np.zeros(0),
        out_fun, totals,
    )


def load_2d(ops: Operators2D, f1: Callable, f2: Optional[Callable] = None, extra: int = 4) -> np.ndarray:
    """(f, phi) over the physical parts; f_i(x, y)."""
    f2 = f1 if f2 is None else f2
    out = np.zeros(ops.size)
    for side, f in ((1, f1), (2, f2)):
        for tris, pts, w in _physical_parts(ops.classification, side, 2 * ops.layout.degree + extra):
            if len(tris) == 0:
                continue
            phi = ops.basis.eval(tris, pts)
            vals = np.asarray(f(pts[..., 0], pts[..., 1]), dtype=float) * np.ones(pts.shape[:-1])
            base = ops.layout.base(side, tris)
            idx = base[:, None] + np.arange(ops.layout.nb)[None, :]
            np.add.at(out, idx, np.einsum("eq,eq,eqa->ea", w, vals, phi))
    return out


def project_2d(ops: Operators2D, f1: Callable, f2: Optional[Callable] = None) -> np.ndarray:
    """Stabilised L2 projection (u, v) + gamma_M J1(u, v) = (f, v)."""
    return ops._lu.solve(load_2d(ops, f1, f2))


def error_2d(ops: Operators2D, u: np.ndarray, exact1: Callable, exact2: Callable, p: int = 2,
             degree: Optional[int] = None) -> float:
    """L^p error (p = 1, 2) or max error (p = inf) at the quadrature points."""
    deg = 2 * ops.layout.degree + 2 if degree is None else degree
    acc = 0.0
    for side, f in ((1, exact1), (2, exact2)):
        sl = ops.layout
        for tris, pts, w in _physical_parts(ops.classification, side, deg):
            if len(tris) == 0:
                continue
            phi = ops.basis.eval(tris, pts)
            base = sl.base(side, tris)
            coef = u[base[:, None] + np.arange(sl.nb)[None, :]]
            uh = np.einsum("eqa,ea->eq", phi, coef)
            d = np.abs(uh - np.asarray(f(pts[..., 0], pts[..., 1]), dtype=float))
            if p == np.inf:
                acc = max(acc, float(d.max()))
            else:
                acc += float(np.sum(w * d**p))
    return acc if p == np.inf else acc ** (1.0 / p)


def time_step_2d(mesh: TriMesh, problem: Problem2D, r: int) -> float:
    """0.5 h / ((2r + 1) max|a|) with h the cell width."""
    return 0.5 * mesh.cell_width / ((2 * r + 1) * problem.max_speed)


__all__ = [
    "Assembly2DError", "Layout2D", "Operators2D", "Problem2D", "assemble_2d", "load_2d", "project_2d",
    "error_2d", "time_step_2d", "Geometry2DError", "TriBasis", "segment_rule",
]
