"""Assembly of the 1D cut DG operators (scalar and m-component systems).

Dof layout: all side-1 dofs first, then side 2.  Inside a side the dofs of
active element e (local slot s) are  offset + s*m*(r+1) + comp*(r+1) + k.

Semi-discrete dynamics:  mass u' = -spatial u + inflow(g).
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from math import factorial
from typing import Callable, Optional, Sequence

import numpy as np
import scipy.sparse as sp

from .basis import IntervalBasis, map_gauss, reference_gauss
from .geometry1d import ActiveTopology, BackgroundMesh1D, classify


class AssemblyError(ValueError):
    pass


def default_omega(r: int) -> np.ndarray:
    return np.array([1.0 / (factorial(k) ** 2 * (2 * k + 1)) for k in range(r + 1)])


@dataclass(frozen=True)
class PenaltyConfig:
    lambda_1: float = 0.1
    lambda_2: float = -0.9
    gamma_M: float = 0.25
    gamma_A: float = 0.75
    omega: Optional[tuple] = None
    # "literal": every face of F_{h,1} and F_{h,2}; "small_side": only the
    # faces of the side owning the smaller part of the cut element
    face_rule: str = "small_side"

    def __post_init__(self):
        if self.face_rule not in ("literal", "small_side"):
            raise AssemblyError(f"unknown face rule {self.face_rule}")

    def omegas(self, r: int) -> np.ndarray:
        if self.omega is None:
            return default_omega(r)
        w = np.asarray(self.omega, dtype=float)
        if len(w) < r + 1:
            raise AssemblyError("omega shorter than degree + 1")
        return w[: r + 1]

    @property
    def conservative(self) -> bool:
        return abs(self.lambda_2 - self.lambda_1 + 1.0) <= 1e-14

    @property
    def lambdas(self) -> tuple[float, float]:
        return self.lambda_1, self.lambda_2


@dataclass(frozen=True)
class FluxModel:
    """Linear flux F_i(u) = A_i u on side i."""
    A1: np.ndarray
    A2: np.ndarray
    kind: str = "system"

    def __post_init__(self):
        A1 = np.atleast_2d(np.asarray(self.A1, dtype=float))
        A2 = np.atleast_2d(np.asarray(self.A2, dtype=float))
        if A1.shape != A2.shape or A1.shape[0] != A1.shape[1]:
            raise AssemblyError("flux matrices must be square and of equal size")
        for A in (A1, A2):
            ev = np.linalg.eigvals(A)
            if np.any(np.abs(ev.imag) > 1e-12 * max(1.0, np.abs(ev).max())):
                raise AssemblyError("flux matrix must have real eigenvalues")
            if np.any(np.abs(ev) == 0.0):
                raise AssemblyError("zero speed")
        n1 = np.sum(np.linalg.eigvals(A1).real > 0)
        n2 = np.sum(np.linalg.eigvals(A2).real > 0)
        if n1 != n2:
            raise AssemblyError("sides have different numbers of positive characteristic speeds")
        object.__setattr__(self, "A1", A1)
        object.__setattr__(self, "A2", A2)

    @classmethod
    def scalar(cls, a1: float, a2: float) -> "FluxModel":
        if a1 == 0 or a2 == 0:
            raise AssemblyError("zero speed")
        if a1 * a2 < 0:
            raise AssemblyError("speeds must have the same sign")
        return cls(np.array([[float(a1)]]), np.array([[float(a2)]]), "scalar")

    @classmethod
    def system(cls, A1, A2) -> "FluxModel":
        return cls(A1, A2, "system")

    @property
    def m(self) -> int:
        return self.A1.shape[0]

    def matrix(self, side: int) -> np.ndarray:
        return self.A1 if side == 1 else self.A2

    def edge_speed(self, side: int) -> float:
        return self.edge_speeds[side - 1]

    @cached_property
    def edge_speeds(self) -> tuple[float, float]:
        return tuple(float(np.abs(np.linalg.eigvals(A)).max()) for A in (self.A1, self.A2))

    @property
    def max_speed(self) -> float:
        return max(self.edge_speeds)

    def inflow_projector(self, side: int, boundary: str) -> np.ndarray:
        """Projection onto characteristics entering through a boundary."""
        return self._projectors[(side, boundary)]

    @cached_property
    def _projectors(self) -> dict:
        return {(s, b): self._projector(s, b) for s in (1, 2) for b in ("left", "right")}

    def _projector(self, side: int, boundary: str) -> np.ndarray:
        A = self.matrix(side)
        ev, R = np.linalg.eig(A)
        ev, R = ev.real, R.real
        mask = ev > 0 if boundary == "left" else ev < 0
        return (R * mask) @ np.linalg.inv(R)


@dataclass(frozen=True)
class DofLayout:
    mesh: BackgroundMesh1D
    degree: int
    ncomp: int
    elements_1: np.ndarray
    elements_2: np.ndarray
    _slots: tuple = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        n = self.mesh.n_elements
        slots = []
        for elems in (self.elements_1, self.elements_2):
            s = np.full(n, -1, dtype=int)
            s[np.asarray(elems, dtype=int)] = np.arange(len(elems))
            slots.append(s)
        object.__setattr__(self, "_slots", tuple(slots))

    @property
    def nb(self) -> int:
        return self.degree + 1

    @property
    def block(self) -> int:
        return self.ncomp * self.nb

    @property
    def n1(self) -> int:
        return len(self.elements_1) * self.block

    @property
    def size(self) -> int:
        return self.n1 + len(self.elements_2) * self.block

    def elements(self, side: int) -> np.ndarray:
        return self.elements_1 if side == 1 else self.elements_2

    def slot(self, side: int, elems) -> np.ndarray:
        return self._slots[side - 1][np.asarray(elems, dtype=int)]

    def has(self, side: int, elems) -> np.ndarray:
        return self.slot(side, elems) >= 0

    def base(self, side: int, elems) -> np.ndarray:
        s = self.slot(side, elems)
        if np.any(s < 0):
            raise AssemblyError(f"element not active on side {side}")
        return (0 if side == 1 else self.n1) + s * self.block

    def dofs(self, side: int, elem: int, comp: int = 0) -> np.ndarray:
        b = int(self.base(side, [elem])[0])
        return b + comp * self.nb + np.arange(self.nb)

    def side_slice(self, side: int) -> slice:
        return slice(0, self.n1) if side == 1 else slice(self.n1, self.size)

    def component_mask(self, comp: int) -> np.ndarray:
        local = np.zeros(self.block, dtype=bool)
        local[comp * self.nb : (comp + 1) * self.nb] = True
        n_el = len(self.elements_1) + len(self.elements_2)
        return np.tile(local, n_el)


class _Coo:
    def __init__(self, n: int, m: Optional[int] = None):
        self.shape = (n, n if m is None else m)
        self.rows: list = []
        self.cols: list = []
        self.vals: list = []

    def add_blocks(self, row_base, col_base, blocks) -> None:
        """blocks (ne, p, q) added at row_base[e] + i, col_base[e] + j."""
        blocks = np.asarray(blocks, dtype=float)
        if blocks.size == 0:
            return
        ne, p, q = blocks.shape
        row_base = np.asarray(row_base)
        col_base = np.asarray(col_base)
        r = np.broadcast_to(row_base[:, None, None] + np.arange(p)[None, :, None], blocks.shape)
        c = np.broadcast_to(col_base[:, None, None] + np.arange(q)[None, None, :], blocks.shape)
        self.rows.append(r.ravel())
        self.cols.append(c.ravel())
        self.vals.append(blocks.ravel())

    def tocsr(self) -> sp.csr_matrix:
        if not self.rows:
            return sp.csr_matrix(self.shape)
        mat = sp.coo_matrix(
            (np.concatenate(self.vals), (np.concatenate(self.rows), np.concatenate(self.cols))), shape=self.shape
        ).tocsr()
        mat.sum_duplicates()
        mat.eliminate_zeros()
        mat.sort_indices()
        return mat


class LocalDense:
    """Collector with the _Coo interface that accumulates into a dense matrix
    over a fixed set of dofs; blocks touching other dofs are an error."""

    def __init__(self, dofs: np.ndarray, n: int):
        self.dofs = np.asarray(dofs, dtype=int)
        self.pos = np.full(n, -1, dtype=int)
        self.pos[self.dofs] = np.arange(len(self.dofs))
        self.mat = np.zeros((len(self.dofs), len(self.dofs)))

    def add_blocks(self, row_base, col_base, blocks) -> None:
        blocks = np.asarray(blocks, dtype=float)
        if blocks.size == 0:
            return
        ne, p, q = blocks.shape
        r = self.pos[np.asarray(row_base)[:, None] + np.arange(p)[None, :]]
        c = self.pos[np.asarray(col_base)[:, None] + np.arange(q)[None, :]]
        if np.any(r < 0) or np.any(c < 0):
            raise AssemblyError("local block outside the collector's dof set")
        for e in range(ne):
            self.mat[np.ix_(r[e], c[e])] += blocks[e]

    def tocsr(self) -> np.ndarray:
        return self.mat


def local_dofs(layout: DofLayout, only) -> np.ndarray:
    """Dofs of the listed elements and their active neighbours, both sides."""
    out = []
    n = layout.mesh.n_elements
    for side in (1, 2):
        for e in np.asarray(only, dtype=int):
            for f in (e - 1, e, e + 1):
                if 0 <= f < n and layout.has(side, [f])[0]:
                    b = int(layout.base(side, [f])[0])
                    out.append(np.arange(b, b + layout.block))
    return np.unique(np.concatenate(out)) if out else np.zeros(0, dtype=int)


def snap_interface(mesh: BackgroundMesh1D, x_gamma: Optional[float]) -> Optional[float]:
    if x_gamma is None:
        return None
    k = int(np.argmin(np.abs(mesh.nodes - x_gamma)))
    if abs(mesh.nodes[k] - x_gamma) <= mesh.snap_tolerance():
        return float(mesh.nodes[k])
    return float(x_gamma)


def side_extent(mesh: BackgroundMesh1D, side: int, x_gamma: Optional[float]) -> tuple[float, float]:
    if x_gamma is None:
        return (mesh.x_left, mesh.x_right) if side == 1 else (mesh.x_right, mesh.x_right)
    return (mesh.x_left, x_gamma) if side == 1 else (x_gamma, mesh.x_right)


def physical_pieces(layout: DofLayout, side: int, x_gamma: Optional[float]):
    """Active elements of a side with their physical sub-intervals (positive measure only)."""
    elems = np.asarray(layout.elements(side), dtype=int)
    lo_s, hi_s = side_extent(layout.mesh, side, x_gamma)
    a, b = layout.mesh.element_bounds(elems)
    lo = np.maximum(a, lo_s)
    hi = np.minimum(b, hi_s)
    keep = hi > lo
    return elems[keep], a[keep], b[keep], lo[keep], hi[keep]


def _restrict(pieces, only):
    if only is None:
        return pieces
    keep = np.isin(pieces[0], only)
    return tuple(p[keep] for p in pieces)


def _kron_blocks(A: np.ndarray, loc: np.ndarray) -> np.ndarray:
    """Per-element kron(A, loc[e]) with shape (ne, m*nb, m*nb)."""
    ne, p, q = loc.shape
    m = A.shape[0]
    out = np.einsum("cd,eba->ecbda", A, loc)
    return out.reshape(ne, m * p, m * q)


def physical_mass(layout: DofLayout, x_gamma: Optional[float], weights: Optional[Sequence[np.ndarray]] = None,
                  only: Optional[np.ndarray] = None, collector: Optional[Callable] = None) -> sp.csr_matrix:
    """L2 inner products over the physical part of each side.

    `weights` optionally gives an (m, m) matrix per side (used for energy
    weighted inner products); default identity.  `only` restricts the
    assembly to the listed background elements.
    """
    x_gamma = snap_interface(layout.mesh, x_gamma)
    basis = IntervalBasis(layout.degree)
    coo = (collector or _Coo)(layout.size)
    m = layout.ncomp
    for side in (1, 2):
        elems, a, b, lo, hi = _restrict(physical_pieces(layout, side, x_gamma), only)
        if len(elems) == 0:
            continue
        xq, wq = map_gauss(lo, hi, layout.degree + 2)
        phi = basis.eval(a[:, None], b[:, None], xq)
        loc = np.einsum("eq,eqa,eqb->eba", wq, phi, phi)
        full = (lo == a) & (hi == b)
        loc[full] = (b - a)[full, None, None] * np.eye(layout.nb)
        W = np.eye(m) if weights is None else np.asarray(weights[side - 1])
        base = layout.base(side, elems)
        coo.add_blocks(base, base, _kron_blocks(W, loc))
    return coo.tocsr()


def select_faces(mesh: BackgroundMesh1D, faces: Sequence[np.ndarray], x_gamma: Optional[float],
                 rule: str = "literal") -> tuple[np.ndarray, np.ndarray]:
    f1, f2 = (np.asarray(f, dtype=int) for f in faces)
    if rule == "literal" or x_gamma is None:
        return f1, f2
    j1, j2 = mesh.locate(x_gamma)
    if j1 != j2:
        return f1, f2
    a, b = mesh.nodes[j1], mesh.nodes[j1 + 1]
    empty = np.zeros(0, dtype=int)
    return (f1, empty) if (x_gamma - a) <= (b - x_gamma) else (empty, f2)


def ghost_penalty_matrix(layout: DofLayout, faces: Sequence[np.ndarray], s: int, omega: np.ndarray,
                         weights: Optional[Sequence[np.ndarray]] = None) -> sp.csr_matrix:
    """J_s = sum_i sum_faces sum_k omega_k h^(2k+s) [d^k u][d^k v]."""
    basis = IntervalBasis(layout.degree)
    mesh = layout.mesh
    h = mesh.h
    m = layout.ncomp
    nb = layout.nb
    coo = _Coo(layout.size)
    for side in (1, 2):
        f = np.asarray(faces[side - 1], dtype=int)
        if len(f) == 0:
            continue
        eL, eR = f - 1, f
        hL = mesh.lengths[eL]
        hR = mesh.lengths[eR]
        loc = np.zeros((len(f), 2 * nb, 2 * nb))
        for k in range(layout.degree + 1):
            left_end, right_end = basis.endpoint_values(k)
            dL = right_end[None, :] * (2.0 / hL[:, None]) ** k  # left element at its right end
            dR = left_end[None, :] * (2.0 / hR[:, None]) ** k
            jump = np.concatenate([-dL, dR], axis=1)
            loc += omega[k] * h ** (2 * k + s) * np.einsum("ea,eb->eab", jump, jump)
        W = np.eye(m) if weights is None else np.asarray(weights[side - 1])
        bL = layout.base(side, eL)
        bR = layout.base(side, eR)
        for c in range(m):
            for d in range(m):
                if W[c, d] == 0.0:
                    continue
                blk = W[c, d] * loc
                coo.add_blocks(bL + c * nb, bL + d * nb, blk[:, :nb, :nb])
                coo.add_blocks(bL + c * nb, bR + d * nb, blk[:, :nb, nb:])
                coo.add_blocks(bR + c * nb, bL + d * nb, blk[:, nb:, :nb])
                coo.add_blocks(bR + c * nb, bR + d * nb, blk[:, nb:, nb:])
    return coo.tocsr()


@dataclass
class SpatialParts:
    """Pieces of the spatial operator at one instant.

    bulk: volume + interior edge terms; interface: interface coupling;
    boundary: boundary flux terms acting on u.  inflow_left/right map the
    boundary data (m-vectors) into the right-hand side.  flux_left/right give
    the boundary numerical flux as  F_u @ u + F_g @ g.
    """
    bulk: sp.csr_matrix
    interface: sp.csr_matrix
    boundary: sp.csr_matrix
    inflow_left: np.ndarray
    inflow_right: np.ndarray
    flux_left_u: np.ndarray
    flux_left_g: np.ndarray
    flux_right_u: np.ndarray
    flux_right_g: np.ndarray

    @property
    def total(self) -> sp.csr_matrix:
        out = self.bulk + self.interface + self.boundary
        return out if isinstance(out, np.ndarray) else out.tocsr()


def spatial_parts(
    layout: DofLayout,
    x_gamma: Optional[float],
    flux: FluxModel,
    penalties: PenaltyConfig,
    interface_speed: float = 0.0,
    formulation: str = "ibp",
    only: Optional[np.ndarray] = None,
    collector: Optional[Callable] = None,
) -> SpatialParts:
    """a_h without ghost penalty.  x_gamma=None assembles a one-material region on side 1.

    With `only`, just the terms touching those elements are assembled: their
    volume terms, edges at their nodes and the interface; boundary terms are
    left out (they never depend on the interface position).
    """
    if flux.m != layout.ncomp:
        raise AssemblyError("flux size does not match dof layout")
    if formulation not in ("ibp", "direct"):
        raise AssemblyError(f"unknown formulation {formulation}")
    mesh = layout.mesh
    x_gamma = snap_interface(mesh, x_gamma)
    basis = IntervalBasis(layout.degree)
    nb, m, n = layout.nb, layout.ncomp, layout.size
    I = np.eye(m)
    make = collector or _Coo
    bulk = make(n)
    pL, pR = basis.endpoint_values(0)  # values at xi = -1, +1
    for side in (1, 2):
        A = flux.matrix(side)
        lam = flux.edge_speed(side)
        elems, a, b, lo, hi = _restrict(physical_pieces(layout, side, x_gamma), only)
        # reference coordinates, so uncut elements see the exact reference rule and
        # the h/2 weight cancels the 2/h derivative scale without rounding
        tau, w = reference_gauss(layout.degree + 2)
        s = (hi - lo) / (b - a)
        xi = (-1.0 + 2.0 * (lo - a) / (b - a))[:, None] + s[:, None] * (tau + 1.0)[None, :]
        phi = basis.eval_ref(xi)
        dphi = basis.eval_ref(xi, 1) if layout.degree else np.zeros_like(phi)
        Dt = np.einsum("q,eqb,eqa->eba", w, dphi, phi) * s[:, None, None]
        Dt[(lo == a) & (hi == b)] = basis.derivative_gram()
        base = layout.base(side, elems)
        bulk.add_blocks(base, base, _kron_blocks(-A, Dt))
        # interior edges strictly inside the side
        lo_s, hi_s = side_extent(mesh, side, x_gamma)
        nodes = np.arange(1, mesh.n_elements)
        xn = mesh.nodes[nodes]
        ok = (xn > lo_s) & (xn < hi_s)
        nodes = nodes[ok]
        ok = layout.has(side, nodes - 1) & layout.has(side, nodes)
        if only is not None:
            ok &= np.isin(nodes - 1, only) | np.isin(nodes, only)
        nodes = nodes[ok]
        if len(nodes):
            bl = layout.base(side, nodes - 1)
            br = layout.base(side, nodes)
            Ap = 0.5 * (A + lam * I)
            Am = 0.5 * (A - lam * I)
            ne = len(nodes)
            one = np.ones((ne, 1, 1))
            bulk.add_blocks(bl, bl, one * np.kron(Ap, np.outer(pR, pR)))
            bulk.add_blocks(bl, br, one * np.kron(Am, np.outer(pR, pL)))
            bulk.add_blocks(br, bl, one * np.kron(-Ap, np.outer(pL, pR)))
            bulk.add_blocks(br, br, one * np.kron(-Am, np.outer(pL, pL)))

    # boundaries: left belongs to side 1, right to side 2 (side 1 if single material)
    bnd = make(n)
    right_side = 1 if x_gamma is None else 2
    A = flux.matrix(1)
    lam = flux.edge_speed(1)
    Pin = flux.inflow_projector(1, "left")
    Pout = I - Pin
    b0 = layout.base(1, [0])
    Cu = 0.5 * (A + lam * I) @ Pout + 0.5 * (A - lam * I)
    Cg = 0.5 * (A + lam * I) @ Pin
    if only is None:
        bnd.add_blocks(b0, b0, np.kron(-Cu, np.outer(pL, pL))[None])
    inflow_left = np.zeros((n, m))
    inflow_left[b0[0] : b0[0] + m * nb, :] = np.kron(Cg, pL[:, None])
    flux_left_u = np.zeros((m, n))
    flux_left_u[:, b0[0] : b0[0] + m * nb] = np.kron(Cu, pL[None, :])
    flux_left_g = Cg

    A = flux.matrix(right_side)
    lam = flux.edge_speed(right_side)
    Pin = flux.inflow_projector(right_side, "right")
    Pout = I - Pin
    bN = layout.base(right_side, [mesh.n_elements - 1])
    Cu = 0.5 * (A + lam * I) + 0.5 * (A - lam * I) @ Pout
    Cg = 0.5 * (A - lam * I) @ Pin
    if only is None:
        bnd.add_blocks(bN, bN, np.kron(Cu, np.outer(pR, pR))[None])
    inflow_right = np.zeros((n, m))
    inflow_right[bN[0] : bN[0] + m * nb, :] = -np.kron(Cg, pR[:, None])
    flux_right_u = np.zeros((m, n))
    flux_right_u[:, bN[0] : bN[0] + m * nb] = np.kron(Cu, pR[None, :])
    flux_right_g = Cg

    itf = make(n)
    if x_gamma is not None:
        j1, j2 = mesh.locate(x_gamma)
        b1 = layout.base(1, [j1])
        b2 = layout.base(2, [j2])
        a1, c1 = mesh.nodes[j1], mesh.nodes[j1 + 1]
        a2, c2 = mesh.nodes[j2], mesh.nodes[j2 + 1]
        p1 = basis.eval(a1, c1, x_gamma)
        p2 = basis.eval(a2, c2, x_gamma)
        H1 = flux.A1 - interface_speed * I
        H2 = flux.A2 - interface_speed * I
        G1, G2 = (H1, H2) if formulation == "ibp" else (flux.A1, flux.A2)
        l1, l2 = penalties.lambdas
        itf.add_blocks(b1, b1, np.kron(G1 - l1 * H1, np.outer(p1, p1))[None])
        itf.add_blocks(b1, b2, np.kron(l1 * H2, np.outer(p1, p2))[None])
        itf.add_blocks(b2, b1, np.kron(l2 * H1, np.outer(p2, p1))[None])
        itf.add_blocks(b2, b2, np.kron(-G2 - l2 * H2, np.outer(p2, p2))[None])

    return SpatialParts(
        bulk.tocsr(), itf.tocsr(), bnd.tocsr(), inflow_left, inflow_right,
        flux_left_u, flux_left_g, flux_right_u, flux_right_g,
    )


def integration_weights(layout: DofLayout, x_gamma: Optional[float]) -> np.ndarray:
    """Row vectors w (m, n) with w[c] @ u = integral of component c over the physical domain."""
    x_gamma = snap_interface(layout.mesh, x_gamma)
    basis = IntervalBasis(layout.degree)
    m, nb = layout.ncomp, layout.nb
    w = np.zeros((m, layout.size))
    for side in (1, 2):
        elems, a, b, lo, hi = physical_pieces(layout, side, x_gamma)
        if len(elems) == 0:
            continue
        xq, wq = map_gauss(lo, hi, layout.degree + 2)
        phi = basis.eval(a[:, None], b[:, None], xq)
        ints = np.einsum("eq,eqa->ea", wq, phi)
        full = (lo == a) & (hi == b)
        ints[full] = 0.0
        ints[full, 0] = (b - a)[full]
        base = layout.base(side, elems)
        for c in range(m):
            idx = base[:, None] + c * nb + np.arange(nb)[None, :]
            w[c, idx.ravel()] += ints.ravel()
    return w


def evaluate(layout: DofLayout, u: np.ndarray, side: int, x, comp: int = 0, deriv: int = 0) -> np.ndarray:
    """Evaluate side-`side` polynomial at x (array); x must lie in active elements."""
    mesh = layout.mesh
    x = np.atleast_1d(np.asarray(x, dtype=float))
    e = np.clip(np.searchsorted(mesh.nodes, x, side="right") - 1, 0, mesh.n_elements - 1)
    elems = layout.elements(side)
    e = np.clip(e, elems[0], elems[-1])
    a, b = mesh.element_bounds(e)
    phi = IntervalBasis(layout.degree).eval(a, b, x, deriv)
    base = layout.base(side, e) + comp * layout.nb
    coeffs = u[base[:, None] + np.arange(layout.nb)[None, :]]
    return np.einsum("xa,xa->x", phi, coeffs)


def evaluate_in(layout: DofLayout, u: np.ndarray, side: int, elem: int, x, comp: int = 0) -> np.ndarray:
    a, b = layout.mesh.nodes[elem], layout.mesh.nodes[elem + 1]
    phi = IntervalBasis(layout.degree).eval(a, b, np.asarray(x, float))
    return phi @ u[layout.dofs(side, elem, comp)]


@dataclass
class DgOperators:
    """Stationary-interface operators: mass u' = -spatial u + inflow(g)."""
    layout: DofLayout
    topologies: tuple
    x_gamma: float
    flux: FluxModel
    penalties: PenaltyConfig
    mass: sp.csr_matrix
    physical: sp.csr_matrix
    J0: sp.csr_matrix
    J1: sp.csr_matrix
    spatial: sp.csr_matrix
    parts: SpatialParts
    weights: np.ndarray  # (m, n) integration rows
    _solver: object = field(default=None, repr=False)
    _explicit: object = field(default=None, repr=False)

    @property
    def size(self) -> int:
        return self.layout.size

    @property
    def boundary_inflow_column(self) -> np.ndarray:
        return np.hstack([self.parts.inflow_left, self.parts.inflow_right])

    def inflow(self, g) -> np.ndarray:
        """g has shape (2, m): data at the left and right boundary."""
        g = np.asarray(g, dtype=float).reshape(2, -1)
        return self.parts.inflow_left @ g[0] + self.parts.inflow_right @ g[1]

    def net_flux(self, u: np.ndarray, g) -> np.ndarray:
        """F_L - F_R per component."""
        g = np.asarray(g, dtype=float).reshape(2, -1)
        fl = self.parts.flux_left_u @ u + self.parts.flux_left_g @ g[0]
        fr = self.parts.flux_right_u @ u + self.parts.flux_right_g @ g[1]
        return fl - fr

    @property
    def solver(self):
        if self._solver is None:
            from .linalg import MassSolver
            self._solver = MassSolver(self.mass)
        return self._solver

    def rhs(self, u: np.ndarray, g) -> np.ndarray:
        return self.solver.solve(-(self.spatial @ u) + self.inflow(g))

    def total(self, u: np.ndarray) -> np.ndarray:
        return self.weights @ u

    def evaluate(self, u, side, x, comp=0):
        return evaluate(self.layout, u, side, x, comp)


def build_operators(
    mesh: BackgroundMesh1D,
    x_gamma: float,
    degree: int,
    flux: FluxModel,
    penalties: PenaltyConfig = PenaltyConfig(),
) -> DgOperators:
    t1, t2 = classify(mesh, x_gamma)
    layout = DofLayout(mesh, degree, flux.m, t1.elements, t2.elements)
    return assemble(layout, (t1, t2), x_gamma, flux, penalties)


def assemble(layout, topos, x_gamma, flux, penalties) -> DgOperators:
    faces = select_faces(layout.mesh, (topos[0].stabilized_faces, topos[1].stabilized_faces), x_gamma,
                         penalties.face_rule)
    omega = penalties.omegas(layout.degree)
    Mphys = physical_mass(layout, x_gamma)
    J0 = ghost_penalty_matrix(layout, faces, 0, omega)
    J1 = ghost_penalty_matrix(layout, faces, 1, omega)
    parts = spatial_parts(layout, x_gamma, flux, penalties)
    mass = (Mphys + penalties.gamma_M * J1).tocsr()
    spatial = (parts.total + penalties.gamma_A * J0).tocsr()
    return DgOperators(layout, tuple(topos), float(x_gamma), flux, penalties, mass, Mphys, J0, J1,
                       spatial, parts, integration_weights(layout, x_gamma))


def assemble_mass(mesh, x_gamma, degree, penalties=PenaltyConfig(), ncomp: int = 1) -> sp.csr_matrix:
    t1, t2 = classify(mesh, x_gamma)
    layout = DofLayout(mesh, degree, ncomp, t1.elements, t2.elements)
    omega = penalties.omegas(degree)
    faces = select_faces(mesh, (t1.stabilized_faces, t2.stabilized_faces), x_gamma, penalties.face_rule)
    J1 = ghost_penalty_matrix(layout, faces, 1, omega)
    return (physical_mass(layout, x_gamma) + penalties.gamma_M * J1).tocsr()


def project_initial(ops: DgOperators, f1: Callable, f2: Optional[Callable] = None) -> np.ndarray:
    """Stabilized L2 projection: (u, v) + gamma_M J1(u, v) = (f, v).

    f_i returns an array of shape x.shape (scalar) or (m,) + x.shape.
    """
    return project(ops.layout, ops.x_gamma, ops.solver, f1, f2)


def load_vector(layout: DofLayout, x_gamma: Optional[float], f1: Callable, f2: Optional[Callable] = None,
                extra_points: int = 4) -> np.ndarray:
    f2 = f1 if f2 is None else f2
    x_gamma = snap_interface(layout.mesh, x_gamma)
    basis = IntervalBasis(layout.degree)
    nb, m = layout.nb, layout.ncomp
    rhs = np.zeros(layout.size)
    for side, f in ((1, f1), (2, f2)):
        elems, a, b, lo, hi = physical_pieces(layout, side, x_gamma)
        if len(elems) == 0:
            continue
        xq, wq = map_gauss(lo, hi, layout.degree + 2 + extra_points)
        phi = basis.eval(a[:, None], b[:, None], xq)
        vals = np.asarray(f(xq), dtype=float)
        if vals.shape == xq.shape:
            vals = vals[None]
        vals = np.broadcast_to(vals, (m,) + xq.shape)
        base = layout.base(side, elems)
        for c in range(m):
            loc = np.einsum("eq,eq,eqa->ea", wq, vals[c], phi)
            idx = base[:, None] + c * nb + np.arange(nb)[None, :]
            rhs[idx.ravel()] += loc.ravel()
    return rhs


def project(layout, x_gamma, solver, f1, f2=None) -> np.ndarray:
    return solver.solve(load_vector(layout, x_gamma, f1, f2))


@dataclass
class PiecewiseField:
    """Per-side coefficients on background elements; NaN rows mark inactive elements.

    Used to hand solutions between dof layouts that share the background
    element basis (slab to slab, region to region).
    """
    mesh: BackgroundMesh1D
    degree: int
    coef: np.ndarray  # (2, n_elements, r+1)

    @classmethod
    def empty(cls, mesh: BackgroundMesh1D, degree: int) -> "PiecewiseField":
        return cls(mesh, degree, np.full((2, mesh.n_elements, degree + 1), np.nan))

    @classmethod
    def from_layout(cls, layout: DofLayout, u: np.ndarray, offset: int = 0,
                    mesh: Optional[BackgroundMesh1D] = None) -> "PiecewiseField":
        """Scalar layout on a submesh starting at background element `offset`."""
        mesh = layout.mesh if mesh is None else mesh
        out = cls.empty(mesh, layout.degree)
        out.update(layout, u, offset)
        return out

    def update(self, layout: DofLayout, u: np.ndarray, offset: int = 0, elements=None) -> None:
        nb = layout.nb
        for side in (1, 2):
            elems = np.asarray(layout.elements(side), dtype=int)
            if elements is not None:
                elems = elems[np.isin(elems + offset, elements)]
            if len(elems) == 0:
                continue
            base = layout.base(side, elems)
            self.coef[side - 1, elems + offset] = u[base[:, None] + np.arange(nb)[None, :]]

    def to_layout(self, layout: DofLayout, offset: int = 0) -> np.ndarray:
        u = np.zeros(layout.size)
        nb = layout.nb
        for side in (1, 2):
            elems = np.asarray(layout.elements(side), dtype=int)
            if len(elems) == 0:
                continue
            base = layout.base(side, elems)
            vals = self.coef[side - 1, elems + offset]
            if np.any(np.isnan(vals)):
                raise AssemblyError(f"field undefined on some side-{side} elements")
            u[(base[:, None] + np.arange(nb)[None, :]).ravel()] = vals.ravel()
        return u

    def evaluate(self, side: int, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        flat = x.ravel()
        e = np.clip(np.searchsorted(self.mesh.nodes, flat, side="right") - 1, 0, self.mesh.n_elements - 1)
        a, b = self.mesh.element_bounds(e)
        phi = IntervalBasis(self.degree).eval(a, b, flat)
        return np.einsum("xa,xa->x", phi, self.coef[side - 1, e]).reshape(x.shape)

    def evaluate_in(self, side: int, elem: int, x) -> np.ndarray:
        a, b = self.mesh.nodes[elem], self.mesh.nodes[elem + 1]
        return IntervalBasis(self.degree).eval(a, b, np.asarray(x, float)) @ self.coef[side - 1, elem]
