"""Error norms, conservation traces, condition numbers and convergence tables."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np
import scipy.sparse as sp
from scipy.sparse.csgraph import connected_components

from ..assembly1d import DofLayout, PiecewiseField, snap_interface
from ..basis import IntervalBasis, map_gauss


class HarnessError(ValueError):
    pass


@dataclass(frozen=True)
class ErrorNorms:
    L1: float
    L2: float
    Linf: float

    def as_tuple(self) -> tuple[float, float, float]:
        return self.L1, self.L2, self.Linf


# ------------------------------------------------------------------ 1D norms

def field_from_layout(layout: DofLayout, u: np.ndarray, comp: int = 0,
                      scale: tuple[float, float] = (1.0, 1.0)) -> PiecewiseField:
    """One component of a dof vector as a per-side field, optionally scaled per side."""
    out = PiecewiseField.empty(layout.mesh, layout.degree)
    nb = layout.nb
    for side in (1, 2):
        elems = np.asarray(layout.elements(side), dtype=int)
        if len(elems) == 0:
            continue
        base = layout.base(side, elems) + comp * nb
        out.coef[side - 1, elems] = scale[side - 1] * u[base[:, None] + np.arange(nb)[None, :]]
    return out


def side_pieces(mesh, side: int, x_gamma: float) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Elements meeting a side with their physical sub-intervals (positive length only)."""
    a, b = mesh.nodes[:-1], mesh.nodes[1:]
    if side == 1:
        lo, hi = a, np.minimum(b, x_gamma)
    else:
        lo, hi = np.maximum(a, x_gamma), b
    keep = hi > lo
    return np.flatnonzero(keep), lo[keep], hi[keep]


def error_norms(field: PiecewiseField, x_gamma: float, exact: Callable, points: Optional[int] = None,
                normalize: bool = False) -> ErrorNorms:
    """L1, L2 and max errors over both sides.

    exact(side, x) gives the reference values.  Integrals use a Gauss rule with
    `points` nodes on every physical sub-interval (default r + 3).  The max is
    taken over those nodes, the element end points and the interface point.
    With `normalize` the L1 and L2 values are divided by |Omega| and its square root.
    """
    mesh = field.mesh
    x_gamma = snap_interface(mesh, x_gamma)
    n_q = field.degree + 3 if points is None else int(points)
    if n_q < 1:
        raise HarnessError("need at least one quadrature point")
    basis = IntervalBasis(field.degree)
    l1 = l2 = linf = 0.0
    for side in (1, 2):
        elems, lo, hi = side_pieces(mesh, side, x_gamma)
        if len(elems) == 0:
            continue
        coef = field.coef[side - 1, elems]
        if np.any(np.isnan(coef)):
            raise HarnessError(f"field undefined on part of side {side}")
        a, b = mesh.element_bounds(elems)
        xq, wq = map_gauss(lo, hi, n_q)
        x = np.concatenate([xq, lo[:, None], hi[:, None]], axis=1)
        phi = basis.eval(a[:, None], b[:, None], x)
        d = np.abs(np.einsum("eqa,ea->eq", phi, coef) - np.asarray(exact(side, x), dtype=float))
        l1 += float(np.sum(wq * d[:, :n_q]))
        l2 += float(np.sum(wq * d[:, :n_q] ** 2))
        linf = max(linf, float(d.max()))
    l2 = math.sqrt(l2)
    if normalize:
        size = mesh.x_right - mesh.x_left
        l1, l2 = l1 / size, l2 / math.sqrt(size)
    return ErrorNorms(l1, l2, linf)


def error_norms_2d(ops, u: np.ndarray, exact1: Callable, exact2: Callable,
                   degree: Optional[int] = None) -> ErrorNorms:
    from ..twod import error_2d

    return ErrorNorms(*(error_2d(ops, u, exact1, exact2, p=p, degree=degree) for p in (1, 2, np.inf)))


# -------------------------------------------------------------- conservation

def conservation_error(trace) -> np.ndarray:
    """Running e(t) per component from a recorded influx/totals trace."""
    influx = getattr(trace, "influx", None)
    totals = getattr(trace, "totals", None)
    if influx is None or totals is None or len(np.atleast_1d(influx)) == 0:
        raise HarnessError("run trace has no staged boundary records")
    influx = np.asarray(influx, dtype=float)
    totals = np.asarray(totals, dtype=float)
    if influx.shape != totals.shape:
        raise HarnessError("influx and totals records do not line up")
    return influx - (totals - totals[0])


def scalar_error_trace(e: np.ndarray) -> np.ndarray:
    """One value per time: the component with the largest magnitude, signed."""
    e = np.asarray(e, dtype=float)
    if e.ndim == 1:
        return e
    pick = np.argmax(np.abs(e), axis=1)
    return e[np.arange(len(e)), pick]


# ---------------------------------------------------------- condition number

def _spd_check(M: np.ndarray) -> np.ndarray:
    if M.shape[0] != M.shape[1]:
        raise HarnessError("matrix is not square")
    if not np.allclose(M, M.T, rtol=0.0, atol=1e-12 * max(1.0, np.abs(M).max())):
        raise HarnessError("matrix is not symmetric")
    ev = np.linalg.eigvalsh(M)
    if ev[0] <= 0.0:
        raise HarnessError(f"matrix is not positive definite; smallest eigenvalue {ev[0]:.3e}")
    return ev


def condition_number(M) -> float:
    """sigma_max / sigma_min of an SPD matrix by a dense SVD."""
    A = M.toarray() if sp.issparse(M) else np.asarray(M, dtype=float)
    _spd_check(A)
    s = np.linalg.svd(A, compute_uv=False)
    return float(s[0] / s[-1])


def condition_number_blocks(M) -> float:
    """Same quantity from the spectra of the decoupled diagonal blocks.

    A symmetric matrix is permutation-similar to the direct sum of its
    connected components, so the extreme eigenvalues are those of the blocks.
    Blocks of equal size are gathered into one batch.
    """
    A = sp.coo_matrix(M)
    n_comp, labels = connected_components(A.tocsr(), directed=False)
    order = np.argsort(labels, kind="stable")
    sizes = np.bincount(labels, minlength=n_comp)
    starts = np.concatenate([[0], np.cumsum(sizes)[:-1]])
    local = np.empty(len(labels), dtype=int)
    local[order] = np.arange(len(labels)) - np.repeat(starts, sizes)
    lo, hi = math.inf, 0.0
    for size in np.unique(sizes):
        comps = np.flatnonzero(sizes == size)
        slot = np.full(n_comp, -1)
        slot[comps] = np.arange(len(comps))
        blocks = np.zeros((len(comps), size, size))
        rows = slot[labels[A.row]]
        keep = rows >= 0
        np.add.at(blocks, (rows[keep], local[A.row[keep]], local[A.col[keep]]), A.data[keep])
        scale = max(1.0, float(np.abs(blocks).max()))
        if np.abs(blocks - blocks.transpose(0, 2, 1)).max() > 1e-12 * scale:
            raise HarnessError("matrix is not symmetric")
        ev = np.linalg.eigvalsh(blocks)
        if ev[:, 0].min() <= 0.0:
            raise HarnessError(f"matrix is not positive definite; smallest eigenvalue {ev[:, 0].min():.3e}")
        lo, hi = min(lo, float(ev[:, 0].min())), max(hi, float(ev[:, -1].max()))
    return hi / lo


# ------------------------------------------------------- convergence tables

@dataclass(frozen=True)
class ConvergenceRow:
    n: int
    h: float
    norms: ErrorNorms
    order_L2: float  # nan for the first row or at rounding level


def observed_orders(h: Sequence[float], e: Sequence[float], floor: float = 1e-13) -> np.ndarray:
    """log(e_prev / e) / log(h_prev / h); nan where either error is at rounding level."""
    h = np.asarray(h, dtype=float)
    e = np.asarray(e, dtype=float)
    out = np.full(len(e), np.nan)
    for k in range(1, len(e)):
        if e[k - 1] > floor and e[k] > floor:
            out[k] = math.log(e[k - 1] / e[k]) / math.log(h[k - 1] / h[k])
    return out


def convergence_table(ns: Sequence[int], hs: Sequence[float], norms: Sequence[ErrorNorms]) -> list[ConvergenceRow]:
    if len(ns) != len(norms) or len(hs) != len(norms):
        raise HarnessError("refinement list and results differ in length")
    orders = observed_orders(hs, [nm.L2 for nm in norms])
    return [ConvergenceRow(int(n), float(h), nm, float(o)) for n, h, nm, o in zip(ns, hs, norms, orders)]


def least_squares_order(h: Sequence[float], e: Sequence[float]) -> float:
    """Slope of log e against log h."""
    return float(np.polyfit(np.log(np.asarray(h, float)), np.log(np.asarray(e, float)), 1)[0])
