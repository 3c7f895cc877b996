"""Element bases and quadrature rules.

Interval basis: phi_k(x) = sqrt(2k+1) P_k(xi), xi in [-1, 1] the local
coordinate of the full background element.  On an uncut element of length h
the mass block is h * I and the constant mode is identically 1.

Triangle basis: scaled monomials orthonormalised per triangle so that the
full-triangle mass block is |T| * I.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache
from math import comb

import numpy as np
from numpy.polynomial import legendre as npleg


class BasisError(ValueError):
    pass


@dataclass(frozen=True)
class QuadratureRule:
    points: np.ndarray  # (n,) for intervals, (n, 2) for planar regions
    weights: np.ndarray
    degree: int

    @property
    def measure(self) -> float:
        return float(self.weights.sum())

    def integrate(self, f) -> float:
        if self.points.ndim == 1:
            vals = f(self.points)
        else:
            vals = f(self.points[:, 0], self.points[:, 1])
        return float(np.dot(self.weights, vals))


def gauss_rule(n_points: int, extent=(-1.0, 1.0)) -> QuadratureRule:
    """Gauss-Legendre rule with n_points nodes mapped to [a, b]."""
    if not 1 <= n_points <= 20:
        raise BasisError(f"unsupported point count {n_points}")
    a, b = float(extent[0]), float(extent[1])
    xi, w = npleg.leggauss(n_points)
    half = 0.5 * (b - a)
    return QuadratureRule(0.5 * (a + b) + half * xi, half * w, 2 * n_points - 1)


@lru_cache(maxsize=None)
def _leggauss(n_points: int) -> tuple[np.ndarray, np.ndarray]:
    xi, w = npleg.leggauss(n_points)
    xi.setflags(write=False)
    w.setflags(write=False)
    return xi, w


def reference_gauss(n_points: int) -> tuple[np.ndarray, np.ndarray]:
    if not 1 <= n_points <= 20:
        raise BasisError(f"unsupported point count {n_points}")
    return _leggauss(n_points)


def map_gauss(lo, hi, n_points: int):
    """Vectorised Gauss points/weights on many intervals [lo_e, hi_e].

    Returns (x, w) of shape (n_intervals, n_points).
    """
    xi, w = reference_gauss(n_points)
    lo = np.asarray(lo, dtype=float)[..., None]
    hi = np.asarray(hi, dtype=float)[..., None]
    half = 0.5 * (hi - lo)
    return 0.5 * (lo + hi) + half * xi, half * w


def _triangle_reference(degree: int) -> tuple[np.ndarray, np.ndarray]:
    """Collapsed-coordinate (Duffy) rule on the unit triangle (0,0),(1,0),(0,1)."""
    n = max(1, (degree + 2) // 2 + 1)
    xi, w = npleg.leggauss(n)
    s = 0.5 * (xi + 1.0)
    ws = 0.5 * w
    u, v = np.meshgrid(s, s, indexing="ij")
    wu, wv = np.meshgrid(ws, ws, indexing="ij")
    x = u
    y = v * (1.0 - u)
    wt = wu * wv * (1.0 - u)
    return np.column_stack([x.ravel(), y.ravel()]), wt.ravel()


def triangle_rule(degree: int, vertices) -> QuadratureRule:
    v = np.asarray(vertices, dtype=float)
    ref, w = _triangle_reference(degree)
    e1 = v[1] - v[0]
    e2 = v[2] - v[0]
    det = e1[0] * e2[1] - e1[1] * e2[0]
    pts = v[0] + ref[:, :1] * e1 + ref[:, 1:] * e2
    return QuadratureRule(pts, w * abs(det), degree)


def map_triangles(degree: int, tris: np.ndarray):
    """Vectorised triangle rule; tris has shape (n, 3, 2).

    Returns points (n, q, 2) and weights (n, q).
    """
    ref, w = _triangle_reference(degree)
    v0 = tris[:, 0, :]
    e1 = tris[:, 1, :] - v0
    e2 = tris[:, 2, :] - v0
    det = np.abs(e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0])
    pts = v0[:, None, :] + ref[None, :, :1] * e1[:, None, :] + ref[None, :, 1:] * e2[:, None, :]
    return pts, det[:, None] * w[None, :]


def polygon_area(poly) -> float:
    p = np.asarray(poly, dtype=float)
    x, y = p[:, 0], p[:, 1]
    return 0.5 * float(np.dot(x, np.roll(y, -1)) - np.dot(np.roll(x, -1), y))


def polygon_rule(degree: int, poly) -> QuadratureRule:
    """Fan triangulation from the centroid of a convex polygon."""
    p = np.asarray(poly, dtype=float)
    if len(p) < 3 or abs(polygon_area(p)) <= 0.0:
        raise BasisError("empty sub-extent")
    c = p.mean(axis=0)
    tris = np.array([[c, p[k], p[(k + 1) % len(p)]] for k in range(len(p))])
    pts, w = map_triangles(degree, tris)
    keep = w.sum(axis=1) > 0.0
    return QuadratureRule(pts[keep].reshape(-1, 2), w[keep].ravel(), degree)


def cut_cell_rule(basis_degree: int, sub_extent) -> QuadratureRule:
    """Quadrature on a cut sub-cell: interval (a, b) or convex polygon (k, 2)."""
    ext = np.asarray(sub_extent, dtype=float)
    if ext.ndim == 1:
        a, b = ext
        if not b > a:
            raise BasisError("empty sub-extent")
        return gauss_rule(basis_degree + 2, (a, b))
    return polygon_rule(2 * basis_degree + 2, ext)


@dataclass(frozen=True)
class IntervalBasis:
    degree: int
    _coef: tuple = field(init=False, repr=False, compare=False)

    kind = "interval"

    def __post_init__(self):
        if self.degree < 0:
            raise BasisError("degree must be non-negative")
        r = self.degree
        # column k holds Legendre coefficients of sqrt(2k+1) P_k
        base = np.zeros((r + 1, r + 1))
        for k in range(r + 1):
            base[k, k] = np.sqrt(2 * k + 1)
        coef = [base] + [npleg.legder(base, m=d, axis=0) for d in range(1, r + 1)]
        object.__setattr__(self, "_coef", tuple(coef))

    @property
    def dof_count(self) -> int:
        return self.degree + 1

    def eval_ref(self, xi, deriv: int = 0) -> np.ndarray:
        """Values of d^k/dxi^k phi on the reference element; shape xi.shape + (r+1,)."""
        if deriv < 0 or deriv > self.degree:
            raise BasisError(f"derivative order {deriv} exceeds degree {self.degree}")
        xi = np.asarray(xi, dtype=float)
        vals = npleg.legval(xi, self._coef[deriv], tensor=True)  # (r+1,) + xi.shape
        return np.moveaxis(vals, 0, -1)

    def eval(self, a, b, x, deriv: int = 0) -> np.ndarray:
        """Derivative of order `deriv` of the basis of element [a, b] at x.

        a, b broadcast against x.  Points outside [a, b] are allowed (the
        polynomial extension is evaluated).
        """
        a = np.asarray(a, dtype=float)
        b = np.asarray(b, dtype=float)
        x = np.asarray(x, dtype=float)
        xi = (2.0 * x - a - b) / (b - a)
        vals = self.eval_ref(xi, deriv)
        if deriv:
            scale = (2.0 / (b - a)) ** deriv
            vals = vals * np.broadcast_to(scale, xi.shape)[..., None]
        return vals

    def derivative_gram(self) -> np.ndarray:
        """G[b, a] = integral of phi_b' phi_a over [-1, 1], in closed form."""
        k = np.arange(self.degree + 1)
        b, a = np.meshgrid(k, k, indexing="ij")
        return np.where((b > a) & ((a + b) % 2 == 1), 2.0 * np.sqrt((2 * a + 1) * (2 * b + 1.0)), 0.0)

    def endpoint_values(self, deriv: int = 0) -> tuple[np.ndarray, np.ndarray]:
        """Reference-coordinate derivatives at xi = -1 and xi = +1."""
        v = self.eval_ref(np.array([-1.0, 1.0]), deriv)
        return v[0], v[1]


def eval_basis(basis, element_extent, point, deriv_order: int = 0) -> np.ndarray:
    if isinstance(basis, IntervalBasis):
        a, b = element_extent
        return basis.eval(a, b, point, deriv_order)
    if deriv_order > basis.degree:
        raise BasisError(f"derivative order {deriv_order} exceeds degree {basis.degree}")
    tri = np.asarray(element_extent, dtype=float)
    frame = basis.frames(tri[None])
    pts = np.atleast_2d(np.asarray(point, dtype=float))
    return basis.eval(frame, np.zeros(len(pts), dtype=int), pts, (deriv_order, 0))


def monomial_exponents(r: int) -> list[tuple[int, int]]:
    return [(i, d - i) for d in range(r + 1) for i in range(d, -1, -1)]


@dataclass(frozen=True)
class TriangleFrames:
    """Per-triangle data for the orthonormalised monomial basis."""
    centroid: np.ndarray  # (n, 2)
    scale: np.ndarray  # (n,)
    coef: np.ndarray  # (n, nb, nb): phi = coef @ monomials
    area: np.ndarray


@dataclass(frozen=True)
class TriangleBasis:
    degree: int

    kind = "triangle"

    @property
    def dof_count(self) -> int:
        return (self.degree + 1) * (self.degree + 2) // 2

    @property
    def exponents(self) -> list[tuple[int, int]]:
        return monomial_exponents(self.degree)

    def _monomials(self, centroid, scale, pts, dx: int = 0, dy: int = 0) -> np.ndarray:
        # pts (..., 2) with centroid/scale broadcasting over leading dims
        X = (pts[..., 0] - centroid[..., 0]) / scale
        Y = (pts[..., 1] - centroid[..., 1]) / scale
        out = np.zeros(X.shape + (self.dof_count,))
        for m, (i, j) in enumerate(self.exponents):
            if i < dx or j < dy:
                continue
            c = 1.0
            for q in range(dx):
                c *= i - q
            for q in range(dy):
                c *= j - q
            out[..., m] = c * X ** (i - dx) * Y ** (j - dy) / scale ** (dx + dy)
        return out

    def frames(self, tris: np.ndarray) -> TriangleFrames:
        tris = np.asarray(tris, dtype=float)
        centroid = tris.mean(axis=1)
        edges = np.stack([tris[:, 1] - tris[:, 0], tris[:, 2] - tris[:, 1], tris[:, 0] - tris[:, 2]], axis=1)
        scale = np.linalg.norm(edges, axis=2).max(axis=1)
        pts, w = map_triangles(2 * self.degree, tris)
        mono = self._monomials(centroid[:, None, :], scale[:, None], pts)
        area = w.sum(axis=1)
        gram = np.einsum("nq,nqa,nqb->nab", w, mono, mono) / area[:, None, None]
        L = np.linalg.cholesky(gram)
        eye = np.broadcast_to(np.eye(self.dof_count), L.shape)
        coef = np.linalg.solve(L, eye)  # rows: orthonormal combinations
        return TriangleFrames(centroid, scale, coef, area)

    def eval(self, frames: TriangleFrames, tri_idx, pts, deriv=(0, 0)) -> np.ndarray:
        """Basis derivative d^deriv at pts (..., 2) for triangles tri_idx (...)."""
        dx, dy = deriv
        if dx + dy > self.degree:
            raise BasisError(f"derivative order {dx + dy} exceeds degree {self.degree}")
        tri_idx = np.asarray(tri_idx)
        c = frames.centroid[tri_idx]
        s = frames.scale[tri_idx]
        mono = self._monomials(c, s, pts, dx, dy)
        return np.einsum("...ab,...b->...a", frames.coef[tri_idx], mono)

    def eval_normal(self, frames: TriangleFrames, tri_idx, pts, normal, k: int) -> np.ndarray:
        """k-th directional derivative along `normal` (broadcast with pts[..., 0])."""
        nx = np.asarray(normal)[..., 0]
        ny = np.asarray(normal)[..., 1]
        out = 0.0
        for p in range(k + 1):
            coeff = comb(k, p) * nx**p * ny ** (k - p)
            out = out + np.asarray(coeff)[..., None] * self.eval(frames, tri_idx, pts, (p, k - p))
        return out
