"""Structured triangle meshes, a straight interface line and cut classification."""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np


class Geometry2DError(ValueError):
    pass


@dataclass(frozen=True)
class TriMesh:
    """Uniform quad grid with every cell split along its (1, 1) diagonal."""
    vertices: np.ndarray  # (nv, 2)
    triangles: np.ndarray  # (nt, 3), counter-clockwise
    bounds: tuple  # (x_min, x_max, y_min, y_max)
    nx: int
    ny: int

    @classmethod
    def rectangle(cls, x_min: float, x_max: float, y_min: float, y_max: float, nx: int, ny: int) -> "TriMesh":
        if nx < 1 or ny < 1 or not (x_max > x_min and y_max > y_min):
            raise Geometry2DError("bad rectangle or cell counts")
        xs = np.linspace(x_min, x_max, nx + 1)
        ys = np.linspace(y_min, y_max, ny + 1)
        X, Y = np.meshgrid(xs, ys, indexing="xy")
        verts = np.column_stack([X.ravel(), Y.ravel()])
        i, j = np.meshgrid(np.arange(nx), np.arange(ny), indexing="xy")
        v00 = (j * (nx + 1) + i).ravel()
        v10, v01, v11 = v00 + 1, v00 + nx + 1, v00 + nx + 2
        lower = np.column_stack([v00, v10, v11])
        upper = np.column_stack([v00, v11, v01])
        tris = np.empty((2 * len(v00), 3), dtype=int)
        tris[0::2], tris[1::2] = lower, upper
        return cls(verts, tris, (float(x_min), float(x_max), float(y_min), float(y_max)), nx, ny)

    @property
    def n_triangles(self) -> int:
        return len(self.triangles)

    @cached_property
    def corners(self) -> np.ndarray:
        return self.vertices[self.triangles]  # (nt, 3, 2)

    @cached_property
    def areas(self) -> np.ndarray:
        p = self.corners
        d1, d2 = p[:, 1] - p[:, 0], p[:, 2] - p[:, 0]
        return 0.5 * (d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0])

    @cached_property
    def centroids(self) -> np.ndarray:
        return self.corners.mean(axis=1)

    @cached_property
    def edges(self) -> "EdgeTable":
        return EdgeTable.build(self)

    @property
    def h(self) -> float:
        """Largest edge length."""
        v = self.vertices[self.edges.vertices]
        return float(np.linalg.norm(v[:, 1] - v[:, 0], axis=1).max())

    @property
    def cell_width(self) -> float:
        return (self.bounds[1] - self.bounds[0]) / self.nx


@dataclass(frozen=True)
class EdgeTable:
    vertices: np.ndarray  # (ne, 2)
    left: np.ndarray  # triangle owning the edge with outward normal `normal`
    right: np.ndarray  # neighbour or -1 on the boundary
    normal: np.ndarray  # (ne, 2) unit, from left to right
    length: np.ndarray
    tag: np.ndarray  # "" interior, else one of x_min, x_max, y_min, y_max

    @classmethod
    def build(cls, mesh: TriMesh) -> "EdgeTable":
        t = mesh.triangles
        loc = np.array([[0, 1], [1, 2], [2, 0]])
        pairs = t[:, loc].reshape(-1, 2)  # local edges, ccw orientation
        owner = np.repeat(np.arange(len(t)), 3)
        key = np.sort(pairs, axis=1)
        uniq, inv, counts = np.unique(key, axis=0, return_inverse=True, return_counts=True)
        inv = inv.ravel()
        ne = len(uniq)
        first = np.full(ne, -1)
        second = np.full(ne, -1)
        order = np.argsort(inv, kind="stable")
        sorted_inv = inv[order]
        starts = np.searchsorted(sorted_inv, np.arange(ne))
        first[:] = order[starts]
        has2 = counts == 2
        second[has2] = order[starts[has2] + 1]
        left = owner[first]
        right = np.where(has2, owner[np.maximum(second, 0)], -1)
        p, q = mesh.vertices[pairs[first, 0]], mesh.vertices[pairs[first, 1]]
        d = q - p
        length = np.linalg.norm(d, axis=1)
        normal = np.column_stack([d[:, 1], -d[:, 0]]) / length[:, None]  # outward for a ccw triangle
        x0, x1, y0, y1 = mesh.bounds
        mid = 0.5 * (p + q)
        tag = np.full(ne, "", dtype=object)
        bnd = right < 0
        tol = 1e-12 * max(x1 - x0, y1 - y0)
        for name, test in (("x_min", np.abs(mid[:, 0] - x0) < tol), ("x_max", np.abs(mid[:, 0] - x1) < tol),
                           ("y_min", np.abs(mid[:, 1] - y0) < tol), ("y_max", np.abs(mid[:, 1] - y1) < tol)):
            tag[bnd & test] = name
        return cls(pairs[first], left, right, normal, length, tag)

    @property
    def count(self) -> int:
        return len(self.left)

    @property
    def interior(self) -> np.ndarray:
        return np.flatnonzero(self.right >= 0)

    @property
    def boundary(self) -> np.ndarray:
        return np.flatnonzero(self.right < 0)


@dataclass(frozen=True)
class LineInterface:
    """Gamma = {x : n . x = c}; side 1 is n . x <= c, n points from side 1 to side 2."""
    normal: tuple
    offset: float

    def __post_init__(self):
        n = np.asarray(self.normal, dtype=float)
        if abs(np.linalg.norm(n) - 1.0) > 1e-12:
            raise Geometry2DError("interface normal must be a unit vector")

    @classmethod
    def diagonal(cls, c0: float) -> "LineInterface":
        """The line x + y = c0."""
        s = 1.0 / np.sqrt(2.0)
        return cls((s, s), c0 * s)

    @property
    def n(self) -> np.ndarray:
        return np.asarray(self.normal, dtype=float)

    def level(self, pts) -> np.ndarray:
        return np.asarray(pts, dtype=float) @ self.n - self.offset

    def side(self, pts) -> np.ndarray:
        return np.where(self.level(pts) <= 0.0, 1, 2)


# ----------------------------------------------------------------- clipping

def clip_polygon(poly: np.ndarray, line: LineInterface, side: int, tol: float = 0.0) -> np.ndarray:
    """Part of a convex polygon on one side of the line (Sutherland-Hodgman, one plane)."""
    s = line.level(poly)
    if side == 2:
        s = -s
    s = np.where(np.abs(s) <= tol, 0.0, s)
    out = []
    n = len(poly)
    for k in range(n):
        p, q = poly[k], poly[(k + 1) % n]
        sp_, sq = s[k], s[(k + 1) % n]
        if sp_ <= 0:
            out.append(p)
        if sp_ * sq < 0:
            out.append(p + (sp_ / (sp_ - sq)) * (q - p))
    return np.array(out) if out else np.zeros((0, 2))


def polygon_area(poly: np.ndarray) -> float:
    if len(poly) < 3:
        return 0.0
    x, y = poly[:, 0], poly[:, 1]
    return 0.5 * float(np.dot(x, np.roll(y, -1)) - np.dot(np.roll(x, -1), y))


def clip_segment(p: np.ndarray, q: np.ndarray, line: LineInterface, side: int, tol: float = 0.0):
    """Part of segment pq on one side; None when it has zero length."""
    sp_, sq = line.level(p), line.level(q)
    if side == 2:
        sp_, sq = -sp_, -sq
    sp_ = 0.0 if abs(sp_) <= tol else sp_
    sq = 0.0 if abs(sq) <= tol else sq
    if sp_ <= 0 and sq <= 0:
        return (p, q) if (sp_ < 0 or sq < 0) else None
    if sp_ > 0 and sq > 0:
        return None
    if sp_ == 0 or sq == 0:
        return None
    x = p + (sp_ / (sp_ - sq)) * (q - p)
    return (p, x) if sp_ < 0 else (x, q)


# ------------------------------------------------------------ classification

@dataclass(frozen=True)
class CutRegion2D:
    triangle: int
    polygons: tuple  # (side-1 polygon, side-2 polygon)
    segment: np.ndarray  # (2, 2) Gamma inside the triangle


@dataclass(frozen=True)
class ActiveTopology2D:
    side: int
    triangles: np.ndarray  # active triangles of this side
    uncut: np.ndarray  # active triangles lying entirely in this side
    interior_edges: np.ndarray  # edges with both neighbours active and positive length in the side
    stabilized_faces: np.ndarray  # interior edges of the active mesh touching a cut triangle


@dataclass(frozen=True)
class Classification2D:
    mesh: TriMesh
    line: LineInterface
    topologies: tuple
    cuts: dict = field(default_factory=dict)  # triangle -> CutRegion2D
    tol: float = 0.0

    @property
    def cut_triangles(self) -> np.ndarray:
        return np.array(sorted(self.cuts), dtype=int)


AREA_RTOL = 1e-12


def vertex_levels(mesh: TriMesh, line: LineInterface) -> np.ndarray:
    return line.level(mesh.corners.reshape(-1, 2)).reshape(-1, 3)


def classify_2d(mesh: TriMesh, line: LineInterface) -> Classification2D:
    tol = 1e-12 * mesh.h
    lv = vertex_levels(mesh, line)
    lv = np.where(np.abs(lv) <= tol, 0.0, lv)
    act1 = lv.min(axis=1) < 0
    act2 = lv.max(axis=1) > 0
    if not act1.any() or not act2.any():
        raise Geometry2DError("interface line misses the domain")
    cut = act1 & act2
    cuts = {}
    for t in np.flatnonzero(cut):
        tri = mesh.corners[t]
        p1 = clip_polygon(tri, line, 1, tol)
        p2 = clip_polygon(tri, line, 2, tol)
        # slivers below roundoff of the shoelace formula are assigned to the other side
        small = AREA_RTOL * mesh.areas[t]
        if polygon_area(p1) <= small or polygon_area(p2) <= small:
            keep1 = polygon_area(p1) > polygon_area(p2)
            act1[t], act2[t], cut[t] = keep1, not keep1, False
            continue
        seg = _triangle_segment(tri, line, tol)
        cuts[int(t)] = CutRegion2D(int(t), (p1, p2), seg)
    edges = mesh.edges
    ev = line.level(mesh.vertices[edges.vertices.ravel()]).reshape(-1, 2)
    ev = np.where(np.abs(ev) <= tol, 0.0, ev)
    topos = []
    for side, act in ((1, act1), (2, act2)):
        sgn = ev if side == 1 else -ev
        in_side = sgn.min(axis=1) < 0  # positive-length part on this side
        inner = edges.interior
        both = act[edges.left[inner]] & act[edges.right[inner]]
        ie = inner[both & in_side[inner]]
        cut_adj = cut[edges.left[inner]] | cut[edges.right[inner]]
        faces = inner[both & cut_adj]
        topos.append(ActiveTopology2D(side, np.flatnonzero(act), np.flatnonzero(act & ~cut), ie, faces))
    return Classification2D(mesh, line, tuple(topos), cuts, tol)


def _triangle_segment(tri: np.ndarray, line: LineInterface, tol: float) -> np.ndarray:
    s = line.level(tri)
    s = np.where(np.abs(s) <= tol, 0.0, s)
    pts = []
    for k in range(3):
        p, q = tri[k], tri[(k + 1) % 3]
        a, b = s[k], s[(k + 1) % 3]
        if a == 0.0:
            pts.append(p)
        if a * b < 0:
            pts.append(p + (a / (a - b)) * (q - p))
    pts = np.array(pts)
    if len(pts) != 2:
        raise Geometry2DError("degenerate interface segment")
    return pts
