"""1D background mesh, interface paths and active-mesh classification."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np


class GeometryError(ValueError):
    pass


@dataclass(frozen=True)
class BackgroundMesh1D:
    nodes: np.ndarray

    def __post_init__(self):
        nodes = np.asarray(self.nodes, dtype=float)
        if nodes.ndim != 1 or len(nodes) < 2 or np.any(np.diff(nodes) <= 0):
            raise GeometryError("nodes must be strictly increasing")
        nodes.setflags(write=False)
        object.__setattr__(self, "nodes", nodes)

    @property
    def x_left(self) -> float:
        return float(self.nodes[0])

    @property
    def x_right(self) -> float:
        return float(self.nodes[-1])

    @property
    def n_elements(self) -> int:
        return len(self.nodes) - 1

    @property
    def lengths(self) -> np.ndarray:
        return np.diff(self.nodes)

    @property
    def h(self) -> float:
        return float(self.lengths.max())

    def element_bounds(self, elems) -> tuple[np.ndarray, np.ndarray]:
        elems = np.asarray(elems, dtype=int)
        return self.nodes[elems], self.nodes[elems + 1]

    def snap_tolerance(self) -> float:
        scale = max(abs(self.x_left), abs(self.x_right), 1.0)
        return 1e-14 * self.h + 8 * np.finfo(float).eps * scale

    def locate(self, x: float) -> tuple[int, int]:
        """Elements j1, j2 adjacent to x from the left and from the right.

        j1 = j2 when x is strictly inside element j; j2 = j1 + 1 when x sits on
        a node (within the snap tolerance).
        """
        tol = self.snap_tolerance()
        k = int(np.argmin(np.abs(self.nodes - x)))
        if abs(self.nodes[k] - x) <= tol:
            return k - 1, k
        j = int(np.searchsorted(self.nodes, x) - 1)
        return j, j

    def submesh(self, first: int, last: int) -> "BackgroundMesh1D":
        """Mesh made of background elements first..last (inclusive)."""
        return BackgroundMesh1D(self.nodes[first : last + 2])


def build_mesh(x_left: float, x_right: float, n: int) -> BackgroundMesh1D:
    if not x_left < x_right:
        raise GeometryError("invalid extent")
    if n < 2:
        raise GeometryError("invalid count")
    return BackgroundMesh1D(np.linspace(x_left, x_right, n + 1))


@dataclass(frozen=True)
class InterfacePath:
    kind: str
    params: tuple
    position: Callable[[float], float] = field(repr=False, compare=False)
    velocity: Callable[[float], float] = field(repr=False, compare=False)

    @classmethod
    def constant(cls, x0: float) -> "InterfacePath":
        return cls("constant", (x0,), lambda t: x0 + 0.0 * t, lambda t: 0.0 * t)

    @classmethod
    def linear(cls, x0: float, speed: float) -> "InterfacePath":
        return cls("linear", (x0, speed), lambda t: x0 + speed * t, lambda t: speed + 0.0 * t)

    @classmethod
    def sinusoidal(cls, x0: float, amplitude: float, omega: float = 1.0) -> "InterfacePath":
        """x(t) = x0 + amplitude * sin(omega t)."""
        return cls(
            "sinusoidal",
            (x0, amplitude, omega),
            lambda t: x0 + amplitude * np.sin(omega * t),
            lambda t: amplitude * omega * np.cos(omega * t),
        )

    @property
    def is_stationary(self) -> bool:
        return self.kind == "constant"


@dataclass(frozen=True)
class ActiveTopology:
    side: int
    elements: np.ndarray  # contiguous, sorted
    interior_edges: np.ndarray  # node indices
    stabilized_faces: np.ndarray  # node indices
    cut_element: Optional[int] = None
    cut_interval: Optional[tuple[float, float]] = None


def _check_inside(mesh: BackgroundMesh1D, x: float, what: str) -> None:
    if not (mesh.x_left < x < mesh.x_right):
        raise GeometryError(f"{what}: x={x} outside ({mesh.x_left}, {mesh.x_right})")


def side_elements(mesh: BackgroundMesh1D, x_gamma: float) -> tuple[np.ndarray, np.ndarray]:
    """Elements with positive-measure intersection with each side."""
    j1, j2 = mesh.locate(x_gamma)
    n = mesh.n_elements
    return np.arange(0, j1 + 1), np.arange(j2, n)


def _faces(elements: np.ndarray, swept) -> np.ndarray:
    """Nodes of swept elements interior to the contiguous range `elements`."""
    if len(elements) == 0:
        return np.zeros(0, dtype=int)
    lo, hi = int(elements[0]), int(elements[-1])
    faces = set()
    for e in swept:
        for node in (e, e + 1):
            if lo < node <= hi:
                faces.add(node)
    return np.array(sorted(faces), dtype=int)


def classify(mesh: BackgroundMesh1D, x_gamma: float) -> tuple[ActiveTopology, ActiveTopology]:
    _check_inside(mesh, x_gamma, "interface outside domain")
    e1, e2 = side_elements(mesh, x_gamma)
    cut = [int(e1[-1])] if e1[-1] == e2[0] else []
    topos = []
    for side, elems in ((1, e1), (2, e2)):
        interior = np.arange(elems[0] + 1, elems[-1] + 1)
        faces = _faces(elems, cut)
        if cut:
            a, b = mesh.nodes[cut[0]], mesh.nodes[cut[0] + 1]
            sub = (float(a), float(x_gamma)) if side == 1 else (float(x_gamma), float(b))
            topos.append(ActiveTopology(side, elems, interior, faces, cut[0], sub))
        else:
            topos.append(ActiveTopology(side, elems, interior, faces))
    return topos[0], topos[1]


@dataclass(frozen=True)
class SlabTopology:
    t_start: float
    t_end: float
    active_1: np.ndarray
    active_2: np.ndarray
    swept_elements: np.ndarray
    stabilized_faces_1: np.ndarray
    stabilized_faces_2: np.ndarray

    @property
    def active(self) -> tuple[np.ndarray, np.ndarray]:
        return self.active_1, self.active_2

    @property
    def faces(self) -> tuple[np.ndarray, np.ndarray]:
        return self.stabilized_faces_1, self.stabilized_faces_2


def slab_topology(
    mesh: BackgroundMesh1D,
    path: InterfacePath,
    t_start: float,
    t_end: float,
    extra_times=(),
    n_samples: int = 64,
) -> SlabTopology:
    if not t_start < t_end:
        raise GeometryError("empty slab")
    times = np.unique(np.concatenate([np.linspace(t_start, t_end, n_samples), np.asarray(extra_times, float)]))
    xs = np.asarray(path.position(times), dtype=float) + 0.0 * times
    bad = (xs <= mesh.x_left) | (xs >= mesh.x_right)
    if np.any(bad):
        _check_inside(mesh, float(xs[bad][0]), "interface exits domain")
    tol = mesh.snap_tolerance()
    j = np.clip(np.searchsorted(mesh.nodes, xs) - 1, 0, mesh.n_elements - 1)
    # snap to the nearer node of the bracketing element, as locate() does
    near = np.where(np.abs(mesh.nodes[j] - xs) <= np.abs(mesh.nodes[j + 1] - xs), j, j + 1)
    on_node = np.abs(mesh.nodes[near] - xs) <= tol
    j1 = np.where(on_node, near - 1, j)
    j2 = np.where(on_node, near, j)
    lo1, hi1 = 0, int(j1.max())
    lo2, hi2 = int(j2.min()), mesh.n_elements - 1
    swept = set(j1[~on_node].tolist())
    a1 = np.arange(lo1, hi1 + 1)
    a2 = np.arange(lo2, hi2 + 1)
    sw = np.array(sorted(swept), dtype=int)
    return SlabTopology(float(t_start), float(t_end), a1, a2, sw, _faces(a1, sw), _faces(a2, sw))
