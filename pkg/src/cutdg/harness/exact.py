"""Closed-form reference solutions for the experiment presets."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..geometry1d import InterfacePath


@dataclass(frozen=True)
class SmoothStationary:
    """a = (2, 1) on [-1, 1]; transmitted wave with twice the frequency."""
    x_gamma: float

    def initial(self, side: int):
        return lambda x: self(side, x, 0.0)

    def __call__(self, side: int, x, t: float):
        x = np.asarray(x, dtype=float)
        if side == 1:
            return np.sin(2 * np.pi * (x - 2 * t))
        return 2 * np.sin(4 * np.pi * (x - t - 0.5 * self.x_gamma))

    @staticmethod
    def inflow(t):
        return np.sin(2 * np.pi * (-1 - 2 * t))

    @staticmethod
    def inflow_dt(t):
        return -4 * np.pi * np.cos(2 * np.pi * (-1 - 2 * t))

    @staticmethod
    def inflow_dtt(t):
        return -16 * np.pi**2 * np.sin(2 * np.pi * (-1 - 2 * t))


def pulse_train(t):
    """sin(4 pi (-1 + 3 t)) switched on at t = 0."""
    t = np.asarray(t, dtype=float)
    return np.where(t >= 0, np.sin(4 * np.pi * (-1 + 3 * t)), 0.0)


@dataclass(frozen=True)
class InflowFront:
    """Zero data, inflow g at x = -1, a = (a1, a2) and an interface following `path`.

    Side 2 values are traced back along dx/dt = a2 to the crossing time tau
    with x_gamma(tau); flux continuity gives u2 = (a1 - v) / (a2 - v) u1 there.
    """
    path: InterfacePath
    a1: float = 2.0
    a2: float = 1.0
    x_left: float = -1.0

    @staticmethod
    def inflow(t):
        return pulse_train(t)

    @staticmethod
    def inflow_dt(t):
        return 12 * np.pi * np.cos(4 * np.pi * (-1 + 3 * t))

    @staticmethod
    def inflow_dtt(t):
        return -144 * np.pi**2 * np.sin(4 * np.pi * (-1 + 3 * t))

    def side1(self, x, t):
        return pulse_train(t - (np.asarray(x, dtype=float) - self.x_left) / self.a1)

    def __call__(self, side: int, x, t: float):
        x = np.asarray(x, dtype=float)
        if side == 1:
            return self.side1(x, t)
        if self.path.is_stationary:
            xg = float(self.path.position(0.0))
            tau = t - (x - xg) / self.a2
            ratio = self.a1 / self.a2
            return np.where(tau >= 0, ratio * self.side1(xg, tau), 0.0)
        # phi(tau) = x - a2 (t - tau) - x_gamma(tau) is increasing while v < a2
        lo = np.zeros_like(x)
        hi = np.full_like(x, t)
        phi = lambda s: x - self.a2 * (t - s) - self.path.position(s)
        reached = phi(lo) <= 0
        for _ in range(60):
            mid = 0.5 * (lo + hi)
            neg = phi(mid) <= 0
            lo = np.where(neg, mid, lo)
            hi = np.where(neg, hi, mid)
        tau = 0.5 * (lo + hi)
        v = self.path.velocity(tau)
        xg = self.path.position(tau)
        val = (self.a1 - v) / (self.a2 - v) * self.side1(xg, tau)
        return np.where(reached, val, 0.0)


@dataclass(frozen=True)
class SmoothMoving:
    """Interface moving with constant speed v; exact travelling waves on both sides."""
    x0: float = 1e-4
    v: float = 0.111
    a1: float = 2.0
    a2: float = 1.0

    @property
    def beta(self) -> float:
        return (self.a1 - self.v) / (self.a2 - self.v)

    def initial(self, side: int):
        return lambda x: self(side, x, 0.0)

    def __call__(self, side: int, x, t: float):
        x = np.asarray(x, dtype=float)
        if side == 1:
            return np.sin(2 * np.pi * (x - self.a1 * t))
        b = self.beta
        return b * np.sin(2 * np.pi * b * (x - self.a2 * t) + 2 * np.pi * self.x0 * (1 - b))

    @staticmethod
    def inflow(t):
        return np.sin(2 * np.pi * (-1 - 2 * t))


@dataclass(frozen=True)
class PlaneWaves2D:
    """Diagonal interface x + y = c0 with a = (3, 1) and (2, 1)."""
    c0: float = 0.5

    def side1(self, x, y, t):
        return np.sin(np.pi * (x + y - 4 * t))

    def side2(self, x, y, t):
        return 4.0 / 3.0 * np.sin(4.0 / 3.0 * np.pi * (x + y - 3 * t - self.c0 / 4))


@dataclass(frozen=True)
class DiscTransport2D:
    """Indicator of a disc carried by a1, refracted into side 2 with the normal-flux ratio."""
    a1: tuple = (3.0, 1.0)
    a2: tuple = (1.0, 2.0)
    c0: float = 0.25
    centre: tuple = (-0.3, -0.3)
    radius: float = 0.3
    bounds: tuple = (-1.0, 1.0, -1.0, 1.0)

    def initial(self, x, y):
        cx, cy = self.centre
        return np.where((x - cx) ** 2 + (y - cy) ** 2 <= self.radius**2, 1.0, 0.0)

    def _inside(self, x, y):
        x0, x1, y0, y1 = self.bounds
        return (x >= x0) & (x <= x1) & (y >= y0) & (y <= y1)

    def side1(self, x, y, t):
        px, py = x - self.a1[0] * t, y - self.a1[1] * t
        return np.where(self._inside(px, py), self.initial(px, py), 0.0)

    def side2(self, x, y, t):
        n = np.array([1.0, 1.0]) / np.sqrt(2.0)
        a1, a2 = np.asarray(self.a1), np.asarray(self.a2)
        s = (n[0] * x + n[1] * y - self.c0 / np.sqrt(2.0)) / (n @ a2)  # time since crossing
        qx, qy = x - a2[0] * s, y - a2[1] * s
        crossed = s <= t
        from_gamma = np.where(self._inside(qx, qy), (n @ a1) / (n @ a2) * self.side1(qx, qy, t - s), 0.0)
        px, py = x - a2[0] * t, y - a2[1] * t
        from_start = np.where(self._inside(px, py), self.initial(px, py), 0.0)
        return np.where(crossed, from_gamma, from_start)
