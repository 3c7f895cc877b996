"""Explicit Runge-Kutta integrators for  mass u' = -spatial u + inflow(g(t)).

Schemes are stored in Butcher form so that the boundary-flux bookkeeping of
the conservation error uses exactly the stage weights of the update.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
import scipy.sparse as sp


@dataclass(frozen=True)
class RkScheme:
    kind: str
    A: np.ndarray
    b: np.ndarray
    c: np.ndarray
    order: int

    @property
    def stages(self) -> int:
        return len(self.b)

    @classmethod
    def tvd_rk3(cls) -> "RkScheme":
        A = np.array([[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [0.25, 0.25, 0.0]])
        return cls("tvd_rk3", A, np.array([1 / 6, 1 / 6, 2 / 3]), np.array([0.0, 1.0, 0.5]), 3)

    @classmethod
    def rk2_tvd(cls) -> "RkScheme":
        A = np.array([[0.0, 0.0], [1.0, 0.0]])
        return cls("rk2_tvd", A, np.array([0.5, 0.5]), np.array([0.0, 1.0]), 2)

    @classmethod
    def ssp_rk4_5(cls) -> "RkScheme":
        # SSP(5,4) of Spiteri and Ruuth in Shu-Osher form, converted to Butcher form.
        alpha = np.zeros((6, 5))
        beta = np.zeros((6, 5))
        alpha[1, 0], beta[1, 0] = 1.0, 0.391752226571890
        alpha[2, 0], alpha[2, 1], beta[2, 1] = 0.444370493651235, 0.555629506348765, 0.368410593050371
        alpha[3, 0], alpha[3, 2], beta[3, 2] = 0.620101851488403, 0.379898148511597, 0.251891774271694
        alpha[4, 0], alpha[4, 3], beta[4, 3] = 0.178079954393132, 0.821920045606868, 0.544974750228521
        alpha[5, 2], alpha[5, 3], alpha[5, 4] = 0.517231671970585, 0.096059710526147, 0.386708617503269
        beta[5, 3], beta[5, 4] = 0.063692468666290, 0.226007483236906
        # stage i = sum_j alpha_ij stage_j + dt beta_ij L(stage_j); Butcher rows by recursion
        B = np.zeros((6, 5))
        for i in range(1, 6):
            for j in range(i):
                B[i] += alpha[i, j] * B[j]
                B[i, j] += beta[i, j]
        A = B[:5]
        b = B[5]
        return cls("ssp_rk4_5", A, b, A.sum(axis=1), 4)

    @classmethod
    def by_name(cls, name: str) -> "RkScheme":
        return {"tvd_rk3": cls.tvd_rk3, "rk2_tvd": cls.rk2_tvd, "ssp_rk4_5": cls.ssp_rk4_5}[name]()

    @classmethod
    def for_degree(cls, r: int) -> "RkScheme":
        return cls.tvd_rk3() if r <= 2 else cls.ssp_rk4_5()


COURANT = {1: 0.3, 2: 0.2, 3: 0.1}


def cfl_dt(h: float, flux, r: int, courant: Optional[float] = None) -> float:
    if courant is None:
        if r not in COURANT:
            raise ValueError(f"no tabulated Courant number for r={r}; pass courant")
        courant = COURANT[r]
    return courant * h / flux.max_speed


def uniform_steps(t_end: float, dt_max: float) -> tuple[int, float]:
    """Number of equal steps reaching t_end with dt <= dt_max."""
    n = max(1, math.ceil(t_end / dt_max - 1e-9))
    return n, t_end / n


def _fd_derivative(g: Callable, t: float, order: int, eps: float = 1e-4):
    if order == 1:
        return (np.asarray(g(t + eps)) - np.asarray(g(t - eps))) / (2 * eps)
    return (np.asarray(g(t + eps)) - 2 * np.asarray(g(t)) + np.asarray(g(t - eps))) / eps**2


@dataclass(frozen=True)
class BoundaryDataLadder:
    """Boundary data g(t) and the stage values fed to each RK stage.

    For TVD-RK3 the stage data follow the Taylor ladder
    g, g + dt g', g + dt/2 g' + dt^2/4 g''; other schemes use g(t + c_j dt).
    """
    g: Callable
    dg: Optional[Callable] = None
    ddg: Optional[Callable] = None
    taylor: bool = True

    def derivative(self, t: float, order: int):
        f = self.dg if order == 1 else self.ddg
        if f is not None:
            return np.asarray(f(t), dtype=float)
        return _fd_derivative(self.g, t, order)

    def stage_values(self, scheme: RkScheme, t: float, dt: float) -> list:
        if scheme.kind == "tvd_rk3" and self.taylor:
            g0 = np.asarray(self.g(t), dtype=float)
            g1 = self.derivative(t, 1)
            g2 = self.derivative(t, 2)
            return [g0, g0 + dt * g1, g0 + 0.5 * dt * g1 + 0.25 * dt**2 * g2]
        return [np.asarray(self.g(t + c * dt), dtype=float) for c in scheme.c]

    def table(self, scheme: RkScheme, t0: float, dt: float, n_steps: int) -> np.ndarray:
        """Flattened stage data of every step, shape (n_steps, stages * size)."""
        rows = [np.concatenate([np.ravel(g) for g in self.stage_values(scheme, t0 + k * dt, dt)])
                for k in range(n_steps)]
        return np.array(rows, dtype=float)

    @classmethod
    def zero(cls, shape) -> "BoundaryDataLadder":
        z = np.zeros(shape)
        return cls(lambda t: z, lambda t: z, lambda t: z)


@dataclass
class StepRecord:
    influx: np.ndarray  # dt * sum_j b_j (F_L - F_R)(stage j)


def step(scheme: RkScheme, operators, u: np.ndarray, t: float, dt: float, ladder: BoundaryDataLadder,
         record: Optional[list] = None) -> np.ndarray:
    """One RK step on  u' = M^{-1}(-K u + inflow(g)).

    `operators` needs rhs(u, g) and, when `record` is given, net_flux(u, g).
    """
    gs = ladder.stage_values(scheme, t, dt)
    ks = []
    influx = 0.0
    for j in range(scheme.stages):
        U = u.copy()
        for l in range(j):
            if scheme.A[j, l] != 0.0:
                U += dt * scheme.A[j, l] * ks[l]
        ks.append(operators.rhs(U, gs[j]))
        if record is not None:
            influx = influx + dt * scheme.b[j] * operators.net_flux(U, gs[j])
    out = u.copy()
    for j in range(scheme.stages):
        out += dt * scheme.b[j] * ks[j]
    if record is not None:
        record.append(StepRecord(np.atleast_1d(influx)))
    return out


class LinearPropagator:
    """Precompiled one-step map  u_{n+1} = P u_n + sum_j Q_j g_j  for 1D operators.

    Requires an explicit sparse M^{-1}.  Stage fluxes are also linear in
    (u_n, g_j), giving the conservation bookkeeping at no extra cost.
    """

    def __init__(self, operators, scheme: RkScheme, dt: float):
        self.scheme = scheme
        self.dt = dt
        n = operators.size
        Minv = operators.solver.inverse_matrix()
        L = (-(Minv @ operators.spatial)).tocsr()
        G = Minv @ operators.boundary_inflow_column  # (n, 2m)
        ng = G.shape[1]
        s = scheme.stages
        m = operators.parts.flux_left_u.shape[0]
        Fu = operators.parts.flux_left_u - operators.parts.flux_right_u  # (m, n)
        Fg = np.hstack([operators.parts.flux_left_g, -operators.parts.flux_right_g])  # (m, 2m)
        I = sp.identity(n, format="csr")
        X = []  # U_j = X_j u + sum_l Y[j][l] g_l
        Y = []
        KX = []
        KY = []
        for j in range(s):
            Xj = I.copy()
            Yj = [np.zeros((n, ng)) for _ in range(s)]
            for l in range(j):
                a = scheme.A[j, l]
                if a == 0.0:
                    continue
                Xj = Xj + (dt * a) * KX[l]
                for q in range(s):
                    Yj[q] = Yj[q] + (dt * a) * KY[l][q]
            X.append(Xj.tocsr())
            Y.append(Yj)
            KX.append((L @ Xj).tocsr())
            KYj = [L @ Yj[q] for q in range(s)]
            KYj[j] = KYj[j] + G
            KY.append(KYj)
        P = I.copy()
        Q = [np.zeros((n, ng)) for _ in range(s)]
        FX = np.zeros((m, n))
        FY = [np.zeros((m, ng)) for _ in range(s)]
        for j in range(s):
            w = dt * scheme.b[j]
            P = P + w * KX[j]
            for q in range(s):
                Q[q] += w * KY[j][q]
            FX += w * (X[j].T @ Fu.T).T
            for q in range(s):
                FY[q] += w * (Fu @ Y[j][q])
            FY[j] += w * Fg
        self.P = P.tocsr()
        self.Q = np.hstack(Q)  # (n, s*ng)
        self.FX = FX
        self.FY = np.hstack(FY)

    def apply(self, u: np.ndarray, gstages) -> tuple[np.ndarray, np.ndarray]:
        gvec = np.concatenate([np.asarray(g, dtype=float).ravel() for g in gstages])
        return self.P @ u + self.Q @ gvec, self.FX @ u + self.FY @ gvec


@dataclass
class RunTrace:
    times: np.ndarray
    influx: np.ndarray  # cumulative boundary influx, (nt, m)
    totals: np.ndarray  # integral of each component, (nt, m)
    energy: Optional[np.ndarray] = None

    @property
    def conservation_error(self) -> np.ndarray:
        """e(t) = cumulative influx - (total(t) - total(0)), per component."""
        return self.influx - (self.totals - self.totals[0])


def integrate(operators, u0: np.ndarray, t_end: float, dt: float, scheme: RkScheme,
              ladder: BoundaryDataLadder, compiled: bool = True, energy: Optional[Callable] = None,
              record_every: int = 1, t0: float = 0.0,
              stage_table: Optional[np.ndarray] = None) -> tuple[np.ndarray, RunTrace]:
    """Integrate to t_end with equal steps of size dt (dt must divide the interval).

    `stage_table` (from ladder.table) may be passed to share boundary data
    between runs with the same time grid.
    """
    n_steps = int(round((t_end - t0) / dt))
    if n_steps < 0 or abs(n_steps * dt - (t_end - t0)) > 1e-9 * max(1.0, abs(t_end)):
        raise ValueError("dt must divide the integration interval")
    prop = LinearPropagator(operators, scheme, dt) if compiled else None
    u = np.array(u0, dtype=float)
    totals = [operators.total(u)]
    influx = [np.zeros_like(totals[0])]
    times = [t0]
    energies = [energy(u)] if energy is not None else None
    cum = np.zeros_like(totals[0])
    if prop is not None:
        table = ladder.table(scheme, t0, dt, n_steps) if stage_table is None else stage_table
        if table.shape[0] != n_steps:
            raise ValueError("stage table does not match the number of steps")
        FG = table @ prop.FY.T  # (n_steps, m)
        chunk = 256
    for k in range(n_steps):
        t = t0 + k * dt
        if prop is not None:
            if k % chunk == 0:
                QG = table[k : k + chunk] @ prop.Q.T  # boundary forcing of the next steps
            f = prop.FX @ u + FG[k]
            u = prop.P @ u + QG[k % chunk]
        else:
            rec: list = []
            u = step(scheme, operators, u, t, dt, ladder, rec)
            f = rec[0].influx
        cum = cum + f
        if (k + 1) % record_every == 0 or k + 1 == n_steps:
            times.append(t0 + (k + 1) * dt)
            totals.append(operators.total(u))
            influx.append(cum.copy())
            if energies is not None:
                energies.append(energy(u))
    trace = RunTrace(np.array(times), np.array(influx), np.array(totals),
                     None if energies is None else np.array(energies))
    return u, trace
