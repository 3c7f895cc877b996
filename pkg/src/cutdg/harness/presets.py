"""Experiment presets, run reports and refinement studies."""
from __future__ import annotations

import math
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Any, Callable, Optional, Sequence

import numpy as np

from ..acoustic import AcousticMaterial, AcousticSystem, InterfaceWave, energy_matrix
from ..analysis import EtaInterval, feasible_eta, region_map, weighted_energy
from ..assembly1d import FluxModel, PenaltyConfig, build_operators, project_initial
from ..coupled import coupled_advance
from ..geometry1d import InterfacePath, build_mesh
from ..spacetime import advance
from ..timestepper import BoundaryDataLadder, RkScheme, cfl_dt, integrate, uniform_steps
from .diagnostics import (
    ConvergenceRow,
    ErrorNorms,
    HarnessError,
    condition_number_blocks,
    convergence_table,
    error_norms,
    error_norms_2d,
    field_from_layout,
    scalar_error_trace,
)
from .exact import DiscTransport2D, InflowFront, PlaneWaves2D, SmoothMoving, SmoothStationary


@dataclass(frozen=True)
class ExperimentSpec:
    preset: str
    overrides: dict = field(default_factory=dict)

    def params(self) -> dict:
        return get_preset(self.preset).resolve(self.overrides)


@dataclass
class RunReport:
    preset: str
    params: dict
    n: Optional[int]
    h: Optional[float]
    norms: Optional[ErrorNorms]
    times: np.ndarray
    conservation: np.ndarray  # e(t), (nt,) or (nt, components)
    energy: Optional[np.ndarray] = None
    condition: Optional[float] = None
    wall_time: float = 0.0
    table: Optional[tuple] = None  # (header, rows) for sweep-type presets

    @property
    def max_conservation_error(self) -> float:
        return float(np.abs(self.conservation).max()) if len(self.conservation) else 0.0

    @property
    def final_conservation_error(self) -> float:
        return float(np.abs(np.atleast_1d(self.conservation[-1])).max()) if len(self.conservation) else 0.0

    def trace_rows(self) -> list[tuple]:
        e = scalar_error_trace(self.conservation) if len(self.conservation) else np.zeros(0)
        en = self.energy if self.energy is not None else np.full(len(self.times), np.nan)
        return [(float(t), float(v), float(w)) for t, v, w in zip(self.times, e, en)]

    def summary(self) -> str:
        parts = [f"preset={self.preset}"]
        if self.n is not None:
            parts.append(f"N={self.n}")
        if self.norms is not None:
            parts.append("L1={:.6e} L2={:.6e} Linf={:.6e}".format(*self.norms.as_tuple()))
        if len(self.conservation):
            parts.append(f"max|e|={self.max_conservation_error:.3e}")
        if self.condition is not None:
            parts.append(f"cond={self.condition:.4g}")
        parts.append(f"time={self.wall_time:.2f}s")
        return " ".join(parts)


@dataclass(frozen=True)
class Preset:
    name: str
    description: str
    defaults: dict
    runner: Callable[[dict], RunReport]
    degrees: tuple = (1,)
    refinements: Any = (20, 40, 80, 160, 320)  # tuple or {degree: tuple}
    choices: dict = field(default_factory=dict)

    def resolve(self, overrides: dict) -> dict:
        p = dict(self.defaults)
        for key, value in overrides.items():
            key = key.replace("-", "_")
            if key not in p:
                raise HarnessError(f"invalid override '{key}' for preset {self.name}")
            if value is None:
                continue
            p[key] = _coerce(key, value, p[key])
        if p.get("degree") not in self.degrees:
            raise HarnessError(f"invalid override: degree {p.get('degree')} not in {self.degrees}")
        for key, allowed in self.choices.items():
            if p[key] not in allowed:
                raise HarnessError(f"invalid override: {key}={p[key]} not in {allowed}")
        for key in ("n", "samples"):
            if key in p and p[key] < 1:
                raise HarnessError(f"invalid override: {key} must be positive")
        return p

    def refinement_list(self, degree: int) -> tuple:
        if isinstance(self.refinements, dict):
            return tuple(self.refinements[degree])
        return tuple(self.refinements)


def _coerce(key: str, value, default):
    try:
        if isinstance(default, bool):
            if isinstance(value, str):
                if value.lower() not in ("1", "0", "true", "false", "yes", "no"):
                    raise ValueError(value)
                return value.lower() in ("1", "true", "yes")
            return bool(value)
        if isinstance(default, int):
            f = float(value)
            if f != int(f):
                raise ValueError(value)
            return int(f)
        if isinstance(default, float) or default is None:
            return float(value)
        return str(value)
    except (TypeError, ValueError):
        raise HarnessError(f"invalid override {key}={value!r}") from None


def _penalties(p: dict) -> PenaltyConfig:
    return PenaltyConfig(p["lambda1"], p["lambda2"], p.get("gamma_M", 0.25), p.get("gamma_A", 0.75),
                         face_rule=p.get("face_rule", "small_side"))


def _energy_eta(a1: float, a2: float, lambda1: float, lambda2: float, speeds=(0.0,)) -> Optional[float]:
    """A weight eta valid for every listed interface speed, or None."""
    lo, hi = 0.0, math.inf
    for v in speeds:
        iv = feasible_eta(a1, a2, lambda1, lambda2, conservative=False, x_gamma_prime=float(v))
        if iv.empty:
            return None
        lo, hi = max(lo, iv.lo), min(hi, iv.hi)
    iv = EtaInterval(lo, hi)
    if iv.empty:
        return None
    eta = iv.midpoint
    return eta if eta > 0 else None


# ---------------------------------------------------------- stationary 1D

def _scalar_ladder(problem) -> BoundaryDataLadder:
    col = lambda f: (lambda t: np.array([[f(t)], [0.0]]))
    return BoundaryDataLadder(col(problem.inflow), col(problem.inflow_dt), col(problem.inflow_dtt))


def _stationary_scalar(p: dict, problem, x_gamma: float, initial) -> RunReport:
    t0 = time.perf_counter()
    mesh = build_mesh(-1.0, 1.0, p["n"])
    flux = FluxModel.scalar(2.0, 1.0)
    r = p["degree"]
    ops = build_operators(mesh, x_gamma, r, flux, _penalties(p))
    u0 = np.zeros(ops.layout.size) if initial is None else project_initial(ops, *initial)
    _, dt = uniform_steps(p["t_end"], cfl_dt(mesh.h, flux, r, p["courant"]))
    eta = _energy_eta(2.0, 1.0, p["lambda1"], p["lambda2"])
    energy = None if eta is None else (lambda v: weighted_energy(v, ops, eta))
    u, trace = integrate(ops, u0, p["t_end"], dt, RkScheme.for_degree(r), _scalar_ladder(problem), energy=energy)
    T = p["t_end"]
    norms = error_norms(field_from_layout(ops.layout, u), ops.x_gamma, lambda s, x: problem(s, x, T),
                        p["error_points"])
    return RunReport("", p, p["n"], mesh.h, norms, trace.times, trace.conservation_error[:, 0],
                     trace.energy, condition_number_blocks(ops.mass), time.perf_counter() - t0)


def run_stationary_accuracy(p: dict) -> RunReport:
    problem = SmoothStationary(p["x_gamma"])
    return _stationary_scalar(p, problem, p["x_gamma"], (problem.initial(1), problem.initial(2)))


def run_stationary_conservation(p: dict) -> RunReport:
    h = 2.0 / p["n"]
    x_gamma = p["x_gamma"] if p["alpha"] is None else p["alpha"] * h
    problem = InflowFront(InterfacePath.constant(x_gamma))
    return _stationary_scalar(p, problem, x_gamma, None)


# ---------------------------------------------------------------- acoustic

ACOUSTIC_MEDIA = AcousticSystem(AcousticMaterial(1000.0, 1500.0), AcousticMaterial(1200.0, 2800.0))


def run_acoustic(p: dict) -> RunReport:
    t0 = time.perf_counter()
    system = ACOUSTIC_MEDIA
    mesh = build_mesh(0.0, 300.0, p["n"])
    r = p["degree"]
    wave = InterfaceWave(system, p["x_gamma"])
    ops = build_operators(mesh, p["x_gamma"], r, system.flux, _penalties(p))
    u0 = project_initial(ops, wave.initial(1), wave.initial(2))
    _, dt = uniform_steps(p["t_end"], cfl_dt(mesh.h, system.flux, r, p["courant"]))
    E = energy_matrix(system, ops)
    u, trace = integrate(ops, u0, p["t_end"], dt, RkScheme.for_degree(r), BoundaryDataLadder.zero((2, 2)),
                         energy=lambda v: 0.5 * float(v @ (E @ v)))
    scale = tuple(m.rho * m.c**2 for m in (system.material_1, system.material_2))
    pressure = field_from_layout(ops.layout, u, comp=1, scale=scale)
    T = p["t_end"]
    norms = error_norms(pressure, ops.x_gamma, lambda s, x: wave.primitive(s, x, T)[1], p["error_points"],
                        normalize=p["normalize"])
    return RunReport("", p, p["n"], mesh.h, norms, trace.times, trace.conservation_error, trace.energy,
                     None, time.perf_counter() - t0)


# -------------------------------------------------------------- moving 1D

def _space_time(p: dict, path: InterfacePath, problem, initial) -> RunReport:
    t0 = time.perf_counter()
    mesh = build_mesh(-1.0, 1.0, p["n"])
    flux = FluxModel.scalar(2.0, 1.0)
    T = p["t_end"]
    _, dt = uniform_steps(T, p["courant"] * mesh.h / flux.max_speed)
    speeds = path.velocity(np.linspace(0.0, T, 65))
    eta = _energy_eta(2.0, 1.0, p["lambda1"], p["lambda2"], np.atleast_1d(speeds))
    run = advance(mesh, p["degree"], 1, flux, _penalties(p), path, initial, problem.inflow, T, dt,
                  formulation=p["formulation"], energy_eta=eta)
    norms = error_norms(run.final, run.x_gamma_final, lambda s, x: problem(s, x, T), p["error_points"])
    energy = run.energies
    if energy is not None:
        energy = np.concatenate([[np.nan], energy])  # slab energies start after the first slab
    return RunReport("", p, p["n"], mesh.h, norms, run.times, run.conservation_error, energy, None,
                     time.perf_counter() - t0)


def run_moving_accuracy(p: dict) -> RunReport:
    if p["courant"] is None:
        p = dict(p, courant={1: 1.0 / 6.0, 2: 0.01}[p["degree"]])
    problem = SmoothMoving(p["x0"], p["speed"])
    return _space_time(p, InterfacePath.linear(p["x0"], p["speed"]), problem,
                       (problem.initial(1), problem.initial(2)))


def run_moving_conservation(p: dict) -> RunReport:
    x0 = p["x0"]
    path = InterfacePath.sinusoidal(x0, 0.4 * (x0 + 1) * (1 - x0))
    zero = lambda x: 0.0 * np.asarray(x, dtype=float)
    return _space_time(p, path, InflowFront(path), (zero, zero))


def run_coupled(p: dict) -> RunReport:
    t0 = time.perf_counter()
    mesh = build_mesh(-1.0, 1.0, p["n"])
    flux = FluxModel.scalar(2.0, 1.0)
    T = p["t_end"]
    _, dt = uniform_steps(T, p["courant"] * mesh.h / flux.max_speed)
    problem = SmoothMoving(p["x0"], p["speed"])
    path = InterfacePath.linear(p["x0"], p["speed"])
    run = coupled_advance(mesh, flux, _penalties(p), path, (problem.initial(1), problem.initial(2)),
                          problem.inflow, T, dt, pad=p["pad"])
    norms = error_norms(run.final, run.x_gamma_final, lambda s, x: problem(s, x, T), p["error_points"])
    return RunReport("", p, p["n"], mesh.h, norms, run.times, run.conservation_error, None, None,
                     time.perf_counter() - t0)


# -------------------------------------------------------------------- 2D

def _run_2d(p: dict, problem, line_c0: float, a1, a2, initial, exact1, exact2, g) -> RunReport:
    from ..twod import LineInterface, Problem2D, TriMesh, assemble_2d, project_2d

    t0 = time.perf_counter()
    n, r, T = p["n"], p["degree"], p["t_end"]
    mesh = TriMesh.rectangle(-1.0, 1.0, -1.0, 1.0, n, n)
    prob = Problem2D(a1, a2)
    ops = assemble_2d(mesh, LineInterface.diagonal(line_c0), r, prob, _penalties(p))
    u0 = project_2d(ops, *initial)
    dt_max = p["courant"] * mesh.cell_width / ((2 * r + 1) * prob.max_speed)
    n_steps, dt = uniform_steps(T, dt_max)
    ladder = BoundaryDataLadder(ops.boundary_data(g))
    u, trace = integrate(ops, u0, T, dt, RkScheme.for_degree(r), ladder, compiled=False,
                         record_every=max(1, p["record_every"]))
    norms = error_norms_2d(ops, u, lambda x, y: exact1(x, y, T), lambda x, y: exact2(x, y, T))
    return RunReport("", p, n, mesh.cell_width, norms, trace.times, trace.conservation_error[:, 0], None, None,
                     time.perf_counter() - t0)


def run_twod_convergence(p: dict) -> RunReport:
    w = PlaneWaves2D(p["c0"])
    init = (lambda x, y: w.side1(x, y, 0.0), lambda x, y: w.side2(x, y, 0.0))
    return _run_2d(p, w, w.c0, (3.0, 1.0), (2.0, 1.0), init, w.side1, w.side2, w.side1)


def run_twod_conservation(p: dict) -> RunReport:
    d = DiscTransport2D(c0=p["c0"])
    return _run_2d(p, d, d.c0, d.a1, d.a2, (d.initial, d.initial), d.side1, d.side2,
                   lambda x, y, t: 0.0 * x)


# ----------------------------------------------------------------- sweeps

SWEEP_HEADER = ("alpha", "L1", "L2", "Linf", "cond")
REGION_HEADER = ("lambda1", "lambda2", "feasible", "eta_lo", "eta_hi")


def alpha_values(samples: int) -> np.ndarray:
    """Equally spaced relative cut sizes strictly inside (0, 1)."""
    return np.arange(1, samples + 1) / (samples + 1.0)


def _alpha_chunk(args) -> list[tuple]:
    p, alphas = args
    mesh = build_mesh(-1.0, 1.0, p["n"])
    flux = FluxModel.scalar(2.0, 1.0)
    r, T = p["degree"], p["t_end"]
    pen = _penalties(p)
    scheme = RkScheme.for_degree(r)
    n_steps, dt = uniform_steps(T, cfl_dt(mesh.h, flux, r, p["courant"]))
    table = None
    rows = []
    for alpha in alphas:
        x_gamma = float(alpha) * mesh.h
        ops = build_operators(mesh, x_gamma, r, flux, pen)
        cond = condition_number_blocks(ops.mass)
        if not p["errors"]:
            rows.append((float(alpha), math.nan, math.nan, math.nan, cond))
            continue
        problem = InflowFront(InterfacePath.constant(x_gamma))
        ladder = _scalar_ladder(problem)
        if table is None:
            table = ladder.table(scheme, 0.0, dt, n_steps)  # inflow data do not depend on alpha
        u, _ = integrate(ops, np.zeros(ops.layout.size), T, dt, scheme, ladder, record_every=n_steps,
                         stage_table=table)
        nm = error_norms(field_from_layout(ops.layout, u), ops.x_gamma, lambda s, x: problem(s, x, T),
                         p["error_points"])
        rows.append((float(alpha), *nm.as_tuple(), cond))
    return rows


def run_alpha_sweep(p: dict) -> RunReport:
    t0 = time.perf_counter()
    alphas = alpha_values(p["samples"])
    k = max(1, min(thread_count(), len(alphas)))
    chunks = [(p, c) for c in np.array_split(alphas, k)]
    rows = [row for part in parallel_map(_alpha_chunk, chunks) for row in part]
    return RunReport("", p, p["n"], 2.0 / p["n"], None, np.zeros(0), np.zeros(0), None, None,
                     time.perf_counter() - t0, (SWEEP_HEADER, rows))


def run_region_map(p: dict) -> RunReport:
    t0 = time.perf_counter()
    l1 = np.linspace(p["lambda1_min"], p["lambda1_max"], p["samples"])
    l2 = np.linspace(p["lambda2_min"], p["lambda2_max"], p["samples"])
    rows = region_map(p["a1"], p["a2"], l1, l2, conservative=p["conservative"])
    return RunReport("", p, None, None, None, np.zeros(0), np.zeros(0), None, None,
                     time.perf_counter() - t0, (REGION_HEADER, rows))


# ------------------------------------------------------------- registry

_SCALAR = dict(lambda1=0.1, lambda2=-0.9, gamma_M=0.25, gamma_A=0.75, face_rule="small_side")
_FACE = {"face_rule": ("literal", "small_side")}

PRESETS: dict[str, Preset] = {
    pr.name: pr
    for pr in (
        Preset("stationary_scalar_accuracy", "smooth waves through a fixed interface, a = (2, 1)",
               dict(_SCALAR, n=20, degree=1, courant=None, t_end=1.0, x_gamma=1e-4, error_points=3),
               run_stationary_accuracy, degrees=(1, 2, 3), choices=_FACE),
        Preset("stationary_scalar_conservation", "inflow pulse train, zero data, fixed interface",
               dict(_SCALAR, n=40, degree=2, courant=0.2, t_end=1.0, x_gamma=1e-4, alpha=None, error_points=3),
               run_stationary_conservation, degrees=(1, 2, 3), refinements=(40, 80, 160, 320), choices=_FACE),
        Preset("acoustic", "pressure pulse through a water-like material interface",
               dict(_SCALAR, lambda1=0.5, lambda2=-0.5, n=200, degree=2, courant=None, t_end=0.039, x_gamma=96.3,
                    error_points=3, normalize=True),
               run_acoustic, degrees=(1, 2, 3), refinements=(200, 400, 800, 1600), choices=_FACE),
        Preset("moving_accuracy", "space-time slabs, interface moving with constant speed",
               dict(_SCALAR, lambda1=0.0, lambda2=-1.0, n=20, degree=1, courant=None, t_end=0.1, x0=1e-4,
                    speed=0.111, formulation="ibp", error_points=3),
               run_moving_accuracy, degrees=(1, 2), refinements={1: (20, 40, 80, 160, 320), 2: (20, 40, 80, 160)},
               choices=dict(_FACE, formulation=("ibp", "direct"))),
        Preset("moving_conservation", "space-time slabs, oscillating interface, inflow pulse train",
               dict(_SCALAR, lambda1=0.0, lambda2=-1.0, n=400, degree=1, courant=1.0 / 6.0, t_end=1.0, x0=-0.499,
                    formulation="ibp", error_points=3),
               run_moving_conservation, degrees=(1, 2), refinements=(100, 200, 400),
               choices=dict(_FACE, formulation=("ibp", "direct"))),
        Preset("coupled", "explicit steps away from the interface, implicit slabs near it",
               dict(_SCALAR, lambda1=0.0, lambda2=-1.0, n=20, degree=1, courant=1.0 / 6.0, t_end=0.1, x0=1e-4,
                    speed=0.111, pad=0, error_points=3),
               run_coupled, degrees=(1,), choices=_FACE),
        Preset("twod_convergence", "plane waves through the line x + y = 0.5",
               dict(_SCALAR, n=20, degree=1, courant=0.5, t_end=1.0, c0=0.5, record_every=1),
               run_twod_convergence, degrees=(1, 2), refinements=(20, 40, 80, 160)),
        Preset("twod_conservation", "disc of mass crossing the line x + y = 0.25",
               dict(_SCALAR, lambda1=0.0, lambda2=-1.0, n=100, degree=1, courant=0.5, t_end=0.5, c0=0.25,
                    record_every=1),
               run_twod_conservation, degrees=(1, 2), refinements=(25, 50, 100)),
        Preset("alpha_sweep", "errors and mass conditioning against the relative cut size",
               dict(_SCALAR, n=400, degree=1, courant=0.2, t_end=1.0, samples=400, errors=True, error_points=3),
               run_alpha_sweep, degrees=(1, 2, 3), refinements=(400,), choices=_FACE),
        Preset("region_map", "stable (lambda1, lambda2) pairs and their eta intervals",
               dict(a1=2.0, a2=1.0, lambda1_min=-1.0, lambda1_max=1.0, lambda2_min=-2.0, lambda2_max=1.0,
                    samples=41, conservative=False, degree=1),
               run_region_map, degrees=(1,), refinements=(41,)),
    )
}


def get_preset(name: str) -> Preset:
    if name not in PRESETS:
        raise HarnessError(f"unknown preset '{name}'; choose from {', '.join(PRESETS)}")
    return PRESETS[name]


def run_experiment(spec: ExperimentSpec) -> RunReport:
    preset = get_preset(spec.preset)
    p = preset.resolve(spec.overrides)
    report = preset.runner(p)
    report.preset = preset.name
    report.params = p
    return report


# ------------------------------------------------------------ parallelism

def thread_count() -> int:
    raw = os.environ.get("CUTDG_THREADS", "1")
    try:
        return max(1, int(raw))
    except ValueError:
        raise HarnessError(f"CUTDG_THREADS must be an integer, got {raw!r}") from None


def parallel_map(fn: Callable, items: Sequence) -> list:
    """Order-preserving map over at most CUTDG_THREADS worker processes."""
    k = min(thread_count(), len(items))
    if k <= 1:
        return [fn(it) for it in items]
    with ProcessPoolExecutor(max_workers=k) as pool:
        return list(pool.map(fn, items))


def run_convergence(preset: str, ns: Optional[Sequence[int]] = None,
                    overrides: Optional[dict] = None) -> tuple[list[ConvergenceRow], list[RunReport]]:
    pr = get_preset(preset)
    overrides = dict(overrides or {})
    degree = pr.resolve(overrides)["degree"]
    ns = pr.refinement_list(degree) if ns is None else tuple(ns)
    if len(ns) < 3:
        raise HarnessError("a convergence study needs at least three refinements")
    specs = [ExperimentSpec(preset, dict(overrides, n=n)) for n in ns]
    reports = parallel_map(run_experiment, specs)
    if any(r.norms is None for r in reports):
        raise HarnessError(f"preset {preset} reports no error norms")
    rows = convergence_table(ns, [r.h for r in reports], [r.norms for r in reports])
    return rows, reports
