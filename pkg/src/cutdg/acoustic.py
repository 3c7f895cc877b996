"""1D acoustics with a material interface, in conservative variables.

Unknowns U = (m, q) = (rho u, p / (rho c^2)); flux F_i(U) = A_i U = (p, u),
so continuity of pressure and velocity across the interface is conservation
of both components.  Energy weights B_i = diag(1/rho_i, rho_i c_i^2) give
U^T B U = m^2/rho + rho c^2 q^2.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .assembly1d import DgOperators, FluxModel, ghost_penalty_matrix, physical_mass, select_faces


class AcousticError(ValueError):
    pass


@dataclass(frozen=True)
class AcousticMaterial:
    rho: float
    c: float

    def __post_init__(self):
        if not (self.rho > 0 and self.c > 0):
            raise AcousticError("density and sound speed must be positive")

    @property
    def impedance(self) -> float:
        return self.rho * self.c

    @property
    def A(self) -> np.ndarray:
        return np.array([[0.0, self.rho * self.c**2], [1.0 / self.rho, 0.0]])

    @property
    def B(self) -> np.ndarray:
        return np.diag([1.0 / self.rho, self.rho * self.c**2])


@dataclass(frozen=True)
class AcousticSystem:
    material_1: AcousticMaterial
    material_2: AcousticMaterial

    @property
    def A_1(self) -> np.ndarray:
        return self.material_1.A

    @property
    def A_2(self) -> np.ndarray:
        return self.material_2.A

    @property
    def B_1(self) -> np.ndarray:
        return self.material_1.B

    @property
    def B_2(self) -> np.ndarray:
        return self.material_2.B

    @property
    def weights(self) -> tuple[np.ndarray, np.ndarray]:
        return self.B_1, self.B_2

    @cached_property
    def flux(self) -> FluxModel:
        return FluxModel.system(self.A_1, self.A_2)

    def material(self, side: int) -> AcousticMaterial:
        return self.material_1 if side == 1 else self.material_2

    def check_identities(self, tol: float = 1e-14) -> None:
        """B_i A_i symmetric and (A_2^T B_1)^T = A_1^T B_2."""
        for B, A in ((self.B_1, self.A_1), (self.B_2, self.A_2)):
            BA = B @ A
            if np.any(BA != BA.T):
                raise AcousticError("B_i A_i is not symmetric")
        lhs = (self.A_2.T @ self.B_1).T
        rhs = self.A_1.T @ self.B_2
        if np.abs(lhs - rhs).max() > tol * max(1.0, np.abs(rhs).max()):
            raise AcousticError("interface identity violated")


def to_conservative(material: AcousticMaterial, u, p):
    u = np.asarray(u, dtype=float)
    p = np.asarray(p, dtype=float)
    return material.rho * u, p / (material.rho * material.c**2)


def to_primitive(material: AcousticMaterial, m, q):
    m = np.asarray(m, dtype=float)
    q = np.asarray(q, dtype=float)
    return m / material.rho, q * material.rho * material.c**2


def energy_matrix(system: AcousticSystem, operators: DgOperators):
    """B-weighted mass: physical part plus gamma_M J_1 with the same weights."""
    topos = operators.topologies
    layout = operators.layout
    faces = select_faces(layout.mesh, (topos[0].stabilized_faces, topos[1].stabilized_faces), operators.x_gamma,
                         operators.penalties.face_rule)
    J1 = ghost_penalty_matrix(layout, faces, 1, operators.penalties.omegas(layout.degree), weights=system.weights)
    return (physical_mass(layout, operators.x_gamma, weights=system.weights)
            + operators.penalties.gamma_M * J1).tocsr()


def acoustic_energy(system: AcousticSystem, operators: DgOperators, u: np.ndarray, matrix=None) -> float:
    if operators.layout.ncomp != 2:
        raise AcousticError("expected a two-component dof vector")
    E = energy_matrix(system, operators) if matrix is None else matrix
    return 0.5 * float(u @ (E @ u))


# ---------------------------------------------------------------- pulse data

@dataclass(frozen=True)
class Pulse:
    """Compactly supported four-term sine wavelet f0 on (0, 1/f_c)."""
    f_c: float = 50.0
    t0: float = 0.051

    @property
    def omega(self) -> float:
        return 2.0 * np.pi * self.f_c

    def __call__(self, xi):
        xi = np.asarray(xi, dtype=float)
        w = self.omega
        val = (np.sin(w * xi) - 21.0 / 32.0 * np.sin(2 * w * xi) + 63.0 / 768.0 * np.sin(4 * w * xi)
               - 1.0 / 512.0 * np.sin(8 * w * xi))
        return np.where((xi > 0) & (xi < 1.0 / self.f_c), val, 0.0)


@dataclass(frozen=True)
class InterfaceWave:
    """Right-going pulse hitting the interface: exact incident, reflected and
    transmitted waves for primitive (u, p)."""
    system: AcousticSystem
    x_gamma: float
    pulse: Pulse = Pulse()

    @property
    def reflection(self) -> float:
        z1 = self.system.material_1.impedance
        z2 = self.system.material_2.impedance
        return (z2 - z1) / (z1 + z2)

    @property
    def transmission(self) -> float:
        z1 = self.system.material_1.impedance
        z2 = self.system.material_2.impedance
        return 2.0 * z2 / (z1 + z2)

    def primitive(self, side: int, x, t: float):
        m1, m2 = self.system.material_1, self.system.material_2
        x = np.asarray(x, dtype=float)
        f, t0, xg = self.pulse, self.pulse.t0, self.x_gamma
        if side == 1:
            p_in = -m1.rho * f(t0 + t - x / m1.c)
            p_re = -m1.rho * self.reflection * f(t0 + t - (2 * xg - x) / m1.c)
            return (p_in - p_re) / m1.impedance, p_in + p_re
        p = -m1.rho * self.transmission * f(t0 + t - xg / m1.c - (x - xg) / m2.c)
        return p / m2.impedance, p

    def conservative(self, side: int, x, t: float) -> np.ndarray:
        u, p = self.primitive(side, x, t)
        return np.stack(to_conservative(self.system.material(side), u, p))

    def initial(self, side: int):
        return lambda x: self.conservative(side, x, 0.0)
