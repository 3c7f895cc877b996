"""Interface stability matrices, PSD checks, feasible energy weights eta.

Conventions: with interface coefficient blocks (rows = test side, columns =
trial side)

    C = [[G1 - l1 H1,  l1 H2], [l2 H1, -G2 - l2 H2]],   H_i = A_i - x' I,

and side weights W = (W1, W2), the interface contribution to the weighted
energy rate is  -U^T S U  with

    S = sym(diag(W1, W2) C) - 1/2 diag(W1 H1, -W2 H2).

For scalar fluxes with W = (1, eta) this is the closed form in
`build_s_scalar`; for acoustics with W = (B1, B2) the closed form in
`build_s_acoustic`.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np
import scipy.sparse as sp

from .assembly1d import DgOperators, DofLayout, physical_mass


class AnalysisError(ValueError):
    pass


@dataclass(frozen=True)
class StabilityMatrix:
    entries: np.ndarray
    params: tuple

    @property
    def size(self) -> int:
        return self.entries.shape[0]


def build_s_scalar(a1: float, a2: float, lambda1: float, lambda2: float, eta: float,
                   x_gamma_prime: float = 0.0) -> StabilityMatrix:
    t1, t2 = a1 - x_gamma_prime, a2 - x_gamma_prime
    if t1 == 0 or t2 == 0 or t1 * t2 < 0:
        raise AnalysisError("ill-posed interface: a_i - x' must be nonzero with equal signs")
    s11 = (0.5 - lambda1) * t1
    s22 = -(lambda2 + 0.5) * eta * t2
    s12 = 0.5 * (t2 * lambda1 + t1 * eta * lambda2)
    return StabilityMatrix(np.array([[s11, s12], [s12, s22]]), (t1, t2, lambda1, lambda2, eta))


def build_s_acoustic(system, lambda1: float, lambda2: float) -> StabilityMatrix:
    A1, A2, B1, B2 = system.A_1, system.A_2, system.B_1, system.B_2
    off = 0.5 * (lambda1 + lambda2) * (A1.T @ B2)
    S = np.block([[(0.5 - lambda1) * (A1.T @ B1), off], [off.T, -(0.5 + lambda2) * (A2.T @ B2)]])
    return StabilityMatrix(S, (A1, A2, lambda1, lambda2, None))


def interface_blocks(A1, A2, lambda1: float, lambda2: float, x_gamma_prime: float = 0.0,
                     formulation: str = "ibp") -> np.ndarray:
    """The coefficient matrix C (2m x 2m) of the interface coupling."""
    A1 = np.atleast_2d(np.asarray(A1, dtype=float))
    A2 = np.atleast_2d(np.asarray(A2, dtype=float))
    I = np.eye(A1.shape[0])
    H1, H2 = A1 - x_gamma_prime * I, A2 - x_gamma_prime * I
    G1, G2 = (H1, H2) if formulation == "ibp" else (A1, A2)
    return np.block([[G1 - lambda1 * H1, lambda1 * H2], [lambda2 * H1, -G2 - lambda2 * H2]])


def energy_form(C: np.ndarray, A1, A2, W1, W2, x_gamma_prime: float = 0.0) -> np.ndarray:
    A1 = np.atleast_2d(np.asarray(A1, dtype=float))
    A2 = np.atleast_2d(np.asarray(A2, dtype=float))
    W1 = np.atleast_2d(np.asarray(W1, dtype=float))
    W2 = np.atleast_2d(np.asarray(W2, dtype=float))
    m = A1.shape[0]
    I = np.eye(m)
    Z = np.zeros((m, m))
    W = np.block([[W1, Z], [Z, W2]])
    WC = W @ C
    D = np.block([[W1 @ (A1 - x_gamma_prime * I), Z], [Z, -W2 @ (A2 - x_gamma_prime * I)]])
    return 0.5 * (WC + WC.T) - 0.5 * D


def blocks_from_operator(operators: DgOperators) -> np.ndarray:
    """Read C back from an assembled interface operator.

    The constant basis mode equals 1 everywhere, so the (mode 0, mode 0)
    entries of the interface blocks are the entries of C.
    """
    layout = operators.layout
    mesh = layout.mesh
    j1, j2 = mesh.locate(operators.x_gamma)
    m, nb = layout.ncomp, layout.nb
    K = operators.parts.interface.tocsr()
    idx = [layout.base(1, [j1])[0] + c * nb for c in range(m)] + [layout.base(2, [j2])[0] + c * nb for c in range(m)]
    return K[np.ix_(idx, idx)].toarray()


def assembled_s(operators: DgOperators, W1, W2) -> np.ndarray:
    C = blocks_from_operator(operators)
    return energy_form(C, operators.flux.A1, operators.flux.A2, W1, W2)


def psd_check(S, tol: float = 1e-12) -> tuple[bool, float]:
    M = S.entries if isinstance(S, StabilityMatrix) else np.asarray(S, dtype=float)
    if M.shape[0] != M.shape[1]:
        raise AnalysisError("matrix must be square")
    scale = max(np.abs(M).max(), np.finfo(float).tiny)
    if np.abs(M - M.T).max() > 1e-14 * scale:
        raise AnalysisError("asymmetric input")
    if M.shape == (2, 2):
        a, b, d = M[0, 0], M[0, 1], M[1, 1]
        lam_min = 0.5 * (a + d) - math.hypot(0.5 * (a - d), b)
    else:
        lam_min = float(np.linalg.eigvalsh(0.5 * (M + M.T)).min())
    norm = float(np.linalg.norm(M, 2)) if M.size else 0.0
    return bool(lam_min >= -tol * norm), float(lam_min)


@dataclass(frozen=True)
class EtaInterval:
    lo: float
    hi: float  # may be inf

    @property
    def empty(self) -> bool:
        return not self.lo <= self.hi

    @property
    def midpoint(self) -> float:
        return self.lo + 1.0 if math.isinf(self.hi) else 0.5 * (self.lo + self.hi)

    def __contains__(self, eta: float) -> bool:
        return self.lo <= eta <= self.hi


EMPTY = EtaInterval(math.inf, -math.inf)


def feasible_eta(a1: float, a2: float, lambda1: float, lambda2: float, conservative: bool = True,
                 x_gamma_prime: float = 0.0) -> EtaInterval:
    """Closed-form set of eta > 0 for which S is positive semi-definite.

    With z = beta eta, beta = (a1 - x')/(a2 - x'), PSD is
        (1/2 - l1) a1 >= 0,  -(l2 + 1/2) a2 >= 0,
        l2^2 z^2 + 2 b z + l1^2 <= 0,   b = l2 + 1/2 - l1 l2 - l1.
    In the conservative case l2 = l1 - 1 the roots are (l2+1)^2/l2^2 and 1.
    """
    t1, t2 = a1 - x_gamma_prime, a2 - x_gamma_prime
    if t1 == 0 or t2 == 0 or t1 * t2 < 0:
        raise AnalysisError("ill-posed interface")
    if conservative and abs(lambda2 - lambda1 + 1.0) > 1e-14:
        return EMPTY
    if (0.5 - lambda1) * t1 < 0 or -(lambda2 + 0.5) * t2 < 0:
        return EMPTY
    beta = t1 / t2
    b = lambda2 + 0.5 - lambda1 * lambda2 - lambda1
    qa = lambda2 * lambda2
    if qa == 0.0:
        # 2 b z + l1^2 <= 0
        if b < 0:
            return EtaInterval(max(-lambda1**2 / (2 * b), 0.0) / beta, math.inf)
        return EMPTY if lambda1 != 0.0 else EtaInterval(0.0, math.inf)
    disc = b * b - lambda1**2 * lambda2**2
    if disc < 0:
        return EMPTY
    r = math.sqrt(disc)
    # numerically stable roots of qa z^2 + 2 b z + l1^2
    if b <= 0:
        z_hi = (-b + r) / qa
        z_lo = lambda1**2 / (qa * z_hi) if z_hi > 0 else 0.0
    else:
        z_lo, z_hi = (-b - r) / qa, (-b + r) / qa
    if z_hi <= 0:
        return EMPTY
    return EtaInterval(max(z_lo, 0.0) / beta, z_hi / beta)


def eta_scan(a1: float, a2: float, lambda1: float, lambda2: float, etas: np.ndarray,
             x_gamma_prime: float = 0.0, tol: float = 1e-12) -> np.ndarray:
    """Brute-force PSD mask over a grid of eta values."""
    return np.array([psd_check(build_s_scalar(a1, a2, lambda1, lambda2, e, x_gamma_prime), tol)[0] for e in etas])


def log_eta_grid(n: int = 10_000, lo: float = 1e-6, hi: float = 1e6) -> np.ndarray:
    return np.logspace(math.log10(lo), math.log10(hi), n)


def region_map(a1: float, a2: float, lambda1_values, lambda2_values, conservative: bool = False) -> list[tuple]:
    """Rows (lambda1, lambda2, feasible, eta_lo, eta_hi)."""
    rows = []
    for l1 in lambda1_values:
        for l2 in lambda2_values:
            iv = feasible_eta(a1, a2, float(l1), float(l2), conservative)
            if iv.empty:
                rows.append((float(l1), float(l2), 0, math.nan, math.nan))
            else:
                rows.append((float(l1), float(l2), 1, iv.lo, iv.hi))
    return rows


# ------------------------------------------------------------ weighted energy

def side_weights(layout: DofLayout, eta: float) -> np.ndarray:
    w = np.ones(layout.size)
    w[layout.side_slice(2)] = eta
    return w


def weighted_energy(u: np.ndarray, operators: DgOperators, eta: float) -> float:
    """1/2 u^T W mass u with W = 1 on side 1 and eta on side 2."""
    if eta <= 0:
        raise AnalysisError("eta must be positive")
    w = side_weights(operators.layout, eta)
    return 0.5 * float((w * u) @ (operators.mass @ u))


def weighted_energy_layout(layout: DofLayout, x_gamma: float, u: np.ndarray, eta: float) -> float:
    """Physical weighted energy of a slab trace (no ghost-penalty part)."""
    if eta <= 0:
        raise AnalysisError("eta must be positive")
    M = physical_mass(layout, x_gamma)
    w = side_weights(layout, eta)
    return 0.5 * float((w * u) @ (M @ u))


def dissipation_form(operators: DgOperators, eta: float) -> sp.csr_matrix:
    """Q with dE_eta/dt = -u^T Q u for zero boundary data."""
    W = sp.diags(side_weights(operators.layout, eta))
    WK = W @ operators.spatial
    return (0.5 * (WK + WK.T)).tocsr()
