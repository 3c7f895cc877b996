"""Mass-matrix solves exploiting the diagonal structure of uncut elements."""
from __future__ import annotations

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla


class MassSolver:
    """Solve M x = b where most rows of M are purely diagonal.

    Rows with off-diagonal entries (cut and ghost-penalised elements) form a
    coupled block, factored once with a sparse LU.
    """

    def __init__(self, mass: sp.spmatrix):
        M = sp.csr_matrix(mass)
        M.eliminate_zeros()
        n = M.shape[0]
        self.n = n
        diag = M.diagonal()
        offdiag = np.diff(M.indptr) - (diag != 0)
        coupled = offdiag > 0
        if np.any(diag[~coupled] <= 0):
            raise np.linalg.LinAlgError("singular mass: non-positive diagonal entry")
        self.coupled = np.flatnonzero(coupled)
        self.free = np.flatnonzero(~coupled)
        self.inv_diag = 1.0 / diag[self.free]
        self._lu = None
        self._dense_inv = None
        if len(self.coupled):
            block = M[self.coupled][:, self.coupled].tocsc()
            if len(self.coupled) <= 400:
                self._dense_inv = np.linalg.inv(block.toarray())
            else:
                self._lu = spla.splu(block)

    def solve(self, b: np.ndarray) -> np.ndarray:
        x = np.empty_like(b, dtype=float)
        x[self.free] = b[self.free] * (self.inv_diag if b.ndim == 1 else self.inv_diag[:, None])
        if len(self.coupled):
            bc = b[self.coupled]
            x[self.coupled] = self._dense_inv @ bc if self._dense_inv is not None else self._lu.solve(bc)
        return x

    def inverse_matrix(self) -> sp.csr_matrix:
        """Sparse explicit inverse (only sensible when the coupled block is small)."""
        if self._dense_inv is None and len(self.coupled):
            raise ValueError("coupled block too large for an explicit inverse")
        inv = sp.coo_matrix((self.inv_diag, (self.free, self.free)), shape=(self.n, self.n))
        if len(self.coupled):
            r = np.repeat(self.coupled, len(self.coupled))
            c = np.tile(self.coupled, len(self.coupled))
            inv = inv + sp.coo_matrix((self._dense_inv.ravel(), (r, c)), shape=(self.n, self.n))
        return inv.tocsr()
