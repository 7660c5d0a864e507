"""Sparse matrix helpers: CSR storage, SPD factorization and a CG fallback.

Matrices are ``scipy.sparse.csr_matrix`` throughout. The factorization is
SuperLU run in symmetric mode with no numerical pivoting, which for an SPD
matrix is an LDL^T factorization; the diagonal of U then holds the pivots
and a non-positive one means the matrix is not SPD.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import splu

SparseMatrix = sp.csr_matrix


class NotSPDError(np.linalg.LinAlgError):
    def __init__(self, index: int, pivot: float):
        super().__init__(f"non-positive pivot {pivot:.3e} at row {index}; matrix is not SPD")
        self.index = index
        self.pivot = pivot


class CGBreakdown(np.linalg.LinAlgError):
    pass


def as_csr(M) -> SparseMatrix:
    """Canonical CSR: sorted indices, duplicates summed, explicit zeros kept out."""
    M = sp.csr_matrix(M, dtype=float)
    M.sum_duplicates()
    M.eliminate_zeros()
    M.sort_indices()
    return M


def spmv(M: SparseMatrix, x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.ndim != 1 or M.shape[1] != x.shape[0]:
        raise ValueError(f"dimension mismatch: matrix {M.shape} times vector {x.shape}")
    return M @ x


def is_symmetric(M: SparseMatrix, rtol: float = 1e-12) -> bool:
    diff = abs(M - M.T)
    scale = abs(M).max() if M.nnz else 0.0
    return diff.nnz == 0 or diff.max() <= rtol * max(scale, np.finfo(float).tiny)


@dataclass(frozen=True)
class SpdFactorization:
    permutation: np.ndarray
    _lu: object

    @property
    def shape(self) -> tuple[int, int]:
        return self._lu.shape

    def solve(self, r: np.ndarray) -> np.ndarray:
        r = np.asarray(r, dtype=float)
        if r.shape[0] != self.shape[0]:
            raise ValueError(f"dimension mismatch: factor {self.shape} with rhs {r.shape}")
        return self._lu.solve(r)


def factor_spd(M: SparseMatrix) -> SpdFactorization:
    M = sp.csc_matrix(M, dtype=float)
    n, m = M.shape
    if n != m:
        raise ValueError(f"matrix must be square, got {M.shape}")
    if not is_symmetric(M):
        raise ValueError("matrix is not symmetric")
    try:
        lu = splu(
            M,
            permc_spec="MMD_AT_PLUS_A",
            diag_pivot_thresh=0.0,
            options={"SymmetricMode": True},
        )
    except RuntimeError as exc:  # SuperLU: "Factor is exactly singular"
        zero_rows = np.flatnonzero(M.diagonal() <= 0)
        raise NotSPDError(int(zero_rows[0]) if zero_rows.size else -1, 0.0) from exc
    if not (np.array_equal(lu.perm_r, lu.perm_c)):
        # symmetric mode should keep the row and column orders identical
        raise NotSPDError(int(np.flatnonzero(lu.perm_r != lu.perm_c)[0]), float("nan"))
    pivots = lu.U.diagonal()
    # a pivot at round-off level means a singular (semi-definite) matrix
    floor = 64 * np.finfo(float).eps * max(abs(M.diagonal()).max(initial=0.0), np.finfo(float).tiny)
    bad = np.flatnonzero(~(pivots > floor))
    if bad.size:
        k = int(bad[0])
        # pivot k belongs to original row perm_c^-1(k)
        row = int(np.flatnonzero(lu.perm_c == k)[0])
        raise NotSPDError(row, float(pivots[k]))
    return SpdFactorization(np.asarray(lu.perm_c), lu)


def cg_solve(M: SparseMatrix, b, x0=None, tol: float = 1e-10, max_it: int = 10_000):
    """Unpreconditioned conjugate gradients.

    Returns ``(x, iterations, converged)``. A non-positive curvature
    ``p^T M p`` raises :class:`CGBreakdown`.
    """
    b = np.asarray(b, dtype=float)
    x = np.zeros_like(b) if x0 is None else np.array(x0, dtype=float)
    r = b - M @ x
    bnorm = np.linalg.norm(b)
    target = tol * bnorm
    rr = r @ r
    if np.sqrt(rr) <= target:
        return x, 0, True
    p = r.copy()
    for it in range(1, max_it + 1):
        Mp = M @ p
        curv = p @ Mp
        if curv <= 0:
            raise CGBreakdown(f"non-positive curvature {curv:.3e} at iteration {it}; matrix not SPD")
        a = rr / curv
        x += a * p
        r -= a * Mp
        rr_new = r @ r
        if np.sqrt(rr_new) <= target:
            return x, it, True
        p *= rr_new / rr
        p += r
        rr = rr_new
    return x, max_it, False


def export_matrix(M: SparseMatrix, path) -> None:
    """Plain-text triplet dump: ``rows cols nnz`` then zero-based ``i j value``."""
    C = sp.coo_matrix(M)
    with Path(path).open("w") as fh:
        fh.write(f"{C.shape[0]} {C.shape[1]} {C.nnz}\n")
        for i, j, v in zip(C.row, C.col, C.data):
            fh.write(f"{i} {j} {v:.17g}\n")


def read_matrix(path) -> SparseMatrix:
    with Path(path).open() as fh:
        rows, cols, nnz = (int(v) for v in fh.readline().split())
        data = np.loadtxt(fh, ndmin=2) if nnz else np.zeros((0, 3))
    return as_csr(sp.coo_matrix((data[:, 2], (data[:, 0].astype(int), data[:, 1].astype(int))), shape=(rows, cols)))
