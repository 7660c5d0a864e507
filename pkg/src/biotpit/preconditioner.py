"""Block preconditioners built on the approximate Schur complement.

    P1 = [[A, 0], [B^T, -S]]     (lower triangular)
    P2 = [[A, 0], [0,   -S]]     (block diagonal)

with ``S = (tau + beta/K) C``. Both inner inverses come from one-time sparse
factorizations. Dirichlet rows are handled the same way as in the
eliminated step matrix, i.e. the preconditioner is the identity there.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from .assembly import BiotSystem, eliminate
from .sparse import SparseMatrix, SpdFactorization, factor_spd


class Kind(enum.Enum):
    LowerTriangular = "p1"
    BlockDiagonal = "p2"

    @classmethod
    def parse(cls, value) -> "Kind":
        if isinstance(value, cls):
            return value
        return cls(str(value).lower())


@dataclass(frozen=True)
class SchurApprox:
    S: SparseMatrix
    factor: SpdFactorization


def schur_approx(system: BiotSystem) -> SchurApprox:
    S = eliminate(system.schur_scale * system.C, system.dirichlet_p.dofs)
    return SchurApprox(S, factor_spd(S))


@dataclass(frozen=True)
class BlockPreconditioner:
    kind: Kind
    A_factor: SpdFactorization
    Bt: SparseMatrix | None
    schur: SchurApprox
    n_u: int
    pressure_dirichlet: np.ndarray

    @property
    def n_dof(self) -> int:
        return self.n_u + self.schur.S.shape[0]

    def apply(self, r: np.ndarray) -> np.ndarray:
        r = np.asarray(r, dtype=float)
        if r.shape != (self.n_dof,):
            raise ValueError(f"residual has shape {r.shape}, expected ({self.n_dof},)")
        r_u, r_p = r[: self.n_u], r[self.n_u :]
        z_u = self.A_factor.solve(r_u)
        if self.kind is Kind.LowerTriangular:
            z_p = self.schur.factor.solve(self.Bt @ z_u - r_p)
        else:
            z_p = -self.schur.factor.solve(r_p)
        # eliminated rows: the step matrix is the identity there
        z_p[self.pressure_dirichlet] = r_p[self.pressure_dirichlet]
        return np.concatenate([z_u, z_p])

    __call__ = apply


def build(kind, system: BiotSystem) -> BlockPreconditioner:
    kind = Kind.parse(kind)
    A_factor = factor_spd(system.A_bc)
    schur = schur_approx(system)
    Bt = system.Bt_bc if kind is Kind.LowerTriangular else None
    return BlockPreconditioner(kind, A_factor, Bt, schur, system.dofs.n_u, system.dirichlet_p.dofs)


def dense_matrix(precond: BlockPreconditioner, system: BiotSystem) -> np.ndarray:
    """Explicit dense form of the preconditioner, for small test problems."""
    A = system.A_bc.toarray()
    S = precond.schur.S.toarray()
    P22 = -S
    D = precond.pressure_dirichlet
    P22[D, D] = 1.0
    n_u = precond.n_u
    P = np.zeros((precond.n_dof, precond.n_dof))
    P[:n_u, :n_u] = A
    P[n_u:, n_u:] = P22
    if precond.kind is Kind.LowerTriangular:
        P[n_u:, :n_u] = system.Bt_bc.toarray()
    return P


class IdentityPreconditioner:
    def __call__(self, r):
        return np.array(r, dtype=float)

    apply = __call__
