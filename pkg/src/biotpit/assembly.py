"""Stabilized P1-P1 assembly of the discrete two-field Biot system.

Unknown ordering is ``[U_x, U_y, P]``: all x-displacement dofs, then all
y-displacement dofs, then pressures. A rigid-plate condition ties the
y-displacements of one side to a single master dof, so ``n_u`` may be
smaller than ``2 * n_nodes``.

Sign conventions follow the block system

    [ A    B               ] [U^m]   [ 0    0        ] [U^{m-1}]   [ F^m     ]
    [ B^T  -(tau + b/K) C  ] [P^m] = [ B^T  -(b/K) C ] [P^{m-1}] + [ -tau G^m]

with ``B`` the matrix of ``-alpha (p, div v)``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Union

import numpy as np
import scipy.sparse as sp

from .mesh import SIDES, StructuredTriMesh
from .sparse import SparseMatrix, as_csr

FIELDS = ("ux", "uy", "p")


# --------------------------------------------------------------------------
# material parameters


def lame_from_engineering(E: float, nu: float) -> tuple[float, float]:
    if not E > 0:
        raise ValueError(f"Young's modulus must be positive, got {E}")
    if not 0 <= nu < 0.5:
        raise ValueError(f"Poisson ratio must lie in [0, 0.5), got {nu}")
    lam = E * nu / ((1 + nu) * (1 - 2 * nu))
    mu = E / (2 * (1 + nu))
    return lam, mu


def stabilization_beta(h: float, lam: float, mu: float) -> float:
    if not h > 0:
        raise ValueError(f"mesh size must be positive, got {h}")
    return h / (4 * (lam + 2 * mu))


@dataclass(frozen=True)
class MaterialParams:
    E: float
    nu: float
    alpha: float = 1.0
    K: float = 1.0

    def __post_init__(self):
        lame_from_engineering(self.E, self.nu)
        if not 0 < self.alpha <= 1:
            raise ValueError(f"alpha must lie in (0, 1], got {self.alpha}")
        if not self.K > 0:
            raise ValueError(f"K must be positive, got {self.K}")

    @property
    def lame(self) -> tuple[float, float]:
        return lame_from_engineering(self.E, self.nu)

    @property
    def lam(self) -> float:
        return self.lame[0]

    @property
    def mu(self) -> float:
        return self.lame[1]


# --------------------------------------------------------------------------
# boundary condition kinds

ValueFn = Union[float, Callable[[np.ndarray, np.ndarray, float], np.ndarray]]


@dataclass(frozen=True)
class Dirichlet:
    value: ValueFn = 0.0

    def __call__(self, x, y, t):
        if callable(self.value):
            return np.broadcast_to(np.asarray(self.value(x, y, t), dtype=float), np.shape(x))
        return np.full(np.shape(x), float(self.value))


@dataclass(frozen=True)
class Natural:
    """Homogeneous natural condition: zero traction component or zero flux."""


@dataclass(frozen=True)
class RigidPlate:
    """Tie one displacement component along a side to a single dof.

    ``resultant`` is the total force applied to the tied dof.
    """

    resultant: float = 0.0


Condition = Union[Dirichlet, Natural, RigidPlate]


def check_bc_spec(bc: dict) -> None:
    for fld in FIELDS:
        sides = bc.get(fld)
        if sides is None:
            raise ValueError(f"boundary spec misses field {fld!r}")
        missing = set(SIDES) - set(sides)
        if missing:
            raise ValueError(f"boundary spec for {fld!r} misses sides {sorted(missing)}")
        for side, cond in sides.items():
            if side not in SIDES:
                raise ValueError(f"unknown side {side!r}")
            if not isinstance(cond, (Dirichlet, Natural, RigidPlate)):
                raise TypeError(f"bad condition {cond!r} on {fld}/{side}")
            if isinstance(cond, RigidPlate) and fld == "p":
                raise ValueError("rigid plate applies to displacement components only")


# --------------------------------------------------------------------------
# degrees of freedom


@dataclass(frozen=True)
class DofMap:
    ux: np.ndarray
    uy: np.ndarray
    p: np.ndarray
    n_u: int
    n_p: int
    plate_dofs: dict = field(default_factory=dict)  # dof -> resultant

    @property
    def n_dof(self) -> int:
        return self.n_u + self.n_p

    def split(self, X):
        return X[: self.n_u], X[self.n_u :]

    def nodal(self, X):
        """Nodal ``(ux, uy, p)`` arrays of a global vector."""
        return X[self.ux], X[self.uy], X[self.p]


def build_dof_map(mesh: StructuredTriMesh, bc: dict) -> DofMap:
    n = mesh.n_nodes
    comps = {}
    plate_dofs: dict[int, float] = {}
    offset = 0
    for fld in ("ux", "uy"):
        master_of = np.arange(n)
        plates = [(s, c) for s, c in bc[fld].items() if isinstance(c, RigidPlate)]
        tied_groups = []
        for side, cond in plates:
            nodes = np.array([i for i, tags in mesh.boundary_tags.items() if side in tags])
            master_of[nodes] = master_of[nodes].min()
            tied_groups.append((nodes, cond))
        is_master = master_of == np.arange(n)
        numbering = np.cumsum(is_master) - 1 + offset
        dofs = numbering[master_of]
        for nodes, cond in tied_groups:
            d = int(dofs[nodes[0]])
            plate_dofs[d] = plate_dofs.get(d, 0.0) + cond.resultant
        comps[fld] = dofs
        offset += int(is_master.sum())
    n_u = offset
    return DofMap(comps["ux"], comps["uy"], n_u + np.arange(n), n_u, n, plate_dofs)


# --------------------------------------------------------------------------
# element geometry


def _p1_geometry(mesh: StructuredTriMesh):
    """Per-triangle areas ``(nt,)`` and basis gradients ``(nt, 3, 2)``."""
    p = mesh.nodes[mesh.triangles]
    area = mesh.triangle_areas()
    if np.any(area <= 0):
        k = int(np.flatnonzero(area <= 0)[0])
        raise ValueError(f"degenerate or clockwise triangle {k}: area {area[k]:.3e}")
    grads = np.empty((len(area), 3, 2))
    for a in range(3):
        b, c = (a + 1) % 3, (a + 2) % 3
        grads[:, a, 0] = p[:, b, 1] - p[:, c, 1]
        grads[:, a, 1] = p[:, c, 0] - p[:, b, 0]
    grads /= (2 * area)[:, None, None]
    return area, grads


def _scatter(rows, cols, vals, shape) -> SparseMatrix:
    return as_csr(sp.coo_matrix((vals.ravel(), (rows.ravel(), cols.ravel())), shape=shape))


def _default_dofs(mesh):
    n = mesh.n_nodes
    return DofMap(np.arange(n), n + np.arange(n), 2 * n + np.arange(n), 2 * n, n)


def elasticity_local(area: np.ndarray, grads: np.ndarray, lam: float, mu: float) -> np.ndarray:
    """Local matrices ``(nt, 6, 6)`` in the order ``(ux0, ux1, ux2, uy0, uy1, uy2)``.

    ``2 mu (eps(u), eps(v)) + lam (div u, div v)`` with constant gradients.
    """
    nt = len(area)
    gg = np.einsum("tak,tbk->tab", grads, grads)
    K = np.zeros((nt, 6, 6))
    for i in range(2):
        for j in range(2):
            blk = lam * np.einsum("ta,tb->tab", grads[:, :, i], grads[:, :, j])
            blk += mu * np.einsum("ta,tb->tab", grads[:, :, j], grads[:, :, i])
            if i == j:
                blk += mu * gg
            K[:, 3 * i : 3 * i + 3, 3 * j : 3 * j + 3] = blk
    return K * area[:, None, None]


def assemble_elasticity(mesh: StructuredTriMesh, params: MaterialParams, dofs: DofMap | None = None) -> SparseMatrix:
    dofs = dofs or _default_dofs(mesh)
    area, grads = _p1_geometry(mesh)
    K = elasticity_local(area, grads, *params.lame)
    tri = mesh.triangles
    ld = np.concatenate([dofs.ux[tri], dofs.uy[tri]], axis=1)  # (nt, 6)
    rows = np.repeat(ld[:, :, None], 6, axis=2)
    cols = np.repeat(ld[:, None, :], 6, axis=1)
    return _scatter(rows, cols, K, (dofs.n_u, dofs.n_u))


def assemble_coupling(mesh: StructuredTriMesh, params: MaterialParams, dofs: DofMap | None = None) -> SparseMatrix:
    """``B[(a, i), c] = -alpha * int phi_c d_i phi_a``."""
    dofs = dofs or _default_dofs(mesh)
    area, grads = _p1_geometry(mesh)
    tri = mesh.triangles
    # (nt, 6 displacement, 3 pressure)
    dphi = np.concatenate([grads[:, :, 0], grads[:, :, 1]], axis=1)
    vals = -params.alpha * (dphi * (area / 3)[:, None])[:, :, None] * np.ones((1, 1, 3))
    ud = np.concatenate([dofs.ux[tri], dofs.uy[tri]], axis=1)
    rows = np.repeat(ud[:, :, None], 3, axis=2)
    cols = np.repeat(tri[:, None, :], 6, axis=1)
    return _scatter(rows, cols, vals, (dofs.n_u, dofs.n_p))


def assemble_diffusion(mesh: StructuredTriMesh, params: MaterialParams) -> SparseMatrix:
    area, grads = _p1_geometry(mesh)
    vals = params.K * np.einsum("tak,tbk->tab", grads, grads) * area[:, None, None]
    tri = mesh.triangles
    rows = np.repeat(tri[:, :, None], 3, axis=2)
    cols = np.repeat(tri[:, None, :], 3, axis=1)
    n = mesh.n_nodes
    return _scatter(rows, cols, vals, (n, n))


def lumped_weights(mesh: StructuredTriMesh) -> np.ndarray:
    """Vertex-rule quadrature weights: a third of each adjacent triangle area."""
    area = mesh.triangle_areas()
    w = np.zeros(mesh.n_nodes)
    np.add.at(w, mesh.triangles.ravel(), np.repeat(area / 3, 3))
    return w


LOAD_RULES = ("gauss", "vertex")


def triangle_rule(order: int = 5) -> tuple[np.ndarray, np.ndarray]:
    """Collapsed Gauss-Legendre rule on the reference triangle.

    Returns barycentric points ``(order**2, 3)`` and weights summing to 1;
    exact for polynomials up to degree ``2 order - 2``.
    """
    if order < 1:
        raise ValueError(f"order must be >= 1, got {order}")
    g, w = np.polynomial.legendre.leggauss(order)
    s, r = np.meshgrid((g + 1) / 2, (g + 1) / 2, indexing="ij")
    weights = np.outer(w, w) * (1 - s) / 2  # Duffy jacobian, reference area 1/2
    l1, l2 = s, r * (1 - s)
    bary = np.stack([1 - l1 - l2, l1, l2], axis=-1).reshape(-1, 3)
    return bary, weights.ravel()


@dataclass(frozen=True)
class LoadQuadrature:
    """Quadrature points of a mesh and the sparse map from point values to
    the load vector ``[int f phi_i]``."""

    rule: str
    x: np.ndarray = field(repr=False)
    y: np.ndarray = field(repr=False)
    project: SparseMatrix = field(repr=False)

    def __call__(self, fn):
        vals = fn(self.x, self.y)
        if isinstance(vals, tuple):
            return tuple(self.project @ np.broadcast_to(v, self.x.shape) for v in vals)
        return self.project @ np.broadcast_to(vals, self.x.shape)


def load_quadrature(mesh: StructuredTriMesh, rule: str = "gauss", order: int = 5) -> LoadQuadrature:
    if rule == "vertex":
        P = sp.diags(lumped_weights(mesh)).tocsr()
        return LoadQuadrature(rule, mesh.nodes[:, 0].copy(), mesh.nodes[:, 1].copy(), P)
    if rule != "gauss":
        raise ValueError(f"unknown load rule {rule!r}; expected one of {LOAD_RULES}")
    bary, weights = triangle_rule(order)
    tri = mesh.triangles
    area = mesh.triangle_areas()
    pts = np.einsum("qa,tak->tqk", bary, mesh.nodes[tri]).reshape(-1, 2)
    nt, nq = len(tri), len(weights)
    # entry (node tri[t, a], point (t, q)) = area_t * w_q * bary_qa
    vals = area[:, None, None] * (weights[:, None] * bary)[None]  # (t, q, a)
    rows = np.broadcast_to(tri[:, None, :], (nt, nq, 3))
    cols = np.broadcast_to(np.arange(nt * nq).reshape(nt, nq)[:, :, None], (nt, nq, 3))
    P = sp.csr_matrix((vals.ravel(), (rows.ravel(), cols.ravel())), shape=(mesh.n_nodes, nt * nq))
    return LoadQuadrature(rule, pts[:, 0].copy(), pts[:, 1].copy(), P)


def assemble_loads(
    mesh: StructuredTriMesh,
    case,
    t: float,
    tau: float,
    dofs: DofMap | None = None,
    rule: str | None = None,
    quad: LoadQuadrature | None = None,
) -> np.ndarray:
    """Right-hand block ``[F; -tau G]`` at time ``t`` (no Dirichlet treatment).

    ``rule`` is ``"gauss"`` (25 points per triangle) or ``"vertex"``
    (trapezoidal) and defaults to ``case.load_rule``. Pass a prebuilt
    ``quad`` to skip the geometry work when assembling many time levels.
    """
    dofs = dofs or build_dof_map(mesh, case.bc)
    if quad is None:
        quad = load_quadrature(mesh, rule or getattr(case, "load_rule", "gauss"))
    F = np.zeros(dofs.n_u)
    if case.body_force is not None:
        fx, fy = quad(lambda x, y: tuple(case.body_force(x, y, t)))
        np.add.at(F, dofs.ux, fx)
        np.add.at(F, dofs.uy, fy)
    for d, resultant in dofs.plate_dofs.items():
        F[d] += resultant
    G = np.zeros(dofs.n_p)
    if case.source is not None:
        G += quad(lambda x, y: case.source(x, y, t))
    for src in case.point_sources:
        if not mesh.contains(src.x, src.y):
            raise ValueError(f"point source at ({src.x}, {src.y}) lies outside {mesh.domain}")
        G[mesh.node_at(src.x, src.y)] += src.weight(t)
    return np.concatenate([F, -tau * G])


# --------------------------------------------------------------------------
# Dirichlet data


@dataclass(frozen=True)
class DirichletData:
    dofs: np.ndarray
    _x: np.ndarray = field(repr=False)
    _y: np.ndarray = field(repr=False)
    _conds: tuple = field(repr=False)  # (condition, index array into dofs)

    def values(self, t: float) -> np.ndarray:
        out = np.empty(len(self.dofs))
        for cond, idx in self._conds:
            out[idx] = cond(self._x[idx], self._y[idx], t)
        return out


def collect_dirichlet(mesh: StructuredTriMesh, bc: dict, dofs: DofMap) -> tuple[DirichletData, DirichletData]:
    """Constrained displacement and pressure dofs with their value functions."""
    # pressure entries are indexed within the pressure block
    node_dof = {"ux": dofs.ux, "uy": dofs.uy, "p": dofs.p - dofs.n_u}
    plate = {fld: {s for s, c in bc[fld].items() if isinstance(c, RigidPlate)} for fld in FIELDS}
    out = []
    for group in (("ux", "uy"), ("p",)):
        seen: dict[int, tuple] = {}
        for fld in group:
            for side in SIDES:
                cond = bc[fld][side]
                if not isinstance(cond, Dirichlet):
                    continue
                for node in (i for i, tags in mesh.boundary_tags.items() if side in tags):
                    if plate[fld] & mesh.boundary_tags[node]:
                        raise ValueError(f"node {node} is both rigid-plate and Dirichlet in {fld}")
                    d = int(node_dof[fld][node])
                    x, y = mesh.nodes[node]
                    if d in seen:
                        other = seen[d][0]
                        for t in (0.0, 1.0):
                            a = other(np.array([x]), np.array([y]), t)[0]
                            b = cond(np.array([x]), np.array([y]), t)[0]
                            if abs(a - b) > 1e-12 * max(1.0, abs(a)):
                                raise ValueError(f"conflicting Dirichlet values for {fld} at node {node}: {a} vs {b}")
                        continue
                    seen[d] = (cond, x, y)
        order = sorted(seen)
        xs = np.array([seen[d][1] for d in order])
        ys = np.array([seen[d][2] for d in order])
        conds = {}
        for k, d in enumerate(order):
            conds.setdefault(id(seen[d][0]), (seen[d][0], []))[1].append(k)
        out.append(
            DirichletData(
                np.array(order, dtype=np.int64),
                xs,
                ys,
                tuple((c, np.array(idx, dtype=np.int64)) for c, idx in conds.values()),
            )
        )
    return out[0], out[1]


def eliminate(M: SparseMatrix, rows: np.ndarray, cols: np.ndarray | None = None, diag: float = 1.0) -> SparseMatrix:
    """Zero the given rows and columns and put ``diag`` on their diagonal."""
    cols = rows if cols is None else cols
    keep_r = np.ones(M.shape[0])
    keep_r[rows] = 0.0
    keep_c = np.ones(M.shape[1])
    keep_c[cols] = 0.0
    out = sp.diags(keep_r) @ M @ sp.diags(keep_c)
    if diag and M.shape[0] == M.shape[1]:
        d = np.zeros(M.shape[0])
        d[rows] = diag
        out = out + sp.diags(d)
    return as_csr(out)


# --------------------------------------------------------------------------
# the assembled system


@dataclass(frozen=True)
class BiotSystem:
    mesh: StructuredTriMesh
    params: MaterialParams
    dofs: DofMap
    A: SparseMatrix
    B: SparseMatrix
    C: SparseMatrix
    beta_stab: float
    tau: float
    dirichlet_u: DirichletData
    dirichlet_p: DirichletData
    step_matrix: SparseMatrix = field(repr=False)
    history_matrix: SparseMatrix = field(repr=False)
    # Dirichlet-eliminated operators used by the solvers
    step_matrix_bc: SparseMatrix = field(repr=False)
    history_matrix_bc: SparseMatrix = field(repr=False)
    A_bc: SparseMatrix = field(repr=False)
    Bt_bc: SparseMatrix = field(repr=False)
    C_bc: SparseMatrix = field(repr=False)
    _dirichlet_cols: SparseMatrix = field(repr=False)

    @property
    def n_dof(self) -> int:
        return self.dofs.n_dof

    @property
    def schur_scale(self) -> float:
        return self.tau + self.beta_stab / self.params.K

    @property
    def dirichlet_dofs(self) -> np.ndarray:
        return np.concatenate([self.dirichlet_u.dofs, self.dofs.n_u + self.dirichlet_p.dofs])

    def dirichlet_values(self, t: float) -> np.ndarray:
        return np.concatenate([self.dirichlet_u.values(t), self.dirichlet_p.values(t)])


def build_step_operators(A, B, C, tau: float, beta: float, K: float):
    """``(step, history)`` = ``([[A, B], [B^T, -(tau + beta/K) C]], [[0, 0], [B^T, -(beta/K) C]])``."""
    n_u, n_p = B.shape
    if A.shape != (n_u, n_u) or C.shape != (n_p, n_p):
        raise ValueError(f"inconsistent block shapes A{A.shape} B{B.shape} C{C.shape}")
    Bt = B.T.tocsr()
    step = sp.bmat([[A, B], [Bt, -(tau + beta / K) * C]])
    hist = sp.bmat([[sp.csr_matrix((n_u, n_u)), sp.csr_matrix((n_u, n_p))], [Bt, -(beta / K) * C]])
    return as_csr(step), as_csr(hist)


def build_system(mesh: StructuredTriMesh, case, tau: float, stabilized: bool | None = None) -> BiotSystem:
    if not tau > 0:
        raise ValueError(f"time step must be positive, got {tau}")
    check_bc_spec(case.bc)
    params = case.params
    stabilized = case.stabilized if stabilized is None else stabilized
    dofs = build_dof_map(mesh, case.bc)
    A = assemble_elasticity(mesh, params, dofs)
    B = assemble_coupling(mesh, params, dofs)
    C = assemble_diffusion(mesh, params)
    beta = stabilization_beta(mesh.h, *params.lame) if stabilized else 0.0
    step, hist = build_step_operators(A, B, C, tau, beta, params.K)

    du, dp = collect_dirichlet(mesh, case.bc, dofs)
    D = np.concatenate([du.dofs, dofs.n_u + dp.dofs])
    step_bc = eliminate(step, D)
    hist_bc = eliminate(hist, D, cols=np.array([], dtype=np.int64), diag=0.0)
    A_bc = eliminate(A, du.dofs)
    Bt_bc = eliminate(B.T.tocsr(), dp.dofs, cols=du.dofs, diag=0.0)
    C_bc = eliminate(C, dp.dofs)
    keep = np.ones(step.shape[0])
    keep[D] = 0.0
    cols = as_csr(sp.diags(keep) @ step[:, D])
    return BiotSystem(
        mesh, params, dofs, A, B, C, beta, tau, du, dp, step, hist, step_bc, hist_bc, A_bc, Bt_bc, C_bc, cols
    )


def apply_dirichlet(system: BiotSystem, operator_or_rhs, t: float = 0.0):
    """Symmetric elimination of the Dirichlet dofs.

    A square sparse operator comes back with constrained rows and columns
    zeroed and a unit diagonal. A right-hand side gets the prescribed values
    at constrained entries and the column-elimination correction elsewhere.
    """
    D = system.dirichlet_dofs
    if sp.issparse(operator_or_rhs):
        return eliminate(operator_or_rhs, D)
    rhs = np.array(operator_or_rhs, dtype=float)
    if rhs.shape != (system.n_dof,):
        raise ValueError(f"rhs has shape {rhs.shape}, expected ({system.n_dof},)")
    g = system.dirichlet_values(t)
    rhs -= system._dirichlet_cols @ g
    rhs[D] = g
    return rhs


def nodal_interpolant(system: BiotSystem, fn: Callable, t: float | None = None) -> np.ndarray:
    """Global vector from nodal values of ``fn(x, y[, t]) -> (ux, uy, p)``."""
    x, y = system.mesh.nodes[:, 0], system.mesh.nodes[:, 1]
    ux, uy, p = fn(x, y) if t is None else fn(x, y, t)
    X = np.zeros(system.n_dof)
    d = system.dofs
    X[d.ux] = np.broadcast_to(ux, x.shape)
    X[d.uy] = np.broadcast_to(uy, x.shape)
    X[d.p] = np.broadcast_to(p, x.shape)
    return X
