"""Restarted GMRES with left preconditioning.

Two modes share one implementation:

* ``"tolerance"`` iterates until the *true* relative residual
  ``||b - A x|| / ||b||`` drops to ``tol`` or ``max_iters`` is spent;
* ``"fixed"`` performs exactly ``n_iter`` preconditioned iterations from the
  given warm start (fewer only on a happy breakdown).

The fixed mode is the per-visit solver of the inverted time-stepping engines.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

MODES = ("tolerance", "fixed")
METHODS = ("gmres", "richardson")


@dataclass(frozen=True)
class KrylovConfig:
    restart: int = 30
    tol: float = 1e-7
    max_iters: int = 2000
    mode: str = "tolerance"
    n_iter: int = 1
    method: str = "gmres"

    def __post_init__(self):
        if self.restart < 1:
            raise ValueError(f"restart must be >= 1, got {self.restart}")
        if not self.tol > 0:
            raise ValueError(f"tol must be positive, got {self.tol}")
        if self.n_iter < 1:
            raise ValueError(f"n_iter must be >= 1, got {self.n_iter}")
        if self.max_iters < 1:
            raise ValueError(f"max_iters must be >= 1, got {self.max_iters}")
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}, got {self.mode!r}")
        if self.method not in METHODS:
            raise ValueError(f"method must be one of {METHODS}, got {self.method!r}")

    def fixed(self, n_iter: int) -> "KrylovConfig":
        return replace(self, mode="fixed", n_iter=n_iter)

    def per_visit(self, n_iter: int) -> "KrylovConfig":
        """Budget for one visit of a time step in the inverted engines."""
        if self.mode == "fixed":
            return replace(self, n_iter=n_iter)
        return replace(self, max_iters=n_iter)

    @property
    def budget(self) -> int:
        return self.n_iter if self.mode == "fixed" else self.max_iters


@dataclass
class SolveReport:
    iterations_used: int
    final_relative_residual: float
    converged: bool
    residual_history: list = field(default_factory=list, repr=False)


def _relative(rnorm: float, bnorm: float) -> float:
    return rnorm / bnorm if bnorm > 0 else rnorm


def gmres(op, precond, b, x0=None, cfg: KrylovConfig = KrylovConfig()):
    """Left-preconditioned restarted GMRES; returns ``(x, SolveReport)``.

    ``precond`` is any callable ``r -> P^{-1} r``.
    """
    if cfg.method == "richardson":
        return richardson(op, precond, b, x0, cfg)
    b = np.asarray(b, dtype=float)
    n = b.shape[0]
    if op.shape != (n, n):
        raise ValueError(f"operator {op.shape} does not match rhs of length {n}")
    x = np.zeros(n) if x0 is None else np.array(x0, dtype=float)
    if x.shape != (n,):
        raise ValueError(f"initial guess has shape {x.shape}, expected ({n},)")

    fixed = cfg.mode == "fixed"
    bnorm = float(np.linalg.norm(b))
    r = b - op @ x
    rnorm = float(np.linalg.norm(r))
    history: list[float] = []
    if rnorm == 0.0 or (not fixed and _relative(rnorm, bnorm) <= cfg.tol):
        return x, SolveReport(0, _relative(rnorm, bnorm), True, history)

    budget = cfg.budget
    target = cfg.tol * bnorm if bnorm > 0 else cfg.tol
    its = 0
    m_max = min(cfg.restart, budget)
    V = np.empty((m_max + 1, n))
    H = np.zeros((m_max + 1, m_max))
    cs = np.zeros(m_max)
    sn = np.zeros(m_max)

    while its < budget:
        z = precond(r)
        beta = float(np.linalg.norm(z))
        if beta == 0.0:
            break
        # maps preconditioned residual estimates to true-residual estimates
        ratio = rnorm / beta
        V[0] = z / beta
        g = np.zeros(m_max + 1)
        g[0] = beta
        H[:] = 0.0
        m = min(m_max, budget - its)
        k = 0
        breakdown = False
        for j in range(m):
            w = precond(op @ V[j])
            wnorm0 = float(np.linalg.norm(w))
            # classical Gram-Schmidt, applied twice
            h = V[: j + 1] @ w
            w -= h @ V[: j + 1]
            h2 = V[: j + 1] @ w
            w -= h2 @ V[: j + 1]
            H[: j + 1, j] = h + h2
            hn = float(np.linalg.norm(w))
            H[j + 1, j] = hn
            for i in range(j):
                t = cs[i] * H[i, j] + sn[i] * H[i + 1, j]
                H[i + 1, j] = -sn[i] * H[i, j] + cs[i] * H[i + 1, j]
                H[i, j] = t
            denom = np.hypot(H[j, j], H[j + 1, j])
            cs[j], sn[j] = (1.0, 0.0) if denom == 0 else (H[j, j] / denom, H[j + 1, j] / denom)
            H[j, j] = cs[j] * H[j, j] + sn[j] * H[j + 1, j]
            H[j + 1, j] = 0.0
            g[j + 1] = -sn[j] * g[j]
            g[j] = cs[j] * g[j]
            its += 1
            k = j + 1
            history.append(abs(g[j + 1]))
            if hn <= 1e-14 * wnorm0:
                breakdown = True
                break
            V[j + 1] = w / hn
            if not fixed and abs(g[j + 1]) * ratio <= target:
                xc = x + _update(H, g, V, k)
                rc = b - op @ xc
                rcn = float(np.linalg.norm(rc))
                if rcn <= target:
                    x, r, rnorm = xc, rc, rcn
                    return x, SolveReport(its, _relative(rnorm, bnorm), True, history)
                ratio = rcn / max(abs(g[j + 1]), np.finfo(float).tiny)
        x = x + _update(H, g, V, k)
        r = b - op @ x
        rnorm = float(np.linalg.norm(r))
        if rnorm == 0.0 or (not fixed and rnorm <= target) or (breakdown and fixed):
            break

    rel = _relative(rnorm, bnorm)
    return x, SolveReport(its, rel, rnorm == 0.0 or rel <= cfg.tol, history)


def _update(H, g, V, k):
    if k == 0:
        return 0.0
    y = _back_substitute(H[:k, :k], g[:k])
    return y @ V[:k]


def _back_substitute(R, g):
    y = np.zeros_like(g)
    for i in range(len(g) - 1, -1, -1):
        y[i] = (g[i] - R[i, i + 1 :] @ y[i + 1 :]) / R[i, i]
    return y


def richardson(op, precond, b, x0=None, cfg: KrylovConfig = KrylovConfig(method="richardson")):
    """Preconditioned Richardson iteration ``x <- x + P^{-1}(b - A x)``."""
    b = np.asarray(b, dtype=float)
    x = np.zeros_like(b) if x0 is None else np.array(x0, dtype=float)
    bnorm = float(np.linalg.norm(b))
    r = b - op @ x
    rel = _relative(float(np.linalg.norm(r)), bnorm)
    history = []
    fixed = cfg.mode == "fixed"
    if not fixed and rel <= cfg.tol:
        return x, SolveReport(0, rel, True, history)
    its = 0
    while its < cfg.budget:
        x += precond(r)
        r = b - op @ x
        rel = _relative(float(np.linalg.norm(r)), bnorm)
        history.append(rel)
        its += 1
        if rel == 0.0 or (not fixed and rel <= cfg.tol):
            break
    return x, SolveReport(its, rel, rel <= cfg.tol, history)
