"""Time-stepping engines.

* :func:`run_sequential` - backward Euler, each step solved to tolerance.
* :func:`run_inverted_serial` - sweeps outside, time steps inside; every
  visit of a step rebuilds its right-hand side from the neighbouring step of
  the *current* sweep and runs ``n_iter`` warm-started Krylov iterations.
* :func:`run_pipeline_parallel` - the same sweeps on worker threads, one sweep
  per thread, executed as a wavefront: at stage ``s`` worker ``t`` handles
  step ``s - t``. Stages are separated by barriers and the per-step
  solutions live in a circular buffer of ``n_threads`` slots.
"""

from __future__ import annotations

import logging
import math
import statistics
import threading
import time
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from . import preconditioner as pc
from .assembly import BiotSystem, apply_dirichlet, assemble_loads, load_quadrature, nodal_interpolant
from .krylov import KrylovConfig, SolveReport, gmres

log = logging.getLogger(__name__)


class ConvergenceError(RuntimeError):
    def __init__(self, step: int, report: SolveReport):
        super().__init__(
            f"step {step} did not converge: relative residual {report.final_relative_residual:.3e} "
            f"after {report.iterations_used} iterations"
        )
        self.step = step
        self.report = report


class PipelineStallError(RuntimeError):
    pass


def parse_number(v) -> Fraction:
    """Exact value of ``"1/1024"``, ``"0.0009765625"``, ``"1e-4/16"``, ``1e-4`` and the like."""
    if isinstance(v, Fraction):
        return v
    if not isinstance(v, str):
        return Fraction(str(v))
    num, _, den = v.strip().partition("/")
    out = Fraction(num.strip())
    return out / Fraction(den.strip()) if den else out


@dataclass(frozen=True)
class TimeGrid:
    tau: float
    n_time: int

    def __post_init__(self):
        if not self.tau > 0:
            raise ValueError(f"tau must be positive, got {self.tau}")
        if self.n_time < 1:
            raise ValueError(f"n_time must be >= 1, got {self.n_time}")

    @property
    def T(self) -> float:
        return self.tau * self.n_time

    @classmethod
    def from_final_time(cls, T, tau) -> "TimeGrid":
        """Grid with ``round(T / tau)`` steps; ``T`` and ``tau`` may be fraction strings."""
        T_, tau_ = parse_number(T), parse_number(tau)
        if tau_ <= 0:
            raise ValueError(f"tau must be positive, got {tau}")
        ratio = T_ / tau_
        n = round(ratio)
        if abs(ratio - n) > 1e-9 * max(1, ratio):
            raise ValueError(f"T={T} is not an integer multiple of tau={tau}")
        return cls(float(tau_), int(n))

    def times(self) -> np.ndarray:
        return self.tau * np.arange(self.n_time + 1)


@dataclass(frozen=True)
class SweepSchedule:
    n_iter: int
    n_sweeps: int

    def __post_init__(self):
        if self.n_iter < 1 or self.n_sweeps < 1:
            raise ValueError(f"n_iter and n_sweeps must be >= 1, got {self.n_iter}, {self.n_sweeps}")

    @property
    def n_threads(self) -> int:
        return self.n_sweeps

    @property
    def N_iter(self) -> int:
        return self.n_iter * self.n_sweeps

    @classmethod
    def from_total(cls, N_iter: int, n_threads: int) -> "SweepSchedule":
        if N_iter % n_threads:
            raise ValueError(f"N_iter={N_iter} is not a multiple of n_threads={n_threads}")
        return cls(N_iter // n_threads, n_threads)


@dataclass(frozen=True)
class TimeProblem:
    """Everything the engines share read-only: operators, preconditioner,
    the initial state and the per-step load vectors (Dirichlet data included)."""

    system: BiotSystem
    grid: TimeGrid
    precond: object
    X0: np.ndarray = field(repr=False)
    loads: np.ndarray = field(repr=False)  # row n holds f^n, row 0 unused

    @property
    def op(self):
        return self.system.step_matrix_bc

    @property
    def history(self):
        return self.system.history_matrix_bc

    def rhs(self, n: int, X_prev: np.ndarray) -> np.ndarray:
        return self.history @ X_prev + self.loads[n]


def prepare(system: BiotSystem, case, grid: TimeGrid, precond="p1") -> TimeProblem:
    if abs(system.tau - grid.tau) > 1e-15 * grid.tau:
        raise ValueError(f"system assembled for tau={system.tau}, grid has tau={grid.tau}")
    if not callable(precond):
        precond = pc.build(precond, system)
    X0 = nodal_interpolant(system, case.initial)
    loads = np.zeros((grid.n_time + 1, system.n_dof))
    quad = load_quadrature(system.mesh, case.load_rule)
    for n in range(1, grid.n_time + 1):
        t = n * grid.tau
        f = assemble_loads(system.mesh, case, t, grid.tau, system.dofs, quad=quad)
        loads[n] = apply_dirichlet(system, f, t)
    return TimeProblem(system, grid, precond, X0, loads)


@dataclass
class RunResult:
    engine: str
    solutions: np.ndarray = field(repr=False)  # (n_time + 1, n_dof), row 0 = initial state
    reports: list = field(repr=False)  # last-visit SolveReport per step (index n-1)
    iterations: np.ndarray = field(repr=False)  # total iterations spent per step
    final_residuals: np.ndarray = field(repr=False)  # verified true relative residual per step
    wall_seconds: float = 0.0
    schedule: SweepSchedule | None = None

    @property
    def final(self) -> np.ndarray:
        return self.solutions[-1]

    def max_residual(self) -> float:
        return float(self.final_residuals.max()) if len(self.final_residuals) else 0.0

    def unconverged_steps(self, tol: float) -> list[int]:
        return [n + 1 for n, r in enumerate(self.final_residuals) if r > tol]


def verify_residuals(problem: TimeProblem, X: np.ndarray) -> np.ndarray:
    """True relative residual of every step's stored solution."""
    out = np.empty(problem.grid.n_time)
    for n in range(1, problem.grid.n_time + 1):
        b = problem.rhs(n, X[n - 1])
        r = b - problem.op @ X[n]
        bn = np.linalg.norm(b)
        out[n - 1] = np.linalg.norm(r) / bn if bn > 0 else np.linalg.norm(r)
    return out


def run_sequential(problem: TimeProblem, cfg: KrylovConfig, steps: int | None = None, strict: bool = True) -> RunResult:
    """Backward Euler, every step solved from a zero guess.

    With ``strict`` a step that misses the tolerance raises
    :class:`ConvergenceError`; otherwise the run carries on and the step
    shows up in :meth:`RunResult.unconverged_steps`.
    """
    N = problem.grid.n_time if steps is None else min(steps, problem.grid.n_time)
    X = np.zeros((N + 1, problem.system.n_dof))
    X[0] = problem.X0
    reports, its, res = [], np.zeros(N, dtype=int), np.zeros(N)
    t0 = time.perf_counter()
    for n in range(1, N + 1):
        b = problem.rhs(n, X[n - 1])
        X[n], rep = gmres(problem.op, problem.precond, b, None, cfg)
        if strict and cfg.mode == "tolerance" and not rep.converged:
            raise ConvergenceError(n, rep)
        reports.append(rep)
        its[n - 1] = rep.iterations_used
        res[n - 1] = rep.final_relative_residual
    wall = time.perf_counter() - t0
    return RunResult("sequential", X, reports, its, res, wall)


def run_inverted_serial(problem: TimeProblem, schedule: SweepSchedule, cfg: KrylovConfig) -> RunResult:
    N = problem.grid.n_time
    X = np.zeros((N + 1, problem.system.n_dof))
    X[0] = problem.X0
    visit = cfg.per_visit(schedule.n_iter)
    reports: list = [None] * N
    its = np.zeros(N, dtype=int)
    t0 = time.perf_counter()
    for _ in range(schedule.n_sweeps):
        for n in range(1, N + 1):
            b = problem.rhs(n, X[n - 1])
            X[n], rep = gmres(problem.op, problem.precond, b, X[n], visit)
            reports[n - 1] = rep
            its[n - 1] += rep.iterations_used
    wall = time.perf_counter() - t0
    return RunResult("inverted", X, reports, its, verify_residuals(problem, X), wall, schedule)


@dataclass
class PipelineState:
    """Circular buffer of per-step solutions shared by the pipeline workers.

    ``slots[n % n_threads]`` holds the latest iterate of step ``n``; step 0
    (the initial state) is kept separately. Finalized solutions are copied to
    ``collected`` by the last worker when it writes them.
    """

    n_threads: int
    initial_state: np.ndarray
    collected: np.ndarray
    slots: list = field(default_factory=list)

    def __post_init__(self):
        if not self.slots:
            self.slots = [None] * self.n_threads

    def read(self, n: int):
        return self.initial_state if n == 0 else self.slots[n % self.n_threads]

    def write(self, n: int, x: np.ndarray, final: bool) -> None:
        self.slots[n % self.n_threads] = x
        if final:
            self.collected[n] = x


def run_pipeline_parallel(
    problem: TimeProblem,
    schedule: SweepSchedule,
    cfg: KrylovConfig,
    stage_timeout: float | None = None,
) -> RunResult:
    """Wavefront execution of the inverted method on ``schedule.n_threads`` threads.

    Each stage has a compute phase (read neighbours, solve into private
    storage) and a commit phase (write slots), separated by barriers, so
    every read sees the previous stage's values and every slot has one
    writer per stage. ``stage_timeout`` bounds how long a worker may wait at
    a barrier before the run is declared stalled.
    """
    N = problem.grid.n_time
    T = schedule.n_threads
    zeros = np.zeros(problem.system.n_dof)
    collected = np.zeros((N + 1, problem.system.n_dof))
    collected[0] = problem.X0
    state = PipelineState(T, problem.X0, collected)
    visit = cfg.per_visit(schedule.n_iter)
    reports: list = [None] * N
    its = np.zeros((T, N), dtype=int)
    barrier = threading.Barrier(T, timeout=stage_timeout)
    failures: list = []

    def worker(tid: int) -> None:
        stage = 0
        try:
            for stage in range(1, N + T):
                n = stage - tid
                active = 1 <= n <= N
                if active:
                    b = problem.rhs(n, state.read(n - 1))
                    guess = zeros if tid == 0 else state.read(n)
                    x, rep = gmres(problem.op, problem.precond, b, guess, visit)
                    its[tid, n - 1] = rep.iterations_used
                barrier.wait()
                if active:
                    last = tid == T - 1
                    state.write(n, x, final=last)
                    if last:
                        reports[n - 1] = rep
                barrier.wait()
        except threading.BrokenBarrierError:
            failures.append(PipelineStallError(f"worker {tid} stalled at stage {stage}"))
        except BaseException as exc:  # propagate to the caller
            failures.append(exc)
            barrier.abort()

    t0 = time.perf_counter()
    threads = [threading.Thread(target=worker, args=(tid,), name=f"pit-{tid}") for tid in range(T)]
    for th in threads:
        th.start()
    for th in threads:
        th.join()
    wall = time.perf_counter() - t0
    if failures:
        real = [f for f in failures if not isinstance(f, PipelineStallError)]
        raise (real or failures)[0]
    return RunResult("pipeline", collected, reports, its.sum(axis=0), verify_residuals(problem, collected), wall, schedule)


def round_budget(max_iterations: int, n_threads: int) -> tuple[int, int]:
    """``(N_iter, n_iter)``: the iteration count rounded up to a multiple of the thread count."""
    if n_threads < 1:
        raise ValueError(f"n_threads must be >= 1, got {n_threads}")
    N_iter = n_threads * max(1, math.ceil(max_iterations / n_threads))
    return N_iter, N_iter // n_threads


def calibrate_iteration_budget(problem: TimeProblem, cfg: KrylovConfig, pilot_steps: int, n_threads: int):
    """Pilot sequential run; returns ``(N_iter, n_iter, pilot_result)``."""
    if pilot_steps < 1:
        raise ValueError(f"pilot_steps must be >= 1, got {pilot_steps}")
    pilot = run_sequential(problem, cfg, steps=pilot_steps)
    N_iter, n_iter = round_budget(int(pilot.iterations.max()), n_threads)
    log.info("calibrated N_iter=%d (pilot max %d), n_iter=%d", N_iter, pilot.iterations.max(), n_iter)
    return N_iter, n_iter, pilot


def run_calibrated(
    problem: TimeProblem,
    cfg: KrylovConfig,
    n_threads: int,
    pilot_steps: int,
    engine: str = "pipeline",
    max_rounds: int = 8,
    stage_timeout: float | None = None,
):
    """Calibrate ``n_iter`` from a pilot run, then run and verify.

    The pilot budget is a lower bound: early sweeps iterate against a
    right-hand side that is still moving, so the inverted method can need a
    few more iterations than the sequential solve. While some step ends above
    ``cfg.tol`` the per-visit budget grows by one and the run is repeated,
    at most ``max_rounds`` times. Returns ``(result, attempts)`` with
    ``attempts`` the list of ``(n_iter, max_residual)`` tried.
    """
    if engine not in ("pipeline", "inverted"):
        raise ValueError(f"engine must be 'pipeline' or 'inverted', got {engine!r}")
    _, n_iter, _ = calibrate_iteration_budget(problem, cfg, pilot_steps, n_threads)
    attempts = []
    for _ in range(max_rounds):
        schedule = SweepSchedule(n_iter, n_threads)
        if engine == "pipeline":
            res = run_pipeline_parallel(problem, schedule, cfg, stage_timeout)
        else:
            res = run_inverted_serial(problem, schedule, cfg)
        attempts.append((n_iter, res.max_residual()))
        if res.max_residual() <= cfg.tol:
            break
        log.info("n_iter=%d leaves residual %.2e > %.1e; retrying", n_iter, res.max_residual(), cfg.tol)
        n_iter += 1
    return res, attempts


# --------------------------------------------------------------------------
# efficiency model


@dataclass(frozen=True)
class EfficiencyModel:
    T_b: float
    t_iter: float
    N_iter: int
    n_iter: int
    N_thread: int
    N_time: int

    def __post_init__(self):
        if min(self.T_b, self.t_iter) < 0 or min(self.N_iter, self.n_iter, self.N_thread, self.N_time) < 1:
            raise ValueError(f"invalid efficiency inputs {self}")


def theoretical_efficiency(model: EfficiencyModel) -> tuple[float, float, float]:
    """``(E1, E2, E1 * E2)``: wavefront fill/drain bound and right-hand-side overhead bound."""
    m = model
    E1 = m.N_time / (m.N_thread + m.N_time - 1)
    # (T_b / N_iter + t_iter) / ((N_thread / N_iter) T_b + t_iter), cleared of fractions
    E2 = (m.T_b + m.N_iter * m.t_iter) / (m.N_thread * m.T_b + m.N_iter * m.t_iter)
    return E1, E2, E1 * E2


def measure_efficiency_inputs(problem: TimeProblem, cfg: KrylovConfig, n_iter: int = 1, repeats: int = 20):
    """Median wall times ``(T_b, t_iter)`` of one right-hand side and one iteration."""
    X = problem.X0
    tb, ti = [], []
    visit = cfg.fixed(n_iter)
    b = problem.rhs(1, X)
    for _ in range(repeats):
        s = time.perf_counter()
        b = problem.rhs(1, X)
        tb.append(time.perf_counter() - s)
        s = time.perf_counter()
        gmres(problem.op, problem.precond, b, None, visit)
        ti.append((time.perf_counter() - s) / n_iter)
    return statistics.median(tb), statistics.median(ti)
