"""Command-line driver.

    biotpit --case trig --nx 16 --tau 1/1024 --T 1 --engine pipeline --threads 4

Settings may also come from a flat ``key = value`` file given with
``--config``; keys are the long flag names (``-`` or ``_`` both accepted)
and command-line flags override file values.

Exit codes: 0 success, 1 configuration or engine error, 2 some step ended
above the residual tolerance.
"""

from __future__ import annotations

import argparse
import logging
import os
import sys
import time
from dataclasses import dataclass, fields, replace
from pathlib import Path
from typing import Optional

import numpy as np

from . import benchmarks as bm
from .assembly import build_system
from .krylov import KrylovConfig
from .mesh import build_uniform_mesh
from .reporting import RunRecord, emit_csv, summary
from .timeloop import (
    ConvergenceError,
    EfficiencyModel,
    SweepSchedule,
    TimeGrid,
    measure_efficiency_inputs,
    parse_number,
    prepare,
    run_inverted_serial,
    run_pipeline_parallel,
    run_calibrated,
    run_sequential,
    theoretical_efficiency,
)

log = logging.getLogger("biotpit")

OUTPUT_ENV = "BIOTPIT_OUTPUT_DIR"
ENGINES = ("sequential", "inverted", "pipeline")

# (tau, T) used when the command line leaves them out
CASE_DEFAULTS = {
    "trig": ("1/1024", "1"),
    "barry-mercer": ("1/256", "1"),
    "mandel": ("1/10", "10"),
    "zero": ("1/16", "1"),
}


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class RunConfig:
    case: str = "trig"
    nx: int = 16
    ny: Optional[int] = None
    tau: Optional[str] = None
    T: Optional[str] = None
    n_time: Optional[int] = None
    engine: str = "sequential"
    precond: str = "p1"
    threads: int = 1
    n_iter: Optional[int] = None
    pilot_steps: Optional[int] = None
    visit_mode: str = "tolerance"
    tol: Optional[float] = None
    restart: int = 30
    max_iters: int = 2000
    stabilization: bool = True
    load_rule: str = "gauss"
    output: Optional[str] = None
    repeat: int = 1
    stage_timeout: Optional[float] = None
    efficiency: bool = False

    def __post_init__(self):
        def bad(key, msg):
            raise ConfigError(f"{key}: {msg}")

        if self.case not in bm.CASES:
            bad("case", f"unknown case {self.case!r}; expected one of {sorted(bm.CASES)}")
        if self.engine not in ENGINES:
            bad("engine", f"unknown engine {self.engine!r}; expected one of {ENGINES}")
        if self.precond not in ("p1", "p2"):
            bad("precond", f"expected p1 or p2, got {self.precond!r}")
        if self.visit_mode not in ("tolerance", "fixed"):
            bad("visit_mode", f"expected tolerance or fixed, got {self.visit_mode!r}")
        if self.load_rule not in ("gauss", "vertex"):
            bad("load_rule", f"expected gauss or vertex, got {self.load_rule!r}")
        for key in ("nx", "threads", "restart", "max_iters", "repeat"):
            if getattr(self, key) < 1:
                bad(key, f"must be >= 1, got {getattr(self, key)}")
        for key in ("ny", "n_iter", "pilot_steps", "n_time"):
            v = getattr(self, key)
            if v is not None and v < 1:
                bad(key, f"must be >= 1, got {v}")
        if self.tol is not None and not self.tol > 0:
            bad("tol", f"must be positive, got {self.tol}")
        if self.n_iter is not None and self.pilot_steps is not None:
            bad("n_iter", "give either n_iter or pilot_steps, not both")
        if self.engine == "sequential" and self.threads != 1:
            bad("threads", "the sequential engine runs on one thread")
        if self.engine == "sequential" and (self.n_iter is not None or self.pilot_steps is not None):
            bad("n_iter", "n_iter/pilot_steps only apply to the inverted and pipeline engines")
        try:
            self.grid()
        except (ValueError, ZeroDivisionError) as exc:
            bad("tau", str(exc))

    def grid(self) -> TimeGrid:
        tau_d, T_d = CASE_DEFAULTS[self.case]
        tau = self.tau if self.tau is not None else tau_d
        if self.n_time is not None:
            grid = TimeGrid(float(parse_number(tau)), self.n_time)
            if self.T is not None and abs(grid.T - float(parse_number(self.T))) > 1e-9 * max(1.0, grid.T):
                raise ValueError(f"n_time={self.n_time} and tau={tau} give T={grid.T}, not {self.T}")
            return grid
        return TimeGrid.from_final_time(self.T if self.T is not None else T_d, tau)


# --------------------------------------------------------------------------
# parsing


def _bool(text) -> bool:
    if isinstance(text, bool):
        return text
    t = str(text).strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _optional(conv):
    return lambda s: None if str(s).strip().lower() in ("", "none", "auto") else conv(s)


_CONVERT = {
    "case": str,
    "nx": int,
    "ny": _optional(int),
    "tau": str,
    "T": str,
    "n_time": _optional(int),
    "engine": str,
    "precond": lambda s: str(s).lower(),
    "threads": int,
    "n_iter": _optional(int),
    "pilot_steps": _optional(int),
    "visit_mode": str,
    "tol": _optional(float),
    "restart": int,
    "max_iters": int,
    "stabilization": _bool,
    "load_rule": str,
    "output": _optional(str),
    "repeat": int,
    "stage_timeout": _optional(float),
    "efficiency": _bool,
}
assert set(_CONVERT) == {f.name for f in fields(RunConfig)}


def read_config_file(path) -> dict:
    """Flat ``key = value`` file; ``#`` starts a comment."""
    out = {}
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{lineno}: expected key = value, got {raw!r}")
        key, value = (s.strip() for s in line.split("=", 1))
        key = key.replace("-", "_")
        if key not in _CONVERT:
            raise ConfigError(f"{key}: unknown key ({path}:{lineno})")
        out[key] = value
    return out


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise ConfigError(message)


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="biotpit", description="Parallel-in-time solver for quasi-static Biot poroelasticity.")
    p.add_argument("--config", help="key = value file; flags override its values")
    p.add_argument("--case", choices=sorted(bm.CASES))
    p.add_argument("--nx", type=int)
    p.add_argument("--ny", type=int)
    p.add_argument("--tau", help='time step, decimal or fraction ("1/1024")')
    p.add_argument("--T", help="final time")
    p.add_argument("--n-time", dest="n_time", type=int)
    p.add_argument("--engine", choices=ENGINES)
    p.add_argument("--precond", type=str.lower, choices=("p1", "p2"))
    p.add_argument("--threads", type=int)
    p.add_argument("--n-iter", dest="n_iter", type=int, help="iterations per visit; default: calibrate")
    p.add_argument("--pilot-steps", dest="pilot_steps", type=int, help="pilot length for calibrating n_iter")
    p.add_argument("--visit-mode", dest="visit_mode", choices=("tolerance", "fixed"))
    p.add_argument("--tol", type=float)
    p.add_argument("--restart", type=int)
    p.add_argument("--max-iters", dest="max_iters", type=int)
    p.add_argument("--stabilization", type=_bool, metavar="on|off")
    p.add_argument("--no-stabilization", dest="stabilization", action="store_false")
    p.add_argument("--load-rule", dest="load_rule", choices=("gauss", "vertex"))
    p.add_argument("--output", help=f"CSV path (default: ${OUTPUT_ENV} or the working directory)")
    p.add_argument("--repeat", type=int)
    p.add_argument("--stage-timeout", dest="stage_timeout", type=float)
    p.add_argument("--efficiency", action="store_true", default=None, help="measure T_b, t_iter and report E1, E2")
    p.add_argument("-v", "--verbose", action="store_true")
    p.set_defaults(stabilization=None)
    return p


def parse_config(argv=None) -> RunConfig:
    args = build_parser().parse_args(argv)
    values = read_config_file(args.config) if args.config else {}
    for key in _CONVERT:
        v = getattr(args, key, None)
        if v is not None:
            values[key] = v
    try:
        kwargs = {k: _CONVERT[k](v) for k, v in values.items()}
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    return RunConfig(**kwargs)


# --------------------------------------------------------------------------
# running


def _case(cfg: RunConfig):
    case = bm.CASES[cfg.case]()
    case = case.with_stabilization(cfg.stabilization)
    if cfg.load_rule != case.load_rule:
        case = replace(case, load_rule=cfg.load_rule)
    return case


def default_output(cfg: RunConfig) -> Path:
    if cfg.output:
        return Path(cfg.output)
    base = Path(os.environ.get(OUTPUT_ENV, "."))
    return base / f"{cfg.case}_nx{cfg.nx}_{cfg.engine}_t{cfg.threads}.csv"


def probe_history(result, system, point) -> np.ndarray:
    node = system.mesh.node_at(*point)
    return result.solutions[:, system.dofs.p[node]]


def run(cfg: RunConfig):
    """Run one configuration; returns ``(exit_code, records)``."""
    t_start = time.perf_counter()
    case = _case(cfg)
    grid = cfg.grid()
    tol = cfg.tol if cfg.tol is not None else case.default_tol
    mesh = build_uniform_mesh(cfg.nx, cfg.ny or cfg.nx, case.domain)
    system = build_system(mesh, case, grid.tau)
    problem = prepare(system, case, grid, cfg.precond)
    kcfg = KrylovConfig(restart=cfg.restart, tol=tol, max_iters=cfg.max_iters, mode="tolerance")
    setup = time.perf_counter() - t_start

    schedule = SweepSchedule(cfg.n_iter, cfg.threads) if cfg.n_iter is not None else None
    auto = cfg.engine != "sequential" and schedule is None
    pilot = cfg.pilot_steps or min(grid.n_time, 16)
    visit_cfg = kcfg if cfg.visit_mode == "tolerance" else kcfg.fixed(1)

    E = (None, None, None)
    records = []
    worst = 0.0
    for _ in range(cfg.repeat):
        t0 = time.perf_counter()
        if cfg.engine == "sequential":
            try:
                res = run_sequential(problem, kcfg)
            except ConvergenceError as exc:
                print(f"error: {exc}", file=sys.stderr)
                return 2, records
        elif auto:
            res, attempts = run_calibrated(problem, visit_cfg, cfg.threads, pilot, cfg.engine, stage_timeout=cfg.stage_timeout)
            schedule = res.schedule
            log.info("calibration attempts (n_iter, max residual): %s", attempts)
        elif cfg.engine == "inverted":
            res = run_inverted_serial(problem, schedule, visit_cfg)
        else:
            res = run_pipeline_parallel(problem, schedule, visit_cfg, cfg.stage_timeout)
        if cfg.efficiency and schedule is not None and E[0] is None:
            T_b, t_iter = measure_efficiency_inputs(problem, kcfg)
            model = EfficiencyModel(T_b, t_iter, schedule.N_iter, schedule.n_iter, schedule.n_threads, grid.n_time)
            E = theoretical_efficiency(model)
        total = setup + time.perf_counter() - t0

        l2p = l2u = None
        if case.exact is not None:
            X = res.final
            ex = case.exact
            d = system.dofs
            l2p = bm.l2_error(mesh, X[d.p], lambda x, y, t: ex(x, y, t)[2], grid.T)
            eu = [bm.l2_error(mesh, X[idx], lambda x, y, t, k=k: ex(x, y, t)[k], grid.T) for k, idx in ((0, d.ux), (1, d.uy))]
            l2u = float(np.hypot(*eu))
        mc = ""
        if cfg.case == "mandel":
            hist = probe_history(res, system, case.extras["probe"])
            mc = "present" if bm.mandel_cryer_indicator(grid.times(), hist).present else "absent"
        worst = max(worst, res.max_residual())
        records.append(
            RunRecord(
                case=cfg.case,
                h=mesh.h,
                tau=grid.tau,
                n_time=grid.n_time,
                engine=cfg.engine,
                precond=cfg.precond,
                n_threads=cfg.threads,
                n_iter=schedule.n_iter if schedule else 0,
                N_iter=schedule.N_iter if schedule else 0,
                wall_seconds=max(res.wall_seconds, 1e-9),
                total_seconds=total,
                max_residual=res.max_residual(),
                mean_iterations=float(np.mean(res.iterations)),
                l2_error_p=l2p,
                l2_error_u=l2u,
                E1=E[0],
                E2=E[1],
                E=E[2],
                mandel_cryer=mc,
            )
        )
        print(summary(records[-1]))
    path = emit_csv(records, default_output(cfg))
    print(f"wrote {path}")
    if worst > tol:
        bad = res.unconverged_steps(tol)
        print(f"error: {len(bad)} step(s) above tolerance {tol:g}, first at step {bad[0]}", file=sys.stderr)
        return 2, records
    return 0, records


def main(argv=None) -> int:
    try:
        argv = sys.argv[1:] if argv is None else argv
        logging.basicConfig(level=logging.INFO if ("-v" in argv or "--verbose" in argv) else logging.WARNING)
        cfg = parse_config(argv)
        code, _ = run(cfg)
        return code
    except ConfigError as exc:
        print(f"biotpit: config error: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:  # engine failures
        print(f"biotpit: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
