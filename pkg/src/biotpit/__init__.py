"""Parallel-in-time solver for quasi-static Biot poroelasticity.

Stabilized P1-P1 finite elements on uniform triangle meshes, block
preconditioned GMRES and three time-stepping engines: sequential backward
Euler, inverted (sweeps outside, time steps inside) and its wavefront
pipelined multi-threaded form.
"""

from .assembly import BiotSystem, MaterialParams, build_system
from .benchmarks import BenchmarkCase, barry_mercer_case, l2_error, mandel_case, trig_case
from .krylov import KrylovConfig, SolveReport, gmres
from .mesh import StructuredTriMesh, build_uniform_mesh
from .timeloop import (
    SweepSchedule,
    TimeGrid,
    prepare,
    run_inverted_serial,
    run_pipeline_parallel,
    run_sequential,
)

__version__ = "0.1.0"

__all__ = [
    "BenchmarkCase",
    "BiotSystem",
    "KrylovConfig",
    "MaterialParams",
    "SolveReport",
    "StructuredTriMesh",
    "SweepSchedule",
    "TimeGrid",
    "barry_mercer_case",
    "build_system",
    "build_uniform_mesh",
    "gmres",
    "l2_error",
    "mandel_case",
    "prepare",
    "run_inverted_serial",
    "run_pipeline_parallel",
    "run_sequential",
    "trig_case",
]
