"""Small cached fixtures shared by hypothesis tests (which cannot use
function-scoped pytest fixtures)."""

from functools import lru_cache

from biotpit.assembly import build_system
from biotpit.benchmarks import trig_case
from biotpit.mesh import build_uniform_mesh
from biotpit.preconditioner import build


@lru_cache(maxsize=None)
def trig_system(nx: int = 4, tau: float = 1 / 16, kind: str = "p1"):
    s = build_system(build_uniform_mesh(nx, nx), trig_case(), tau)
    return s, build(kind, s)
