"""Benchmark problems and error metrics."""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Callable, Optional

import numpy as np

from .assembly import Dirichlet, MaterialParams, Natural, RigidPlate, check_bc_spec
from .mesh import SIDES, StructuredTriMesh

PI = np.pi


@dataclass(frozen=True)
class PointSource:
    x: float
    y: float
    weight: Callable[[float], float]


@dataclass(frozen=True)
class BenchmarkCase:
    name: str
    domain: tuple[float, float, float, float]
    params: MaterialParams
    bc: dict = field(repr=False)
    initial: Callable = field(repr=False)
    body_force: Optional[Callable] = field(default=None, repr=False)
    source: Optional[Callable] = field(default=None, repr=False)
    point_sources: tuple = ()
    exact: Optional[Callable] = field(default=None, repr=False)
    stabilized: bool = True
    default_tol: float = 1e-7
    load_rule: str = "gauss"
    extras: dict = field(default_factory=dict)

    def __post_init__(self):
        check_bc_spec(self.bc)

    def with_stabilization(self, on: bool) -> "BenchmarkCase":
        return replace(self, stabilized=on)


def _all_sides(cond):
    return {s: cond for s in SIDES}


# --------------------------------------------------------------------------
# trigonometric manufactured solution


def trig_case(E: float = 1.0, nu: float = 0.3, alpha: float = 1.0, K: float = 1.0) -> BenchmarkCase:
    """Unit-square problem with ``u1 = u2 = p = cos(t) cos(3 pi x) cos(3 pi y)``."""
    params = MaterialParams(E, nu, alpha, K)
    lam, mu = params.lame
    k = 3 * PI

    def exact(x, y, t):
        v = np.cos(t) * np.cos(k * x) * np.cos(k * y)
        return v, v, v

    def body_force(x, y, t):
        cx, sx, cy, sy = np.cos(k * x), np.sin(k * x), np.cos(k * y), np.sin(k * y)
        common = -k * (lam + 3 * mu) * cx * cy + k * (lam + mu) * sx * sy
        fx = -k * np.cos(t) * (alpha * sx * cy + common)
        fy = -k * np.cos(t) * (alpha * cx * sy + common)
        return fx, fy

    def source(x, y, t):
        # d/dt(alpha div u) - K lap p for the exact solution above
        cx, sx, cy, sy = np.cos(k * x), np.sin(k * x), np.cos(k * y), np.sin(k * y)
        return 3 * alpha * PI * np.sin(t) * (sx * cy + cx * sy) + 18 * K * PI**2 * np.cos(t) * cx * cy

    def boundary(x, y, t):
        return exact(x, y, t)[0]

    bc = {fld: _all_sides(Dirichlet(boundary)) for fld in ("ux", "uy", "p")}
    return BenchmarkCase(
        "trig",
        (0.0, 1.0, 0.0, 1.0),
        params,
        bc,
        initial=lambda x, y: exact(x, y, 0.0),
        body_force=body_force,
        source=source,
        exact=exact,
    )


def zero_case() -> BenchmarkCase:
    """No forcing, homogeneous Dirichlet data, zero initial state."""
    params = MaterialParams(1.0, 0.3, 1.0, 1.0)
    bc = {fld: _all_sides(Dirichlet(0.0)) for fld in ("ux", "uy", "p")}
    zero = lambda x, y, t=0.0: (0 * x, 0 * x, 0 * x)  # noqa: E731
    return BenchmarkCase("zero", (0.0, 1.0, 0.0, 1.0), params, bc, initial=zero, exact=zero)


# --------------------------------------------------------------------------
# Barry & Mercer point source


def barry_mercer_frequency(params: MaterialParams, a: float = 1.0, b: float = 1.0) -> float:
    lam, mu = params.lame
    return (lam + 2 * mu) * params.K / (a * b)


def barry_mercer_case(
    K: float = 1e-2,
    stabilized: bool = True,
    source_at: tuple[float, float] = (0.25, 0.25),
) -> BenchmarkCase:
    """Drained unit square with a sinusoidal point source.

    Every side has ``p = 0`` and zero tangential displacement; the normal
    displacement is left free.
    """
    params = MaterialParams(1e5, 0.1, 1.0, K)
    freq = barry_mercer_frequency(params)
    zero = Dirichlet(0.0)
    free = Natural()
    bc = {
        "p": _all_sides(zero),
        "ux": {"Left": free, "Right": free, "Bottom": zero, "Top": zero},
        "uy": {"Left": zero, "Right": zero, "Bottom": free, "Top": free},
    }
    src = PointSource(source_at[0], source_at[1], lambda t: -0.5 * np.sin(freq * t))
    return BenchmarkCase(
        "barry-mercer",
        (0.0, 1.0, 0.0, 1.0),
        params,
        bc,
        initial=lambda x, y: (0 * x, 0 * x, 0 * x),
        point_sources=(src,),
        stabilized=stabilized,
        default_tol=1e-10,
        extras={"beta_freq": freq},
    )


# --------------------------------------------------------------------------
# Mandel's problem on the quarter domain


def undrained_poisson(nu: float, skempton: float) -> float:
    return (3 * nu + skempton * (1 - 2 * nu)) / (3 - skempton * (1 - 2 * nu))


def mandel_case(
    E: float = 1e4,
    nu: float = 0.0,
    K: float = 1e-6,
    skempton: float = 1.0,
    force: float = 1.0,
    a: float = 1.0,
    b: float = 1.0,
) -> BenchmarkCase:
    """Quarter-domain Mandel problem loaded by a rigid plate on ``y = b``.

    Drained and traction free at ``x = a``; rollers and no flux on the
    symmetry lines ``x = 0`` and ``y = 0``; no flux at the plate, whose
    vertical displacement is a single dof carrying the resultant ``-force``.
    """
    params = MaterialParams(E, nu, 1.0, K)
    G = params.mu
    nu_u = undrained_poisson(nu, skempton)
    p0 = force * skempton * (1 + nu_u) / (3 * a)

    def initial(x, y):
        ux = force * nu_u * x / (2 * G * a)
        uy = -force * skempton * (1 - nu_u) * y / (2 * G * a)
        return ux, uy, np.full(np.shape(x), p0)

    free = Natural()
    zero = Dirichlet(0.0)
    bc = {
        "p": {"Left": free, "Right": zero, "Bottom": free, "Top": free},
        "ux": {"Left": zero, "Right": free, "Bottom": free, "Top": free},
        "uy": {"Left": free, "Right": free, "Bottom": zero, "Top": RigidPlate(-force)},
    }
    return BenchmarkCase(
        "mandel",
        (0.0, a, 0.0, b),
        params,
        bc,
        initial=initial,
        extras={"nu_u": nu_u, "p0": p0, "force": force, "probe": (0.25, 0.0)},
    )


CASES = {
    "trig": trig_case,
    "barry-mercer": barry_mercer_case,
    "mandel": mandel_case,
    "zero": zero_case,
}


# --------------------------------------------------------------------------
# metrics

# edge-midpoint rule: exact for quadratics
_MIDPOINT = (np.array([[0.5, 0.5, 0.0], [0.0, 0.5, 0.5], [0.5, 0.0, 0.5]]), np.full(3, 1 / 3))

# 6-point symmetric rule, exact for quartics
_a1, _b1, _w1 = 0.445948490915965, 0.108103018168070, 0.223381589678011
_a2, _b2, _w2 = 0.091576213509771, 0.816847572980459, 0.109951743655322
_DUNAVANT4 = (
    np.array(
        [
            [_a1, _a1, _b1],
            [_a1, _b1, _a1],
            [_b1, _a1, _a1],
            [_a2, _a2, _b2],
            [_a2, _b2, _a2],
            [_b2, _a2, _a2],
        ]
    ),
    np.array([_w1] * 3 + [_w2] * 3),
)

QUADRATURE = {"midpoint": _MIDPOINT, "degree4": _DUNAVANT4}


def l2_error(mesh: StructuredTriMesh, numeric: np.ndarray, exact: Callable, t: float | None = None, rule: str = "degree4") -> float:
    """L2 norm of ``numeric_h - exact`` with per-triangle quadrature.

    ``numeric`` holds nodal values, interpolated linearly; ``exact(x, y)`` or
    ``exact(x, y, t)`` is evaluated at the quadrature points.
    """
    bary, weights = QUADRATURE[rule]
    tri = mesh.triangles
    area = mesh.triangle_areas()
    verts = mesh.nodes[tri]  # (nt, 3, 2)
    pts = np.einsum("qa,tak->tqk", bary, verts)
    uh = np.einsum("qa,ta->tq", bary, np.asarray(numeric, dtype=float)[tri])
    ex = exact(pts[..., 0], pts[..., 1]) if t is None else exact(pts[..., 0], pts[..., 1], t)
    err2 = ((uh - ex) ** 2) @ weights
    return float(np.sqrt(np.sum(err2 * area)))


def convergence_order(errors) -> float:
    """Least-squares slope of ``log(error)`` against ``log(step)``."""
    steps, errs = (np.asarray(v, dtype=float) for v in zip(*errors))
    if len(steps) < 2:
        raise ValueError("need at least two refinement levels")
    if np.any(errs <= 0) or np.any(steps <= 0):
        raise ValueError("steps and errors must be positive")
    d = np.diff(steps)
    if not (np.all(d > 0) or np.all(d < 0)):
        raise ValueError("steps must be strictly monotone")
    slope, _ = np.polyfit(np.log(steps), np.log(errs), 1)
    return float(slope)


@dataclass(frozen=True)
class MandelCryer:
    peak_time: float
    peak_value: float
    initial_value: float
    present: bool


def mandel_cryer_indicator(times, values) -> MandelCryer:
    times = np.asarray(times, dtype=float)
    values = np.asarray(values, dtype=float)
    if values.size == 0:
        raise ValueError("empty pressure history")
    k = int(np.argmax(values))
    tail = values[k:]
    present = bool(values[k] > values[0] and np.all(np.diff(tail) <= 0))
    return MandelCryer(float(times[k]), float(values[k]), float(values[0]), present)
