"""Uniform right-triangle meshes of rectangles."""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

SIDES = ("Left", "Right", "Bottom", "Top")


@dataclass(frozen=True)
class StructuredTriMesh:
    """Structured triangulation of ``[ax, bx] x [ay, by]``.

    Nodes are numbered row-major (``index = j * (nx + 1) + i``) and every
    cell is cut along its bottom-left to top-right diagonal.
    """

    nx: int
    ny: int
    domain: tuple[float, float, float, float]
    nodes: np.ndarray = field(repr=False)
    triangles: np.ndarray = field(repr=False)
    boundary_tags: dict[int, frozenset[str]] = field(repr=False)

    @property
    def h(self) -> float:
        ax, bx, ay, by = self.domain
        return max((bx - ax) / self.nx, (by - ay) / self.ny)

    @property
    def n_nodes(self) -> int:
        return len(self.nodes)

    @property
    def area(self) -> float:
        ax, bx, ay, by = self.domain
        return (bx - ax) * (by - ay)

    def triangle_areas(self) -> np.ndarray:
        """Signed areas, positive for counter-clockwise triangles."""
        p = self.nodes[self.triangles]
        d1 = p[:, 1] - p[:, 0]
        d2 = p[:, 2] - p[:, 0]
        return 0.5 * (d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0])

    def node_at(self, x: float, y: float) -> int:
        """Index of the node nearest to ``(x, y)``; ties go to the lowest index."""
        d2 = (self.nodes[:, 0] - x) ** 2 + (self.nodes[:, 1] - y) ** 2
        return int(np.argmin(d2))

    def contains(self, x: float, y: float) -> bool:
        ax, bx, ay, by = self.domain
        tol = 1e-12 * max(bx - ax, by - ay)
        return ax - tol <= x <= bx + tol and ay - tol <= y <= by + tol


def _tag_nodes(nodes: np.ndarray, domain) -> dict[int, frozenset[str]]:
    ax, bx, ay, by = domain
    tx = 1e-12 * abs(bx - ax)
    ty = 1e-12 * abs(by - ay)
    x, y = nodes[:, 0], nodes[:, 1]
    masks = {
        "Left": np.abs(x - ax) <= tx,
        "Right": np.abs(x - bx) <= tx,
        "Bottom": np.abs(y - ay) <= ty,
        "Top": np.abs(y - by) <= ty,
    }
    tags: dict[int, set[str]] = {}
    for side, mask in masks.items():
        for i in np.flatnonzero(mask):
            tags.setdefault(int(i), set()).add(side)
    return {i: frozenset(s) for i, s in sorted(tags.items())}


def build_uniform_mesh(nx: int, ny: int, domain=(0.0, 1.0, 0.0, 1.0)) -> StructuredTriMesh:
    if int(nx) != nx or int(ny) != ny or nx < 1 or ny < 1:
        raise ValueError(f"cell counts must be positive integers, got nx={nx}, ny={ny}")
    nx, ny = int(nx), int(ny)
    ax, bx, ay, by = (float(v) for v in domain)
    if not (bx > ax and by > ay):
        raise ValueError(f"degenerate rectangle {domain!r}")

    xs = np.linspace(ax, bx, nx + 1)
    ys = np.linspace(ay, by, ny + 1)
    X, Y = np.meshgrid(xs, ys)  # row-major: y outer, x inner
    nodes = np.column_stack([X.ravel(), Y.ravel()])

    i, j = np.meshgrid(np.arange(nx), np.arange(ny))
    i, j = i.ravel(), j.ravel()
    sw = j * (nx + 1) + i
    se = sw + 1
    nw = sw + (nx + 1)
    ne = nw + 1
    lower = np.column_stack([sw, se, ne])
    upper = np.column_stack([sw, ne, nw])
    # interleave so each cell's two triangles are adjacent
    triangles = np.empty((2 * nx * ny, 3), dtype=np.int64)
    triangles[0::2] = lower
    triangles[1::2] = upper

    return StructuredTriMesh(nx, ny, (ax, bx, ay, by), nodes, triangles, _tag_nodes(nodes, (ax, bx, ay, by)))


def refine(mesh: StructuredTriMesh) -> StructuredTriMesh:
    """Split every triangle into four by joining edge midpoints.

    On the structured grid this is the same as halving the cell size, so the
    result is rebuilt directly; parent nodes keep their coordinates.
    """
    return build_uniform_mesh(2 * mesh.nx, 2 * mesh.ny, mesh.domain)


def boundary_nodes(mesh: StructuredTriMesh, side: str) -> list[int]:
    if side not in SIDES:
        raise ValueError(f"unknown side {side!r}; expected one of {SIDES}")
    return [i for i, tags in mesh.boundary_tags.items() if side in tags]


def dump_mesh(mesh: StructuredTriMesh, path) -> None:
    """Write ``x y`` node lines followed by ``i j k`` element lines."""
    path = Path(path)
    with path.open("w") as fh:
        fh.write(f"{mesh.n_nodes} {len(mesh.triangles)}\n")
        for x, y in mesh.nodes:
            fh.write(f"{x:.17g} {y:.17g}\n")
        for a, b, c in mesh.triangles:
            fh.write(f"{a} {b} {c}\n")
