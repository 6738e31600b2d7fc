"""Uniform Cartesian grids and node-centered fields.

All solver data lives on node-centered uniform grids: node (i, j) sits at
(x_min + i*dx, y_min + j*dy) with 0 <= i < nx, 0 <= j < ny.  Scalar fields
are float64 arrays of shape (ny, nx); vector fields carry a leading
component axis, shape (2, ny, nx).  Flat indexing is row-major,
k = j*nx + i, and every linear-algebra vector in the package follows it.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np


class GridError(ValueError):
    """Raised for inconsistent grid geometry or malformed field data."""


@dataclass(frozen=True)
class Grid2D:
    """Geometry of a uniform node-centered grid."""

    x_min: float
    y_min: float
    dx: float
    dy: float
    nx: int
    ny: int

    def __post_init__(self):
        if self.nx < 2 or self.ny < 2:
            raise GridError(f"grid needs at least 2x2 nodes, got {self.nx}x{self.ny}")
        if not (self.dx > 0.0 and self.dy > 0.0):
            raise GridError(f"non-positive spacing dx={self.dx}, dy={self.dy}")

    @property
    def x_max(self) -> float:
        return self.x_min + (self.nx - 1) * self.dx

    @property
    def y_max(self) -> float:
        return self.y_min + (self.ny - 1) * self.dy

    @property
    def shape(self) -> tuple[int, int]:
        return (self.ny, self.nx)

    @property
    def n_nodes(self) -> int:
        return self.nx * self.ny

    @property
    def h_max(self) -> float:
        return max(self.dx, self.dy)

    def node_x(self, i):
        return self.x_min + i * self.dx

    def node_y(self, j):
        return self.y_min + j * self.dy

    def axes(self):
        xs = self.x_min + self.dx * np.arange(self.nx)
        ys = self.y_min + self.dy * np.arange(self.ny)
        return xs, ys

    def meshgrid(self):
        xs, ys = self.axes()
        return np.meshgrid(xs, ys)

    def flat_index(self, i: int, j: int) -> int:
        if not (0 <= i < self.nx and 0 <= j < self.ny):
            raise GridError(f"node ({i}, {j}) outside {self.nx}x{self.ny} grid")
        return j * self.nx + i

    def node_of(self, k: int) -> tuple[int, int]:
        if not (0 <= k < self.n_nodes):
            raise GridError(f"flat index {k} outside grid with {self.n_nodes} nodes")
        return (k % self.nx, k // self.nx)

    def is_boundary(self, i: int, j: int) -> bool:
        return i == 0 or j == 0 or i == self.nx - 1 or j == self.ny - 1


def make_grid(x_min, x_max, y_min, y_max, nx, ny) -> Grid2D:
    """Build a Grid2D covering [x_min, x_max] x [y_min, y_max] with nx x ny nodes.

    Spacing is dx = (x_max - x_min)/(nx - 1); the extreme nodes land exactly on
    the domain boundary.
    """
    if not (x_max > x_min and y_max > y_min):
        raise GridError("domain extents must satisfy x_max > x_min and y_max > y_min")
    if nx < 2 or ny < 2:
        raise GridError(f"grid needs at least 2x2 nodes, got {nx}x{ny}")
    dx = (x_max - x_min) / (nx - 1)
    dy = (y_max - y_min) / (ny - 1)
    return Grid2D(float(x_min), float(y_min), dx, dy, int(nx), int(ny))


@dataclass
class NodeField:
    """Node-centered scalar or two-component vector field on a Grid2D."""

    grid: Grid2D
    values: np.ndarray

    def __post_init__(self):
        v = np.ascontiguousarray(self.values, dtype=np.float64)
        if v.shape == self.grid.shape:
            pass
        elif v.ndim == 3 and v.shape[0] == 2 and v.shape[1:] == self.grid.shape:
            pass
        else:
            raise GridError(
                f"field shape {v.shape} does not match grid shape {self.grid.shape}"
            )
        self.values = v

    @property
    def ncomp(self) -> int:
        return 1 if self.values.ndim == 2 else self.values.shape[0]

    def component(self, c: int) -> np.ndarray:
        """Scalar (ny, nx) view of component c."""
        if self.values.ndim == 2:
            if c != 0:
                raise GridError(f"scalar field has no component {c}")
            return self.values
        return self.values[c]

    def components(self):
        return [self.component(c) for c in range(self.ncomp)]

    def copy(self) -> "NodeField":
        return NodeField(self.grid, self.values.copy())

    def check_finite(self, name: str = "field") -> None:
        bad = ~np.isfinite(self.values)
        if bad.any():
            flat = np.argwhere(bad)[0]
            if self.values.ndim == 2:
                j, i = int(flat[0]), int(flat[1])
            else:
                j, i = int(flat[1]), int(flat[2])
            raise GridError(f"{name} is not finite at node ({i}, {j})")

    @classmethod
    def zeros(cls, grid: Grid2D, ncomp: int = 1) -> "NodeField":
        if ncomp == 1:
            return cls(grid, np.zeros(grid.shape))
        if ncomp == 2:
            return cls(grid, np.zeros((2,) + grid.shape))
        raise GridError(f"only scalar or two-component fields supported, got ncomp={ncomp}")

    @classmethod
    def full(cls, grid: Grid2D, value: float, ncomp: int = 1) -> "NodeField":
        f = cls.zeros(grid, ncomp)
        f.values[...] = value
        return f


def sample_function(grid: Grid2D, fn: Callable, t: float = 0.0) -> NodeField:
    """Sample fn(x, y, t) at every node.

    fn may return a scalar (scalar field) or a 2-sequence (vector field).
    Raises GridError naming the offending node if any sampled value is not
    finite.
    """
    probe = fn(grid.x_min, grid.y_min, t)
    X, Y = grid.meshgrid()
    if np.isscalar(probe) or (isinstance(probe, np.ndarray) and probe.ndim == 0):
        vals = np.asarray(fn(X, Y, t), dtype=np.float64)
        if vals.shape != grid.shape:  # fn not vectorized; fall back to loop
            vals = np.empty(grid.shape)
            for j in range(grid.ny):
                for i in range(grid.nx):
                    vals[j, i] = fn(grid.node_x(i), grid.node_y(j), t)
        field = NodeField(grid, vals)
    else:
        out = fn(X, Y, t)
        vals = np.empty((2,) + grid.shape)
        try:
            vx, vy = out
            vals[0] = np.broadcast_to(np.asarray(vx, dtype=np.float64), grid.shape)
            vals[1] = np.broadcast_to(np.asarray(vy, dtype=np.float64), grid.shape)
        except (TypeError, ValueError):
            for j in range(grid.ny):
                for i in range(grid.nx):
                    vx, vy = fn(grid.node_x(i), grid.node_y(j), t)
                    vals[0, j, i] = vx
                    vals[1, j, i] = vy
        field = NodeField(grid, vals)
    field.check_finite("sampled field")
    return field


def write_field_text(field: NodeField, path) -> None:
    """Dump a field as plain text: header `nx ny x_min y_min dx dy`, then one
    row-major `i j value...` line per node."""
    g = field.grid
    with open(path, "w") as fh:
        fh.write(f"{g.nx} {g.ny} {g.x_min:.17g} {g.y_min:.17g} {g.dx:.17g} {g.dy:.17g}\n")
        comps = field.components()
        for j in range(g.ny):
            for i in range(g.nx):
                vals = " ".join(f"{c[j, i]:.17g}" for c in comps)
                fh.write(f"{i} {j} {vals}\n")


def read_field_text(path) -> NodeField:
    """Read a field written by write_field_text."""
    with open(path) as fh:
        header = fh.readline().split()
        if len(header) != 6:
            raise GridError(f"malformed field header in {path!r}")
        nx, ny = int(header[0]), int(header[1])
        x_min, y_min, dx, dy = (float(v) for v in header[2:])
        grid = Grid2D(x_min, y_min, dx, dy, nx, ny)
        rows = fh.read().split("\n")
    data = None
    seen = 0
    for line in rows:
        if not line.strip():
            continue
        parts = line.split()
        i, j = int(parts[0]), int(parts[1])
        vals = [float(v) for v in parts[2:]]
        if data is None:
            ncomp = len(vals)
            if ncomp not in (1, 2):
                raise GridError(f"unsupported component count {ncomp} in {path!r}")
            data = np.empty((ncomp, ny, nx))
        for c, v in enumerate(vals):
            data[c, j, i] = v
        seen += 1
    if data is None or seen != nx * ny:
        raise GridError(f"field dump {path!r} has {seen} rows, expected {nx * ny}")
    if data.shape[0] == 1:
        return NodeField(grid, data[0])
    return NodeField(grid, data)
