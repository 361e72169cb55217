"""Uniform one-dimensional grid, finite differences and tridiagonal solves."""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from functools import cached_property

import numpy as np
from scipy.linalg import lapack


@dataclass(frozen=True)
class Grid1D:
    """Uniform grid on ``[v_min, v_max]`` that contains ``v = 0`` as a node."""

    v_min: float = -30.0
    v_max: float = 30.0
    n_nodes: int = 1201

    def __post_init__(self):
        if self.n_nodes < 3:
            raise ValueError("need at least 3 nodes")
        if not self.v_min < 0 < self.v_max:
            raise ValueError("domain must contain v = 0 in its interior")
        k = -self.v_min / self.h
        if abs(k - round(k)) > 1e-9:
            raise ValueError(f"v = 0 is not a grid node (offset {k:.6g} cells)")

    @cached_property
    def h(self) -> float:
        return (self.v_max - self.v_min) / (self.n_nodes - 1)

    @cached_property
    def nodes(self) -> np.ndarray:
        v = self.v_min + self.h * np.arange(self.n_nodes)
        v[self.zero_index] = 0.0
        v.flags.writeable = False
        return v

    @cached_property
    def zero_index(self) -> int:
        return int(round(-self.v_min / self.h))

    def refined(self) -> "Grid1D":
        """Same domain with half the spacing."""
        return Grid1D(self.v_min, self.v_max, 2 * self.n_nodes - 1)

    def index_of(self, v: float) -> int:
        """Index of a node that coincides with ``v``; raises otherwise."""
        k = (v - self.v_min) / self.h
        i = int(round(k))
        if abs(k - i) > 1e-9 or not 0 <= i < self.n_nodes:
            raise ValueError(f"{v} is not a grid node")
        return i


@dataclass(frozen=True)
class GridFn:
    grid: Grid1D
    values: np.ndarray

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=float)
        if vals.shape != (self.grid.n_nodes,):
            raise ValueError(f"expected {self.grid.n_nodes} values, got shape {vals.shape}")
        if not np.all(np.isfinite(vals)):
            raise ValueError("grid function has non-finite values")
        object.__setattr__(self, "values", vals)

    def __call__(self, v):
        return interp(self, v)

    def to_csv(self, path, header=("v", "value")) -> None:
        write_columns(path, header, [self.grid.nodes, self.values])


def _values(f):
    return f.values if isinstance(f, GridFn) else np.asarray(f, dtype=float)


def d1(f, h: float | None = None) -> np.ndarray | GridFn:
    """First derivative: centered inside, second-order one-sided at the ends.

    Accepts a :class:`GridFn` (returns one) or a raw array plus ``h``.
    Leading axes of a raw array are treated as batch dimensions.
    """
    if isinstance(f, GridFn):
        return GridFn(f.grid, d1(f.values, f.grid.h))
    u = np.asarray(f, dtype=float)
    out = np.empty_like(u)
    out[..., 1:-1] = (u[..., 2:] - u[..., :-2]) / (2 * h)
    if u.shape[-1] >= 3:
        out[..., 0] = (-3 * u[..., 0] + 4 * u[..., 1] - u[..., 2]) / (2 * h)
        out[..., -1] = (3 * u[..., -1] - 4 * u[..., -2] + u[..., -3]) / (2 * h)
    return out


def d2(f, h: float | None = None) -> np.ndarray | GridFn:
    """Second derivative; boundary values copy the nearest interior value."""
    if isinstance(f, GridFn):
        return GridFn(f.grid, d2(f.values, f.grid.h))
    u = np.asarray(f, dtype=float)
    out = np.empty_like(u)
    out[..., 1:-1] = (u[..., 2:] - 2 * u[..., 1:-1] + u[..., :-2]) / h**2
    out[..., 0] = out[..., 1]
    out[..., -1] = out[..., -2]
    return out


def interp_values(grid: Grid1D, values: np.ndarray, v, clamp: bool = False) -> np.ndarray:
    """Piecewise-linear interpolation of node values on a uniform grid.

    Cheaper than :func:`numpy.interp` for large query batches since the
    bracketing cell is found by arithmetic.  Out-of-domain queries raise
    unless ``clamp`` is set, in which case they are extrapolated linearly
    from the end cells (the boundary condition of every PDE solved here).
    """
    v = np.asarray(v, dtype=float)
    k = (v - grid.v_min) / grid.h
    if not clamp:
        tol = 1e-9
        if np.any(k < -tol) or np.any(k > grid.n_nodes - 1 + tol) or np.any(np.isnan(k)):
            raise ValueError(f"query outside grid domain [{grid.v_min}, {grid.v_max}]")
    i = np.clip(np.floor(k).astype(np.int64), 0, grid.n_nodes - 2)
    w = k - i
    return (1.0 - w) * values[i] + w * values[i + 1]


def interp(f: GridFn, v):
    """Linear interpolation of ``f`` at ``v``; exact at nodes."""
    out = interp_values(f.grid, f.values, v)
    return float(out) if np.ndim(out) == 0 else out


def solve_tridiag(a, b, c, rhs) -> np.ndarray:
    """Solve ``a[i] x[i-1] + b[i] x[i] + c[i] x[i+1] = rhs[i]``.

    ``a[0]`` and ``c[-1]`` are ignored.  Uses LAPACK ``gtsv`` (partial
    pivoting); a zero pivot means the discretization parameters produced a
    singular system and raises :class:`numpy.linalg.LinAlgError`.
    """
    b = np.asarray(b, dtype=float)
    n = b.shape[0]
    a = np.broadcast_to(np.asarray(a, dtype=float), (n,))
    c = np.broadcast_to(np.asarray(c, dtype=float), (n,))
    rhs = np.asarray(rhs, dtype=float)
    if rhs.shape[0] != n:
        raise ValueError("rhs length does not match the system")
    if n == 1:
        if b[0] == 0:
            raise np.linalg.LinAlgError("zero pivot in tridiagonal solve")
        return rhs / b[0]
    _, _, _, x, info = lapack.dgtsv(a[1:], b, c[:-1], rhs)
    if info > 0:
        raise np.linalg.LinAlgError(f"zero pivot at row {info - 1} in tridiagonal solve")
    if info < 0:
        raise ValueError(f"illegal argument {-info} to gtsv")
    return x


def write_columns(path, header, columns) -> None:
    """Write equal-length columns as CSV with ``repr``-exact floats."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for row in zip(*columns):
            w.writerow([fmt(x) for x in row])


def fmt(x) -> str:
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, str):
        return x
    x = float(x)
    return repr(x) if math.isfinite(x) else str(x)
