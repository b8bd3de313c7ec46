"""Uniform symmetric grids, weighted norms, quadrature and the free heat semigroup."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from functools import cached_property
from pathlib import Path

import numpy as np
from scipy.interpolate import CubicSpline
from scipy.ndimage import convolve1d


@dataclass(frozen=True)
class Grid:
    """Nodes -L, ..., 0, ..., L with an odd number of points."""

    half_width: float
    n_points: int

    def __post_init__(self):
        if self.half_width <= 0:
            raise ValueError("half_width must be positive")
        if self.n_points < 3 or self.n_points % 2 == 0:
            raise ValueError(f"n_points must be odd and >= 3, got {self.n_points}")

    @property
    def h(self) -> float:
        return 2.0 * self.half_width / (self.n_points - 1)

    @cached_property
    def nodes(self) -> np.ndarray:
        m = (self.n_points - 1) // 2
        x = np.arange(-m, m + 1) * self.h
        x.flags.writeable = False
        return x

    @property
    def center(self) -> int:
        return (self.n_points - 1) // 2

    @classmethod
    def with_spacing(cls, half_width: float, h: float) -> "Grid":
        m = int(round(half_width / h))
        return cls(m * h, 2 * m + 1)

    def dilate(self, factor: float) -> "Grid":
        return Grid(self.half_width * factor, self.n_points)


class GridFunction:
    """Immutable samples of a function on a :class:`Grid`."""

    __slots__ = ("grid", "values", "even")

    def __init__(self, grid: Grid, values, even: bool = False):
        vals = np.array(values, dtype=float)
        if vals.shape != (grid.n_points,):
            raise ValueError(f"expected {grid.n_points} values, got shape {vals.shape}")
        if even and not np.array_equal(vals, vals[::-1]):
            raise ValueError("values tagged even are not symmetric")
        vals.flags.writeable = False
        self.grid = grid
        self.values = vals
        self.even = even

    @classmethod
    def from_function(cls, grid: Grid, fn, even: bool = False) -> "GridFunction":
        vals = np.asarray(fn(grid.nodes), dtype=float)
        if even:
            vals = 0.5 * (vals + vals[::-1])
        return cls(grid, vals, even=even)

    def with_values(self, values, even: bool | None = None) -> "GridFunction":
        return GridFunction(self.grid, values, self.even if even is None else even)

    def interpolate(self, x) -> np.ndarray:
        """Cubic-spline evaluation at arbitrary points inside the grid."""
        x = np.asarray(x, dtype=float)
        if np.any(np.abs(x) > self.grid.half_width * (1 + 1e-12)):
            raise ValueError("interpolation point outside the grid")
        return CubicSpline(self.grid.nodes, self.values, bc_type="not-a-knot")(x)

    def min(self) -> float:
        return float(self.values.min())

    def __repr__(self):
        return f"GridFunction(n={self.grid.n_points}, L={self.grid.half_width}, even={self.even})"

    # CSV round trip: header `y,value`, node order
    def to_csv(self, path, header_lines=()):
        with open(path, "w", newline="") as fh:
            for line in header_lines:
                fh.write(f"# {line}\n")
            w = csv.writer(fh)
            w.writerow(["y", "value"])
            for y, v in zip(self.grid.nodes, self.values):
                w.writerow([repr(float(y)), repr(float(v))])

    @classmethod
    def from_csv(cls, path) -> "GridFunction":
        rows = [r for r in Path(path).read_text().splitlines() if r and not r.startswith("#")]
        if rows[0].strip() != "y,value":
            raise ValueError("expected header 'y,value'")
        data = np.array([[float(c) for c in r.split(",")] for r in rows[1:]])
        y = data[:, 0]
        grid = Grid(float(y[-1]), len(y))
        if not np.allclose(grid.nodes, y, rtol=0, atol=1e-12 * max(1.0, grid.half_width)):
            raise ValueError("nodes are not a uniform symmetric grid")
        return cls(grid, data[:, 1])


def japanese_bracket(y):
    return np.sqrt(1.0 + np.asarray(y, dtype=float) ** 2)


def weighted_sup_norm(f: GridFunction, n: float, gauge: float = 0.0, window: float | None = None) -> float:
    """max over nodes of <y>^{-n} exp(gauge y^2/4) |f(y)|.

    ``window`` restricts the maximum to |y| <= window.
    """
    vals = f.values
    if not np.all(np.isfinite(vals)):
        raise ValueError("non-finite values in weighted norm")
    y = f.grid.nodes
    # log-space weight avoids overflow of exp(gauge y^2/4) where |f| underflows
    with np.errstate(divide="ignore"):
        logw = -0.5 * n * np.log1p(y * y) + gauge * y * y / 4.0 + np.log(np.abs(vals))
    if window is not None:
        logw = np.where(np.abs(y) <= window, logw, -np.inf)
    m = logw.max()
    return 0.0 if m == -np.inf else float(np.exp(m))


def trapezoid_weights(grid: Grid) -> np.ndarray:
    w = np.full(grid.n_points, grid.h)
    w[0] = w[-1] = 0.5 * grid.h
    return w


def inner_product(f: GridFunction, g: GridFunction) -> float:
    """Composite trapezoid approximation of the L2 pairing on the line."""
    if f.grid != g.grid:
        raise ValueError("inner product of functions on different grids")
    return float(np.dot(trapezoid_weights(f.grid), f.values * g.values))


def l2_norm(f: GridFunction) -> float:
    return math.sqrt(max(inner_product(f, f), 0.0))


def laplacian(f: GridFunction, boundary: str = "even") -> GridFunction:
    """Second-order central difference.

    boundary="even" closes the ends by reflecting the outermost interior
    neighbour; "interior" leaves the two end values as NaN.
    """
    n = f.grid.n_points
    if n < 3:
        raise ValueError("laplacian needs at least 3 points")
    u = f.values
    h2 = f.grid.h ** 2
    out = np.empty(n)
    out[1:-1] = (u[2:] - 2.0 * u[1:-1] + u[:-2]) / h2
    if boundary == "even":
        out[0] = 2.0 * (u[1] - u[0]) / h2
        out[-1] = 2.0 * (u[-2] - u[-1]) / h2
    elif boundary == "interior":
        out[0] = out[-1] = np.nan
    else:
        raise ValueError(f"unknown boundary mode {boundary!r}")
    if f.even and boundary == "even":
        out = 0.5 * (out + out[::-1])
    return GridFunction(f.grid, out, even=f.even and boundary == "even")


def heat_kernel_weights(h: float, t: float) -> np.ndarray:
    """Discrete weights of (4 pi t)^{-1/2} exp(-(x-y)^2/(4t)) on spacing h.

    Clipped at |x-y| <= 8 sqrt(2t) and renormalised to unit sum, so constants
    are preserved exactly and the t -> 0 limit is the identity.
    """
    if t <= 0:
        raise ValueError("heat_convolve needs t > 0")
    m = int(math.ceil(8.0 * math.sqrt(2.0 * t) / h))
    k = np.arange(-m, m + 1) * h
    w = np.exp(-k * k / (4.0 * t))
    return w / w.sum()


def heat_convolve(f: GridFunction, t: float) -> GridFunction:
    """exp(t d^2/dx^2) f by kernel quadrature; f is extended by its boundary values."""
    w = heat_kernel_weights(f.grid.h, t)
    vals = convolve1d(f.values, w, mode="nearest")
    if f.even:
        vals = 0.5 * (vals + vals[::-1])
    return GridFunction(f.grid, vals, even=f.even)
