"""Dyadic cubes, shifted grids, the three-lattice covering, and r-averages.

Everything lives on the unit cube [0,1)^d, d in {1,2}, truncated at a depth
cap so that every supremum in the toolkit is a finite maximum.  Functions are
piecewise constant on the 2^(dL) finest cells of the standard (shift 0) grid,
stored as plain numpy arrays of shape (2^L,)*d, optionally with trailing axes
(one value per atom of a function space).  Integrals of such functions are
finite sums, so averages are exact up to float rounding.

Shifted grids follow the one-third trick: grid alpha consists of the cubes

    2^(-k) * ([0,1)^d + m + (-1)^k * a/3),    a = per-axis digits of alpha,

which is nested in k (the two children of a cube along an axis have indices
2m + (-1)^k a and 2m + (-1)^k a + 1).  Shifted cubes may protrude from the
unit cube; averages are then taken over the intersection with [0,1)^d.  Cover
decisions use exact rational arithmetic, so the covering suites are exact.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Iterable, Iterator, Sequence

import numpy as np

__all__ = [
    "Cube",
    "Grid",
    "build_grid",
    "shifted_grids",
    "cover_cube",
    "average",
    "level_averages",
    "grid_norm",
    "function_to_json",
    "function_from_json",
    "function_to_csv",
    "function_from_csv",
]

MAX_DEPTH = {1: 12, 2: 6}


@dataclass(frozen=True)
class Cube:
    """One dyadic cube 2^(-level) * ([0,1)^d + index + sign*digits/3)."""

    level: int
    index: tuple[int, ...]
    shift: int = 0

    @property
    def d(self) -> int:
        return len(self.index)

    @property
    def side(self) -> float:
        return 2.0 ** (-self.level)

    @property
    def measure(self) -> float:
        return 2.0 ** (-self.level * self.d)

    @property
    def sign(self) -> int:
        # level-alternating sign of the one-third shift
        return 1 if self.level % 2 == 0 else -1

    @property
    def shift_digits(self) -> tuple[int, ...]:
        a, digits = self.shift, []
        for _ in range(self.d):
            digits.append(a % 3)
            a //= 3
        return tuple(digits)

    def support_exact(self) -> list[tuple[Fraction, Fraction]]:
        """Per-axis [lo, hi) as exact rationals."""
        den = 3 * (1 << self.level)
        out = []
        for m, a in zip(self.index, self.shift_digits):
            lo = Fraction(3 * m + self.sign * a, den)
            out.append((lo, lo + Fraction(3, den)))
        return out

    def support(self) -> list[tuple[float, float]]:
        """Per-axis [lo, hi) in floats."""
        return [(float(lo), float(hi)) for lo, hi in self.support_exact()]

    def contains(self, lower: Sequence, side) -> bool:
        """Exact test: is the axis-parallel cube (lower, side) inside self."""
        side = Fraction(side)
        for (lo, hi), x in zip(self.support_exact(), lower):
            x = Fraction(x)
            if x < lo or x + side > hi:
                return False
        return True


def _axis_range(level: int, digit: int) -> range:
    """Index range along one axis keeping only cubes meeting [0,1)."""
    if digit == 0:
        return range(0, 1 << level)
    if level % 2 == 0:
        return range(-1, 1 << level)
    return range(0, (1 << level) + 1)


class Grid:
    """The finite tree of dyadic cubes of one shift, levels 0..depth.

    The function domain (finest cells) always refers to the shift-0 grid at
    level ``depth``; a shifted ``Grid`` only enumerates cube geometry.
    """

    def __init__(self, d: int, depth: int, shift: int = 0):
        if d not in (1, 2):
            raise ValueError(f"dimension must be 1 or 2, got {d}")
        if not 0 <= depth <= MAX_DEPTH[d]:
            raise ValueError(
                f"depth {depth} out of supported range [0, {MAX_DEPTH[d]}] for d={d}"
            )
        if not 0 <= shift < 3**d:
            raise ValueError(f"shift index {shift} out of range [0, {3**d})")
        self.d = d
        self.depth = depth
        self.shift = shift
        self.cell_shape = (1 << depth,) * d
        self.ncells = (1 << depth) ** d
        self.cell_measure = 2.0 ** (-d * depth)

    def __repr__(self) -> str:
        return f"Grid(d={self.d}, depth={self.depth}, shift={self.shift})"

    @property
    def root(self) -> Cube:
        if self.shift != 0:
            raise ValueError("shifted grids have no single root over [0,1)^d")
        return Cube(0, (0,) * self.d, 0)

    def _digits(self) -> tuple[int, ...]:
        a, digits = self.shift, []
        for _ in range(self.d):
            digits.append(a % 3)
            a //= 3
        return tuple(digits)

    def level_cubes(self, level: int) -> list[Cube]:
        if not 0 <= level <= self.depth:
            raise ValueError(f"level {level} outside [0, {self.depth}]")
        digits = self._digits()
        ranges = [_axis_range(level, a) for a in digits]
        cubes = []
        if self.d == 1:
            for m in ranges[0]:
                cubes.append(Cube(level, (m,), self.shift))
        else:
            for m0 in ranges[0]:
                for m1 in ranges[1]:
                    cubes.append(Cube(level, (m0, m1), self.shift))
        return cubes

    def cubes(self) -> Iterator[Cube]:
        for level in range(self.depth + 1):
            yield from self.level_cubes(level)

    def ncubes(self) -> int:
        return sum(len(self.level_cubes(k)) for k in range(self.depth + 1))

    def children(self, cube: Cube) -> list[Cube]:
        """The up-to-2^d subcubes at the next level meeting [0,1)^d."""
        if cube.level >= self.depth:
            return []
        k1 = cube.level + 1
        digits = cube.shift_digits
        axes = []
        for m, a in zip(cube.index, digits):
            base = 2 * m + cube.sign * a
            rng = _axis_range(k1, a)
            axes.append([b for b in (base, base + 1) if b in rng])
        if self.d == 1:
            return [Cube(k1, (m,), self.shift) for m in axes[0]]
        return [
            Cube(k1, (m0, m1), self.shift) for m0 in axes[0] for m1 in axes[1]
        ]

    def parent(self, cube: Cube) -> Cube | None:
        if cube.level == 0:
            return None
        k0 = cube.level - 1
        sign0 = 1 if k0 % 2 == 0 else -1
        index = tuple(
            (m - sign0 * a) // 2 for m, a in zip(cube.index, cube.shift_digits)
        )
        return Cube(k0, index, self.shift)

    def descendants(self, cube: Cube, strict: bool = True) -> Iterator[Cube]:
        """Top-down iteration over the subtree rooted at ``cube``."""
        if not strict:
            yield cube
        frontier = self.children(cube)
        while frontier:
            nxt = []
            for q in frontier:
                yield q
                nxt.extend(self.children(q))
            frontier = nxt

    def cube_slices(self, cube: Cube) -> tuple[slice, ...]:
        """Cell-array slices covered by a shift-0 cube."""
        if cube.shift != 0:
            raise ValueError("cell slices are defined for shift-0 cubes only")
        b = 1 << (self.depth - cube.level)
        return tuple(slice(m * b, (m + 1) * b) for m in cube.index)

    def overlap_weights(self, cube: Cube) -> list[np.ndarray]:
        """Per-axis overlap lengths of ``cube`` with the finest cells."""
        n = 1 << self.depth
        h = 1.0 / n
        out = []
        for lo, hi in cube.support():
            edges = np.arange(n + 1) * h
            ov = np.minimum(hi, edges[1:]) - np.maximum(lo, edges[:-1])
            out.append(np.maximum(ov, 0.0))
        return out


def build_grid(d: int, depth: int, shift: int = 0) -> Grid:
    """Construct the full cube tree for one shifted grid."""
    return Grid(d, depth, shift)


def shifted_grids(d: int, depth: int) -> list[Grid]:
    """All 3^d shifted grids at the same dimension and depth."""
    return [Grid(d, depth, alpha) for alpha in range(3**d)]


def cover_cube(lower: Sequence, side) -> tuple[int, Cube]:
    """Cover an arbitrary axis-parallel cube by one shifted dyadic cube.

    Returns (alpha, Q') with Q contained in Q' and |Q'| <= 6^d |Q|.  The
    level is the largest k with 2^(-k) >= 3*side (so 2^(-k) < 6*side), and
    per axis at most one of the three digit classes has a grid endpoint
    cutting through Q, which leaves a containing cube in one of the others.
    Sides longer than 1/3 are covered by the shift-0 root directly.
    """
    lower = [Fraction(x) for x in lower]
    side = Fraction(side)
    d = len(lower)
    if d not in (1, 2):
        raise ValueError(f"dimension must be 1 or 2, got {d}")
    if side <= 0:
        raise ValueError("side length must be positive")
    for x in lower:
        if x < 0 or x + side > 1:
            raise ValueError("cube must sit inside [0,1)^d")

    # exact standard-grid cubes cover themselves at ratio 1
    if side.numerator == 1 and side.denominator & (side.denominator - 1) == 0:
        if all(x % side == 0 for x in lower):
            k = side.denominator.bit_length() - 1
            return 0, Cube(k, tuple(int(x / side) for x in lower), 0)

    if side > Fraction(1, 3):
        return 0, Cube(0, (0,) * d, 0)

    k = 0
    while Fraction(1, 2 ** (k + 1)) >= 3 * side:
        k += 1
    sign = 1 if k % 2 == 0 else -1
    scale = Fraction(1 << k)

    digits, index = [], []
    for x in lower:
        for a in (0, 1, 2):
            t = scale * x - Fraction(sign * a, 3)
            m = math.floor(t)
            hi = (m + 1 + Fraction(sign * a, 3)) / scale
            if x + side <= hi:
                digits.append(a)
                index.append(m)
                break
        else:  # unreachable: at most one digit class can fail
            raise AssertionError("no admissible one-third shift found")
    alpha = sum(a * 3**i for i, a in enumerate(digits))
    return alpha, Cube(k, tuple(index), alpha)


def _check_cells(grid: Grid, f: np.ndarray) -> np.ndarray:
    f = np.asarray(f, dtype=float)
    if f.shape[: grid.d] != grid.cell_shape:
        raise ValueError(
            f"function shape {f.shape} does not start with cells {grid.cell_shape}"
        )
    return f


def average(grid: Grid, f: np.ndarray, r: float, cube: Cube):
    """The r-average <f>_{r,Q} = (|Q|^-1 int_Q |f|^r)^(1/r), exact.

    Q is intersected with [0,1)^d (relevant for shifted cubes); r = inf gives
    the essential supremum.  Trailing axes of ``f`` broadcast (one average
    per atom).
    """
    f = _check_cells(grid, f)
    if not (r > 0):
        raise ValueError(f"average exponent must be positive, got r={r}")
    cells = tuple(range(grid.d))
    if cube.shift == 0:
        sub = np.abs(f[grid.cube_slices(cube)])
        if math.isinf(r):
            return sub.max(axis=cells)
        return np.mean(sub**r, axis=cells) ** (1.0 / r)

    axes_w = grid.overlap_weights(cube)
    w = axes_w[0] if grid.d == 1 else np.multiply.outer(axes_w[0], axes_w[1])
    total = w.sum()
    if total <= 0:
        raise ValueError("cube does not meet [0,1)^d")
    fa = np.abs(f)
    if math.isinf(r):
        mask = w > 0
        return fa[mask].max(axis=0) if f.ndim > grid.d else fa[mask].max()
    wx = w.reshape(w.shape + (1,) * (f.ndim - grid.d))
    return (np.sum(wx * fa**r, axis=cells) / total) ** (1.0 / r)


def level_averages(grid: Grid, f: np.ndarray, r: float) -> dict[int, np.ndarray]:
    """r-averages over every shift-0 cube, one array of shape (2^k,)*d per level.

    Exact block reductions; the workhorse behind maximal operators.  Trailing
    axes broadcast.
    """
    if grid.shift != 0:
        raise ValueError("level averages are defined on the shift-0 tree")
    f = _check_cells(grid, f)
    if not (r > 0):
        raise ValueError(f"average exponent must be positive, got r={r}")
    n = 1 << grid.depth
    trail = f.shape[grid.d:]
    out: dict[int, np.ndarray] = {}
    fa = np.abs(f)
    power = None if math.isinf(r) else fa**r
    for k in range(grid.depth + 1):
        b = 1 << (grid.depth - k)
        if grid.d == 1:
            shape = (n // b, b) + trail
            red_axes = (1,)
        else:
            shape = (n // b, b, n // b, b) + trail
            red_axes = (1, 3)
        if power is None:
            out[k] = fa.reshape(shape).max(axis=red_axes)
        else:
            out[k] = np.mean(power.reshape(shape), axis=red_axes) ** (1.0 / r)
    return out


def grid_norm(grid: Grid, f: np.ndarray, p: float, weight: np.ndarray | None = None) -> float:
    """L^p norm over the unit cube of a scalar cell function.

    A weight multiplies pointwise before the norm (the ||f w||_p convention).
    p = inf gives the sup over cells.
    """
    f = _check_cells(grid, f)
    if f.shape != grid.cell_shape:
        raise ValueError("grid_norm expects a scalar cell function")
    g = np.abs(f) if weight is None else np.abs(f) * np.asarray(weight, dtype=float)
    if math.isinf(p):
        return float(g.max())
    if not (p > 0):
        raise ValueError(f"norm exponent must be positive, got p={p}")
    return float((np.sum(g**p) * grid.cell_measure) ** (1.0 / p))


def function_to_json(grid: Grid, f: np.ndarray) -> str:
    """JSON envelope {d, L, values} for a cell function."""
    f = _check_cells(grid, f)
    return json.dumps({"d": grid.d, "L": grid.depth, "values": f.tolist()})


def function_from_json(text: str) -> tuple[Grid, np.ndarray]:
    obj = json.loads(text)
    grid = Grid(int(obj["d"]), int(obj["L"]))
    f = np.asarray(obj["values"], dtype=float)
    return grid, _check_cells(grid, f)


def function_to_csv(grid: Grid, f: np.ndarray, path) -> None:
    """One row per finest cell: flat row-major cell index, value."""
    f = _check_cells(grid, f)
    if f.shape != grid.cell_shape:
        raise ValueError("CSV serialization expects a scalar cell function")
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["cell", "value"])
        for i, v in enumerate(f.reshape(-1)):
            writer.writerow([i, repr(float(v))])


def function_from_csv(path, grid: Grid) -> np.ndarray:
    values = np.zeros(grid.ncells)
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if header[:2] != ["cell", "value"]:
            raise ValueError("expected header 'cell,value'")
        for row in reader:
            values[int(row[0])] = float(row[1])
    return values.reshape(grid.cell_shape)
