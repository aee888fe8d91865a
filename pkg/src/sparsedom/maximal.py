"""Multisublinear maximal operators over finite dyadic cube families.

The scalar operator takes the sup over cubes of the product of r_j-averages;
the lattice variant is the same computation with a trailing atom axis, which
makes the per-atom slice identity hold by construction (and it is still
asserted in the tests).  Operator norms are probed from below by randomized
and structured inputs; upper bounds belong to the sparse-domination route.
"""

from __future__ import annotations

import math
from typing import Sequence

import numpy as np

from .dyadic import Cube, Grid, average, grid_norm, level_averages, shifted_grids
from .spaces import Space, product_space

__all__ = [
    "contained_cells",
    "all_cubes",
    "scalar_maximal",
    "lattice_maximal",
    "maximal_opnorm_lower",
]


def contained_cells(grid: Grid, cube: Cube) -> tuple[slice, ...] | None:
    """Slices of the finest cells lying entirely inside ``cube``, or None.

    For shift-0 cubes this is the exact cell block; a shifted cube has
    thirds-rational boundaries, so only fully covered cells count (the
    operator is resolved at cell scale).
    """
    if cube.level > grid.depth:
        raise ValueError(f"cube level {cube.level} exceeds grid depth {grid.depth}")
    if cube.shift == 0:
        return grid.cube_slices(cube)
    n = 1 << grid.depth
    out = []
    for lo, hi in cube.support_exact():
        start = max(0, math.ceil(lo * n))
        stop = min(n, math.floor(hi * n))
        if stop <= start:
            return None
        out.append(slice(start, stop))
    return tuple(out)


def all_cubes(d: int, depth: int, shifts: bool = False) -> list[Cube]:
    """The full depth-``depth`` cube family, optionally over all 3^d shifts."""
    grids = shifted_grids(d, depth) if shifts else [Grid(d, depth)]
    return [q for g in grids for q in g.cubes()]


def _validate(grid: Grid, fs: Sequence[np.ndarray], rs: Sequence[float]):
    if len(fs) != len(rs) or not fs:
        raise ValueError("need one exponent per function, at least one pair")
    fs = [np.asarray(f, dtype=float) for f in fs]
    trail = fs[0].shape[grid.d:]
    for f in fs:
        if f.shape[: grid.d] != grid.cell_shape or f.shape[grid.d:] != trail:
            raise ValueError("functions must share the grid cell shape and atoms")
    return fs, trail


def scalar_maximal(
    grid: Grid,
    fs: Sequence[np.ndarray],
    rs: Sequence[float],
    cubes: Sequence[Cube] | None = None,
) -> np.ndarray:
    """sup_{Q} prod_j <f_j>_{r_j,Q} 1_Q per finest cell, exactly.

    ``cubes`` defaults to the full shift-0 family of the grid; any explicit
    collection (including shifted cubes) is accepted and the result is
    monotone in it.
    """
    fs, trail = _validate(grid, fs, rs)
    if cubes is None:
        # block-reduction fast path over the full tree
        out = np.zeros(grid.cell_shape + trail)
        for k in range(grid.depth + 1):
            prods = None
            for f, r in zip(fs, rs):
                lv = level_averages(grid, f, r)[k]
                prods = lv if prods is None else prods * lv
            b = 1 << (grid.depth - k)
            up = np.repeat(prods, b, axis=0)
            if grid.d == 2:
                up = np.repeat(up, b, axis=1)
            np.maximum(out, up, out=out)
        return out

    out = np.zeros(grid.cell_shape + trail)
    for cube in cubes:
        sl = contained_cells(grid, cube)
        if sl is None:
            continue
        val = None
        for f, r in zip(fs, rs):
            a = average(grid, f, r, cube)
            val = a if val is None else val * a
        np.maximum(out[sl], val, out=out[sl])
    return out


def lattice_maximal(
    grid: Grid,
    Fs: Sequence[np.ndarray],
    rs: Sequence[float],
    cubes: Sequence[Cube] | None = None,
) -> np.ndarray:
    """The lattice maximal operator: scalar_maximal on every atom slice.

    Inputs are (cells x atoms) arrays over one shared atom count; the lattice
    sup over an atomic measure space is the per-atom sup, so this is the
    scalar computation with a trailing axis.
    """
    Fs = [np.asarray(F, dtype=float) for F in Fs]
    atoms = {F.shape[grid.d:] for F in Fs}
    if len(atoms) != 1 or Fs[0].ndim == grid.d:
        raise ValueError("lattice inputs need one common nonempty atom shape")
    return scalar_maximal(grid, Fs, rs, cubes)


def _tower(rng, grid: Grid, n: int) -> np.ndarray:
    """Nested-indicator extremal input: geometric growth toward a corner."""
    beta = rng.uniform(0.3, 0.95)
    f = np.zeros(grid.cell_shape)
    for k in range(grid.depth + 1):
        b = 1 << (grid.depth - k)
        block = (slice(0, b),) * grid.d
        f[block] = (2.0 ** (grid.d * k)) ** beta
    direction = rng.exponential(size=n)
    return np.multiply.outer(f, direction)


def maximal_opnorm_lower(
    grid: Grid,
    rs: Sequence[float],
    ps: Sequence[float],
    spaces: Sequence[Space],
    trials: int = 50,
    seed: int = 0,
) -> tuple[float, list[np.ndarray]]:
    """Best ratio ||M(F)||_{L^p(X)} / prod ||F_j||_{L^{p_j}(X_j)} found.

    A certified lower bound for the operator norm on the given grid family,
    together with the maximizing input tuple.  The trial suite mixes the
    constant input (ratio exactly 1), lognormal noise, and indicator towers.
    """
    m = len(rs)
    if len(ps) != m or len(spaces) != m:
        raise ValueError("rs, ps and spaces must have one entry per component")
    for r, p, sp in zip(rs, ps, spaces):
        if not r < p:
            raise ValueError(f"need r < p componentwise, got r={r}, p={p}")
        if sp.convexity < r - 1e-12:
            raise ValueError(
                f"space {sp!r} declares convexity {sp.convexity} below r={r}"
            )
    prod = product_space(spaces)
    inv_p = sum(0.0 if math.isinf(p) else 1.0 / p for p in ps)
    p_out = math.inf if inv_p == 0 else 1.0 / inv_p
    n = spaces[0].measure.n

    rng = np.random.default_rng(seed)
    best, best_input = 0.0, None
    for trial in range(trials):
        if trial == 0:
            Fs = [np.ones(grid.cell_shape + (n,)) for _ in range(m)]
        elif trial % 2 == 1:
            Fs = [
                rng.lognormal(sigma=1.5, size=grid.cell_shape + (n,))
                for _ in range(m)
            ]
        else:
            Fs = [_tower(rng, grid, n) for _ in range(m)]
        M = lattice_maximal(grid, Fs, rs)
        num = grid_norm(grid, np.asarray(prod.norm(M)), p_out)
        den = 1.0
        for F, p, sp in zip(Fs, ps, spaces):
            den *= grid_norm(grid, np.asarray(sp.norm(F)), p)
        if den == 0:
            continue
        ratio = num / den
        if ratio > best:
            best, best_input = ratio, Fs
    return best, best_input
