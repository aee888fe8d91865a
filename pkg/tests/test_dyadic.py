"""Dyadic substrate: grids, covering, averages, serialization."""

import json
import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from sparsedom.dyadic import (
    Cube,
    Grid,
    average,
    build_grid,
    cover_cube,
    function_from_csv,
    function_from_json,
    function_to_csv,
    function_to_json,
    grid_norm,
    level_averages,
    shifted_grids,
)

import oracles


# ---------------------------------------------------------------------------
# grid construction
# ---------------------------------------------------------------------------

def test_grid_counts():
    assert build_grid(1, 0, 0).ncubes() == 1
    assert build_grid(1, 2, 0).ncubes() == 7  # 1 + 2 + 4
    assert build_grid(2, 1, 0).ncubes() == 5  # 1 + 4


def test_grid_validation():
    with pytest.raises(ValueError):
        build_grid(3, 2, 0)
    with pytest.raises(ValueError):
        build_grid(1, 13, 0)
    with pytest.raises(ValueError):
        build_grid(2, 7, 0)
    with pytest.raises(ValueError):
        build_grid(1, 2, 3)
    with pytest.raises(ValueError):
        build_grid(2, 2, 9)


def test_cells_partition_unit_interval():
    grid = build_grid(1, 3, 0)
    cells = grid.level_cubes(3)
    endpoints = sorted(c.support_exact()[0] for c in cells)
    assert endpoints[0][0] == 0
    assert endpoints[-1][1] == 1
    for (lo1, hi1), (lo2, hi2) in zip(endpoints, endpoints[1:]):
        assert hi1 == lo2


@pytest.mark.parametrize("d", [1, 2])
@pytest.mark.parametrize("alpha_axis", [0, 1, 2])
def test_children_tile_parent_exactly(d, alpha_axis):
    # exact rational check that the 2^d index-children tile each parent
    alpha = alpha_axis * sum(3**i for i in range(d)) if alpha_axis else 0
    grid = build_grid(d, 3 if d == 1 else 2, alpha)
    for cube in grid.cubes():
        if cube.level == grid.depth:
            continue
        kids = grid.children(cube)
        # full index-space children, ignoring the unit-cube clipping
        total = sum(Fraction(1, (2 ** (cube.level + 1)) ** d) for _ in kids)
        clipped = Fraction(1, (2**cube.level) ** d) - total
        assert 0 <= clipped <= Fraction(1, (2**cube.level) ** d)
        for kid in kids:
            assert grid.parent(kid) == cube
            for (plo, phi), (klo, khi) in zip(
                cube.support_exact(), kid.support_exact()
            ):
                assert plo <= klo and khi <= phi


def test_shifted_grid_cube_meets_domain():
    for grid in shifted_grids(1, 4):
        for cube in grid.cubes():
            (lo, hi), = cube.support_exact()
            assert lo < 1 and hi > 0


# ---------------------------------------------------------------------------
# three-lattice covering
# ---------------------------------------------------------------------------

def test_cover_dyadic_identity():
    # a standard dyadic cube is covered by itself at ratio 1
    alpha, cube = cover_cube([Fraction(1, 4)], Fraction(1, 4))
    assert alpha == 0
    assert cube == Cube(2, (1,), 0)
    alpha, cube = cover_cube([Fraction(1, 2), Fraction(1, 2)], Fraction(1, 2))
    assert alpha == 0
    assert cube == Cube(1, (1, 1), 0)


def test_cover_half_interval_example():
    # [1/4, 3/4) needs a container of length <= 3 * (1/2)
    alpha, cube = cover_cube([Fraction(1, 4)], Fraction(1, 2))
    assert cube.contains([Fraction(1, 4)], Fraction(1, 2))
    assert cube.side <= 1.5
    best = oracles.minimal_container([Fraction(1, 4)], Fraction(1, 2), 1, 4)
    assert best is not None and best.level == cube.level


def test_cover_validation():
    with pytest.raises(ValueError):
        cover_cube([Fraction(1, 2)], 0)
    with pytest.raises(ValueError):
        cover_cube([Fraction(3, 4)], Fraction(1, 2))
    with pytest.raises(ValueError):
        cover_cube([Fraction(1, 2), Fraction(1, 2), Fraction(0)], Fraction(1, 4))


@pytest.mark.parametrize("d", [1, 2])
def test_cover_random_suite(d):
    # 100 random representable cubes per dimension, ratio never above 6^d
    rng = np.random.default_rng(7)
    den = 1 << 10
    for _ in range(100):
        side = Fraction(int(rng.integers(1, den)), den)
        lower = [
            Fraction(int(rng.integers(0, int((1 - side) * den) + 1)), den)
            for _ in range(d)
        ]
        alpha, cube = cover_cube(lower, side)
        assert cube.contains(lower, side)
        ratio = (Fraction(1, 2**cube.level) / side) ** d
        assert ratio <= 6**d
        assert 0 <= alpha < 3**d


def test_cover_matches_enumeration_oracle_small():
    # for a sweep of d=1 intervals the chosen level is within one of optimal
    den = 48
    for num in range(1, den // 3):
        side = Fraction(num, den)
        for start in range(0, den - num, 5):
            lower = [Fraction(start, den)]
            _, cube = cover_cube(lower, side)
            best = oracles.minimal_container(lower, side, 1, 8)
            assert best is not None
            assert cube.level <= best.level  # container cannot beat the oracle
            assert Fraction(1, 2**cube.level) < 6 * side


# ---------------------------------------------------------------------------
# averages
# ---------------------------------------------------------------------------

def test_average_constant():
    grid = build_grid(1, 3, 0)
    f = np.full(grid.cell_shape, 2.5)
    for r in (0.5, 1, 2, math.inf):
        assert average(grid, f, r, grid.root) == pytest.approx(2.5)


def test_average_half_indicator():
    grid = build_grid(1, 1, 0)
    f = np.array([1.0, 0.0])
    assert average(grid, f, 1, grid.root) == pytest.approx(0.5, abs=1e-9)
    assert average(grid, f, 2, grid.root) == pytest.approx(0.5**0.5, abs=1e-9)
    assert average(grid, f, math.inf, grid.root) == 1.0


def test_average_shifted_cube_against_direct_sum():
    grid = build_grid(1, 4, 0)
    rng = np.random.default_rng(3)
    f = rng.random(grid.cell_shape)
    shifted = build_grid(1, 4, 1)
    for cube in shifted.level_cubes(2):
        lo, hi = cube.support()[0]
        clo, chi = max(lo, 0.0), min(hi, 1.0)
        if chi <= clo:
            continue
        h = grid.cell_measure
        total, acc = 0.0, 0.0
        for i, v in enumerate(f):
            ov = max(0.0, min(chi, (i + 1) * h) - max(clo, i * h))
            total += ov
            acc += ov * v**2
        expected = (acc / total) ** 0.5
        assert average(grid, f, 2, cube) == pytest.approx(expected, abs=1e-12)


def test_average_empty_intersection_error():
    grid = build_grid(1, 2, 0)
    f = np.ones(grid.cell_shape)
    # level-1 shifted cube [-1/6, 1/3+...) exists; build one fully outside
    outside = Cube(1, (2,), 1)  # [1 - 1/6, 1.5 - 1/6) except clipped
    (lo, hi), = outside.support()
    if lo >= 1.0:
        with pytest.raises(ValueError):
            average(grid, f, 1, outside)
    else:
        assert average(grid, f, 1, outside) == pytest.approx(1.0)


def test_average_bad_exponent():
    grid = build_grid(1, 1, 0)
    f = np.ones(grid.cell_shape)
    with pytest.raises(ValueError):
        average(grid, f, 0, grid.root)
    with pytest.raises(ValueError):
        average(grid, f, -1, grid.root)


@settings(max_examples=60, deadline=None)
@given(
    st.lists(st.floats(0, 8, allow_nan=False), min_size=8, max_size=8),
    st.sampled_from([0.5, 1.0, 1.5, 2.0, 3.0]),
    st.sampled_from([0.5, 1.0, 1.5, 2.0, 3.0]),
)
def test_average_monotone_in_r(vals, r1, r2):
    if r1 > r2:
        r1, r2 = r2, r1
    grid = build_grid(1, 3, 0)
    f = np.array(vals)
    for cube in grid.cubes():
        a1 = average(grid, f, r1, cube)
        a2 = average(grid, f, r2, cube)
        assert a1 <= a2 + 1e-9, f"r-monotonicity broke on {cube}"


@settings(max_examples=60, deadline=None)
@given(
    st.lists(st.floats(0, 8, allow_nan=False), min_size=8, max_size=8),
    st.sampled_from([0.5, 1.0, 2.0]),
)
def test_average_nesting_identity(vals, r):
    # average(f 1_Q, r, P)^r |P| == average(f, r, Q)^r |Q| for Q inside P
    grid = build_grid(1, 3, 0)
    f = np.array(vals)
    P = grid.root
    for Q in grid.cubes():
        restricted = np.zeros_like(f)
        sl = grid.cube_slices(Q)
        restricted[sl] = f[sl]
        lhs = average(grid, restricted, r, P) ** r * P.measure
        rhs = average(grid, f, r, Q) ** r * Q.measure
        assert lhs == pytest.approx(rhs, abs=1e-9)


def test_level_averages_match_per_cube():
    grid = build_grid(2, 3, 0)
    rng = np.random.default_rng(11)
    f = rng.random(grid.cell_shape)
    for r in (0.5, 1.0, 2.0, math.inf):
        byk = level_averages(grid, f, r)
        for cube in grid.cubes():
            assert byk[cube.level][cube.index] == pytest.approx(
                average(grid, f, r, cube), abs=1e-12
            )


def test_level_averages_trailing_axes():
    grid = build_grid(1, 2, 0)
    rng = np.random.default_rng(5)
    F = rng.random(grid.cell_shape + (3,))
    byk = level_averages(grid, F, 2.0)
    for atom in range(3):
        single = level_averages(grid, F[..., atom], 2.0)
        for k in byk:
            assert np.allclose(byk[k][..., atom], single[k])


def test_grid_norm_basics():
    grid = build_grid(1, 2, 0)
    assert grid_norm(grid, np.ones(grid.cell_shape), 1) == pytest.approx(1.0)
    f = np.array([4.0, 0.0, 0.0, 0.0])
    assert grid_norm(grid, f, 1) == pytest.approx(1.0)
    assert grid_norm(grid, f, 2) == pytest.approx((16 / 4) ** 0.5)
    assert grid_norm(grid, f, math.inf) == 4.0
    w = np.array([0.5, 1.0, 1.0, 1.0])
    assert grid_norm(grid, f, 1, weight=w) == pytest.approx(0.5)


# ---------------------------------------------------------------------------
# serialization
# ---------------------------------------------------------------------------

def test_json_round_trip_exact():
    grid = build_grid(2, 2, 0)
    rng = np.random.default_rng(13)
    f = rng.random(grid.cell_shape)
    text = function_to_json(grid, f)
    grid2, f2 = function_from_json(text)
    assert (grid2.d, grid2.depth) == (2, 2)
    assert np.array_equal(f, f2)
    payload = json.loads(text)
    assert set(payload) == {"d", "L", "values"}


def test_csv_round_trip_exact(tmp_path):
    grid = build_grid(1, 4, 0)
    rng = np.random.default_rng(17)
    f = rng.random(grid.cell_shape)
    path = tmp_path / "f.csv"
    function_to_csv(grid, f, path)
    f2 = function_from_csv(path, grid)
    assert np.array_equal(f, f2)
