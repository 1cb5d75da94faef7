import math
import statistics

import pytest

from capacore.common import UsageError
from capacore.geometry import (GridHierarchy, Point, dist_pow, format_point,
                               next_pow2, parse_point_line, read_points,
                               sample_shift, write_points)

from conftest import rand_points


def test_dist_pow_345_triangle():
    assert dist_pow(Point((1, 1)), Point((4, 5)), 2) == 25
    assert dist_pow(Point((1, 1)), Point((4, 5)), 1) == 5
    assert dist_pow(Point((1, 1)), Point((1, 1)), 7) == 0


def test_dist_pow_exact_int_for_r2():
    assert isinstance(dist_pow(Point((1, 2)), Point((7, 3)), 2), int)


def test_dist_pow_dimension_mismatch():
    with pytest.raises(UsageError):
        dist_pow(Point((1, 1)), Point((1, 1, 1)), 2)


def test_cell_of_spec_examples():
    grid = GridHierarchy(8, 2, (0, 0))
    assert grid.cell_of(Point((3, 7)), 0).lattice == (0, 0)
    assert grid.cell_of(Point((3, 7)), 2).lattice == (1, 3)


def test_root_cell_identical_for_all_points():
    for seed in range(40):
        grid = GridHierarchy.from_seed(seed, 8, 2)
        roots = {grid.cell_of(Point((x, y)), -1)
                 for x in range(1, 9) for y in range(1, 9)}
        assert len(roots) == 1
    # boundary shift: zero on every axis
    grid = GridHierarchy(8, 2, (0, 0))
    assert len({grid.cell_of(Point((x, y)), -1)
                for x in range(1, 9) for y in range(1, 9)}) == 1


def test_containment_chain_via_corners(rng):
    for seed in range(10):
        grid = GridHierarchy.from_seed(seed, 16, 2)
        for p in rand_points(rng, 30, 16):
            for level in range(0, grid.L + 1):
                child = grid.cell_of(p, level)
                parent = grid.cell_of(p, level - 1)
                assert grid.parent(child) == parent
                cb = grid.cell_bounds(child)
                pb = grid.cell_bounds(parent)
                for (clo, chi), (plo, phi) in zip(cb, pb):
                    assert plo <= clo and chi <= phi


def test_cell_bounds_contain_point(rng):
    grid = GridHierarchy.from_seed(3, 8, 2)
    for p in rand_points(rng, 50, 8):
        for level in range(-1, grid.L + 1):
            bounds = grid.cell_bounds(grid.cell_of(p, level))
            for c, (lo, hi) in zip(p.coords, bounds):
                assert lo <= c < hi


def test_same_cell_diameter(rng):
    grid = GridHierarchy.from_seed(9, 16, 2)
    pts = rand_points(rng, 120, 16)
    for level in range(0, grid.L + 1):
        cells = {}
        for p in pts:
            cells.setdefault(grid.cell_of(p, level), []).append(p)
        bound = (math.sqrt(grid.d) * grid.side(level)) ** 2
        for group in cells.values():
            for a in group:
                for b in group:
                    assert dist_pow(a, b, 2) <= bound


@pytest.mark.parametrize("r", [1, 1.5, 2, 3])
def test_relaxed_triangle_inequality(rng, r):
    for _ in range(200):
        x, y, z = rand_points(rng, 3, 32)
        lhs = dist_pow(x, z, r)
        rhs = 2 ** (r - 1) * (dist_pow(x, y, r) + dist_pow(y, z, r))
        assert lhs <= rhs * (1 + 1e-12)


def test_sample_shift_deterministic_and_in_range():
    a = sample_shift(42, 8, 2)
    b = sample_shift(42, 8, 2)
    assert a == b
    assert all(0 <= v < (8 << 32) for v in a)
    assert sample_shift(43, 8, 2) != a


def test_sample_shift_mean_uniform():
    Delta = 8
    vals = []
    for seed in range(2500):
        vals.extend(v / (1 << 32) for v in sample_shift(seed, Delta, 2))
    mean = statistics.fmean(vals)
    stderr = Delta / math.sqrt(12 * len(vals))
    assert abs(mean - Delta / 2) <= 5 * stderr


def test_grid_validation():
    with pytest.raises(UsageError):
        GridHierarchy(6, 2, (0, 0))
    with pytest.raises(UsageError):
        GridHierarchy(8, 2, (0,))
    with pytest.raises(UsageError):
        GridHierarchy(8, 1, ((8 << 32),))
    grid = GridHierarchy(8, 2, (0, 0))
    with pytest.raises(UsageError):
        grid.cell_of(Point((1, 1)), 4)


def test_next_pow2():
    assert next_pow2(8) == 8
    assert next_pow2(9) == 16
    assert next_pow2(1) == 1
    with pytest.raises(UsageError):
        next_pow2(0)


def test_point_file_roundtrip(tmp_path):
    pts = [Point((1, 2), 7), Point((8, 8)), Point((3, 3), 0)]
    path = tmp_path / "pts.txt"
    write_points(path, pts, ["a comment"])
    assert read_points(path) == pts


def test_parse_point_line():
    assert parse_point_line("% comment") is None
    assert parse_point_line("  ") is None
    assert parse_point_line("3 7 #12") == Point((3, 7), 12)
    assert parse_point_line("3 7") == Point((3, 7), -1)
    assert format_point(Point((3, 7), 12)) == "3 7 #12"
    assert format_point(Point((3, 7))) == "3 7"


def test_point_total_order():
    pts = [Point((2, 1), 5), Point((1, 9)), Point((2, 1), 1), Point((2, 1))]
    ordered = sorted(pts, key=lambda p: p.sort_key())
    assert ordered[0] == Point((1, 9))
    assert ordered[1:] == [Point((2, 1)), Point((2, 1), 1), Point((2, 1), 5)]
