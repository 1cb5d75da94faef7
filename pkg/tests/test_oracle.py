import itertools
import math
import random

import pytest

from capacore import oracle
from capacore.common import OracleCapError, derive_seed
from capacore.coreset import WeightedCoreset, build_auto, dedup_points
from capacore.geometry import GridHierarchy, Point, dist_pow
from capacore.params import PRACTICAL, derive

from conftest import clustered_points, rand_points

INF = float("inf")


def test_uncapacitated_fast_path():
    pts = [Point((1, 1), 0), Point((4, 5), 1), Point((8, 8), 2)]
    Z = [Point((1, 1)), Point((8, 8))]
    expected = 0 + min(dist_pow(pts[1], z, 2) for z in Z) + 0
    assert oracle.exact_cost(pts, Z, INF, 2) == pytest.approx(expected)


def test_four_point_example_cost_two():
    pts = [Point((1, 1), 0), Point((1, 2), 1), Point((5, 5), 2), Point((5, 6), 3)]
    Z = [Point((1, 1)), Point((5, 5))]
    assert oracle.exact_cost(pts, Z, 2, 2) == pytest.approx(2.0)
    assert oracle.brute_partitions(pts, Z, 2, 2) == pytest.approx(2.0)


def test_pigeonhole_infinite():
    pts = [Point((i, 1), i) for i in range(1, 6)]
    Z = [Point((1, 1)), Point((8, 8))]
    assert oracle.exact_cost(pts, Z, 2, 2) == INF
    assert oracle.brute_partitions(pts, Z, 2, 2) == INF


def test_brute_partitions_cap():
    pts = [Point((1, 1), i) for i in range(11)]
    with pytest.raises(OracleCapError):
        oracle.brute_partitions(pts, [Point((1, 1))], 20, 2)


@pytest.mark.parametrize("r", [1, 2])
def test_exact_cost_matches_brute(rng, r):
    for trial in range(60):
        n = rng.randint(2, 8)
        k = rng.choice([2, 3])
        pts = dedup_points(rand_points(rng, n, 8))
        Z = []
        while len(Z) < k:
            z = Point((rng.randint(1, 8), rng.randint(1, 8)))
            if z not in Z:
                Z.append(z)
        for t in range(math.ceil(len(pts) / k), len(pts) + 1):
            got = oracle.exact_cost(pts, Z, t, r)
            want = oracle.brute_partitions(pts, Z, t, r)
            if want == INF:
                assert got == INF
            else:
                assert got == pytest.approx(want, rel=1e-9)


def test_greedy2_agrees_with_flow(rng):
    for trial in range(40):
        pts = dedup_points(rand_points(rng, rng.randint(2, 9), 8))
        Z = [Point((2, 2)), Point((7, 5))]
        t = rng.randint(math.ceil(len(pts) / 2), len(pts) + 1)
        fast = oracle.exact_cost(pts, Z, t, 2, method="greedy2")
        slow = oracle.exact_cost(pts, Z, t, 2, method="flow")
        assert fast == pytest.approx(slow, rel=1e-9) or (fast == slow == INF)


def test_matching_special_case(rng):
    # t=1 and n=k: the optimum is a min-cost perfect matching
    for trial in range(25):
        k = rng.choice([2, 3, 4])
        pts = dedup_points(rand_points(rng, k, 8))
        if len(pts) < k:
            continue
        Z = []
        while len(Z) < k:
            z = Point((rng.randint(1, 8), rng.randint(1, 8)))
            if z not in Z:
                Z.append(z)
        got = oracle.exact_cost(pts, Z, 1, 2, method="flow")
        best = min(
            sum(dist_pow(p, Z[perm[i]], 2) for i, p in enumerate(pts))
            for perm in itertools.permutations(range(k))
        )
        assert got == pytest.approx(best, rel=1e-9)


def test_monotone_in_t(rng):
    pts = dedup_points(rand_points(rng, 8, 8))
    Z = [Point((2, 2)), Point((7, 7))]
    values = [oracle.exact_cost(pts, Z, t, 2)
              for t in range(math.ceil(len(pts) / 2), len(pts) + 2)]
    finite = [v for v in values if v != INF]
    assert all(a >= b - 1e-12 for a, b in zip(finite, finite[1:]))
    assert values[-1] == pytest.approx(oracle.exact_cost(pts, Z, INF, 2))


def test_weighted_cost_is_fractional_lower_bracket(rng):
    pts = dedup_points(rand_points(rng, 6, 8))
    Z = [Point((2, 2)), Point((7, 7))]
    weights = {p: 1.0 + (i % 3) * 0.5 for i, p in enumerate(pts)}
    t = sum(weights.values()) / 2 * 1.2
    relaxed = oracle.exact_cost(pts, Z, t, 2, weights, method="flow")
    rounded = oracle.rounded_cost(pts, Z, t, 2, weights)
    brute = oracle.brute_partitions(pts, Z, t, 2, weights)
    assert relaxed <= brute + 1e-9
    assert relaxed <= rounded + 1e-9


def test_brute_opt_trivia():
    coincident = [Point((3, 3), i) for i in range(4)]
    val, Z = oracle.brute_opt(coincident, 1, 2, 8, 2)
    assert val == 0 and Z == (Point((3, 3)),)
    distinct = [Point((1, 1), 0), Point((8, 8), 1)]
    val, _ = oracle.brute_opt(distinct, 2, 2, 8, 2)
    assert val == 0


def test_brute_opt_two_separated_clusters(rng):
    pts = ([Point((1 + dx, 1 + dy), 10 + dx * 3 + dy) for dx in (0, 1)
            for dy in (0, 1)]
           + [Point((7 + dx, 7 + dy), 20 + dx * 3 + dy) for dx in (0, 1)
              for dy in (0, 1)])
    val, Z = oracle.brute_opt(pts, 2, 2, 8, 2)
    split = min(
        sum(min(dist_pow(p, z, 2) for z in (z1, z2)) for p in pts)
        for z1 in oracle.lattice_points(8, 2)
        for z2 in oracle.lattice_points(8, 2)
        if z1.coords < z2.coords
    )
    assert val == pytest.approx(split)


def test_brute_opt_cap():
    pts = [Point((1, 1), 0)]
    with pytest.raises(OracleCapError):
        oracle.brute_opt(pts, 4, 2, 32, 2)


def _identity_coreset(rng, seed=3, n=25):
    params = derive(k=2, r=2, eps=0.4, eta=0.4, Delta=8, d=2,
                    mode=PRACTICAL, scale=1e-6)
    pts = dedup_points(clustered_points(rng, n, 8, clusters=2, spread=1.0))
    grid = GridHierarchy.from_seed(derive_seed(seed, "shift"), 8, 2)
    core = build_auto(pts, grid, params, seed=seed)
    assert len(core) == len(pts)
    assert all(w == 1.0 for _, w, _, _ in core.entries)
    return pts, core


def test_identity_coreset_zero_violations(rng):
    pts, core = _identity_coreset(rng)
    rng2 = random.Random(5)
    lattice = oracle.lattice_points(8, 2)
    centers = [tuple(rng2.sample(lattice, 2)) for _ in range(25)]
    t_values = list(range(math.ceil(len(pts) / 2), len(pts) + 1))
    report = oracle.sandwich_audit(pts, core, centers, t_values)
    assert report.clean()
    assert report.violation_fraction() == 0.0


def test_corrupted_weights_reported(rng, tmp_path):
    pts, core = _identity_coreset(rng)
    doubled = WeightedCoreset(
        [(p, 2.0 * w, lvl, j) for p, w, lvl, j in core.entries], core.meta)
    rng2 = random.Random(6)
    lattice = oracle.lattice_points(8, 2)
    centers = [tuple(rng2.sample(lattice, 2)) for _ in range(15)]
    t_values = list(range(math.ceil(len(pts) / 2), len(pts) + 1))
    report = oracle.sandwich_audit(pts, doubled, centers, t_values)
    assert report.violations() > 0
    path = tmp_path / "audit.csv"
    report.write_csv(path)
    header, *rows = path.read_text().splitlines()
    assert header.split(",")[:5] == ["z_id", "t", "form", "cost_Q",
                                     "cost_coreset_relaxed"]
    assert any(row.endswith(",1") for row in rows)


def test_cost_query_wrapper():
    pts = [Point((1, 1), 0), Point((4, 5), 1)]
    q = oracle.CostQuery(pts, [Point((1, 1))], INF, 2)
    assert oracle.exact_cost_query(q) == pytest.approx(25.0)
