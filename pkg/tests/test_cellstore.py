import random

import pytest

from capacore import cellstore
from capacore.cellstore import (CellData, ExactCellStore, SketchCellStore,
                                deserialize, make_store, merge)
from capacore.common import UsageError, is_fail
from capacore.geometry import GridHierarchy, Point

from conftest import rand_points

GRID = GridHierarchy.from_seed(21, 8, 2)
LEVEL = 2


def _reference_fold(updates, grid, level, alpha, beta):
    counts = {}
    pts = {}
    for p, sign in updates:
        lat = grid.lattice_of(p.coords, level)
        counts[lat] = counts.get(lat, 0) + sign
        bucket = pts.setdefault(lat, {})
        bucket[p] = bucket.get(p, 0) + sign
    counts = {lat: c for lat, c in counts.items() if c}
    if len(counts) > alpha:
        return None
    light = {}
    for lat, cnt in counts.items():
        if cnt <= beta:
            expanded = []
            for p in sorted(pts[lat], key=lambda q: q.sort_key()):
                expanded.extend([p] * pts[lat][p])
            light[lat] = tuple(expanded)
    return CellData(level, counts, light, beta)


@pytest.mark.parametrize("backing", ["exact", "sketch"])
def test_insert_delete_cancels(backing):
    store = make_store(backing, GRID, LEVEL, 10, 3, seed=1)
    empty = store.finalize()
    store.update(Point((3, 3), 0), +1)
    store.update(Point((3, 3), 0), -1)
    after = store.finalize()
    assert after == empty
    assert after.cells == {}


def test_two_tags_count_two():
    store = ExactCellStore(GRID, LEVEL, 10, 5)
    store.update(Point((3, 3), 0), +1)
    store.update(Point((3, 3), 1), +1)
    data = store.finalize()
    lat = GRID.lattice_of((3, 3), LEVEL)
    assert data.cells[lat] == 2
    assert len(data.light_points[lat]) == 2


@pytest.mark.parametrize("backing", ["exact", "sketch"])
def test_replay_oracle_random_stream(backing, rng):
    n_updates = 10_000 if backing == "exact" else 2_000
    pool = rand_points(rng, 300, 8)
    live = []
    updates = []
    for _ in range(n_updates):
        if live and rng.random() < 0.3:
            p = live.pop(rng.randrange(len(live)))
            updates.append((p, -1))
        else:
            p = rng.choice(pool)
            updates.append((p, +1))
            live.append(p)
    store = make_store(backing, GRID, LEVEL, alpha=200, beta=4, seed=3)
    for p, sign in updates:
        store.update(p, sign)
    got = store.finalize()
    want = _reference_fold(updates, GRID, LEVEL, 200, 4)
    assert not is_fail(got)
    assert got == want


def test_exact_fail_iff_alpha_exceeded():
    store = ExactCellStore(GRID, 3, alpha=1, beta=1)
    store.update(Point((1, 1), 0), +1)
    assert not is_fail(store.finalize())
    store.update(Point((8, 8), 1), +1)
    assert is_fail(store.finalize())
    # removing one cell brings it back under the cap, deterministically
    store.update(Point((8, 8), 1), -1)
    assert not is_fail(store.finalize())


def test_beta_filters_light_cells():
    store = ExactCellStore(GRID, 3, alpha=10, beta=1)
    store.update(Point((1, 1), 0), +1)
    store.update(Point((1, 2), 1), +1)  # same level-3 cell? distinct coords
    store.update(Point((8, 8), 2), +1)
    data = store.finalize()
    for lat, cnt in data.cells.items():
        if cnt <= 1:
            assert lat in data.light_points
        else:
            assert lat not in data.light_points
    assert sum(1 for cnt in data.cells.values() if cnt <= 1) == \
        len(data.light_points)


@pytest.mark.parametrize("backing", ["exact", "sketch"])
def test_merge_identity_commutativity(backing, rng):
    a = make_store(backing, GRID, LEVEL, 50, 3, seed=5)
    b = make_store(backing, GRID, LEVEL, 50, 3, seed=5)
    empty = make_store(backing, GRID, LEVEL, 50, 3, seed=5)
    for p in rand_points(rng, 40, 8):
        a.update(p, +1)
    for p in rand_points(rng, 30, 8):
        b.update(p, +1)
    assert merge(a, empty).finalize() == a.finalize()
    assert merge(a, b).finalize() == merge(b, a).finalize()


@pytest.mark.parametrize("backing", ["exact", "sketch"])
def test_three_way_split_merge(backing, rng):
    updates = []
    for i, p in enumerate(rand_points(rng, 120, 8)):
        updates.append((p, +1))
        if i % 4 == 0:
            updates.append((p, -1))
    single = make_store(backing, GRID, LEVEL, 300, 2, seed=7)
    parts = [make_store(backing, GRID, LEVEL, 300, 2, seed=7) for _ in range(3)]
    for idx, (p, sign) in enumerate(updates):
        single.update(p, sign)
        parts[idx % 3].update(p, sign)
    merged = merge(merge(parts[0], parts[1]), parts[2])
    assert merged.finalize() == single.finalize()
    # associativity on observable content
    other = merge(parts[0], merge(parts[1], parts[2]))
    assert other.finalize() == merged.finalize()


def test_merge_parameter_mismatch():
    a = ExactCellStore(GRID, 2, 10, 1)
    b = ExactCellStore(GRID, 2, 11, 1)
    with pytest.raises(UsageError):
        merge(a, b)
    c = SketchCellStore(GRID, 2, 10, 1, seed=1)
    with pytest.raises(UsageError):
        merge(a, c)


@pytest.mark.parametrize("backing", ["exact", "sketch"])
def test_serialize_roundtrip(backing, rng):
    store = make_store(backing, GRID, LEVEL, 100, 2, seed=9)
    for p in rand_points(rng, 50, 8):
        store.update(p, +1)
    blob = store.serialize()
    assert len(blob) > 0
    back = deserialize(blob, GRID)
    assert back.finalize() == store.finalize()


def test_serialized_wire_preserves_merged_finalize(rng):
    # heavy-local cells ship without points, but cells light in the union
    # are light in every shard, so merged finalize output is unchanged
    pts = rand_points(rng, 90, 8)
    full = ExactCellStore(GRID, LEVEL, 1000, 2)
    shards = [ExactCellStore(GRID, LEVEL, 1000, 2) for _ in range(3)]
    for i, p in enumerate(pts):
        full.update(p, +1)
        shards[i % 3].update(p, +1)
    wire_merged = deserialize(shards[0].serialize(), GRID)
    for s in shards[1:]:
        wire_merged.merge_in(deserialize(s.serialize(), GRID))
    assert wire_merged.finalize() == full.finalize()


def test_sketch_recovery_success_rate(rng):
    delta = 0.05
    failures = 0
    trials = 200
    for seed in range(trials):
        store = SketchCellStore(GRID, 3, alpha=16, beta=3, seed=seed, delta=delta)
        pts = rand_points(rng, 20, 8)
        cells = {}
        for p in pts:
            lat = GRID.lattice_of(p.coords, 3)
            if len(cells) >= 16 and lat not in cells:
                continue
            cells[lat] = True
            store.update(p, +1)
        if is_fail(store.finalize()):
            failures += 1
    assert failures / trials <= delta


def test_sketch_space_meter():
    store = SketchCellStore(GRID, 2, alpha=16, beta=3, seed=1, delta=0.05)
    nominal = store.nominal_bytes()
    for p in rand_points(random.Random(0), 30, 8):
        store.update(p, +1)
    assert 0 < store.space_bytes() <= nominal
    exact = ExactCellStore(GRID, 2, 16, 3)
    exact.update(Point((1, 1), 0), +1)
    assert exact.space_bytes() > 0
