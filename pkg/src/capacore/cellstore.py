"""Mergeable, deletion-tolerant cell stores (the Storing contract).

Both backings expose update / merge / finalize / serialize with identical
observable semantics:

* ExactCellStore keeps a keyed map of signed cell counts and point multisets.
  It never FAILs below the cell cap and always FAILs above it (delta = 0),
  at the price of non-sublinear space.
* SketchCellStore is a genuine linear sketch: cells hash into rows of
  buckets holding (signed count, signed keysum, signed checksum) for
  1-sparse recovery, and each bucket nests a second-level decoder that
  recovers the points of cells claiming at most beta members.  Any
  inconsistent recovery yields FAIL.

Serialized blobs are the distributed protocol's wire unit; their byte length
is the communication cost.  Exact blobs carry points only for cells whose
local count is at most beta (the cap-respecting wire shape), which preserves
finalize output through merge because a cell light in the union is light in
every shard.
"""

from __future__ import annotations

import copy
import math
import random
import struct
from collections import Counter

from .common import FAIL, UsageError, derive_seed, is_fail
from .geometry import GridHierarchy, Point
from .hashing import PointEncoder

_MAGIC = b"CSTO"
_VERSION = 1
_EXACT, _SKETCH = 0, 1

_PRIME = (1 << 61) - 1


class CellData:
    """Finalize output: nonempty cells, their counts, points of light cells."""

    def __init__(self, level: int, cells: dict, light_points: dict, beta: float):
        self.level = level
        self.cells = cells              # lattice -> count
        self.light_points = light_points  # lattice -> tuple of points
        self.beta = beta

    def S_points(self):
        out = []
        for lat in sorted(self.light_points):
            out.extend(self.light_points[lat])
        return out

    def canonical(self):
        return (
            self.level,
            tuple(sorted(self.cells.items())),
            tuple((lat, tuple(sorted(pts, key=lambda p: p.sort_key())))
                  for lat, pts in sorted(self.light_points.items())),
        )

    def __eq__(self, other):
        return isinstance(other, CellData) and self.canonical() == other.canonical()


def _check_compatible(a, b):
    if type(a) is not type(b) or a.level != b.level or a.alpha != b.alpha \
            or a.beta != b.beta or a.seed != b.seed:
        raise UsageError("cannot merge stores with different level/caps/seeds")


class ExactCellStore:
    def __init__(self, grid: GridHierarchy, level: int, alpha: float, beta: float,
                 seed: int = 0):
        self.grid = grid
        self.level = level
        self.alpha = alpha
        self.beta = beta
        self.seed = seed
        self.counts: dict = {}
        self.points: dict = {}  # lattice -> Counter(point -> multiplicity)

    def update(self, p: Point, sign: int):
        lat = self.grid.lattice_of(p.coords, self.level)
        c = self.counts.get(lat, 0) + sign
        if c:
            self.counts[lat] = c
        else:
            self.counts.pop(lat, None)
        bucket = self.points.setdefault(lat, Counter())
        bucket[p] += sign
        if not bucket[p]:
            del bucket[p]
        if not bucket:
            del self.points[lat]

    def merge_in(self, other: "ExactCellStore"):
        _check_compatible(self, other)
        for lat, c in other.counts.items():
            nc = self.counts.get(lat, 0) + c
            if nc:
                self.counts[lat] = nc
            else:
                self.counts.pop(lat, None)
        for lat, ctr in other.points.items():
            mine = self.points.setdefault(lat, Counter())
            mine.update(ctr)
            for p in [p for p, m in mine.items() if not m]:
                del mine[p]
            if not mine:
                del self.points[lat]

    def finalize(self, check_alpha: bool = True):
        cells = dict(self.counts)
        if check_alpha and len(cells) > self.alpha:
            return FAIL
        light = {}
        for lat, cnt in cells.items():
            if cnt <= self.beta:
                ctr = self.points.get(lat, Counter())
                pts = []
                for p in sorted(ctr, key=lambda q: q.sort_key()):
                    pts.extend([p] * ctr[p])
                light[lat] = tuple(pts)
        return CellData(self.level, cells, light, self.beta)

    def serialize(self) -> bytes:
        d = self.grid.d
        out = [struct.pack("<4sBBh", _MAGIC, _VERSION, _EXACT, self.level),
               struct.pack("<Hddq", d, self.alpha, self.beta, self.seed)]
        cells = sorted(self.counts.items())
        out.append(struct.pack("<I", len(cells)))
        for lat, cnt in cells:
            out.append(struct.pack(f"<{d}qq", *lat, cnt))
        light = [(lat, ctr) for lat, ctr in sorted(self.points.items())
                 if self.counts.get(lat, 0) <= self.beta]
        out.append(struct.pack("<I", len(light)))
        for lat, ctr in light:
            entries = sorted(ctr.items(), key=lambda kv: kv[0].sort_key())
            out.append(struct.pack(f"<{d}qI", *lat, len(entries)))
            for p, mult in entries:
                out.append(struct.pack(f"<{d}qqq", *p.coords, p.tag, mult))
        return b"".join(out)

    def space_bytes(self):
        d = self.grid.d
        actual = 24 + len(self.counts) * (8 * d + 8)
        actual += sum(len(c) for c in self.points.values()) * (8 * d + 16)
        return actual

    @classmethod
    def deserialize(cls, blob: bytes, grid: GridHierarchy) -> "ExactCellStore":
        view = memoryview(blob)
        magic, ver, backing, level = struct.unpack_from("<4sBBh", view, 0)
        if magic != _MAGIC or ver != _VERSION or backing != _EXACT:
            raise UsageError("not an exact cell-store blob")
        off = 8
        d, alpha, beta, seed = struct.unpack_from("<Hddq", view, off)
        off += struct.calcsize("<Hddq")
        store = cls(grid, level, alpha, beta, seed)
        (ncells,) = struct.unpack_from("<I", view, off)
        off += 4
        for _ in range(ncells):
            vals = struct.unpack_from(f"<{d}qq", view, off)
            off += 8 * (d + 1)
            store.counts[tuple(vals[:d])] = vals[d]
        (nlight,) = struct.unpack_from("<I", view, off)
        off += 4
        for _ in range(nlight):
            vals = struct.unpack_from(f"<{d}qI", view, off)
            off += 8 * d + 4
            lat, npts = tuple(vals[:d]), vals[d]
            ctr = Counter()
            for _ in range(npts):
                pv = struct.unpack_from(f"<{d}qqq", view, off)
                off += 8 * (d + 2)
                ctr[Point(tuple(pv[:d]), pv[d])] = pv[d + 1]
            store.points[lat] = ctr
        return store


class SketchCellStore:
    def __init__(self, grid: GridHierarchy, level: int, alpha: float, beta: float,
                 seed: int, delta: float = 0.01):
        if not 0 < delta < 0.5:
            raise UsageError(f"delta must lie in (0, 0.5), got {delta}")
        self.grid = grid
        self.level = level
        self.alpha = alpha
        self.beta = beta
        self.seed = seed
        self.delta = delta
        # buckets are addressed lazily, so formula-sized caps stay cheap;
        # rows sized so that every cell sees a private bucket w.p. >= 1-delta/3
        self.buckets = max(8, 4 * math.ceil(alpha))
        self.rows = max(4, math.ceil(math.log(3 * max(alpha, 1) / delta, 4)) + 1)
        self.prows = 4
        self.pbuckets = max(8, 4 * math.ceil(beta))
        self._enc = PointEncoder(grid.Delta, grid.d)
        rng = random.Random(derive_seed(seed, f"sketch:{level}"))
        self._h1 = [(rng.randrange(1, _PRIME), rng.randrange(_PRIME))
                    for _ in range(self.rows)]
        self._h2 = (rng.randrange(1, _PRIME), rng.randrange(_PRIME))
        self._p1 = [(rng.randrange(1, _PRIME), rng.randrange(_PRIME))
                    for _ in range(self.prows)]
        self._p2 = (rng.randrange(1, _PRIME), rng.randrange(_PRIME))
        self._off = 1 << (grid.L + 1)
        self._base = 1 << (grid.L + 2)
        self.cell_state: dict = {}   # (row, bucket) -> [count, keysum, checksum]
        self.point_state: dict = {}  # (row, bucket, prow, pbucket) -> [cnt, ks, cs]

    # --- encodings ------------------------------------------------------
    def _cell_code(self, lat) -> int:
        acc = 0
        for t in reversed(lat):
            acc = acc * self._base + (t + self._off)
        return acc + 1  # keep codes nonzero

    def _cell_decode(self, code: int):
        acc = code - 1
        lat = []
        for _ in range(self.grid.d):
            lat.append(acc % self._base - self._off)
            acc //= self._base
        return tuple(lat)

    @staticmethod
    def _pair_hash(ab, x, mod):
        return (ab[0] * x + ab[1]) % _PRIME % mod

    # checksums must be non-linear in the key, otherwise a bucket holding
    # several cells whose keysum divides evenly would pass the purity test
    def _cell_check(self, code):
        return (code * code + self._h2[0] * code + self._h2[1]) % _PRIME

    def _point_check(self, code):
        return (code * code + self._p2[0] * code + self._p2[1]) % _PRIME

    # --- updates ---------------------------------------------------------
    def update(self, p: Point, sign: int):
        lat = self.grid.lattice_of(p.coords, self.level)
        code = self._cell_code(lat)
        pcode = self._enc.encode(p) + 1
        ccheck = self._cell_check(code)
        pcheck = self._point_check(pcode)
        for row in range(self.rows):
            b = self._pair_hash(self._h1[row], code, self.buckets)
            rec = self.cell_state.setdefault((row, b), [0, 0, 0])
            rec[0] += sign
            rec[1] += sign * code
            rec[2] += sign * ccheck
            if rec == [0, 0, 0]:
                del self.cell_state[(row, b)]
            for prow in range(self.prows):
                pb = self._pair_hash(self._p1[prow], pcode, self.pbuckets)
                prec = self.point_state.setdefault((row, b, prow, pb), [0, 0, 0])
                prec[0] += sign
                prec[1] += sign * pcode
                prec[2] += sign * pcheck
                if prec == [0, 0, 0]:
                    del self.point_state[(row, b, prow, pb)]

    def merge_in(self, other: "SketchCellStore"):
        _check_compatible(self, other)
        for key, rec in other.cell_state.items():
            mine = self.cell_state.setdefault(key, [0, 0, 0])
            for i in range(3):
                mine[i] += rec[i]
            if mine == [0, 0, 0]:
                del self.cell_state[key]
        for key, rec in other.point_state.items():
            mine = self.point_state.setdefault(key, [0, 0, 0])
            for i in range(3):
                mine[i] += rec[i]
            if mine == [0, 0, 0]:
                del self.point_state[key]

    # --- recovery --------------------------------------------------------
    def _try_pure(self, rec):
        cnt, ksum, csum = rec
        if cnt <= 0 or ksum % cnt or csum % cnt:
            return None
        code = ksum // cnt
        if code <= 0 or csum != cnt * self._cell_check(code):
            return None
        return code, cnt

    def _decode_cells(self):
        state = {key: list(rec) for key, rec in self.cell_state.items()}
        recovered: dict = {}
        progress = True
        while progress:
            progress = False
            for key in list(state):
                rec = state.get(key)
                if rec is None or rec == [0, 0, 0]:
                    state.pop(key, None)
                    continue
                pure = self._try_pure(rec)
                if pure is None:
                    continue
                code, cnt = pure
                recovered[code] = recovered.get(code, 0) + cnt
                ccheck = self._cell_check(code)
                for row in range(self.rows):
                    b = self._pair_hash(self._h1[row], code, self.buckets)
                    tgt = state.get((row, b))
                    if tgt is None:
                        return None  # inconsistent: peeled cell missing a row
                    tgt[0] -= cnt
                    tgt[1] -= cnt * code
                    tgt[2] -= cnt * ccheck
                    if tgt == [0, 0, 0]:
                        del state[(row, b)]
                progress = True
        if any(rec != [0, 0, 0] for rec in state.values()):
            return None
        return recovered

    def _pure_bucket_for(self, code: int, cnt: int):
        ccheck = self._cell_check(code)
        for row in range(self.rows):
            b = self._pair_hash(self._h1[row], code, self.buckets)
            rec = self.cell_state.get((row, b))
            if rec == [cnt, cnt * code, cnt * ccheck]:
                return row, b
        return None

    def _decode_points(self, row, bucket, expect_cnt):
        state = {}
        for (r, b, prow, pb), rec in self.point_state.items():
            if r == row and b == bucket:
                state[(prow, pb)] = list(rec)
        recovered: dict = {}
        progress = True
        while progress:
            progress = False
            for key in list(state):
                rec = state.get(key)
                if rec is None or rec == [0, 0, 0]:
                    state.pop(key, None)
                    continue
                cnt, ksum, csum = rec
                if cnt <= 0 or ksum % cnt or csum % cnt:
                    continue
                pcode = ksum // cnt
                if pcode <= 0 or pcode - 1 >= self._enc.range \
                        or csum != cnt * self._point_check(pcode):
                    continue
                recovered[pcode] = recovered.get(pcode, 0) + cnt
                pcheck = self._point_check(pcode)
                for prow in range(self.prows):
                    pb = self._pair_hash(self._p1[prow], pcode, self.pbuckets)
                    tgt = state.get((prow, pb))
                    if tgt is None:
                        return None
                    tgt[0] -= cnt
                    tgt[1] -= cnt * pcode
                    tgt[2] -= cnt * pcheck
                    if tgt == [0, 0, 0]:
                        del state[(prow, pb)]
                progress = True
        if any(rec != [0, 0, 0] for rec in state.values()):
            return None
        if sum(recovered.values()) != expect_cnt:
            return None
        return recovered

    def finalize(self, check_alpha: bool = True):
        recovered = self._decode_cells()
        if recovered is None:
            return FAIL
        cells = {}
        light = {}
        for code, cnt in recovered.items():
            if cnt == 0:
                continue
            lat = self._cell_decode(code)
            cells[lat] = cnt
            if cnt <= self.beta:
                spot = self._pure_bucket_for(code, cnt)
                if spot is None:
                    return FAIL
                pts = self._decode_points(*spot, cnt)
                if pts is None:
                    return FAIL
                expanded = []
                for pcode, mult in pts.items():
                    expanded.extend([self._enc.decode(pcode - 1)] * mult)
                expanded.sort(key=lambda p: p.sort_key())
                light[lat] = tuple(expanded)
        return CellData(self.level, cells, light, self.beta)

    @staticmethod
    def _pack_rec(rec) -> bytes:
        out = []
        for v in rec:
            body = v.to_bytes((v.bit_length() + 8) // 8, "big", signed=True)
            out.append(struct.pack("<B", len(body)) + body)
        return b"".join(out)

    @staticmethod
    def _unpack_rec(view, off):
        rec = []
        for _ in range(3):
            (ln,) = struct.unpack_from("<B", view, off)
            off += 1
            rec.append(int.from_bytes(view[off:off + ln], "big", signed=True))
            off += ln
        return rec, off

    def serialize(self) -> bytes:
        out = [struct.pack("<4sBBh", _MAGIC, _VERSION, _SKETCH, self.level),
               struct.pack("<Hdddq", self.grid.d, self.alpha, self.beta,
                           self.delta, self.seed)]
        out.append(struct.pack("<I", len(self.cell_state)))
        for (row, b), rec in sorted(self.cell_state.items()):
            out.append(struct.pack("<Iq", row, b) + self._pack_rec(rec))
        out.append(struct.pack("<I", len(self.point_state)))
        for (row, b, prow, pb), rec in sorted(self.point_state.items()):
            out.append(struct.pack("<IqIq", row, b, prow, pb) + self._pack_rec(rec))
        return b"".join(out)

    @classmethod
    def deserialize(cls, blob: bytes, grid: GridHierarchy) -> "SketchCellStore":
        view = memoryview(blob)
        magic, ver, backing, level = struct.unpack_from("<4sBBh", view, 0)
        if magic != _MAGIC or ver != _VERSION or backing != _SKETCH:
            raise UsageError("not a sketch cell-store blob")
        off = 8
        d, alpha, beta, delta, seed = struct.unpack_from("<Hdddq", view, off)
        off += struct.calcsize("<Hdddq")
        store = cls(grid, level, alpha, beta, seed, delta)
        (ncell,) = struct.unpack_from("<I", view, off)
        off += 4
        for _ in range(ncell):
            row, b = struct.unpack_from("<Iq", view, off)
            off += struct.calcsize("<Iq")
            rec, off = cls._unpack_rec(view, off)
            store.cell_state[(row, b)] = rec
        (npt,) = struct.unpack_from("<I", view, off)
        off += 4
        for _ in range(npt):
            row, b, prow, pb = struct.unpack_from("<IqIq", view, off)
            off += struct.calcsize("<IqIq")
            rec, off = cls._unpack_rec(view, off)
            store.point_state[(row, b, prow, pb)] = rec
        return store

    def space_bytes(self):
        return 40 + (len(self.cell_state) + len(self.point_state)) * 40

    def nominal_bytes(self):
        """Size of the fully materialized sketch (the contract's space budget)."""
        return 40 + self.rows * self.buckets * 24 \
            + self.rows * self.buckets * self.prows * self.pbuckets * 24


def make_store(backing: str, grid: GridHierarchy, level: int, alpha: float,
               beta: float, seed: int, delta: float = 0.01):
    if backing == "exact":
        return ExactCellStore(grid, level, alpha, beta, seed)
    if backing == "sketch":
        return SketchCellStore(grid, level, alpha, beta, seed, delta)
    raise UsageError(f"unknown store backing {backing!r}")


def merge(a, b):
    """Pure merge: observable content equals the concatenated update streams."""
    _check_compatible(a, b)
    out = copy.deepcopy(a)
    out.merge_in(b)
    return out


def deserialize(blob: bytes, grid: GridHierarchy):
    backing = blob[5]
    if backing == _EXACT:
        return ExactCellStore.deserialize(blob, grid)
    if backing == _SKETCH:
        return SketchCellStore.deserialize(blob, grid)
    raise UsageError("unrecognized cell-store blob")


__all__ = [
    "CellData", "ExactCellStore", "SketchCellStore", "make_store", "merge",
    "deserialize", "FAIL", "is_fail",
]
