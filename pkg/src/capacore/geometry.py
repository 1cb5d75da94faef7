"""Integer-grid points, ell_r cost powers and randomly shifted grid hierarchies.

Points live on [1, Delta]^d.  Cell arithmetic internally uses 0-based
coordinate offsets so that the single level -1 root cell provably covers the
whole domain for every dyadic shift in [0, Delta); the root lattice is
anchored half a root-cell to the left of the finer grids, which pairs the two
possible level-0 indices {-1, 0} per axis into one parent.
"""

from __future__ import annotations

import math
import random
from typing import Iterable, NamedTuple

from .common import UsageError

SHIFT_FRAC_BITS = 32

NO_TAG = -1


class Point(NamedTuple):
    coords: tuple
    tag: int = NO_TAG

    def sort_key(self):
        return (self.coords, self.tag)


def make_point(coords: Iterable[int], tag: int = NO_TAG) -> Point:
    return Point(tuple(int(c) for c in coords), int(tag))


def alph_less(p: Point, q: Point) -> bool:
    """Alphabetic (lexicographic) order on coordinates, tag as tiebreak."""
    return p.sort_key() < q.sort_key()


def dist_pow(p: Point, q: Point, r: float):
    """(Euclidean distance)**r.  Exact integer for r == 2."""
    if len(p.coords) != len(q.coords):
        raise UsageError("dimension mismatch between points")
    sq = 0
    for a, b in zip(p.coords, q.coords):
        delta = a - b
        sq += delta * delta
    if r == 2:
        return sq
    if r == 1:
        return math.sqrt(sq)
    return sq ** (r / 2.0)


def dist_pow_to_set(p: Point, centers, r: float):
    return min(dist_pow(p, z, r) for z in centers)


class CellId(NamedTuple):
    level: int
    lattice: tuple


def next_pow2(n: int) -> int:
    if n < 1:
        raise UsageError("Delta must be >= 1")
    return 1 << max(0, (n - 1).bit_length())


def sample_shift(seed: int, Delta: int, d: int) -> tuple:
    """d dyadic shift numerators, uniform on [0, Delta) at 32 fractional bits."""
    rng = random.Random(seed)
    span = Delta << SHIFT_FRAC_BITS
    return tuple(rng.randrange(span) for _ in range(d))


class GridHierarchy:
    """Randomly shifted nested grids G_{-1}, G_0, ..., G_L with g_i = Delta/2**i."""

    def __init__(self, Delta: int, d: int, shift_numerators: tuple):
        if Delta < 1 or Delta & (Delta - 1):
            raise UsageError(f"Delta must be a power of two, got {Delta}")
        if len(shift_numerators) != d:
            raise UsageError("shift dimension mismatch")
        span = Delta << SHIFT_FRAC_BITS
        if not all(0 <= v < span for v in shift_numerators):
            raise UsageError("shift numerators out of [0, Delta) range")
        self.Delta = Delta
        self.L = Delta.bit_length() - 1
        self.d = d
        self.shift_num = tuple(shift_numerators)
        # side length of level-i cells, in shift-precision units
        self._side_num = {
            i: (Delta << SHIFT_FRAC_BITS) >> i if i >= 0 else (2 * Delta) << SHIFT_FRAC_BITS
            for i in range(-1, self.L + 1)
        }

    @classmethod
    def from_seed(cls, seed: int, Delta: int, d: int) -> "GridHierarchy":
        return cls(Delta, d, sample_shift(seed, Delta, d))

    def shift_floats(self) -> tuple:
        return tuple(v / (1 << SHIFT_FRAC_BITS) for v in self.shift_num)

    def side(self, level: int) -> float:
        """g_level = Delta / 2**level (2*Delta at the root)."""
        return self._side_num[level] / (1 << SHIFT_FRAC_BITS)

    def lattice_of(self, coords, level: int) -> tuple:
        side = self._side_num[level]
        if level == -1:
            # root anchored at shift - Delta: one cell covers all of [Delta]^d
            off = self.Delta << SHIFT_FRAC_BITS
            return tuple(
                (((c - 1) << SHIFT_FRAC_BITS) - v + off) // side
                for c, v in zip(coords, self.shift_num)
            )
        return tuple(
            (((c - 1) << SHIFT_FRAC_BITS) - v) // side
            for c, v in zip(coords, self.shift_num)
        )

    def cell_of(self, p: Point, level: int) -> CellId:
        if not -1 <= level <= self.L:
            raise UsageError(f"level {level} outside [-1, {self.L}]")
        return CellId(level, self.lattice_of(p.coords, level))

    def parent(self, cell: CellId) -> CellId:
        if cell.level <= -1:
            raise UsageError("root cell has no parent")
        if cell.level == 0:
            return CellId(-1, tuple((t + 1) >> 1 for t in cell.lattice))
        return CellId(cell.level - 1, tuple(t >> 1 for t in cell.lattice))

    def cell_bounds(self, cell: CellId):
        """Per-axis [lo, hi) of the cell in real coordinates (1-based frame)."""
        side = self._side_num[cell.level]
        scale = 1 << SHIFT_FRAC_BITS
        out = []
        anchor = (self.Delta << SHIFT_FRAC_BITS) if cell.level == -1 else 0
        for t, v in zip(cell.lattice, self.shift_num):
            lo = v - anchor + t * side
            out.append((lo / scale + 1, (lo + side) / scale + 1))
        return out


# --- point file format ---------------------------------------------------
# One point per line: d whitespace-separated integers, optional trailing
# "#tag".  Lines starting with '%' are comments.

def parse_point_line(line: str) -> Point | None:
    body = line.strip()
    if not body or body.startswith("%"):
        return None
    tag = NO_TAG
    if "#" in body:
        body, tag_part = body.split("#", 1)
        tag = int(tag_part.strip())
    coords = tuple(int(tok) for tok in body.split())
    return Point(coords, tag)


def format_point(p: Point) -> str:
    base = " ".join(str(c) for c in p.coords)
    if p.tag != NO_TAG:
        base += f" #{p.tag}"
    return base


def read_points(path) -> list:
    pts = []
    with open(path) as fh:
        for line in fh:
            p = parse_point_line(line)
            if p is not None:
                pts.append(p)
    return pts


def write_points(path, points, header_lines=()):
    with open(path, "w") as fh:
        for h in header_lines:
            fh.write(f"% {h}\n")
        for p in points:
            fh.write(format_point(p) + "\n")
