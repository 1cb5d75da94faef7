"""Heavy/crucial cell marking and the induced parts Q_{i,j}.

A cell is heavy when its (estimated) count reaches T_i(o) and every ancestor
is heavy; crucial cells are the non-heavy children of heavy cells (every
bottom-level cell under a heavy parent is crucial).  A point's part is read
off its root-to-leaf cell path: the first non-heavy level i together with the
rank j of its level-(i-1) parent among that level's heavy cells.
"""

from __future__ import annotations

from .geometry import CellId, GridHierarchy, Point


class PartitionStructure:
    def __init__(self, grid: GridHierarchy, heavy: dict):
        self.grid = grid
        self.L = grid.L
        # heavy: level -> set of lattice tuples, levels -1 .. L-1
        self.heavy = {lvl: frozenset(cells) for lvl, cells in heavy.items()}
        self.heavy_index = {
            lvl: {lat: j for j, lat in enumerate(sorted(cells))}
            for lvl, cells in self.heavy.items()
        }

    def heavy_count(self) -> int:
        return sum(len(c) for c in self.heavy.values())

    def s(self, i: int) -> int:
        """Number of heavy cells in G_{i-1} (the number of level-i parts)."""
        return len(self.heavy.get(i - 1, ()))

    def is_heavy(self, cell: CellId) -> bool:
        return cell.lattice in self.heavy.get(cell.level, ())

    def is_crucial(self, cell: CellId) -> bool:
        if cell.level < 0 or self.is_heavy(cell):
            return False
        parent = self.grid.parent(cell)
        return parent.lattice in self.heavy.get(parent.level, ())

    def part_of_cell(self, cell: CellId):
        """Part index (i, j) of a crucial cell, else None."""
        if not self.is_crucial(cell):
            return None
        parent = self.grid.parent(cell)
        return (cell.level, self.heavy_index[parent.level][parent.lattice])

    def part_of(self, p: Point):
        """Part (i, j) owning p, or None when p's root cell is not heavy."""
        grid = self.grid
        prev = grid.cell_of(p, -1)
        if prev.lattice not in self.heavy.get(-1, ()):
            return None
        for i in range(0, self.L + 1):
            cell = grid.cell_of(p, i)
            if i == self.L or cell.lattice not in self.heavy.get(i, ()):
                return (i, self.heavy_index[prev.level][prev.lattice])
            prev = cell
        raise AssertionError("unreachable: level-L cells are never heavy")

    def dump_lines(self, counts: dict | None = None):
        """Debug dump: one line per marked cell, 'level lattice... H|C part'."""
        lines = []
        for lvl in sorted(self.heavy):
            for lat in sorted(self.heavy[lvl]):
                j = self.heavy_index[lvl][lat]
                lines.append(f"{lvl} {' '.join(map(str, lat))} H {j}")
        if counts:
            for lvl in sorted(counts):
                if lvl < 0:
                    continue
                for lat in sorted(counts[lvl]):
                    part = self.part_of_cell(CellId(lvl, lat))
                    if part is not None:
                        lines.append(
                            f"{lvl} {' '.join(map(str, lat))} C {part[0]}:{part[1]}")
        return lines


def mark_cells(counts: dict, params, o: float, grid: GridHierarchy) -> PartitionStructure:
    """Top-down marking from per-level cell-count estimates.

    counts maps level -> {lattice: estimate} and must cover every nonempty
    cell for levels -1 .. L-1 (missing cells default to estimate 0).
    """
    L = grid.L
    heavy: dict = {lvl: set() for lvl in range(-1, L)}
    root_counts = counts.get(-1, {})
    T = params.T(-1, o)
    for lat, est in root_counts.items():
        if est >= T:
            heavy[-1].add(lat)
    for i in range(0, L):
        T = params.T(i, o)
        parents = heavy[i - 1]
        if not parents:
            continue
        for lat, est in counts.get(i, {}).items():
            if est >= T:
                cell = CellId(i, lat)
                if grid.parent(cell).lattice in parents:
                    heavy[i].add(lat)
    return PartitionStructure(grid, heavy)


def exact_counts(points, grid: GridHierarchy, levels=None) -> dict:
    """Exact per-level cell counts of a point multiset."""
    if levels is None:
        levels = range(-1, grid.L + 1)
    out: dict = {}
    for lvl in levels:
        counter: dict = {}
        for p in points:
            lat = grid.lattice_of(p.coords, lvl)
            counter[lat] = counter.get(lat, 0) + 1
        out[lvl] = counter
    return out
