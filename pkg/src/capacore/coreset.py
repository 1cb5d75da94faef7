"""Per-part sampled coresets with FAIL gates and guess enumeration.

build_for_o runs one guess: mark cells from (estimated) counts, apply the
two FAIL gates (total heavy cells, per-level part mass), keep parts whose
estimated size reaches gamma*T_i(o), and retain each point of a kept
level-i part with probability phi_i at weight exactly 1/phi_i.  build_auto
enumerates o over powers of two and returns the smallest guess that does
not FAIL.  Hash polynomials are seeded per (family, level) only, so every
guess, mode and machine sees identical sampling decisions.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor

from .common import FAIL, UsageError, derive_seed, is_fail
from .estimator import ExactBank, SampleBank
from .geometry import GridHierarchy, Point, format_point, parse_point_line
from .hashing import KWiseHash, PointEncoder
from .params import Params, coreset_size_bound, derive as derive_params
from .partition import PartitionStructure, mark_cells

__all__ = [
    "CoresetMeta", "WeightedCoreset", "OfflineBuilder", "build_for_o",
    "build_auto", "coreset_size_bound", "o_grid", "dedup_points",
    "write_coreset", "read_coreset",
]


class CoresetMeta:
    def __init__(self, params: Params, seed: int, shift_num: tuple, o: float,
                 o_attempts: tuple, structure: PartitionStructure,
                 part_tau: dict, phi: dict, exact_counts: bool):
        self.params = params
        self.seed = seed
        self.shift_num = shift_num
        self.o = o
        self.o_attempts = tuple(o_attempts)
        self.structure = structure
        self.part_tau = dict(part_tau)  # qualifying (i, j) -> estimated size
        self.phi = dict(phi)            # level -> sampling rate used
        self.exact_counts = exact_counts


class WeightedCoreset:
    """Sampled points with weights plus the metadata needed for assignment."""

    def __init__(self, entries, meta: CoresetMeta):
        # entries: (point, weight, level, part_j), canonically ordered
        self.entries = sorted(entries, key=lambda e: (e[2], e[3], e[0].sort_key()))
        self.meta = meta

    def points(self):
        return [e[0] for e in self.entries]

    def weights(self):
        return {e[0]: e[1] for e in self.entries}

    def total_weight(self) -> float:
        return sum(e[1] for e in self.entries)

    def by_level(self) -> dict:
        out: dict = {}
        for p, w, lvl, j in self.entries:
            out.setdefault(lvl, []).append((p, w, j))
        return out

    def canonical(self):
        return (
            tuple((p.coords, p.tag, w, lvl, j) for p, w, lvl, j in self.entries),
            self.meta.o,
            self.meta.shift_num,
        )

    def __eq__(self, other):
        return isinstance(other, WeightedCoreset) and self.canonical() == other.canonical()

    def __len__(self):
        return len(self.entries)


def dedup_points(points) -> list:
    return sorted(set(points), key=lambda p: p.sort_key())


def o_grid(n: int, params: Params) -> list:
    limit = params.o_grid_limit(n)
    out = []
    o = 1
    while o <= limit:
        out.append(o)
        o *= 2
    return out


class OfflineBuilder:
    """Shared per-instance state reused across o guesses."""

    def __init__(self, points, grid: GridHierarchy, params: Params, seed: int,
                 exact_counts: bool = True):
        self.points = dedup_points(points)
        self.grid = grid
        self.params = params
        self.seed = seed
        self.exact_counts = exact_counts
        self._encoder = PointEncoder(grid.Delta, grid.d)
        self._exact_bank = ExactBank(self.points, grid) if exact_counts else None
        # per-point lattice paths, levels -1..L, computed once
        self._paths = {
            p: tuple(grid.lattice_of(p.coords, lvl) for lvl in range(-1, grid.L + 1))
            for p in self.points
        }
        self._hhat_fields: dict = {}

    def _bank(self, o: float):
        if self.exact_counts:
            return self._exact_bank
        return SampleBank.from_params(self.points, self.grid, self.params, o,
                                      self.seed)

    def _part_of(self, p: Point, structure: PartitionStructure):
        path = self._paths[p]
        heavy = structure.heavy
        if path[0] not in heavy.get(-1, ()):
            return None
        prev_level, prev = -1, path[0]
        for i in range(0, self.grid.L + 1):
            lat = path[i + 1]
            if i == self.grid.L or lat not in heavy.get(i, ()):
                return (i, structure.heavy_index[prev_level][prev])
            prev_level, prev = i, lat
        raise AssertionError("unreachable")

    def _hhat_bit(self, level: int, prob: float):
        """Membership bits for all points under hhat_level at the given rate."""
        if prob >= 1.0:
            return None  # means "all true"
        hash_ = KWiseHash(derive_seed(self.seed, f"hhat:{level}"),
                          self.params.hash_lambda(), prob, self._encoder)
        if level not in self._hhat_fields:
            self._hhat_fields[level] = dict(zip(self.points,
                                                hash_.field_values(self.points)))
        t = hash_.threshold
        fields = self._hhat_fields[level]
        return {p: fields[p] < t for p in self.points}

    def build_for_o(self, o: float):
        params, grid = self.params, self.grid
        bank = self._bank(o)
        structure = mark_cells(bank.counts_for_marking(), params, o, grid)
        if structure.heavy_count() > params.heavy_cell_cap():
            return FAIL
        tau_union, tau_part = bank.part_estimates(structure)
        for i in range(0, grid.L + 1):
            if tau_union[i] > params.part_sum_cap(i, o):
                return FAIL
        qualifying = {
            part: tau for part, tau in tau_part.items()
            if tau >= params.gamma * params.T(part[0], o)
        }
        phi = {lvl: params.phi(lvl, o) for lvl in range(0, grid.L + 1)}
        bits = {lvl: self._hhat_bit(lvl, phi[lvl]) for lvl in range(0, grid.L + 1)}
        entries = []
        for p in self.points:
            part = self._part_of(p, structure)
            if part is None or part not in qualifying:
                continue
            lvl, j = part
            b = bits[lvl]
            if b is None or b[p]:
                entries.append((p, 1.0 / phi[lvl], lvl, j))
        meta = CoresetMeta(params, self.seed, grid.shift_num, o, (o,),
                           structure, qualifying, phi, self.exact_counts)
        return WeightedCoreset(entries, meta)

    def build_auto(self, workers: int = 1):
        if not self.points:
            raise UsageError("build_auto requires a nonempty point set")
        grid_os = o_grid(len(self.points), self.params)
        attempts = []
        if workers <= 1:
            for o in grid_os:
                attempts.append(o)
                result = self.build_for_o(o)
                if not is_fail(result):
                    result.meta.o_attempts = tuple(attempts)
                    return result
        else:
            with ThreadPoolExecutor(max_workers=workers) as pool:
                for base in range(0, len(grid_os), workers):
                    chunk = grid_os[base:base + workers]
                    results = list(pool.map(self.build_for_o, chunk))
                    for o, result in zip(chunk, results):
                        attempts.append(o)
                        if not is_fail(result):
                            result.meta.o_attempts = tuple(attempts)
                            return result
        raise RuntimeError(
            f"all {len(attempts)} o-guesses returned FAIL "
            f"(n={len(self.points)}, last o={attempts[-1] if attempts else None}); "
            "this indicates caps inconsistent with the instance")


def build_for_o(points, grid: GridHierarchy, params: Params, o: float, seed: int,
                exact_counts: bool = True):
    return OfflineBuilder(points, grid, params, seed, exact_counts).build_for_o(o)


def build_auto(points, grid: GridHierarchy, params: Params, seed: int,
               exact_counts: bool = True, workers: int = 1) -> WeightedCoreset:
    return OfflineBuilder(points, grid, params, seed, exact_counts).build_auto(workers)


# --- coreset file format ---------------------------------------------------
# Header lines "% key=value" carrying the full provenance, then one line per
# point: "w x1 ... xd #tag".  Decimal renderings are repr() and round-trip.

def write_coreset(path, coreset: WeightedCoreset):
    meta = coreset.meta
    lines = [
        "format=capacore-coreset-v1",
        f"params: {meta.params.serialize()}",
        f"seed={meta.seed}",
        "shift=" + ",".join(map(str, meta.shift_num)),
        f"o={meta.o!r}",
        "o_attempts=" + ",".join(repr(o) for o in meta.o_attempts),
        f"exact_counts={int(meta.exact_counts)}",
        f"gamma={meta.params.gamma!r}",
        f"xi={meta.params.xi!r}",
    ]
    for lvl in sorted(meta.phi):
        lines.append(f"phi.{lvl}={meta.phi[lvl]!r}")
    for (i, j), tau in sorted(meta.part_tau.items()):
        lines.append(f"part.{i}.{j}={tau!r}")
    for lvl in sorted(meta.structure.heavy):
        cells = meta.structure.heavy[lvl]
        if cells:
            body = ";".join(",".join(map(str, lat)) for lat in sorted(cells))
            lines.append(f"heavy.{lvl}={body}")
    with open(path, "w") as fh:
        for line in lines:
            fh.write(f"% {line}\n")
        for p, w, lvl, j in coreset.entries:
            fh.write(f"% entrymeta={lvl},{j}\n")
            fh.write(f"{w!r} {format_point(p)}\n")


def read_coreset(path, grid: GridHierarchy | None = None) -> WeightedCoreset:
    header: dict = {}
    entries = []
    pending_meta = None
    with open(path) as fh:
        for raw in fh:
            line = raw.strip()
            if not line:
                continue
            if line.startswith("%"):
                body = line[1:].strip()
                if body.startswith("params:"):
                    header["params"] = body.partition(":")[2].strip()
                elif "=" in body:
                    key, _, val = body.partition("=")
                    if key == "entrymeta":
                        pending_meta = tuple(int(x) for x in val.split(","))
                    else:
                        header[key] = val
                continue
            w_str, _, rest = line.partition(" ")
            point = parse_point_line(rest)
            lvl, j = pending_meta
            pending_meta = None
            entries.append((point, float(w_str), lvl, j))

    params = _parse_params_header(header["params"])
    shift = tuple(int(x) for x in header["shift"].split(","))
    if grid is None:
        grid = GridHierarchy(params.Delta, params.d, shift)
    heavy = {}
    for key, val in header.items():
        if key.startswith("heavy."):
            lvl = int(key.split(".", 1)[1])
            heavy[lvl] = {tuple(int(x) for x in cell.split(","))
                          for cell in val.split(";")}
    for lvl in range(-1, grid.L):
        heavy.setdefault(lvl, set())
    structure = PartitionStructure(grid, heavy)
    part_tau = {}
    phi = {}
    for key, val in header.items():
        if key.startswith("part."):
            _, i, j = key.split(".")
            part_tau[(int(i), int(j))] = float(val)
        elif key.startswith("phi."):
            phi[int(key.split(".", 1)[1])] = float(val)
    meta = CoresetMeta(
        params, int(header["seed"]), shift, float(header["o"]),
        tuple(float(x) for x in header["o_attempts"].split(",")),
        structure, part_tau, phi, bool(int(header["exact_counts"])),
    )
    return WeightedCoreset(entries, meta)


def _parse_params_header(text: str) -> Params:
    kv = dict(tok.split("=", 1) for tok in text.split())
    return derive_params(k=int(kv["k"]), r=float(kv["r"]), eps=float(kv["eps"]),
                         eta=float(kv["eta"]), Delta=int(kv["Delta"]), d=int(kv["d"]),
                         mode=kv["mode"], scale=float(kv["scale"]))
