"""Capacitated assignment construction from a coreset.

Pipeline: a fractional optimum of the relaxed transportation problem
(min-cost flow over scaled 64-bit integers), cycle elimination down to at
most k-1 split points, rounding of the split points to their nearest
centers, per-level canonicalization by switching tied pairs into alphabetic
order, half-space extraction, and finally the transferred assignment that
extends the canonicalized coreset assignment to the full input.
"""

from __future__ import annotations

import heapq
from dataclasses import dataclass, field

from .common import INFEASIBLE, UsageError, is_infeasible
from .geometry import Point, alph_less, dist_pow

FLOW_SCALE = 1 << 20  # weight/cost quantization inside the flow solver


class MinCostFlow:
    """Successive shortest augmenting paths with node potentials."""

    def __init__(self, n: int):
        self.n = n
        self.graph = [[] for _ in range(n)]

    def add_edge(self, u: int, v: int, cap: int, cost: int):
        self.graph[u].append([v, cap, cost, len(self.graph[v]), cap])
        self.graph[v].append([u, 0, -cost, len(self.graph[u]) - 1, 0])
        return (u, len(self.graph[u]) - 1)

    def flow_on(self, handle) -> int:
        u, idx = handle
        edge = self.graph[u][idx]
        return edge[4] - edge[1]

    def solve(self, s: int, t: int, max_flow):
        """Push up to max_flow units; returns (flow, cost) in scaled units."""
        n = self.n
        flow = 0
        cost = 0
        potential = [0] * n
        while flow < max_flow:
            dist = [None] * n
            parent = [None] * n
            dist[s] = 0
            heap = [(0, s)]
            while heap:
                d, u = heapq.heappop(heap)
                if dist[u] is not None and d > dist[u]:
                    continue
                for idx, edge in enumerate(self.graph[u]):
                    v, cap, c = edge[0], edge[1], edge[2]
                    if cap <= 0:
                        continue
                    nd = d + c + potential[u] - potential[v]
                    if dist[v] is None or nd < dist[v]:
                        dist[v] = nd
                        parent[v] = (u, idx)
                        heapq.heappush(heap, (nd, v))
            if dist[t] is None:
                break
            for v in range(n):
                if dist[v] is not None:
                    potential[v] += dist[v]
            push = max_flow - flow
            v = t
            while v != s:
                u, idx = parent[v]
                push = min(push, self.graph[u][idx][1])
                v = u
            v = t
            while v != s:
                u, idx = parent[v]
                edge = self.graph[u][idx]
                edge[1] -= push
                self.graph[v][edge[3]][1] += push
                cost += push * edge[2]
                v = u
            flow += push
        return flow, cost

    def has_negative_residual_cycle(self) -> bool:
        """Bellman-Ford over residual edges; certifies optimality when False."""
        dist = [0] * self.n
        for it in range(self.n):
            changed = False
            for u in range(self.n):
                for edge in self.graph[u]:
                    if edge[1] > 0 and dist[u] + edge[2] < dist[edge[0]]:
                        dist[edge[0]] = dist[u] + edge[2]
                        changed = True
            if not changed:
                return False
        return True


def nearest_center_index(p: Point, centers, tie_lowest: bool = True) -> int:
    best, best_sq = 0, None
    for idx, z in enumerate(centers):
        sq = sum((a - b) ** 2 for a, b in zip(p.coords, z.coords))
        if best_sq is None or sq < best_sq:
            best, best_sq = idx, sq
    return best


@dataclass
class Assignment:
    centers: tuple
    r: float
    mapping: dict                 # point -> center index
    weights: dict                 # point -> weight
    levels: dict = field(default_factory=dict)  # point -> coreset level

    def cost(self) -> float:
        return sum(self.weights[p] * dist_pow(p, self.centers[i], self.r)
                   for p, i in self.mapping.items())

    def size_vector(self):
        out = [0.0] * len(self.centers)
        for p, i in self.mapping.items():
            out[i] += self.weights[p]
        return out


class FractionalAssignment:
    """Optimal relaxed assignment; shares kept in scaled integer units."""

    def __init__(self, centers, r, weights, shares, scale, solver=None):
        self.centers = tuple(centers)
        self.r = r
        self.weights = dict(weights)
        self.shares = shares  # point -> {center index: scaled units}
        self.scale = scale
        self.solver = solver

    def cost(self) -> float:
        total = 0.0
        for p, alloc in self.shares.items():
            for j, units in alloc.items():
                total += units / self.scale * dist_pow(p, self.centers[j], self.r)
        return total

    def size_vector(self):
        out = [0.0] * len(self.centers)
        for alloc in self.shares.values():
            for j, units in alloc.items():
                out[j] += units / self.scale
        return out

    def split_points(self):
        return [p for p, alloc in self.shares.items() if len(alloc) > 1]

    def is_integral(self) -> bool:
        return not self.split_points()


def fractional_assign(points, weights, centers, t_cap, r,
                      scale: int = FLOW_SCALE):
    """Min-cost transportation plan with per-center capacity t_cap."""
    pts = list(points)
    k = len(centers)
    if not k:
        raise UsageError("need at least one center")
    w_scaled = {p: round(weights[p] * scale) for p in pts}
    total = sum(w_scaled.values())
    if t_cap == float("inf"):
        shares = {p: {nearest_center_index(p, centers): w_scaled[p]} for p in pts}
        return FractionalAssignment(centers, r, weights, shares, scale)
    t_scaled = round(t_cap * scale)
    if total > k * t_scaled:
        return INFEASIBLE
    n = len(pts)
    net = MinCostFlow(n + k + 2)
    src, sink = n + k, n + k + 1
    point_edges = {}
    for i, p in enumerate(pts):
        net.add_edge(src, i, w_scaled[p], 0)
        for j, z in enumerate(centers):
            c = round(dist_pow(p, z, r) * scale)
            point_edges[(p, j)] = net.add_edge(i, n + j, w_scaled[p], c)
    for j in range(k):
        net.add_edge(n + j, sink, t_scaled, 0)
    flow, _ = net.solve(src, sink, total)
    if flow < total:
        return INFEASIBLE
    shares = {}
    for p in pts:
        alloc = {}
        for j in range(k):
            units = net.flow_on(point_edges[(p, j)])
            if units:
                alloc[j] = units
        shares[p] = alloc
    return FractionalAssignment(centers, r, weights, shares, scale, solver=net)


def integralize(frac: FractionalAssignment, stats: dict | None = None) -> Assignment:
    """Cycle elimination, then round the <= k-1 leftover split points."""
    if is_infeasible(frac):
        raise UsageError("cannot integralize an INFEASIBLE assignment")
    shares = {p: dict(alloc) for p, alloc in frac.shares.items()}
    k = len(frac.centers)

    def find_cycle():
        # bipartite graph on split edges; any cycle alternates point/center.
        # prune to the 2-core, then a no-backtrack walk must close a cycle
        adj = {}
        for p, alloc in shares.items():
            if len(alloc) > 1:
                for j in alloc:
                    adj.setdefault(("p", p), set()).add(("c", j))
                    adj.setdefault(("c", j), set()).add(("p", p))
        leaves = [n for n, nbrs in adj.items() if len(nbrs) <= 1]
        while leaves:
            node = leaves.pop()
            for nbr in adj.pop(node, ()):
                adj[nbr].discard(node)
                if len(adj[nbr]) == 1:
                    leaves.append(nbr)
        if not adj:
            return None
        start = next(iter(adj))
        path = [start]
        index = {start: 0}
        prev = None
        while True:
            node = path[-1]
            nxt = next(nb for nb in adj[node] if nb != prev)
            if nxt in index:
                return path[index[nxt]:]
            index[nxt] = len(path)
            path.append(nxt)
            prev = node

    while True:
        cycle = find_cycle()
        if cycle is None:
            break
        if cycle[0][0] == "c":
            cycle = cycle[1:] + cycle[:1]
        m = len(cycle) // 2
        pts = [cycle[2 * i][1] for i in range(m)]
        ctrs = [cycle[2 * i + 1][1] for i in range(m)]
        # move a units p_i: ctr_i -> ctr_{i-1}; cost-neutral at optimality
        a = min(shares[pts[i]][ctrs[i]] for i in range(m))
        for i in range(m):
            take_from, give_to = ctrs[i], ctrs[i - 1]
            shares[pts[i]][take_from] -= a
            if not shares[pts[i]][take_from]:
                del shares[pts[i]][take_from]
            shares[pts[i]][give_to] = shares[pts[i]].get(give_to, 0) + a

    split = [p for p, alloc in shares.items() if len(alloc) > 1]
    if stats is not None:
        stats["splits"] = len(split)
    if len(split) > k - 1:
        raise AssertionError(
            f"cycle elimination left {len(split)} split points (> k-1)")
    mapping = {}
    for p, alloc in shares.items():
        if len(alloc) == 1:
            mapping[p] = next(iter(alloc))
        else:
            mapping[p] = nearest_center_index(p, frac.centers)
    return Assignment(frac.centers, frac.r, mapping, dict(frac.weights))


# --- half-spaces and regions -------------------------------------------------

def pair_key(x: Point, zi: Point, zj: Point, r: float):
    """dist^r(x, zi) - dist^r(x, zj); exact integer for r == 2."""
    return dist_pow(x, zi, r) - dist_pow(x, zj, r)


@dataclass(frozen=True)
class HalfSpace:
    """Prefix of [Delta]^d under the (key, alphabetic) order for one pair."""

    zi: Point
    zj: Point
    r: float
    kind: str          # "none" | "cut" | "all"
    cut_key: object = None
    cut_point: Point = None

    def contains(self, x: Point) -> bool:
        if self.kind == "none":
            return False
        if self.kind == "all":
            return True
        key = pair_key(x, self.zi, self.zj, self.r)
        if key != self.cut_key:
            return key < self.cut_key
        return x.sort_key() <= self.cut_point.sort_key()


def halfspace_member(halfspaces: dict, i: int, j: int, x: Point) -> bool:
    """Membership in H_(i,j); for i > j this is the complement of H_(j,i)."""
    if i < j:
        return halfspaces[(i, j)].contains(x)
    return not halfspaces[(j, i)].contains(x)


def region_of(x: Point, halfspaces: dict, k: int) -> int:
    """Region index in 0..k; region 0 collects points no center claims."""
    for i in range(k):
        if all(halfspace_member(halfspaces, i, j, x) for j in range(k) if j != i):
            return i + 1
    return 0


def extract_halfspaces(points, mapping: dict, centers, r) -> dict:
    """Cutoffs separating each assigned pair; valid once switching has run."""
    k = len(centers)
    out = {}
    for i in range(k):
        for j in range(i + 1, k):
            mine = [p for p in points if mapping[p] == i]
            theirs = [p for p in points if mapping[p] == j]
            if not mine:
                out[(i, j)] = HalfSpace(centers[i], centers[j], r, "none")
            elif not theirs:
                out[(i, j)] = HalfSpace(centers[i], centers[j], r, "all")
            else:
                border = max(mine, key=lambda p: (
                    pair_key(p, centers[i], centers[j], r), p.sort_key()))
                out[(i, j)] = HalfSpace(
                    centers[i], centers[j], r, "cut",
                    pair_key(border, centers[i], centers[j], r), border)
    return out


# --- canonicalization --------------------------------------------------------

def _min_cost_same_sizes(points, centers, sizes, r, scale=FLOW_SCALE):
    """Min-cost reassignment with the exact per-center point counts."""
    n, k = len(points), len(centers)
    net = MinCostFlow(n + k + 2)
    src, sink = n + k, n + k + 1
    handles = {}
    for i, p in enumerate(points):
        net.add_edge(src, i, 1, 0)
        for j in range(k):
            c = round(dist_pow(p, centers[j], r) * scale)
            handles[(i, j)] = net.add_edge(i, n + j, 1, c)
    for j in range(k):
        net.add_edge(n + j, sink, sizes[j], 0)
    flow, _ = net.solve(src, sink, n)
    if flow < n:
        raise AssertionError("size-preserving reassignment infeasible")
    mapping = {}
    for i, p in enumerate(points):
        for j in range(k):
            if net.flow_on(handles[(i, j)]):
                mapping[p] = j
    return mapping


def switch_ties(points, mapping: dict, centers, r, audit: list | None = None):
    """Reorder tied pairs so alphabetically smaller points sit at lower centers.

    Strict key inversions cannot occur at min cost; each executed switch
    strictly decreases the rank potential, which bounds the loop.
    """
    k = len(centers)
    rank = {p: n for n, p in enumerate(sorted(points, key=lambda q: q.sort_key()))}

    def potential():
        return sum((k - mapping[p]) * rank[p] for p in points)

    changed = True
    while changed:
        changed = False
        for i in range(k):
            for j in range(i + 1, k):
                mine = [p for p in points if mapping[p] == i]
                theirs = [p for p in points if mapping[p] == j]
                for p in mine:
                    kp = pair_key(p, centers[i], centers[j], r)
                    for q in theirs:
                        if kp == pair_key(q, centers[i], centers[j], r) \
                                and alph_less(q, p):
                            before = potential()
                            mapping[p], mapping[q] = j, i
                            if audit is not None:
                                audit.append((before, potential()))
                            changed = True
                            break
                    if changed:
                        break
                if changed:
                    break
            if changed:
                break
    return mapping


def canonicalize(by_level: dict, centers, r, audit: list | None = None):
    """Per-level size-preserving re-optimization, switching and half-spaces.

    by_level: level -> list of (point, weight) with the incoming center index
    in a parallel mapping; accepts {level: (points, weights, mapping)}.
    Returns (assignment, {level: halfspace dict}).
    """
    k = len(centers)
    out_map = {}
    out_weights = {}
    out_levels = {}
    halfspaces = {}
    for lvl, (pts, weights, mapping) in sorted(by_level.items()):
        if pts:
            sizes = [0] * k
            for p in pts:
                sizes[mapping[p]] += 1
            remapped = _min_cost_same_sizes(pts, centers, sizes, r)
            remapped = switch_ties(pts, remapped, centers, r, audit)
        else:
            remapped = {}
        halfspaces[lvl] = extract_halfspaces(pts, remapped, centers, r)
        for p in pts:
            out_map[p] = remapped[p]
            out_weights[p] = weights[p]
            out_levels[p] = lvl
    return Assignment(tuple(centers), r, out_map, out_weights, out_levels), halfspaces


# --- transferred assignment over the full input ------------------------------

def transferred_assignment(points, weights, centers, halfspaces, b_vec,
                           xi, T, r) -> dict:
    """Direct transfer rule: region centers with enough estimated mass,
    everything else to the heaviest region's center."""
    k = len(centers)
    i_star = max(range(1, k + 1), key=lambda i: (b_vec[i], -i))
    mapping = {}
    for p in points:
        region = region_of(p, halfspaces, k)
        if region >= 1 and b_vec[region] >= 2 * xi * T:
            mapping[p] = region - 1
        else:
            mapping[p] = i_star - 1
    return mapping


def transfer_full(full_points, coreset, halfspaces_by_level, centers, r=None):
    """Assignment of the whole input from the canonicalized coreset assignment.

    Points of kept parts follow the transferred assignment of their part;
    points outside every kept part go to their nearest center.
    """
    meta = coreset.meta
    params = meta.params
    if r is None:
        r = params.r
    k = len(centers)
    weights_by_part: dict = {}
    for p, w, lvl, j in coreset.entries:
        weights_by_part.setdefault((lvl, j), []).append((p, w))

    part_maps = {}
    for part in meta.part_tau:
        lvl = part[0]
        hs = halfspaces_by_level.get(lvl, {})
        b_vec = [0.0] * (k + 1)
        for p, w in weights_by_part.get(part, ()):
            b_vec[region_of(p, hs, k)] += w
        T = 0.5 * params.gamma * params.T(lvl, meta.o)
        part_maps[part] = (hs, b_vec, T)

    groups: dict = {}
    uncovered = []
    for p in full_points:
        part = meta.structure.part_of(p)
        if part is not None and part in part_maps:
            groups.setdefault(part, []).append(p)
        else:
            uncovered.append(p)
    mapping = {}
    for part, pts in groups.items():
        hs, b_vec, T = part_maps[part]
        mapping.update(transferred_assignment(
            pts, None, centers, hs, b_vec, params.xi, T, r))
    for p in uncovered:
        mapping[p] = nearest_center_index(p, centers)
    weights = {p: 1.0 for p in full_points}
    return Assignment(tuple(centers), r, mapping, weights)


def assignment_from_coreset(coreset, centers, t_cap, audit: list | None = None):
    """Full pipeline on a coreset: fractional -> integral -> canonical."""
    r = coreset.meta.params.r
    pts = coreset.points()
    weights = coreset.weights()
    frac = fractional_assign(pts, weights, centers, t_cap, r)
    if is_infeasible(frac):
        return INFEASIBLE, None, None
    integral = integralize(frac)
    by_level = {}
    for p, w, lvl, j in coreset.entries:
        entry = by_level.setdefault(lvl, ([], {}, {}))
        entry[0].append(p)
        entry[1][p] = w
        entry[2][p] = integral.mapping[p]
    canonical, halfspaces = canonicalize(by_level, centers, r, audit)
    return integral, canonical, halfspaces
