"""Exact welfare maximization.

Two solvers: exhaustive enumeration of all ``n^m`` allocations for tiny
instances, and dynamic programming over a tree decomposition of the support
graph for graph (rank 2) valuations.  Both return the lexicographically
smallest owner vector among the optimal allocations, so they agree exactly
and not only in value.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from fractions import Fraction
from typing import Iterable, Optional, Sequence

import numpy as np

from .core import Allocation, HypergraphValuation, Instance, UNALLOCATED, integer_weights, normalize_graph, value

BRUTEFORCE_LIMIT = 10**7
_CHUNK = 1 << 18


class InstanceTooLarge(ValueError):
    pass


def value_tables(inst: Instance):
    """Integer value of every bundle mask for every player, plus the scale."""
    m, n = inst.num_goods, inst.num_players
    scale, vert, edges, _ = integer_weights(inst.valuations)
    bound = sum(sum(v) + sum(w for _, w in e) for v, e in zip(vert, edges))
    dtype = np.int64 if bound < 2**62 else object
    masks = np.arange(1 << m, dtype=np.int64)
    tables = []
    for i in range(n):
        t = np.zeros(1 << m, dtype=dtype)
        for j, w in enumerate(vert[i]):
            if w:
                t = t + ((masks >> j) & 1).astype(dtype) * w
        for em, w in edges[i]:
            if w:
                t = t + ((masks & em) == em).astype(dtype) * w
        tables.append(t)
    return scale, tables


def solve_bruteforce(inst: Instance) -> tuple[Allocation, Fraction]:
    """Exhaustive search over all total allocations.

    Owner vectors are visited in lexicographic order with good 0 as the most
    significant digit, and the first optimum is kept.
    """
    n, m = inst.num_players, inst.num_goods
    total = n**m
    if total > BRUTEFORCE_LIMIT:
        raise InstanceTooLarge(f"brute force needs {n}^{m} = {total} allocations, limit is {BRUTEFORCE_LIMIT}")
    if m == 0:
        return Allocation(()), Fraction(0)
    scale, tables = value_tables(inst)
    place = [n ** (m - 1 - j) for j in range(m)]
    best_val, best_code = None, 0
    for start in range(0, total, _CHUNK):
        codes = np.arange(start, min(total, start + _CHUNK), dtype=np.int64)
        digits = [(codes // place[j]) % n for j in range(m)]
        welfare = None
        for i in range(n):
            mask = np.zeros(len(codes), dtype=np.int64)
            for j in range(m):
                mask |= (digits[j] == i).astype(np.int64) << j
            part = tables[i][mask]
            welfare = part if welfare is None else welfare + part
        k = int(np.argmax(welfare))
        val = welfare[k]
        if best_val is None or val > best_val:
            best_val, best_code = val, start + k
    owner = tuple((best_code // place[j]) % n for j in range(m))
    return Allocation(owner), Fraction(int(best_val), scale)


def greedy_allocation(inst: Instance) -> Allocation:
    """Goods in index order, each to the player with the largest marginal value."""
    bundles = [set() for _ in range(inst.num_players)]
    owner = []
    for j in range(inst.num_goods):
        gains = [value(v, bundles[i] | {j}) - value(v, bundles[i]) for i, v in enumerate(inst.valuations)]
        best = max(range(inst.num_players), key=lambda i: (gains[i], -i))
        bundles[best].add(j)
        owner.append(best)
    return Allocation(tuple(owner))


@dataclass(frozen=True)
class TreeDecomposition:
    bags: tuple
    tree_edges: tuple

    def __post_init__(self) -> None:
        object.__setattr__(self, "bags", tuple(frozenset(b) for b in self.bags))
        object.__setattr__(self, "tree_edges", tuple(tuple(e) for e in self.tree_edges))

    @property
    def width(self) -> int:
        return max((len(b) for b in self.bags), default=1) - 1

    def neighbors(self) -> list[list[int]]:
        adj = [[] for _ in self.bags]
        for a, b in self.tree_edges:
            adj[a].append(b)
            adj[b].append(a)
        return adj

    def validate(self, graph: Iterable[Sequence[int]], num_goods: int) -> None:
        """Raise ``ValueError`` unless this is a tree decomposition of ``graph``."""
        nb = len(self.bags)
        if num_goods and not nb:
            raise ValueError("no bags")
        covered = set().union(*self.bags) if nb else set()
        missing = set(range(num_goods)) - covered
        if missing:
            raise ValueError(f"goods {sorted(missing)} are in no bag")
        if covered - set(range(num_goods)):
            raise ValueError("bag contains an unknown good")
        for u, v in graph:
            if not any(u in b and v in b for b in self.bags):
                raise ValueError(f"edge ({u}, {v}) is in no bag")
        if len(self.tree_edges) != max(nb - 1, 0):
            raise ValueError("tree edges do not form a spanning tree")
        adj = self.neighbors()
        seen = {0} if nb else set()
        stack = [0] if nb else []
        while stack:
            a = stack.pop()
            for b in adj[a]:
                if b not in seen:
                    seen.add(b)
                    stack.append(b)
        if len(seen) != nb:
            raise ValueError("tree edges do not connect all bags")
        for g in range(num_goods):
            holders = {i for i, b in enumerate(self.bags) if g in b}
            start = next(iter(holders))
            reach, stack = {start}, [start]
            while stack:
                a = stack.pop()
                for b in adj[a]:
                    if b in holders and b not in reach:
                        reach.add(b)
                        stack.append(b)
            if reach != holders:
                raise ValueError(f"bags holding good {g} are not connected")


def _elimination_order(adj: list[set], rule: str) -> list[int]:
    adj = [set(a) for a in adj]
    alive = set(range(len(adj)))
    order = []
    while alive:
        if rule == "min-degree":
            v = min(alive, key=lambda x: (len(adj[x]), x))
        else:

            def fill(x):
                nb = list(adj[x])
                return sum(1 for a, b in itertools.combinations(nb, 2) if b not in adj[a])

            v = min(alive, key=lambda x: (fill(x), len(adj[x]), x))
        nb = adj[v]
        for a in nb:
            adj[a] |= nb - {a}
            adj[a].discard(v)
        alive.remove(v)
        adj[v] = set()
        order.append(v)
    return order


def _decomposition_from_order(adj: list[set], order: list[int]) -> TreeDecomposition:
    m = len(adj)
    adj = [set(a) for a in adj]
    pos = {v: i for i, v in enumerate(order)}
    bags, parent = [], []
    for v in order:
        nb = adj[v]
        bags.append({v} | nb)
        parent.append(min((pos[u] for u in nb), default=None))
        for a in nb:
            adj[a] |= nb - {a}
            adj[a].discard(v)
        adj[v] = set()
    edges = {(i, p) for i, p in enumerate(parent) if p is not None}
    roots = [i for i, p in enumerate(parent) if p is None]
    edges |= {(roots[k], roots[k + 1]) for k in range(len(roots) - 1)}
    # contract edges whose bags are nested
    alive = list(range(m))
    changed = True
    while changed:
        changed = False
        for a, b in sorted(edges):
            if bags[a] <= bags[b] or bags[b] <= bags[a]:
                small, big = (a, b) if bags[a] <= bags[b] else (b, a)
                edges.discard((a, b))
                edges = {(big if x == small else x, big if y == small else y) for x, y in edges}
                alive.remove(small)
                changed = True
                break
    index = {old: new for new, old in enumerate(alive)}
    return TreeDecomposition(
        tuple(bags[i] for i in alive),
        tuple(sorted((min(index[a], index[b]), max(index[a], index[b])) for a, b in edges)),
    )


def build_tree_decomposition(support_graph: Iterable[Sequence[int]], num_goods: int) -> TreeDecomposition:
    """Heuristic decomposition: best of min-degree and min-fill elimination."""
    graph = normalize_graph(support_graph, num_goods)
    adj = [set() for _ in range(num_goods)]
    for u, v in graph:
        adj[u].add(v)
        adj[v].add(u)
    best = None
    for rule in ("min-degree", "min-fill"):
        td = _decomposition_from_order(adj, _elimination_order(adj, rule))
        if best is None or td.width < best.width:
            best = td
    return best


class _TreeDP:
    """Rooted dynamic program over bag assignments for graph valuations."""

    def __init__(self, inst: Instance, td: TreeDecomposition):
        self.inst = inst
        self.td = td
        n, m = inst.num_players, inst.num_goods
        self.scale, vert, edges, _ = integer_weights(inst.valuations)
        self.vert = vert
        nb = len(td.bags)
        adj = td.neighbors()
        self.order, self.parent = [], [None] * nb
        if nb:
            seen = {0}
            queue = [0]
            while queue:
                a = queue.pop(0)
                self.order.append(a)
                for b in sorted(adj[a]):
                    if b not in seen:
                        seen.add(b)
                        self.parent[b] = a
                        queue.append(b)
        self.children = [[] for _ in range(nb)]
        for b, p in enumerate(self.parent):
            if p is not None:
                self.children[p].append(b)
        self.bag_goods = [tuple(sorted(b)) for b in td.bags]
        self.home_goods = [[] for _ in range(nb)]
        placed = set()
        for b in self.order:
            for g in self.bag_goods[b]:
                if g not in placed:
                    placed.add(g)
                    self.home_goods[b].append(g)
        edge_w: dict[tuple, list[int]] = {}
        for i in range(n):
            for mask, w in edges[i]:
                pair = tuple(j for j in range(m) if mask >> j & 1)
                edge_w.setdefault(pair, [0] * n)[i] += w
        self.home_edges = [[] for _ in range(nb)]
        for pair, ws in sorted(edge_w.items()):
            home = next((b for b in self.order if pair[0] in td.bags[b] and pair[1] in td.bags[b]), None)
            if home is None:
                raise ValueError(f"valuation edge {pair} is not covered by the tree decomposition")
            self.home_edges[home].append((pair, ws))

    def tables(self, domains: Sequence[Sequence[int]]):
        td = self.td
        table: list[Optional[dict]] = [None] * len(td.bags)
        for b in reversed(self.order):
            goods = self.bag_goods[b]
            pos = {g: k for k, g in enumerate(goods)}
            seps = []
            for c in self.children[b]:
                sep = tuple(g for g in self.bag_goods[c] if g in pos)
                cpos = [self.bag_goods[c].index(g) for g in sep]
                best: dict = {}
                for assign, val in table[c].items():
                    key = tuple(assign[k] for k in cpos)
                    if key not in best or val > best[key]:
                        best[key] = val
                seps.append(([pos[g] for g in sep], best))
            home_g = [(pos[g], g) for g in self.home_goods[b]]
            home_e = [(pos[u], pos[v], ws) for (u, v), ws in self.home_edges[b]]
            out = {}
            for assign in itertools.product(*(domains[g] for g in goods)):
                val = 0
                for k, g in home_g:
                    val += self.vert[assign[k]][g]
                for ku, kv, ws in home_e:
                    if assign[ku] == assign[kv]:
                        val += ws[assign[ku]]
                for idx, best in seps:
                    val += best[tuple(assign[k] for k in idx)]
                out[assign] = val
            table[b] = out
        return table

    def optimum(self, domains) -> int:
        if not self.td.bags:
            return 0
        return max(self.tables(domains)[0].values())


def _check_graph_instance(inst: Instance) -> None:
    if inst.rank > 2:
        raise ValueError(f"tree-decomposition DP handles rank <= 2 valuations, got rank {inst.rank}")


def solve_treewidth(inst: Instance, td: Optional[TreeDecomposition] = None) -> tuple[Allocation, Fraction]:
    """Optimal allocation for graph valuations by DP over a tree decomposition.

    The decomposition defaults to :func:`build_tree_decomposition` of the
    instance's support graph (or of the union of valuation edges).  Among
    optimal allocations the lexicographically smallest owner vector is
    returned, found by fixing goods one at a time and re-running the DP.
    """
    _check_graph_instance(inst)
    graph = inst.edge_graph()
    m, n = inst.num_goods, inst.num_players
    if td is None:
        td = build_tree_decomposition(graph, m)
    td.validate(graph, m)
    if m == 0:
        return Allocation(()), Fraction(0)
    dp = _TreeDP(inst, td)
    domains = [list(range(n)) for _ in range(m)]
    opt = dp.optimum(domains)
    for j in range(m):
        for p in range(n - 1):
            domains[j] = [p]
            if dp.optimum(domains) == opt:
                break
        else:
            domains[j] = [n - 1]
    owner = tuple(d[0] for d in domains)
    return Allocation(owner), Fraction(opt, dp.scale)


def root_conditional_optimum(inst: Instance, td: TreeDecomposition, root_assignment: dict) -> Fraction:
    """Best welfare among allocations agreeing with ``root_assignment`` on bag 0."""
    _check_graph_instance(inst)
    td.validate(inst.edge_graph(), inst.num_goods)
    dp = _TreeDP(inst, td)
    domains = [list(range(inst.num_players)) for _ in range(inst.num_goods)]
    table = dp.tables(domains)[0]
    key = tuple(root_assignment[g] for g in dp.bag_goods[0])
    return Fraction(table[key], dp.scale)


def restrict_to_goods(inst: Instance, goods: Sequence[int]) -> tuple[Instance, list[int]]:
    """Sub-instance on ``goods`` (re-indexed in sorted order) and the index map back."""
    keep = sorted(goods)
    new = {g: k for k, g in enumerate(keep)}
    vals = []
    for v in inst.valuations:
        vals.append(
            HypergraphValuation(
                len(keep),
                tuple(v.vertex_weights[g] for g in keep),
                tuple((tuple(new[g] for g in e), w) for e, w in v.edges if all(g in new for g in e)),
            )
        )
    graph = None
    if inst.support_graph is not None:
        graph = tuple((new[u], new[v]) for u, v in inst.support_graph if u in new and v in new)
    return Instance(tuple(vals), graph, num_goods=len(keep)), keep


def lift_allocation(sub: Allocation, keep: Sequence[int], num_goods: int) -> Allocation:
    owner = [UNALLOCATED] * num_goods
    for k, g in enumerate(keep):
        owner[g] = sub.owner[k]
    return Allocation(tuple(owner))
