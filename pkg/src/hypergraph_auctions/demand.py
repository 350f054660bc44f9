"""Demand queries for hypergraph valuations.

Maximizing ``v(S) - p(S)`` is a maximum-weight closure problem: choosing a
hyperedge forces choosing all of its goods, edges carry profit ``w_e`` and
goods carry profit ``w_j - p_j``.  Because every edge weight is nonnegative
the closure problem reduces to a single minimum s-t cut.

Ties among maximizing bundles are broken toward the lexicographically
smallest 0/1 indicator vector (good 0 most significant).  The maximizers of a
supermodular function are closed under intersection, so this is the unique
inclusion-minimal maximizer, which is exactly the source side of the minimum
cut found by residual reachability after a maximum flow.
"""

from __future__ import annotations

from collections import deque
from fractions import Fraction
from typing import Sequence

from .core import HypergraphValuation, as_fraction, integer_weights, value

BRUTEFORCE_MAX_GOODS = 20


def _check_prices(v: HypergraphValuation, prices: Sequence) -> list[Fraction]:
    if len(prices) != v.num_goods:
        raise ValueError(f"price vector has length {len(prices)}, valuation has {v.num_goods} goods")
    p = [as_fraction(x) for x in prices]
    for j, x in enumerate(p):
        if x < 0:
            raise ValueError(f"negative price {x} on good {j}")
    return p


class _FlowNetwork:
    """Edmonds-Karp max flow on integer capacities."""

    def __init__(self, size: int):
        self.size = size
        self.cap: list[dict[int, int]] = [dict() for _ in range(size)]

    def add(self, u: int, v: int, c: int) -> None:
        self.cap[u][v] = self.cap[u].get(v, 0) + c
        self.cap[v].setdefault(u, 0)

    def max_flow(self, s: int, t: int) -> int:
        flow = 0
        while True:
            parent = [-1] * self.size
            parent[s] = s
            queue = deque([s])
            while queue and parent[t] < 0:
                u = queue.popleft()
                for v, c in self.cap[u].items():
                    if c > 0 and parent[v] < 0:
                        parent[v] = u
                        queue.append(v)
            if parent[t] < 0:
                return flow
            bottleneck = None
            v = t
            while v != s:
                u = parent[v]
                c = self.cap[u][v]
                bottleneck = c if bottleneck is None else min(bottleneck, c)
                v = u
            v = t
            while v != s:
                u = parent[v]
                self.cap[u][v] -= bottleneck
                self.cap[v][u] += bottleneck
                v = u
            flow += bottleneck

    def reachable(self, s: int) -> set[int]:
        seen = {s}
        queue = deque([s])
        while queue:
            u = queue.popleft()
            for v, c in self.cap[u].items():
                if c > 0 and v not in seen:
                    seen.add(v)
                    queue.append(v)
        return seen


def demand(v: HypergraphValuation, prices: Sequence) -> tuple[frozenset, Fraction]:
    """Return ``(bundle, surplus)`` maximizing ``v(S) - sum(p_j for j in S)``."""
    p = _check_prices(v, prices)
    m = v.num_goods
    _, vert, edges, pints = integer_weights([v], p)
    vert, edges = vert[0], edges[0]
    positive_edges = [(mask, w) for mask, w in edges if w > 0]
    # nodes: 0 source, 1 sink, 2..2+m goods, then edge nodes
    source, sink = 0, 1
    net = _FlowNetwork(2 + m + len(positive_edges))
    infinite = 1 + sum(w for _, w in positive_edges) + sum(max(0, x) for x in vert)
    for j in range(m):
        margin = vert[j] - pints[j]
        if margin > 0:
            net.add(source, 2 + j, margin)
        elif margin < 0:
            net.add(2 + j, sink, -margin)
    for k, (mask, w) in enumerate(positive_edges):
        node = 2 + m + k
        net.add(source, node, w)
        j = 0
        rest = mask
        while rest:
            if rest & 1:
                net.add(node, 2 + j, infinite)
            rest >>= 1
            j += 1
    net.max_flow(source, sink)
    side = net.reachable(source)
    bundle = frozenset(j for j in range(m) if 2 + j in side)
    surplus = value(v, bundle) - sum((p[j] for j in bundle), Fraction(0))
    return bundle, surplus


def _indicator_key(mask: int, m: int) -> tuple:
    return tuple((mask >> j) & 1 for j in range(m))


def demand_bruteforce(v: HypergraphValuation, prices: Sequence) -> tuple[frozenset, Fraction]:
    """Exhaustive demand query over all ``2^m`` bundles (testing oracle)."""
    p = _check_prices(v, prices)
    m = v.num_goods
    if m > BRUTEFORCE_MAX_GOODS:
        raise ValueError(f"brute-force demand limited to {BRUTEFORCE_MAX_GOODS} goods, got {m}")
    scale, vert, edges, pints = integer_weights([v], p)
    vert, edges = vert[0], edges[0]
    margin = [vert[j] - pints[j] for j in range(m)]
    # surplus[S] extends S minus its highest good; an edge is counted at the
    # step that adds its highest good
    edges_by_high: list[list[tuple[int, int]]] = [[] for _ in range(m)]
    for mask, w in edges:
        edges_by_high[mask.bit_length() - 1].append((mask, w))
    surplus = [0] * (1 << m)
    best_mask, best = 0, 0
    best_key = _indicator_key(0, m)
    for s in range(1, 1 << m):
        high = s.bit_length() - 1
        prev = s ^ (1 << high)
        val = surplus[prev] + margin[high]
        for mask, w in edges_by_high[high]:
            if s & mask == mask:
                val += w
        surplus[s] = val
        if val > best:
            best, best_mask, best_key = val, s, _indicator_key(s, m)
        elif val == best:
            key = _indicator_key(s, m)
            if key < best_key:
                best_mask, best_key = s, key
    bundle = frozenset(j for j in range(m) if best_mask >> j & 1)
    return bundle, Fraction(best, scale)
