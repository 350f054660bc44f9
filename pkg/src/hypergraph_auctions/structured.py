"""Truthful mechanisms for graph valuations on a public support graph.

Both allocation rules here are maximal-in-range: the set of allocations they
optimize over depends only on the support graph, never on the reports, so
Clarke payments computed inside that range make truthful reporting a
dominant strategy.
"""

from __future__ import annotations

import math
import random
from collections import deque
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Iterable, Optional, Sequence

from .core import (
    Allocation,
    HypergraphValuation,
    Instance,
    UNALLOCATED,
    as_fraction,
    normalize_graph,
    retained_value,
    value,
    welfare,
)
from .exact import build_tree_decomposition, lift_allocation, restrict_to_goods, solve_bruteforce, solve_treewidth

RangeOptimizer = Callable[[Instance], tuple[Allocation, Fraction]]


@dataclass(frozen=True)
class MechanismOutcome:
    """Allocation, payments and diagnostics of one mechanism run.

    For randomized mechanisms ``lottery`` lists ``(probability, bundles)``
    pairs; each good of a listed bundle actually reaches its player
    independently with probability ``keep_prob``.  ``allocation`` is then one
    realized draw.
    """

    allocation: Allocation
    payments: tuple
    range_welfare: Fraction
    diagnostics: dict = field(default_factory=dict)
    lottery: Optional[tuple] = None
    keep_prob: Fraction = Fraction(1)

    def expected_value(self, player: int, v: HypergraphValuation) -> Fraction:
        if self.lottery is None:
            return value(v, self.allocation.bundle(player))
        total = Fraction(0)
        for prob, bundles in self.lottery:
            if bundles[player]:
                total += prob * retained_value(v, bundles[player], self.keep_prob)
        return total

    def utility(self, player: int, v: HypergraphValuation) -> Fraction:
        """Quasi-linear (expected) utility of ``player`` whose true valuation is ``v``."""
        return self.expected_value(player, v) - self.payments[player]


def vcg_payments(range_optimizer: RangeOptimizer, inst: Instance, allocation: Optional[Allocation] = None) -> tuple:
    """Clarke pivot payments inside the range searched by ``range_optimizer``.

    Player ``i`` pays the best welfare the others could get in the range with
    ``v_i`` zeroed, minus what the others get at the chosen allocation.
    """
    if allocation is None:
        allocation, _ = range_optimizer(inst)
    total = welfare(inst, allocation)
    payments = []
    for i, v in enumerate(inst.valuations):
        if inst.num_players == 1:
            payments.append(Fraction(0))
            continue
        _, best_without = range_optimizer(inst.without_player_value(i))
        others = total - value(v, allocation.bundle(i))
        payments.append(best_without - others)
    return tuple(payments)


def vcg_mechanism(inst: Instance, optimizer: RangeOptimizer = solve_bruteforce) -> MechanismOutcome:
    """Plain VCG over every allocation (or whatever range ``optimizer`` searches)."""
    alloc, w = optimizer(inst)
    return MechanismOutcome(alloc, vcg_payments(optimizer, inst, alloc), w)


# -- Baker layering ---------------------------------------------------------


@dataclass(frozen=True)
class BakerPartition:
    parts: tuple
    root: int
    k: int
    distance: tuple = ()


def _adjacency(graph: Iterable[Sequence[int]], num_goods: int) -> list[list[int]]:
    adj = [[] for _ in range(num_goods)]
    for u, v in graph:
        adj[u].append(v)
        adj[v].append(u)
    return [sorted(a) for a in adj]


def baker_partition(support_graph: Iterable[Sequence[int]], num_goods: int, k: int, root: int = 0) -> BakerPartition:
    """BFS layers from ``root`` grouped by distance modulo ``k + 1``.

    Goods unreachable from ``root`` are layered by a BFS of their own
    component started at its smallest good.
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    if num_goods and not 0 <= root < num_goods:
        raise IndexError(f"root {root} outside 0..{num_goods - 1}")
    adj = _adjacency(normalize_graph(support_graph, num_goods), num_goods)
    dist = [-1] * num_goods
    starts = ([root] if num_goods else []) + list(range(num_goods))
    for s in starts:
        if dist[s] >= 0:
            continue
        dist[s] = 0
        queue = deque([s])
        while queue:
            u = queue.popleft()
            for w in adj[u]:
                if dist[w] < 0:
                    dist[w] = dist[u] + 1
                    queue.append(w)
    parts = tuple(frozenset(g for g in range(num_goods) if dist[g] % (k + 1) == i) for i in range(k + 1))
    return BakerPartition(parts, root, k, tuple(dist))


def _require_graph_instance(inst: Instance, who: str) -> None:
    if inst.support_graph is None:
        raise ValueError(f"{who} requires an instance with a support_graph")
    if inst.rank > 2:
        raise ValueError(f"{who} handles graph (rank <= 2) valuations, got rank {inst.rank}")


def _best_over_parts(inst: Instance, parts: Sequence[frozenset]):
    best = None
    per_part = []
    widths = []
    for i, part in enumerate(parts):
        keep = [g for g in range(inst.num_goods) if g not in part]
        sub, index = restrict_to_goods(inst, keep)
        td = build_tree_decomposition(sub.support_graph, sub.num_goods)
        sub_alloc, w = solve_treewidth(sub, td)
        per_part.append(w)
        widths.append(td.width if sub.num_goods else -1)
        if best is None or w > best[1]:
            best = (lift_allocation(sub_alloc, index, inst.num_goods), w, i)
    return best, per_part, widths


def baker_allocate(
    inst: Instance,
    epsilon=None,
    *,
    k: Optional[int] = None,
    root: int = 0,
    partition: Optional[Sequence[Iterable[int]]] = None,
    with_payments: bool = True,
) -> MechanismOutcome:
    """Maximal-in-range ``(1 - epsilon)``-approximate allocation with Clarke payments.

    Goods are split into ``k + 1`` BFS-layer classes with ``k = ceil(2 / epsilon)``;
    for each class the optimum over the remaining goods is computed exactly by
    tree-decomposition DP, and the best of these is used.  A custom
    ``partition`` (for example from an excluded-minor decomposition) may be
    supplied instead of the BFS layering.
    """
    _require_graph_instance(inst, "baker_allocate")
    if k is None and partition is not None and epsilon is None:
        k = len(partition) - 1
    if k is None:
        if epsilon is None:
            raise ValueError("give epsilon, k or a partition")
        eps = as_fraction(epsilon)
        if eps <= 0:
            raise ValueError("epsilon must be positive")
        k = math.ceil(Fraction(2) / eps)
    if partition is None:
        parts = baker_partition(inst.support_graph, inst.num_goods, k, root).parts
    else:
        parts = tuple(frozenset(p) for p in partition)
        seen = [g for p in parts for g in p]
        if sorted(seen) != list(range(inst.num_goods)):
            raise ValueError("partition must split the goods into disjoint parts")

    (alloc, w, chosen), per_part, widths = _best_over_parts(inst, parts)

    def optimizer(instance: Instance):
        (a, val, _), _, _ = _best_over_parts(instance, parts)
        return a, val

    payments = vcg_payments(optimizer, inst, alloc) if with_payments else (Fraction(0),) * inst.num_players
    diagnostics = {
        "k": k,
        "parts": [sorted(p) for p in parts],
        "chosen_part": chosen,
        "part_welfare": per_part,
        "part_widths": widths,
        "width_bound": 3 * k,
        "guarantee_certified": max(widths, default=-1) <= 3 * k,
    }
    return MechanismOutcome(alloc, payments, w, diagnostics)


# -- chromatic mechanism ----------------------------------------------------


def square_line_graph_coloring(support_graph: Iterable[Sequence[int]], num_goods: int) -> list[list[tuple]]:
    """Greedy coloring of the square of the line graph; returns the color classes.

    Two edges conflict when they share a good or some third edge touches
    both.  Edges are colored in order of decreasing conflict degree.
    """
    graph = normalize_graph(support_graph, num_goods)
    adj = [set(a) for a in _adjacency(graph, num_goods)]

    def near(e, f):
        a, b = e
        c, d = f
        if {a, b} & {c, d}:
            return True
        return bool((adj[a] | adj[b]) & {c, d})

    conflicts = {e: [f for f in graph if f != e and near(e, f)] for e in graph}
    order = sorted(graph, key=lambda e: (-len(conflicts[e]), e))
    color: dict[tuple, int] = {}
    for e in order:
        used = {color[f] for f in conflicts[e] if f in color}
        c = 0
        while c in used:
            c += 1
        color[e] = c
    ncolors = max(color.values(), default=-1) + 1
    return [sorted(e for e in graph if color[e] == c) for c in range(ncolors)]


def _class_range(graph: Sequence[tuple], num_goods: int, edges: Sequence[tuple]) -> list[int]:
    """Goods allocated alongside color class ``edges``: greedily, in index order,
    every good adding no support edge beyond the class itself."""
    adj = [set(a) for a in _adjacency(graph, num_goods)]
    chosen = {g for e in edges for g in e}
    extra = []
    for g in range(num_goods):
        if g in chosen:
            continue
        if not adj[g] & chosen:
            chosen.add(g)
            extra.append(g)
    return extra


def _best_on_class(inst: Instance, edges: Sequence[tuple], extra: Sequence[int]) -> tuple[Allocation, Fraction]:
    n = inst.num_players
    vals = inst.valuations
    edge_weight = [dict(v.edges) for v in vals]
    owner = [UNALLOCATED] * inst.num_goods
    total = Fraction(0)
    for u, w in edges:
        best = None
        for pu in range(n):
            for pw in range(n):
                val = vals[pu].vertex_weights[u] + vals[pw].vertex_weights[w]
                if pu == pw:
                    val += edge_weight[pu].get((u, w), 0)
                if best is None or val > best[0]:
                    best = (val, pu, pw)
        total += best[0]
        owner[u], owner[w] = best[1], best[2]
    for g in extra:
        p = max(range(n), key=lambda i: (vals[i].vertex_weights[g], -i))
        owner[g] = p
        total += vals[p].vertex_weights[g]
    return Allocation(tuple(owner)), total


def chromatic_allocate(inst: Instance, with_payments: bool = True) -> MechanismOutcome:
    """Best single color class of the square line graph, with Clarke payments.

    Each class is an induced matching, so its edges (and the extra goods
    allocated with it) can be optimized independently and exactly.  The
    welfare is at least ``OPT / colors_used``.
    """
    _require_graph_instance(inst, "chromatic_allocate")
    graph = inst.support_graph
    classes = square_line_graph_coloring(graph, inst.num_goods) or [[]]
    ranges = [(c, _class_range(graph, inst.num_goods, c)) for c in classes]

    def optimizer(instance: Instance):
        best = None
        for idx, (c, extra) in enumerate(ranges):
            a, w = _best_on_class(instance, c, extra)
            if best is None or w > best[1]:
                best = (a, w, idx)
        return best

    alloc, w, chosen = optimizer(inst)
    payments = (
        vcg_payments(lambda I: optimizer(I)[:2], inst, alloc) if with_payments else (Fraction(0),) * inst.num_players
    )
    diagnostics = {
        "colors_used": len(classes) if graph else 0,
        "color_classes": classes,
        "chosen_color": chosen,
    }
    return MechanismOutcome(alloc, payments, w, diagnostics)


# -- truthfulness harness ---------------------------------------------------


@dataclass(frozen=True)
class Deviation:
    player: int
    report: HypergraphValuation
    truthful_utility: Fraction
    deviating_utility: Fraction

    @property
    def gain(self) -> Fraction:
        return self.deviating_utility - self.truthful_utility


_FACTORS = (Fraction(0), Fraction(1, 2), Fraction(3, 2), Fraction(2))


def standard_misreports(count: int = 40) -> Callable:
    """Misreport generator: scalings by 0, 1/2 and 2, single-edge deletions,
    per-weight perturbations and fresh random valuations.

    Random edges are drawn from the support graph when the instance has one,
    so every report stays admissible for the graph mechanisms.
    """

    def generate(inst: Instance, player: int, rng: random.Random) -> list[HypergraphValuation]:
        v = inst.valuations[player]
        m = inst.num_goods
        out = [v.scaled(0), v.scaled(Fraction(1, 2)), v.scaled(2)]
        for k in range(len(v.edges)):
            out.append(HypergraphValuation(m, v.vertex_weights, v.edges[:k] + v.edges[k + 1 :]))
        scale = max([Fraction(1)] + list(v.vertex_weights) + [w for _, w in v.edges])
        while len(out) < count:
            if rng.random() < 0.5:
                vw = [w * rng.choice(_FACTORS) for w in v.vertex_weights]
                es = [(e, w * rng.choice(_FACTORS)) for e, w in v.edges]
            else:
                vw = [scale * Fraction(rng.randint(0, 4), 2) for _ in range(m)]
                if inst.support_graph is not None:
                    pool = list(inst.support_graph)
                    es = [(e, scale * Fraction(rng.randint(0, 6), 2)) for e in pool if rng.random() < 0.5]
                else:
                    r = max(2, inst.rank)
                    es = []
                    if m >= 2:
                        for _ in range(rng.randint(0, 4)):
                            size = rng.randint(2, min(r, m))
                            es.append((rng.sample(range(m), size), scale * Fraction(rng.randint(0, 6), 2)))
            out.append(HypergraphValuation(m, vw, es))
        return out[:count]

    return generate


def deviation_search(
    mechanism: Callable[[Instance], MechanismOutcome],
    inst: Instance,
    misreports: Optional[Callable] = None,
    tol=0,
    seed: int = 0,
    players: Optional[Iterable[int]] = None,
) -> Optional[Deviation]:
    """Look for a report that raises some player's utility by more than ``tol``.

    Utilities are evaluated against the true valuations in ``inst``; for
    randomized mechanisms the outcome's exact expected utility is used.
    Returns the first profitable deviation found, or ``None``.
    """
    if misreports is None:
        misreports = standard_misreports()
    tol = as_fraction(tol)
    rng = random.Random(seed)
    truthful = mechanism(inst)
    for i in players if players is not None else range(inst.num_players):
        v = inst.valuations[i]
        base = truthful.utility(i, v)
        for report in misreports(inst, i, rng):
            out = mechanism(inst.with_valuation(i, report))
            u = out.utility(i, v)
            if u > base + tol:
                return Deviation(i, report, base, u)
    return None
