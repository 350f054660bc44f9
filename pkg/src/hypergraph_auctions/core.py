"""Hypergraph valuations, instances and allocations.

A hypergraph valuation assigns a nonnegative weight to every good and to a
collection of hyperedges (sets of goods).  The value of a bundle is the total
weight of the goods it contains plus the weight of every hyperedge entirely
inside it.  All weights are kept as :class:`fractions.Fraction` so that
welfare, payments and oracle comparisons are exact.
"""

from __future__ import annotations

import math
import random
from dataclasses import dataclass, field
from fractions import Fraction
from functools import cached_property
from typing import Iterable, Optional, Sequence

UNALLOCATED = -1

Number = Fraction | int | str | float


def as_fraction(x: Number) -> Fraction:
    """Convert ``x`` to an exact rational.

    Floats are converted through their shortest decimal repr so that
    ``0.1`` becomes ``1/10`` rather than the binary expansion.
    """
    if isinstance(x, Fraction):
        return x
    if isinstance(x, float):
        if not math.isfinite(x):
            raise ValueError(f"non-finite weight {x!r}")
        return Fraction(repr(x))
    return Fraction(x)


def bundle_mask(goods: Iterable[int]) -> int:
    mask = 0
    for g in goods:
        mask |= 1 << g
    return mask


@dataclass(frozen=True)
class HypergraphValuation:
    """Weighted hypergraph over goods ``0..num_goods-1``.

    ``edges`` is accepted as any iterable of ``(goods, weight)`` pairs and
    normalized on construction: duplicate edges are merged by summing their
    weights, single-good edges are folded into the vertex weights and the
    result is stored sorted as a tuple of ``(tuple_of_goods, Fraction)``.
    """

    num_goods: int
    vertex_weights: tuple = ()
    edges: tuple = ()

    def __post_init__(self) -> None:
        m = self.num_goods
        if m < 0:
            raise ValueError("num_goods must be nonnegative")
        vw = list(self.vertex_weights) if self.vertex_weights else [0] * m
        if len(vw) != m:
            raise ValueError(f"expected {m} vertex weights, got {len(vw)}")
        vw = [as_fraction(w) for w in vw]
        merged: dict[tuple[int, ...], Fraction] = {}
        for item in self.edges:
            goods, weight = item
            goods = tuple(goods)
            weight = as_fraction(weight)
            if len(goods) == 0:
                raise ValueError("empty edge")
            if len(set(goods)) != len(goods):
                raise ValueError(f"edge {goods} repeats a good")
            for g in goods:
                if not (isinstance(g, int) and 0 <= g < m):
                    raise IndexError(f"edge {goods} references good {g!r} outside 0..{m - 1}")
            if weight < 0:
                raise ValueError(f"edge {goods} has negative weight {weight}")
            if len(goods) == 1:
                vw[goods[0]] += weight
                continue
            key = tuple(sorted(goods))
            merged[key] = merged.get(key, Fraction(0)) + weight
        for j, w in enumerate(vw):
            if w < 0:
                raise ValueError(f"good {j} has negative weight {w}")
        object.__setattr__(self, "vertex_weights", tuple(vw))
        object.__setattr__(self, "edges", tuple(sorted(merged.items())))

    @property
    def rank(self) -> int:
        return max([1] + [len(e) for e, _ in self.edges])

    @cached_property
    def edge_masks(self) -> tuple[tuple[int, Fraction], ...]:
        return tuple((bundle_mask(e), w) for e, w in self.edges)

    def value(self, bundle: Iterable[int]) -> Fraction:
        return value(self, bundle)

    def total_value(self) -> Fraction:
        return sum(self.vertex_weights, Fraction(0)) + sum((w for _, w in self.edges), Fraction(0))

    def scaled(self, factor: Number) -> "HypergraphValuation":
        f = as_fraction(factor)
        return HypergraphValuation(
            self.num_goods,
            tuple(w * f for w in self.vertex_weights),
            tuple((e, w * f) for e, w in self.edges),
        )

    def restricted(self, goods: Iterable[int]) -> "HypergraphValuation":
        """Drop the weight of goods outside ``goods`` and every edge leaving it."""
        keep = set(goods)
        return HypergraphValuation(
            self.num_goods,
            tuple(w if j in keep else Fraction(0) for j, w in enumerate(self.vertex_weights)),
            tuple((e, w) for e, w in self.edges if keep.issuperset(e)),
        )

    @classmethod
    def zero(cls, num_goods: int) -> "HypergraphValuation":
        return cls(num_goods, (0,) * num_goods, ())


def value(v: HypergraphValuation, bundle: Iterable[int]) -> Fraction:
    """Total weight of goods in ``bundle`` plus edges contained in it."""
    goods = set(bundle)
    for g in goods:
        if not (0 <= g < v.num_goods):
            raise IndexError(f"good {g} outside 0..{v.num_goods - 1}")
    total = sum((v.vertex_weights[g] for g in goods), Fraction(0))
    for e, w in v.edges:
        if goods.issuperset(e):
            total += w
    return total


def retained_value(v: HypergraphValuation, bundle: Iterable[int], keep_prob: Number) -> Fraction:
    """Expected ``v(R)`` when each good of ``bundle`` survives independently with ``keep_prob``."""
    q = as_fraction(keep_prob)
    goods = set(bundle)
    total = q * sum((v.vertex_weights[g] for g in goods), Fraction(0))
    for e, w in v.edges:
        if goods.issuperset(e):
            total += w * q ** len(e)
    return total


def value_of_mask(v: HypergraphValuation, mask: int) -> Fraction:
    total = Fraction(0)
    j = 0
    rest = mask
    while rest:
        if rest & 1:
            total += v.vertex_weights[j]
        rest >>= 1
        j += 1
    for em, w in v.edge_masks:
        if mask & em == em:
            total += w
    return total


@dataclass(frozen=True)
class Instance:
    """``n`` valuations over the same ``m`` goods, optionally on a support graph."""

    valuations: tuple
    support_graph: Optional[tuple] = None
    num_goods: int = field(default=-1)

    def __post_init__(self) -> None:
        vals = tuple(self.valuations)
        if not vals:
            raise ValueError("an instance needs at least one player")
        m = vals[0].num_goods if self.num_goods < 0 else self.num_goods
        for i, v in enumerate(vals):
            if v.num_goods != m:
                raise ValueError(f"valuation {i} has {v.num_goods} goods, expected {m}")
        object.__setattr__(self, "valuations", vals)
        object.__setattr__(self, "num_goods", m)
        if self.support_graph is not None:
            graph = normalize_graph(self.support_graph, m)
            object.__setattr__(self, "support_graph", graph)
            allowed = set(graph)
            for i, v in enumerate(vals):
                for e, _ in v.edges:
                    if len(e) == 2 and e not in allowed:
                        raise ValueError(f"valuation {i} edge {e} is not in the support graph")

    @property
    def num_players(self) -> int:
        return len(self.valuations)

    @property
    def rank(self) -> int:
        return max(v.rank for v in self.valuations)

    def with_valuation(self, player: int, v: HypergraphValuation) -> "Instance":
        vals = list(self.valuations)
        vals[player] = v
        return Instance(tuple(vals), self.support_graph)

    def without_player_value(self, player: int) -> "Instance":
        return self.with_valuation(player, HypergraphValuation.zero(self.num_goods))

    def edge_graph(self) -> tuple:
        """Support graph if present, else the union of all size-2 valuation edges."""
        if self.support_graph is not None:
            return self.support_graph
        return tuple(sorted({e for v in self.valuations for e, _ in v.edges if len(e) == 2}))


def normalize_graph(edges: Iterable[Sequence[int]], num_goods: int) -> tuple:
    out = set()
    for pair in edges:
        u, v = (int(x) for x in pair)
        if u == v:
            raise ValueError(f"self-loop at good {u}")
        for g in (u, v):
            if not 0 <= g < num_goods:
                raise IndexError(f"support edge {pair} references good {g} outside 0..{num_goods - 1}")
        out.add((min(u, v), max(u, v)))
    return tuple(sorted(out))


@dataclass(frozen=True)
class Allocation:
    """``owner[j]`` is the player holding good ``j`` or :data:`UNALLOCATED`."""

    owner: tuple

    def __post_init__(self) -> None:
        object.__setattr__(self, "owner", tuple(int(o) for o in self.owner))

    @classmethod
    def from_bundles(cls, bundles: Sequence[Iterable[int]], num_goods: int) -> "Allocation":
        owner = [UNALLOCATED] * num_goods
        for i, bundle in enumerate(bundles):
            for j in bundle:
                if owner[j] != UNALLOCATED:
                    raise ValueError(f"good {j} assigned twice")
                owner[j] = i
        return cls(tuple(owner))

    def bundle(self, player: int) -> frozenset:
        return frozenset(j for j, o in enumerate(self.owner) if o == player)

    def bundles(self, num_players: int) -> list[frozenset]:
        return [self.bundle(i) for i in range(num_players)]

    def validate(self, inst: Instance) -> None:
        if len(self.owner) != inst.num_goods:
            raise ValueError(f"allocation covers {len(self.owner)} goods, instance has {inst.num_goods}")
        for j, o in enumerate(self.owner):
            if o != UNALLOCATED and not 0 <= o < inst.num_players:
                raise ValueError(f"good {j} assigned to unknown player {o}")


def welfare(inst: Instance, alloc: Allocation) -> Fraction:
    alloc.validate(inst)
    return sum(
        (value(v, alloc.bundle(i)) for i, v in enumerate(inst.valuations)),
        Fraction(0),
    )


def is_supermodular_witness(v: HypergraphValuation, trials: int, seed: int = 0) -> bool:
    """Randomly search for a violation of supermodularity.

    Draws ``(S, j, k)`` with ``j, k`` outside ``S`` and checks
    ``v(S+j+k) - v(S+j) >= v(S+k) - v(S)``.  Returns ``False`` as soon as a
    violation is seen.
    """
    if trials < 1:
        raise ValueError("trials must be >= 1")
    m = v.num_goods
    if m < 2:
        return True
    rng = random.Random(seed)
    for _ in range(trials):
        j, k = rng.sample(range(m), 2)
        s = {g for g in range(m) if g not in (j, k) and rng.random() < 0.5}
        lhs = value(v, s | {j, k}) - value(v, s | {j})
        rhs = value(v, s | {k}) - value(v, s)
        if lhs < rhs:
            return False
    return True


def integer_weights(valuations: Sequence[HypergraphValuation], extra: Iterable[Fraction] = ()):
    """Scale all weights (and ``extra`` numbers) to integers over a common denominator.

    Returns ``(scale, vertex_ints, edge_ints, extra_ints)`` where
    ``vertex_ints[i][j]`` and ``edge_ints[i] = [(mask, weight)]`` are Python
    ints and every original number equals its integer divided by ``scale``.
    """
    extra = [as_fraction(x) for x in extra]
    scale = 1
    for v in valuations:
        for w in v.vertex_weights:
            scale = math.lcm(scale, w.denominator)
        for _, w in v.edges:
            scale = math.lcm(scale, w.denominator)
    for x in extra:
        scale = math.lcm(scale, x.denominator)
    vertex_ints = [[int(w * scale) for w in v.vertex_weights] for v in valuations]
    edge_ints = [[(m, int(w * scale)) for m, w in v.edge_masks] for v in valuations]
    extra_ints = [int(x * scale) for x in extra]
    return scale, vertex_ints, edge_ints, extra_ints
