import random
from fractions import Fraction

import pytest

from hypergraph_auctions.core import HypergraphValuation, Instance


def random_valuation(rng: random.Random, m: int, r: int = 2, edges: int = 3, hi: int = 10) -> HypergraphValuation:
    vw = [rng.randint(0, hi) for _ in range(m)]
    es = []
    if m >= 2 and r >= 2:
        for _ in range(edges):
            size = rng.randint(2, min(r, m))
            es.append((rng.sample(range(m), size), rng.randint(0, hi)))
    return HypergraphValuation(m, vw, es)


def random_instance(rng: random.Random, m: int, n: int, r: int = 2, edges: int = 3, hi: int = 10) -> Instance:
    return Instance(tuple(random_valuation(rng, m, r, edges, hi) for _ in range(n)))


def random_graph_instance(rng: random.Random, graph, m: int, n: int, hi: int = 10, p: float = 0.6) -> Instance:
    vals = []
    for _ in range(n):
        vw = [rng.randint(0, hi) for _ in range(m)]
        es = [(e, rng.randint(0, hi)) for e in graph if rng.random() < p]
        vals.append(HypergraphValuation(m, vw, es))
    return Instance(tuple(vals), tuple(graph))


def triangle_instance() -> Instance:
    """Three players each wanting one side of a triangle: LP 3/2, OPT 1."""
    edges = [(0, 1), (1, 2), (0, 2)]
    return Instance(tuple(HypergraphValuation(3, (0, 0, 0), [(e, 1)]) for e in edges))


@pytest.fixture
def rng():
    return random.Random(12345)


F = Fraction
