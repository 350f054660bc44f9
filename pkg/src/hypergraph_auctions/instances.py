"""Instance files, result documents and seeded instance generators.

Instance files are JSON with a fixed key order.  Weights are written as
decimal strings (``"2.5"``) so that they round-trip exactly; a weight whose
decimal expansion does not terminate is written as ``"p/q"``.
"""

from __future__ import annotations

import json
import math
import random
from fractions import Fraction
from pathlib import Path
from typing import Any, Optional, Union

from .core import Allocation, HypergraphValuation, Instance


class InstanceFormatError(ValueError):
    """Raised for malformed instance documents; the message names the location."""


def format_number(x: Fraction) -> str:
    x = Fraction(x)
    den = x.denominator
    twos = fives = 0
    while den % 2 == 0:
        den //= 2
        twos += 1
    while den % 5 == 0:
        den //= 5
        fives += 1
    if den != 1:
        return f"{x.numerator}/{x.denominator}"
    places = max(twos, fives)
    scaled = abs(x.numerator) * (10**places // x.denominator)
    sign = "-" if x < 0 else ""
    if places == 0:
        return f"{sign}{scaled}"
    digits = str(scaled).rjust(places + 1, "0")
    whole, frac = digits[:-places], digits[-places:].rstrip("0")
    return f"{sign}{whole}.{frac}" if frac else f"{sign}{whole}"


def _parse_weight(raw: Any, where: str) -> Fraction:
    if isinstance(raw, bool) or not isinstance(raw, (str, int)):
        raise InstanceFormatError(f"{where}: weight must be a decimal string, got {raw!r}")
    try:
        w = Fraction(str(raw).strip())
    except (ValueError, ZeroDivisionError):
        raise InstanceFormatError(f"{where}: cannot parse weight {raw!r}") from None
    if w < 0:
        raise InstanceFormatError(f"{where}: negative weight {raw}")
    return w


def _parse_int(raw: Any, where: str) -> int:
    if isinstance(raw, bool) or not isinstance(raw, int):
        raise InstanceFormatError(f"{where}: expected an integer, got {raw!r}")
    return raw


def from_document(doc: Any) -> Instance:
    if not isinstance(doc, dict):
        raise InstanceFormatError("top level must be an object")
    for key in ("num_players", "num_goods", "valuations"):
        if key not in doc:
            raise InstanceFormatError(f"missing field {key!r}")
    unknown = set(doc) - {"num_players", "num_goods", "valuations", "support_graph"}
    if unknown:
        raise InstanceFormatError(f"unknown fields {sorted(unknown)}")
    n = _parse_int(doc["num_players"], "num_players")
    m = _parse_int(doc["num_goods"], "num_goods")
    if n < 1 or m < 0:
        raise InstanceFormatError("num_players must be >= 1 and num_goods >= 0")
    raw_vals = doc["valuations"]
    if not isinstance(raw_vals, list) or len(raw_vals) != n:
        raise InstanceFormatError(f"valuations: expected an array of {n} entries")
    vals = []
    for i, rv in enumerate(raw_vals):
        where = f"valuations[{i}]"
        if not isinstance(rv, dict) or "vertex_weights" not in rv:
            raise InstanceFormatError(f"{where}: expected an object with vertex_weights")
        vw = rv["vertex_weights"]
        if not isinstance(vw, list) or len(vw) != m:
            raise InstanceFormatError(f"{where}.vertex_weights: expected {m} entries")
        weights = [_parse_weight(w, f"{where}.vertex_weights[{j}]") for j, w in enumerate(vw)]
        edges = []
        for k, re_ in enumerate(rv.get("edges", [])):
            ew = f"{where}.edges[{k}]"
            if not isinstance(re_, dict) or "goods" not in re_ or "weight" not in re_:
                raise InstanceFormatError(f"{ew}: expected an object with goods and weight")
            goods = re_["goods"]
            if not isinstance(goods, list) or not goods:
                raise InstanceFormatError(f"{ew}.goods: expected a nonempty array")
            goods = [_parse_int(g, f"{ew}.goods") for g in goods]
            for g in goods:
                if not 0 <= g < m:
                    raise InstanceFormatError(f"{ew}.goods: good index {g} out of range 0..{m - 1}")
            if len(set(goods)) != len(goods):
                raise InstanceFormatError(f"{ew}.goods: repeated good")
            edges.append((goods, _parse_weight(re_["weight"], f"{ew}.weight")))
        vals.append(HypergraphValuation(m, tuple(weights), tuple(edges)))
    graph = None
    if doc.get("support_graph") is not None:
        graph = []
        for k, pair in enumerate(doc["support_graph"]):
            where = f"support_graph[{k}]"
            if not isinstance(pair, list) or len(pair) != 2:
                raise InstanceFormatError(f"{where}: expected a pair of goods")
            u, v = (_parse_int(g, where) for g in pair)
            if not (0 <= u < m and 0 <= v < m) or u == v:
                raise InstanceFormatError(f"{where}: invalid edge {pair}")
            graph.append((u, v))
    try:
        return Instance(tuple(vals), None if graph is None else tuple(graph), num_goods=m)
    except ValueError as exc:
        raise InstanceFormatError(str(exc)) from None


def to_document(inst: Instance) -> dict:
    doc: dict = {
        "num_players": inst.num_players,
        "num_goods": inst.num_goods,
        "valuations": [
            {
                "vertex_weights": [format_number(w) for w in v.vertex_weights],
                "edges": [{"goods": list(e), "weight": format_number(w)} for e, w in v.edges],
            }
            for v in inst.valuations
        ],
    }
    if inst.support_graph is not None:
        doc["support_graph"] = [list(e) for e in inst.support_graph]
    return doc


def serialize(inst: Instance) -> str:
    return json.dumps(to_document(inst), indent=2) + "\n"


def loads(text: str) -> Instance:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise InstanceFormatError(f"not valid JSON: {exc}") from None
    return from_document(doc)


def parse(path: Union[str, Path]) -> Instance:
    return loads(Path(path).read_text(encoding="utf-8"))


def dump(inst: Instance, path: Union[str, Path]) -> None:
    Path(path).write_text(serialize(inst), encoding="utf-8")


def to_jsonable(x: Any) -> Any:
    if isinstance(x, Fraction):
        return format_number(x)
    if isinstance(x, Allocation):
        return list(x.owner)
    if isinstance(x, dict):
        return {str(k): to_jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [to_jsonable(v) for v in x]
    if isinstance(x, (frozenset, set)):
        return sorted(x)
    return x


def results_document(
    algorithm: str,
    seed: Optional[int],
    allocation: Allocation,
    welfare: Fraction,
    lp_value: Optional[Fraction] = None,
    payments=None,
    ratio_certificate: Optional[Fraction] = None,
) -> dict:
    doc: dict = {
        "algorithm": algorithm,
        "seed": seed,
        "allocation": list(allocation.owner),
        "welfare": format_number(welfare),
    }
    if lp_value is not None:
        doc["lp_value"] = format_number(lp_value)
    if payments is not None:
        doc["payments"] = [format_number(p) for p in payments]
    if ratio_certificate is not None:
        doc["ratio_certificate"] = format_number(ratio_certificate)
    return doc


# -- generators -------------------------------------------------------------

KINDS = ("random-hypergraph", "grid", "single-minded", "star")


def grid_graph(rows: int, cols: int) -> list[tuple[int, int]]:
    edges = []
    for r in range(rows):
        for c in range(cols):
            g = r * cols + c
            if c + 1 < cols:
                edges.append((g, g + 1))
            if r + 1 < rows:
                edges.append((g, g + cols))
    return edges


def _sqrt_weight(m: int) -> Fraction:
    root = math.isqrt(m)
    if root * root == m:
        return Fraction(root)
    return Fraction(round(math.sqrt(m) * 10**6), 10**6)


def generate(kind: str, seed: int = 0, **params) -> Instance:
    """Seeded instance generator.

    ``random-hypergraph``: ``m, n, r=2, edge_count=3, weight_range=(0, 10)``;
    ``grid``: ``rows, cols, n, edge_prob=0.5`` with integer weights in [0, 10];
    ``single-minded``: ``m, n, bundle_size``; ``star``: ``m``.
    """
    rng = random.Random(seed)
    try:
        if kind == "random-hypergraph":
            return _random_hypergraph(rng, **params)
        if kind == "grid":
            return _grid(rng, **params)
        if kind == "single-minded":
            return _single_minded(rng, **params)
        if kind == "star":
            return star(**params)
    except TypeError as exc:
        raise ValueError(f"bad parameters for {kind}: {exc}") from None
    raise ValueError(f"unknown instance kind {kind!r}; expected one of {KINDS}")


def _random_hypergraph(rng, m, n, r=2, edge_count=3, weight_range=(0, 10)) -> Instance:
    lo, hi = weight_range
    if m < 1 or n < 1 or r < 1 or edge_count < 0 or lo < 0 or hi < lo:
        raise ValueError("random-hypergraph needs m, n, r >= 1, edge_count >= 0 and 0 <= lo <= hi")
    vals = []
    for _ in range(n):
        vw = [rng.randint(lo, hi) for _ in range(m)]
        edges = []
        if m >= 2 and r >= 2:
            for _ in range(edge_count):
                size = rng.randint(2, min(r, m))
                edges.append((rng.sample(range(m), size), rng.randint(lo, hi)))
        vals.append(HypergraphValuation(m, vw, edges))
    return Instance(tuple(vals))


def _grid(rng, rows, cols, n, edge_prob=0.5) -> Instance:
    if rows < 1 or cols < 1 or n < 1:
        raise ValueError("grid needs rows, cols, n >= 1")
    m = rows * cols
    graph = grid_graph(rows, cols)
    vals = []
    for _ in range(n):
        vw = [rng.randint(0, 10) for _ in range(m)]
        edges = [(e, rng.randint(0, 10)) for e in graph if rng.random() < edge_prob]
        vals.append(HypergraphValuation(m, vw, edges))
    return Instance(tuple(vals), tuple(graph))


def _single_minded(rng, m, n, bundle_size) -> Instance:
    if not 1 <= bundle_size <= m or n < 1:
        raise ValueError("single-minded needs 1 <= bundle_size <= m and n >= 1")
    vals = []
    for _ in range(n):
        bundle = rng.sample(range(m), bundle_size)
        vals.append(HypergraphValuation(m, (0,) * m, [(bundle, rng.randint(1, 10))]))
    return Instance(tuple(vals))


def star(m: int) -> Instance:
    """Two players: one values good 0 at sqrt(m); the other values a unit-weight
    star of edges from good 0 to every other good."""
    if m < 2:
        raise ValueError("star needs m >= 2")
    first = HypergraphValuation(m, (_sqrt_weight(m),) + (0,) * (m - 1), ())
    second = HypergraphValuation(m, (0,) * m, [((0, j), 1) for j in range(1, m)])
    return Instance((first, second))
