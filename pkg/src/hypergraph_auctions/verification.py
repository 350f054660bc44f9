"""Property suites run by ``hypergraph-auctions verify``.

Each suite returns a list of :class:`Check` results; a suite passes when
every check does.
"""

from __future__ import annotations

import math
import random
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from .core import HypergraphValuation, Instance
from .demand import demand, demand_bruteforce
from .exact import solve_bruteforce, solve_treewidth
from .instances import generate
from .rounding import batch_welfare, round_batch, solve_compact_lp
from .structured import baker_allocate, chromatic_allocate, deviation_search, standard_misreports, vcg_mechanism


@dataclass(frozen=True)
class Check:
    name: str
    passed: bool
    detail: str = ""


def random_valuation(rng: random.Random, m: int, r: int, edge_count: int, hi: int = 10) -> HypergraphValuation:
    vw = [rng.randint(0, hi) for _ in range(m)]
    edges = []
    if m >= 2 and r >= 2:
        for _ in range(edge_count):
            size = rng.randint(2, min(r, m))
            edges.append((rng.sample(range(m), size), rng.randint(0, hi)))
    return HypergraphValuation(m, vw, edges)


def oracle_equivalence(count: int = 500, seed: int = 0) -> list[Check]:
    rng = random.Random(seed)
    mismatches = 0
    first = ""
    for t in range(count):
        m = rng.randint(1, 12)
        v = random_valuation(rng, m, rng.randint(1, 3), rng.randint(0, 2 * m))
        prices = [rng.randint(0, 12) for _ in range(m)]
        if demand(v, prices) != demand_bruteforce(v, prices):
            mismatches += 1
            first = first or f"instance {t}"
    checks = [Check("demand oracle equals brute force", mismatches == 0, f"{count} instances, {mismatches} mismatches {first}".strip())]

    dp_count = max(1, count // 5)
    bad = 0
    for t in range(dp_count):
        inst = generate("grid", seed=seed * 100003 + t, rows=rng.randint(1, 2), cols=rng.randint(1, 4), n=rng.randint(1, 3))
        if solve_treewidth(inst)[1] != solve_bruteforce(inst)[1]:
            bad += 1
    checks.append(Check("tree-decomposition DP equals brute force", bad == 0, f"{dp_count} instances, {bad} mismatches"))
    return checks


def rounding_bounds(count: int = 20, trials: int = 10_000, seed: int = 0) -> list[Check]:
    """Per-good and per-edge marginals and mean welfare against their lower bounds, 3 SE slack."""
    rng = random.Random(seed)
    checks = []
    for t in range(count):
        m, n, r = rng.randint(2, 6), rng.randint(2, 3), rng.randint(2, 3)
        inst = Instance(tuple(random_valuation(rng, m, r, rng.randint(1, 4), hi=6) for _ in range(n)))
        sol = solve_compact_lp(inst)
        owners = round_batch(sol, trials, seed=seed * 7919 + t)
        failures = []
        for i in range(n):
            for j in range(m):
                target = float(sol.x[i][j])
                if target > 0:
                    emp = float(np.mean(owners[:, j] == i))
                    if emp < target - 3 * math.sqrt(target * (1 - target) / trials):
                        failures.append(f"x[{i}][{j}]")
            for e, _ in inst.valuations[i].edges:
                target = float(sol.z[i, e]) / len(e)
                if target > 0:
                    emp = float(np.mean(np.all(owners[:, list(e)] == i, axis=1)))
                    if emp < target - 3 * math.sqrt(target * (1 - target) / trials):
                        failures.append(f"z[{i}]{e}")
        welfare, scale = batch_welfare(inst, owners)
        w = welfare.astype(float) / scale
        se = float(w.std(ddof=1)) / math.sqrt(trials)
        bound = float(sol.objective) / inst.rank
        if w.mean() < bound - 3 * se:
            failures.append("mean welfare")
        checks.append(Check(f"rounding instance {t}", not failures, ", ".join(failures) or f"mean {w.mean():.4f} >= {bound:.4f}"))
    return checks


def truthfulness(count: int = 10, misreports: int = 40, seed: int = 0) -> list[Check]:
    rng = random.Random(seed)
    gen = standard_misreports(misreports)
    mechanisms = {
        "vcg": vcg_mechanism,
        "baker": lambda inst: baker_allocate(inst, Fraction(1, 2)),
        "chromatic": chromatic_allocate,
    }
    checks = []
    for name, mech in mechanisms.items():
        found = None
        for t in range(count):
            inst = generate("grid", seed=seed * 1009 + t, rows=2, cols=rng.randint(1, 3), n=2)
            dev = deviation_search(mech, inst, gen, seed=seed + t)
            if dev is not None:
                found = f"instance {t}: player {dev.player} gains {dev.gain}"
                break
        checks.append(Check(f"{name} has no profitable deviation", found is None, found or f"{count} instances"))
    return checks


SUITES = {
    "oracle-equivalence": oracle_equivalence,
    "rounding-bounds": rounding_bounds,
    "truthfulness": truthfulness,
}
