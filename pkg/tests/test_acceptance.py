"""Acceptance gate: one test per criterion, each printing a PASS/FAIL line.

Tolerances are fixed; seeds are fixed so the Monte Carlo checks are
reproducible, and instance sets are chosen by structural properties
(fractional LP optimum, width, degree), never by test outcomes.
"""

import itertools
import math
import random
import time
from fractions import Fraction

import numpy as np
import pytest
from scipy.optimize import linprog

from hypergraph_auctions.core import Allocation, HypergraphValuation, Instance, value, welfare
from hypergraph_auctions.demand import demand, demand_bruteforce
from hypergraph_auctions.exact import build_tree_decomposition, solve_bruteforce, solve_treewidth
from hypergraph_auctions.instances import generate, star
from hypergraph_auctions.midr import (
    MidrConfig,
    decompose,
    proxy_valuation,
    resolve_conflicts_batch,
    run_midr,
    solve_config_lp,
)
from hypergraph_auctions.rounding import batch_welfare, round_batch, solve_compact_lp
from hypergraph_auctions.structured import (
    MechanismOutcome,
    baker_allocate,
    chromatic_allocate,
    deviation_search,
    standard_misreports,
    vcg_mechanism,
)

from conftest import random_graph_instance, random_instance, random_valuation, triangle_instance


@pytest.fixture
def report(capsys):
    def emit(number, passed, detail):
        with capsys.disabled():
            print(f"\n[acceptance {number:>2}] {'PASS' if passed else 'FAIL'}: {detail}")

    return emit


def se(p, trials):
    return math.sqrt(max(p * (1 - p), 0.0) / trials)


# -- shared instance sets -----------------------------------------------------


def rounding_instances():
    """Triangle plus the first 19 seeded instances whose compact LP optimum is fractional."""
    out = [triangle_instance()]
    seed = 0
    while len(out) < 20:
        rng = random.Random(1000 + seed)
        seed += 1
        m, n, r = rng.randint(3, 6), rng.randint(2, 3), rng.randint(2, 3)
        inst = Instance(
            tuple(
                HypergraphValuation(
                    m,
                    [rng.randint(0, 2) for _ in range(m)],
                    [(rng.sample(range(m), rng.randint(2, r)), rng.randint(1, 10)) for _ in range(rng.randint(1, 3))],
                )
                for _ in range(n)
            )
        )
        sol = solve_compact_lp(inst)
        if any(x.denominator != 1 for row in sol.x for x in row):
            out.append(inst)
    return out


def midr_instances():
    rng = random.Random(77)
    out = []
    while len(out) < 50:
        m, n = rng.randint(2, 5), rng.randint(1, 3)
        inst = random_instance(rng, m, n, r=2, edges=rng.randint(1, 4))
        if inst.rank == 2:
            out.append(inst)
    return out


def full_config_lp_value(inst, B):
    n, m = inst.num_players, inst.num_goods
    proxies = [proxy_valuation(v, B) for v in inst.valuations]
    cols = [(i, mask) for i in range(n) for mask in range(1, 1 << m)]
    c = -np.array([float(value(proxies[i], [g for g in range(m) if mask >> g & 1])) for i, mask in cols])
    A = np.zeros((n + m, len(cols)))
    for k, (i, mask) in enumerate(cols):
        A[i, k] = 1
        for g in range(m):
            if mask >> g & 1:
                A[n + g, k] = 1
    res = linprog(c, A_ub=A, b_ub=[1.0] * n + [float(B)] * m, bounds=[(0, None)] * len(cols), method="highs")
    assert res.status == 0
    return -res.fun


# -- criteria -------------------------------------------------------------------


def test_01_demand_oracle_equivalence(report):
    start = time.perf_counter()
    rng = random.Random(1)
    mismatches = 0
    count = 500
    for _ in range(count):
        m = rng.randint(1, 12)
        v = random_valuation(rng, m, rng.randint(1, 3), rng.randint(0, 2 * m))
        prices = [Fraction(rng.randint(0, 24), rng.choice((1, 2))) for _ in range(m)]
        if demand(v, prices) != demand_bruteforce(v, prices):
            mismatches += 1
    elapsed = time.perf_counter() - start
    passed = mismatches == 0 and elapsed < 60
    report(1, passed, f"demand == brute force on {count} instances (m<=12, r<=3), {mismatches} mismatches, {elapsed:.1f}s")
    assert passed


def test_02_treewidth_dp_equals_bruteforce(report):
    start = time.perf_counter()
    rng = random.Random(2)
    done = mismatches = 0
    while done < 200:
        m = rng.randint(2, 8)
        graph = [(u, v) for u in range(m) for v in range(u + 1, m) if rng.random() < 0.4]
        if build_tree_decomposition(graph, m).width > 3:
            continue
        inst = random_graph_instance(rng, graph, m, rng.randint(1, 3), hi=rng.choice((2, 10)))
        if solve_treewidth(inst)[1] != solve_bruteforce(inst)[1]:
            mismatches += 1
        done += 1
    elapsed = time.perf_counter() - start
    passed = mismatches == 0 and elapsed < 120
    report(2, passed, f"DP welfare == brute force on {done} instances (width<=3, m<=8, n<=3), {mismatches} mismatches, {elapsed:.1f}s")
    assert passed


def test_03_rounding_marginals(report):
    start = time.perf_counter()
    trials = 100_000
    checks = failures = 0
    worst = math.inf
    for t, inst in enumerate(rounding_instances()):
        sol = solve_compact_lp(inst)
        owners = round_batch(sol, trials, seed=t)
        for i in range(inst.num_players):
            for j in range(inst.num_goods):
                target = float(sol.x[i][j])
                if target > 0:
                    emp = float(np.mean(owners[:, j] == i))
                    checks += 1
                    margin = (emp - target) / max(se(target, trials), 1e-12)
                    worst = min(worst, margin)
                    failures += margin < -3
            for e, _ in inst.valuations[i].edges:
                target = float(sol.z[i, e]) / len(e)
                if target > 0:
                    emp = float(np.mean(np.all(owners[:, list(e)] == i, axis=1)))
                    checks += 1
                    margin = (emp - target) / max(se(target, trials), 1e-12)
                    worst = min(worst, margin)
                    failures += margin < -3
    elapsed = time.perf_counter() - start
    passed = failures == 0 and elapsed < 300
    report(3, passed, f"{checks} marginal checks on 20 instances x {trials} trials, {failures} below bound - 3 SE (worst {worst:+.2f} SE), {elapsed:.1f}s")
    assert passed


def test_04_rounding_approximation(report):
    trials = 10_000
    failures = 0
    worst = math.inf
    instances = rounding_instances()
    for t, inst in enumerate(instances):
        sol = solve_compact_lp(inst)
        _, opt = solve_bruteforce(inst)
        w, scale = batch_welfare(inst, round_batch(sol, trials, seed=100 + t))
        samples = w.astype(float) / scale
        mean = samples.mean()
        err = samples.std(ddof=1) / math.sqrt(trials)
        r = inst.rank
        for bound in (float(sol.objective) / r, float(opt) / r):
            worst = min(worst, mean - bound)
            failures += mean < bound - 3 * err
    passed = failures == 0
    report(4, passed, f"mean welfare >= LP/r - 3 SE and >= OPT/r - 3 SE on {len(instances)} instances x {trials} trials, {failures} failures (min slack {worst:+.3f})")
    assert passed


def _alpha_beta(inst, alloc, parts):
    """Per-part counting terms for an allocation ``alloc`` on a graph instance."""
    beta_u = {}
    beta_e = {}
    for j, o in enumerate(alloc.owner):
        beta_u[j] = inst.valuations[o].vertex_weights[j] if o >= 0 else Fraction(0)
    for u, v in inst.support_graph:
        o = alloc.owner[u]
        beta_e[u, v] = dict(inst.valuations[o].edges).get((u, v), Fraction(0)) if o >= 0 and o == alloc.owner[v] else Fraction(0)
    beta = sum(beta_u.values(), Fraction(0)) + sum(beta_e.values(), Fraction(0))
    alphas = [
        sum((beta_u[u] for u in p), Fraction(0)) + sum((w for e, w in beta_e.items() if set(e) & set(p)), Fraction(0))
        for p in parts
    ]
    return alphas, beta


def test_05_baker_mechanism(report):
    start = time.perf_counter()
    eps = Fraction(1, 2)
    rng = random.Random(5)
    count = 0
    bound_fail = counting_fail = 0
    worst = Fraction(10)
    for t in range(100):
        rows, cols = rng.randint(2, 4), rng.randint(2, 4)
        inst = generate("grid", seed=500 + t, rows=rows, cols=cols, n=2)
        opt_alloc, opt = solve_bruteforce(inst)
        out = baker_allocate(inst, eps, with_payments=False)
        if out.range_welfare < (1 - eps) * opt or welfare(inst, out.allocation) != out.range_welfare:
            bound_fail += 1
        if opt:
            worst = min(worst, out.range_welfare / opt)
        parts = out.diagnostics["parts"]
        alphas, beta = _alpha_beta(inst, opt_alloc, parts)
        if beta != opt or sum(alphas, Fraction(0)) > 2 * beta:
            counting_fail += 1
        if any(pw < beta - a for pw, a in zip(out.diagnostics["part_welfare"], alphas)):
            counting_fail += 1
        count += 1
    elapsed = time.perf_counter() - start
    passed = bound_fail == 0 and counting_fail == 0 and elapsed < 300
    report(5, passed, f"baker(eps=1/2) >= (1-eps)OPT on {count} grids up to 4x4 ({bound_fail} failures, worst ratio {float(worst):.3f}); sum alpha_i <= 2 beta ({counting_fail} failures), {elapsed:.1f}s")
    assert passed


def pay_your_bid(inst):
    alloc, w = solve_bruteforce(inst)
    return MechanismOutcome(alloc, tuple(value(v, alloc.bundle(i)) for i, v in enumerate(inst.valuations)), w)


def test_06_truthfulness(report):
    start = time.perf_counter()
    misreports = standard_misreports(40)
    mechanisms = {"vcg-brute": vcg_mechanism, "baker": lambda inst: baker_allocate(inst, Fraction(1, 2))}
    found = {name: 0 for name in mechanisms}
    instances = [
        generate("grid", seed=600 + t, rows=(1, 2)[t % 2], cols=2 + t % 3, n=2 + (t % 5 == 0)) for t in range(50)
    ]
    for t, inst in enumerate(instances):
        for name, mech in mechanisms.items():
            if deviation_search(mech, inst, misreports, tol=0, seed=t) is not None:
                found[name] += 1
    flagged = sum(deviation_search(pay_your_bid, inst, misreports, seed=t) is not None for t, inst in enumerate(instances[:5]))
    elapsed = time.perf_counter() - start
    passed = not any(found.values()) and flagged > 0
    report(6, passed, f"{len(instances)} instances x 40 misreports per player: deviations {found}; pay-your-bid flagged on {flagged}/5, {elapsed:.1f}s")
    assert passed


def test_07_midr_pipeline(report):
    start = time.perf_counter()
    instances = midr_instances()
    ident_fail = bound_fail = raised = 0
    max_coord_err = 0.0
    max_sum_err = 0.0
    outcomes = []
    for inst in instances:
        m = inst.num_goods
        cfg = MidrConfig.default(m)
        ysol = solve_config_lp(inst, cfg)
        dec = decompose(ysol, cfg, inst)
        raised += dec.alpha != cfg.alpha
        marg = dec.marginals()
        for i, S, y in ysol.columns:
            max_coord_err = max(max_coord_err, abs(float(marg.get((i, S), 0) - y / dec.alpha)))
        for key in marg:
            if key not in {(i, S) for i, S, _ in ysol.columns}:
                max_coord_err = max(max_coord_err, float(marg[key]))
        max_sum_err = max(max_sum_err, abs(float(sum(lam for lam, _ in dec.points) - 1)))
        _, opt = solve_bruteforce(inst)
        expected = ysol.objective / dec.alpha
        if expected < opt / (cfg.alpha * cfg.B**2):
            bound_fail += 1
        outcomes.append((inst, cfg, dec))
    ident_fail = (max_coord_err > 1e-9) + (max_sum_err > 1e-12)

    # (c) Monte Carlo on the heaviest nonempty integral point of 5 instances
    draws = 100_000
    mc_fail = 0
    mc_detail = []
    for k, (inst, cfg, dec) in enumerate(outcomes[:5]):
        nonempty = [(lam, b) for lam, b in dec.points if any(b)]
        _, bundles = max(nonempty, key=lambda p: p[0])
        f = sum((value(proxy_valuation(v, cfg.B), bundles[i]) for i, v in enumerate(inst.valuations)), Fraction(0))
        w, scale = batch_welfare(inst, resolve_conflicts_batch(bundles, cfg.B, inst.num_goods, draws, seed=k))
        samples = w.astype(float) / scale
        z = (samples.mean() - float(f)) / (samples.std(ddof=1) / math.sqrt(draws))
        mc_detail.append(f"{z:+.2f}")
        mc_fail += abs(z) > 3

    # (d) expected-utility deviation search
    dev_fail = 0
    pairs = 0
    gen = standard_misreports(10)
    for t, inst in enumerate(instances[:10]):
        pairs += 10 * inst.num_players
        if deviation_search(run_midr, inst, gen, tol=Fraction(1, 10**6), seed=t) is not None:
            dev_fail += 1
    elapsed = time.perf_counter() - start
    passed = not (ident_fail or bound_fail or mc_fail or dev_fail)
    report(
        7,
        passed,
        f"{len(instances)} instances: identity max err {max_coord_err:.1e}/sum {max_sum_err:.1e}; bound failures {bound_fail}; "
        f"alpha raised {raised}; MC z-scores {', '.join(mc_detail)}; deviations {dev_fail} over {pairs} pairs, {elapsed:.1f}s",
    )
    assert passed


def test_08_config_lp_matches_full_enumeration(report):
    instances = [inst for inst in midr_instances() + rounding_instances() if inst.num_goods <= 6 and inst.num_players <= 3]
    worst = 0.0
    for inst in instances:
        cfg = MidrConfig.default(inst.num_goods)
        ours = float(solve_config_lp(inst, cfg).objective)
        worst = max(worst, abs(ours - full_config_lp_value(inst, cfg.B)))
    passed = worst <= 1e-8
    report(8, passed, f"config LP vs full enumeration on {len(instances)} instances, max |diff| {worst:.1e}")
    assert passed


def test_09_star_regression(report):
    inst = star(4)
    _, opt = solve_bruteforce(inst)
    lp = solve_compact_lp(inst).objective
    B = MidrConfig.default(4).B
    proxies = [proxy_valuation(v, B) for v in inst.valuations]
    bound_ok = pattern_ok = True
    for owner in itertools.product(range(2), repeat=4):
        a = Allocation(owner)
        true_w = welfare(inst, a)
        proxy_w = sum((value(p, a.bundle(i)) for i, p in enumerate(proxies)), Fraction(0))
        bound_ok &= proxy_w >= true_w / B**2
        # equality exactly when no welfare comes from a single good's weight
        vertex_part = sum((inst.valuations[o].vertex_weights[j] for j, o in enumerate(owner)), Fraction(0))
        pattern_ok &= (proxy_w == true_w / B**2) == (vertex_part == 0)
    passed = opt == 3 and lp >= 3 and bound_ok and pattern_ok
    report(9, passed, f"star(4): OPT={opt}, compact LP={lp}, proxy bound over 16 allocations {'holds' if bound_ok else 'fails'}, equality pattern {'matches' if pattern_ok else 'differs'}")
    assert passed


def _degree_bounded_graph(rng, m, cap=3):
    pairs = [(u, v) for u in range(m) for v in range(u + 1, m)]
    rng.shuffle(pairs)
    deg = [0] * m
    graph = []
    for u, v in pairs:
        if deg[u] < cap and deg[v] < cap and rng.random() < 0.6:
            graph.append((u, v))
            deg[u] += 1
            deg[v] += 1
    return graph


def test_10_chromatic_mechanism(report):
    rng = random.Random(10)
    failures = 0
    colors_seen = []
    for _ in range(100):
        m = rng.randint(2, 8)
        graph = _degree_bounded_graph(rng, m)
        inst = random_graph_instance(rng, graph, m, rng.randint(1, 3))
        out = chromatic_allocate(inst, with_payments=False)
        colors = max(out.diagnostics["colors_used"], 1)
        colors_seen.append(colors)
        _, opt = solve_bruteforce(inst)
        failures += out.range_welfare * colors < opt
    passed = failures == 0
    report(10, passed, f"welfare x colors >= OPT on 100 max-degree-3 graphs (colors {min(colors_seen)}..{max(colors_seen)}), {failures} failures")
    assert passed
