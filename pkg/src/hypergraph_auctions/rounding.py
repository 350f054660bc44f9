"""Compact LP relaxation and correlated threshold rounding.

The relaxation has a variable ``x[i][j]`` for every (player, good) and
``z[i][e]`` for every (player, edge of that player)::

    max   sum_i ( sum_j w_ij x_ij + sum_e w_ie z_ie )
    s.t.  sum_i x_ij = 1          for every good j
          z_ie <= x_ij            for every player i, edge e, good j in e
          x, z >= 0

Rounding repeatedly picks a uniformly random player and a uniform threshold
and hands that player every still-unassigned good whose LP share reaches the
threshold.  Player ``i`` then receives all of edge ``e`` with probability at
least ``z_ie / |e|``, which gives an ``r``-approximation in expectation.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from typing import Optional

import numpy as np

from .core import Allocation, Instance
from .exact import value_tables
from .lp import LinearProgram, solve_lp


@dataclass(frozen=True)
class CompactLpSolution:
    x: tuple
    z: dict
    objective: Fraction

    @property
    def num_players(self) -> int:
        return len(self.x)

    @property
    def num_goods(self) -> int:
        return len(self.x[0]) if self.x else 0

    def share_matrix(self) -> np.ndarray:
        """``x`` as floats, each good's column renormalized to sum to one."""
        arr = np.array([[float(v) for v in row] for row in self.x], dtype=float)
        col = arr.sum(axis=0)
        col[col <= 0] = 1.0
        return arr / col


def compact_lp_layout(inst: Instance) -> list[tuple]:
    """Variable order of :func:`build_compact_lp`: ``("x", i, j)`` then ``("z", i, e)``."""
    n, m = inst.num_players, inst.num_goods
    layout = [("x", i, j) for i in range(n) for j in range(m)]
    layout += [("z", i, e) for i, v in enumerate(inst.valuations) for e, _ in v.edges]
    return layout


def build_compact_lp(inst: Instance) -> LinearProgram:
    n, m = inst.num_players, inst.num_goods
    layout = compact_lp_layout(inst)
    col = {key: k for k, key in enumerate(layout)}
    nvar = len(layout)
    obj = [Fraction(0)] * nvar
    for i, v in enumerate(inst.valuations):
        for j, w in enumerate(v.vertex_weights):
            obj[col["x", i, j]] = w
        for e, w in v.edges:
            obj[col["z", i, e]] = w
    names = [f"x_{i}_{j}" if kind == "x" else f"z_{i}_{'_'.join(map(str, j))}" for kind, i, j in layout]
    lp = LinearProgram(obj, names=names)
    for j in range(m):
        row = [0] * nvar
        for i in range(n):
            row[col["x", i, j]] = 1
        lp.add_row(row, "==", 1)
    for i, v in enumerate(inst.valuations):
        for e, _ in v.edges:
            for j in e:
                row = [0] * nvar
                row[col["z", i, e]] = 1
                row[col["x", i, j]] = -1
                lp.add_row(row, "<=", 0)
    return lp


def solve_compact_lp(inst: Instance, exact: bool = True) -> CompactLpSolution:
    lp = build_compact_lp(inst)
    sol = solve_lp(lp, exact=exact)
    if not sol.optimal:
        raise RuntimeError(f"compact LP solve ended with status {sol.status}")
    n, m = inst.num_players, inst.num_goods
    x = tuple(tuple(sol.x[i * m + j] for j in range(m)) for i in range(n))
    z = {(i, e): sol.x[k] for k, (kind, i, e) in enumerate(compact_lp_layout(inst)) if kind == "z"}
    return CompactLpSolution(x, z, sol.objective)


def _iteration_draws(seed: int, it: int, trials: int) -> np.ndarray:
    # one Philox stream per (seed, iteration); row k belongs to trial k, so a
    # trial's draws do not depend on how many trials share the batch
    rng = np.random.Generator(np.random.Philox(np.random.SeedSequence([seed, it])))
    return rng.random((trials, 2))


def round_batch(sol: CompactLpSolution, trials: int, seed: int = 0) -> np.ndarray:
    """Run the threshold rounding ``trials`` times; returns owners, shape ``(trials, m)``."""
    x = sol.share_matrix()
    n, m = x.shape
    owners = np.full((trials, m), -1, dtype=np.int64)
    active = np.arange(trials)
    it = 0
    while active.size:
        draws = _iteration_draws(seed, it, trials)[active]
        player = np.minimum((draws[:, 0] * n).astype(np.int64), n - 1)
        threshold = 1.0 - draws[:, 1]  # in (0, 1], so zero shares never qualify
        sub = owners[active]
        grab = (sub < 0) & (x[player] >= threshold[:, None])
        sub[grab] = np.broadcast_to(player[:, None], sub.shape)[grab]
        owners[active] = sub
        active = active[(sub < 0).any(axis=1)]
        it += 1
    return owners


def round_allocation(sol: CompactLpSolution, seed: int = 0) -> Allocation:
    return Allocation(tuple(int(o) for o in round_batch(sol, 1, seed)[0]))


def lp_rounding_lower_bound(inst: Instance, sol: CompactLpSolution) -> Fraction:
    """``sum w_ij x_ij + sum w_ie z_ie / |e|``: the expected-welfare guarantee."""
    total = Fraction(0)
    for i, v in enumerate(inst.valuations):
        total += sum((w * sol.x[i][j] for j, w in enumerate(v.vertex_weights)), Fraction(0))
        total += sum((w * sol.z[i, e] / len(e) for e, w in v.edges), Fraction(0))
    return total


def batch_welfare(inst: Instance, owners: np.ndarray) -> tuple[np.ndarray, int]:
    """Integer-scaled welfare of every row of ``owners`` and the scale."""
    scale, tables = value_tables(inst)
    total = np.zeros(owners.shape[0], dtype=tables[0].dtype)
    for i, t in enumerate(tables):
        mask = np.zeros(owners.shape[0], dtype=np.int64)
        for j in range(owners.shape[1]):
            mask |= (owners[:, j] == i).astype(np.int64) << j
        total = total + t[mask]
    return total, scale


def solve_and_round(
    inst: Instance, seed: int = 0, trials: int = 1, sol: Optional[CompactLpSolution] = None
) -> tuple[Allocation, dict]:
    """Solve the compact LP, round it ``trials`` times and keep the best draw."""
    if trials < 1:
        raise ValueError("trials must be >= 1")
    if sol is None:
        sol = solve_compact_lp(inst)
    owners = round_batch(sol, trials, seed)
    welfare, scale = batch_welfare(inst, owners)
    best = int(np.argmax(welfare))
    as_float = welfare.astype(float) / scale
    r = inst.rank
    diagnostics = {
        "seed": seed,
        "trials": trials,
        "rank": r,
        "lp_value": sol.objective,
        "certified_lower_bound": sol.objective / r,
        "expected_lower_bound": lp_rounding_lower_bound(inst, sol),
        "best_welfare": Fraction(int(welfare[best]), scale),
        "mean_welfare": float(as_float.mean()),
        "welfare_std": float(as_float.std(ddof=1)) if trials > 1 else 0.0,
    }
    return Allocation(tuple(int(o) for o in owners[best])), diagnostics
