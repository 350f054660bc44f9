"""Dense two-phase tableau simplex with Bland's rule, plus column generation.

The solver works over :class:`fractions.Fraction` when every input is
rational (exact mode) and over floats otherwise.  Problems are stated as::

    maximize    c . x
    subject to  A[i] . x  (<=, ==, >=)  b[i]
                x >= lower

Duals follow the usual sign convention for a maximization: ``y_i >= 0`` on
``<=`` rows, ``y_i <= 0`` on ``>=`` rows, free on equalities, and at an
optimum every reduced cost ``c_j - y . A_j`` is nonpositive.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Optional, Sequence

log = logging.getLogger(__name__)

FLOAT_TOL = 1e-9
SENSES = ("<=", "==", ">=")

OPTIMAL = "optimal"
INFEASIBLE = "infeasible"
UNBOUNDED = "unbounded"


class PricingError(RuntimeError):
    """Column generation hit its iteration cap without certifying optimality."""


@dataclass
class LinearProgram:
    objective: list
    rows: list = field(default_factory=list)
    senses: list = field(default_factory=list)
    rhs: list = field(default_factory=list)
    lower: Optional[list] = None
    maximize: bool = True
    names: Optional[list] = None

    def __post_init__(self) -> None:
        self.objective = list(self.objective)
        self.rows = [list(r) for r in self.rows]
        self.senses = list(self.senses)
        self.rhs = list(self.rhs)
        n = len(self.objective)
        if not (len(self.rows) == len(self.senses) == len(self.rhs)):
            raise ValueError("rows, senses and rhs must have equal length")
        for i, row in enumerate(self.rows):
            if len(row) != n:
                raise ValueError(f"row {i} has {len(row)} coefficients, expected {n}")
        for s in self.senses:
            if s not in SENSES:
                raise ValueError(f"unknown constraint sense {s!r}")
        if self.lower is not None and len(self.lower) != n:
            raise ValueError("lower bounds must match the number of variables")
        if self.names is not None and len(self.names) != n:
            raise ValueError("names must match the number of variables")

    @property
    def num_vars(self) -> int:
        return len(self.objective)

    @property
    def num_rows(self) -> int:
        return len(self.rows)

    def add_row(self, coeffs: Sequence, sense: str, rhs) -> int:
        if len(coeffs) != self.num_vars:
            raise ValueError("row length mismatch")
        if sense not in SENSES:
            raise ValueError(f"unknown constraint sense {sense!r}")
        self.rows.append(list(coeffs))
        self.senses.append(sense)
        self.rhs.append(rhs)
        return len(self.rows) - 1

    def add_column(self, cost, column: Sequence, lower=0, name: Optional[str] = None) -> int:
        if len(column) != self.num_rows:
            raise ValueError(f"column has {len(column)} entries, LP has {self.num_rows} rows")
        self.objective.append(cost)
        for row, a in zip(self.rows, column):
            row.append(a)
        if self.lower is not None:
            self.lower.append(lower)
        elif lower != 0:
            self.lower = [0] * (self.num_vars - 1) + [lower]
        if self.names is not None:
            self.names.append(name or f"x{self.num_vars - 1}")
        return self.num_vars - 1

    def is_rational(self) -> bool:
        def ok(x):
            return isinstance(x, (int, Fraction))

        return (
            all(ok(c) for c in self.objective)
            and all(ok(a) for row in self.rows for a in row)
            and all(ok(b) for b in self.rhs)
            and (self.lower is None or all(ok(x) for x in self.lower))
        )


@dataclass
class LpSolution:
    status: str
    x: list = field(default_factory=list)
    objective: object = None
    duals: list = field(default_factory=list)
    pivots: int = 0

    @property
    def optimal(self) -> bool:
        return self.status == OPTIMAL


class _Tableau:
    def __init__(self, rows, rhs, basis, zero, tol):
        self.a = rows
        self.b = rhs
        self.basis = basis
        self.zero = zero
        self.tol = tol
        self.pivots = 0

    def reduced_costs(self, cost):
        d = list(cost)
        val = self.zero
        for r, j in enumerate(self.basis):
            cb = cost[j]
            if cb:
                row = self.a[r]
                for k, x in enumerate(row):
                    if x:
                        d[k] -= cb * x
                val += cb * self.b[r]
        return d, val

    def pivot(self, r, c, d):
        row = self.a[r]
        piv = row[c]
        if piv != 1:
            row = [x / piv for x in row]
            self.a[r] = row
            self.b[r] = self.b[r] / piv
        nz = [k for k, x in enumerate(row) if x]
        br = self.b[r]
        for i, other in enumerate(self.a):
            if i == r:
                continue
            f = other[c]
            if f:
                for k in nz:
                    other[k] -= f * row[k]
                other[c] = self.zero
                self.b[i] -= f * br
        f = d[c]
        if f:
            for k in nz:
                d[k] -= f * row[k]
            d[c] = self.zero
        self.basis[r] = c
        self.pivots += 1

    def run(self, d, allowed):
        """Bland's rule iterations; returns False if unbounded."""
        tol = self.tol
        while True:
            enter = next((j for j in allowed if d[j] > tol), None)
            if enter is None:
                return True
            leave, best = None, None
            for r, row in enumerate(self.a):
                a = row[enter]
                if a > tol:
                    ratio = self.b[r] / a
                    if (
                        best is None
                        or ratio < best - tol
                        or (abs(ratio - best) <= tol and self.basis[r] < self.basis[leave])
                    ):
                        leave, best = r, ratio
            if leave is None:
                return False
            self.pivot(leave, enter, d)


def solve_lp(lp: LinearProgram, exact: Optional[bool] = None, tol: Optional[float] = None) -> LpSolution:
    """Solve ``lp`` by the two-phase simplex method with Bland's rule.

    Infeasible and unbounded programs are reported through
    :attr:`LpSolution.status` rather than raised.
    """
    if exact is None:
        exact = lp.is_rational()
    conv = Fraction if exact else float
    zero = conv(0)
    if tol is None:
        tol = 0 if exact else FLOAT_TOL
    n, mrows = lp.num_vars, lp.num_rows
    sign = 1 if lp.maximize else -1
    c = [sign * conv(x) for x in lp.objective]
    lower = [conv(x) for x in lp.lower] if lp.lower is not None else [zero] * n
    A = [[conv(x) for x in row] for row in lp.rows]
    b = [conv(x) - sum((A[i][j] * lower[j] for j in range(n) if lower[j]), zero) for i, x in enumerate(lp.rhs)]

    flips = []
    senses = []
    for i in range(mrows):
        s = lp.senses[i]
        if b[i] < 0:
            A[i] = [-x for x in A[i]]
            b[i] = -b[i]
            s = {"<=": ">=", ">=": "<=", "==": "=="}[s]
            flips.append(-1)
        else:
            flips.append(1)
        senses.append(s)

    # column layout: originals | slack/surplus | artificials
    n_slack = sum(1 for s in senses if s != "==")
    n_art = sum(1 for s in senses if s != "<=")
    width = n + n_slack + n_art
    rows = []
    basis = []
    unit_col = []
    artificial = set()
    si, ai = n, n + n_slack
    for i in range(mrows):
        row = A[i] + [zero] * (n_slack + n_art)
        if senses[i] == "<=":
            row[si] = conv(1)
            basis.append(si)
            unit_col.append(si)
            si += 1
        else:
            if senses[i] == ">=":
                row[si] = conv(-1)
                si += 1
            row[ai] = conv(1)
            basis.append(ai)
            unit_col.append(ai)
            artificial.add(ai)
            ai += 1
        rows.append(row)

    tab = _Tableau(rows, list(b), basis, zero, tol)
    if artificial:
        phase1 = [zero] * width
        for j in artificial:
            phase1[j] = conv(-1)
        d, _ = tab.reduced_costs(phase1)
        tab.run(d, range(width))
        infeas = sum((tab.b[r] for r, j in enumerate(tab.basis) if j in artificial), zero)
        if infeas > tol:
            return LpSolution(INFEASIBLE, pivots=tab.pivots)
        for r in range(mrows):
            if tab.basis[r] in artificial:
                col = next((j for j in range(n + n_slack) if abs(tab.a[r][j]) > tol), None)
                if col is not None:
                    tab.pivot(r, col, [zero] * width)

    cost = c + [zero] * (n_slack + n_art)
    d, _ = tab.reduced_costs(cost)
    allowed = [j for j in range(width) if j not in artificial]
    if not tab.run(d, allowed):
        return LpSolution(UNBOUNDED, pivots=tab.pivots)

    x = [zero] * n
    for r, j in enumerate(tab.basis):
        if j < n:
            x[j] = tab.b[r]
    x = [xi + li for xi, li in zip(x, lower)]
    duals = [sign * flips[i] * -d[unit_col[i]] for i in range(mrows)]
    objective = sum((conv(cj) * xj for cj, xj in zip(lp.objective, x)), zero)
    return LpSolution(OPTIMAL, x, objective, duals, tab.pivots)


Pricer = Callable[[list, LpSolution], Optional[Sequence[tuple]]]


def solve_with_pricing(
    restricted: LinearProgram,
    pricer: Pricer,
    max_iterations: int = 1000,
    exact: Optional[bool] = None,
    tol: Optional[float] = None,
) -> LpSolution:
    """Column generation over an implicit column set.

    ``pricer(duals, solution)`` returns ``None`` (or an empty sequence) when
    no column prices out, otherwise a sequence of ``(cost, column)`` or
    ``(cost, column, name)`` tuples with positive reduced cost.  New columns
    are appended to ``restricted`` in place, so callers can map solution
    entries back to whatever the columns represent.
    """
    for it in range(max_iterations):
        sol = solve_lp(restricted, exact=exact, tol=tol)
        if not sol.optimal:
            return sol
        cols = pricer(sol.duals, sol)
        if not cols:
            log.debug("column generation converged after %d rounds, %d columns", it, restricted.num_vars)
            return sol
        for col in cols:
            restricted.add_column(*col)
    raise PricingError(f"no pricing certificate after {max_iterations} rounds")


def _fmt(x) -> str:
    x = float(x)
    return repr(int(x)) if x.is_integer() else repr(x)


def to_lp_format(lp: LinearProgram) -> str:
    """Render ``lp`` in CPLEX LP text format for cross-checking elsewhere."""
    names = lp.names or [f"x{j}" for j in range(lp.num_vars)]

    def expr(coeffs):
        terms = []
        for a, name in zip(coeffs, names):
            if a == 0:
                continue
            s = "-" if a < 0 else "+"
            terms.append(f"{s} {_fmt(abs(a))} {name}")
        text = " ".join(terms) if terms else "0 " + names[0]
        return text[2:] if text.startswith("+ ") else text

    out = ["Maximize" if lp.maximize else "Minimize", f" obj: {expr(lp.objective)}", "Subject To"]
    op = {"<=": "<=", ">=": ">=", "==": "="}
    for i, (row, s, b) in enumerate(zip(lp.rows, lp.senses, lp.rhs)):
        out.append(f" c{i}: {expr(row)} {op[s]} {_fmt(b)}")
    out.append("Bounds")
    lower = lp.lower or [0] * lp.num_vars
    for name, lo in zip(names, lower):
        out.append(f" {name} >= {_fmt(lo)}")
    out.append("End")
    return "\n".join(out) + "\n"
