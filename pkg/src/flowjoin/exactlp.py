"""Exact-rational feasibility solver for A x = b, x >= 0.

Phase-1 simplex over Fractions with Bland's rule.  Used as a fallback when
float LP duals cannot be rounded to an exactly-verifying certificate: the
(Z, D) multiplicities get fixed and the witness multisets are re-derived
here in exact arithmetic.
"""

from __future__ import annotations

from fractions import Fraction
from typing import Optional, Sequence


def solve_eq_nonneg(
    rows: Sequence[Sequence[Fraction]], rhs: Sequence[Fraction]
) -> Optional[list[Fraction]]:
    """Return some x >= 0 with rows @ x == rhs, or None if infeasible."""
    m = len(rows)
    n = len(rows[0]) if m else 0
    zero, one = Fraction(0), Fraction(1)

    # tableau: columns = n structural + m artificial + 1 rhs
    tab = []
    for i in range(m):
        neg = rhs[i] < 0
        row = [(-c if neg else c) for c in rows[i]]
        row += [one if j == i else zero for j in range(m)]
        row.append(-rhs[i] if neg else rhs[i])
        tab.append([Fraction(c) for c in row])
    basis = [n + i for i in range(m)]

    # objective: minimize sum of artificials.  Canonical cost row: zero on the
    # (basic) artificial columns, column sums on structural ones, rhs = sum b.
    cost = [zero] * (n + m + 1)
    for i in range(m):
        for j in range(n):
            cost[j] += tab[i][j]
        cost[-1] += tab[i][-1]
    allowed = [True] * (n + m)

    while True:
        enter = next((j for j in range(n + m) if allowed[j] and cost[j] > 0), None)
        if enter is None:
            break
        leave, best = None, None
        for i in range(m):
            a = tab[i][enter]
            if a > 0:
                ratio = tab[i][-1] / a
                if best is None or ratio < best or (ratio == best and basis[i] < basis[leave]):
                    best, leave = ratio, i
        if leave is None:
            return None  # unbounded phase-1 cannot happen; defensive
        piv = tab[leave][enter]
        tab[leave] = [c / piv for c in tab[leave]]
        for i in range(m):
            if i != leave and tab[i][enter]:
                f = tab[i][enter]
                tab[i] = [c - f * p for c, p in zip(tab[i], tab[leave])]
        if cost[enter]:
            f = cost[enter]
            cost = [c - f * p for c, p in zip(cost, tab[leave])]
        if basis[leave] >= n:
            allowed[basis[leave]] = False  # artificials never re-enter
        basis[leave] = enter

    if cost[-1] != 0:
        return None  # artificials cannot be driven to zero: infeasible

    x = [zero] * n
    for i, b in enumerate(basis):
        if b < n:
            x[b] = tab[i][-1]
    return x
