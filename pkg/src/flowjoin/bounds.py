"""Output-size bound optimizer.

Solves, in floating point, the linear program

    minimize   sum_d w_d * log2(N_d)
    subject to sum_Z lambda_Z h(Z) <= sum_d w_d h(d) being witnessed by
               elemental monotonicities/submodularities (an exact linear
               identity), ||lambda||_1 = 1, all coefficients >= 0,

then rounds the solution to rationals and verifies the identity exactly.
The inequality's validity depends only on the coefficients, never on the
irrational log constants, so the exact symbolic check fully de-risks the
float solve.  The optimum is cross-checked against the max-min form
(`primal_value`), which must agree by strong duality.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Optional, Sequence

import numpy as np
from scipy.optimize import linprog
from scipy.sparse import csc_matrix

from .exactlp import solve_eq_nonneg
from .relational import DegreeConstraintSet, MonTerm, SubTerm, uncond
from .shannonflow import (
    IdentityViolationError,
    IntegralInequality,
    Witness,
    check_identity,
    identity_coefficients,
)
from .varsets import Universe, VarSet


class UnboundedBoundError(ValueError):
    """No Shannon-flow inequality bounds the targets under these constraints."""


class RationalizationError(RuntimeError):
    """Float LP duals could not be rounded to an exactly-verifying certificate."""


_DENOMINATOR_LADDER = (1, 2, 3, 4, 6, 8, 12, 16, 24, 48, 60, 120, 360, 720,
                       2520, 5040, 10**4, 10**5, 10**6)


@dataclass(frozen=True)
class Budget:
    """Exact comparisons against the bound B = prod N_d^{w_d} = Bd^(1/d).

    Bd = None is the no-truncation sentinel (B = infinity).
    """

    d: int
    bd: Optional[int]

    def __post_init__(self):
        if self.d < 1 or (self.bd is not None and self.bd < 1):
            raise ValueError("budget needs d >= 1 and Bd >= 1")

    @classmethod
    def unbounded(cls) -> "Budget":
        return cls(1, None)

    @property
    def log2(self) -> float:
        return math.inf if self.bd is None else math.log2(self.bd) / self.d

    def geq(self, p: Fraction) -> bool:
        """Exact test p >= 1/B, float fast path with a guard band."""
        return self.pow_geq(p, 1)

    def pow_geq(self, p: Fraction, k: int) -> bool:
        """Exact test p >= 1/B^k."""
        if p <= 0:
            return False
        if self.bd is None:
            return True
        margin = math.log2(p.numerator) - math.log2(p.denominator) + k * self.log2
        if abs(margin) >= 1e-6:
            return margin > 0
        return p.numerator**self.d * self.bd**k >= p.denominator**self.d

    def count_leq(self, n: int) -> bool:
        """Exact test n <= B."""
        if self.bd is None:
            return True
        return n**self.d <= self.bd

    def value(self) -> float:
        return math.inf if self.bd is None else self.bd ** (1.0 / self.d)


def budget_geq(p: Fraction, budget: Budget) -> bool:
    return budget.geq(p)


@dataclass(frozen=True)
class BoundCertificate:
    """Optimal (lambda, w) with an exactly verified integral form and witness."""

    universe: Universe
    lam: tuple[tuple[VarSet, Fraction], ...]
    w: tuple[tuple[MonTerm, Fraction], ...]
    bounds: tuple[tuple[MonTerm, int], ...]  # N_d for terms with w_d > 0
    d: int
    integral: IntegralInequality
    witness: Witness
    exponent_bits: float

    def lam_dict(self) -> dict[VarSet, Fraction]:
        return dict(self.lam)

    def w_dict(self) -> dict[MonTerm, Fraction]:
        return dict(self.w)

    @property
    def exponent_log_n(self) -> Optional[Fraction]:
        """Total weight, exact, when all used constraints share one bound N > 1."""
        ns = {n for _, n in self.bounds}
        if len(ns) > 1 or (ns and ns == {1}):
            return None
        return sum((wd for _, wd in self.w), Fraction(0))

    def multiplicity(self, term: MonTerm) -> int:
        return self.integral.d_counter()[term]


def _elemental_monotonicities(universe: Universe) -> list[MonTerm]:
    full = universe.full()
    return [
        MonTerm(universe.from_mask(1 << i), full - universe.from_mask(1 << i))
        for i in range(len(universe))
    ]


def _elemental_submodularities(universe: Universe) -> list[SubTerm]:
    n = len(universe)
    out = []
    for i in range(n):
        for j in range(i + 1, n):
            pair = (1 << i) | (1 << j)
            rest = [k for k in range(n) if not pair >> k & 1]
            for sub in range(1 << len(rest)):
                xm = 0
                for t, k in enumerate(rest):
                    if sub >> t & 1:
                        xm |= 1 << k
                out.append(
                    SubTerm(
                        universe.from_mask(1 << i),
                        universe.from_mask(1 << j),
                        universe.from_mask(xm),
                    )
                )
    return out


def _certificate_lp(
    universe: Universe,
    targets: Sequence[VarSet],
    constraints: Sequence[tuple[MonTerm, int]],
):
    """Build and solve the witnessed-inequality LP; returns float coefficients."""
    monos = _elemental_monotonicities(universe)
    subs = _elemental_submodularities(universe)
    nt, nc, nm = len(targets), len(constraints), len(monos)
    ncols = nt + nc + nm + len(subs)
    nsubsets = (1 << len(universe)) - 1

    rows, cols, vals = [], [], []

    def put(mask: int, col: int, v: float) -> None:
        if mask:
            rows.append(mask - 1)
            cols.append(col)
            vals.append(v)

    for j, z in enumerate(targets):
        put(z.mask, j, -1.0)
    for j, (term, _) in enumerate(constraints):
        put(term.all_vars.mask, nt + j, 1.0)
        put(term.x.mask, nt + j, -1.0)
    for j, mu in enumerate(monos):
        put(mu.all_vars.mask, nt + nc + j, -1.0)
        put(mu.x.mask, nt + nc + j, 1.0)
    for j, s in enumerate(subs):
        col = nt + nc + nm + j
        put((s.x | s.y).mask, col, -1.0)
        put((s.x | s.z).mask, col, -1.0)
        put((s.x | s.y | s.z).mask, col, 1.0)
        put(s.x.mask, col, 1.0)

    # normalization row ||lambda||_1 = 1
    norm_row = nsubsets
    for j in range(nt):
        rows.append(norm_row)
        cols.append(j)
        vals.append(1.0)

    a_eq = csc_matrix((vals, (rows, cols)), shape=(nsubsets + 1, ncols))
    b_eq = np.zeros(nsubsets + 1)
    b_eq[norm_row] = 1.0
    c = np.zeros(ncols)
    for j, (_, n) in enumerate(constraints):
        c[nt + j] = math.log2(n)

    res = linprog(c, A_eq=a_eq, b_eq=b_eq, bounds=(0, None), method="highs")
    if res.status == 2:
        raise UnboundedBoundError(
            "no valid size bound: the targets are not covered by the degree constraints"
        )
    if res.status != 0:
        raise RuntimeError(f"LP solver failed with status {res.status}: {res.message}")
    x = res.x
    return (
        x[:nt],
        x[nt : nt + nc],
        x[nt + nc : nt + nc + nm],
        x[nt + nc + nm :],
        monos,
        subs,
        float(res.fun),
    )


def _round_vector(values, denom: int) -> Optional[list[int]]:
    tol = max(1e-7, 1e-8 * denom)
    out = []
    for v in values:
        scaled = v * denom
        r = round(scaled)
        if abs(scaled - r) > tol:
            return None
        out.append(int(r))
    return out


def _complete_witness_exactly(
    universe: Universe,
    z_mult: dict[VarSet, int],
    d_mult: dict[MonTerm, int],
    monos: Sequence[MonTerm],
    subs: Sequence[SubTerm],
):
    """Solve exactly for nonneg rational witness multiplicities, then scale."""
    needed = identity_coefficients(z_mult, d_mult, {}, {})
    masks = sorted(set(needed) | {m for m in range(1, 1 << len(universe))})
    idx = {m: i for i, m in enumerate(masks)}
    ncols = len(monos) + len(subs)
    rows = [[Fraction(0)] * ncols for _ in masks]
    for j, mu in enumerate(monos):
        if mu.all_vars.mask:
            rows[idx[mu.all_vars.mask]][j] += 1
        if mu.x.mask:
            rows[idx[mu.x.mask]][j] -= 1
    for j, s in enumerate(subs):
        col = len(monos) + j
        rows[idx[(s.x | s.y).mask]][col] += 1
        rows[idx[(s.x | s.z).mask]][col] += 1
        rows[idx[(s.x | s.y | s.z).mask]][col] -= 1
        if s.x.mask:
            rows[idx[s.x.mask]][col] -= 1
    rhs = [Fraction(needed.get(m, 0)) for m in masks]
    sol = solve_eq_nonneg(rows, rhs)
    if sol is None:
        return None
    scale = 1
    for v in sol:
        scale = scale * v.denominator // math.gcd(scale, v.denominator)
    m_mult = {monos[j]: int(sol[j] * scale) for j in range(len(monos)) if sol[j]}
    s_mult = {
        subs[j]: int(sol[len(monos) + j] * scale)
        for j in range(len(subs))
        if sol[len(monos) + j]
    }
    return scale, m_mult, s_mult


def _objective_matches(d_mult, denom: int, n_of, obj: float) -> bool:
    got = sum(c * math.log2(n_of[t]) for t, c in d_mult.items()) / denom
    return abs(got - obj) <= 1e-6 * max(1.0, abs(obj))


def _rationalize(
    universe: Universe,
    targets: Sequence[VarSet],
    constraints: Sequence[tuple[MonTerm, int]],
    lam_f,
    w_f,
    m_f,
    s_f,
    monos,
    subs,
    obj: float,
):
    """Round float LP output to an exactly-verifying integral certificate."""
    n_of = dict(constraints)
    for denom in _DENOMINATOR_LADDER:
        lam_i = _round_vector(lam_f, denom)
        w_i = _round_vector(w_f, denom)
        m_i = _round_vector(m_f, denom)
        s_i = _round_vector(s_f, denom)
        if None in (lam_i, w_i, m_i, s_i) or sum(lam_i) != denom:
            continue
        z_mult = {z: c for z, c in zip(targets, lam_i) if c}
        d_mult = {t: c for (t, _), c in zip(constraints, w_i) if c}
        m_mult = {mu: c for mu, c in zip(monos, m_i) if c}
        s_mult = {s: c for s, c in zip(subs, s_i) if c}
        if _objective_matches(d_mult, denom, n_of, obj) and check_identity(
            z_mult, d_mult, m_mult, s_mult
        ):
            return denom, z_mult, d_mult, m_mult, s_mult

    # fall back: fix (lambda, w) and re-derive the witness in exact arithmetic
    for denom in _DENOMINATOR_LADDER:
        lam_i = _round_vector(lam_f, denom)
        w_i = _round_vector(w_f, denom)
        if None in (lam_i, w_i) or sum(lam_i) != denom:
            continue
        z_mult = {z: c for z, c in zip(targets, lam_i) if c}
        d_mult = {t: c for (t, _), c in zip(constraints, w_i) if c}
        if not _objective_matches(d_mult, denom, n_of, obj):
            continue
        completed = _complete_witness_exactly(universe, z_mult, d_mult, monos, subs)
        if completed is None:
            continue
        scale, m_mult, s_mult = completed
        z_mult = {z: c * scale for z, c in z_mult.items()}
        d_mult = {t: c * scale for t, c in d_mult.items()}
        if check_identity(z_mult, d_mult, m_mult, s_mult):
            return denom * scale, z_mult, d_mult, m_mult, s_mult
    raise RationalizationError("could not rationalize LP duals into an exact certificate")


def solve_bound(
    targets: Sequence[VarSet], dc: DegreeConstraintSet, universe: Optional[Universe] = None
) -> BoundCertificate:
    """Optimal bound certificate for covering the targets under the constraints.

    After solving, unconditional constraints heavier than the bound itself
    (N_d > B) are dropped and the LP re-solved until a fixpoint: an optimal
    solution never uses them, and the executor's start-up invariant (every
    initial unconditional weight >= 1/B) depends on their absence.
    """
    targets = list(targets)
    if not targets:
        raise ValueError("at least one target required")
    if any(not z for z in targets):
        raise ValueError("targets must be nonempty variable sets")
    if universe is None:
        universe = targets[0].universe
    if not len(dc):
        raise ValueError("at least one degree constraint required")

    active = list(dc.entries)
    while True:
        lam_f, w_f, m_f, s_f, monos, subs, obj = _certificate_lp(universe, targets, active)
        denom, z_mult, d_mult, m_mult, s_mult = _rationalize(
            universe, targets, active, lam_f, w_f, m_f, s_f, monos, subs, obj
        )
        bd = 1
        n_of = dict(active)
        for term, c in d_mult.items():
            bd *= n_of[term] ** c
        heavy = [
            term
            for term, c in d_mult.items()
            if term.unconditional and c and n_of[term] ** denom > bd
        ]
        if not heavy:
            break
        active = [(t, n) for t, n in active if t not in set(heavy)]
        if not active:
            raise UnboundedBoundError("pruning removed every degree constraint")

    lam = tuple(
        (z, Fraction(c, denom)) for z, c in sorted(z_mult.items(), key=lambda e: e[0].sort_key())
    )
    w = tuple(
        (t, Fraction(c, denom)) for t, c in sorted(d_mult.items(), key=lambda e: e[0].sort_key())
    )
    zs, ds = [], []
    for z, c in z_mult.items():
        zs.extend([z] * c)
    for t, c in d_mult.items():
        ds.extend([t] * c)
    ms, ss = [], []
    for mu, c in m_mult.items():
        ms.extend([mu] * c)
    for s, c in s_mult.items():
        ss.extend([s] * c)
    exponent_bits = sum(float(wd) * math.log2(n_of[t]) for t, wd in w)
    return BoundCertificate(
        universe=universe,
        lam=lam,
        w=w,
        bounds=tuple(sorted(((t, n_of[t]) for t, _ in w), key=lambda e: e[0].sort_key())),
        d=denom,
        integral=IntegralInequality(tuple(zs), tuple(ds)),
        witness=Witness(tuple(ms), tuple(ss)),
        exponent_bits=exponent_bits,
    )


def primal_value(
    targets: Sequence[VarSet], dc: DegreeConstraintSet, universe: Optional[Universe] = None
) -> float:
    """Direct solve of max_{h |= (Delta,N)} min_Z h(Z), in bits.

    Independent cross-check for solve_bound: strong duality makes the two
    objectives coincide.
    """
    targets = list(targets)
    if universe is None:
        universe = targets[0].universe
    monos = _elemental_monotonicities(universe)
    subs = _elemental_submodularities(universe)
    nsubsets = (1 << len(universe)) - 1
    ncols = 1 + nsubsets  # t, then h(S) for each nonempty S

    rows, cols, vals, rhs = [], [], [], []

    def add_row(entries, b):
        r = len(rhs)
        for mask, v in entries:
            if mask:
                rows.append(r)
                cols.append(mask)  # column `mask` holds h of that subset
                vals.append(v)
        rhs.append(b)

    for z in targets:
        r = len(rhs)
        rows.append(r)
        cols.append(0)
        vals.append(1.0)
        rows.append(r)
        cols.append(z.mask)
        vals.append(-1.0)
        rhs.append(0.0)
    for term, n in dc:
        add_row([(term.all_vars.mask, 1.0), (term.x.mask, -1.0)], math.log2(n))
    for mu in monos:
        add_row([(mu.x.mask, 1.0), (mu.all_vars.mask, -1.0)], 0.0)
    for s in subs:
        add_row(
            [
                (s.x.mask, 1.0),
                ((s.x | s.y | s.z).mask, 1.0),
                ((s.x | s.y).mask, -1.0),
                ((s.x | s.z).mask, -1.0),
            ],
            0.0,
        )

    a_ub = csc_matrix((vals, (rows, cols)), shape=(len(rhs), ncols))
    c = np.zeros(ncols)
    c[0] = -1.0
    res = linprog(c, A_ub=a_ub, b_ub=np.array(rhs), bounds=(None, None), method="highs")
    if res.status == 3:
        raise UnboundedBoundError(
            "no valid size bound: the targets are not covered by the degree constraints"
        )
    if res.status != 0:
        raise RuntimeError(f"LP solver failed with status {res.status}: {res.message}")
    return -float(res.fun)


def make_budget(cert: BoundCertificate) -> Budget:
    """Bd = prod N_d^{m(d)} so that B = Bd^(1/d), exactly."""
    n_of = dict(cert.bounds)
    bd = 1
    for term, c in cert.integral.d_counter().items():
        bd *= n_of[term] ** c
    return Budget(cert.d, bd)
