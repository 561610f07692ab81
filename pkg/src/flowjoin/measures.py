"""Sub-probability measures materialized as exact-rational annotated relations.

A measure carries the measured variables Y, a declared condition X and the
effective condition effX <= X that actually keys the stored weights.  The
declared/effective split makes condition widening free: widening only grows
the declared set, the weights and their keys stay untouched, and every
reader projects lookup tuples down to effX.  An eager alternative would
materialize the measure over the product of active domains; tests compare
the two on tiny instances.

Entries with weight zero are never stored: the support is exactly the key
set.  Weight values are Fractions; a measure produced by geometric_mean
stores the k-th power of each weight (still rational) and flags itself with
root_degree = k.  Such measures never enter truncated products.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterable, Mapping, Optional, Sequence

from .bounds import Budget
from .relational import ConstraintViolationError, MonTerm, Relation, max_degree, restrict
from .varsets import VarSet


@dataclass(frozen=True, eq=False)
class Measure:
    y_vars: VarSet
    declared_cond: VarSet
    eff_cond: VarSet
    entries: Mapping[tuple, Mapping[tuple, Fraction]]  # x_row -> y_row -> weight
    root_degree: int = 1

    def __post_init__(self):
        if not self.y_vars.isdisjoint(self.declared_cond):
            raise ValueError("measured and condition variables overlap")
        if not self.eff_cond <= self.declared_cond:
            raise ValueError("effective condition must be within the declared one")
        clean = {}
        for x_row in sorted(self.entries):
            group = {y: w for y, w in self.entries[x_row].items() if w}
            if any(w < 0 for w in group.values()):
                raise ValueError("negative weight")
            if group:
                clean[x_row] = dict(sorted(group.items()))
        object.__setattr__(self, "entries", clean)
        if self.root_degree == 1:
            for x_row, group in clean.items():
                total = sum(group.values())
                if total > 1:
                    raise ValueError(
                        f"mass {total} > 1 for condition {x_row} of ({self.y_vars}|{self.declared_cond})"
                    )

    @property
    def unconditional(self) -> bool:
        return not self.declared_cond

    @property
    def y_order(self) -> tuple[str, ...]:
        return self.y_vars.names

    @property
    def eff_order(self) -> tuple[str, ...]:
        return self.eff_cond.names

    def term(self) -> MonTerm:
        return MonTerm(self.y_vars, self.declared_cond)

    def support_size(self) -> int:
        return sum(len(g) for g in self.entries.values())

    def mass(self, x_row: tuple = ()) -> Fraction:
        if self.root_degree != 1:
            raise ValueError("mass of a k-th-root measure is irrational; compare powers")
        return sum(self.entries.get(x_row, {}).values(), Fraction(0))

    def iter_entries(self):
        for x_row, group in self.entries.items():
            for y_row, w in group.items():
                yield x_row, y_row, w

    def weight(self, x_row: tuple, y_row: tuple) -> Fraction:
        return self.entries.get(x_row, {}).get(y_row, Fraction(0))


def _merge_positions(universe, eff_order: Sequence[str], y_order: Sequence[str]):
    """How to interleave an (x_row, y_row) pair into canonical-order columns."""
    merged = sorted(tuple(eff_order) + tuple(y_order), key=universe.index)
    picks = []
    for v in merged:
        if v in eff_order:
            picks.append((0, eff_order.index(v)))
        else:
            picks.append((1, y_order.index(v)))
    return tuple(merged), tuple(picks)


def support(p: Measure) -> Relation:
    """Relation over effX ∪ Y holding every stored entry's key."""
    universe = p.y_vars.universe
    merged, picks = _merge_positions(universe, p.eff_order, p.y_order)
    rows = []
    for x_row, y_row, _ in p.iter_entries():
        pair = (x_row, y_row)
        rows.append(tuple(pair[side][i] for side, i in picks))
    return Relation(universe, merged, rows)


def eval_at(p: Measure, order: Sequence[str], row: tuple) -> Fraction:
    """p(t_Y | t_effX) for a tuple over a superset of X ∪ Y; 0 if absent."""
    pos = {v: i for i, v in enumerate(order)}
    x_row = tuple(row[pos[v]] for v in p.eff_order)
    y_row = tuple(row[pos[v]] for v in p.y_order)
    return p.weight(x_row, y_row)


def init_from_constraint(
    rel: Relation,
    delta: MonTerm,
    n: int,
    domains: Optional[Mapping[str, Sequence]] = None,
) -> Measure:
    """Uniform weight 1/N on the restriction of rel onto X ∪ Y, keyed by X."""
    deg = max_degree(rel, delta, domains)
    if deg > n:
        offending = _argmax_condition(rel, delta, domains)
        raise ConstraintViolationError(
            f"degree of {delta} in relation over {rel.vars} is {deg} > {n}"
            + (f" (worst condition {offending})" if offending is not None else "")
        )
    r = restrict(rel, delta.all_vars, domains)
    xs, ys = delta.x.names, delta.y.names
    xpos, ypos = r.positions(xs), r.positions(ys)
    w = Fraction(1, n)
    entries: dict[tuple, dict[tuple, Fraction]] = {}
    for row in r.rows:
        x_row = tuple(row[i] for i in xpos)
        y_row = tuple(row[i] for i in ypos)
        entries.setdefault(x_row, {})[y_row] = w
    return Measure(delta.y, delta.x, delta.x, entries)


def _argmax_condition(rel, delta, domains):
    try:
        r = restrict(rel, delta.all_vars, domains)
    except ValueError:
        return None
    xs = delta.x.names
    if not xs:
        return ()
    groups: dict[tuple, int] = {}
    xpos = r.positions(xs)
    for row in r.rows:
        key = tuple(row[i] for i in xpos)
        groups[key] = groups.get(key, 0) + 1
    return max(groups, key=lambda k: (groups[k], k)) if groups else None


def marginal(p: Measure, keep: VarSet) -> Measure:
    """Sum out the variables of an unconditional measure outside `keep`."""
    if not p.unconditional:
        raise ValueError("marginal of a conditional measure")
    if p.root_degree != 1:
        raise ValueError("marginal of a k-th-root measure")
    if not keep <= p.y_vars:
        raise ValueError(f"{keep} is not within the measured variables {p.y_vars}")
    pos = tuple(p.y_order.index(v) for v in keep.names)
    out: dict[tuple, Fraction] = {}
    for y_row, w in p.entries.get((), {}).items():
        k = tuple(y_row[i] for i in pos)
        out[k] = out.get(k, Fraction(0)) + w
    empty = keep.universe.empty()
    return Measure(keep, empty, empty, {(): out})


def conditional(p: Measure, cond: VarSet) -> Measure:
    """Split an unconditional measure into per-condition probability measures."""
    if not p.unconditional:
        raise ValueError("conditional of a conditional measure")
    if p.root_degree != 1:
        raise ValueError("conditional of a k-th-root measure")
    if not cond <= p.y_vars:
        raise ValueError(f"{cond} is not within the measured variables {p.y_vars}")
    rest = p.y_vars - cond
    marg = marginal(p, cond)
    cpos = tuple(p.y_order.index(v) for v in cond.names)
    rpos = tuple(p.y_order.index(v) for v in rest.names)
    entries: dict[tuple, dict[tuple, Fraction]] = {}
    for y_row, w in p.entries.get((), {}).items():
        x_row = tuple(y_row[i] for i in cpos)
        denom = marg.weight((), x_row)
        if denom:
            entries.setdefault(x_row, {})[tuple(y_row[i] for i in rpos)] = w / denom
    return Measure(rest, cond, cond, entries)


def widen_condition(p: Measure, z: VarSet) -> Measure:
    """Declare extra condition variables; weights and keys stay untouched."""
    if not z:
        return p
    if not z.isdisjoint(p.y_vars):
        raise ValueError("widening variables overlap the measured variables")
    return Measure(p.y_vars, p.declared_cond | z, p.eff_cond, p.entries, p.root_degree)


def truncated_product(px: Measure, pyx: Measure, budget: Budget) -> Measure:
    """Product of p_X with p_{Y|X}, keeping only weights >= 1/B.

    Iterates the support of px; for each x the per-x admission threshold is
    fixed, so each candidate (x, y) costs one multiply and one budget test.
    """
    if not px.unconditional:
        raise ValueError("left factor must be unconditional")
    if px.root_degree != 1 or pyx.root_degree != 1:
        raise ValueError("truncated product of k-th-root measures")
    if pyx.declared_cond != px.y_vars:
        raise ValueError(
            f"condition mismatch: product over {px.y_vars} with ({pyx.y_vars}|{pyx.declared_cond})"
        )
    universe = px.y_vars.universe
    out_vars = px.y_vars | pyx.y_vars
    merged, picks = _merge_positions(universe, px.y_order, pyx.y_order)
    eff_pos = tuple(px.y_order.index(v) for v in pyx.eff_order)
    entries: dict[tuple, Fraction] = {}
    for x_row, wx in px.entries.get((), {}).items():
        eff = tuple(x_row[i] for i in eff_pos)
        group = pyx.entries.get(eff)
        if not group:
            continue
        for y_row, wy in group.items():
            w = wx * wy
            if budget.geq(w):
                pair = (x_row, y_row)
                entries[tuple(pair[side][i] for side, i in picks)] = w
    empty = universe.empty()
    return Measure(out_vars, empty, empty, {(): entries})


def geometric_mean(ps: Sequence[Measure]) -> Measure:
    """Geometric mean over the common support; stores k-th powers of weights."""
    if not ps:
        raise ValueError("geometric mean of nothing")
    first = ps[0]
    for p in ps:
        if p.y_vars != first.y_vars or not p.unconditional or p.root_degree != 1:
            raise ValueError("geometric mean needs unconditional measures on one varset")
    k = len(ps)
    out: dict[tuple, Fraction] = {}
    for y_row, w in first.entries.get((), {}).items():
        prod = w
        for p in ps[1:]:
            w2 = p.weight((), y_row)
            if not w2:
                prod = Fraction(0)
                break
            prod *= w2
        if prod:
            out[y_row] = prod
    empty = first.y_vars.universe.empty()
    return Measure(first.y_vars, empty, empty, {(): out}, root_degree=k)


def eager_widen_reference(p: Measure, z: VarSet, domains: Mapping[str, Sequence]) -> Measure:
    """Materialized widening over active domains; oracle for the lazy version."""
    if not z.isdisjoint(p.y_vars) or not z.isdisjoint(p.declared_cond):
        raise ValueError("widening variables must be fresh")
    from itertools import product as iproduct

    new_eff = p.eff_cond | z
    eff_order = new_eff.names
    entries: dict[tuple, dict[tuple, Fraction]] = {}
    ext = [tuple(domains[v]) for v in z.names]
    for x_row, group in p.entries.items():
        for tail in iproduct(*ext):
            by_name = dict(zip(p.eff_order, x_row)) | dict(zip(z.names, tail))
            key = tuple(by_name[v] for v in eff_order)
            entries[key] = dict(group)
    return Measure(p.y_vars, p.declared_cond | z, new_eff, entries, p.root_degree)
