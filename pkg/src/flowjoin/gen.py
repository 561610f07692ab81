"""Seeded fixture generators for tests and the `gen` CLI subcommand."""

from __future__ import annotations

import random
from collections import Counter
from fractions import Fraction
from typing import Optional

from .cq import CQ
from .relational import (
    DDR,
    Atom,
    Database,
    DegreeConstraintSet,
    MonTerm,
    Relation,
    SubTerm,
    full_natural_join,
    uncond,
)
from .shannonflow import HVector
from .varsets import Universe, VarSet


def random_relation(universe: Universe, cols, size: int, dom: int, rng: random.Random) -> Relation:
    rows = set()
    tries = 0
    while len(rows) < size and tries < size * 50:
        rows.add(tuple(rng.randrange(dom) for _ in cols))
        tries += 1
    return Relation(universe, cols, rows)


def skewed_relation(
    universe: Universe, cols, size: int, dom: int, rng: random.Random, skew_col: int = 0
) -> Relation:
    """About half the tuples pile onto one value of `skew_col`."""
    rows = set()
    heavy = rng.randrange(dom)
    tries = 0
    while len(rows) < size and tries < size * 80:
        tries += 1
        row = [rng.randrange(dom) for _ in cols]
        if rng.random() < 0.5:
            row[skew_col] = heavy
        rows.add(tuple(row))
    return Relation(universe, cols, rows)


HEXAGON_ATOMS = (
    Atom("R", ("A", "B", "C")),
    Atom("S", ("C", "D", "E")),
    Atom("T", ("E", "F", "A")),
    Atom("K", ("B", "D", "F")),
)


def hexagon_fixture(n: int, rng: random.Random, skewed: bool = True):
    """Hexagon rule instance: 4 ternary relations of size about n."""
    universe = Universe("ABCDEF")
    dom = max(3, int(round(n**0.5)))
    make = skewed_relation if skewed else random_relation
    rels = {
        "R": make(universe, ("A", "B", "C"), n, dom, rng),
        "S": make(universe, ("C", "D", "E"), n, dom, rng),
        "T": make(universe, ("E", "F", "A"), n, dom, rng),
        "K": make(universe, ("B", "D", "F"), n, dom, rng),
    }
    db = Database(universe, [(a.symbol, rels[a.symbol]) for a in HEXAGON_ATOMS])
    ddr = DDR(HEXAGON_ATOMS, (Atom("Q", ("A", "B", "C", "D", "E", "F")),))
    dc = DegreeConstraintSet.of(
        {uncond(universe.varset(a.order)): n for a in HEXAGON_ATOMS}
    )
    return universe, ddr, db, dc


Q1_ATOMS = (Atom("R", ("A", "B")), Atom("S", ("B", "C")), Atom("T", ("C", "D")))


def q1_fixture(n: int, rng: random.Random):
    universe = Universe("ABCD")
    dom = max(3, int(round(n**0.5)) + 1)
    rels = {a.symbol: random_relation(universe, a.order, n, dom, rng) for a in Q1_ATOMS}
    db = Database(universe, [(a.symbol, rels[a.symbol]) for a in Q1_ATOMS])
    ddr = DDR(Q1_ATOMS, (Atom("U", ("A", "B", "C")), Atom("V", ("B", "C", "D"))))
    dc = DegreeConstraintSet.of({uncond(universe.varset(a.order)): n for a in Q1_ATOMS})
    return universe, ddr, db, dc


CYCLE4_ATOMS = (
    Atom("R", ("A", "B")),
    Atom("S", ("B", "C")),
    Atom("T", ("C", "D")),
    Atom("K", ("D", "A")),
)


def cycle4_fixture(n: int, rng: random.Random):
    universe = Universe("ABCD")
    dom = max(3, int(round(n**0.5)) + 1)
    rels = {a.symbol: random_relation(universe, a.order, n, dom, rng) for a in CYCLE4_ATOMS}
    db = Database(universe, [(a.symbol, rels[a.symbol]) for a in CYCLE4_ATOMS])
    dc = DegreeConstraintSet.of({uncond(universe.varset(a.order)): n for a in CYCLE4_ATOMS})
    return universe, db, dc


def random_ddr_fixture(
    rng: random.Random,
    max_vars: int = 6,
    max_atoms: int = 4,
    max_heads: int = 3,
    max_size: int = 50,
    join_cap: int = 20000,
):
    """Random connected rule instance; regenerates while the join is oversized."""
    for _ in range(200):
        nv = rng.randint(2, max_vars)
        universe = Universe([chr(ord("A") + i) for i in range(nv)])
        names = list(universe.names)
        atoms = []
        used: list[str] = []
        for i in range(rng.randint(1, max_atoms)):
            arity = rng.randint(1, min(3, nv))
            if used and rng.random() < 0.9:
                anchor = [rng.choice(used)]
            else:
                anchor = []
            pool = [v for v in names if v not in anchor]
            rng.shuffle(pool)
            cols = tuple(anchor + pool[: arity - len(anchor)])
            if not cols:
                continue
            atoms.append(Atom(f"R{i}", cols))
            used.extend(v for v in cols if v not in used)
        if not atoms:
            continue
        body_vars = sorted(used, key=names.index)
        heads = []
        head_sets = set()
        for i in range(rng.randint(1, max_heads)):
            k = rng.randint(1, len(body_vars))
            hv = tuple(sorted(rng.sample(body_vars, k), key=names.index))
            if hv not in head_sets:
                head_sets.add(hv)
                heads.append(Atom(f"Q{i}", hv))
        rels = []
        for a in atoms:
            dom = rng.randint(2, 8)
            size = rng.randint(1, max_size)
            rels.append((a.symbol, random_relation(universe, a.order, size, dom, rng)))
        db = Database(universe, rels)
        ddr = DDR(tuple(atoms), tuple(heads))
        try:
            ddr.validate(universe)
        except ValueError:
            continue
        if len(full_natural_join(db)) > join_cap:
            continue
        return universe, ddr, db
    raise RuntimeError("could not generate a rule instance within the caps")


def random_cq_fixture(rng: random.Random, max_vars: int = 5, max_atoms: int = 4, max_size: int = 25):
    """Small conjunctive query with free variables of all three flavors."""
    universe, ddr, db = random_ddr_fixture(
        rng, max_vars=max_vars, max_atoms=max_atoms, max_heads=1, max_size=max_size
    )
    body_vars = universe.empty()
    for a in ddr.input_atoms:
        body_vars = body_vars | a.vars(universe)
    flavor = rng.random()
    if flavor < 0.4:
        free = tuple(body_vars.names)  # full
    elif flavor < 0.6:
        free = ()  # boolean
    else:
        k = rng.randint(1, max(1, len(body_vars) - 1))
        free = tuple(sorted(rng.sample(body_vars.names, k), key=universe.index))
    return universe, CQ(Atom("Q", free), ddr.input_atoms), db


# ---------------------------------------------------------------------------
# symbolic generators


def random_varset(universe: Universe, rng: random.Random, nonempty: bool = True) -> VarSet:
    n = len(universe)
    while True:
        mask = rng.randrange(1 << n)
        if mask or not nonempty:
            return universe.from_mask(mask)


def random_witness(universe: Universe, rng: random.Random, steps: int = 5):
    """Random valid witnessed identity, built by inverting proof steps.

    Starts from D = Z and walks backwards: un-composing, un-monotonizing
    (which adds a witness monotonicity), and un-widening (which adds a
    witness submodularity).  Every intermediate stays a valid identity.
    """
    nz = rng.randint(1, 3)
    zs = Counter(random_varset(universe, rng) for _ in range(nz))
    ds = Counter({uncond(z): c for z, c in zs.items()})
    ms: Counter = Counter()
    ss: Counter = Counter()
    names = universe.names
    for _ in range(steps):
        kind = rng.choice(("split", "grow", "widen", "spare"))
        if kind == "split":
            cands = [d for d in ds if d.unconditional and len(d.y) >= 2]
            if not cands:
                continue
            d = rng.choice(sorted(cands, key=lambda t: t.sort_key()))
            members = list(d.y.names)
            k = rng.randint(1, len(members) - 1)
            x = universe.varset(rng.sample(members, k))
            y = d.y - x
            ds[d] -= 1
            if not ds[d]:
                del ds[d]
            ds[uncond(x)] += 1
            ds[MonTerm(y, x)] += 1
        elif kind == "grow":
            cands = [d for d in ds if d.unconditional]
            if not cands:
                continue
            d = rng.choice(sorted(cands, key=lambda t: t.sort_key()))
            outside = [v for v in names if v not in d.y]
            if not outside:
                continue
            y = universe.varset(rng.sample(outside, rng.randint(1, len(outside))))
            ds[d] -= 1
            if not ds[d]:
                del ds[d]
            ds[uncond(d.y | y)] += 1
            ms[MonTerm(y, d.y)] += 1
        elif kind == "widen":
            cands = [d for d in ds if len(d.x) >= 1]
            if not cands:
                continue
            d = rng.choice(sorted(cands, key=lambda t: t.sort_key()))
            members = list(d.x.names)
            k = rng.randint(1, len(members))
            z = universe.varset(rng.sample(members, k))
            x = d.x - z
            ds[d] -= 1
            if not ds[d]:
                del ds[d]
            ds[MonTerm(d.y, x)] += 1
            ss[SubTerm(d.y, z, x)] += 1
        else:  # spare unconditional term cancelled by a witness monotonicity
            y = random_varset(universe, rng)
            ds[uncond(y)] += 1
            ms[MonTerm(y, universe.empty())] += 1
    return zs, ds, ms, ss


def random_polymatroid(universe: Universe, rng: random.Random) -> HVector:
    """Random mix of a weighted modular function and an edge-coverage function."""
    n = len(universe)
    weights = [Fraction(rng.randint(0, 4), 2) for _ in range(n)]
    edges = []
    for _ in range(rng.randint(0, 2 * n)):
        size = rng.randint(1, min(3, n))
        edges.append(frozenset(rng.sample(range(n), size)))

    def fn(vs: VarSet) -> Fraction:
        total = sum((weights[i] for i in range(n) if vs.mask >> i & 1), Fraction(0))
        covered = sum(1 for e in edges if any(vs.mask >> i & 1 for i in e))
        return total + covered

    return HVector.from_function(universe, fn)


def random_bound_instance(rng: random.Random, max_vars: int = 4, max_constraints: int = 4):
    """Random targets and degree constraints with a guaranteed finite bound."""
    nv = rng.randint(2, max_vars)
    universe = Universe([chr(ord("A") + i) for i in range(nv)])
    targets = []
    seen = set()
    for _ in range(rng.randint(1, 3)):
        z = random_varset(universe, rng)
        if z.mask not in seen:
            seen.add(z.mask)
            targets.append(z)
    entries: dict[MonTerm, int] = {}
    for _ in range(rng.randint(1, max_constraints)):
        y = random_varset(universe, rng)
        x = random_varset(universe, rng, nonempty=False) - y
        entries[MonTerm(y, x)] = rng.randint(1, 1000)
    covered = universe.empty()
    for t in entries:
        if t.unconditional:
            covered = covered | t.y
    need = universe.empty()
    for z in targets:
        need = need | z
    for v in (need - covered).names:
        entries.setdefault(uncond(universe.varset([v])), rng.randint(1, 1000))
    return universe, targets, DegreeConstraintSet.of(entries)
