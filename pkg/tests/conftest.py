import random
from collections import Counter

import pytest

from flowjoin import (
    Atom,
    DDR,
    Database,
    DegreeConstraintSet,
    MonTerm,
    ProofStep,
    Relation,
    SubTerm,
    Universe,
    uncond,
)


def rel(universe, cols, rows):
    return Relation(universe, cols, rows)


@pytest.fixture
def hex_universe():
    return Universe("ABCDEF")


@pytest.fixture
def hexagon_ddr(hex_universe):
    atoms = (
        Atom("R", ("A", "B", "C")),
        Atom("S", ("C", "D", "E")),
        Atom("T", ("E", "F", "A")),
        Atom("K", ("B", "D", "F")),
    )
    return DDR(atoms, (Atom("Q", ("A", "B", "C", "D", "E", "F")),))


def hexagon_identity(u):
    """The doubled hexagon target with its four-edge cover and the witness
    carried by the reference proof trace (two chains stitched by two
    whole-set submodularities)."""
    v = u.varset
    zs = Counter({v("ABCDEF"): 2})
    ds = Counter(
        {uncond(v("ABC")): 1, uncond(v("CDE")): 1, uncond(v("EFA")): 1, uncond(v("BDF")): 1}
    )
    ms = Counter()
    ss = Counter(
        {
            SubTerm(v("DE"), v("AB"), v("C")): 1,
            SubTerm(v("BD"), v("AE"), v("F")): 1,
            SubTerm(v("F"), v("ABCDE"), v("")): 1,
            SubTerm(v("C"), v("ABDEF"), v("")): 1,
        }
    )
    return zs, ds, ms, ss


def hexagon_reference_steps(u):
    """Unmerged form of the reference trace: each merged step splits into a
    condition widening followed by a composition."""
    v = u.varset
    return (
        ProofStep("DEC", x=v("C"), y=v("DE")),
        ProofStep("SUB", x=v("C"), y=v("DE"), z=v("AB")),
        ProofStep("COMP", x=v("ABC"), y=v("DE")),
        ProofStep("DEC", x=v("F"), y=v("BD")),
        ProofStep("SUB", x=v("F"), y=v("BD"), z=v("AE")),
        ProofStep("COMP", x=v("AEF"), y=v("BD")),
        ProofStep("SUB", x=v(""), y=v("F"), z=v("ABCDE")),
        ProofStep("COMP", x=v("ABCDE"), y=v("F")),
        ProofStep("SUB", x=v(""), y=v("C"), z=v("ABDEF")),
        ProofStep("COMP", x=v("ABDEF"), y=v("C")),
    )


def q1_identity(u):
    """h(ABC)+h(BCD) <= h(AB)+h(BC)+h(CD) with its two-chain witness."""
    v = u.varset
    zs = Counter({v("ABC"): 1, v("BCD"): 1})
    ds = Counter({uncond(v("AB")): 1, uncond(v("BC")): 1, uncond(v("CD")): 1})
    ms = Counter()
    ss = Counter({SubTerm(v("A"), v("C"), v("B")): 1, SubTerm(v("B"), v("CD"), v("")): 1})
    return zs, ds, ms, ss


def hexagon_instance(u, n, seed, skewed=True):
    from flowjoin.gen import hexagon_fixture

    rng = random.Random(seed)
    universe, ddr, db, dc = hexagon_fixture(n, rng, skewed=skewed)
    return universe, ddr, db, dc
