import itertools
import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from flowjoin import (
    Atom,
    DDR,
    Database,
    DegreeConstraintSet,
    MonTerm,
    Relation,
    Universe,
    degree_at,
    full_natural_join,
    infer_constraints,
    max_degree,
    restrict,
    satisfies,
    schema_degree,
    uncond,
    verify_model,
)
from flowjoin.relational import default_constraint_terms, project_row

from conftest import rel

U3 = Universe("ABC")


def test_join_single_consistent_tuple():
    db = Database(U3, [("R", rel(U3, ("A", "B"), [(1, 2)])), ("S", rel(U3, ("B", "C"), [(2, 3)]))])
    out = full_natural_join(db)
    assert out.rows == ((1, 2, 3),)
    assert out.order == ("A", "B", "C")


def test_join_empty_annihilates():
    db = Database(U3, [("R", rel(U3, ("A", "B"), [(1, 2)])), ("S", rel(U3, ("B", "C"), []))])
    assert len(full_natural_join(db)) == 0


def test_join_matches_nested_loop_oracle_on_triangle():
    rng = random.Random(11)
    rows = lambda: {(rng.randrange(6), rng.randrange(6)) for _ in range(20)}
    r, s, t = rows(), rows(), rows()
    db = Database(
        U3,
        [("R", rel(U3, ("A", "B"), r)), ("S", rel(U3, ("B", "C"), s)), ("T", rel(U3, ("C", "A"), t))],
    )
    expected = {
        (a, b, c)
        for (a, b) in r
        for (b2, c) in s
        if b2 == b
        for (c2, a2) in t
        if c2 == c and a2 == a
    }
    assert set(full_natural_join(db).rows) == expected


def test_restrict_projection_and_identity():
    r = rel(U3, ("A", "B"), [(1, 2), (1, 3)])
    assert restrict(r, U3.varset("A")).rows == ((1,),)
    assert restrict(r, r.vars) == r


def test_restrict_extends_by_active_domain():
    r = rel(U3, ("A", "B"), [(1, 2), (1, 3)])
    domains = {"C": (7, 8)}
    out = restrict(r, U3.varset("ABC"), domains)
    expected = {(a, b, c) for (a, b) in r.rows for c in (7, 8)}
    assert set(out.rows) == expected
    with pytest.raises(ValueError):
        restrict(r, U3.varset("ABC"))


def test_degree_at_counts_extensions():
    r = rel(U3, ("A", "B"), [(1, 2), (1, 3), (2, 2)])
    d = MonTerm(U3.varset("B"), U3.varset("A"))
    assert degree_at(r, d, (1,)) == 2
    assert degree_at(r, d, (9,)) == 0
    assert degree_at(r, uncond(U3.varset("B")), ()) == 2


def test_max_degree_examples():
    r = rel(U3, ("A", "B"), [(1, 2), (1, 3), (2, 2)])
    assert max_degree(r, MonTerm(U3.varset("B"), U3.varset("A"))) == 2
    assert max_degree(r, uncond(U3.varset("AB"))) == len(r)
    assert max_degree(rel(U3, ("A", "B"), []), uncond(U3.varset("AB"))) == 0


def test_max_degree_against_grouping_oracle():
    rng = random.Random(5)
    rows = {(rng.randrange(4), rng.randrange(4), rng.randrange(4)) for _ in range(30)}
    r = rel(U3, ("A", "B", "C"), rows)
    for ynames, xnames in [("B", "A"), ("BC", "A"), ("C", "AB"), ("ABC", "")]:
        term = MonTerm(U3.varset(ynames), U3.varset(xnames))
        groups = {}
        for row in rows:
            by = dict(zip(("A", "B", "C"), row))
            key = tuple(by[v] for v in term.x.names)
            groups.setdefault(key, set()).add(tuple(by[v] for v in term.y.names))
        assert max_degree(r, term) == max(len(g) for g in groups.values())


def test_schema_degree_is_min_over_relations():
    r = rel(U3, ("A", "B"), [(1, 2), (1, 3), (2, 2)])
    s = rel(U3, ("A", "B"), [(1, 2), (2, 2)])
    db = Database(U3, [("R", r), ("S", s)])
    term = MonTerm(U3.varset("B"), U3.varset("A"))
    assert schema_degree(db, term) == 1
    assert schema_degree(Database(U3, [("R", r)]), term) == 2


def test_schema_degree_with_restriction_semantics():
    # S does not mention A; its restricted degree for (B|A) is its B-count
    u = Universe("ABC")
    r = rel(u, ("A", "B"), [(1, 1), (1, 2), (1, 3), (1, 4)])
    s = rel(u, ("B", "C"), [(5, 0), (6, 0)])
    db = Database(u, [("R", r), ("S", s)])
    term = MonTerm(u.varset("B"), u.varset("A"))
    assert max_degree(r, term) == 4
    assert schema_degree(db, term) == 2


def test_satisfies_and_violations():
    r = rel(U3, ("A", "B"), [(1, 2), (1, 3), (2, 2)])
    db = Database(U3, [("R", r)])
    term = MonTerm(U3.varset("B"), U3.varset("A"))
    assert satisfies(db, DegreeConstraintSet.of({term: 2}))
    assert not satisfies(db, DegreeConstraintSet.of({term: 1}))


def test_satisfies_random_against_direct_check():
    rng = random.Random(19)
    for _ in range(20):
        rows = {(rng.randrange(3), rng.randrange(3)) for _ in range(rng.randint(1, 9))}
        db = Database(U3, [("R", rel(U3, ("A", "B"), rows))])
        term = MonTerm(U3.varset("B"), U3.varset("A"))
        n = rng.randint(1, 3)
        direct = max(
            len({b for (a2, b) in rows if a2 == a}) for a in {a for a, _ in rows}
        ) <= n
        assert satisfies(db, DegreeConstraintSet.of({term: n})) == direct


def test_infer_constraints_defaults_and_rejection():
    r = rel(U3, ("A", "B"), [(1, 2), (1, 3)])
    db = Database(U3, [("R", r)])
    dc = infer_constraints(db)
    by_term = dict(dc.entries)
    assert by_term[MonTerm(U3.varset("B"), U3.varset("A"))] == 2
    assert by_term[uncond(U3.varset("AB"))] == 2
    assert all(n >= 1 for _, n in dc)
    with pytest.raises(ValueError):
        infer_constraints(db, [uncond(U3.varset("C"))])


def test_default_constraint_terms_stay_inside_atoms():
    db = Database(U3, [("R", rel(U3, ("A", "B"), [(1, 2)]))])
    terms = default_constraint_terms(db)
    assert all(t.all_vars <= U3.varset("AB") and t.y for t in terms)
    assert len(terms) == 5  # 3^2 var placements minus the 2^2 with empty Y


def ddr_ab_bc():
    return DDR(
        (Atom("R", ("A", "B")), Atom("S", ("B", "C"))),
        (Atom("U", ("A", "B")), Atom("V", ("B", "C"))),
    )


def test_verify_model_empty_join_accepts_anything():
    db = Database(U3, [("R", rel(U3, ("A", "B"), [])), ("S", rel(U3, ("B", "C"), [(2, 3)]))])
    out = {
        U3.varset("AB"): rel(U3, ("A", "B"), []),
        U3.varset("BC"): rel(U3, ("B", "C"), []),
    }
    assert verify_model(db, ddr_ab_bc(), out)


def test_verify_model_full_projections_cover():
    rng = random.Random(2)
    r = {(rng.randrange(4), rng.randrange(4)) for _ in range(10)}
    s = {(rng.randrange(4), rng.randrange(4)) for _ in range(10)}
    db = Database(U3, [("R", rel(U3, ("A", "B"), r)), ("S", rel(U3, ("B", "C"), s))])
    joined = full_natural_join(db)
    out = {
        U3.varset("AB"): joined.project(U3.varset("AB")),
        U3.varset("BC"): joined.project(U3.varset("BC")),
    }
    assert verify_model(db, ddr_ab_bc(), out)


def test_verify_model_detects_missing_fact():
    rng = random.Random(3)
    r = {(rng.randrange(3), rng.randrange(3)) for _ in range(8)}
    s = {(rng.randrange(3), rng.randrange(3)) for _ in range(8)}
    db = Database(U3, [("R", rel(U3, ("A", "B"), r)), ("S", rel(U3, ("B", "C"), s))])
    joined = full_natural_join(db)
    assert len(joined)
    # greedy minimal model: send every join tuple to the U side only
    u_rows = {project_row(joined.order, t, ("A", "B")) for t in joined.rows}
    out = {
        U3.varset("AB"): rel(U3, ("A", "B"), u_rows),
        U3.varset("BC"): rel(U3, ("B", "C"), []),
    }
    assert verify_model(db, ddr_ab_bc(), out)
    dropped = sorted(u_rows)[0]
    out[U3.varset("AB")] = rel(U3, ("A", "B"), u_rows - {dropped})
    assert not verify_model(db, ddr_ab_bc(), out)


def test_verify_model_monotone_in_output():
    rng = random.Random(4)
    r = {(rng.randrange(3), rng.randrange(3)) for _ in range(6)}
    s = {(rng.randrange(3), rng.randrange(3)) for _ in range(6)}
    db = Database(U3, [("R", rel(U3, ("A", "B"), r)), ("S", rel(U3, ("B", "C"), s))])
    joined = full_natural_join(db)
    u_rows = {project_row(joined.order, t, ("A", "B")) for t in joined.rows}
    base = {
        U3.varset("AB"): rel(U3, ("A", "B"), u_rows),
        U3.varset("BC"): rel(U3, ("B", "C"), []),
    }
    assert verify_model(db, ddr_ab_bc(), base)
    bigger = dict(base)
    bigger[U3.varset("BC")] = rel(U3, ("B", "C"), {(0, 0), (1, 2)})
    assert verify_model(db, ddr_ab_bc(), bigger)


# --- property tests ------------------------------------------------------

row_strategy = st.lists(
    st.tuples(st.integers(0, 3), st.integers(0, 3), st.integers(0, 3)),
    max_size=25,
)


@settings(max_examples=60, deadline=None)
@given(rows=row_strategy)
def test_degree_chain_property(rows):
    r = rel(U3, ("A", "B", "C"), rows)
    term = MonTerm(U3.varset("B"), U3.varset("A"))
    restricted = restrict(r, term.all_vars)
    md = max_degree(r, term)
    assert md <= len(restricted)
    for row in restricted.rows:
        assert degree_at(r, term, (row[0],)) <= md


@settings(max_examples=60, deadline=None)
@given(rows=row_strategy)
def test_restrict_idempotent(rows):
    r = rel(U3, ("A", "B", "C"), rows)
    w = U3.varset("AC")
    assert restrict(restrict(r, w), w) == restrict(r, w)


@settings(max_examples=40, deadline=None)
@given(
    r_rows=st.lists(st.tuples(st.integers(0, 3), st.integers(0, 3)), max_size=15),
    s_rows=st.lists(st.tuples(st.integers(0, 3), st.integers(0, 3)), max_size=15),
)
def test_join_projections_within_atoms(r_rows, s_rows):
    db = Database(
        U3, [("R", rel(U3, ("A", "B"), r_rows)), ("S", rel(U3, ("B", "C"), s_rows))]
    )
    joined = full_natural_join(db)
    for _, atom_rel in db.atoms:
        projected = joined.project(atom_rel.vars)
        assert set(projected.rows) <= set(atom_rel.rows)
