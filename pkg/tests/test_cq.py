import itertools
import random
from fractions import Fraction

import pytest

from flowjoin import (
    Atom,
    CQ,
    Database,
    DegreeConstraintSet,
    MonTerm,
    Relation,
    Universe,
    answer_cq,
    enumerate_tds,
    fhtw,
    full_natural_join,
    infer_constraints,
    rho_star,
    subw,
    uncond,
    yannakakis,
)
from flowjoin.cq import (
    CombinationCapError,
    Hypergraph,
    TooManyVariablesError,
    TreeDecomposition,
    greedy_td_pair,
)
from flowjoin.gen import cycle4_fixture, hexagon_fixture, random_cq_fixture, random_relation

from conftest import rel


def hypergraph(universe, *edges):
    return Hypergraph(universe.varset(set().union(*map(set, edges))),
                      tuple(universe.varset(e) for e in edges))


def bag_sets(tds):
    return {frozenset(frozenset(b.names) for b in td.bags) for td in tds}


def test_triangle_single_bag():
    u = Universe("ABC")
    tds = enumerate_tds(hypergraph(u, "AB", "BC", "CA"), u.full())
    assert bag_sets(tds) == {frozenset({frozenset("ABC")})}


def test_path_drops_dominated_decomposition():
    u = Universe("ABC")
    tds = enumerate_tds(hypergraph(u, "AB", "BC"), u.full())
    assert bag_sets(tds) == {frozenset({frozenset("AB"), frozenset("BC")})}


def test_exhaustive_orders_agree_on_cycle():
    # independent oracle: run every elimination order by hand
    u = Universe("ABCD")
    edges = ["AB", "BC", "CD", "DA"]
    hg = hypergraph(u, *edges)
    adj0 = {v: set() for v in "ABCD"}
    for e in edges:
        a, b = e
        adj0[a].add(b)
        adj0[b].add(a)
    expected = set()
    for order in itertools.permutations("ABCD"):
        adj = {k: set(vs) for k, vs in adj0.items()}
        bags = []
        for v in order:
            bag = frozenset(adj[v] | {v})
            bags.append(bag)
            nbrs = adj.pop(v)
            for x in nbrs:
                adj[x].discard(v)
                adj[x].update(n for n in nbrs if n != x)
        maximal = {b for b in bags if not any(b < b2 for b2 in bags)}
        expected.add(frozenset(maximal))
    tds = enumerate_tds(hg, u.full())
    assert bag_sets(tds) <= expected
    # the two incomparable triangulations of the 4-cycle survive pruning
    assert bag_sets(tds) == {
        frozenset({frozenset("ABD"), frozenset("BCD")}),
        frozenset({frozenset("ABC"), frozenset("ACD")}),
    }


def test_hexagon_tds_include_chain_groupings():
    u = Universe("ABCDEF")
    hg = hypergraph(u, "ABC", "CDE", "EFA", "BDF")
    tds = enumerate_tds(hg, u.full())
    found = bag_sets(tds)
    assert any(frozenset("ABC") in s and frozenset("CDE") in s for s in found)
    assert any(frozenset("AEF") in s for s in found)


def test_td_properties_hold():
    for seed in range(15):
        rng = random.Random(seed)
        universe, cq, db = random_cq_fixture(rng)
        hg = Hypergraph.of_atoms(universe, cq.input_atoms)
        free = cq.free(universe)
        for td in enumerate_tds(hg, free):
            for edge in hg.edges:
                assert any(edge <= bag for bag in td.bags)
            adj = td.neighbors()
            assert len(td.edges) == len(td.bags) - 1
            for v in hg.vertices.names:
                nodes = {i for i, b in enumerate(td.bags) if v in b}
                assert nodes
                seen = {min(nodes)}
                queue = [min(nodes)]
                while queue:
                    i = queue.pop()
                    for j in adj[i]:
                        if j in nodes and j not in seen:
                            seen.add(j)
                            queue.append(j)
                assert seen == nodes  # running intersection


def test_rho_star_examples():
    u = Universe("ABC")
    n = 64
    dc = DegreeConstraintSet.of({uncond(u.varset(s)): n for s in ("AB", "BC", "CA")})
    cert = rho_star(u.varset("ABC"), dc)
    assert cert.exponent_log_n == Fraction(3, 2)
    cert2 = rho_star(u.varset("AB"), dc)
    assert cert2.exponent_log_n == 1

    u2 = Universe("AB")
    import math

    dc2 = DegreeConstraintSet.of(
        {uncond(u2.varset("A")): 100, MonTerm(u2.varset("B"), u2.varset("A")): 5}
    )
    cert3 = rho_star(u2.varset("AB"), dc2)
    assert abs(cert3.exponent_bits - math.log2(100 * 5)) < 1e-9


def test_cycle4_widths():
    rng = random.Random(0)
    n = 64
    u, db, dc = cycle4_fixture(n, rng)
    hg = hypergraph(u, "AB", "BC", "CD", "AD")
    report = subw(hg, u.full(), dc)
    assert report.fhtw_log_n == Fraction(2)
    assert report.subw_log_n == Fraction(3, 2)
    assert report.fhtw_log_n >= report.subw_log_n


def test_fhtw_at_least_subw_on_random_instances():
    for seed in range(8):
        rng = random.Random(seed)
        universe, cq, db = random_cq_fixture(rng)
        dc = infer_constraints(db)
        hg = Hypergraph.of_atoms(universe, cq.input_atoms)
        free = cq.free(universe)
        tds = enumerate_tds(hg, free)
        if not tds:
            continue
        report = subw(hg, free, dc, tds=tds, max_combinations=512)
        assert report.subw_bits <= report.fhtw_bits + 1e-9


def test_answer_cycle4_equals_oracle():
    rng = random.Random(21)
    n = 64
    u, db, dc = cycle4_fixture(n, rng)
    cq = CQ(Atom("Q", ("A", "B", "C", "D")),
            (Atom("R", ("A", "B")), Atom("S", ("B", "C")),
             Atom("T", ("C", "D")), Atom("K", ("D", "A"))))
    ans = answer_cq(cq, db, dc)
    assert set(ans.rows) == set(full_natural_join(db).rows)


def test_answer_hexagon_equals_oracle():
    rng = random.Random(22)
    n = 64
    universe, ddr, db, dc = hexagon_fixture(n, rng)
    cq = CQ(Atom("Q", tuple("ABCDEF")), ddr.input_atoms)
    ans = answer_cq(cq, db, dc)
    joined = full_natural_join(db)
    assert set(ans.rows) == set(joined.rows)


def test_boolean_triangle_on_triangle_free_graph():
    u = Universe("ABC")
    edges = [(0, 1), (1, 2), (2, 3), (3, 4)]
    db = Database(u, [("R", rel(u, ("A", "B"), edges)),
                      ("S", rel(u, ("B", "C"), edges)),
                      ("T", rel(u, ("C", "A"), edges))])
    cq = CQ(Atom("Q", ()), (Atom("R", ("A", "B")), Atom("S", ("B", "C")), Atom("T", ("C", "A"))))
    dc = infer_constraints(db)
    assert len(answer_cq(cq, db, dc)) == 0


def test_boolean_triangle_positive():
    u = Universe("ABC")
    edges = [(0, 1), (1, 2), (2, 0)]
    db = Database(u, [("R", rel(u, ("A", "B"), edges)),
                      ("S", rel(u, ("B", "C"), edges)),
                      ("T", rel(u, ("C", "A"), edges))])
    cq = CQ(Atom("Q", ()), (Atom("R", ("A", "B")), Atom("S", ("B", "C")), Atom("T", ("C", "A"))))
    dc = infer_constraints(db)
    assert len(answer_cq(cq, db, dc)) == 1


def test_answer_invariant_under_td_subsets():
    count = 0
    seed = 0
    while count < 6:
        seed += 1
        rng = random.Random(seed)
        universe, cq, db = random_cq_fixture(rng)
        dc = infer_constraints(db)
        hg = Hypergraph.of_atoms(universe, cq.input_atoms)
        free = cq.free(universe)
        tds = enumerate_tds(hg, free)
        if not tds or len(tds) > 3:
            continue
        reference = None
        for k in range(1, len(tds) + 1):
            for subset in itertools.combinations(tds, k):
                ans = frozenset(answer_cq(cq, db, dc, tds=list(subset)).rows)
                if reference is None:
                    reference = ans
                assert ans == reference
        count += 1


def test_single_td_reduces_to_yannakakis_over_bags():
    rng = random.Random(33)
    u = Universe("ABC")
    r = random_relation(u, ("A", "B"), 20, 5, rng)
    s = random_relation(u, ("B", "C"), 20, 5, rng)
    db = Database(u, [("R", r), ("S", s)])
    cq = CQ(Atom("Q", ("A", "B", "C")), (Atom("R", ("A", "B")), Atom("S", ("B", "C"))))
    dc = infer_constraints(db)
    tds = enumerate_tds(Hypergraph.of_atoms(u, cq.input_atoms), u.full())
    assert len(tds) == 1
    ans = answer_cq(cq, db, dc, tds=tds)
    assert set(ans.rows) == set(full_natural_join(db).rows)


def test_yannakakis_boolean_and_projection():
    u = Universe("ABC")
    td = TreeDecomposition((u.varset("AB"), u.varset("BC")), ((0, 1),), True)
    rels = {0: rel(u, ("A", "B"), [(1, 2), (3, 4)]), 1: rel(u, ("B", "C"), [(2, 5)])}
    out = yannakakis(td, rels, u.varset("ABC"), u)
    assert set(out.rows) == {(1, 2, 5)}
    boolean = yannakakis(td, rels, u.empty(), u)
    assert len(boolean) == 1
    empty = {0: rel(u, ("A", "B"), [(1, 2)]), 1: rel(u, ("B", "C"), [(9, 9)])}
    assert len(yannakakis(td, empty, u.empty(), u)) == 0


def test_combination_cap_enforced_with_forced_tds():
    rng = random.Random(2)
    n = 16
    universe, ddr, db, dc = hexagon_fixture(n, rng)
    cq = CQ(Atom("Q", tuple("ABCDEF")), ddr.input_atoms)
    hg = Hypergraph.of_atoms(universe, cq.input_atoms)
    tds = enumerate_tds(hg, universe.full())
    if len(list(itertools.product(*[range(len(t.bags)) for t in tds]))) > 2:
        with pytest.raises(CombinationCapError):
            answer_cq(cq, db, dc, tds=tds, max_combinations=2)
    ans = answer_cq(cq, db, dc, max_combinations=2)  # default falls back to greedy
    assert set(ans.rows) == set(full_natural_join(db).rows)


def test_variable_cap():
    u = Universe([chr(ord("A") + i) for i in range(11)])
    edges = [u.varset([u.names[i], u.names[i + 1]]) for i in range(10)]
    hg = Hypergraph(u.full(), tuple(edges))
    with pytest.raises(TooManyVariablesError):
        enumerate_tds(hg, u.full())
