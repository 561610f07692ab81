import random
from collections import Counter
from fractions import Fraction

import pytest

from flowjoin import (
    Atom,
    Budget,
    ConstraintViolationError,
    DDR,
    Database,
    DegreeConstraintSet,
    MonTerm,
    Relation,
    Universe,
    answer_ddr,
    apply_step,
    full_natural_join,
    infer_constraints,
    init_from_constraint,
    run,
    run_sequence,
    uncond,
    verify_model,
)
from flowjoin.executor import ExecState, initial_state
from flowjoin.gen import hexagon_fixture, q1_fixture, random_ddr_fixture
from flowjoin.measures import eval_at
from flowjoin.shannonflow import build_proof_sequence

from conftest import hexagon_identity, hexagon_reference_steps, rel


def hexagon_reference_state(db, n):
    """Initial slots for the doubled hexagon inequality + the reference trace."""
    u = db.universe
    zs, ds, ms, ss = hexagon_identity(u)
    rels = dict(db.atoms)
    slot_rel = {"ABC": rels["R"], "CDE": rels["S"], "AEF": rels["T"], "BDF": rels["K"]}
    slots, measures = [], []
    for term, c in sorted(ds.items(), key=lambda e: e[0].sort_key()):
        p = init_from_constraint(slot_rel[str(term.y)], term, n)
        slots.extend([term] * c)
        measures.extend([p] * c)
    ms_t = tuple(sorted(ms.elements(), key=lambda t: t.sort_key()))
    ss_t = tuple(sorted(ss.elements(), key=lambda t: t.sort_key()))
    zs_t = tuple(sorted(zs.elements(), key=lambda z: z.sort_key()))
    return ExecState(zs_t, tuple(slots), tuple(measures), ms_t, ss_t, hexagon_reference_steps(u))


def degree_map(relation, key_names, val_names):
    groups = {}
    kpos = relation.positions(key_names)
    vpos = relation.positions(val_names)
    for row in relation.rows:
        groups.setdefault(tuple(row[i] for i in kpos), set()).add(
            tuple(row[i] for i in vpos)
        )
    return {k: len(v) for k, v in groups.items()}


def reference_final_measures(db, n):
    """Closed forms of the two surviving product measures, derived with
    independent group-by counting."""
    u = db.universe
    rels = dict(db.atoms)
    deg_s = degree_map(rels["S"], ("C",), ("D", "E"))
    deg_k = degree_map(rels["K"], ("F",), ("B", "D"))
    f_support = sorted({row[rels["K"].order.index("F")] for row in rels["K"].rows})
    c_support = sorted(deg_s)

    prime, second = {}, {}
    for a, b, c in rels["R"].rows:
        for c2, d, e in rels["S"].rows:
            if c2 != c:
                continue
            for f in f_support:
                w = Fraction(deg_k[(f,)], n * n * deg_s[(c,)])
                if w >= Fraction(1, n * n):
                    prime[(a, b, c, d, e, f)] = w
    for a, e, f in rels["T"].rows:  # canonical column order A,E,F
        for b, d, f2 in rels["K"].rows:  # canonical column order B,D,F
            if f2 != f:
                continue
            for (c,) in c_support:
                w = Fraction(deg_s[(c,)], n * n * deg_k[(f,)])
                if w >= Fraction(1, n * n):
                    second[(a, b, c, d, e, f)] = w
    return prime, second


def entries_of(measure):
    return dict(measure.entries.get((), {}))


def test_reference_trace_matches_closed_forms():
    for seed in range(3):
        rng = random.Random(seed)
        n = 32
        universe, ddr, db, dc = hexagon_fixture(n, rng)
        state = hexagon_reference_state(db, n)
        budget = Budget(2, n**4)

        # first merged row: marginal and conditional of the S measure
        after_dec, _ = apply_step(state.seq[0], state, budget)
        deg_s = degree_map(dict(db.atoms)["S"], ("C",), ("D", "E"))
        pc = after_dec.measures[after_dec.slots.index(uncond(universe.varset("C")))]
        assert pc.support_size() > 0
        for _, (c,), w in pc.iter_entries():
            assert w == Fraction(deg_s[(c,)], n)
        pdec = after_dec.measures[
            after_dec.slots.index(MonTerm(universe.varset("DE"), universe.varset("C")))
        ]
        for (c,), _, w in pdec.iter_entries():
            assert w == Fraction(1, deg_s[(c,)])

        # second merged row: the composed five-variable measure
        s2, _ = apply_step(after_dec.seq[0], after_dec, budget)
        s3, _ = apply_step(s2.seq[0], s2, budget)
        p5 = s3.measures[s3.slots.index(uncond(universe.varset("ABCDE")))]
        for _, y_row, w in p5.iter_entries():
            c = y_row[p5.y_order.index("C")]
            assert w == Fraction(1, n * deg_s[(c,)])

        # full run: the two closed-form product measures appear among leaves
        result = run(state, budget)
        prime, second = reference_final_measures(db, n)
        leaf_entries = [entries_of(leaf.measure) for leaf in result.leaves]
        assert prime in leaf_entries
        assert second in leaf_entries


def test_reference_run_covers_oracle_join():
    rng = random.Random(99)
    n = 32
    universe, ddr, db, dc = hexagon_fixture(n, rng)
    state = hexagon_reference_state(db, n)
    result = run(state, Budget(2, n**4))
    joined = full_natural_join(db)
    union = set()
    for leaf in result.leaves:
        assert leaf.measure.support_size() <= n * n
        from flowjoin.measures import support

        union.update(support(leaf.measure).rows)
    assert set(joined.rows) <= union


def test_apply_step_sub_keeps_weights_bit_identical():
    rng = random.Random(1)
    n = 16
    universe, ddr, db, dc = hexagon_fixture(n, rng)
    state = hexagon_reference_state(db, n)
    budget = Budget(2, n**4)
    after_dec, _ = apply_step(state.seq[0], state, budget)
    before = after_dec.measures[
        after_dec.slots.index(MonTerm(universe.varset("DE"), universe.varset("C")))
    ]
    widened_state, _ = apply_step(after_dec.seq[0], after_dec, budget)
    after = widened_state.measures[
        widened_state.slots.index(MonTerm(universe.varset("DE"), universe.varset("ABC")))
    ]
    assert after.entries == before.entries
    assert after.eff_cond == before.eff_cond


def test_composition_with_unbounded_budget_preserves_products():
    rng = random.Random(5)
    n = 12
    universe, ddr, db, dc = hexagon_fixture(n, rng)
    state = hexagon_reference_state(db, n)
    final = run_sequence(state, Budget.unbounded())
    joined = full_natural_join(db)
    copies = [p for t, p in zip(final.slots, final.measures)
              if t == uncond(universe.varset("ABCDEF"))]
    assert len(copies) == 2
    originals = state.measures
    for row in joined.rows:
        lhs = Fraction(1)
        for p in copies:
            lhs *= eval_at(p, joined.order, row)
        rhs = Fraction(1)
        for p in originals:
            rhs *= eval_at(p, joined.order, row)
        assert lhs == rhs  # no truncation, no mass lost on the way


def test_answer_ddr_hexagon_equals_oracle():
    rng = random.Random(7)
    n = 24
    universe, ddr, db, dc = hexagon_fixture(n, rng)
    res = answer_ddr(ddr, db, dc, check_invariants=True, oracle_check=True)
    out = res.model.relations[universe.varset("ABCDEF")]
    joined = full_natural_join(db)
    assert set(out.rows) == set(joined.rows)
    for _, size in res.model.stats.per_leaf:
        assert res.budget.count_leq(size)


def test_answer_ddr_empty_input_gives_empty_model():
    u = Universe("ABC")
    db = Database(
        u, [("R", rel(u, ("A", "B"), [])), ("S", rel(u, ("B", "C"), [(1, 2)]))]
    )
    ddr = DDR(
        (Atom("R", ("A", "B")), Atom("S", ("B", "C"))),
        (Atom("U", ("A", "B")), Atom("V", ("B", "C"))),
    )
    dc = DegreeConstraintSet.of(
        {uncond(u.varset("AB")): 4, uncond(u.varset("BC")): 4}
    )
    res = answer_ddr(ddr, db, dc, check_invariants=True, oracle_check=True)
    assert all(len(r) == 0 for r in res.model.relations.values())


def test_answer_ddr_rejects_unsatisfied_constraints():
    rng = random.Random(3)
    universe, ddr, db, dc = q1_fixture(20, rng)
    tight = DegreeConstraintSet.of({t: 1 for t, _ in dc})
    with pytest.raises(ConstraintViolationError):
        answer_ddr(ddr, db, tight)


def test_answer_ddr_q1_sizes_and_model():
    rng = random.Random(11)
    n = 40
    universe, ddr, db, dc = q1_fixture(n, rng)
    res = answer_ddr(ddr, db, dc, check_invariants=True, oracle_check=True)
    assert verify_model(db, ddr, res.model.relations)
    for _, size in res.model.stats.per_leaf:
        assert res.budget.count_leq(size)
    assert res.certificate.exponent_log_n == Fraction(3, 2)


def test_determinism_of_runs():
    rng = random.Random(13)
    universe, ddr, db = random_ddr_fixture(rng)
    dc = infer_constraints(db)
    a = answer_ddr(ddr, db, dc)
    b = answer_ddr(ddr, db, dc)
    assert a.model.stats.per_leaf == b.model.stats.per_leaf
    assert a.model.stats.leaf_count == b.model.stats.leaf_count
    for vs, relation in a.model.relations.items():
        assert relation == b.model.relations[vs]


def test_depth_bounded_by_initial_potential():
    from flowjoin.shannonflow import potential

    for seed in (0, 1, 2, 3, 4):
        rng = random.Random(seed)
        universe, ddr, db = random_ddr_fixture(rng)
        dc = infer_constraints(db)
        res = answer_ddr(ddr, db, dc, check_invariants=True, oracle_check=True)
        cert = res.certificate
        cap = potential(
            cert.integral.d_counter(), cert.witness.m_counter(), cert.witness.s_counter()
        )
        assert res.model.stats.max_depth <= cap
