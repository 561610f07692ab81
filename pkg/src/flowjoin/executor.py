"""Recursive executor: proof steps drive measure transforms, budgets cap supports.

A node carries the target multiset Z, positional slots D (one monotonicity
term per copy) with one measure each, the witness (M, S) and the remaining
proof sequence.  If some slot holds an unconditional term that is also a
target, its support is emitted and the branch ends.  Otherwise the next
proof step rewrites one or two slots.  A composition step additionally
spawns a heavy branch (when more than one target remains): the composed
term is removed through the reset construction and the surviving slots
continue under a freshly built sequence.  Dropped or truncated mass on one
branch is exactly the mass some other branch still covers, which is what
the invariant audit verifies.
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Optional

from .bounds import BoundCertificate, Budget, make_budget, solve_bound
from .measures import (
    Measure,
    conditional,
    eval_at,
    init_from_constraint,
    marginal,
    support,
    truncated_product,
    widen_condition,
)
from .relational import (
    DDR,
    ConstraintViolationError,
    Database,
    DegreeConstraintSet,
    MonTerm,
    Relation,
    full_natural_join,
    max_degree,
    satisfies,
    uncond,
)
from .shannonflow import (
    ProofSequence,
    ProofStep,
    apply_step_witness,
    build_proof_sequence,
    check_identity,
    potential,
    reset,
)
from .varsets import VarSet


class InvariantError(AssertionError):
    """An execution invariant failed under --check-invariants."""


@dataclass(frozen=True)
class ExecState:
    zs: tuple[VarSet, ...]
    slots: tuple[MonTerm, ...]
    measures: tuple[Measure, ...]
    ms: tuple[MonTerm, ...]
    ss: tuple  # SubTerm multiset as a sorted tuple
    seq: tuple[ProofStep, ...]

    def __post_init__(self):
        if not self.zs:
            raise ValueError("empty target multiset")
        if len(self.slots) != len(self.measures):
            raise ValueError("one measure per D slot required")
        for term, p in zip(self.slots, self.measures):
            if p.term() != term:
                raise ValueError(f"slot {term} holds a measure for {p.term()}")

    def z_counter(self) -> Counter:
        return Counter(self.zs)

    def d_counter(self) -> Counter:
        return Counter(self.slots)


@dataclass
class LeafRecord:
    head: VarSet
    measure: Measure
    state: ExecState
    depth: int


@dataclass
class RunStats:
    leaf_count: int = 0
    node_count: int = 0
    max_depth: int = 0
    per_leaf: list = field(default_factory=list)  # (head name, raw support size)


@dataclass
class RunResult:
    leaves: list[LeafRecord]
    stats: RunStats
    trace: list  # ExecState per visited node (only when tracing)


@dataclass
class OutputModel:
    relations: dict[VarSet, Relation]
    stats: RunStats


@dataclass
class DdrResult:
    model: OutputModel
    certificate: BoundCertificate
    budget: Budget
    audit: Optional["AuditReport"] = None


def _first_emittable(state: ExecState) -> Optional[int]:
    zset = {z.mask for z in state.zs}
    best = None
    for i, term in enumerate(state.slots):
        if term.unconditional and term.y.mask in zset:
            if best is None or term.y.sort_key() < state.slots[best].y.sort_key():
                best = i
    return best


def apply_step(step: ProofStep, state: ExecState, budget: Budget) -> tuple[ExecState, Optional[int]]:
    """One measure-level rewrite; returns the new state and the index of the
    freshly created slot (None for SUB, which rewrites in place)."""
    slots, measures = list(state.slots), list(state.measures)
    ms, ss = Counter(state.ms), Counter(state.ss)

    def find(term: MonTerm) -> int:
        for i, t in enumerate(slots):
            if t == term:
                return i
        raise InvariantError(f"no slot holds {term}")

    x, y, z = step.x, step.y, step.z
    if step.kind == "SUB":
        i = find(MonTerm(y, x))
        slots[i] = MonTerm(y, x | z)
        measures[i] = widen_condition(measures[i], z)
        new_idx = None
    elif step.kind == "DEC":
        i = find(uncond(x | y))
        p = measures[i]
        slots[i : i + 1] = [uncond(x), MonTerm(y, x)]
        measures[i : i + 1] = [marginal(p, x), conditional(p, x)]
        new_idx = i
    elif step.kind == "MON":
        i = find(uncond(x | y))
        if x:
            slots[i] = uncond(x)
            measures[i] = marginal(measures[i], x)
            new_idx = i
        else:
            del slots[i], measures[i]
            new_idx = None
    else:  # COMP
        i = find(uncond(x))
        j = find(MonTerm(y, x))
        product = truncated_product(measures[i], measures[j], budget)
        keep_i = min(i, j)
        for k in sorted((i, j), reverse=True):
            del slots[k], measures[k]
        slots.insert(keep_i, uncond(x | y))
        measures.insert(keep_i, product)
        new_idx = keep_i
    mc, sc = apply_step_witness(ms, ss, step)
    new_state = ExecState(
        state.zs,
        tuple(slots),
        tuple(measures),
        tuple(sorted(mc.elements(), key=lambda t: t.sort_key())),
        tuple(sorted(sc.elements(), key=lambda t: t.sort_key())),
        state.seq[1:] if state.seq and state.seq[0] is step else state.seq,
    )
    return new_state, new_idx


def _heavy_state(state: ExecState, new_idx: Optional[int], w: VarSet) -> Optional[ExecState]:
    """Reset away the composed term and select surviving measure copies.

    The freshly composed (truncated) slot is excluded from selection: the
    heavy branch exists precisely to cover the mass that slot dropped.
    """
    zc, dc, mc, sc = reset(
        Counter(state.zs), state.d_counter(), Counter(state.ms), Counter(state.ss), w
    )
    needed = dc.copy()
    keep: list[int] = []
    order = [i for i in range(len(state.slots)) if i != new_idx]
    if new_idx is not None:
        order.append(new_idx)
    for i in order:
        t = state.slots[i]
        if needed[t] > 0:
            needed[t] -= 1
            keep.append(i)
    keep.sort()
    zs = tuple(sorted(zc.elements(), key=lambda v: v.sort_key()))
    ms = tuple(sorted(mc.elements(), key=lambda t: t.sort_key()))
    ss = tuple(sorted(sc.elements(), key=lambda t: t.sort_key()))
    slots = tuple(state.slots[i] for i in keep)
    measures = tuple(state.measures[i] for i in keep)
    seq = build_proof_sequence(zc, Counter(slots), Counter(ms), Counter(ss))
    return ExecState(zs, slots, measures, ms, ss, tuple(seq.steps))


def run_sequence(state: ExecState, budget: Budget) -> ExecState:
    """Apply every remaining proof step in order, with no branching and no
    early exit.  With an unbounded budget this realizes the pure
    measure-transform chain whose end states carry one measure per target
    copy."""
    while state.seq:
        state, _ = apply_step(state.seq[0], state, budget)
    return state


def run(state: ExecState, budget: Budget, trace: bool = False) -> RunResult:
    """Explicit-stack traversal of the execution tree."""
    stats = RunStats()
    leaves: list[LeafRecord] = []
    visited: list = []
    stack: list[tuple[ExecState, int]] = [(state, 0)]
    while stack:
        node, depth = stack.pop()
        stats.node_count += 1
        stats.max_depth = max(stats.max_depth, depth)
        if trace:
            visited.append(node)
        i = _first_emittable(node)
        if i is not None:
            head = node.slots[i].y
            leaf = LeafRecord(head, node.measures[i], node, depth)
            leaves.append(leaf)
            stats.leaf_count += 1
            stats.per_leaf.append((str(head), node.measures[i].support_size()))
            continue
        if not node.seq:
            raise InvariantError("proof sequence exhausted before reaching a target")
        step = node.seq[0]
        light, new_idx = apply_step(step, node, budget)
        if step.kind == "COMP" and len(node.zs) > 1:
            heavy = _heavy_state(light, new_idx, step.x | step.y)
            stack.append((heavy, depth + 1))
        stack.append((light, depth + 1))
    leaves.sort(key=lambda l: l.head.sort_key())
    stats.per_leaf.sort()
    return RunResult(leaves, stats, visited)


# ---------------------------------------------------------------------------
# end-to-end pipeline


def _choose_relation(db: Database, delta: MonTerm, n: int, domains) -> Relation:
    """Smallest-restriction relation whose degree meets the bound."""
    best, best_key = None, None
    for pos, (sym, rel) in enumerate(db.atoms):
        if max_degree(rel, delta, domains) > n:
            continue
        if delta.all_vars <= rel.vars:
            size = len(rel.project(delta.all_vars))
        else:
            shared = delta.all_vars & rel.vars
            size = len(rel.project(shared)) if shared else (1 if len(rel) else 0)
            for v in (delta.all_vars - rel.vars).names:
                size *= len(domains[v])
        key = (size, pos)
        if best is None or key < best_key:
            best, best_key = rel, key
    if best is None:
        raise ConstraintViolationError(f"no relation satisfies {delta} <= {n}")
    return best


def initial_state(
    ddr: DDR, db: Database, cert: BoundCertificate, seq: Optional[ProofSequence] = None
) -> ExecState:
    domains = db.active_domains()
    zs, slots, measures = [], [], []
    for z, c in sorted(cert.integral.z_counter().items(), key=lambda e: e[0].sort_key()):
        zs.extend([z] * c)
    n_of = dict(cert.bounds)
    for term, c in sorted(cert.integral.d_counter().items(), key=lambda e: e[0].sort_key()):
        rel = _choose_relation(db, term, n_of[term], domains)
        p = init_from_constraint(rel, term, n_of[term], domains)
        for _ in range(c):
            slots.append(term)
            measures.append(p)
    if seq is None:
        seq = build_proof_sequence(
            Counter(zs), Counter(slots), Counter(cert.witness.ms), Counter(cert.witness.ss)
        )
    return ExecState(
        tuple(zs), tuple(slots), tuple(measures), cert.witness.ms, cert.witness.ss, tuple(seq.steps)
    )


def assemble_model(ddr: DDR, db: Database, result: RunResult) -> OutputModel:
    """Union the per-leaf supports per head, then strip tuples that violate
    any input atom contained in the head (models stay models under this
    filter: a covered join tuple satisfies every atom)."""
    universe = db.universe
    by_head: dict[VarSet, set] = {a.vars(universe): set() for a in ddr.output_atoms}
    order_of = {a.vars(universe): a.order for a in ddr.output_atoms}
    for leaf in result.leaves:
        rel = support(leaf.measure)
        target = order_of[leaf.head]
        pos = rel.positions(target)
        by_head[leaf.head].update(tuple(r[i] for i in pos) for r in rel.rows)
    relations = {}
    for head, rows in by_head.items():
        rel = Relation(universe, order_of[head], rows)
        for _, atom_rel in db.atoms:
            if atom_rel.vars <= head:
                rel = rel.semijoin(atom_rel)
        relations[head] = rel
    return OutputModel(relations, result.stats)


def answer_ddr(
    ddr: DDR,
    db: Database,
    dc: DegreeConstraintSet,
    *,
    certificate: Optional[BoundCertificate] = None,
    check_invariants: bool = False,
    oracle_check: bool = False,
) -> DdrResult:
    """Bound certificate -> budget -> initial measures -> proof-driven run."""
    ddr.validate(db.universe)
    if not satisfies(db, dc):
        raise ConstraintViolationError("instance does not satisfy the degree constraints")
    cert = certificate or solve_bound(
        [a.vars(db.universe) for a in ddr.output_atoms], dc, db.universe
    )
    budget = make_budget(cert)
    state = initial_state(ddr, db, cert)
    result = run(state, budget, trace=check_invariants)
    model = assemble_model(ddr, db, result)
    audit = None
    if check_invariants or oracle_check:
        join = full_natural_join(db) if oracle_check else None
        audit = audit_invariants(result, budget, init_potential=potential(
            Counter(state.slots), Counter(state.ms), Counter(state.ss)), join=join)
        if not audit.ok:
            raise InvariantError("; ".join(audit.failures))
        if oracle_check:
            from .relational import verify_model

            if not verify_model(db, ddr, model.relations):
                raise InvariantError("output is not a model of the rule")
    return DdrResult(model, cert, budget, audit)


# ---------------------------------------------------------------------------
# invariant audit


@dataclass
class AuditReport:
    ok: bool
    failures: list[str]
    nodes_checked: int
    leaves_checked: int
    tuples_checked: int


def audit_invariants(
    result: RunResult,
    budget: Budget,
    init_potential: Optional[int] = None,
    join: Optional[Relation] = None,
) -> AuditReport:
    """(a) identities, (b) conditional masses, (c) unconditional floor,
    (d) nonempty targets, (e) some leaf retains 1/B^{|Z|} mass per join tuple."""
    failures: list[str] = []
    nodes = result.trace if result.trace else [leaf.state for leaf in result.leaves]
    for node in nodes:
        if not node.zs:
            failures.append("(d) empty target multiset")
        if not check_identity(
            node.z_counter(), node.d_counter(), Counter(node.ms), Counter(node.ss)
        ):
            failures.append(f"(a) identity broken at node with D={node.slots}")
        for term, p in zip(node.slots, node.measures):
            for x_row in p.entries:
                mass = p.mass(x_row)
                if mass > 1:
                    failures.append(f"(b) mass {mass} > 1 at {term}")
                    break
            if term.unconditional:
                for _, _, w in p.iter_entries():
                    if not budget.geq(w):
                        failures.append(f"(c) weight {w} below 1/B at {term}")
                        break
    if init_potential is not None and result.stats.max_depth > init_potential:
        failures.append(
            f"depth {result.stats.max_depth} exceeds potential {init_potential}"
        )
    tuples_checked = 0
    if join is not None:
        for row in join.rows:
            tuples_checked += 1
            covered = False
            for leaf in result.leaves:
                prod = Fraction(1)
                for p in leaf.state.measures:
                    prod *= eval_at(p, join.order, row)
                    if not prod:
                        break
                if prod and budget.pow_geq(prod, len(leaf.state.zs)):
                    covered = True
                    break
            if not covered:
                failures.append(f"(e) join tuple {row} retained by no leaf")
                break
    return AuditReport(
        ok=not failures,
        failures=failures,
        nodes_checked=len(nodes),
        leaves_checked=len(result.leaves),
        tuples_checked=tuples_checked,
    )
