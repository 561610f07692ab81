"""Conjunctive queries via tree decompositions over the rule engine.

Tree decompositions come from vertex elimination orders.  The graph left
after eliminating a set of vertices does not depend on the order inside the
set, so distinct outcomes are enumerated by dynamic programming over
subsets, with dominated bags dropped early.  For queries with a proper set
of free variables, orders eliminate the non-free variables first; the bags
created while eliminating free variables then contain free variables only
and form a connected subtree, which is what the assembly stage needs.

A query is answered by running, for every combination of one bag per
decomposition, the rule whose heads are those bags, accumulating each
head's output into its bag, and finally semijoin-reducing and joining per
decomposition.  Any nonempty subset of decompositions is sound: every body
tuple lands in some head of every combination, so per decomposition the
fully-covered tuples are recovered, and every body tuple is fully covered
by at least one decomposition in the subset.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from fractions import Fraction
from typing import Iterable, Optional, Sequence

from .bounds import BoundCertificate, solve_bound
from .executor import answer_ddr
from .relational import (
    DDR,
    Atom,
    Database,
    DegreeConstraintSet,
    Relation,
)
from .varsets import Universe, VarSet

MAX_TD_VARIABLES = 10
DEFAULT_COMBINATION_CAP = 256


class TooManyVariablesError(ValueError):
    pass


class CombinationCapError(RuntimeError):
    """The bag-combination space exceeds the cap; pass a TD subset instead."""


@dataclass(frozen=True)
class CQ:
    head: Atom
    input_atoms: tuple[Atom, ...]

    def free(self, universe: Universe) -> VarSet:
        return universe.varset(self.head.order)

    def as_ddr(self) -> DDR:
        return DDR(self.input_atoms, (self.head,))

    @property
    def boolean(self) -> bool:
        return not self.head.order


@dataclass(frozen=True)
class Hypergraph:
    vertices: VarSet
    edges: tuple[VarSet, ...]

    def __post_init__(self):
        covered = self.vertices.universe.empty()
        for e in self.edges:
            covered = covered | e
        if covered != self.vertices:
            raise ValueError("every vertex must occur in some edge")

    @classmethod
    def of_atoms(cls, universe: Universe, atoms: Iterable[Atom]) -> "Hypergraph":
        edges = tuple(a.vars(universe) for a in atoms)
        verts = universe.empty()
        for e in edges:
            verts = verts | e
        return cls(verts, edges)


@dataclass(frozen=True)
class TreeDecomposition:
    bags: tuple[VarSet, ...]
    edges: tuple[tuple[int, int], ...]  # tree edges between bag indices
    free_connex: bool

    def neighbors(self) -> dict[int, list[int]]:
        adj: dict[int, list[int]] = {i: [] for i in range(len(self.bags))}
        for a, b in self.edges:
            adj[a].append(b)
            adj[b].append(a)
        return adj

    def key(self):
        return tuple(sorted(b.sort_key() for b in self.bags))

    def __str__(self) -> str:
        return "{" + ", ".join(str(b) for b in sorted(self.bags, key=lambda b: b.sort_key())) + "}"


@dataclass
class WidthReport:
    per_td: list[tuple[TreeDecomposition, float, Optional[Fraction]]]
    fhtw_bits: Optional[float] = None
    fhtw_log_n: Optional[Fraction] = None
    subw_bits: Optional[float] = None
    subw_log_n: Optional[Fraction] = None
    worst_combination: Optional[tuple[VarSet, ...]] = None


# ---------------------------------------------------------------------------
# tree decomposition enumeration


def _primal_adjacency(hg: Hypergraph) -> dict[str, set]:
    adj: dict[str, set] = {v: set() for v in hg.vertices.names}
    for e in hg.edges:
        names = e.names
        for a in names:
            for b in names:
                if a != b:
                    adj[a].add(b)
    return adj


def _eliminate(adj: dict[str, set], v: str) -> dict[str, set]:
    out = {u: set(ns) for u, ns in adj.items() if u != v}
    nbrs = adj[v]
    for a in nbrs:
        if a in out:
            out[a].discard(v)
            out[a].update(b for b in nbrs if b != a and b in out)
    return out


def _reduce_bags(bags: Iterable[frozenset], free: Optional[frozenset]) -> frozenset:
    """Drop dominated bags; a bag inside the free set is only dropped for a
    dominator that also stays inside the free set."""
    bags = set(bags)
    out = set()
    for b in bags:
        dominated = any(
            b < b2 and (free is None or not b <= free or b2 <= free) for b2 in bags
        )
        if not dominated:
            out.add(b)
    return frozenset(out)


def enumerate_tds(hg: Hypergraph, free: VarSet) -> list[TreeDecomposition]:
    """Non-redundant free-connex tree decompositions from elimination orders."""
    universe = hg.vertices.universe
    n = len(hg.vertices)
    if n > MAX_TD_VARIABLES:
        raise TooManyVariablesError(
            f"too many variables for decomposition enumeration ({n} > {MAX_TD_VARIABLES})"
        )
    names = hg.vertices.names
    proper_free = bool(free) and free != hg.vertices
    free_names = frozenset(free.names) if proper_free else None
    nonfree = [v for v in names if free_names is None or v not in free_names]

    adj0 = _primal_adjacency(hg)
    memo: dict[int, dict] = {}

    def outcomes(mask: int, adj: dict[str, set]) -> dict:
        """Map from reduced bag frozenset to one witnessing elimination order."""
        hit = memo.get(mask)
        if hit is not None:
            return hit
        remaining = [v for v in names if not mask >> names.index(v) & 1]
        if not remaining:
            memo[mask] = {frozenset(): ()}
            return memo[mask]
        if free_names is not None:
            nf = [v for v in remaining if v not in free_names]
            candidates = nf if nf else remaining
        else:
            candidates = remaining
        result: dict = {}
        for v in candidates:
            bag = frozenset(adj[v]) | {v}
            sub = outcomes(mask | 1 << names.index(v), _eliminate(adj, v))
            for bagset, order in sub.items():
                combined = _reduce_bags(set(bagset) | {bag}, free_names)
                result.setdefault(combined, (v,) + order)
        memo[mask] = result
        return result

    found = outcomes(0, adj0)

    tds = []
    seen = set()
    for bagset, order in sorted(found.items(), key=lambda e: sorted(map(sorted, e[0]))):
        td = _tree_from_order(universe, hg, order, free_names)
        if td.key() in seen:
            continue
        seen.add(td.key())
        if _is_free_connex(td, free, hg.vertices):
            tds.append(TreeDecomposition(td.bags, td.edges, free_connex=True))
    tds = _drop_dominated_tds(tds)
    tds.sort(key=lambda t: (len(t.bags), t.key()))
    return tds


def _tree_from_order(
    universe: Universe, hg: Hypergraph, order: tuple[str, ...], free_names
) -> TreeDecomposition:
    """Elimination clique tree: each bag links to the bag of the first
    eliminated among its other vertices; adjacent dominated bags merge."""
    adj = _primal_adjacency(hg)
    pos = {v: i for i, v in enumerate(order)}
    bags: list[frozenset] = []
    for v in order:
        bags.append(frozenset(adj[v]) | {v})
        adj = _eliminate(adj, v)
    parent: list[Optional[int]] = [None] * len(order)
    for i, b in enumerate(bags):
        rest = [pos[u] for u in b if pos[u] > i]
        if rest:
            parent[i] = min(rest)
        elif i + 1 < len(order):
            parent[i] = i + 1

    alive = list(range(len(bags)))
    while True:
        merged = False
        for i in alive:
            p = parent[i]
            if p is None:
                continue
            small, big = None, None
            if bags[i] <= bags[p]:
                small, big = i, p
            elif bags[p] <= bags[i]:
                small, big = p, i
            if small is None:
                continue
            if free_names is not None and bags[small] <= free_names and not bags[big] <= free_names:
                continue  # keep free-only bags unless absorbed by a free-only bag
            p_small = parent[small]
            for j in alive:
                if j not in (small, big) and parent[j] == small:
                    parent[j] = big
            if parent[big] == small:
                parent[big] = p_small if p_small != big else None
            alive.remove(small)
            merged = True
            break
        if not merged:
            break

    index = {node: k for k, node in enumerate(alive)}
    bag_sets = tuple(universe.varset(bags[node]) for node in alive)
    edges = tuple(
        (index[node], index[parent[node]])
        for node in alive
        if parent[node] is not None and parent[node] in index
    )
    return TreeDecomposition(bag_sets, edges, free_connex=False)


def _is_free_connex(td: TreeDecomposition, free: VarSet, vertices: VarSet) -> bool:
    """A connected set of bags containing all free variables and nothing else."""
    if not free or free == vertices:
        return True
    nodes = [i for i, b in enumerate(td.bags) if b <= free]
    if not nodes:
        return False
    adj = td.neighbors()
    unseen = set(nodes)
    while unseen:
        comp = [unseen.pop()]
        queue = list(comp)
        while queue:
            i = queue.pop()
            for j in adj[i]:
                if j in unseen:
                    unseen.discard(j)
                    comp.append(j)
                    queue.append(j)
        union = free.universe.empty()
        for i in comp:
            union = union | td.bags[i]
        if free <= union:
            return True
    return False


def _drop_dominated_tds(tds: list[TreeDecomposition]) -> list[TreeDecomposition]:
    """Drop a TD when another one has every (maximal) bag contained in one of
    its bags: the dominating TD's widths are never worse."""

    def maximal(td):
        bags = td.bags
        return [b for b in bags if not any(b < b2 for b2 in bags)]

    def fits_inside(small, big):
        return all(any(b2 <= b for b in big) for b2 in small)

    maxbags = [maximal(td) for td in tds]
    keep = []
    for i, td in enumerate(tds):
        dominated = False
        for j in range(len(tds)):
            if i == j:
                continue
            if fits_inside(maxbags[j], maxbags[i]):
                if not fits_inside(maxbags[i], maxbags[j]) or j < i:
                    dominated = True
                    break
        if not dominated:
            keep.append(td)
    return keep


# ---------------------------------------------------------------------------
# widths


class _BoundCache:
    def __init__(self, dc: DegreeConstraintSet, universe: Universe):
        self.dc = dc
        self.universe = universe
        self._cache: dict = {}

    def solve(self, targets: frozenset) -> BoundCertificate:
        hit = self._cache.get(targets)
        if hit is None:
            hit = solve_bound(sorted(targets, key=lambda z: z.sort_key()), self.dc, self.universe)
            self._cache[targets] = hit
        return hit


def rho_star(bag: VarSet, dc: DegreeConstraintSet, cache: Optional[_BoundCache] = None) -> BoundCertificate:
    """Cover number of a single bag under the degree constraints."""
    if cache is not None:
        return cache.solve(frozenset([bag]))
    return solve_bound([bag], dc, bag.universe)


def _td_width(td: TreeDecomposition, cache: _BoundCache) -> tuple[float, Optional[Fraction]]:
    bits, log_n = 0.0, Fraction(0)
    have_exact = True
    for bag in td.bags:
        cert = cache.solve(frozenset([bag]))
        if cert.exponent_bits > bits:
            bits = cert.exponent_bits
        if cert.exponent_log_n is None:
            have_exact = False
        elif cert.exponent_log_n > log_n:
            log_n = cert.exponent_log_n
    return bits, (log_n if have_exact else None)


def fhtw(
    hg: Hypergraph,
    free: VarSet,
    dc: DegreeConstraintSet,
    tds: Optional[Sequence[TreeDecomposition]] = None,
) -> WidthReport:
    """Min over free-connex TDs of the max bag cover number."""
    tds = list(tds) if tds is not None else enumerate_tds(hg, free)
    cache = _BoundCache(dc, hg.vertices.universe)
    report = WidthReport(per_td=[])
    for td in tds:
        bits, log_n = _td_width(td, cache)
        report.per_td.append((td, bits, log_n))
    if report.per_td:
        best = min(report.per_td, key=lambda e: e[1])
        report.fhtw_bits = best[1]
        exacts = [e[2] for e in report.per_td]
        if all(x is not None for x in exacts):
            report.fhtw_log_n = min(exacts)
    return report


def _combinations(tds: Sequence[TreeDecomposition], cap: int):
    total = 1
    for td in tds:
        total *= len(td.bags)
        if total > cap:
            raise CombinationCapError(
                f"{total}+ bag combinations exceed the cap of {cap}; "
                "pass a smaller TD subset (e.g. --tds greedy)"
            )
    return itertools.product(*[range(len(td.bags)) for td in tds])


def subw(
    hg: Hypergraph,
    free: VarSet,
    dc: DegreeConstraintSet,
    tds: Optional[Sequence[TreeDecomposition]] = None,
    max_combinations: int = DEFAULT_COMBINATION_CAP,
) -> WidthReport:
    """Max over bag combinations of the multi-target cover number."""
    tds = list(tds) if tds is not None else enumerate_tds(hg, free)
    cache = _BoundCache(dc, hg.vertices.universe)
    report = fhtw(hg, free, dc, tds)
    worst_bits, worst_log_n, worst = None, None, None
    have_exact = True
    for combo in _combinations(tds, max_combinations):
        targets = frozenset(td.bags[i] for td, i in zip(tds, combo))
        cert = cache.solve(targets)
        if worst_bits is None or cert.exponent_bits > worst_bits:
            worst_bits = cert.exponent_bits
            worst = tuple(td.bags[i] for td, i in zip(tds, combo))
            worst_log_n = cert.exponent_log_n
        if cert.exponent_log_n is None:
            have_exact = False
    report.subw_bits = worst_bits
    report.subw_log_n = worst_log_n if have_exact else None
    report.worst_combination = worst
    return report


# ---------------------------------------------------------------------------
# query answering


def greedy_td_pair(
    tds: Sequence[TreeDecomposition], dc: DegreeConstraintSet, universe: Universe
) -> list[TreeDecomposition]:
    cache = _BoundCache(dc, universe)
    ranked = sorted(tds, key=lambda td: (_td_width(td, cache)[0], td.key()))
    return list(ranked[:2])


def _join_component(universe: Universe, rels: list[Relation]) -> Relation:
    out = rels[0]
    for rel in rels[1:]:
        out = _hash_join(universe, out, rel)
    return out


def _hash_join(universe: Universe, left: Relation, right: Relation) -> Relation:
    shared = tuple((left.vars & right.vars).names)
    new = tuple(v for v in right.order if v not in shared)
    idx = right.index_on(shared)
    lpos = left.positions(shared)
    rpos = right.positions(new)
    rows = []
    for lr in left.rows:
        key = tuple(lr[i] for i in lpos)
        for rr in idx.get(key, ()):
            rows.append(lr + tuple(rr[i] for i in rpos))
    return Relation(universe, left.order + new, rows)


def yannakakis(
    td: TreeDecomposition,
    bag_rels: dict[int, Relation],
    free: VarSet,
    universe: Universe,
) -> Relation:
    """Full semijoin reduction (up then down), then join the free subtree."""
    rels = dict(bag_rels)
    adj = td.neighbors()
    n = len(td.bags)
    root = 0
    order = [root]
    parent = {root: None}
    for i in order:
        for j in adj[i]:
            if j not in parent:
                parent[j] = i
                order.append(j)
    for i in reversed(order[1:]):
        rels[parent[i]] = rels[parent[i]].semijoin(rels[i])
    for i in order[1:]:
        rels[i] = rels[i].semijoin(rels[parent[i]])

    if not free:
        nonempty = len(rels[root]) > 0
        return Relation(universe, (), [()] if nonempty else [])

    free_nodes = [i for i in range(n) if td.bags[i] <= free]
    unseen = set(free_nodes)
    while unseen:
        comp = [unseen.pop()]
        queue = list(comp)
        while queue:
            i = queue.pop()
            for j in adj[i]:
                if j in unseen:
                    unseen.discard(j)
                    comp.append(j)
                    queue.append(j)
        union = universe.empty()
        for i in comp:
            union = union | td.bags[i]
        if free <= union:
            comp_sorted = [i for i in order if i in set(comp)]
            return _join_component(universe, [rels[i] for i in comp_sorted])
    raise ValueError("decomposition is not free-connex for the requested variables")


def answer_cq(
    cq: CQ,
    db: Database,
    dc: DegreeConstraintSet,
    tds: Optional[Sequence[TreeDecomposition]] = None,
    max_combinations: int = DEFAULT_COMBINATION_CAP,
) -> Relation:
    """Exact CQ answer: bag-combination rules, then per-TD assembly."""
    universe = db.universe
    free = cq.free(universe)
    hg = Hypergraph.of_atoms(universe, cq.input_atoms)
    forced = tds is not None
    if tds is None:
        tds = enumerate_tds(hg, free)
    tds = list(tds)
    if not tds:
        raise ValueError("no free-connex tree decomposition found")
    try:
        combos = list(_combinations(tds, max_combinations))
    except CombinationCapError:
        if forced:
            raise
        tds = greedy_td_pair(tds, dc, universe)
        combos = list(_combinations(tds, max_combinations))

    cache = _BoundCache(dc, universe)
    bag_rows: dict[tuple[int, int], set] = {
        (i, b): set() for i, td in enumerate(tds) for b in range(len(td.bags))
    }
    for combo in combos:
        chosen = [(i, b, tds[i].bags[b]) for i, b in enumerate(combo)]
        by_mask = {}
        for _, _, bag in chosen:
            by_mask.setdefault(bag.mask, bag)
        targets = sorted(by_mask.values(), key=lambda z: z.sort_key())
        head_atoms = tuple(Atom(f"Q{k}", bag.names) for k, bag in enumerate(targets))
        ddr = DDR(cq.input_atoms, head_atoms)
        cert = cache.solve(frozenset(targets))
        result = answer_ddr(ddr, db, dc, certificate=cert)
        for i, b, bag in chosen:
            rel = result.model.relations[bag]
            bag_rows[(i, b)].update(rel.rows)

    answers: set = set()
    for i, td in enumerate(tds):
        rels = {}
        for b in range(len(td.bags)):
            bag = td.bags[b]
            rel = Relation(universe, bag.names, bag_rows[(i, b)])
            for _, atom_rel in db.atoms:
                if atom_rel.vars <= bag:
                    rel = rel.semijoin(atom_rel)
            rels[b] = rel
        part = yannakakis(td, rels, free, universe)
        answers.update((part.project(free) if free else part).rows)
    return Relation(universe, free.names, answers)
