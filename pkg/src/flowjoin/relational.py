"""Relations over interned domain values, degree statistics and rule schemas.

Everything here is immutable after construction and safe to share between
threads.  The full natural join is a deliberately naive backtracking join:
it is the verification oracle the rest of the package is measured against.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from itertools import product
from typing import Iterable, Mapping, Optional, Sequence

from .varsets import Universe, VarSet


class ConstraintViolationError(ValueError):
    """An instance does not satisfy a required degree constraint."""


class Domain:
    """Interns source constants (strings or ints) to dense ids, first-seen order."""

    __slots__ = ("_by_value", "_values")

    def __init__(self):
        self._by_value: dict = {}
        self._values: list = []

    def encode(self, value) -> int:
        vid = self._by_value.get(value)
        if vid is None:
            vid = len(self._values)
            self._by_value[value] = vid
            self._values.append(value)
        return vid

    def decode(self, vid: int):
        return self._values[vid]

    def __len__(self) -> int:
        return len(self._values)


class Relation:
    """A finite relation: a set of rows aligned to an explicit column order.

    `order` gives the column binding (no duplicates); `vars` is the
    corresponding VarSet.  Rows are stored sorted by the canonical variable
    order of the universe, with a set alongside for O(1) membership.
    """

    __slots__ = ("universe", "order", "vars", "rows", "_row_set", "_indexes")

    def __init__(self, universe: Universe, order: Sequence[str], rows: Iterable[tuple]):
        self.universe = universe
        self.order = tuple(order)
        if len(set(self.order)) != len(self.order):
            raise ValueError(f"duplicate column in {self.order}")
        self.vars = universe.varset(self.order)
        # canonical storage: columns permuted to universe order, rows sorted
        perm = sorted(range(len(self.order)), key=lambda i: universe.index(self.order[i]))
        canon = tuple(sorted({tuple(r[i] for i in perm) for r in rows}))
        self.order = tuple(self.order[i] for i in perm)
        self.rows = canon
        self._row_set = frozenset(canon)
        self._indexes: dict = {}

    def __len__(self) -> int:
        return len(self.rows)

    def __contains__(self, row: tuple) -> bool:
        return row in self._row_set

    def __eq__(self, other) -> bool:
        return (
            isinstance(other, Relation)
            and self.vars == other.vars
            and self._row_set == other._row_set
        )

    def __hash__(self) -> int:
        return hash((self.vars, self._row_set))

    def __repr__(self) -> str:
        return f"Relation({','.join(self.order)}; {len(self.rows)} rows)"

    def positions(self, names: Sequence[str]) -> tuple[int, ...]:
        return tuple(self.order.index(v) for v in names)

    def project(self, w: VarSet) -> "Relation":
        if not w <= self.vars:
            raise ValueError(f"projection target {w} not within {self.vars}")
        pos = self.positions(w.names)
        return Relation(self.universe, w.names, ((tuple(r[i] for i in pos)) for r in self.rows))

    def index_on(self, names: tuple[str, ...]) -> dict:
        """Group rows by their values on `names` (cached)."""
        cached = self._indexes.get(names)
        if cached is None:
            pos = self.positions(names)
            cached = {}
            for r in self.rows:
                cached.setdefault(tuple(r[i] for i in pos), []).append(r)
            self._indexes[names] = cached
        return cached

    def rename(self, new_order: Sequence[str], universe: Optional[Universe] = None) -> "Relation":
        """Positional rebinding of columns to new variable names."""
        if len(new_order) != len(self.order):
            raise ValueError("arity mismatch in rename")
        return Relation(universe or self.universe, new_order, self.rows)

    def semijoin(self, other: "Relation") -> "Relation":
        """Rows of self consistent with at least one row of other on shared vars."""
        shared = (self.vars & other.vars).names
        if not shared:
            return self if len(other) else Relation(self.universe, self.order, ())
        keys = set(other.index_on(shared))
        pos = self.positions(shared)
        return Relation(
            self.universe,
            self.order,
            (r for r in self.rows if tuple(r[i] for i in pos) in keys),
        )


@dataclass(frozen=True)
class Atom:
    """A relation symbol applied to an ordered list of variables."""

    symbol: str
    order: tuple[str, ...]

    def vars(self, universe: Universe) -> VarSet:
        return universe.varset(self.order)

    def __str__(self) -> str:
        return f"{self.symbol}({','.join(self.order)})"


class Database:
    """Bound atoms: pairs (symbol, Relation).  Symbols may repeat (self-joins)."""

    __slots__ = ("universe", "atoms")

    def __init__(self, universe: Universe, atoms: Iterable[tuple[str, Relation]]):
        self.universe = universe
        self.atoms = tuple(atoms)
        for _, rel in self.atoms:
            if rel.universe != universe:
                raise ValueError("relation universe mismatch")

    def relations(self) -> tuple[Relation, ...]:
        return tuple(rel for _, rel in self.atoms)

    def __len__(self) -> int:
        return len(self.atoms)

    def active_domains(self) -> dict[str, tuple]:
        """Per-variable active domain: values seen in any column bound to it."""
        doms: dict[str, set] = {}
        for _, rel in self.atoms:
            for j, v in enumerate(rel.order):
                col = doms.setdefault(v, set())
                for r in rel.rows:
                    col.add(r[j])
        return {v: tuple(sorted(vals)) for v, vals in doms.items()}


@dataclass(frozen=True)
class MonTerm:
    """Monotonicity term (Y|X): Y measured given X, disjoint varsets."""

    y: VarSet
    x: VarSet

    def __post_init__(self):
        if not self.y.isdisjoint(self.x):
            raise ValueError(f"overlapping monotonicity term ({self.y}|{self.x})")

    @property
    def unconditional(self) -> bool:
        return not self.x

    @property
    def all_vars(self) -> VarSet:
        return self.y | self.x

    def sort_key(self):
        return (self.x.sort_key(), self.y.sort_key())

    def __str__(self) -> str:
        return f"({self.y}|{self.x})" if self.x else f"({self.y})"


def uncond(z: VarSet) -> MonTerm:
    return MonTerm(z, z.universe.empty())


@dataclass(frozen=True)
class SubTerm:
    """Submodularity term (Y;Z|X), stored with Y <= Z for symmetric equality."""

    y: VarSet
    z: VarSet
    x: VarSet

    def __post_init__(self):
        if not (self.y.isdisjoint(self.z) and self.y.isdisjoint(self.x) and self.z.isdisjoint(self.x)):
            raise ValueError(f"overlapping submodularity term ({self.y};{self.z}|{self.x})")
        if not (self.y and self.z):
            raise ValueError("submodularity term needs nonempty Y and Z")
        if self.z.sort_key() < self.y.sort_key():
            y, z = self.y, self.z
            object.__setattr__(self, "y", z)
            object.__setattr__(self, "z", y)

    def sort_key(self):
        return (self.x.sort_key(), self.y.sort_key(), self.z.sort_key())

    def __str__(self) -> str:
        return f"({self.y};{self.z}|{self.x})"


@dataclass(frozen=True)
class DegreeConstraintSet:
    """Map from monotonicity terms to positive integer degree bounds."""

    entries: tuple[tuple[MonTerm, int], ...]

    def __post_init__(self):
        seen = {}
        for term, n in self.entries:
            if n < 1:
                raise ValueError(f"degree bound for {term} must be >= 1, got {n}")
            # duplicate terms collapse to the tightest bound
            seen[term] = min(seen.get(term, n), n)
        object.__setattr__(
            self, "entries", tuple(sorted(seen.items(), key=lambda e: e[0].sort_key()))
        )

    @classmethod
    def of(cls, mapping: Mapping[MonTerm, int] | Iterable[tuple[MonTerm, int]]) -> "DegreeConstraintSet":
        items = mapping.items() if isinstance(mapping, Mapping) else mapping
        return cls(tuple(items))

    def __iter__(self):
        return iter(self.entries)

    def __len__(self):
        return len(self.entries)

    def bound(self, term: MonTerm) -> int:
        for t, n in self.entries:
            if t == term:
                return n
        raise KeyError(str(term))


@dataclass(frozen=True)
class DDR:
    """A rule with a conjunctive body and a disjunction of head atoms."""

    input_atoms: tuple[Atom, ...]
    output_atoms: tuple[Atom, ...]

    def validate(self, universe: Universe) -> None:
        body_vars = universe.empty()
        for a in self.input_atoms:
            body_vars = body_vars | a.vars(universe)
        head_sets = [a.vars(universe) for a in self.output_atoms]
        if len({h.mask for h in head_sets}) != len(head_sets):
            raise ValueError("output atoms must have pairwise distinct variable sets")
        for a, h in zip(self.output_atoms, head_sets):
            if not h <= body_vars:
                raise ValueError(f"head {a} uses variables absent from the body")

    def head_varsets(self, universe: Universe) -> tuple[VarSet, ...]:
        return tuple(a.vars(universe) for a in self.output_atoms)


# ---------------------------------------------------------------------------
# operations


def full_natural_join(db: Database) -> Relation:
    """All tuples over the union of atom variables consistent with every atom.

    Naive backtracking join: seed with the first atom's rows, extend atom by
    atom through hash lookups on the shared columns.  Oracle code — kept
    simple on purpose.
    """
    universe = db.universe
    if not db.atoms:
        raise ValueError("empty database")
    all_vars = universe.empty()
    for _, rel in db.atoms:
        all_vars = all_vars | rel.vars

    bound: tuple[str, ...] = ()
    partials: list[tuple] = [()]
    for _, rel in db.atoms:
        shared = tuple(v for v in rel.order if v in bound)
        new = tuple(v for v in rel.order if v not in bound)
        shared_pos_b = tuple(bound.index(v) for v in shared)
        idx = rel.index_on(shared)
        new_pos_r = rel.positions(new)
        extended = []
        for p in partials:
            key = tuple(p[i] for i in shared_pos_b)
            for r in idx.get(key, ()):
                extended.append(p + tuple(r[i] for i in new_pos_r))
        bound = bound + new
        partials = extended
        if not partials:
            return Relation(universe, all_vars.names, ())
    return Relation(universe, bound, partials)


def restrict(rel: Relation, w: VarSet, domains: Optional[Mapping[str, Sequence]] = None) -> Relation:
    """Restriction of rel onto w.

    For w within vars(rel) this is the plain projection.  Otherwise missing
    variables range over their active domains (which the caller must supply),
    and the result is the product of those domains semijoined with rel.
    """
    if w <= rel.vars:
        return rel.project(w)
    missing = (w - rel.vars).names
    if domains is None or any(v not in domains for v in missing):
        raise ValueError(f"active domains required for variables {missing}")
    shared = (w & rel.vars).names
    base = rel.project(rel.universe.varset(shared)) if shared else None
    cols = list(shared) + list(missing)
    rows = []
    ext = [tuple(domains[v]) for v in missing]
    if base is None:
        if len(rel):
            rows = list(product(*ext))
    else:
        for r in base.rows:
            for tail in product(*ext):
                rows.append(r + tail)
    return Relation(rel.universe, cols, rows)


def degree_at(
    rel: Relation,
    delta: MonTerm,
    x_row: tuple,
    domains: Optional[Mapping[str, Sequence]] = None,
) -> int:
    """Number of distinct Y-extensions of x (over delta.X, canonical order)."""
    r = restrict(rel, delta.all_vars, domains)
    xs = tuple(v for v in delta.x.names)
    ys = tuple(v for v in delta.y.names)
    if len(x_row) != len(xs):
        raise ValueError("x arity mismatch")
    ypos = r.positions(ys)
    if not xs:
        return len({tuple(row[i] for i in ypos) for row in r.rows})
    group = r.index_on(xs).get(x_row, ())
    return len({tuple(row[i] for i in ypos) for row in group})


def max_degree(
    rel: Relation,
    delta: MonTerm,
    domains: Optional[Mapping[str, Sequence]] = None,
) -> int:
    """Max over x of degree_at; 0 on an empty relation.

    Computed without materializing the restriction: the degree over the
    extended relation factors into the degree over the shared columns times
    the product of missing-Y active-domain sizes.
    """
    if not len(rel):
        return 0
    shared_y = delta.y & rel.vars
    shared_x = delta.x & rel.vars
    missing_y = (delta.y - rel.vars).names
    factor = 1
    for v in missing_y:
        if domains is None or v not in domains:
            raise ValueError(f"active domain required for variable {v!r}")
        factor *= len(domains[v])
    if not shared_y:
        return factor
    xs, ys = shared_x.names, shared_y.names
    xpos, ypos = rel.positions(xs), rel.positions(ys)
    groups: dict[tuple, set] = {}
    for row in rel.rows:
        key = tuple(row[i] for i in xpos)
        groups.setdefault(key, set()).add(tuple(row[i] for i in ypos))
    return max(len(g) for g in groups.values()) * factor


def schema_degree(db: Database, delta: MonTerm) -> int:
    """Min over the database's relations of max_degree (restriction semantics)."""
    domains = db.active_domains()
    return min(max_degree(rel, delta, domains) for _, rel in db.atoms)


def satisfies(db: Database, dc: DegreeConstraintSet) -> bool:
    return all(schema_degree(db, term) <= n for term, n in dc)


def default_constraint_terms(db: Database) -> list[MonTerm]:
    """All (Y|X) with X∪Y inside some atom's variables and Y nonempty."""
    universe = db.universe
    seen = set()
    out = []
    for _, rel in db.atoms:
        names = rel.vars.names
        n = len(names)
        for ymask in range(1, 1 << n):
            rest = [i for i in range(n) if not ymask >> i & 1]
            y = universe.varset(names[i] for i in range(n) if ymask >> i & 1)
            for k in range(1 << len(rest)):
                x = universe.varset(names[rest[j]] for j in range(len(rest)) if k >> j & 1)
                term = MonTerm(y, x)
                if term not in seen:
                    seen.add(term)
                    out.append(term)
    out.sort(key=lambda t: t.sort_key())
    return out


def infer_constraints(db: Database, terms: Optional[Sequence[MonTerm]] = None) -> DegreeConstraintSet:
    """Tightest bounds the instance satisfies, for the requested terms."""
    if terms is None:
        terms = default_constraint_terms(db)
    all_vars = db.universe.empty()
    for _, rel in db.atoms:
        all_vars = all_vars | rel.vars
    for term in terms:
        if not term.all_vars <= all_vars:
            raise ValueError(f"term {term} mentions variables not in any atom")
    return DegreeConstraintSet.of(
        {term: max(1, schema_degree(db, term)) for term in terms}
    )


def project_row(vars_from: tuple[str, ...], row: tuple, vars_to: Sequence[str]) -> tuple:
    pos = {v: i for i, v in enumerate(vars_from)}
    return tuple(row[pos[v]] for v in vars_to)


def verify_model(db_in: Database, ddr: DDR, out: Mapping[VarSet, Relation]) -> bool:
    """True iff every full-join tuple is covered by at least one head atom."""
    universe = db_in.universe
    joined = full_natural_join(db_in)
    heads = []
    for a in ddr.output_atoms:
        vs = a.vars(universe)
        rel = out.get(vs)
        heads.append((tuple(vs.names), rel))
    for row in joined.rows:
        covered = False
        for names, rel in heads:
            if rel is None or not len(rel):
                continue
            if project_row(joined.order, row, rel.order) in rel:
                covered = True
                break
        if not covered:
            return False
    return True
