"""Text formats: rule/query grammar, degree-constraint files, TSV relations.

Query grammar (whitespace-insensitive, one rule per file):

    head ( "|" head )* ":-" atom ( "," atom )* "."
    head/atom = NAME "(" VAR ("," VAR)* ")" ; a head may be NAME "()"

A single head is a conjunctive query whose free variables are the head
variables; several heads form a disjunctive rule.

Constraint files hold one bound per line:

    deg(REL; Y1,...,Yk | X1,...,Xm) <= INT     conditional degree
    deg(REL; Y1,...,Yk) <= INT                 unconditional degree
    card(REL) <= INT                           cardinality shorthand

Relation data is TSV: first line variable names, one tuple per line,
UTF-8, no quoting (tabs and newlines must not occur inside values).
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Optional, Union

from .cq import CQ
from .relational import (
    DDR,
    Atom,
    Database,
    DegreeConstraintSet,
    Domain,
    MonTerm,
    Relation,
)
from .varsets import Universe


class QuerySyntaxError(ValueError):
    def __init__(self, message: str, pos: int):
        super().__init__(f"{message} (at offset {pos})")
        self.pos = pos


_TOKEN = re.compile(r"\s*(:-|<=|[A-Za-z_][A-Za-z0-9_]*|\d+|[(),.|;])")


def _tokenize(text: str):
    out, i = [], 0
    while i < len(text):
        m = _TOKEN.match(text, i)
        if not m:
            if text[i:].strip():
                raise QuerySyntaxError(f"unexpected character {text[i:].strip()[0]!r}", i)
            break
        out.append((m.group(1), m.start(1)))
        i = m.end()
    out.append(("", len(text)))
    return out


class _Cursor:
    def __init__(self, tokens):
        self.tokens = tokens
        self.i = 0

    def peek(self):
        return self.tokens[self.i][0]

    def pos(self):
        return self.tokens[self.i][1]

    def take(self, expected: Optional[str] = None) -> str:
        tok, pos = self.tokens[self.i]
        if expected is not None and tok != expected:
            raise QuerySyntaxError(f"expected {expected!r}, found {tok!r}", pos)
        self.i += 1
        return tok

    def name(self) -> str:
        tok, pos = self.tokens[self.i]
        if not re.fullmatch(r"[A-Za-z_][A-Za-z0-9_]*", tok or ""):
            raise QuerySyntaxError(f"expected a name, found {tok!r}", pos)
        self.i += 1
        return tok


@dataclass(frozen=True)
class ParsedQuery:
    universe: Universe
    query: Union[CQ, DDR]

    @property
    def is_cq(self) -> bool:
        return isinstance(self.query, CQ)

    def ddr(self) -> DDR:
        return self.query.as_ddr() if isinstance(self.query, CQ) else self.query


def _parse_atom(cur: _Cursor, allow_empty: bool) -> Atom:
    sym = cur.name()
    cur.take("(")
    args: list[str] = []
    if cur.peek() != ")":
        args.append(cur.name())
        while cur.peek() == ",":
            cur.take(",")
            args.append(cur.name())
    elif not allow_empty:
        raise QuerySyntaxError("body atom needs at least one variable", cur.pos())
    pos = cur.pos()
    cur.take(")")
    if len(set(args)) != len(args):
        raise QuerySyntaxError(f"repeated variable in atom {sym}", pos)
    return Atom(sym, tuple(args))


def parse_query(text: str) -> ParsedQuery:
    cur = _Cursor(_tokenize(text))
    heads = [_parse_atom(cur, allow_empty=True)]
    while cur.peek() == "|":
        cur.take("|")
        heads.append(_parse_atom(cur, allow_empty=False))
    cur.take(":-")
    body = [_parse_atom(cur, allow_empty=False)]
    while cur.peek() == ",":
        cur.take(",")
        body.append(_parse_atom(cur, allow_empty=False))
    pos = cur.pos()
    cur.take(".")
    if cur.peek():
        raise QuerySyntaxError(f"trailing input {cur.peek()!r}", cur.pos())

    seen: list[str] = []
    for a in heads + body:
        for v in a.order:
            if v not in seen:
                seen.append(v)
    universe = Universe(seen)
    head_sets = {frozenset(a.order) for a in heads}
    if len(head_sets) != len(heads):
        raise QuerySyntaxError("duplicate head variable sets", pos)
    body_vars = set()
    for a in body:
        body_vars.update(a.order)
    for a in heads:
        missing = [v for v in a.order if v not in body_vars]
        if missing:
            raise QuerySyntaxError(
                f"head variable {missing[0]!r} does not occur in the body", pos
            )
    if len(heads) == 1:
        query: Union[CQ, DDR] = CQ(heads[0], tuple(body))
    else:
        query = DDR(tuple(body), tuple(heads))
        query.validate(universe)
    return ParsedQuery(universe, query)


def render_query(pq: ParsedQuery) -> str:
    if isinstance(pq.query, CQ):
        heads = [pq.query.head]
        body = pq.query.input_atoms
    else:
        heads = list(pq.query.output_atoms)
        body = pq.query.input_atoms
    return (
        " | ".join(str(a) for a in heads)
        + " :- "
        + ", ".join(str(a) for a in body)
        + "."
    )


# ---------------------------------------------------------------------------
# constraints


def parse_constraints(text: str, universe: Universe, atoms: Iterable[Atom]) -> DegreeConstraintSet:
    atom_vars = {}
    for a in atoms:
        atom_vars.setdefault(a.symbol, a.order)
    entries = []
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        cur = _Cursor(_tokenize(line))
        kind = cur.name()
        cur.take("(")
        sym = cur.name()
        if sym not in atom_vars:
            raise QuerySyntaxError(f"line {lineno}: unknown relation {sym!r}", cur.pos())
        if kind == "card":
            cur.take(")")
            ys, xs = list(atom_vars[sym]), []
        elif kind == "deg":
            cur.take(";")
            ys = [cur.name()]
            while cur.peek() == ",":
                cur.take(",")
                ys.append(cur.name())
            xs = []
            if cur.peek() == "|":
                cur.take("|")
                xs = [cur.name()]
                while cur.peek() == ",":
                    cur.take(",")
                    xs.append(cur.name())
            cur.take(")")
        else:
            raise QuerySyntaxError(f"line {lineno}: expected deg(...) or card(...)", 0)
        cur.take("<=")
        tok, pos = cur.tokens[cur.i]
        if not tok.isdigit():
            raise QuerySyntaxError(f"line {lineno}: expected an integer bound", pos)
        cur.i += 1
        n = int(tok)
        if n < 1:
            raise QuerySyntaxError(f"line {lineno}: bound must be a positive integer", pos)
        for v in ys + xs:
            universe.index(v)  # raises KeyError for unknown variables
        entries.append((MonTerm(universe.varset(ys), universe.varset(xs)), n))
    if not entries:
        raise QuerySyntaxError("no constraints found", 0)
    return DegreeConstraintSet.of(entries)


def render_constraints(dc: DegreeConstraintSet, atoms: Iterable[Atom], universe: Universe) -> str:
    atom_list = list(atoms)
    lines = []
    for term, n in dc:
        sym = None
        for a in atom_list:
            if term.all_vars <= a.vars(universe):
                sym = a.symbol
                break
        if sym is None:
            sym = atom_list[0].symbol
        ys = ",".join(term.y.names)
        if term.x:
            lines.append(f"deg({sym}; {ys} | {','.join(term.x.names)}) <= {n}")
        else:
            lines.append(f"deg({sym}; {ys}) <= {n}")
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# TSV data


def load_relation_file(path: Path) -> tuple[list[str], list[tuple[str, ...]]]:
    lines = path.read_text(encoding="utf-8").splitlines()
    if not lines:
        raise ValueError(f"{path}: missing header line")
    header = lines[0].split("\t")
    rows = []
    for i, line in enumerate(lines[1:], 2):
        if not line:
            continue
        parts = tuple(line.split("\t"))
        if len(parts) != len(header):
            raise ValueError(f"{path}:{i}: expected {len(header)} fields, got {len(parts)}")
        rows.append(parts)
    return header, rows


def build_database(
    pq: ParsedQuery, data_dir: Path, domain: Optional[Domain] = None
) -> tuple[Database, Domain]:
    """Bind each body atom to its TSV file (by symbol), interning values."""
    domain = domain or Domain()
    universe = pq.universe
    ddr = pq.ddr()
    tables: dict[str, list[tuple]] = {}
    arity: dict[str, int] = {}
    for atom in ddr.input_atoms:
        if atom.symbol in tables:
            continue
        path = data_dir / f"{atom.symbol}.tsv"
        if not path.exists():
            raise FileNotFoundError(f"no data file for relation {atom.symbol}: {path}")
        header, rows = load_relation_file(path)
        if len(header) != len(atom.order):
            raise ValueError(
                f"{path}: arity {len(header)} does not match atom {atom}"
            )
        tables[atom.symbol] = [tuple(domain.encode(v) for v in row) for row in rows]
        arity[atom.symbol] = len(header)
    bound = []
    for atom in ddr.input_atoms:
        bound.append((atom.symbol, Relation(universe, atom.order, tables[atom.symbol])))
    return Database(universe, bound), domain


def relation_to_tsv(rel: Relation, domain: Optional[Domain], order: Optional[Iterable[str]] = None) -> str:
    cols = tuple(order) if order is not None else rel.order
    pos = rel.positions(cols)
    lines = ["\t".join(cols)]
    decode = domain.decode if domain is not None else str
    for row in rel.rows:
        lines.append("\t".join(str(decode(row[i])) for i in pos))
    return "\n".join(lines) + "\n"


def measure_dump(measure, domain: Optional[Domain] = None) -> str:
    """Debug TSV: tuple values, numerator, denominator (k-th powers as stored)."""
    decode = domain.decode if domain is not None else str
    merged = sorted(
        measure.eff_order + measure.y_order, key=measure.y_vars.universe.index
    )
    lines = ["\t".join(list(merged) + ["num", "den"])]
    for x_row, y_row, w in measure.iter_entries():
        by_name = dict(zip(measure.eff_order, x_row)) | dict(zip(measure.y_order, y_row))
        vals = [str(decode(by_name[v])) for v in merged]
        lines.append("\t".join(vals + [str(w.numerator), str(w.denominator)]))
    return "\n".join(lines) + "\n"
