"""Command-line front-end.

Exit codes: 0 success, 1 domain error (unsatisfied constraints, unbounded
bound, invalid model), 2 usage or syntax error.  All reports are
deterministic: JSON keys are sorted and rationals print as "p/q".
"""

from __future__ import annotations

import argparse
import json
import random
import sys
from collections import Counter
from fractions import Fraction
from pathlib import Path

from . import gen as genmod
from .bounds import BoundCertificate, RationalizationError, UnboundedBoundError, make_budget
from .bounds import solve_bound
from .cq import (
    CombinationCapError,
    Hypergraph,
    TooManyVariablesError,
    answer_cq,
    enumerate_tds,
    fhtw,
    greedy_td_pair,
    subw,
)
from .executor import InvariantError, answer_ddr
from .formats import (
    ParsedQuery,
    QuerySyntaxError,
    build_database,
    load_relation_file,
    parse_constraints,
    parse_query,
    relation_to_tsv,
    render_constraints,
)
from .relational import (
    ConstraintViolationError,
    Database,
    Domain,
    Relation,
    full_natural_join,
    infer_constraints,
    verify_model,
)
from .shannonflow import build_proof_sequence


class _UsageError(Exception):
    pass


def _read_query(path: str) -> ParsedQuery:
    return parse_query(Path(path).read_text(encoding="utf-8"))


def _load_inputs(args) -> tuple[ParsedQuery, Database, Domain]:
    pq = _read_query(args.query)
    if not args.data:
        raise _UsageError("this command needs a data directory (-d)")
    db, domain = build_database(pq, Path(args.data))
    return pq, db, domain


def _constraints(args, pq: ParsedQuery, db):
    if getattr(args, "auto", False):
        if db is None:
            raise _UsageError("--auto needs a data directory (-d)")
        return infer_constraints(db)
    if not getattr(args, "constraints", None):
        raise _UsageError("pass --constraints FILE or --auto")
    text = Path(args.constraints).read_text(encoding="utf-8")
    return parse_constraints(text, pq.universe, pq.ddr().input_atoms)


def _frac(f: Fraction) -> str:
    return f"{f.numerator}/{f.denominator}" if f.denominator != 1 else str(f.numerator)


def _emit_json(payload) -> None:
    print(json.dumps(payload, sort_keys=True, indent=2))


def _certificate_payload(cert: BoundCertificate) -> dict:
    budget = make_budget(cert)
    payload = {
        "exponent_bits": round(cert.exponent_bits, 12),
        "lambda": {str(z): _frac(c) for z, c in cert.lam},
        "w": {str(t): _frac(c) for t, c in cert.w},
        "d": cert.d,
        "B_d_digits": len(str(budget.bd)),
        "witness_sizes": {"monotonicities": len(cert.witness.ms),
                          "submodularities": len(cert.witness.ss)},
    }
    if cert.exponent_log_n is not None:
        payload["exponent_logN"] = _frac(cert.exponent_log_n)
    return payload


def _cmd_bound(args) -> int:
    pq = _read_query(args.query)
    db = None
    if args.data:
        db, _ = build_database(pq, Path(args.data))
    dc = _constraints(args, pq, db)
    targets = [a.vars(pq.universe) for a in pq.ddr().output_atoms]
    cert = solve_bound(targets, dc, pq.universe)
    _emit_json(_certificate_payload(cert))
    return 0


def _cmd_prove(args) -> int:
    pq = _read_query(args.query)
    db = None
    if args.data:
        db, _ = build_database(pq, Path(args.data))
    dc = _constraints(args, pq, db)
    targets = [a.vars(pq.universe) for a in pq.ddr().output_atoms]
    cert = solve_bound(targets, dc, pq.universe)
    seq = build_proof_sequence(
        cert.integral.z_counter(),
        cert.integral.d_counter(),
        cert.witness.m_counter(),
        cert.witness.s_counter(),
    )
    print(seq.render())
    return 0


def _write_heads(model, ddr, universe, domain, out_dir: str) -> None:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    for atom in ddr.output_atoms:
        rel = model.relations[atom.vars(universe)]
        (out / f"{atom.symbol}.tsv").write_text(
            relation_to_tsv(rel, domain, atom.order), encoding="utf-8"
        )


def _cmd_run_ddr(args) -> int:
    pq, db, domain = _load_inputs(args)
    dc = _constraints(args, pq, db)
    ddr = pq.ddr()
    result = answer_ddr(
        ddr,
        db,
        dc,
        check_invariants=args.check_invariants,
        oracle_check=args.oracle_check,
    )
    if args.out_dir:
        _write_heads(result.model, ddr, pq.universe, domain, args.out_dir)
    stats = result.model.stats
    payload = {
        "heads": {
            str(a): len(result.model.relations[a.vars(pq.universe)])
            for a in ddr.output_atoms
        },
        "total_output": sum(
            len(r) for r in result.model.relations.values()
        ),
        "leaf_count": stats.leaf_count,
        "node_count": stats.node_count,
        "max_depth": stats.max_depth,
        "per_leaf": stats.per_leaf,
        "certificate": _certificate_payload(result.certificate),
    }
    if args.oracle_check:
        payload["oracle_check"] = "passed"
    if args.check_invariants:
        payload["invariants"] = "passed"
    if args.json_stats:
        _emit_json(payload)
    else:
        for a in ddr.output_atoms:
            print(f"{a}: {payload['heads'][str(a)]} tuples")
        print(f"leaves={stats.leaf_count} nodes={stats.node_count} depth={stats.max_depth}")
    return 0


def _select_tds(args, hg, free, dc, universe):
    spec = args.tds
    if spec is None:
        return None  # answer_cq applies its default (all, greedy fallback at the cap)
    tds = enumerate_tds(hg, free)
    if spec == "all":
        return tds
    if spec == "greedy":
        return greedy_td_pair(tds, dc, universe)
    picks = []
    for line in Path(spec).read_text(encoding="utf-8").split():
        idx = int(line)
        if not 0 <= idx < len(tds):
            raise _UsageError(f"TD index {idx} out of range (0..{len(tds) - 1})")
        picks.append(tds[idx])
    if not picks:
        raise _UsageError("TD subset file selects nothing")
    return picks


def _cmd_run_cq(args) -> int:
    pq, db, domain = _load_inputs(args)
    if not pq.is_cq:
        raise _UsageError("run-cq needs a single-head query")
    dc = _constraints(args, pq, db)
    cq = pq.query
    free = cq.free(pq.universe)
    hg = Hypergraph.of_atoms(pq.universe, cq.input_atoms)
    tds = _select_tds(args, hg, free, dc, pq.universe)
    answer = answer_cq(cq, db, dc, tds=tds)
    if cq.boolean:
        print("true" if len(answer) else "false")
        return 0
    text = relation_to_tsv(answer, domain, cq.head.order)
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8")
    else:
        print(text, end="")
    return 0


def _cmd_width(args) -> int:
    pq = _read_query(args.query)
    db = None
    if args.data:
        db, _ = build_database(pq, Path(args.data))
    dc = _constraints(args, pq, db)
    if not pq.is_cq:
        raise _UsageError("width needs a single-head query")
    cq = pq.query
    free = cq.free(pq.universe)
    hg = Hypergraph.of_atoms(pq.universe, cq.input_atoms)
    report = (
        subw(hg, free, dc)
        if args.subw
        else fhtw(hg, free, dc)
    )
    for i, (td, bits, log_n) in enumerate(report.per_td):
        width = _frac(log_n) if log_n is not None else f"{bits:.6f} bits"
        print(f"td {i}: {td}  max-bag-width {width}")
    if args.subw:
        width = (
            _frac(report.subw_log_n)
            if report.subw_log_n is not None
            else f"{report.subw_bits:.6f} bits"
        )
        combo = ", ".join(str(b) for b in report.worst_combination)
        print(f"subw {width}  worst combination [{combo}]")
    else:
        width = (
            _frac(report.fhtw_log_n)
            if report.fhtw_log_n is not None
            else f"{report.fhtw_bits:.6f} bits"
        )
        print(f"fhtw {width}")
    return 0


def _cmd_oracle(args) -> int:
    pq, db, domain = _load_inputs(args)
    joined = full_natural_join(db)
    if pq.is_cq:
        cq = pq.query
        free = cq.free(pq.universe)
        if cq.boolean:
            print("true" if len(joined) else "false")
            return 0
        answer = joined.project(free)
        text = relation_to_tsv(answer, domain, cq.head.order)
        if args.out:
            Path(args.out).write_text(text, encoding="utf-8")
        else:
            print(text, end="")
        return 0
    ddr = pq.ddr()
    out_dir = Path(args.out_dir or ".")
    out_dir.mkdir(parents=True, exist_ok=True)
    for atom in ddr.output_atoms:
        rel = joined.project(atom.vars(pq.universe))
        (out_dir / f"{atom.symbol}.tsv").write_text(
            relation_to_tsv(rel, domain, atom.order), encoding="utf-8"
        )
        print(f"{atom}: {len(rel)} tuples")
    return 0


def _cmd_verify_model(args) -> int:
    pq, db, domain = _load_inputs(args)
    ddr = pq.ddr()
    out = {}
    for atom in ddr.output_atoms:
        path = Path(args.model) / f"{atom.symbol}.tsv"
        if not path.exists():
            raise _UsageError(f"missing model file {path}")
        header, rows = load_relation_file(path)
        if tuple(header) != atom.order:
            raise _UsageError(f"{path}: header {header} does not match {atom}")
        encoded = [tuple(domain.encode(v) for v in row) for row in rows]
        out[atom.vars(pq.universe)] = Relation(pq.universe, atom.order, encoded)
    ok = verify_model(db, ddr, out)
    print("model" if ok else "not a model")
    return 0 if ok else 1


def _cmd_gen(args) -> int:
    rng = random.Random(args.seed)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    if args.kind == "hexagon":
        universe, ddr, db, dc = genmod.hexagon_fixture(args.size, rng)
        query = "Q(A,B,C,D,E,F) :- R(A,B,C), S(C,D,E), T(E,F,A), K(B,D,F)."
    elif args.kind == "q1":
        universe, ddr, db, dc = genmod.q1_fixture(args.size, rng)
        query = "U(A,B,C) | V(B,C,D) :- R(A,B), S(B,C), T(C,D)."
    elif args.kind == "cycle4":
        universe, db, dc = genmod.cycle4_fixture(args.size, rng)
        query = "Q(A,B,C,D) :- R(A,B), S(B,C), T(C,D), K(D,A)."
        ddr = parse_query(query).ddr()
    else:
        universe, ddr, db = genmod.random_ddr_fixture(rng)
        heads = " | ".join(str(a) for a in ddr.output_atoms)
        body = ", ".join(str(a) for a in ddr.input_atoms)
        query = f"{heads} :- {body}."
        dc = infer_constraints(db)
    (out / "query.txt").write_text(query + "\n", encoding="utf-8")
    (out / "constraints.txt").write_text(
        render_constraints(dc, ddr.input_atoms, universe), encoding="utf-8"
    )
    written = set()
    for sym, rel in db.atoms:
        if sym in written:
            continue
        written.add(sym)
        (out / f"{sym}.tsv").write_text(relation_to_tsv(rel, None), encoding="utf-8")
    print(f"wrote {args.kind} fixture to {out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="flowjoin",
        description="Worst-case optimal disjunctive rules and conjunctive queries",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, data_required=False):
        p.add_argument("-q", "--query", required=True, help="query file")
        p.add_argument("-d", "--data", required=data_required, help="directory of TSV relations")
        p.add_argument("-c", "--constraints", help="degree constraint file")
        p.add_argument("--auto", action="store_true", help="infer constraints from the data")

    p = sub.add_parser("bound", help="optimal output-size bound certificate")
    common(p)
    p.set_defaults(fn=_cmd_bound)

    p = sub.add_parser("prove", help="emit a proof sequence for the bound")
    common(p)
    p.set_defaults(fn=_cmd_prove)

    p = sub.add_parser("run-ddr", help="answer a disjunctive rule")
    common(p, data_required=True)
    p.add_argument("--check-invariants", action="store_true")
    p.add_argument("--oracle-check", action="store_true")
    p.add_argument("--json-stats", action="store_true")
    p.add_argument("--out-dir", help="write head relations as TSV")
    p.set_defaults(fn=_cmd_run_ddr)

    p = sub.add_parser("run-cq", help="answer a conjunctive query")
    common(p, data_required=True)
    p.add_argument("--tds", help="'all', 'greedy', or a file of TD indices")
    p.add_argument("--out", help="write the answer TSV here")
    p.set_defaults(fn=_cmd_run_cq)

    p = sub.add_parser("width", help="decomposition width report")
    common(p)
    g = p.add_mutually_exclusive_group(required=True)
    g.add_argument("--fhtw", action="store_true")
    g.add_argument("--subw", action="store_true")
    p.set_defaults(fn=_cmd_width)

    p = sub.add_parser("oracle", help="brute-force reference answer")
    p.add_argument("-q", "--query", required=True)
    p.add_argument("-d", "--data", required=True)
    p.add_argument("--out", help="answer TSV (single-head queries)")
    p.add_argument("--out-dir", help="per-head TSVs (disjunctive rules)")
    p.set_defaults(fn=_cmd_oracle)

    p = sub.add_parser("verify-model", help="check a materialized model")
    p.add_argument("-q", "--query", required=True)
    p.add_argument("-d", "--data", required=True)
    p.add_argument("-m", "--model", required=True, help="directory of head TSVs")
    p.set_defaults(fn=_cmd_verify_model)

    p = sub.add_parser("gen", help="write a test fixture")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--kind", choices=("hexagon", "q1", "cycle4", "random"), default="random")
    p.add_argument("--size", type=int, default=64)
    p.add_argument("--out-dir", required=True)
    p.set_defaults(fn=_cmd_gen)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return 2 if e.code else 0
    try:
        return args.fn(args)
    except (QuerySyntaxError, _UsageError, FileNotFoundError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    except (
        ConstraintViolationError,
        UnboundedBoundError,
        RationalizationError,
        InvariantError,
        CombinationCapError,
        TooManyVariablesError,
        ValueError,
    ) as e:
        print(f"error: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
