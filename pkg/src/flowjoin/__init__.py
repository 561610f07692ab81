"""Worst-case optimal answering of disjunctive datalog rules and conjunctive
queries under degree constraints: entropic size-bound certificates, symbolic
proof sequences, sub-probability-measure execution, and a width-driven
query engine, all verifiable against brute-force oracles."""

from .bounds import (
    BoundCertificate,
    Budget,
    RationalizationError,
    UnboundedBoundError,
    budget_geq,
    make_budget,
    primal_value,
    solve_bound,
)
from .cq import (
    CQ,
    Hypergraph,
    TreeDecomposition,
    WidthReport,
    answer_cq,
    enumerate_tds,
    fhtw,
    rho_star,
    subw,
    yannakakis,
)
from .executor import (
    DdrResult,
    ExecState,
    InvariantError,
    OutputModel,
    answer_ddr,
    apply_step,
    audit_invariants,
    initial_state,
    run,
    run_sequence,
)
from .measures import (
    Measure,
    conditional,
    eval_at,
    geometric_mean,
    init_from_constraint,
    marginal,
    support,
    truncated_product,
    widen_condition,
)
from .relational import (
    DDR,
    Atom,
    ConstraintViolationError,
    Database,
    DegreeConstraintSet,
    Domain,
    MonTerm,
    Relation,
    SubTerm,
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
from .shannonflow import (
    HVector,
    IdentityViolationError,
    IntegralInequality,
    ProofSequence,
    ProofStep,
    ResetOnSingletonError,
    Witness,
    apply_proof_step_symbolic,
    build_proof_sequence,
    check_identity,
    is_polymatroid,
    reset,
    verify_proof_sequence,
)
from .varsets import Universe, VarSet

__version__ = "0.1.0"
