"""zwcalc: qudit and mixed-dimensional ZW-calculus.

Diagram construction, exact/numeric tensor semantics, an executable
equational theory with soundness checking, semantic normal forms with an
equality decision procedure, non-standard interpretations witnessing that
every axiom is necessary, and a bridge between the uniform qudit calculus
and its mixed-dimensional refinement.
"""

from .diagram import (
    Diagram,
    GlobalScalar,
    KetOne,
    MIXED,
    QUDIT,
    WNode,
    ZSpider,
    bend_to_state,
    cap_state,
    compose_par,
    compose_seq,
    cup_effect,
    dagger,
    derived_bra,
    derived_ket,
    empty_diagram,
    identity,
    ket_zero,
    make_generator,
    make_global_scalar,
    make_ket_one,
    make_w_node,
    make_z_spider,
    restricted_z_spider,
    structurally_equal,
    swap,
    validate,
    w_merge,
)
from .semantics import (
    InvalidDiagram,
    PartsMismatch,
    RangeViolation,
    interpret,
    interpret_generator,
    scalar_fit,
    tensors_close,
    tensors_close_up_to_scalar,
)
from .normalform import (
    CoefficientTable,
    NormalFormDiagram,
    diagrams_equal,
    n_functor,
    nf_cup,
    nf_tensor,
    nf_to_diagram,
    nf_w21,
    normalize,
    table_of,
    tables_close,
)
from .rules import (
    Match,
    RewriteTrace,
    RuleSchema,
    apply,
    check_in_context_soundness,
    check_rule_soundness,
    derive_lemma_corpus,
    find_matches,
    get_rule,
    rule_ids,
)
from .sampling import random_diagram, random_state
from .bridge import (
    BridgeReport,
    HasInputs,
    UniformEmbedding,
    check_commuting_square,
    iota,
    qudit_nf_to_mixed_nf,
    to_uniform,
)
from .minimality import (
    AltSemantics,
    CapacityAnnotation,
    TooLarge,
    UndefinedForFlavor,
    alt_for_rule,
    capacity_annotation,
    capacity_growth,
    double_w_simplification_check,
    eval_alt,
    has_effective_z_path,
    has_w_path,
    necessity_report,
    necessity_table,
)

__all__ = [
    "Diagram",
    "GlobalScalar",
    "KetOne",
    "MIXED",
    "QUDIT",
    "WNode",
    "ZSpider",
    "bend_to_state",
    "cap_state",
    "compose_par",
    "compose_seq",
    "cup_effect",
    "dagger",
    "derived_bra",
    "derived_ket",
    "empty_diagram",
    "identity",
    "ket_zero",
    "make_generator",
    "make_global_scalar",
    "make_ket_one",
    "make_w_node",
    "make_z_spider",
    "restricted_z_spider",
    "structurally_equal",
    "swap",
    "validate",
    "w_merge",
    "InvalidDiagram",
    "PartsMismatch",
    "RangeViolation",
    "interpret",
    "interpret_generator",
    "scalar_fit",
    "tensors_close",
    "tensors_close_up_to_scalar",
    "CoefficientTable",
    "NormalFormDiagram",
    "diagrams_equal",
    "n_functor",
    "nf_cup",
    "nf_tensor",
    "nf_to_diagram",
    "nf_w21",
    "normalize",
    "table_of",
    "tables_close",
    "Match",
    "RewriteTrace",
    "RuleSchema",
    "apply",
    "check_in_context_soundness",
    "check_rule_soundness",
    "derive_lemma_corpus",
    "find_matches",
    "get_rule",
    "rule_ids",
    "random_diagram",
    "random_state",
    "BridgeReport",
    "HasInputs",
    "UniformEmbedding",
    "check_commuting_square",
    "iota",
    "qudit_nf_to_mixed_nf",
    "to_uniform",
    "AltSemantics",
    "CapacityAnnotation",
    "TooLarge",
    "UndefinedForFlavor",
    "alt_for_rule",
    "capacity_annotation",
    "capacity_growth",
    "double_w_simplification_check",
    "eval_alt",
    "has_effective_z_path",
    "has_w_path",
    "necessity_report",
    "necessity_table",
]

__version__ = "0.1.0"
