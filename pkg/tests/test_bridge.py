"""Tests for the qudit/mixed translations."""

import numpy as np
import pytest

from zwcalc import (
    HasInputs,
    MIXED,
    QUDIT,
    check_commuting_square,
    compose_par,
    compose_seq,
    get_rule,
    identity,
    interpret,
    iota,
    make_ket_one,
    make_w_node,
    make_z_spider,
    n_functor,
    normalize,
    qudit_nf_to_mixed_nf,
    rule_ids,
    tables_close,
    tensors_close,
    to_uniform,
)
from zwcalc.normalform import CoefficientTable
from zwcalc.sampling import random_diagram
from zwcalc.semantics import InvalidDiagram


# ---------------------------------------------------------------------------
# full-capacity reading
# ---------------------------------------------------------------------------


def test_full_capacity_reading_keeps_the_graph():
    d = make_ket_one(dim=2)
    m = iota(d)
    assert m.flavor == MIXED
    assert m.nodes == d.nodes
    assert m.wires == d.wires
    assert np.allclose(interpret(m), interpret(d))


def test_full_capacity_reading_rejects_mixed_input():
    with pytest.raises(ValueError):
        iota(make_ket_one(capacity=1))


def test_full_capacity_reading_checks_the_dimension():
    with pytest.raises(ValueError):
        iota(identity(dim=3), 4)


def test_commuting_square_on_random_diagrams():
    rng = np.random.default_rng(0)
    for _ in range(40):
        d = random_diagram(
            rng, flavor=QUDIT, dim=int(rng.integers(2, 5)),
            n_in=int(rng.integers(0, 3)), n_out=int(rng.integers(0, 3)),
            n_nodes=int(rng.integers(0, 5)),
        )
        rep = check_commuting_square(d)
        assert rep.passed
        assert rep.max_deviation <= 1e-10


def test_rule_instances_stay_equal_after_reading():
    rng = np.random.default_rng(1)
    for rid in rule_ids(QUDIT):
        rule = get_rule(rid, QUDIT)
        b = rule.sample_binding(rng, QUDIT, 3)
        lhs, rhs = rule.instantiate(b)
        assert tensors_close(interpret(iota(lhs)), interpret(iota(rhs)), 1e-9)


# ---------------------------------------------------------------------------
# uniform embedding
# ---------------------------------------------------------------------------


def test_unit_ket_embeds_into_its_capacity_plus_one():
    emb = to_uniform(make_ket_one(capacity=3))
    assert emb.dim == 4
    assert emb.core.flavor == QUDIT
    assert np.allclose(interpret(emb.composite()), [0, 1, 0, 0])


def test_uniform_source_needs_no_surgery():
    d = compose_seq(
        make_z_spider(0.5, 0, 1, capacity=2),
        make_w_node(2, in_cap=2, out_caps=(2, 2)),
    )
    emb = to_uniform(d)
    assert emb.steps == ()
    assert tensors_close(interpret(emb.composite()), interpret(d), 1e-9)


def test_narrow_spider_in_wide_context_embeds_exactly():
    wide = compose_seq(
        make_z_spider(1.3, 0, 1, capacity=2),
        make_w_node(2, in_cap=2, out_caps=(2, 1)),
    )
    d = compose_par(wide, make_z_spider(0.7 + 0.2j, 0, 1, capacity=1))
    emb = to_uniform(d)
    assert emb.dim == 3
    assert emb.steps  # narrow wires forced a projector
    assert tensors_close(interpret(emb.composite()), interpret(d), 1e-9)


def test_embedding_requires_a_state():
    with pytest.raises(HasInputs):
        to_uniform(identity(caps=(1,)))


def test_embedding_rejects_qudit_diagrams():
    with pytest.raises(ValueError):
        to_uniform(identity(dim=2))


def test_embedding_reproduces_random_states():
    rng = np.random.default_rng(2)
    for _ in range(60):
        d = random_diagram(
            rng, flavor=MIXED, dim=None, n_in=0,
            n_out=int(rng.integers(0, 3)),
            n_nodes=int(rng.integers(0, 6)), max_cap=3,
        )
        emb = to_uniform(d)
        ta = np.asarray(interpret(emb.composite()))
        tb = np.asarray(interpret(d))
        assert ta.shape == tb.shape
        scale = max(1.0, float(np.max(np.abs(tb))) if tb.size else 0.0)
        dev = float(np.max(np.abs(ta - tb))) if ta.size else abs(
            complex(ta.item()) - complex(tb.item())
        )
        assert dev <= 1e-9 * scale


# ---------------------------------------------------------------------------
# normal-form truncation
# ---------------------------------------------------------------------------


def test_truncation_drops_over_capacity_terms():
    t = CoefficientTable((2,), (((0,), 1 + 0j), ((2,), 1 + 0j)))
    nf = n_functor(t, QUDIT, dim=3)
    out = qudit_nf_to_mixed_nf(nf, [1])
    assert out.flavor == MIXED
    assert out.table.caps == (1,)
    assert out.table.entries == (((0,), 1 + 0j),)
    assert np.allclose(interpret(out.realization), [1, 0])


def test_truncation_at_full_capacity_keeps_the_table():
    t = CoefficientTable((2,), (((0,), 1 + 0j), ((2,), 1 + 0j)))
    nf = n_functor(t, QUDIT, dim=3)
    assert qudit_nf_to_mixed_nf(nf, [2]).table.entries == t.entries


def test_truncation_of_empty_table_is_empty():
    nf = n_functor(CoefficientTable((2, 2), ()), QUDIT, dim=3)
    assert qudit_nf_to_mixed_nf(nf, [1, 2]).table.entries == ()


def test_truncation_validates_target_capacities():
    nf = n_functor(CoefficientTable((2,), ()), QUDIT, dim=3)
    with pytest.raises(ValueError):
        qudit_nf_to_mixed_nf(nf, [3])
    with pytest.raises(ValueError):
        qudit_nf_to_mixed_nf(nf, [1, 1])


def test_normalization_commutes_with_embedding():
    rng = np.random.default_rng(3)
    for _ in range(30):
        d = random_diagram(
            rng, flavor=MIXED, dim=None, n_in=0,
            n_out=int(rng.integers(1, 4)),
            n_nodes=int(rng.integers(0, 6)), max_cap=3,
        )
        emb = to_uniform(d)
        via_core = qudit_nf_to_mixed_nf(normalize(emb.core), d.out_caps)
        eq, witness = tables_close(via_core.table, normalize(d).table, 1e-9)
        assert eq, witness
