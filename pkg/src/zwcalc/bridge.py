"""Translations between the uniform qudit calculus and mixed diagrams.

Three operations connect the two flavors:

* :func:`iota` re-reads a qudit diagram as a mixed diagram whose wires
  all carry the full capacity ``d - 1``; the tensor is unchanged.
* :func:`to_uniform` embeds an arbitrary mixed state into a single
  uniform dimension ``1 + max capacity``: each narrow wire gains an
  in-line restricted-spider projector, each legless spider becomes its
  capped macro, and one 1-to-1 W adapter per output carries the result
  back down to the declared boundary capacities.  The returned pieces
  satisfy ``adapters ∘ iota(core) == source`` semantically, which is
  exactly what makes the embedding testable.
* :func:`qudit_nf_to_mixed_nf` truncates a qudit normal form to mixed
  boundary capacities by deleting the table entries whose exponents
  exceed them — the table-level shadow of composing with projection
  adapters.

:func:`check_commuting_square` packages the ``iota`` soundness check as
a :class:`BridgeReport`.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace as dc_replace

import numpy as np

from .diagram import (
    Diagram,
    GlobalScalar,
    KetOne,
    MIXED,
    QUDIT,
    WNode,
    ZSpider,
    _wire,
    compose_par,
    compose_seq,
    empty_diagram,
    make_w_node,
    restricted_z_spider,
    validate,
)
from .normalform import CoefficientTable, NormalFormDiagram, n_functor
from .rules import replace_fragment
from .semantics import InvalidDiagram, interpret


class HasInputs(ValueError):
    """The operation is defined on states; bend inputs first."""


# ---------------------------------------------------------------------------
# iota: qudit -> mixed at full capacity
# ---------------------------------------------------------------------------


def iota(d: Diagram, dim: int | None = None) -> Diagram:
    """Re-flavor a qudit diagram as mixed with every capacity ``d - 1``.

    The graph is untouched: qudit nodes already declare the uniform
    capacity, so only the flavor tag changes.  The interpretation is
    preserved entrywise.
    """
    if d.flavor != QUDIT:
        raise ValueError("iota expects a qudit diagram")
    if dim is not None and dim != d.dim:
        raise ValueError(f"diagram dimension {d.dim} does not match {dim}")
    errs = validate(d)
    if errs:
        raise InvalidDiagram("; ".join(errs))
    return dc_replace(d, flavor=MIXED, dim=None)


def _as_qudit(d: Diagram, dim: int) -> Diagram:
    """Inverse re-flavoring for a mixed diagram that is already uniform."""
    out = dc_replace(d, flavor=QUDIT, dim=dim)
    errs = validate(out)
    if errs:
        raise InvalidDiagram("; ".join(errs))
    return out


# ---------------------------------------------------------------------------
# to_uniform: mixed state -> qudit core + boundary adapters
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class UniformEmbedding:
    """Decomposition of a mixed state into a uniform core and adapters.

    ``core`` is a qudit state at dimension ``dim``; ``collector`` is the
    mixed map applying one capacity-lowering W node per output.  The
    defining property is ``collector ∘ iota(core) == source``.
    """

    source: Diagram
    core: Diagram
    collector: Diagram
    dim: int
    steps: tuple = field(default=())

    def composite(self) -> Diagram:
        return compose_seq(iota(self.core), self.collector)


def _insert_projector(host: Diagram, w, a: int, dim: int) -> Diagram:
    """Splice a capacity-``a`` restricted spider into wire ``w``."""
    gadget = restricted_z_spider(a, 1.0 + 0j, 1, 1, dim)
    off = host.max_node_id() + 1
    g = gadget.relabeled(off)
    in_peer = out_peer = None
    kept = []
    for gw in g.wires:
        x, y = gw
        if x == ("in", 0) or y == ("in", 0):
            in_peer = y if x == ("in", 0) else x
        elif x == ("out", 0) or y == ("out", 0):
            out_peer = y if x == ("out", 0) else x
        else:
            kept.append(gw)
    u, v = w
    new_wires = [hw for hw in host.wires if hw != w]
    new_wires += kept + [_wire(u, in_peer), _wire(out_peer, v)]
    return dc_replace(
        host,
        nodes=tuple(sorted(host.nodes + g.nodes)),
        wires=tuple(new_wires),
        loops=host.loops + g.loops,
    )


def _loop_projector(host: Diagram, a: int, dim: int) -> Diagram:
    """Materialize a free loop of capacity ``a`` as a traced projector."""
    gadget = restricted_z_spider(a, 1.0 + 0j, 1, 1, dim)
    off = host.max_node_id() + 1
    g = gadget.relabeled(off)
    in_peer = out_peer = None
    kept = []
    for gw in g.wires:
        x, y = gw
        if x == ("in", 0) or y == ("in", 0):
            in_peer = y if x == ("in", 0) else x
        elif x == ("out", 0) or y == ("out", 0):
            out_peer = y if x == ("out", 0) else x
        else:
            kept.append(gw)
    kept.append(_wire(in_peer, out_peer))
    return dc_replace(
        host,
        nodes=tuple(sorted(host.nodes + g.nodes)),
        wires=host.wires + tuple(kept),
        loops=host.loops + g.loops,
    )


def _max_capacity(d: Diagram) -> int:
    caps = [1]
    for _, node in d.nodes:
        if isinstance(node, ZSpider):
            caps.append(node.capacity)
        elif isinstance(node, WNode):
            caps.append(node.in_cap)
            caps.extend(node.out_caps)
        elif isinstance(node, KetOne):
            caps.append(node.capacity)
    caps.extend(d.in_caps)
    caps.extend(d.out_caps)
    caps.extend(d.loops)
    return max(caps)


def to_uniform(d: Diagram) -> UniformEmbedding:
    """Embed a mixed state into the uniform dimension ``1 + max cap``.

    The core keeps the source graph with every capacity raised to the
    maximum; narrow wires get an in-line restricted-spider projector,
    free loops become traced projectors, and legless spiders are
    replaced by their capped macro.  One W adapter per output lowers
    the boundary back to the declared capacities.
    """
    if d.flavor != MIXED:
        raise ValueError("to_uniform expects a mixed diagram")
    if d.n_in:
        raise HasInputs("bend the diagram to a state first")
    errs = validate(d)
    if errs:
        raise InvalidDiagram("; ".join(errs))

    delta = _max_capacity(d)
    dim = delta + 1
    steps: list[str] = []

    wire_caps = [(w, d.wire_capacity(w)) for w in d.wires]
    legless = []
    nodes = []
    for nid, node in d.nodes:
        if isinstance(node, ZSpider):
            nodes.append((nid, ZSpider(node.param, delta)))
            if d.degree(nid) == 0 and node.capacity < delta:
                legless.append((nid, node.capacity, node.param))
        elif isinstance(node, WNode):
            nodes.append((nid, WNode(delta, (delta,) * node.fanout)))
        elif isinstance(node, KetOne):
            nodes.append((nid, KetOne(delta)))
        else:
            nodes.append((nid, node))
    core = Diagram(
        MIXED,
        None,
        tuple(nodes),
        d.wires,
        (),
        (delta,) * d.n_out,
        (),
    )

    for w, a in wire_caps:
        if a < delta:
            core = _insert_projector(core, w, a, dim)
            steps.append(f"projector capacity {a} inserted on wire {w}")
    for a in d.loops:
        if a < delta:
            core = _loop_projector(core, a, dim)
            steps.append(f"free loop materialized at capacity {a}")
        else:
            core = dc_replace(core, loops=core.loops + (delta,))
    for nid, cap, param in legless:
        gadget = restricted_z_spider(cap, param, 0, 0, dim)
        core = replace_fragment(core, frozenset({nid}), (), gadget)
        steps.append(f"legless spider {nid} capped at {cap}")

    core = _as_qudit(core, dim)

    collector = empty_diagram(MIXED, None)
    for cap in d.out_caps:
        adapter = make_w_node(1, in_cap=delta, out_caps=(cap,))
        collector = compose_par(collector, adapter)
    return UniformEmbedding(
        source=d, core=core, collector=collector, dim=dim, steps=tuple(steps)
    )


# ---------------------------------------------------------------------------
# normal-form truncation
# ---------------------------------------------------------------------------


def qudit_nf_to_mixed_nf(nf: NormalFormDiagram, target_caps) -> NormalFormDiagram:
    """Truncate a qudit normal form to mixed boundary capacities.

    Table entries whose exponents exceed their target capacity are
    deleted; the remaining table is realized as a mixed normal form.
    The result interprets to the per-axis projection of the input.
    """
    table = nf.table
    target = tuple(int(c) for c in target_caps)
    if len(target) != len(table.caps):
        raise ValueError(
            f"{len(target)} target capacities for {len(table.caps)} outputs"
        )
    for t, c in zip(target, table.caps):
        if not (1 <= t <= c):
            raise ValueError(f"target capacity {t} outside 1..{c}")
    entries = {
        xs: v
        for xs, v in table.entries
        if all(x <= t for x, t in zip(xs, target))
    }
    return n_functor(CoefficientTable.from_dict(target, entries), MIXED)


# ---------------------------------------------------------------------------
# commuting-square report
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class BridgeReport:
    source: Diagram
    translated: Diagram
    max_deviation: float
    steps: tuple
    tol: float
    passed: bool


def check_commuting_square(
    d: Diagram, dim: int | None = None, *, tol: float = 1e-10
) -> BridgeReport:
    """Compare a qudit diagram against its full-capacity mixed reading."""
    translated = iota(d, dim)
    td = np.asarray(interpret(d))
    tm = np.asarray(interpret(translated))
    steps = (
        f"interpreted source at dimension {d.dim}",
        "interpreted translation with the mixed evaluator",
    )
    if td.shape != tm.shape:
        return BridgeReport(d, translated, float("inf"), steps, tol, False)
    dev = float(np.max(np.abs(td - tm))) if td.size else 0.0
    return BridgeReport(d, translated, dev, steps, tol, dev <= tol)
