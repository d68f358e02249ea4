"""Open port-multigraphs for the qudit and mixed-dimensional ZW-calculus.

A diagram is a finite multigraph whose vertices are generators (Z-spiders,
W-nodes, ket-1 states and global scalars) and whose edges ("wires") may also
end on ordered input/output boundary positions.  Swaps, identities, cups and
caps are not nodes: a wire between two boundary positions *is* the
corresponding cup/cap/identity, so the compact-structure equalities hold by
construction and rewrite rules only ever deal with genuine generators.

Wires carry a capacity ``k`` meaning the wire holds a ``C^{k+1}`` system.  In
the uniform ("qudit") flavor every wire has capacity ``d-1``; the mixed
flavor allows any capacities subject to the generator-local constraints (all
legs of a Z-spider agree; a W-node's input capacity dominates its outputs).

>>> w = identity(1, dim=3)
>>> w.n_in, w.n_out
(1, 1)
>>> validate(w)
[]
>>> st = bend_to_state(w)
>>> (st.n_in, st.n_out)
(0, 2)

Structural equality is port-graph isomorphism respecting boundary order,
node kinds, exact parameters and wire multiplicities:

>>> a = make_z_spider(0.5j, 1, 2, dim=3)
>>> b = make_z_spider(0.5j, 1, 2, dim=3)
>>> structurally_equal(a, b)
True
>>> structurally_equal(a, make_z_spider(0.5, 1, 2, dim=3))
False
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field, replace
from fractions import Fraction
from typing import Iterable, Mapping, Sequence

QUDIT = "qudit"
MIXED = "mixed"

# ---------------------------------------------------------------------------
# node kinds
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ZSpider:
    """Z-spider with complex parameter; one capacity governs every leg.

    The leg count is not stored on the node: legs are exactly the wire
    endpoints referencing the node, and they are interchangeable
    (flexsymmetry).
    """

    param: complex
    capacity: int


@dataclass(frozen=True)
class WNode:
    """W-node: one distinguished input port and a multiset of output ports.

    ``out_caps[i]`` is the capacity of output port ``i+1`` (port 0 is the
    input).  Outputs are interchangeable as (port, capacity) pairs.
    """

    in_cap: int
    out_caps: tuple[int, ...]

    @property
    def fanout(self) -> int:
        return len(self.out_caps)


@dataclass(frozen=True)
class KetOne:
    """The |1> state preparation on a wire of the given capacity."""

    capacity: int


@dataclass(frozen=True)
class GlobalScalar:
    """A free-floating complex scalar; no ports."""

    value: complex


Node = ZSpider | WNode | KetOne | GlobalScalar

# Endpoints: ("n", node_id, port) | ("in", index) | ("out", index)
Endpoint = tuple
Wire = tuple  # canonically ordered pair of endpoints


def _wire(a: Endpoint, b: Endpoint) -> Wire:
    return (a, b) if a <= b else (b, a)


def _is_node_ep(ep: Endpoint) -> bool:
    return ep[0] == "n"


# ---------------------------------------------------------------------------
# diagrams
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Diagram:
    """An open ZW port-multigraph.

    ``in_caps``/``out_caps`` list the boundary capacities in order; ``loops``
    records node-free closed loops (each contributes a scalar factor of
    capacity+1 to the interpretation).  Instances are immutable; all
    operations return fresh diagrams.
    """

    flavor: str
    dim: int | None  # qudit dimension d; None in the mixed flavor
    nodes: tuple[tuple[int, Node], ...]
    wires: tuple[Wire, ...]
    in_caps: tuple[int, ...]
    out_caps: tuple[int, ...]
    loops: tuple[int, ...] = ()

    # -- basic views -------------------------------------------------------

    @property
    def n_in(self) -> int:
        return len(self.in_caps)

    @property
    def n_out(self) -> int:
        return len(self.out_caps)

    def node_map(self) -> dict[int, Node]:
        return dict(self.nodes)

    def node(self, nid: int) -> Node:
        for i, n in self.nodes:
            if i == nid:
                return n
        raise KeyError(nid)

    def max_node_id(self) -> int:
        return max((i for i, _ in self.nodes), default=-1)

    def endpoints_of(self, nid: int) -> list[tuple[int, Wire]]:
        """All (port, wire) pairs touching node ``nid``."""
        out = []
        for w in self.wires:
            for ep in w:
                if ep[0] == "n" and ep[1] == nid:
                    out.append((ep[2], w))
        return out

    def degree(self, nid: int) -> int:
        return len(self.endpoints_of(nid))

    def wire_capacity(self, w: Wire) -> int:
        """Capacity carried by a wire (from either endpoint)."""
        for ep in w:
            c = self._endpoint_capacity(ep)
            if c is not None:
                return c
        raise ValueError(f"wire {w} has no resolvable capacity")

    def _endpoint_capacity(self, ep: Endpoint) -> int | None:
        if ep[0] == "in":
            return self.in_caps[ep[1]]
        if ep[0] == "out":
            return self.out_caps[ep[1]]
        node = self.node(ep[1])
        port = ep[2]
        if isinstance(node, ZSpider):
            return node.capacity
        if isinstance(node, KetOne):
            return node.capacity
        if isinstance(node, WNode):
            return node.in_cap if port == 0 else node.out_caps[port - 1]
        return None

    # -- convenience -------------------------------------------------------

    def with_nodes(self, nodes: Mapping[int, Node]) -> "Diagram":
        return replace(self, nodes=tuple(sorted(nodes.items())))

    def relabeled(self, offset: int) -> "Diagram":
        nodes = tuple((i + offset, n) for i, n in self.nodes)
        wires = tuple(
            _wire(
                ("n", a[1] + offset, a[2]) if a[0] == "n" else a,
                ("n", b[1] + offset, b[2]) if b[0] == "n" else b,
            )
            for a, b in self.wires
        )
        return replace(self, nodes=nodes, wires=wires)


# ---------------------------------------------------------------------------
# validation
# ---------------------------------------------------------------------------


def validate(d: Diagram) -> list[str]:
    """Check all structural invariants; an empty list means well-formed."""
    errs: list[str] = []
    nodes = d.node_map()
    if d.flavor not in (QUDIT, MIXED):
        errs.append(f"UnknownFlavor: {d.flavor}")
        return errs
    if d.flavor == QUDIT:
        if d.dim is None or d.dim < 2:
            errs.append("FlavorViolation: qudit flavor requires dim >= 2")
            return errs
    uniform = None if d.dim is None else d.dim - 1

    # port coverage
    seen: dict[Endpoint, int] = {}
    for w in d.wires:
        a, b = w
        if a == b:
            errs.append(f"SelfEndpoint: wire {w} repeats one endpoint")
        for ep in w:
            seen[ep] = seen.get(ep, 0) + 1
    for ep, cnt in seen.items():
        if cnt > 1:
            errs.append(f"PortCollision: endpoint {ep} covered {cnt} times")
    for side, caps in (("in", d.in_caps), ("out", d.out_caps)):
        for i in range(len(caps)):
            if seen.get((side, i), 0) != 1:
                errs.append(f"BoundaryUncovered: ({side}, {i})")
    for nid, node in nodes.items():
        ports = sorted(p for p, _ in d.endpoints_of(nid))
        if isinstance(node, ZSpider):
            if ports != list(range(len(ports))):
                errs.append(f"PortGap: Z node {nid} ports {ports}")
        elif isinstance(node, WNode):
            want = list(range(1 + node.fanout))
            if ports != want:
                errs.append(f"PortMismatch: W node {nid} ports {ports} != {want}")
        elif isinstance(node, KetOne):
            if ports != [0]:
                errs.append(f"PortMismatch: ket node {nid} ports {ports}")
        elif isinstance(node, GlobalScalar):
            if ports:
                errs.append(f"PortMismatch: scalar node {nid} has wires")
    for ep in seen:
        if ep[0] == "n" and ep[1] not in nodes:
            errs.append(f"DanglingEndpoint: {ep}")

    # capacities
    def check_cap(c: int, what: str) -> None:
        if c < 1:
            errs.append(f"CapacityViolation: {what} capacity {c} < 1")
        if uniform is not None and c != uniform:
            errs.append(f"FlavorViolation: {what} capacity {c} != d-1 = {uniform}")

    for nid, node in nodes.items():
        if isinstance(node, ZSpider):
            check_cap(node.capacity, f"Z {nid}")
        elif isinstance(node, KetOne):
            check_cap(node.capacity, f"ket {nid}")
        elif isinstance(node, WNode):
            check_cap(node.in_cap, f"W {nid} input")
            for c in node.out_caps:
                check_cap(c, f"W {nid} output")
            if node.out_caps and node.in_cap < max(node.out_caps):
                errs.append(
                    f"CapacityViolation: W {nid} input {node.in_cap} < "
                    f"max output {max(node.out_caps)}"
                )
    for i, c in enumerate(d.in_caps):
        check_cap(c, f"input {i}")
    for i, c in enumerate(d.out_caps):
        check_cap(c, f"output {i}")
    for c in d.loops:
        check_cap(c, "loop")

    # wire endpoint capacities agree
    for w in d.wires:
        caps = [d._endpoint_capacity(ep) for ep in w]
        caps = [c for c in caps if c is not None]
        if len(set(caps)) > 1:
            errs.append(f"CapacityMismatch: wire {w} joins capacities {caps}")
    return errs


# ---------------------------------------------------------------------------
# constructors
# ---------------------------------------------------------------------------


def _flavor_args(flavor: str, dim: int | None) -> tuple[str, int | None]:
    if flavor == QUDIT:
        if dim is None:
            raise ValueError("qudit flavor requires dim")
        return QUDIT, dim
    return MIXED, None


def empty_diagram(flavor: str = QUDIT, dim: int | None = 2) -> Diagram:
    flavor, dim = _flavor_args(flavor, dim)
    return Diagram(flavor, dim, (), (), (), ())


def make_z_spider(
    r: complex,
    n_in: int,
    n_out: int,
    *,
    dim: int | None = None,
    capacity: int | None = None,
) -> Diagram:
    """A single Z-spider with ``n_in`` inputs and ``n_out`` outputs."""
    if dim is not None:
        flavor, cap = QUDIT, dim - 1
    else:
        if capacity is None:
            raise ValueError("need dim (qudit) or capacity (mixed)")
        flavor, cap = MIXED, capacity
    node = ZSpider(complex(r), cap)
    wires = []
    for i in range(n_in):
        wires.append(_wire(("n", 0, i), ("in", i)))
    for j in range(n_out):
        wires.append(_wire(("n", 0, n_in + j), ("out", j)))
    return Diagram(
        flavor,
        dim,
        ((0, node),),
        tuple(wires),
        (cap,) * n_in,
        (cap,) * n_out,
    )


def make_w_node(
    n_out: int | None = None,
    *,
    dim: int | None = None,
    in_cap: int | None = None,
    out_caps: Sequence[int] | None = None,
) -> Diagram:
    """The 1 -> n W-node (input at boundary position 0)."""
    if dim is not None:
        if n_out is None:
            raise ValueError("need n_out for qudit W-node")
        flavor, ic, ocs = QUDIT, dim - 1, (dim - 1,) * n_out
    else:
        if in_cap is None or out_caps is None:
            raise ValueError("need in_cap and out_caps for mixed W-node")
        flavor, ic, ocs = MIXED, in_cap, tuple(out_caps)
    node = WNode(ic, ocs)
    wires = [_wire(("n", 0, 0), ("in", 0))]
    for j in range(len(ocs)):
        wires.append(_wire(("n", 0, 1 + j), ("out", j)))
    return Diagram(flavor, dim, ((0, node),), tuple(wires), (ic,), ocs)


def make_ket_one(*, dim: int | None = None, capacity: int | None = None) -> Diagram:
    if dim is not None:
        flavor, cap = QUDIT, dim - 1
    else:
        if capacity is None:
            raise ValueError("need dim or capacity")
        flavor, cap = MIXED, capacity
    node = KetOne(cap)
    return Diagram(flavor, dim, ((0, node),), (_wire(("n", 0, 0), ("out", 0)),), (), (cap,))


def make_global_scalar(
    r: complex, *, flavor: str = QUDIT, dim: int | None = 2
) -> Diagram:
    flavor, dim = _flavor_args(flavor, dim)
    return Diagram(flavor, dim, ((0, GlobalScalar(complex(r))),), (), (), ())


def make_generator(kind: Node, *, flavor: str, dim: int | None = None,
                   n_in: int = 0, n_out: int = 0) -> Diagram:
    """Single-generator diagram with all ports exposed in canonical order.

    For Z-spiders the caller chooses the leg split ``n_in``/``n_out``; W-nodes
    expose input then outputs; KetOne exposes its one output.
    """
    flavor, dim = _flavor_args(flavor, dim)
    if isinstance(kind, ZSpider):
        if flavor == QUDIT:
            return make_z_spider(kind.param, n_in, n_out, dim=dim)
        return make_z_spider(kind.param, n_in, n_out, capacity=kind.capacity)
    if isinstance(kind, WNode):
        if flavor == QUDIT:
            return make_w_node(kind.fanout, dim=dim)
        return make_w_node(in_cap=kind.in_cap, out_caps=kind.out_caps)
    if isinstance(kind, KetOne):
        if flavor == QUDIT:
            return make_ket_one(dim=dim)
        return make_ket_one(capacity=kind.capacity)
    if isinstance(kind, GlobalScalar):
        return make_global_scalar(kind.value, flavor=flavor, dim=dim)
    raise TypeError(f"unknown generator kind {kind!r}")


def identity(n: int = 1, *, dim: int | None = None,
             caps: Sequence[int] | None = None) -> Diagram:
    if dim is not None:
        flavor, cs = QUDIT, (dim - 1,) * n
    else:
        if caps is None:
            raise ValueError("need dim or caps")
        flavor, cs = MIXED, tuple(caps)
        n = len(cs)
    wires = tuple(_wire(("in", i), ("out", i)) for i in range(n))
    return Diagram(flavor, dim, (), wires, cs, cs)


def swap(*, dim: int | None = None, caps: tuple[int, int] | None = None) -> Diagram:
    if dim is not None:
        flavor, (a, b) = QUDIT, (dim - 1, dim - 1)
    else:
        flavor, (a, b) = MIXED, caps
    wires = (_wire(("in", 0), ("out", 1)), _wire(("in", 1), ("out", 0)))
    return Diagram(flavor, dim, (), wires, (a, b), (b, a))


def cap_state(*, dim: int | None = None, capacity: int | None = None) -> Diagram:
    """The 0 -> 2 cap, semantics sum_k |k,k>."""
    if dim is not None:
        flavor, c = QUDIT, dim - 1
    else:
        flavor, c = MIXED, capacity
    return Diagram(flavor, dim, (), (_wire(("out", 0), ("out", 1)),), (), (c, c))


def cup_effect(*, dim: int | None = None, capacity: int | None = None) -> Diagram:
    """The 2 -> 0 cup, semantics sum_k <k,k|."""
    if dim is not None:
        flavor, c = QUDIT, dim - 1
    else:
        flavor, c = MIXED, capacity
    return Diagram(flavor, dim, (), (_wire(("in", 0), ("in", 1)),), (c, c), ())


# ---------------------------------------------------------------------------
# composition
# ---------------------------------------------------------------------------


def compose_par(d1: Diagram, d2: Diagram) -> Diagram:
    """Parallel composition: disjoint union, boundaries concatenated."""
    if d1.flavor != d2.flavor or d1.dim != d2.dim:
        raise ValueError("FlavorMismatch")
    off = d1.max_node_id() + 1
    d2r = d2.relabeled(off)

    def shift(ep: Endpoint) -> Endpoint:
        if ep[0] == "in":
            return ("in", ep[1] + d1.n_in)
        if ep[0] == "out":
            return ("out", ep[1] + d1.n_out)
        return ep

    wires2 = tuple(_wire(shift(a), shift(b)) for a, b in d2r.wires)
    return Diagram(
        d1.flavor,
        d1.dim,
        d1.nodes + d2r.nodes,
        d1.wires + wires2,
        d1.in_caps + d2.in_caps,
        d1.out_caps + d2.out_caps,
        d1.loops + d2.loops,
    )


def compose_seq(d1: Diagram, d2: Diagram) -> Diagram:
    """Sequential composition d2 after d1 (outputs of d1 glue to inputs of d2).

    Gluing chases wire-to-wire chains through the junction so that snake
    identities hold definitionally; a node-free cycle closed by the gluing
    becomes a tracked loop.
    """
    if d1.flavor != d2.flavor or d1.dim != d2.dim:
        raise ValueError("FlavorMismatch")
    if d1.out_caps != d2.in_caps:
        raise ValueError(
            f"BoundaryMismatch: {list(d1.out_caps)} vs {list(d2.in_caps)}"
        )
    off = d1.max_node_id() + 1
    d2r = d2.relabeled(off)

    def map1(ep: Endpoint) -> Endpoint:
        if ep[0] == "out":
            return ("J", ep[1])
        return ep

    def map2(ep: Endpoint) -> Endpoint:
        if ep[0] == "in":
            return ("J", ep[1])
        return ep

    pool: list[list] = []
    for a, b in d1.wires:
        pool.append([map1(a), map1(b), d1.wire_capacity((a, b))])
    for a, b in d2r.wires:
        pool.append([map2(a), map2(b), d2r.wire_capacity((a, b))])

    # junction elimination: each ("J", i) occurs exactly twice overall
    loops = list(d1.loops + d2.loops)
    changed = True
    while changed:
        changed = False
        # index junction occurrences
        occ: dict[Endpoint, list[int]] = {}
        for idx, (a, b, _) in enumerate(pool):
            for ep in (a, b):
                if ep[0] == "J":
                    occ.setdefault(ep, []).append(idx)
        for j, idxs in occ.items():
            if len(idxs) == 1:
                # self-wire (both ends the same junction) counted once per end
                a, b, c = pool[idxs[0]]
                if a == b == j:
                    loops.append(c)
                    pool.pop(idxs[0])
                    changed = True
                    break
                continue
            i1, i2 = idxs[0], idxs[1]
            if i1 == i2:
                # both endpoints of one wire are this junction: closed loop
                c = pool[i1][2]
                loops.append(c)
                pool.pop(i1)
                changed = True
                break
            a1, b1, c1 = pool[i1]
            other1 = b1 if a1 == j else a1
            a2, b2, c2 = pool[i2]
            other2 = b2 if a2 == j else a2
            fused = [other1, other2, c1]
            pool.pop(max(i1, i2))
            pool.pop(min(i1, i2))
            pool.append(fused)
            changed = True
            break

    wires = tuple(_wire(a, b) for a, b, _ in pool)
    return Diagram(
        d1.flavor,
        d1.dim,
        d1.nodes + d2r.nodes,
        wires,
        d1.in_caps,
        d2.out_caps,
        tuple(loops),
    )


def dagger(d: Diagram) -> Diagram:
    """Adjoint: boundaries swap roles, parameters conjugate.

    W-nodes and kets keep their node data; their orientation flips because
    the boundary relabeling does (the tensors are real, so the adjoint is the
    boundary transpose plus parameter conjugation).
    """
    nodes = []
    for nid, n in d.nodes:
        if isinstance(n, ZSpider):
            n = ZSpider(n.param.conjugate(), n.capacity)
        elif isinstance(n, GlobalScalar):
            n = GlobalScalar(n.value.conjugate())
        nodes.append((nid, n))

    def flip(ep: Endpoint) -> Endpoint:
        if ep[0] == "in":
            return ("out", ep[1])
        if ep[0] == "out":
            return ("in", ep[1])
        return ep

    wires = tuple(_wire(flip(a), flip(b)) for a, b in d.wires)
    return Diagram(
        d.flavor, d.dim, tuple(nodes), wires, d.out_caps, d.in_caps, d.loops
    )


def bend_to_state(d: Diagram) -> Diagram:
    """Bend all inputs to outputs; bent inputs come first, in reversed order."""
    n = d.n_in

    def bend(ep: Endpoint) -> Endpoint:
        if ep[0] == "in":
            return ("out", n - 1 - ep[1])
        if ep[0] == "out":
            return ("out", n + ep[1])
        return ep

    wires = tuple(_wire(bend(a), bend(b)) for a, b in d.wires)
    new_out = tuple(reversed(d.in_caps)) + d.out_caps
    return Diagram(d.flavor, d.dim, d.nodes, wires, (), new_out, d.loops)


def permute_outputs(d: Diagram, perm: Sequence[int]) -> Diagram:
    """Relabel outputs so that new output i is old output perm[i]."""
    inv = {old: new for new, old in enumerate(perm)}

    def m(ep: Endpoint) -> Endpoint:
        if ep[0] == "out":
            return ("out", inv[ep[1]])
        return ep

    wires = tuple(_wire(m(a), m(b)) for a, b in d.wires)
    out_caps = tuple(d.out_caps[perm[i]] for i in range(len(perm)))
    return replace(d, wires=wires, out_caps=out_caps)


def permute_inputs(d: Diagram, perm: Sequence[int]) -> Diagram:
    inv = {old: new for new, old in enumerate(perm)}

    def m(ep: Endpoint) -> Endpoint:
        if ep[0] == "in":
            return ("in", inv[ep[1]])
        return ep

    wires = tuple(_wire(m(a), m(b)) for a, b in d.wires)
    in_caps = tuple(d.in_caps[perm[i]] for i in range(len(perm)))
    return replace(d, wires=wires, in_caps=in_caps)


# ---------------------------------------------------------------------------
# derived generators
# ---------------------------------------------------------------------------


def w_merge(n_in: int, *, dim: int | None = None, out_cap: int | None = None,
            in_caps: Sequence[int] | None = None) -> Diagram:
    """The n -> 1 upside-down W-node (dagger of the 1 -> n W)."""
    if dim is not None:
        return dagger(make_w_node(n_in, dim=dim))
    return dagger(make_w_node(in_cap=out_cap, out_caps=tuple(in_caps)))


def ket_zero(*, dim: int | None = None, capacity: int | None = None) -> Diagram:
    """|0> as the 0-output W-node turned into a state."""
    if dim is not None:
        node = WNode(dim - 1, ())
        cap = dim - 1
        flavor = QUDIT
    else:
        node = WNode(capacity, ())
        cap = capacity
        flavor = MIXED
    return Diagram(flavor, dim, ((0, node),), (_wire(("n", 0, 0), ("out", 0)),),
                   (), (cap,))


def derived_ket(k: int, capacity: int | None = None, *,
                flavor: str = QUDIT, dim: int | None = None) -> Diagram:
    """The inductive ket tree: semantics sqrt(k!)|k> on its wire.

    k=0 is the 0-output W-node, k=1 is KetOne, k>=2 merges derived_ket(k-1)
    with one more KetOne.  Mixed trees keep every KetOne on a unit-capacity
    wire, injecting up to the requested capacity through a 1 -> 1 W-node.
    """
    if flavor == QUDIT:
        if dim is None:
            raise ValueError("qudit derived_ket requires dim")
        capacity = dim - 1
        if not (0 <= k <= dim - 1):
            raise ValueError(f"RangeViolation: k={k} outside 0..{dim - 1}")
    else:
        if capacity is None:
            raise ValueError("mixed derived_ket requires capacity")
        if k > capacity:
            raise ValueError(f"RangeViolation: k={k} > capacity {capacity}")
    if k == 0:
        return ket_zero(dim=dim) if flavor == QUDIT else ket_zero(capacity=capacity)
    if k == 1:
        if flavor == QUDIT:
            return make_ket_one(dim=dim)
        if capacity == 1:
            return make_ket_one(capacity=1)
        nodes = ((0, WNode(capacity, (1,))), (1, KetOne(1)))
        wires = (_wire(("n", 0, 0), ("out", 0)), _wire(("n", 0, 1), ("n", 1, 0)))
        return Diagram(MIXED, None, nodes, wires, (), (capacity,))
    if flavor == QUDIT:
        prev = derived_ket(k - 1, flavor=QUDIT, dim=dim)
        one = make_ket_one(dim=dim)
        merge = w_merge(2, dim=dim)
    else:
        sub_cap = max(k - 1, 1)
        prev = derived_ket(k - 1, sub_cap, flavor=MIXED)
        one = make_ket_one(capacity=1)
        merge = w_merge(2, out_cap=capacity, in_caps=(sub_cap, 1))
    return compose_seq(compose_par(prev, one), merge)


def derived_bra(k: int, capacity: int | None = None, *,
                flavor: str = QUDIT, dim: int | None = None) -> Diagram:
    return dagger(derived_ket(k, capacity, flavor=flavor, dim=dim))


def z_loop_effect(*, dim: int) -> Diagram:
    """Z-spider (param 1) with a self-loop and one free leg, as an effect.

    Interprets to sum_k sqrt(k!) <k|.
    """
    cap = dim - 1
    node = ZSpider(1.0 + 0j, cap)
    wires = (
        _wire(("n", 0, 0), ("n", 0, 1)),
        _wire(("n", 0, 2), ("in", 0)),
    )
    return Diagram(QUDIT, dim, ((0, node),), wires, (cap,), ())


def restricted_z_spider(a: int, r: complex, n_in: int, n_out: int, d: int) -> Diagram:
    """Qudit macro interpreting to sum_{k<=a} r^k sqrt(k!)^{n+m-2} |k..><k..|.

    Built as 1/a! times a Z-spider with one auxiliary leg fed by half of a
    split derived_ket(a), the other half being absorbed by the looped-Z
    effect; at a = d-1 this is semantically the ordinary spider.
    """
    if not (0 <= a <= d - 1):
        raise ValueError(f"RangeViolation: a={a} outside 0..{d - 1}")
    cap = d - 1
    nid_z, nid_w = 0, 1
    spider = ZSpider(complex(r), cap)
    split = WNode(cap, (cap, cap))
    nodes: list[tuple[int, Node]] = [(nid_z, spider), (nid_w, split)]
    wires: list[Wire] = []
    # spider legs: 0..n_in-1 inputs, n_in..n_in+n_out-1 outputs, last = aux
    for i in range(n_in):
        wires.append(_wire(("n", nid_z, i), ("in", i)))
    for j in range(n_out):
        wires.append(_wire(("n", nid_z, n_in + j), ("out", j)))
    wires.append(_wire(("n", nid_z, n_in + n_out), ("n", nid_w, 1)))
    base = Diagram(QUDIT, d, tuple(nodes), tuple(wires),
                   (cap,) * n_in, (cap,) * n_out)
    # feed the split from derived_ket(a): state enters the W input port
    ket = derived_ket(a, flavor=QUDIT, dim=d)
    # attach: ket output -> W port 0; W port 2 -> looped-Z effect
    off = base.max_node_id() + 1
    ketr = ket.relabeled(off)
    ket_out_ep = None
    ket_wires = []
    for w in ketr.wires:
        aep, bep = w
        if aep == ("out", 0):
            ket_out_ep = bep
            continue
        if bep == ("out", 0):
            ket_out_ep = aep
            continue
        ket_wires.append(w)
    eff = z_loop_effect(dim=d)
    off2 = off + len(ketr.nodes)
    effr = eff.relabeled(off2)
    eff_in_ep = None
    eff_wires = []
    for w in effr.wires:
        aep, bep = w
        if aep == ("in", 0):
            eff_in_ep = bep
            continue
        if bep == ("in", 0):
            eff_in_ep = aep
            continue
        eff_wires.append(w)
    all_nodes = base.nodes + ketr.nodes + effr.nodes
    all_wires = (
        list(base.wires)
        + ket_wires
        + eff_wires
        + [_wire(ket_out_ep, ("n", nid_w, 0)), _wire(("n", nid_w, 2), eff_in_ep)]
    )
    scalar_id = max(i for i, _ in all_nodes) + 1
    all_nodes = all_nodes + ((scalar_id, GlobalScalar(1.0 / math.factorial(a))),)
    return Diagram(QUDIT, d, all_nodes, tuple(all_wires),
                   (cap,) * n_in, (cap,) * n_out)


def add_global_scalar(d: Diagram, value: complex) -> Diagram:
    nid = d.max_node_id() + 1
    return replace(d, nodes=d.nodes + ((nid, GlobalScalar(complex(value))),))


# ---------------------------------------------------------------------------
# plugging helpers (used heavily by rewrite rules and the minimality lab)
# ---------------------------------------------------------------------------


def plug_state_into_input(d: Diagram, state: Diagram, idx: int) -> Diagram:
    """Compose ``state`` (0 -> 1) into input ``idx`` of ``d``."""
    if state.n_in != 0 or state.n_out != 1:
        raise ValueError("state must be 0 -> 1")
    n = d.n_in
    pre_parts = []
    for i in range(n):
        if i == idx:
            pre_parts.append(("state", state))
        else:
            pre_parts.append(("id", d.in_caps[i]))
    pre = empty_diagram(d.flavor, d.dim)
    for tag, x in pre_parts:
        if tag == "state":
            pre = compose_par(pre, x)
        else:
            if d.flavor == QUDIT:
                pre = compose_par(pre, identity(1, dim=d.dim))
            else:
                pre = compose_par(pre, identity(caps=[x]))
    return compose_seq(pre, d)


def plug_effect_into_output(d: Diagram, effect: Diagram, idx: int) -> Diagram:
    """Compose ``effect`` (1 -> 0) onto output ``idx`` of ``d``."""
    if effect.n_in != 1 or effect.n_out != 0:
        raise ValueError("effect must be 1 -> 0")
    post = empty_diagram(d.flavor, d.dim)
    for j in range(d.n_out):
        if j == idx:
            post = compose_par(post, effect)
        else:
            if d.flavor == QUDIT:
                post = compose_par(post, identity(1, dim=d.dim))
            else:
                post = compose_par(post, identity(caps=[d.out_caps[j]]))
    return compose_seq(d, post)


# ---------------------------------------------------------------------------
# canonical labeling / structural equality
# ---------------------------------------------------------------------------


def _complex_key(z: complex) -> tuple:
    return (z.real, z.imag)


def _node_color(node: Node) -> tuple:
    if isinstance(node, ZSpider):
        return ("Z", _complex_key(node.param), node.capacity)
    if isinstance(node, WNode):
        return ("W", node.in_cap, tuple(sorted(node.out_caps)))
    if isinstance(node, KetOne):
        return ("K", node.capacity)
    return ("S", _complex_key(node.value))


def _port_class(node: Node, port: int) -> str:
    if isinstance(node, WNode):
        return "apex" if port == 0 else "out"
    return "leg"


def canonical_key(d: Diagram) -> tuple:
    """A canonical certificate invariant under node relabeling and the
    generator symmetries (Z-leg and W-output permutations)."""
    nodes = d.node_map()
    nids = sorted(nodes)

    # adjacency as (my port class, peer token) multisets; boundary tokens fixed
    def neighbor_tokens(colors: dict[int, tuple]) -> dict[int, tuple]:
        adj: dict[int, list] = {nid: [] for nid in nids}
        for a, b in d.wires:
            for me, other in ((a, b), (b, a)):
                if me[0] != "n":
                    continue
                nid, port = me[1], me[2]
                pc = _port_class(nodes[nid], port)
                if other[0] == "n":
                    onid, oport = other[1], other[2]
                    tok = (pc, "n", colors[onid], _port_class(nodes[onid], oport))
                else:
                    tok = (pc, other[0], other[1], "")
                adj[nid].append(tok)
        return {nid: tuple(sorted(adj[nid])) for nid in nids}

    colors = {nid: _node_color(nodes[nid]) for nid in nids}
    for _ in range(len(nids) + 2):
        toks = neighbor_tokens(colors)
        new = {nid: (colors[nid], toks[nid]) for nid in nids}
        # compress
        ranking = {c: i for i, c in enumerate(sorted(set(new.values()), key=repr))}
        new_colors = {nid: ("c", ranking[new[nid]]) for nid in nids}
        if new_colors == colors:
            break
        colors = new_colors

    # order nodes by refined color with deterministic backtracking on ties
    def certificate(order: list[int]) -> tuple:
        pos = {nid: i for i, nid in enumerate(order)}

        def ep_key(ep: Endpoint) -> tuple:
            if ep[0] == "n":
                nid, port = ep[1], ep[2]
                return ("n", pos[nid], _port_class(nodes[nid], port))
            return (ep[0], ep[1], "")

        wkey = sorted(
            tuple(sorted((ep_key(a), ep_key(b)))) for a, b in d.wires
        )
        nkey = tuple(_node_color(nodes[nid]) for nid in order)
        return (nkey, tuple(wkey))

    groups: dict[tuple, list[int]] = {}
    for nid in nids:
        groups.setdefault(colors[nid], []).append(nid)
    group_items = sorted(groups.items(), key=lambda kv: repr(kv[0]))

    best: tuple | None = None
    orders: list[list[int]] = [[]]
    LIMIT = 40320  # cap the permutation blow-up per color class (8!)
    for _, members in group_items:
        perms = list(itertools.permutations(members))[:LIMIT]
        orders = [o + list(p) for o in orders for p in perms]
        if len(orders) > LIMIT:
            # greedy fallback: keep candidates minimizing a partial certificate
            orders = orders[:LIMIT]
    for order in orders:
        cert = certificate(order)
        if best is None or cert < best:
            best = cert
    base = (
        d.flavor,
        d.dim,
        d.in_caps,
        d.out_caps,
        tuple(sorted(d.loops)),
    )
    return (base, best)


def structurally_equal(d1: Diagram, d2: Diagram) -> bool:
    if (d1.flavor, d1.dim, d1.in_caps, d1.out_caps) != (
        d2.flavor,
        d2.dim,
        d2.in_caps,
        d2.out_caps,
    ):
        return False
    if sorted(d1.loops) != sorted(d2.loops):
        return False
    if len(d1.nodes) != len(d2.nodes) or len(d1.wires) != len(d2.wires):
        return False
    return canonical_key(d1) == canonical_key(d2)
