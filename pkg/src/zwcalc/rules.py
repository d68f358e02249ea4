"""Executable equational theory: bidirectional rewrite schemas.

Each rule is a parameterized schema with

* ``instantiate(binding)`` — build the two sides as *state-form* diagrams
  (no inputs, all external legs exposed as outputs in a fixed order shared
  by both sides);
* ``sample_binding(rng)`` — draw a random admissible binding, used by the
  soundness sweeps;
* matchers for both directions that locate occurrences inside a host
  diagram and return :class:`Match` objects.

Applying a match deletes the matched fragment and grafts the opposite
side in, reconnecting the crossing wires in template order.  Matchers are
sound but deliberately not exhaustive: occurrences whose external legs are
glued to each other are skipped, and node-creating reverse directions are
anchored canonically (once per node / wire / diagram) rather than
enumerating every conceivable binding.

Rule tags, qudit flavor:

====  =========================================================
s     adjacent same-capacity Z-spiders fuse; parameters multiply
a     a W-node feeding another's input port flattens into one
id    a 2-ary W-merge with one leg on |0> is a plain wire
h     too many parallel wires into a Z-spider force the vacuum
b1    Z-spider and W-node commute past each other (bialgebra)
b2    a W-split whose bundles feed W-merges = W-node + Z blockers
plus  two parallel 1-ary Z-spiders between W-nodes add parameters
e     the 1-leg Z(1) effect absorbs any nonzero ket tree
cp    a 3-ary Z-spider copies |1>, emitting its parameter
loop  a self-loop on a Z-spider next to a |1> leg is redundant
u     a Z state equals its capped macro at full capacity
====  =========================================================

Mixed flavor replaces ``e`` with nothing (it becomes derivable), turns
``a`` conditional on capacities, adds ``o`` (the second associativity
flavor: all of a W-split's outputs merging back), trades the ``b2``
context for capacity side conditions, and adds ``i`` (a |1> on a wide
wire factors through a capacity-1 wire).
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field, replace as dc_replace
from typing import Callable, Sequence

import numpy as np

from .diagram import (
    Diagram,
    GlobalScalar,
    KetOne,
    MIXED,
    QUDIT,
    WNode,
    ZSpider,
    Wire,
    _wire,
    add_global_scalar,
    cap_state,
    compose_par,
    compose_seq,
    derived_ket,
    empty_diagram,
    identity,
    ket_zero,
    make_ket_one,
    make_w_node,
    make_z_spider,
    restricted_z_spider,
    validate,
    w_merge,
    z_loop_effect,
)
from .semantics import interpret, max_rel_dev, tensors_close

QUDIT_RULE_IDS = ("s", "a", "id", "h", "b1", "b2", "plus", "e", "cp", "loop", "u")
MIXED_RULE_IDS = ("s", "a", "o", "id", "b1", "b2", "plus", "cp", "h", "loop", "i", "u")
STRUCTURAL_RULE_IDS = ("scalar-merge", "flex-permute")

PARAM_POOL = (
    1.0 + 0j,
    0j,
    -1.0 + 0j,
    1j,
    0.5 - 0.4j,
    -0.3 + 1.1j,
    2.0 + 0j,
    0.25 + 0.25j,
)


# ---------------------------------------------------------------------------
# matches and application
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Match:
    """One occurrence of a rule side inside a host diagram.

    ``legs`` are the crossing wires (exactly one endpoint inside
    ``frag_nodes``) in template order; the replacement's output ``i``
    reconnects to leg ``i``'s outside endpoint.
    """

    rule_id: str
    direction: str  # "LR" | "RL"
    binding: dict
    frag_nodes: frozenset
    legs: tuple


@dataclass(frozen=True)
class TraceStep:
    rule_id: str
    direction: str
    binding: dict
    removed_nodes: tuple


@dataclass(frozen=True)
class RewriteTrace:
    steps: tuple = ()

    def extended(self, step: TraceStep) -> "RewriteTrace":
        return RewriteTrace(self.steps + (step,))


def replace_fragment(
    host: Diagram,
    frag_nodes: frozenset,
    legs: Sequence[Wire],
    repl: Diagram,
) -> Diagram:
    """Splice ``repl`` (state-form, one output per leg) over a fragment."""
    if repl.n_in != 0 or repl.n_out != len(legs):
        raise ValueError("replacement boundary does not fit the fragment legs")
    peers = []
    for w in legs:
        a, b = w
        a_in = a[0] == "n" and a[1] in frag_nodes
        b_in = b[0] == "n" and b[1] in frag_nodes
        if a_in == b_in:
            raise ValueError(f"leg {w} does not cross the fragment boundary")
        peers.append(b if a_in else a)
    legset = set(map(tuple, legs))
    kept = []
    for w in host.wires:
        if tuple(w) in legset:
            continue
        if any(ep[0] == "n" and ep[1] in frag_nodes for ep in w):
            continue  # internal fragment wire
        kept.append(w)
    new_nodes = [(i, n) for i, n in host.nodes if i not in frag_nodes]
    off = host.max_node_id() + 1
    replr = repl.relabeled(off)
    added = []
    for a, b in replr.wires:
        aa = peers[a[1]] if a[0] == "out" else a
        bb = peers[b[1]] if b[0] == "out" else b
        added.append(_wire(aa, bb))
    new_nodes += list(replr.nodes)
    return dc_replace(
        host,
        nodes=tuple(sorted(new_nodes)),
        wires=tuple(kept) + tuple(added),
        loops=host.loops + repl.loops,
    )


# ---------------------------------------------------------------------------
# small graph-query helpers shared by the matchers
# ---------------------------------------------------------------------------


def _adjacency(d: Diagram) -> dict:
    """endpoint -> peer endpoint for every wire."""
    adj = {}
    for a, b in d.wires:
        adj[a] = b
        adj[b] = a
    return adj


def _node_wires(d: Diagram, nid: int) -> list:
    return [w for w in d.wires if any(ep[0] == "n" and ep[1] == nid for ep in w)]


def _peer(w: Wire, nid: int):
    """The endpoint of ``w`` not on node ``nid`` (None for a self-loop)."""
    a, b = w
    a_on = a[0] == "n" and a[1] == nid
    b_on = b[0] == "n" and b[1] == nid
    if a_on and b_on:
        return None
    return b if a_on else a


def _z_free_wires(d: Diagram, nid: int) -> list:
    """All wires at a Z node, self-loops listed once."""
    seen = []
    for w in d.wires:
        ends = [ep for ep in w if ep[0] == "n" and ep[1] == nid]
        if ends:
            seen.append((w, len(ends)))
    return seen

def _w_apex_wire(d: Diagram, nid: int):
    for w in d.wires:
        for ep in w:
            if ep[0] == "n" and ep[1] == nid and ep[2] == 0:
                return w
    return None


def _w_out_wires(d: Diagram, nid: int, fanout: int) -> list:
    out = [None] * fanout
    for w in d.wires:
        for ep in w:
            if ep[0] == "n" and ep[1] == nid and ep[2] >= 1:
                out[ep[2] - 1] = w
    return out


def match_ket_tree(d: Diagram, root_wire: Wire, root_nid: int) -> tuple | None:
    """Recognize a derived-ket tree hanging off ``root_wire`` at ``root_nid``.

    Returns (k, frozenset of tree node ids) or None.  The tree for k=0 is a
    0-fanout W-node, for k=1 a KetOne, for k>=2 a 2-ary W-merge whose legs
    carry the (k-1)-tree and a KetOne.
    """
    nodes = d.node_map()
    node = nodes.get(root_nid)
    if isinstance(node, KetOne):
        if len(_node_wires(d, root_nid)) != 1:
            return None
        return (1, frozenset([root_nid]))
    if not isinstance(node, WNode):
        return None
    # the root wire must sit on the apex port
    on_apex = any(
        ep == ("n", root_nid, 0) for ep in root_wire
    )
    if not on_apex:
        return None
    if node.fanout == 0:
        return (0, frozenset([root_nid]))
    if node.fanout != 2:
        return None
    w1, w2 = _w_out_wires(d, root_nid, 2)
    if w1 is None or w2 is None:
        return None
    subs = []
    for w in (w1, w2):
        p = _peer(w, root_nid)
        if p is None or p[0] != "n":
            return None
        subs.append(match_ket_tree(d, w, p[1]))
    if subs[0] is None or subs[1] is None:
        return None
    (ka, na), (kb, nb) = subs
    # exactly one branch must be a KetOne leaf
    if kb == 1 and isinstance(nodes[next(iter(nb))], KetOne):
        k, tree = ka, na
    elif ka == 1 and isinstance(nodes[next(iter(na))], KetOne):
        k, tree = kb, nb
    else:
        return None
    if na & nb:
        return None
    return (k + 1, na | nb | frozenset([root_nid]))


def _crossing(d: Diagram, frag: frozenset, w: Wire) -> bool:
    ins = sum(1 for ep in w if ep[0] == "n" and ep[1] in frag)
    return ins == 1


# ---------------------------------------------------------------------------
# rule schemas
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class RuleSchema:
    rule_id: str
    flavor: str
    description: str
    instantiate: Callable[[dict], tuple]
    sample_binding: Callable
    matcher_lr: Callable
    matcher_rl: Callable
    in_minimality_sweep: bool = True


def _out_legs(n: int, builder) -> Diagram:
    """Utility placeholder (kept for clarity in rule builders)."""
    raise NotImplementedError


def _state_wire_pair() -> None:
    pass


def _cap_of(binding: dict) -> int | None:
    return binding.get("dim")


def _mk_z(binding, r, legs_in, legs_out):
    if binding.get("flavor", QUDIT) == QUDIT:
        return make_z_spider(r, legs_in, legs_out, dim=binding["dim"])
    return make_z_spider(r, legs_in, legs_out, capacity=binding["cap"])


# -- (s): spider fusion ------------------------------------------------------


def _inst_s(b: dict) -> tuple:
    """legs: [first spider's free legs..., second spider's free legs...]."""
    flavor = b.get("flavor", QUDIT)
    dim = b.get("dim")
    cap = (dim - 1) if flavor == QUDIT else b["cap"]
    p, q = b["p"], b["q"]
    r, s = complex(b["r"]), complex(b["s"])
    n1, n2 = 0, 1
    nodes = ((n1, ZSpider(r, cap)), (n2, ZSpider(s, cap)))
    wires = []
    for i in range(p):
        wires.append(_wire(("n", n1, i), ("out", i)))
    wires.append(_wire(("n", n1, p), ("n", n2, 0)))
    for j in range(q):
        wires.append(_wire(("n", n2, 1 + j), ("out", p + j)))
    lhs = Diagram(flavor, dim, nodes, tuple(wires), (), (cap,) * (p + q))
    rhs = Diagram(
        flavor,
        dim,
        ((0, ZSpider(r * s, cap)),),
        tuple(_wire(("n", 0, i), ("out", i)) for i in range(p + q)),
        (),
        (cap,) * (p + q),
    )
    return lhs, rhs


def _sample_s(rng, flavor, dim_or_cap):
    b = {"flavor": flavor, "p": int(rng.integers(0, 4)), "q": int(rng.integers(0, 4)),
         "r": complex(rng.choice(PARAM_POOL)), "s": complex(rng.choice(PARAM_POOL))}
    if flavor == QUDIT:
        b["dim"] = dim_or_cap
    else:
        b["cap"] = dim_or_cap
    return b


def _match_s_lr(d: Diagram, limit=None):
    out = []
    nodes = d.node_map()
    for (n1, z1), (n2, z2) in itertools.combinations(sorted(nodes.items()), 2):
        if not (isinstance(z1, ZSpider) and isinstance(z2, ZSpider)):
            continue
        if z1.capacity != z2.capacity:
            continue
        joining = [
            w
            for w in d.wires
            if {ep[1] for ep in w if ep[0] == "n"} == {n1, n2}
        ]
        if len(joining) != 1:
            continue
        frag = frozenset([n1, n2])
        legs1 = [w for w, cnt in _z_free_wires(d, n1) if _crossing(d, frag, w)]
        legs2 = [w for w, cnt in _z_free_wires(d, n2) if _crossing(d, frag, w)]
        # any non-crossing wire other than the junction (self-loop or second
        # junction) disqualifies this occurrence
        extra = [
            w
            for w in _node_wires(d, n1) + _node_wires(d, n2)
            if not _crossing(d, frag, w) and w != joining[0]
        ]
        if extra:
            continue
        b = {
            "flavor": d.flavor,
            "p": len(legs1),
            "q": len(legs2),
            "r": z1.param,
            "s": z2.param,
        }
        if d.flavor == QUDIT:
            b["dim"] = d.dim
        else:
            b["cap"] = z1.capacity
        out.append(
            Match("s", "LR", b, frag, tuple(legs1) + tuple(legs2))
        )
    return out


def _match_s_rl(d: Diagram, limit=None):
    """Canonical un-fusion: every Z node splits into itself plus a Z(1)."""
    out = []
    for nid, node in d.nodes:
        if not isinstance(node, ZSpider):
            continue
        frag = frozenset([nid])
        legs = [w for w in _node_wires(d, nid) if _crossing(d, frag, w)]
        if len(legs) != d.degree(nid):
            continue  # has self-loops; skip
        b = {"flavor": d.flavor, "p": len(legs), "q": 0, "r": node.param, "s": 1.0 + 0j}
        if d.flavor == QUDIT:
            b["dim"] = d.dim
        else:
            b["cap"] = node.capacity
        out.append(Match("s", "RL", b, frag, tuple(legs)))
    return out


# -- (a): W-node composition on the distinguished port -----------------------


def _inst_a(b: dict) -> tuple:
    """legs: [X apex, X other outputs (p), Y outputs (q)]."""
    flavor = b.get("flavor", QUDIT)
    dim = b.get("dim")
    p, q = b["p"], b["q"]
    if flavor == QUDIT:
        cap = dim - 1
        capX, capMid, capsP, capsQ = cap, cap, (cap,) * p, (cap,) * q
    else:
        capX, capMid = b["cap_apex"], b["cap_mid"]
        capsP, capsQ = tuple(b["caps_p"]), tuple(b["caps_q"])
    X = WNode(capX, capsP + (capMid,))
    Y = WNode(capMid, capsQ)
    wires = [_wire(("n", 0, 0), ("out", 0))]
    for i in range(p):
        wires.append(_wire(("n", 0, 1 + i), ("out", 1 + i)))
    wires.append(_wire(("n", 0, 1 + p), ("n", 1, 0)))
    for j in range(q):
        wires.append(_wire(("n", 1, 1 + j), ("out", 1 + p + j)))
    lhs = Diagram(
        flavor, dim, ((0, X), (1, Y)), tuple(wires), (), (capX,) + capsP + capsQ
    )
    Z = WNode(capX, capsP + capsQ)
    wires2 = [_wire(("n", 0, 0), ("out", 0))]
    for i in range(p + q):
        wires2.append(_wire(("n", 0, 1 + i), ("out", 1 + i)))
    rhs = Diagram(
        flavor, dim, ((0, Z),), tuple(wires2), (), (capX,) + capsP + capsQ
    )
    return lhs, rhs


def _mixed_a_condition(cap_mid: int, cap_apex: int, caps_q: Sequence[int]) -> bool:
    return cap_mid == cap_apex or cap_mid >= sum(caps_q)


def _sample_a(rng, flavor, dim_or_cap):
    p, q = int(rng.integers(0, 3)), int(rng.integers(0, 3))
    b = {"flavor": flavor, "p": p, "q": q}
    if flavor == QUDIT:
        b["dim"] = dim_or_cap
        return b
    for _ in range(200):
        cap_apex = int(rng.integers(1, dim_or_cap + 1))
        cap_mid = int(rng.integers(1, cap_apex + 1))
        caps_p = [int(rng.integers(1, cap_apex + 1)) for _ in range(p)]
        caps_q = [int(rng.integers(1, cap_mid + 1)) for _ in range(q)]
        if _mixed_a_condition(cap_mid, cap_apex, caps_q):
            b.update(cap_apex=cap_apex, cap_mid=cap_mid, caps_p=caps_p, caps_q=caps_q)
            return b
    b.update(cap_apex=dim_or_cap, cap_mid=dim_or_cap,
             caps_p=[1] * p, caps_q=[1] * q)
    return b


def _match_a_lr(d: Diagram, limit=None):
    out = []
    nodes = d.node_map()
    for w in d.wires:
        a, bb = w
        if a[0] != "n" or bb[0] != "n":
            continue
        for x_ep, y_ep in ((a, bb), (bb, a)):
            if x_ep[2] == 0 or y_ep[2] != 0:
                continue  # need X non-apex -> Y apex
            nx, ny = x_ep[1], y_ep[1]
            if nx == ny:
                continue
            X, Y = nodes.get(nx), nodes.get(ny)
            if not (isinstance(X, WNode) and isinstance(Y, WNode)):
                continue
            frag = frozenset([nx, ny])
            apex_w = _w_apex_wire(d, nx)
            x_outs = [ww for ww in _w_out_wires(d, nx, X.fanout) if ww != w]
            y_outs = _w_out_wires(d, ny, Y.fanout)
            all_legs = [apex_w] + x_outs + y_outs
            if any(ww is None or not _crossing(d, frag, ww) for ww in all_legs):
                continue
            caps_p = tuple(
                X.out_caps[ep[2] - 1]
                for ww in x_outs
                for ep in ww
                if ep[0] == "n" and ep[1] == nx
            )
            b = {
                "flavor": d.flavor,
                "p": X.fanout - 1,
                "q": Y.fanout,
            }
            if d.flavor == QUDIT:
                b["dim"] = d.dim
            else:
                mid = X.out_caps[x_ep[2] - 1]
                if not _mixed_a_condition(mid, X.in_cap, Y.out_caps):
                    continue
                b.update(
                    cap_apex=X.in_cap,
                    cap_mid=mid,
                    caps_p=list(caps_p),
                    caps_q=list(Y.out_caps),
                )
            out.append(Match("a", "LR", b, frag, tuple(all_legs)))
    return out


def _match_a_rl(d: Diagram, limit=None):
    """Canonical re-association: peel the last output off a W-node."""
    out = []
    for nid, node in d.nodes:
        if not isinstance(node, WNode) or node.fanout < 1:
            continue
        frag = frozenset([nid])
        apex_w = _w_apex_wire(d, nid)
        outs = _w_out_wires(d, nid, node.fanout)
        legs = [apex_w] + outs
        if any(w is None or not _crossing(d, frag, w) for w in legs):
            continue
        p, q = node.fanout - 1, 1
        b = {"flavor": d.flavor, "p": p, "q": q}
        if d.flavor == QUDIT:
            b["dim"] = d.dim
        else:
            mid = node.in_cap  # b = c satisfies the capacity condition
            if mid < node.out_caps[-1]:
                continue
            b.update(
                cap_apex=node.in_cap,
                cap_mid=mid,
                caps_p=list(node.out_caps[:-1]),
                caps_q=[node.out_caps[-1]],
            )
        out.append(Match("a", "RL", b, frag, tuple(legs)))
    return out


# -- (o), mixed only: a W-split fully re-merged is a projection + Z ----------


def _inst_o(b: dict) -> tuple:
    """legs: [split apex, merge apex]."""
    a_cap, b_cap, k = b["cap_apex"], b["cap_mid"], b["k"]
    L = WNode(a_cap, (b_cap,) * k)
    B = WNode(b_cap, (b_cap,) * k)  # used apex-outward (merge)
    wires = [_wire(("n", 0, 0), ("out", 0)), _wire(("n", 1, 0), ("out", 1))]
    for i in range(k):
        wires.append(_wire(("n", 0, 1 + i), ("n", 1, 1 + i)))
    lhs = Diagram(MIXED, None, ((0, L), (1, B)), tuple(wires), (), (a_cap, b_cap))
    P = WNode(a_cap, (b_cap,))
    Zk = ZSpider(complex(k), b_cap)
    wires2 = (
        _wire(("n", 0, 0), ("out", 0)),
        _wire(("n", 0, 1), ("n", 1, 0)),
        _wire(("n", 1, 1), ("out", 1)),
    )
    rhs = Diagram(MIXED, None, ((0, P), (1, Zk)), wires2, (), (a_cap, b_cap))
    return lhs, rhs


def _sample_o(rng, flavor, max_cap):
    # every wire of the schema carries the same capacity; the general-capacity
    # variant is a derived lemma, not the axiom
    a_cap = int(rng.integers(1, max_cap + 1))
    return {"flavor": MIXED, "cap_apex": a_cap, "cap_mid": a_cap, "k": 2}


def _match_o_lr(d: Diagram, limit=None):
    out = []
    nodes = d.node_map()
    for (n1, w1), (n2, w2) in itertools.permutations(
        [(i, n) for i, n in sorted(nodes.items()) if isinstance(n, WNode)], 2
    ):
        k = w1.fanout
        if k != 2 or w2.fanout != k:
            continue
        frag = frozenset([n1, n2])
        outs1 = _w_out_wires(d, n1, k)
        # every non-apex wire of n1 must land on a non-apex port of n2
        ok = True
        for w in outs1:
            p = _peer(w, n1) if w else None
            if p is None or p[0] != "n" or p[1] != n2 or p[2] == 0:
                ok = False
                break
        if not ok:
            continue
        a1, a2 = _w_apex_wire(d, n1), _w_apex_wire(d, n2)
        if a1 is None or a2 is None:
            continue
        if not (_crossing(d, frag, a1) and _crossing(d, frag, a2)):
            continue
        if len(set(w1.out_caps)) != 1 or w1.out_caps != w2.out_caps:
            continue
        if w2.in_cap != w1.out_caps[0] or w1.in_cap != w1.out_caps[0]:
            continue  # single capacity throughout the pattern
        b = {"flavor": MIXED, "cap_apex": w1.in_cap, "cap_mid": w1.out_caps[0], "k": k}
        out.append(Match("o", "LR", b, frag, (a1, a2)))
        if n1 > n2:
            continue
    return out


def _match_o_rl(d: Diagram, limit=None):
    """Match the projection + Z(k, 1->1) composite."""
    out = []
    nodes = d.node_map()
    for nid, node in sorted(nodes.items()):
        if not isinstance(node, WNode) or node.fanout != 1:
            continue
        ow = _w_out_wires(d, nid, 1)[0]
        p = _peer(ow, nid)
        if p is None or p[0] != "n":
            continue
        znid = p[1]
        z = nodes.get(znid)
        if not isinstance(z, ZSpider) or d.degree(znid) != 2:
            continue
        k = z.param
        if abs(k.imag) > 1e-12 or abs(k.real - round(k.real)) > 1e-12:
            continue
        k = int(round(k.real))
        if k != 2:
            continue
        if node.in_cap != node.out_caps[0]:
            continue  # single capacity throughout the pattern
        frag = frozenset([nid, znid])
        apex_w = _w_apex_wire(d, nid)
        z_other = [w for w, cnt in _z_free_wires(d, znid) if w != ow]
        if len(z_other) != 1:
            continue
        if not (_crossing(d, frag, apex_w) and _crossing(d, frag, z_other[0])):
            continue
        b = {"flavor": MIXED, "cap_apex": node.in_cap, "cap_mid": node.out_caps[0],
             "k": k}
        out.append(Match("o", "RL", b, frag, (apex_w, z_other[0])))
    return out


# -- (id): 2-ary W-merge with a |0> leg --------------------------------------


def _inst_id(b: dict) -> tuple:
    """legs: [the through wire's far side, the apex side]."""
    flavor = b.get("flavor", QUDIT)
    dim = b.get("dim")
    if flavor == QUDIT:
        cap_a = cap_b = dim - 1
    else:
        cap_a, cap_b = b["cap_a"], b["cap_b"]
    M = WNode(cap_a, (cap_a, cap_b))
    K0 = WNode(cap_b, ())
    wires = (
        _wire(("n", 0, 1), ("out", 0)),
        _wire(("n", 0, 0), ("out", 1)),
        _wire(("n", 0, 2), ("n", 1, 0)),
    )
    lhs = Diagram(flavor, dim, ((0, M), (1, K0)), wires, (), (cap_a, cap_a))
    rhs = Diagram(flavor, dim, (), (_wire(("out", 0), ("out", 1)),), (), (cap_a, cap_a))
    return lhs, rhs


def _sample_id(rng, flavor, dim_or_cap):
    b = {"flavor": flavor}
    if flavor == QUDIT:
        b["dim"] = dim_or_cap
    else:
        a = int(rng.integers(1, dim_or_cap + 1))
        b.update(cap_a=a, cap_b=int(rng.integers(1, a + 1)))
    return b


def _match_id_lr(d: Diagram, limit=None):
    out = []
    nodes = d.node_map()
    for nid, node in sorted(nodes.items()):
        if not isinstance(node, WNode) or node.fanout != 2:
            continue
        outs = _w_out_wires(d, nid, 2)
        apex_w = _w_apex_wire(d, nid)
        if apex_w is None or None in outs:
            continue
        for zero_port, thru_port in ((0, 1), (1, 0)):
            p = _peer(outs[zero_port], nid)
            if p is None or p[0] != "n":
                continue
            kz = nodes.get(p[1])
            if not (isinstance(kz, WNode) and kz.fanout == 0 and p[2] == 0):
                continue
            frag = frozenset([nid, p[1]])
            legs = (outs[thru_port], apex_w)
            if not all(_crossing(d, frag, w) for w in legs):
                continue
            if node.out_caps[thru_port] != node.in_cap:
                continue  # the surviving wire must carry the apex capacity
            b = {"flavor": d.flavor}
            if d.flavor == QUDIT:
                b["dim"] = d.dim
            else:
                b.update(cap_a=node.in_cap, cap_b=node.out_caps[zero_port])
            out.append(Match("id", "LR", b, frag, legs))
    return out


def _match_id_rl(d: Diagram, limit=None):
    """Insert the unit on any wire (one anchor per wire)."""
    out = []
    for w in d.wires:
        cap = d.wire_capacity(w)
        b = {"flavor": d.flavor}
        if d.flavor == QUDIT:
            b["dim"] = d.dim
        else:
            b.update(cap_a=cap, cap_b=cap)
        out.append(Match("id", "RL", b, frozenset(), (w,), ))
    return out


# apply() needs special handling for RL matches with an empty fragment and a
# single leg that is *subdivided* rather than crossed; see _apply_on_wire.


# -- (h): bundle overflow into a Z-spider ------------------------------------


def _inst_h(b: dict) -> tuple:
    """legs: [X apex, X extra outs (p), S other legs (m)]."""
    flavor = b.get("flavor", QUDIT)
    dim = b.get("dim")
    p, n, m, r = b["p"], b["n"], b["m"], complex(b["r"])
    if flavor == QUDIT:
        alpha = dim - 1
        caps_p = (alpha,) * p
        beta = alpha
    else:
        alpha, beta = b["cap_apex"], b["cap_z"]
        caps_p = tuple(b["caps_p"])
    X = WNode(alpha, caps_p + (beta,) * n)
    S = ZSpider(r, beta)
    wires = [_wire(("n", 0, 0), ("out", 0))]
    for i in range(p):
        wires.append(_wire(("n", 0, 1 + i), ("out", 1 + i)))
    for t in range(n):
        wires.append(_wire(("n", 0, 1 + p + t), ("n", 1, t)))
    for j in range(m):
        wires.append(_wire(("n", 1, n + j), ("out", 1 + p + j)))
    lhs = Diagram(
        flavor,
        dim,
        ((0, X), (1, S)),
        tuple(wires),
        (),
        (alpha,) + caps_p + (beta,) * m,
    )
    X2 = WNode(alpha, caps_p)
    nodes2 = [(0, X2)]
    wires2 = [_wire(("n", 0, 0), ("out", 0))]
    for i in range(p):
        wires2.append(_wire(("n", 0, 1 + i), ("out", 1 + i)))
    for j in range(m):
        nodes2.append((1 + j, WNode(beta, ())))
        wires2.append(_wire(("n", 1 + j, 0), ("out", 1 + p + j)))
    rhs = Diagram(
        flavor,
        dim,
        tuple(nodes2),
        tuple(wires2),
        (),
        (alpha,) + caps_p + (beta,) * m,
    )
    return lhs, rhs


def _sample_h(rng, flavor, dim_or_cap):
    m = int(rng.integers(0, 3))
    r = complex(rng.choice(PARAM_POOL))
    if flavor == QUDIT:
        n = dim_or_cap + int(rng.integers(0, 2))
        return {"flavor": flavor, "dim": dim_or_cap, "p": 0, "n": n, "m": m, "r": r}
    alpha = int(rng.integers(1, dim_or_cap + 1))
    beta = int(rng.integers(1, alpha + 1))
    n = alpha + 1 + int(rng.integers(0, 2))
    return {"flavor": flavor, "p": 0, "n": n, "m": m, "r": r,
            "cap_apex": alpha, "cap_z": beta, "caps_p": []}


def _match_h_lr(d: Diagram, limit=None):
    out = []
    nodes = d.node_map()
    for nid, node in sorted(nodes.items()):
        if not isinstance(node, WNode):
            continue
        alpha = node.in_cap
        outs = _w_out_wires(d, nid, node.fanout)
        if None in outs or _w_apex_wire(d, nid) is None:
            continue
        by_z: dict[int, list] = {}
        for w in outs:
            p = _peer(w, nid)
            if p is not None and p[0] == "n" and isinstance(nodes.get(p[1]), ZSpider):
                by_z.setdefault(p[1], []).append(w)
        for znid, bundle in by_z.items():
            n = len(bundle)
            threshold = d.dim if d.flavor == QUDIT else alpha + 1
            if n < threshold:
                continue
            frag = frozenset([nid, znid])
            apex_w = _w_apex_wire(d, nid)
            extra = [w for w in outs if w not in bundle]
            if extra:
                continue
            s_other = [w for w, cnt in _z_free_wires(d, znid) if w not in bundle]
            legs = [apex_w] + extra + s_other
            if any(not _crossing(d, frag, w) for w in legs):
                continue
            z = nodes[znid]
            caps_p = []
            for w in extra:
                for ep in w:
                    if ep[0] == "n" and ep[1] == nid:
                        caps_p.append(node.out_caps[ep[2] - 1])
            b = {"flavor": d.flavor, "p": len(extra), "n": n, "m": len(s_other),
                 "r": z.param}
            if d.flavor == QUDIT:
                b["dim"] = d.dim
            else:
                b.update(cap_apex=alpha, cap_z=z.capacity, caps_p=caps_p)
            out.append(Match("h", "LR", b, frag, tuple(legs)))
    return out


def _match_h_rl(d: Diagram, limit=None):
    """Canonical reverse: grow a fresh saturated bundle off any bare ket node."""
    out = []
    for nid, node in d.nodes:
        if not isinstance(node, WNode) or node.fanout != 0:
            continue
        frag = frozenset([nid])
        apex_w = _w_apex_wire(d, nid)
        if apex_w is None:
            continue
        legs = [apex_w]
        if any(not _crossing(d, frag, w) for w in legs):
            continue
        b = {"flavor": d.flavor, "p": 0, "m": 0, "r": 1.0 + 0j}
        if d.flavor == QUDIT:
            b.update(dim=d.dim, n=d.dim)
        else:
            b.update(cap_apex=node.in_cap, cap_z=1, n=node.in_cap + 1,
                     caps_p=[])
        out.append(Match("h", "RL", b, frag, tuple(legs)))
    return out


# -- (b1): Z-spider / W-node bialgebra ----------------------------------------


def _inst_b1(b: dict) -> tuple:
    """legs: [Z's n other legs..., W's m outputs...]."""
    flavor = b.get("flavor", QUDIT)
    dim = b.get("dim")
    n, m, r = b["n"], b["m"], complex(b["r"])
    if flavor == QUDIT:
        c = dim - 1
        caps_out = (c,) * m
    else:
        c = b["cap"]
        caps_out = tuple(b["caps_out"])
    S = ZSpider(r, c)
    X = WNode(c, caps_out)
    wires = []
    for i in range(n):
        wires.append(_wire(("n", 0, i), ("out", i)))
    wires.append(_wire(("n", 0, n), ("n", 1, 0)))
    for j in range(m):
        wires.append(_wire(("n", 1, 1 + j), ("out", n + j)))
    lhs = Diagram(
        flavor, dim, ((0, S), (1, X)), tuple(wires), (), (c,) * n + caps_out
    )
    # rhs: n W-splits and m Z-spiders, fully bipartite
    nodes2: list = []
    wires2: list = []
    for i in range(n):
        nodes2.append((i, WNode(c, caps_out)))
        wires2.append(_wire(("n", i, 0), ("out", i)))
    for j in range(m):
        cj = c if flavor == QUDIT else caps_out[j]
        nodes2.append((n + j, ZSpider(r, cj)))
        wires2.append(_wire(("n", n + j, n), ("out", n + j)))
        for i in range(n):
            wires2.append(_wire(("n", i, 1 + j), ("n", n + j, i)))
    rhs = Diagram(
        flavor, dim, tuple(nodes2), tuple(wires2), (), (c,) * n + caps_out
    )
    return lhs, rhs


def _sample_b1(rng, flavor, dim_or_cap):
    n, m = int(rng.integers(1, 4)), int(rng.integers(0, 4))
    r = complex(rng.choice(PARAM_POOL))
    b = {"flavor": flavor, "n": n, "m": m, "r": r}
    if flavor == QUDIT:
        b["dim"] = dim_or_cap
    else:
        c = int(rng.integers(1, dim_or_cap + 1))
        b.update(cap=c, caps_out=[int(rng.integers(1, c + 1)) for _ in range(m)])
    return b


def _match_b1_lr(d: Diagram, limit=None):
    out = []
    nodes = d.node_map()
    for w in d.wires:
        a, bb = w
        if a[0] != "n" or bb[0] != "n":
            continue
        for z_ep, w_ep in ((a, bb), (bb, a)):
            if w_ep[2] != 0:
                continue
            znid, wnid = z_ep[1], w_ep[1]
            if znid == wnid:
                continue
            S, X = nodes.get(znid), nodes.get(wnid)
            if not (isinstance(S, ZSpider) and isinstance(X, WNode)):
                continue
            frag = frozenset([znid, wnid])
            z_other = [ww for ww, cnt in _z_free_wires(d, znid) if ww != w]
            x_outs = _w_out_wires(d, wnid, X.fanout)
            if None in x_outs:
                continue
            n = len(z_other)
            if n < 1:
                continue
            legs = z_other + x_outs
            if any(not _crossing(d, frag, ww) for ww in legs):
                continue
            b = {"flavor": d.flavor, "n": n, "m": X.fanout, "r": S.param}
            if d.flavor == QUDIT:
                b["dim"] = d.dim
            else:
                b.update(cap=S.capacity, caps_out=list(X.out_caps))
            out.append(Match("b1", "LR", b, frag, tuple(legs)))
    return out


def _match_b1_rl(d: Diagram, limit=None):
    """Recognize the full bipartite wall of W-splits and Z-spiders."""
    out = []
    nodes = d.node_map()
    w_nodes = {i for i, n in nodes.items() if isinstance(n, WNode)}
    for w1 in sorted(w_nodes):
        X1 = nodes[w1]
        m = X1.fanout
        outs1 = _w_out_wires(d, w1, m)
        if None in outs1 or _w_apex_wire(d, w1) is None:
            continue
        z_ids = []
        ok = True
        for j, ww in enumerate(outs1):
            p = _peer(ww, w1)
            if p is None or p[0] != "n" or not isinstance(nodes.get(p[1]), ZSpider):
                ok = False
                break
            z_ids.append(p[1])
        if not ok or len(set(z_ids)) != m or m == 0:
            continue
        r = nodes[z_ids[0]].param
        n = d.degree(z_ids[0]) - 1
        if n < 1 or any(
            nodes[z].param != r or d.degree(z) != n + 1 for z in z_ids
        ):
            continue
        # collect the W-row from the first Z column
        w_row = set()
        for ww, cnt in _z_free_wires(d, z_ids[0]):
            p = _peer(ww, z_ids[0])
            if p is not None and p[0] == "n" and p[1] in w_nodes:
                w_row.add(p[1])
        w_row.add(w1)
        if len(w_row) != n or w1 not in w_row:
            continue
        w_row_sorted = sorted(w_row)
        # verify complete bipartiteness: each W's m outputs hit all m Z's
        frag = frozenset(w_row_sorted + z_ids)
        ok = True
        for wi in w_row_sorted:
            Xi = nodes[wi]
            if Xi.fanout != m or Xi.out_caps != X1.out_caps or Xi.in_cap != X1.in_cap:
                ok = False
                break
            hit = set()
            for ww in _w_out_wires(d, wi, m):
                p = _peer(ww, wi) if ww else None
                if p is None or p[0] != "n" or p[1] not in z_ids:
                    ok = False
                    break
                hit.add(p[1])
            if not ok or hit != set(z_ids):
                ok = False
                break
        if not ok:
            continue
        apexes = [_w_apex_wire(d, wi) for wi in w_row_sorted]
        z_frees = []
        for z in z_ids:
            fr = [
                ww
                for ww, cnt in _z_free_wires(d, z)
                if _crossing(d, frag, ww)
            ]
            if len(fr) != 1:
                ok = False
                break
            z_frees.append(fr[0])
        if not ok or any(a is None or not _crossing(d, frag, a) for a in apexes):
            continue
        b = {"flavor": d.flavor, "n": n, "m": m, "r": r}
        if d.flavor == QUDIT:
            b["dim"] = d.dim
        else:
            b.update(cap=X1.in_cap, caps_out=list(X1.out_caps))
        out.append(Match("b1", "RL", b, frag, tuple(apexes) + tuple(z_frees)))
        if limit and len(out) >= limit:
            return out
    return out


# -- (b2) qudit: W-split bundles into W-merges --------------------------------


def _inst_b2_qudit(b: dict) -> tuple:
    """legs: [split apex, merge apexes...]."""
    dim = b["dim"]
    cap = dim - 1
    ks = tuple(b["ks"])
    m, K = len(ks), sum(ks)
    L = WNode(cap, (cap,) * K)
    nodes = [(0, L)]
    wires = [_wire(("n", 0, 0), ("out", 0))]
    t = 0
    for i, k in enumerate(ks):
        Bi = WNode(cap, (cap,) * k)
        nodes.append((1 + i, Bi))
        wires.append(_wire(("n", 1 + i, 0), ("out", 1 + i)))
        for j in range(k):
            wires.append(_wire(("n", 0, 1 + t), ("n", 1 + i, 1 + j)))
            t += 1
    lhs = Diagram(QUDIT, dim, tuple(nodes), tuple(wires), (), (cap,) * (1 + m))
    N = WNode(cap, (cap,) * m)
    nodes2 = [(0, N)]
    wires2 = [_wire(("n", 0, 0), ("out", 0))]
    for i, k in enumerate(ks):
        nodes2.append((1 + i, ZSpider(complex(k), cap)))
        wires2.append(_wire(("n", 0, 1 + i), ("n", 1 + i, 0)))
        wires2.append(_wire(("n", 1 + i, 1), ("out", 1 + i)))
    rhs = Diagram(QUDIT, dim, tuple(nodes2), tuple(wires2), (), (cap,) * (1 + m))
    return lhs, rhs


def _sample_b2_qudit(rng, flavor, dim):
    m = int(rng.integers(1, 4))
    ks = [int(rng.integers(1, 4)) for _ in range(m)]
    while sum(ks) > dim:
        ks[int(rng.integers(0, m))] = 1
        if sum(ks) > dim:
            m -= 1
            ks = ks[:m]
    return {"flavor": QUDIT, "dim": dim, "ks": ks}


def _match_b2_qudit_lr(d: Diagram, limit=None):
    out = []
    nodes = d.node_map()
    for nid, node in sorted(nodes.items()):
        if not isinstance(node, WNode) or node.fanout < 1:
            continue
        outs = _w_out_wires(d, nid, node.fanout)
        apex_w = _w_apex_wire(d, nid)
        if apex_w is None or None in outs:
            continue
        groups: dict[int, list] = {}
        ok = True
        for w in outs:
            p = _peer(w, nid)
            if (
                p is None
                or p[0] != "n"
                or p[1] == nid
                or not isinstance(nodes.get(p[1]), WNode)
                or p[2] == 0
            ):
                ok = False
                break
            groups.setdefault(p[1], []).append(w)
        if not ok or not groups:
            continue
        # each target must be fully fed by this split, apexes crossing
        frag = frozenset([nid] + list(groups))
        if not _crossing(d, frag, apex_w):
            continue
        legs = [apex_w]
        ks = []
        for bnid in sorted(groups):
            Bi = nodes[bnid]
            if Bi.fanout != len(groups[bnid]):
                ok = False
                break
            aw = _w_apex_wire(d, bnid)
            if aw is None or not _crossing(d, frag, aw):
                ok = False
                break
            legs.append(aw)
            ks.append(len(groups[bnid]))
        if not ok or sum(ks) > d.dim:
            continue
        b = {"flavor": QUDIT, "dim": d.dim, "ks": ks}
        out.append(Match("b2", "LR", b, frozenset(frag), tuple(legs)))
    return out


def _match_b2_qudit_rl(d: Diagram, limit=None):
    """Recognize W-node + integer Z blockers on every output."""
    out = []
    nodes = d.node_map()
    for nid, node in sorted(nodes.items()):
        if not isinstance(node, WNode) or node.fanout < 1:
            continue
        outs = _w_out_wires(d, nid, node.fanout)
        apex_w = _w_apex_wire(d, nid)
        if apex_w is None or None in outs:
            continue
        ks, znids, zlegs = [], [], []
        ok = True
        for w in outs:
            p = _peer(w, nid)
            if p is None or p[0] != "n":
                ok = False
                break
            z = nodes.get(p[1])
            if not isinstance(z, ZSpider) or d.degree(p[1]) != 2:
                ok = False
                break
            v = z.param
            if abs(v.imag) > 1e-12 or abs(v.real - round(v.real)) > 1e-12:
                ok = False
                break
            k = int(round(v.real))
            if k < 1 or k > 6:
                ok = False
                break
            other = [ww for ww, cnt in _z_free_wires(d, p[1]) if ww != w]
            if len(other) != 1:
                ok = False
                break
            ks.append(k)
            znids.append(p[1])
            zlegs.append(other[0])
        if not ok or sum(ks) > d.dim or len(set(znids)) != len(znids):
            continue
        frag = frozenset([nid] + znids)
        legs = [apex_w] + zlegs
        if any(not _crossing(d, frag, w) for w in legs):
            continue
        b = {"flavor": QUDIT, "dim": d.dim, "ks": ks}
        out.append(Match("b2", "RL", b, frag, tuple(legs)))
    return out


# -- (b2) mixed: merge-then-split becomes a bipartite wall --------------------


def _inst_b2_mixed(b: dict) -> tuple:
    """legs: [merge's n inputs..., split's m outputs...]."""
    caps_in = tuple(b["caps_in"])
    caps_out = tuple(b["caps_out"])
    c = b["cap_mid"]
    n, m = len(caps_in), len(caps_out)
    A = WNode(c, caps_in)  # apex toward the middle wire (merge)
    B = WNode(c, caps_out)  # apex toward the middle wire (split)
    wires = [_wire(("n", 0, 0), ("n", 1, 0))]
    for i in range(n):
        wires.append(_wire(("n", 0, 1 + i), ("out", i)))
    for j in range(m):
        wires.append(_wire(("n", 1, 1 + j), ("out", n + j)))
    lhs = Diagram(MIXED, None, ((0, A), (1, B)), tuple(wires), (), caps_in + caps_out)
    # rhs: split_i (apex = input leg i) and merge_j (apex = output leg j)
    nodes2: list = []
    wires2: list = []
    for i in range(n):
        caps_row = tuple(min(caps_in[i], caps_out[j]) for j in range(m))
        nodes2.append((i, WNode(caps_in[i], caps_row)))
        wires2.append(_wire(("n", i, 0), ("out", i)))
    for j in range(m):
        caps_col = tuple(min(caps_in[i], caps_out[j]) for i in range(n))
        nodes2.append((n + j, WNode(caps_out[j], caps_col)))
        wires2.append(_wire(("n", n + j, 0), ("out", n + j)))
        for i in range(n):
            wires2.append(_wire(("n", i, 1 + j), ("n", n + j, 1 + i)))
    rhs = Diagram(MIXED, None, tuple(nodes2), tuple(wires2), (), caps_in + caps_out)
    return lhs, rhs


def _sample_b2_mixed(rng, flavor, max_cap):
    n, m = int(rng.integers(0, 3)), int(rng.integers(0, 3))
    caps_in = [int(rng.integers(1, max_cap + 1)) for _ in range(n)]
    caps_out = [int(rng.integers(1, max_cap + 1)) for _ in range(m)]
    lo = min(sum(caps_in), sum(caps_out))
    hi = max(max_cap, lo)
    c = int(rng.integers(max(lo, 1), hi + 1)) if hi >= max(lo, 1) else lo
    c = max(c, lo, 1)
    c = max(c, max(caps_in, default=1), max(caps_out, default=1))
    return {"flavor": MIXED, "caps_in": caps_in, "caps_out": caps_out, "cap_mid": c}


def _match_b2_mixed_lr(d: Diagram, limit=None):
    out = []
    nodes = d.node_map()
    for w in d.wires:
        a, bb = w
        if a[0] != "n" or bb[0] != "n":
            continue
        if a[2] != 0 or bb[2] != 0 or a[1] == bb[1]:
            continue  # need apex-to-apex
        n1, n2 = a[1], bb[1]
        A, B = nodes.get(n1), nodes.get(n2)
        if not (isinstance(A, WNode) and isinstance(B, WNode)):
            continue
        c = A.in_cap
        if B.in_cap != c:
            continue
        if c < min(sum(A.out_caps), sum(B.out_caps)):
            continue
        frag = frozenset([n1, n2])
        legs_a = _w_out_wires(d, n1, A.fanout)
        legs_b = _w_out_wires(d, n2, B.fanout)
        legs = legs_a + legs_b
        if any(ww is None or not _crossing(d, frag, ww) for ww in legs):
            continue
        b = {"flavor": MIXED, "caps_in": list(A.out_caps),
             "caps_out": list(B.out_caps), "cap_mid": c}
        out.append(Match("b2", "LR", b, frag, tuple(legs)))
    return out


def _match_b2_mixed_rl(d: Diagram, limit=None):
    """Canonical reverse: materialize the degenerate closed pair."""
    b = {"flavor": MIXED, "caps_in": [], "caps_out": [], "cap_mid": 1}
    return [Match("b2", "RL", b, frozenset(), ())]


# -- (+): parameter addition ---------------------------------------------------


def _inst_plus(b: dict) -> tuple:
    """legs: [split apex, merge apex]."""
    flavor = b.get("flavor", QUDIT)
    dim = b.get("dim")
    cap = (dim - 1) if flavor == QUDIT else b["cap"]
    r, s = complex(b["r"]), complex(b["s"])
    X = WNode(cap, (cap, cap))
    Y = WNode(cap, (cap, cap))
    Zr = ZSpider(r, cap)
    Zs = ZSpider(s, cap)
    wires = (
        _wire(("n", 0, 0), ("out", 0)),
        _wire(("n", 1, 0), ("out", 1)),
        _wire(("n", 0, 1), ("n", 2, 0)),
        _wire(("n", 2, 1), ("n", 1, 1)),
        _wire(("n", 0, 2), ("n", 3, 0)),
        _wire(("n", 3, 1), ("n", 1, 2)),
    )
    lhs = Diagram(
        flavor, dim, ((0, X), (1, Y), (2, Zr), (3, Zs)), wires, (), (cap, cap)
    )
    Zrs = ZSpider(r + s, cap)
    rhs = Diagram(
        flavor,
        dim,
        ((0, Zrs),),
        (_wire(("n", 0, 0), ("out", 0)), _wire(("n", 0, 1), ("out", 1))),
        (),
        (cap, cap),
    )
    return lhs, rhs


def _sample_plus(rng, flavor, dim_or_cap):
    b = {"flavor": flavor, "r": complex(rng.choice(PARAM_POOL)),
         "s": complex(rng.choice(PARAM_POOL))}
    if flavor == QUDIT:
        b["dim"] = dim_or_cap
    else:
        b["cap"] = int(rng.integers(1, dim_or_cap + 1))
    return b


def _match_plus_lr(d: Diagram, limit=None):
    out = []
    nodes = d.node_map()
    w_ids = [i for i, n in sorted(nodes.items()) if isinstance(n, WNode)
             and n.fanout == 2]
    for nx, ny in itertools.permutations(w_ids, 2):
        X, Y = nodes[nx], nodes[ny]
        outs_x = _w_out_wires(d, nx, 2)
        outs_y = _w_out_wires(d, ny, 2)
        if None in outs_x or None in outs_y:
            continue
        # each of X's outputs must reach a distinct 2-ary Z, whose other
        # wire lands on a non-apex port of Y
        mids = []
        ok = True
        for w in outs_x:
            p = _peer(w, nx)
            if p is None or p[0] != "n":
                ok = False
                break
            z = nodes.get(p[1])
            if not isinstance(z, ZSpider) or d.degree(p[1]) != 2:
                ok = False
                break
            others = [ww for ww, cnt in _z_free_wires(d, p[1]) if ww != w]
            if len(others) != 1:
                ok = False
                break
            q = _peer(others[0], p[1])
            if q is None or q[0] != "n" or q[1] != ny or q[2] == 0:
                ok = False
                break
            mids.append(p[1])
        if not ok or len(set(mids)) != 2:
            continue
        frag = frozenset([nx, ny] + mids)
        ax, ay = _w_apex_wire(d, nx), _w_apex_wire(d, ny)
        if ax is None or ay is None:
            continue
        if not (_crossing(d, frag, ax) and _crossing(d, frag, ay)):
            continue
        if d.flavor == MIXED:
            caps = {X.in_cap, Y.in_cap, *X.out_caps, *Y.out_caps}
            if len(caps) != 1:
                continue
        b = {"flavor": d.flavor, "r": nodes[mids[0]].param,
             "s": nodes[mids[1]].param}
        if d.flavor == QUDIT:
            b["dim"] = d.dim
        else:
            b["cap"] = X.in_cap
        out.append(Match("plus", "LR", b, frag, (ax, ay)))
        if nx > ny:
            continue
    return out


def _match_plus_rl(d: Diagram, limit=None):
    """Split any 2-ary Z-spider's parameter as r + 0."""
    out = []
    for nid, node in d.nodes:
        if not isinstance(node, ZSpider) or d.degree(nid) != 2:
            continue
        frag = frozenset([nid])
        legs = [w for w, cnt in _z_free_wires(d, nid) if _crossing(d, frag, w)]
        if len(legs) != 2:
            continue
        b = {"flavor": d.flavor, "r": node.param, "s": 0j}
        if d.flavor == QUDIT:
            b["dim"] = d.dim
        else:
            b["cap"] = node.capacity
        out.append(Match("plus", "RL", b, frag, tuple(legs)))
    return out


# -- (e) qudit: the 1-leg Z(1) effect erases a ket tree ------------------------


def _inst_e(b: dict) -> tuple:
    dim, k = b["dim"], b["k"]
    zeff = make_z_spider(1.0, 0, 1, dim=dim)  # 1-leg Z, exposed
    ket = derived_ket(k, flavor=QUDIT, dim=dim)
    lhs = compose_seq(ket, compose_seq(identity(1, dim=dim), _as_effect(zeff)))
    rhs = empty_diagram(QUDIT, dim)
    return lhs, rhs


def _as_effect(state: Diagram) -> Diagram:
    """Turn a 0->1 state-form diagram into the 1->0 effect with the same
    node data (boundary transpose, no conjugation)."""
    wires = []
    for a, b in state.wires:
        def flip(ep):
            return ("in", ep[1]) if ep[0] == "out" else ep
        wires.append(_wire(flip(a), flip(b)))
    return dc_replace(state, wires=tuple(wires), in_caps=state.out_caps, out_caps=())


def _sample_e(rng, flavor, dim):
    return {"flavor": QUDIT, "dim": dim, "k": int(rng.integers(1, dim))}


def _match_e_lr(d: Diagram, limit=None):
    out = []
    nodes = d.node_map()
    for nid, node in sorted(nodes.items()):
        if not isinstance(node, ZSpider):
            continue
        if abs(node.param - 1.0) > 1e-12:
            continue
        wires = _node_wires(d, nid)
        if len(wires) != 1 or d.degree(nid) != 1:
            continue
        p = _peer(wires[0], nid)
        if p is None or p[0] != "n":
            continue
        tree = match_ket_tree(d, wires[0], p[1])
        if tree is None:
            continue
        k, tree_nodes = tree
        if not (1 <= k <= (d.dim - 1 if d.flavor == QUDIT else 10**9)):
            continue
        frag = tree_nodes | frozenset([nid])
        # the component must be closed: every wire of every tree node is
        # internal to the fragment
        closed = all(
            not _crossing(d, frag, w)
            for t in frag
            for w in _node_wires(d, t)
        )
        if not closed:
            continue
        b = {"flavor": QUDIT, "dim": d.dim, "k": k}
        out.append(Match("e", "LR", b, frag, ()))
    return out


def _match_e_rl(d: Diagram, limit=None):
    """Materialize the scalar-1 closed pair (k = 1) once per diagram."""
    if d.flavor != QUDIT:
        return []
    b = {"flavor": QUDIT, "dim": d.dim, "k": 1}
    return [Match("e", "RL", b, frozenset(), ())]


# -- (cp): 3-ary Z-spider copies |1> -------------------------------------------


def _inst_cp(b: dict) -> tuple:
    """legs: [the two copy outputs]."""
    flavor = b.get("flavor", QUDIT)
    dim = b.get("dim")
    cap = (dim - 1) if flavor == QUDIT else b["cap"]
    r = complex(b["r"])
    S = ZSpider(r, cap)
    K = KetOne(cap) if flavor == MIXED else KetOne(dim - 1)
    wires = (
        _wire(("n", 0, 0), ("n", 1, 0)),
        _wire(("n", 0, 1), ("out", 0)),
        _wire(("n", 0, 2), ("out", 1)),
    )
    lhs = Diagram(flavor, dim, ((0, S), (1, K)), wires, (), (cap, cap))
    rhs = Diagram(
        flavor,
        dim,
        ((0, KetOne(cap)), (1, KetOne(cap)), (2, GlobalScalar(r))),
        (_wire(("n", 0, 0), ("out", 0)), _wire(("n", 1, 0), ("out", 1))),
        (),
        (cap, cap),
    )
    return lhs, rhs


def _sample_cp(rng, flavor, dim_or_cap):
    b = {"flavor": flavor, "r": complex(rng.choice(PARAM_POOL))}
    if flavor == QUDIT:
        b["dim"] = dim_or_cap
    else:
        b["cap"] = int(rng.integers(1, dim_or_cap + 1))
    return b


def _match_cp_lr(d: Diagram, limit=None):
    out = []
    nodes = d.node_map()
    for nid, node in sorted(nodes.items()):
        if not isinstance(node, ZSpider) or d.degree(nid) != 3:
            continue
        wires = _node_wires(d, nid)
        if len(wires) != 3:
            continue  # a self-loop would make degree 3 with 2 wires
        for kw in wires:
            p = _peer(kw, nid)
            if p is None or p[0] != "n" or not isinstance(nodes.get(p[1]), KetOne):
                continue
            frag = frozenset([nid, p[1]])
            legs = [w for w in wires if w != kw]
            if any(not _crossing(d, frag, w) for w in legs):
                continue
            b = {"flavor": d.flavor, "r": node.param}
            if d.flavor == QUDIT:
                b["dim"] = d.dim
            else:
                b["cap"] = node.capacity
            out.append(Match("cp", "LR", b, frag, tuple(legs)))
    return out


def _match_cp_rl(d: Diagram, limit=None):
    """Fuse a floating scalar with two KetOne states back into a spider."""
    out = []
    nodes = d.node_map()
    scalars = [i for i, n in sorted(nodes.items()) if isinstance(n, GlobalScalar)]
    kets = [i for i, n in sorted(nodes.items()) if isinstance(n, KetOne)]
    for sc in scalars[:2]:
        for k1, k2 in itertools.combinations(kets, 2):
            if nodes[k1].capacity != nodes[k2].capacity:
                continue
            frag = frozenset([sc, k1, k2])
            legs = [_node_wires(d, k1)[0], _node_wires(d, k2)[0]]
            if any(not _crossing(d, frag, w) for w in legs):
                continue
            b = {"flavor": d.flavor, "r": nodes[sc].value}
            if d.flavor == QUDIT:
                b["dim"] = d.dim
            else:
                b["cap"] = nodes[k1].capacity
            out.append(Match("cp", "RL", b, frag, tuple(legs)))
            if limit and len(out) >= limit:
                return out
    return out


# -- (loop): self-loop removal next to a |1> leg --------------------------------


def _inst_loop(b: dict) -> tuple:
    """legs: [the n free legs]."""
    flavor = b.get("flavor", QUDIT)
    dim = b.get("dim")
    cap = (dim - 1) if flavor == QUDIT else b["cap"]
    n, r = b["n"], complex(b["r"])
    S = ZSpider(r, cap)
    K = KetOne(cap)
    wires = [
        _wire(("n", 0, 0), ("n", 0, 1)),  # self-loop
        _wire(("n", 0, 2), ("n", 1, 0)),
    ]
    for i in range(n):
        wires.append(_wire(("n", 0, 3 + i), ("out", i)))
    lhs = Diagram(flavor, dim, ((0, S), (1, K)), tuple(wires), (), (cap,) * n)
    S2 = ZSpider(r, cap)
    wires2 = [_wire(("n", 0, 0), ("n", 1, 0))]
    for i in range(n):
        wires2.append(_wire(("n", 0, 1 + i), ("out", i)))
    rhs = Diagram(flavor, dim, ((0, S2), (1, K)), tuple(wires2), (), (cap,) * n)
    return lhs, rhs


def _sample_loop(rng, flavor, dim_or_cap):
    b = {"flavor": flavor, "n": int(rng.integers(0, 4)),
         "r": complex(rng.choice(PARAM_POOL))}
    if flavor == QUDIT:
        b["dim"] = dim_or_cap
    else:
        b["cap"] = int(rng.integers(1, dim_or_cap + 1))
    return b


def _loop_wires(d: Diagram, nid: int) -> list:
    return [
        w
        for w in d.wires
        if sum(1 for ep in w if ep[0] == "n" and ep[1] == nid) == 2
    ]


def _match_loop_lr(d: Diagram, limit=None):
    out = []
    nodes = d.node_map()
    for nid, node in sorted(nodes.items()):
        if not isinstance(node, ZSpider):
            continue
        loops = _loop_wires(d, nid)
        if len(loops) != 1:
            continue
        plain = [w for w in _node_wires(d, nid) if w not in loops]
        ket_w = None
        for w in plain:
            p = _peer(w, nid)
            if p is not None and p[0] == "n" and isinstance(nodes.get(p[1]), KetOne):
                ket_w = w
                break
        if ket_w is None:
            continue
        knid = _peer(ket_w, nid)[1]
        frag = frozenset([nid, knid])
        legs = [w for w in plain if w != ket_w]
        if any(not _crossing(d, frag, w) for w in legs):
            continue
        b = {"flavor": d.flavor, "n": len(legs), "r": node.param}
        if d.flavor == QUDIT:
            b["dim"] = d.dim
        else:
            b["cap"] = node.capacity
        out.append(Match("loop", "LR", b, frag, tuple(legs)))
    return out


def _match_loop_rl(d: Diagram, limit=None):
    """Add a self-loop to any Z-spider already holding a |1> leg."""
    out = []
    nodes = d.node_map()
    for nid, node in sorted(nodes.items()):
        if not isinstance(node, ZSpider) or _loop_wires(d, nid):
            continue
        ket_w, knid = None, None
        for w in _node_wires(d, nid):
            p = _peer(w, nid)
            if p is not None and p[0] == "n" and isinstance(nodes.get(p[1]), KetOne):
                ket_w, knid = w, p[1]
                break
        if ket_w is None:
            continue
        frag = frozenset([nid, knid])
        legs = [w for w in _node_wires(d, nid) if w != ket_w]
        if any(not _crossing(d, frag, w) for w in legs):
            continue
        b = {"flavor": d.flavor, "n": len(legs), "r": node.param}
        if d.flavor == QUDIT:
            b["dim"] = d.dim
        else:
            b["cap"] = node.capacity
        out.append(Match("loop", "RL", b, frag, tuple(legs)))
    return out


# -- (u): Z state = capped macro at full capacity -------------------------------


def _inst_u(b: dict) -> tuple:
    """legs: [the state's wire]."""
    flavor = b.get("flavor", QUDIT)
    r = complex(b["r"])
    if flavor == QUDIT:
        dim = b["dim"]
        lhs = make_z_spider(r, 0, 1, dim=dim)
        rhs = restricted_z_spider(dim - 1, r, 0, 1, dim)
        return lhs, rhs
    cap = b["cap"]
    lhs = make_z_spider(r, 0, 1, capacity=cap)
    rhs = _mixed_restricted_state(r, cap)
    return lhs, rhs


def _mixed_restricted_state(r: complex, a: int) -> Diagram:
    """Mixed analogue of the capped-spider gadget for a 0->1 spider at
    full capacity a: 1/a! . (loop-effect o W-split o (ket_a tensor Z_r))."""
    spider = ZSpider(complex(r), a)
    split = WNode(a, (a, a))
    looped = ZSpider(1.0 + 0j, a)
    nodes = [(0, spider), (1, split), (2, looped)]
    wires = [
        _wire(("n", 0, 0), ("out", 0)),
        _wire(("n", 0, 1), ("n", 1, 1)),
        _wire(("n", 2, 0), ("n", 2, 1)),
        _wire(("n", 1, 2), ("n", 2, 2)),
    ]
    base = Diagram(MIXED, None, tuple(nodes), tuple(wires), (), (a,))
    ket = derived_ket(a, a, flavor=MIXED)
    off = base.max_node_id() + 1
    ketr = ket.relabeled(off)
    ket_out = None
    extra = []
    for w in ketr.wires:
        x, y = w
        if x == ("out", 0):
            ket_out = y
        elif y == ("out", 0):
            ket_out = x
        else:
            extra.append(w)
    all_nodes = base.nodes + ketr.nodes
    sid = max(i for i, _ in all_nodes) + 1
    all_nodes = all_nodes + ((sid, GlobalScalar(1.0 / math.factorial(a))),)
    all_wires = list(base.wires) + extra + [_wire(ket_out, ("n", 1, 0))]
    return Diagram(MIXED, None, all_nodes, tuple(all_wires), (), (a,))


def _sample_u(rng, flavor, dim_or_cap):
    b = {"flavor": flavor, "r": complex(rng.choice(PARAM_POOL))}
    if flavor == QUDIT:
        b["dim"] = dim_or_cap
    else:
        b["cap"] = int(rng.integers(1, dim_or_cap + 1))
    return b


def _match_u_lr(d: Diagram, limit=None):
    out = []
    for nid, node in d.nodes:
        if not isinstance(node, ZSpider) or d.degree(nid) != 1:
            continue
        frag = frozenset([nid])
        legs = _node_wires(d, nid)
        if len(legs) != 1 or not _crossing(d, frag, legs[0]):
            continue
        b = {"flavor": d.flavor, "r": node.param}
        if d.flavor == QUDIT:
            b["dim"] = d.dim
        else:
            b["cap"] = node.capacity
        out.append(Match("u", "LR", b, frag, tuple(legs)))
    return out


def _match_u_rl(d: Diagram, limit=None):
    """Recognize the full-capacity macro: spider + split + looped Z + ket
    tree + matching scalar."""
    out = []
    nodes = d.node_map()
    for wnid, wnode in sorted(nodes.items()):
        if not isinstance(wnode, WNode) or wnode.fanout != 2:
            continue
        apex_w = _w_apex_wire(d, wnid)
        if apex_w is None:
            continue
        p = _peer(apex_w, wnid)
        if p is None or p[0] != "n":
            continue
        tree = match_ket_tree(d, apex_w, p[1])
        if tree is None:
            continue
        k, tree_nodes = tree
        full = d.dim - 1 if d.flavor == QUDIT else None
        o1, o2 = _w_out_wires(d, wnid, 2)
        for spider_w, loop_w in ((o1, o2), (o2, o1)):
            sp = _peer(spider_w, wnid)
            lp = _peer(loop_w, wnid)
            if sp is None or lp is None or sp[0] != "n" or lp[0] != "n":
                continue
            S, LZ = nodes.get(sp[1]), nodes.get(lp[1])
            if not (isinstance(S, ZSpider) and isinstance(LZ, ZSpider)):
                continue
            if d.flavor == QUDIT and k != full:
                continue
            if d.flavor == MIXED and k != S.capacity:
                continue
            if abs(LZ.param - 1.0) > 1e-12:
                continue
            if d.degree(lp[1]) != 3 or len(_loop_wires(d, lp[1])) != 1:
                continue
            if d.degree(sp[1]) != 2:
                continue
            # a floating scalar 1/k! must be present
            want = 1.0 / math.factorial(k)
            sc = None
            for scid, scn in sorted(nodes.items()):
                if isinstance(scn, GlobalScalar) and abs(scn.value - want) < 1e-12:
                    sc = scid
                    break
            if sc is None:
                continue
            frag = tree_nodes | frozenset([wnid, sp[1], lp[1], sc])
            legs = [w for w, cnt in _z_free_wires(d, sp[1]) if w != spider_w]
            if len(legs) != 1 or not _crossing(d, frag, legs[0]):
                continue
            b = {"flavor": d.flavor, "r": S.param}
            if d.flavor == QUDIT:
                b["dim"] = d.dim
            else:
                b["cap"] = S.capacity
            out.append(Match("u", "RL", b, frag, tuple(legs)))
    return out


# -- (i), mixed only: |1> factors through a capacity-1 wire ---------------------


def _inst_i(b: dict) -> tuple:
    """legs: [the ket's wire]."""
    a = b["cap"]
    lhs = make_ket_one(capacity=a)
    P = WNode(a, (1,))
    rhs = Diagram(
        MIXED,
        None,
        ((0, KetOne(1)), (1, P)),
        (_wire(("n", 0, 0), ("n", 1, 1)), _wire(("n", 1, 0), ("out", 0))),
        (),
        (a,),
    )
    return lhs, rhs


def _sample_i(rng, flavor, max_cap):
    return {"flavor": MIXED, "cap": int(rng.integers(2, max(max_cap, 2) + 1))}


def _match_i_lr(d: Diagram, limit=None):
    out = []
    for nid, node in d.nodes:
        if not isinstance(node, KetOne) or node.capacity == 1:
            continue
        frag = frozenset([nid])
        legs = _node_wires(d, nid)
        if len(legs) != 1 or not _crossing(d, frag, legs[0]):
            continue
        out.append(Match("i", "LR", {"flavor": MIXED, "cap": node.capacity},
                         frag, tuple(legs)))
    return out


def _match_i_rl(d: Diagram, limit=None):
    out = []
    nodes = d.node_map()
    for nid, node in sorted(nodes.items()):
        if not isinstance(node, WNode) or node.fanout != 1 or node.out_caps != (1,):
            continue
        ow = _w_out_wires(d, nid, 1)[0]
        p = _peer(ow, nid)
        if p is None or p[0] != "n" or not isinstance(nodes.get(p[1]), KetOne):
            continue
        if nodes[p[1]].capacity != 1 or node.in_cap == 1:
            continue
        frag = frozenset([nid, p[1]])
        apex_w = _w_apex_wire(d, nid)
        if apex_w is None or not _crossing(d, frag, apex_w):
            continue
        out.append(Match("i", "RL", {"flavor": MIXED, "cap": node.in_cap},
                         frag, (apex_w,)))
    return out


# -- structural rules -----------------------------------------------------------


def _inst_scalar_merge(b: dict) -> tuple:
    flavor = b.get("flavor", QUDIT)
    dim = b.get("dim")
    r, s = complex(b["r"]), complex(b["s"])
    lhs = Diagram(
        flavor, dim, ((0, GlobalScalar(r)), (1, GlobalScalar(s))), (), (), ()
    )
    rhs = Diagram(flavor, dim, ((0, GlobalScalar(r * s)),), (), (), ())
    return lhs, rhs


def _sample_scalar_merge(rng, flavor, dim_or_cap):
    b = {"flavor": flavor, "r": complex(rng.choice(PARAM_POOL)),
         "s": complex(rng.choice(PARAM_POOL))}
    if flavor == QUDIT:
        b["dim"] = dim_or_cap
    return b


def _match_scalar_merge_lr(d: Diagram, limit=None):
    scalars = [i for i, n in sorted(d.nodes) if isinstance(n, GlobalScalar)]
    out = []
    nodes = d.node_map()
    for i, j in itertools.combinations(scalars, 2):
        b = {"flavor": d.flavor, "r": nodes[i].value, "s": nodes[j].value}
        if d.flavor == QUDIT:
            b["dim"] = d.dim
        out.append(Match("scalar-merge", "LR", b, frozenset([i, j]), ()))
        break  # one canonical merge at a time
    return out


def _match_scalar_merge_rl(d: Diagram, limit=None):
    out = []
    for i, n in sorted(d.nodes):
        if isinstance(n, GlobalScalar):
            b = {"flavor": d.flavor, "r": n.value, "s": 1.0 + 0j}
            if d.flavor == QUDIT:
                b["dim"] = d.dim
            out.append(Match("scalar-merge", "RL", b, frozenset([i]), ()))
            break
    return out


def _inst_flex(b: dict) -> tuple:
    """Leg permutation is definitional in this representation."""
    flavor = b.get("flavor", QUDIT)
    dim = b.get("dim")
    cap = (dim - 1) if flavor == QUDIT else b.get("cap", 1)
    lhs = make_z_spider(b.get("r", 1.0), 0, 2,
                        **({"dim": dim} if flavor == QUDIT else {"capacity": cap}))
    return lhs, lhs


def _sample_flex(rng, flavor, dim_or_cap):
    b = {"flavor": flavor, "r": complex(rng.choice(PARAM_POOL))}
    if flavor == QUDIT:
        b["dim"] = dim_or_cap
    else:
        b["cap"] = int(rng.integers(1, dim_or_cap + 1))
    return b


def _match_none(d: Diagram, limit=None):
    return []


# ---------------------------------------------------------------------------
# registry
# ---------------------------------------------------------------------------


def _schema(rule_id, flavor, desc, inst, sample, mlr, mrl, sweep=True):
    return RuleSchema(rule_id, flavor, desc, inst, sample, mlr, mrl, sweep)


RULES: dict[tuple[str, str], RuleSchema] = {}

for _fl in (QUDIT, MIXED):
    RULES[("s", _fl)] = _schema(
        "s", _fl, "adjacent Z-spiders fuse, parameters multiply",
        _inst_s, _sample_s, _match_s_lr, _match_s_rl)
    RULES[("a", _fl)] = _schema(
        "a", _fl, "W-node into another's input port flattens",
        _inst_a, _sample_a, _match_a_lr, _match_a_rl)
    RULES[("id", _fl)] = _schema(
        "id", _fl, "2-ary W-merge with a |0> leg is a wire",
        _inst_id, _sample_id, _match_id_lr, _match_id_rl)
    RULES[("h", _fl)] = _schema(
        "h", _fl, "overflowing bundle into a Z-spider forces the vacuum",
        _inst_h, _sample_h, _match_h_lr, _match_h_rl)
    RULES[("b1", _fl)] = _schema(
        "b1", _fl, "Z-spider and W-node commute (bialgebra)",
        _inst_b1, _sample_b1, _match_b1_lr, _match_b1_rl)
    RULES[("plus", _fl)] = _schema(
        "plus", _fl, "parallel 1-ary Z-spiders between W-nodes add",
        _inst_plus, _sample_plus, _match_plus_lr, _match_plus_rl)
    RULES[("cp", _fl)] = _schema(
        "cp", _fl, "3-ary Z-spider copies |1>, emitting its parameter",
        _inst_cp, _sample_cp, _match_cp_lr, _match_cp_rl)
    RULES[("loop", _fl)] = _schema(
        "loop", _fl, "Z self-loop collapses beside a |1> leg",
        _inst_loop, _sample_loop, _match_loop_lr, _match_loop_rl)
    RULES[("u", _fl)] = _schema(
        "u", _fl, "1-ary Z state equals its capped macro at full capacity",
        _inst_u, _sample_u, _match_u_lr, _match_u_rl)
    RULES[("scalar-merge", _fl)] = _schema(
        "scalar-merge", _fl, "floating scalars multiply",
        _inst_scalar_merge, _sample_scalar_merge,
        _match_scalar_merge_lr, _match_scalar_merge_rl, sweep=False)
    RULES[("flex-permute", _fl)] = _schema(
        "flex-permute", _fl, "leg permutation (definitional no-op)",
        _inst_flex, _sample_flex, _match_none, _match_none, sweep=False)

RULES[("b2", QUDIT)] = _schema(
    "b2", QUDIT, "W-split bundles into W-merges = W-node + Z blockers",
    _inst_b2_qudit, _sample_b2_qudit, _match_b2_qudit_lr, _match_b2_qudit_rl)
RULES[("b2", MIXED)] = _schema(
    "b2", MIXED, "W-merge then W-split becomes a bipartite wall",
    _inst_b2_mixed, _sample_b2_mixed, _match_b2_mixed_lr, _match_b2_mixed_rl)
RULES[("e", QUDIT)] = _schema(
    "e", QUDIT, "1-leg Z(1) effect erases a nonzero ket tree",
    _inst_e, _sample_e, _match_e_lr, _match_e_rl)
RULES[("o", MIXED)] = _schema(
    "o", MIXED, "fully re-merged W-split is a projection + Z blocker",
    _inst_o, _sample_o, _match_o_lr, _match_o_rl)
RULES[("i", MIXED)] = _schema(
    "i", MIXED, "|1> on a wide wire factors through capacity 1",
    _inst_i, _sample_i, _match_i_lr, _match_i_rl)


def rule_ids(flavor: str) -> tuple:
    return QUDIT_RULE_IDS if flavor == QUDIT else MIXED_RULE_IDS


def get_rule(rule_id: str, flavor: str) -> RuleSchema:
    try:
        return RULES[(rule_id, flavor)]
    except KeyError:
        raise KeyError(f"no rule {rule_id!r} in flavor {flavor!r}") from None


# ---------------------------------------------------------------------------
# matching / applying
# ---------------------------------------------------------------------------


def find_matches(d: Diagram, rule_id: str, direction: str = "LR", limit=None):
    """All located occurrences of a rule side in ``d`` (sound, not
    necessarily exhaustive)."""
    rule = get_rule(rule_id, d.flavor)
    matcher = rule.matcher_lr if direction == "LR" else rule.matcher_rl
    matches = matcher(d, limit)
    return matches[:limit] if limit else matches


def apply(d: Diagram, match: Match, trace: RewriteTrace | None = None):
    """Rewrite one occurrence; returns the new diagram (and extended trace
    when one is passed in)."""
    rule = get_rule(match.rule_id, d.flavor)
    lhs, rhs = rule.instantiate(match.binding)
    repl = rhs if match.direction == "LR" else lhs
    if match.rule_id == "id" and match.direction == "RL":
        new = _apply_on_wire(d, match, repl)
    else:
        new = replace_fragment(d, match.frag_nodes, match.legs, repl)
    errs = validate(new)
    if errs:
        raise ValueError(f"rewrite produced invalid diagram: {errs}")
    if trace is not None:
        step = TraceStep(match.rule_id, match.direction, dict(match.binding),
                         tuple(sorted(match.frag_nodes)))
        return new, trace.extended(step)
    return new


def _apply_on_wire(d: Diagram, match: Match, repl: Diagram) -> Diagram:
    """Subdivide a single wire with a 2-legged replacement fragment."""
    (w,) = match.legs
    a, b = w
    kept = [x for x in d.wires if x != w]
    off = d.max_node_id() + 1
    replr = repl.relabeled(off)
    added = []
    for x, y in replr.wires:
        def mp(ep):
            if ep[0] == "out":
                return a if ep[1] == 0 else b
            return ep
        added.append(_wire(mp(x), mp(y)))
    return dc_replace(
        d,
        nodes=tuple(sorted(d.nodes + replr.nodes)),
        wires=tuple(kept) + tuple(added),
        loops=d.loops + replr.loops,
    )


# ---------------------------------------------------------------------------
# soundness sweeps
# ---------------------------------------------------------------------------


def check_rule_soundness(
    rule_id: str,
    flavor: str,
    *,
    dims: Sequence[int] = (2, 3, 4, 5),
    max_cap: int = 4,
    n_samples: int = 50,
    tol: float = 1e-9,
    seed: int = 0,
) -> dict:
    """Sample bindings, instantiate both sides, compare tensors."""
    rule = get_rule(rule_id, flavor)
    rng = np.random.default_rng(seed)
    worst = 0.0
    worst_binding = None
    count = 0
    while count < n_samples:
        scale = int(rng.choice(dims)) if flavor == QUDIT else max_cap
        b = rule.sample_binding(rng, flavor, scale)
        lhs, rhs = rule.instantiate(b)
        if validate(lhs) or validate(rhs):
            raise ValueError(
                f"rule {rule_id} produced invalid instance for {b}: "
                f"{validate(lhs)} {validate(rhs)}"
            )
        dev = max_rel_dev(interpret(lhs), interpret(rhs))
        if dev > worst:
            worst, worst_binding = dev, b
        count += 1
    return {
        "rule": rule_id,
        "flavor": flavor,
        "n": count,
        "max_dev": worst,
        "worst_binding": worst_binding,
        "passed": worst <= tol,
    }


def check_in_context_soundness(
    rule_id: str,
    flavor: str,
    *,
    dims: Sequence[int] = (2, 3),
    max_cap: int = 3,
    n_samples: int = 20,
    tol: float = 1e-9,
    seed: int = 0,
) -> dict:
    """Glue both sides into random host contexts and compare."""
    from .sampling import random_diagram

    rule = get_rule(rule_id, flavor)
    rng = np.random.default_rng(seed)
    worst = 0.0
    count = 0
    while count < n_samples:
        dim = int(rng.choice(dims)) if flavor == QUDIT else None
        scale = dim if flavor == QUDIT else max_cap
        b = rule.sample_binding(rng, flavor, scale)
        lhs, rhs = rule.instantiate(b)
        p = lhs.n_out
        ctx = random_diagram(
            rng,
            flavor=flavor,
            dim=dim,
            n_in=p,
            n_out=int(rng.integers(0, 2)),
            n_nodes=int(rng.integers(1, 4)),
            in_caps=lhs.out_caps if flavor == MIXED else None,
            max_cap=max_cap,
        )
        t1 = interpret(compose_seq(lhs, ctx))
        t2 = interpret(compose_seq(rhs, ctx))
        worst = max(worst, max_rel_dev(t1, t2))
        count += 1
    return {"rule": rule_id, "flavor": flavor, "n": count, "max_dev": worst,
            "passed": worst <= tol}


# ---------------------------------------------------------------------------
# derived lemma corpus
# ---------------------------------------------------------------------------


def _lemma_entries_qudit(d: int):
    """(name, lhs, rhs, up_to_scalar) quadruples for dimension d."""
    out = []
    ID = identity(1, dim=d)
    out.append(("z-one-is-wire", make_z_spider(1.0, 1, 1, dim=d), ID, False))
    for n in (2, 3):
        lhs = compose_seq(ket_zero(dim=d), make_w_node(n, dim=d))
        rhs = ket_zero(dim=d)
        for _ in range(n - 1):
            rhs = compose_par(rhs, ket_zero(dim=d))
        out.append((f"vacuum-spreads-{n}", lhs, rhs, False))
    out.append(
        ("ket0-as-zero-spider", ket_zero(dim=d), make_z_spider(0.0, 0, 1, dim=d),
         False)
    )
    out.append(
        ("braket-1-1",
         compose_seq(make_ket_one(dim=d), _as_effect(make_ket_one(dim=d))),
         empty_diagram(QUDIT, d), False)
    )
    for k in range(d):
        for l in range(d):
            lhs = compose_seq(
                derived_ket(l, flavor=QUDIT, dim=d),
                _as_effect(derived_ket(k, flavor=QUDIT, dim=d)),
            )
            val = float(math.factorial(k)) if k == l else 0.0
            rhs = Diagram(QUDIT, d, ((0, GlobalScalar(val)),), (), (), ())
            out.append((f"pairing-{k}-{l}", lhs, rhs, False))
    for k in range(d):
        for l in range(d):
            lhs = compose_seq(
                compose_par(derived_ket(k, flavor=QUDIT, dim=d),
                            derived_ket(l, flavor=QUDIT, dim=d)),
                w_merge(2, dim=d),
            )
            if k + l < d:
                rhs = derived_ket(k + l, flavor=QUDIT, dim=d)
            else:
                rhs = add_global_scalar(ket_zero(dim=d), 0.0)
            out.append((f"ket-sum-{k}-{l}", lhs, rhs, False))
    for k in range(d):
        for n in (1, 2):
            r = 0.7 - 0.2j
            lhs = compose_seq(derived_ket(k, flavor=QUDIT, dim=d),
                              make_z_spider(r, 1, n, dim=d))
            rhs = empty_diagram(QUDIT, d)
            for _ in range(n):
                rhs = compose_par(rhs, derived_ket(k, flavor=QUDIT, dim=d))
            rhs = add_global_scalar(rhs, r**k)
            out.append((f"copy-bunch-{k}-{n}", lhs, rhs, False))
    r, s = 0.3 + 0.9j, -0.5 + 0.2j
    lhs = compose_seq(
        compose_par(make_z_spider(r, 0, 1, dim=d), make_z_spider(s, 0, 1, dim=d)),
        w_merge(2, dim=d),
    )
    out.append(("merge-adds-coherent", lhs, make_z_spider(r + s, 0, 1, dim=d),
                False))
    for k in (1, 2, 3):
        lhs = compose_seq(make_w_node(k, dim=d), w_merge(k, dim=d))
        rhs = make_z_spider(float(k), 1, 1, dim=d)
        out.append((f"resplit-merge-{k}", lhs, rhs, False))
    for ks in ((1, 1), (2, 1)):
        lhs_mid = empty_diagram(QUDIT, d)
        for k in ks:
            lhs_mid = compose_par(lhs_mid, make_z_spider(float(k), 1, 1, dim=d))
        lhs = compose_seq(
            make_w_node(len(ks), dim=d),
            compose_seq(lhs_mid, w_merge(len(ks), dim=d)),
        )
        rhs = make_z_spider(float(sum(ks)), 1, 1, dim=d)
        out.append((f"fan-blockers-merge-{'-'.join(map(str, ks))}", lhs, rhs,
                    False))
    return out


def _lemma_entries_mixed(max_cap: int):
    out = []
    for a in range(1, max_cap + 1):
        out.append(
            (f"z-one-is-wire-cap{a}", make_z_spider(1.0, 1, 1, capacity=a),
             identity(caps=[a]), False)
        )
        for bcap in range(a, max_cap + 1):
            P1 = WNode(bcap, (a,))
            emb = Diagram(
                MIXED, None, ((0, P1), (1, P1)),
                (_wire(("n", 0, 1), ("in", 0)), _wire(("n", 0, 0), ("n", 1, 0)),
                 _wire(("n", 1, 1), ("out", 0))),
                (a,), (a,),
            )
            out.append((f"embed-{a}-via-{bcap}", emb, identity(caps=[a]), False))
        out.append(
            (f"copy-vacuum-cap{a}",
             compose_seq(ket_zero(capacity=a),
                         make_z_spider(0.8 + 0.1j, 1, 2, capacity=a)),
             compose_par(ket_zero(capacity=a), ket_zero(capacity=a)), False)
        )
        for k in range(a + 1):
            lhs = compose_seq(
                derived_ket(k, a, flavor=MIXED),
                _as_effect(make_z_spider(1.0, 0, 1, capacity=a)),
            )
            out.append((f"discard-ket-{k}-cap{a}", lhs,
                        empty_diagram(MIXED, None), False))
            lhs2 = compose_seq(
                derived_ket(k, a, flavor=MIXED),
                _as_effect(derived_ket(k, a, flavor=MIXED)),
            )
            rhs2 = Diagram(MIXED, None,
                           ((0, GlobalScalar(float(math.factorial(k)))),),
                           (), (), ())
            out.append((f"pairing-{k}-cap{a}", lhs2, rhs2, False))
        for k in range(1, a + 1):
            if k == a:
                continue
            lift = Diagram(
                MIXED, None, ((0, WNode(a, (k,))),),
                (_wire(("n", 0, 1), ("in", 0)), _wire(("n", 0, 0), ("out", 0))),
                (k,), (a,),
            )
            out.append(
                (f"ket-{k}-widens-{k}-to-{a}",
                 derived_ket(k, a, flavor=MIXED),
                 compose_seq(derived_ket(k, k, flavor=MIXED), lift), False)
            )
    return out


def derive_lemma_corpus(
    flavor: str,
    *,
    dims: Sequence[int] = (2, 3, 4),
    max_cap: int = 3,
    tol: float = 1e-9,
) -> list[dict]:
    """Numerically certify the derived-equation corpus."""
    from .semantics import scalar_fit, tensors_close_up_to_scalar

    reports = []
    if flavor == QUDIT:
        batches = [(d, _lemma_entries_qudit(d)) for d in dims]
    else:
        batches = [(None, _lemma_entries_mixed(max_cap))]
    for scale, entries in batches:
        for name, lhs, rhs, up_to_scalar in entries:
            errs = validate(lhs) + validate(rhs)
            if errs:
                reports.append({"lemma": name, "scale": scale, "passed": False,
                                "error": "; ".join(errs)})
                continue
            t1, t2 = interpret(lhs), interpret(rhs)
            if up_to_scalar:
                ok, lam = tensors_close_up_to_scalar(t1, t2, tol)
                dev = 0.0 if ok else max_rel_dev(t1, t2)
                reports.append({"lemma": name, "scale": scale, "passed": ok,
                                "scalar": lam, "max_dev": dev})
            else:
                dev = max_rel_dev(t1, t2)
                reports.append({"lemma": name, "scale": scale,
                                "passed": dev <= tol, "max_dev": dev})
    return reports
