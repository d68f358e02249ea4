"""Normal forms, table combinators, and the equality decision procedure.

A state over outputs with capacities ``(c_1..c_n)`` is canonically a
:class:`CoefficientTable`: a pruned, lexicographically sorted map from
exponent vectors to complex coefficients.  ``n_functor`` realizes a table
as a diagram with a fixed shape — a |1> fed into a *selector* W-node with
one output per term, each term a Z-spider whose parameter encodes the
coefficient, wired by ``x_j`` parallel legs into the j-th *collector*
W-node:

    >>> import numpy as np
    >>> from .semantics import interpret
    >>> t = CoefficientTable((1,), (((0,), 1 + 0j), ((1,), 2 + 0j)))
    >>> nf = n_functor(t, "qudit")
    >>> np.allclose(interpret(nf.realization), [1, 2])
    True

Normalization is semantic: interpret the (bent) diagram, read the tensor
into a table, and rebuild.  Two diagrams are equal exactly when their
canonical tables agree, which is what ``diagrams_equal`` decides.

The table combinators ``nf_tensor``, ``nf_cup`` and ``nf_w21`` mirror how
juxtaposition, bent wires, and 2-to-1 W-merges act on normal forms, entry
by entry; each commutes with interpretation.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

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
    bend_to_state,
    validate,
)
from .semantics import InvalidDiagram, interpret

PRUNE_EPS = 1e-12


class NotInNormalForm(ValueError):
    """The diagram does not have the normal-form shape."""


class CapacityMismatch(ValueError):
    """Boundary capacities disagree where they must match."""


class BoundaryMismatch(ValueError):
    """The two diagrams do not share a boundary signature."""


# ---------------------------------------------------------------------------
# coefficient tables
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class CoefficientTable:
    """Pruned, lexicographically sorted exponent-vector table."""

    caps: tuple
    entries: tuple  # ((x_1..x_n), complex) pairs, sorted by exponent vector

    def __post_init__(self):
        for xs, _ in self.entries:
            if len(xs) != len(self.caps):
                raise ValueError("exponent vector length does not match caps")
            for x, c in zip(xs, self.caps):
                if not (0 <= x <= c):
                    raise ValueError(f"exponent {x} outside capacity {c}")
        keys = [xs for xs, _ in self.entries]
        if keys != sorted(keys):
            raise ValueError("entries must be sorted lexicographically")
        if len(set(keys)) != len(keys):
            raise ValueError("duplicate exponent vectors")

    @property
    def n_out(self) -> int:
        return len(self.caps)

    def as_dict(self) -> dict:
        return {xs: c for xs, c in self.entries}

    @staticmethod
    def from_dict(caps, entries: dict, eps: float = PRUNE_EPS) -> "CoefficientTable":
        caps = tuple(int(c) for c in caps)
        items = [(tuple(int(x) for x in xs), complex(v))
                 for xs, v in entries.items()]
        mx = max((abs(v) for _, v in items), default=0.0)
        if mx <= 0.0:
            return CoefficientTable(caps, ())
        kept = [(xs, v) for xs, v in items if abs(v) > eps * mx]
        return CoefficientTable(caps, tuple(sorted(kept)))

    @staticmethod
    def from_tensor(arr: np.ndarray, caps, eps: float = PRUNE_EPS):
        caps = tuple(int(c) for c in caps)
        arr = np.asarray(arr, dtype=complex)
        if arr.shape != tuple(c + 1 for c in caps):
            raise ValueError(
                f"tensor shape {arr.shape} does not match capacities {caps}"
            )
        entries = {}
        for idx in itertools.product(*(range(c + 1) for c in caps)):
            v = arr[idx] if caps else arr[()]
            if v != 0:
                entries[idx] = complex(v)
        return CoefficientTable.from_dict(caps, entries, eps)

    def to_tensor(self) -> np.ndarray:
        arr = np.zeros(tuple(c + 1 for c in self.caps), dtype=complex)
        for xs, v in self.entries:
            arr[xs] = v
        return arr


def tables_close(t1: CoefficientTable, t2: CoefficientTable, tol: float = 1e-9):
    """(equal, witness).  Witness names the first differing exponent vector."""
    if t1.caps != t2.caps:
        return False, {"reason": "capacity vectors differ",
                       "left": t1.caps, "right": t2.caps}
    d1, d2 = t1.as_dict(), t2.as_dict()
    scale = max(
        [abs(v) for v in d1.values()] + [abs(v) for v in d2.values()] + [1.0]
    )
    for xs in sorted(set(d1) | set(d2)):
        a, b = d1.get(xs, 0j), d2.get(xs, 0j)
        if abs(a - b) > tol * scale:
            return False, {"exponents": xs, "left": a, "right": b}
    return True, None


# ---------------------------------------------------------------------------
# the normal-form functor and its inverse
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class NormalFormDiagram:
    table: CoefficientTable
    realization: Diagram

    @property
    def flavor(self) -> str:
        return self.realization.flavor


def _nf_params(table: CoefficientTable):
    """Per-term spider parameters: coefficient divided by the collector
    factors the realization will re-introduce."""
    out = []
    for xs, r in table.entries:
        norm = 1.0
        for x in xs:
            norm *= math.sqrt(math.factorial(x))
        out.append(r / norm)
    return out


def nf_to_diagram(table: CoefficientTable, flavor: str = QUDIT,
                  *, dim: int | None = None) -> Diagram:
    """Build the normal-form realization of a table.

    Qudit wires all carry the flavor capacity d-1; mixed internal wires
    carry capacity 1, with only the collector outputs at the boundary
    capacities.
    """
    caps = table.caps
    if flavor == QUDIT:
        if dim is None:
            dim = (caps[0] + 1) if caps else 2
        if any(c != dim - 1 for c in caps):
            raise ValueError("qudit table capacities must all equal dim-1")
        inner = dim - 1
    else:
        dim = None
        inner = 1
    T = len(table.entries)
    n = len(caps)
    params = _nf_params(table)
    nodes = []
    wires = []
    ket = 0
    sel = 1
    nodes.append((ket, KetOne(inner)))
    nodes.append((sel, WNode(inner, (inner,) * T)))
    wires.append(_wire(("n", ket, 0), ("n", sel, 0)))
    spider0 = 2
    for i, ((xs, _), lam) in enumerate(zip(table.entries, params)):
        legs = 1 + sum(xs)
        nodes.append((spider0 + i, ZSpider(complex(lam), inner)))
        wires.append(_wire(("n", sel, 1 + i), ("n", spider0 + i, 0)))
    col0 = spider0 + T
    for j, cap in enumerate(caps):
        count = sum(xs[j] for xs, _ in table.entries)
        nodes.append((col0 + j, WNode(cap, (inner,) * count)))
        wires.append(_wire(("n", col0 + j, 0), ("out", j)))
    # parallel legs: spider i sends x_j^i wires into collector j
    col_used = [0] * n
    for i, (xs, _) in enumerate(table.entries):
        port = 1
        for j, x in enumerate(xs):
            for _ in range(x):
                wires.append(
                    _wire(("n", spider0 + i, port),
                          ("n", col0 + j, 1 + col_used[j]))
                )
                port += 1
                col_used[j] += 1
    return Diagram(flavor, dim, tuple(nodes), tuple(wires), (), tuple(caps))


def n_functor(table: CoefficientTable, flavor: str = QUDIT,
              *, dim: int | None = None) -> NormalFormDiagram:
    """Realize a coefficient table as a normal-form diagram."""
    d = nf_to_diagram(table, flavor, dim=dim)
    errs = validate(d)
    if errs:
        raise ValueError(f"normal-form realization invalid: {errs}")
    return NormalFormDiagram(table, d)


def table_of(d: Diagram) -> CoefficientTable:
    """Read the table back off a normal-form realization.

    Raises NotInNormalForm when the diagram does not have the exact
    selector/term/collector shape produced by ``nf_to_diagram``.
    """
    if d.n_in != 0:
        raise NotInNormalForm("normal forms are states (no inputs)")
    nodes = d.node_map()
    kets = [i for i, n in d.nodes if isinstance(n, KetOne)]
    if len(kets) != 1:
        raise NotInNormalForm("expected exactly one |1> node")
    ket = kets[0]
    kw = [w for w in d.wires if any(ep[0] == "n" and ep[1] == ket for ep in w)]
    if len(kw) != 1:
        raise NotInNormalForm("ill-formed |1> node")
    sel_ep = kw[0][0] if kw[0][1] == ("n", ket, 0) else kw[0][1]
    if sel_ep[0] != "n" or sel_ep[2] != 0:
        raise NotInNormalForm("|1> must feed a selector W-node input")
    sel = sel_ep[1]
    sel_node = nodes.get(sel)
    if not isinstance(sel_node, WNode):
        raise NotInNormalForm("selector is not a W-node")
    T = sel_node.fanout
    # collectors: one W-node per output, apex on the boundary
    n = d.n_out
    collectors = [None] * n
    for w in d.wires:
        for a, b in ((w[0], w[1]), (w[1], w[0])):
            if a[0] == "out":
                if b[0] != "n" or b[2] != 0:
                    raise NotInNormalForm(f"output {a[1]} not fed by a W apex")
                if not isinstance(nodes.get(b[1]), WNode):
                    raise NotInNormalForm(f"output {a[1]} not fed by a W-node")
                collectors[a[1]] = b[1]
    if any(c is None for c in collectors):
        raise NotInNormalForm("missing collector")
    if len(set(collectors)) != n:
        raise NotInNormalForm("collectors must be distinct")
    # term spiders hang off the selector outputs
    spiders = []
    for i in range(T):
        hit = None
        for w in d.wires:
            for a, b in ((w[0], w[1]), (w[1], w[0])):
                if a == ("n", sel, 1 + i):
                    hit = b
        if hit is None or hit[0] != "n" or hit[2] != 0:
            raise NotInNormalForm("selector output not wired to a spider")
        if not isinstance(nodes.get(hit[1]), ZSpider):
            raise NotInNormalForm("term is not a Z-spider")
        spiders.append(hit[1])
    if len(set(spiders)) != T:
        raise NotInNormalForm("term spiders must be distinct")
    expected = {ket, sel, *spiders, *collectors}
    if set(nodes) != expected:
        raise NotInNormalForm("extra nodes outside the normal-form shape")
    col_index = {c: j for j, c in enumerate(collectors)}
    entries = {}
    for i, sp in enumerate(spiders):
        xs = [0] * n
        for w in d.wires:
            eps = [ep for ep in w if ep[0] == "n" and ep[1] == sp]
            if not eps:
                continue
            if len(eps) == 2:
                raise NotInNormalForm("term spider has a self-loop")
            other = w[0] if w[1] in eps else w[1]
            if other == ("n", sel, 1 + i):
                continue
            if other[0] != "n" or other[1] not in col_index or other[2] == 0:
                raise NotInNormalForm("term leg does not reach a collector")
            xs[col_index[other[1]]] += 1
        lam = nodes[sp].param
        norm = 1.0
        for x in xs:
            norm *= math.sqrt(math.factorial(x))
        key = tuple(xs)
        if key in entries:
            raise NotInNormalForm("duplicate exponent vector")
        entries[key] = lam * norm
    caps = d.out_caps
    # collector legs must be fully used by the term spiders
    for j, c in enumerate(collectors):
        want = sum(xs[j] for xs in entries)
        if nodes[c].fanout != want:
            raise NotInNormalForm("collector leg count mismatch")
    table = CoefficientTable.from_dict(caps, entries, eps=0.0)
    return table


# ---------------------------------------------------------------------------
# normalization and equality
# ---------------------------------------------------------------------------


def normalize(d: Diagram, *, eps: float = PRUNE_EPS) -> NormalFormDiagram:
    """Canonical normal form of a diagram (bent to a state first)."""
    errs = validate(d)
    if errs:
        raise InvalidDiagram("; ".join(errs))
    state = bend_to_state(d) if d.n_in else d
    arr = interpret(state)
    table = CoefficientTable.from_tensor(arr, state.out_caps, eps)
    return n_functor(table, d.flavor,
                     dim=d.dim if d.flavor == QUDIT else None)


def diagrams_equal(d1: Diagram, d2: Diagram, tol: float = 1e-9):
    """(equal, witness): equality of canonical tables within tolerance."""
    if d1.flavor != d2.flavor:
        raise BoundaryMismatch("flavors differ")
    if (d1.in_caps, d1.out_caps) != (d2.in_caps, d2.out_caps):
        raise BoundaryMismatch(
            f"boundaries differ: {d1.in_caps}->{d1.out_caps} vs "
            f"{d2.in_caps}->{d2.out_caps}"
        )
    t1 = normalize(d1).table
    t2 = normalize(d2).table
    return tables_close(t1, t2, tol)


# ---------------------------------------------------------------------------
# table combinators
# ---------------------------------------------------------------------------


def nf_tensor(nf1: NormalFormDiagram, nf2: NormalFormDiagram) -> NormalFormDiagram:
    """Juxtaposition: coefficients multiply, exponent vectors concatenate."""
    if nf1.flavor != nf2.flavor:
        raise ValueError("cannot tensor normal forms of different flavors")
    t1, t2 = nf1.table, nf2.table
    entries = {}
    for xs1, v1 in t1.entries:
        for xs2, v2 in t2.entries:
            entries[xs1 + xs2] = v1 * v2
    table = CoefficientTable.from_dict(t1.caps + t2.caps, entries)
    dim = nf1.realization.dim if nf1.flavor == QUDIT else None
    return n_functor(table, nf1.flavor, dim=dim)


def nf_cup(nf: NormalFormDiagram, j1: int, j2: int) -> NormalFormDiagram:
    """Plug a bent wire into outputs j1 and j2 (0-based).

    Terms whose exponents differ at the two outputs annihilate; the rest
    sum into the reduced table.
    """
    t = nf.table
    if j1 == j2 or not (0 <= j1 < t.n_out and 0 <= j2 < t.n_out):
        raise ValueError("cup needs two distinct output indices")
    if t.caps[j1] != t.caps[j2]:
        raise CapacityMismatch(
            f"outputs {j1} and {j2} carry capacities {t.caps[j1]} != {t.caps[j2]}"
        )
    lo, hi = sorted((j1, j2))
    caps = tuple(c for j, c in enumerate(t.caps) if j not in (lo, hi))
    entries: dict = {}
    for xs, v in t.entries:
        if xs[lo] != xs[hi]:
            continue
        key = tuple(x for j, x in enumerate(xs) if j not in (lo, hi))
        entries[key] = entries.get(key, 0j) + v
    table = CoefficientTable.from_dict(caps, entries)
    dim = nf.realization.dim if nf.flavor == QUDIT else None
    return n_functor(table, nf.flavor, dim=dim)


def nf_w21(nf: NormalFormDiagram, j1: int, j2: int,
           capacity: int | None = None) -> NormalFormDiagram:
    """Merge outputs j1 and j2 through a 2-to-1 W-node.

    The merged output sits at min(j1, j2).  Terms whose combined
    occupation exceeds the target capacity are deleted.  For the qudit
    flavor the target capacity is d-1; mixed callers must pass one.
    """
    t = nf.table
    if j1 == j2 or not (0 <= j1 < t.n_out and 0 <= j2 < t.n_out):
        raise ValueError("w21 needs two distinct output indices")
    if nf.flavor == QUDIT:
        cap_out = t.caps[j1]
        if capacity is not None and capacity != cap_out:
            raise CapacityMismatch("qudit merge capacity is fixed at dim-1")
    else:
        if capacity is None:
            raise CapacityMismatch("mixed merge needs a target capacity")
        cap_out = int(capacity)
        if cap_out < 1:
            raise CapacityMismatch("capacity must be at least 1")
    lo, hi = sorted((j1, j2))
    caps = []
    for j, c in enumerate(t.caps):
        if j == lo:
            caps.append(cap_out)
        elif j != hi:
            caps.append(c)
    entries: dict = {}
    for xs, v in t.entries:
        k = xs[j1] + xs[j2]
        if k > cap_out:
            continue
        coeff = v * math.sqrt(math.comb(k, xs[j1]))
        key = []
        for j, x in enumerate(xs):
            if j == lo:
                key.append(k)
            elif j != hi:
                key.append(x)
        key = tuple(key)
        entries[key] = entries.get(key, 0j) + coeff
    table = CoefficientTable.from_dict(tuple(caps), entries)
    dim = nf.realization.dim if nf.flavor == QUDIT else None
    return n_functor(table, nf.flavor, dim=dim)
