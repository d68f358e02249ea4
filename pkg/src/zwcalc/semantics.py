"""Tensor semantics for ZW diagrams.

Every generator denotes a dense complex tensor with one axis per port;
a diagram's interpretation contracts those tensors along its wires, with
boundary axes ordered outputs-first-then-inputs (each axis has size
capacity+1).  Node-free closed loops contribute a scalar factor of
capacity+1 each, and global scalars multiply through.

Two semantics are provided for the uniform qudit flavor:

* ``standard`` — the symmetric interpretation, where the k-th basis state
  carries a ``sqrt(k!)`` weight inside the generators (so the derived ket
  tree for k denotes ``sqrt(k!)|k>``), and cups/caps are plain deltas.
* ``asymmetric`` — the same functor conjugated by ``diag(sqrt(k!))`` on
  every boundary wire (inverse on outputs).  Closed diagrams agree with
  the standard semantics; open ones get integer-flavored coefficients
  (the derived ket tree denotes exactly ``|k>``).

>>> import numpy as np
>>> np.allclose(interpret(make_ket_one(dim=3)), [0, 1, 0])
True
>>> round(abs(interpret(derived_ket(2, flavor="qudit", dim=3))[2]) ** 2, 9)
2.0
>>> multinomial(4, [2, 1, 1])
12
>>> check_semantic_identity("Eq2", 2, k=1, l=1)
True
"""

from __future__ import annotations

import functools
import itertools
import math

import numpy as np

from dataclasses import replace as _dc_replace

from .diagram import (
    Diagram,
    GlobalScalar,
    KetOne,
    QUDIT,
    WNode,
    ZSpider,
    _wire,
    compose_par,
    compose_seq,
    dagger,
    derived_bra,
    derived_ket,
    identity,
    make_w_node,
    make_z_spider,
    validate,
    w_merge,
)


class InvalidDiagram(ValueError):
    """The diagram fails structural validation."""


class PartsMismatch(ValueError):
    """Multinomial parts do not sum to the top index."""


class RangeViolation(ValueError):
    """A parameter is outside its admissible range."""


# ---------------------------------------------------------------------------
# combinatorics
# ---------------------------------------------------------------------------


def multinomial(k: int, parts: list[int] | tuple[int, ...]) -> int:
    """Exact multinomial coefficient k! / prod(parts_i!).

    >>> multinomial(3, [1, 1, 1])
    6
    >>> multinomial(5, [5])
    1
    """
    if k < 0 or any(p < 0 for p in parts):
        raise PartsMismatch(f"negative entries in ({k}, {list(parts)})")
    if sum(parts) != k:
        raise PartsMismatch(f"sum({list(parts)}) != {k}")
    out, rem = 1, k
    for p in parts:
        out *= math.comb(rem, p)
        rem -= p
    return out


def _sqrt_fact_pow(k: int, exponent: int) -> float:
    """sqrt(k!) raised to an integer power (possibly negative)."""
    return float(math.factorial(k)) ** (exponent / 2.0)


# ---------------------------------------------------------------------------
# generator tensors
# ---------------------------------------------------------------------------


def _z_tensor(node: ZSpider, n_legs: int) -> np.ndarray:
    c = node.capacity
    if n_legs == 0:
        return np.array(
            sum(node.param**k / math.factorial(k) for k in range(c + 1)),
            dtype=complex,
        )
    t = np.zeros((c + 1,) * n_legs, dtype=complex)
    for k in range(c + 1):
        t[(k,) * n_legs] = node.param**k * _sqrt_fact_pow(k, n_legs - 2)
    return t


def _w_tensor(node: WNode) -> np.ndarray:
    """Axes: port 0 (input) first, then each output port."""
    a, bs = node.in_cap, node.out_caps
    t = np.zeros((a + 1,) + tuple(b + 1 for b in bs), dtype=complex)
    for ks in itertools.product(*[range(b + 1) for b in bs]):
        total = sum(ks)
        if total <= a:
            t[(total,) + ks] = math.sqrt(multinomial(total, list(ks)))
    return t


def _node_tensor(node, n_ports: int) -> np.ndarray:
    if isinstance(node, ZSpider):
        return _z_tensor(node, n_ports)
    if isinstance(node, WNode):
        return _w_tensor(node)
    if isinstance(node, KetOne):
        t = np.zeros(node.capacity + 1, dtype=complex)
        t[1] = 1.0
        return t
    raise TypeError(f"no tensor for {node!r}")


def interpret_generator(
    kind,
    n_in: int = 0,
    n_out: int = 0,
    *,
    semantics: str = "standard",
) -> np.ndarray:
    """Direct-formula tensor of one generator, axes outputs-first.

    Independent of the graph-contraction engine; serves as its oracle on
    single-generator diagrams.  For Z-spiders the caller fixes the leg
    split; W-nodes accept the split (1, fanout) or its transpose
    (fanout, 1).
    """
    if semantics not in ("standard", "asymmetric"):
        raise ValueError(f"unknown semantics {semantics!r}")
    asym = semantics == "asymmetric"
    if isinstance(kind, ZSpider):
        c, L = kind.capacity, n_in + n_out
        if L == 0:
            if asym:
                return np.array(
                    sum(kind.param**k / math.factorial(k) for k in range(c + 1)),
                    dtype=complex,
                )
            return _z_tensor(kind, 0)
        t = np.zeros((c + 1,) * L, dtype=complex)
        for k in range(c + 1):
            if asym:
                coeff = kind.param**k * float(math.factorial(k)) ** (n_in - 1)
            else:
                coeff = kind.param**k * _sqrt_fact_pow(k, L - 2)
            t[(k,) * L] = coeff
        return t
    if isinstance(kind, WNode):
        a, bs = kind.in_cap, kind.out_caps
        n = len(bs)
        base = np.zeros((a + 1,) + tuple(b + 1 for b in bs), dtype=complex)
        for ks in itertools.product(*[range(b + 1) for b in bs]):
            total = sum(ks)
            if total <= a:
                m = multinomial(total, list(ks))
                if not asym:
                    base[(total,) + ks] = math.sqrt(m)
                elif (n_in, n_out) == (1, n):
                    base[(total,) + ks] = m  # split: multinomial weights
                else:
                    base[(total,) + ks] = 1.0  # merge: plain particle adder
        if (n_in, n_out) == (1, n):
            # outputs first, input (axis 0) last
            return np.moveaxis(base, 0, -1)
        if (n_in, n_out) == (n, 1):
            return base
        raise RangeViolation(f"W split ({n_in},{n_out}) incompatible with fanout {n}")
    if isinstance(kind, KetOne):
        t = np.zeros(kind.capacity + 1, dtype=complex)
        t[1] = 1.0
        return t
    if isinstance(kind, GlobalScalar):
        return np.array(kind.value, dtype=complex)
    raise TypeError(f"unknown generator {kind!r}")


# ---------------------------------------------------------------------------
# contraction engine
# ---------------------------------------------------------------------------


def _self_trace(arr: np.ndarray, ids: list[int]) -> tuple[np.ndarray, list[int]]:
    while True:
        dup = None
        for i, x in enumerate(ids):
            j = ids.index(x)
            if j != i:
                dup = (j, i)
                break
        if dup is None:
            return arr, ids
        j, i = dup
        arr = np.trace(arr, axis1=j, axis2=i)
        ids = [x for idx, x in enumerate(ids) if idx not in (i, j)]


def _contract_pool(
    ops: list[tuple[np.ndarray, list[int]]],
    dim_of: dict[int, int],
    schedule: str,
) -> tuple[np.ndarray, list[int]]:
    if not ops:
        return np.array(1.0 + 0j), []
    ops = [(a, list(ids)) for a, ids in ops]
    while len(ops) > 1:
        if schedule == "sequential":
            pick = None
            for i in range(len(ops)):
                for j in range(i + 1, len(ops)):
                    if set(ops[i][1]) & set(ops[j][1]):
                        pick = (i, j)
                        break
                if pick:
                    break
            i, j = pick if pick else (0, 1)
        else:  # greedy smallest-intermediate
            best = None
            for i in range(len(ops)):
                for j in range(i + 1, len(ops)):
                    shared = set(ops[i][1]) & set(ops[j][1])
                    sz_i = math.prod(dim_of[x] for x in ops[i][1])
                    sz_j = math.prod(dim_of[x] for x in ops[j][1])
                    sh = math.prod(dim_of[x] for x in shared) if shared else 1
                    key = (0 if shared else 1, sz_i * sz_j // (sh * sh))
                    if best is None or key < best[0]:
                        best = (key, i, j)
            _, i, j = best
        a, ai = ops[i]
        b, bi = ops[j]
        shared = [x for x in ai if x in bi]
        res = np.tensordot(
            a, b, axes=([ai.index(x) for x in shared], [bi.index(x) for x in shared])
        )
        rids = [x for x in ai if x not in shared] + [x for x in bi if x not in shared]
        ops.pop(j)
        ops.pop(i)
        ops.append((res, rids))
    return ops[0]


_W_FANOUT_LIMIT = 6


def _shrink_wide_w(d: Diagram, limit: int = _W_FANOUT_LIMIT) -> Diagram:
    """Split W-nodes of fanout > limit into equivalent trees.

    The intermediate wires carry the node's own input capacity, so the
    split is exact for both flavors, and dense node tensors stay small no
    matter how wide the original node was.
    """
    while True:
        wide = None
        for nid, node in d.nodes:
            if isinstance(node, WNode) and node.fanout > limit:
                wide = (nid, node)
                break
        if wide is None:
            return d
        nid, node = wide
        a = node.in_cap
        h = node.fanout // 2
        base = d.max_node_id() + 1
        lid, rid = base, base + 1
        left = WNode(a, node.out_caps[:h])
        right = WNode(a, node.out_caps[h:])
        top = WNode(a, (a, a))

        def move(ep):
            if ep[0] == "n" and ep[1] == nid and ep[2] >= 1:
                i = ep[2] - 1
                if i < h:
                    return ("n", lid, 1 + i)
                return ("n", rid, 1 + (i - h))
            return ep

        wires = [_wire(move(x), move(y)) for x, y in d.wires]
        wires.append(_wire(("n", nid, 1), ("n", lid, 0)))
        wires.append(_wire(("n", nid, 2), ("n", rid, 0)))
        nodes = [(i, n) if i != nid else (i, top) for i, n in d.nodes]
        nodes += [(lid, left), (rid, right)]
        d = _dc_replace(d, nodes=tuple(sorted(nodes)), wires=tuple(wires))


def interpret(
    d: Diagram, semantics: str = "standard", *, schedule: str = "greedy"
) -> np.ndarray:
    """Contract a diagram to its tensor (axes: outputs, then inputs).

    ``schedule`` chooses the contraction order ("greedy" or "sequential");
    results agree up to floating error.
    """
    errs = validate(d)
    if errs:
        raise InvalidDiagram("; ".join(errs))
    if semantics == "asymmetric" and d.flavor != QUDIT:
        raise InvalidDiagram("asymmetric semantics requires the qudit flavor")
    if semantics not in ("standard", "asymmetric"):
        raise ValueError(f"unknown semantics {semantics!r}")

    d = _shrink_wide_w(d)
    nodes = d.node_map()
    counter = itertools.count()
    dim_of: dict[int, int] = {}
    slot_id: dict[tuple, int] = {}
    port_id: dict[tuple[int, int], int] = {}
    pool: list[tuple[np.ndarray, list[int]]] = []

    for w in d.wires:
        a, b = w
        dim = d.wire_capacity(w) + 1
        if a[0] != "n" and b[0] != "n":
            ia, ib = next(counter), next(counter)
            dim_of[ia] = dim_of[ib] = dim
            pool.append((np.eye(dim, dtype=complex), [ia, ib]))
            slot_id[a], slot_id[b] = ia, ib
        else:
            wid = next(counter)
            dim_of[wid] = dim
            for ep in (a, b):
                if ep[0] == "n":
                    port_id[(ep[1], ep[2])] = wid
                else:
                    slot_id[ep] = wid

    scalar = complex(1.0)
    for c in d.loops:
        scalar *= c + 1
    for nid in sorted(nodes):
        node = nodes[nid]
        if isinstance(node, GlobalScalar):
            scalar *= node.value
            continue
        n_ports = d.degree(nid)
        arr = _node_tensor(node, n_ports)
        if arr.ndim == 0:
            scalar *= complex(arr)
            continue
        ids = [port_id[(nid, p)] for p in range(arr.ndim)]
        arr, ids = _self_trace(arr, ids)
        if arr.ndim == 0:
            scalar *= complex(arr)
            continue
        pool.append((arr, ids))

    arr, ids = _contract_pool(pool, dim_of, schedule)
    arr, ids = _self_trace(arr, ids)  # defensive; ids are all distinct here
    order = [slot_id[("out", j)] for j in range(d.n_out)] + [
        slot_id[("in", i)] for i in range(d.n_in)
    ]
    if sorted(ids) != sorted(order):
        raise InvalidDiagram(f"contraction left indices {ids}, expected {order}")
    arr = np.transpose(arr, [ids.index(x) for x in order]) if order else arr
    result = np.asarray(arr * scalar, dtype=complex)  # keeps 0-dim shape

    if semantics == "asymmetric":
        result = _asym_rescale(result, d)
    return result


def _asym_rescale(t: np.ndarray, d: Diagram) -> np.ndarray:
    """Conjugate the boundary by diag(sqrt(k!)): inverse on outputs,
    forward on inputs."""
    t = t.copy()
    roles = [("out", j) for j in range(d.n_out)] + [("in", i) for i in range(d.n_in)]
    for axis, (role, _) in enumerate(roles):
        dim = t.shape[axis]
        vec = np.array([math.sqrt(math.factorial(k)) for k in range(dim)])
        factor = vec if role == "in" else 1.0 / vec
        shape = [1] * t.ndim
        shape[axis] = dim
        t = t * factor.reshape(shape)
    return t


# ---------------------------------------------------------------------------
# tensor comparison helpers
# ---------------------------------------------------------------------------


def max_rel_dev(a: np.ndarray, b: np.ndarray) -> float:
    """Max absolute entry difference, normalized by the largest magnitude
    present (or 1 if both are tiny)."""
    a = np.asarray(a, dtype=complex)
    b = np.asarray(b, dtype=complex)
    if a.shape != b.shape:
        return math.inf
    scale = max(
        float(np.max(np.abs(a))) if a.size else 0.0,
        float(np.max(np.abs(b))) if b.size else 0.0,
        1e-30,
    )
    diff = float(np.max(np.abs(a - b))) if a.size else 0.0
    return diff / scale


def tensors_close(a: np.ndarray, b: np.ndarray, tol: float = 1e-9) -> bool:
    return max_rel_dev(a, b) <= tol


def scalar_fit(a: np.ndarray, b: np.ndarray) -> complex | None:
    """Least-squares lambda with b ~ lambda * a, or None if a ~ 0 != b."""
    a = np.asarray(a, dtype=complex).ravel()
    b = np.asarray(b, dtype=complex).ravel()
    na = float(np.vdot(a, a).real)
    if na < 1e-24:
        return None if float(np.vdot(b, b).real) >= 1e-24 else 1.0 + 0j
    return complex(np.vdot(a, b) / na)


def tensors_close_up_to_scalar(
    a: np.ndarray, b: np.ndarray, tol: float = 1e-9
) -> tuple[bool, complex | None]:
    """Whether b = lambda*a for some nonzero lambda; returns (ok, lambda)."""
    if np.asarray(a).shape != np.asarray(b).shape:
        return False, None
    lam = scalar_fit(a, b)
    if lam is None or abs(lam) < 1e-12:
        both_zero = max_rel_dev(a, np.zeros_like(a)) < tol and max_rel_dev(
            b, np.zeros_like(b)
        ) < tol
        return (both_zero, 1.0 + 0j if both_zero else None)
    return tensors_close(np.asarray(a) * lam, np.asarray(b), tol), lam


# ---------------------------------------------------------------------------
# semantic identity suite
# ---------------------------------------------------------------------------


def _kron_states(vectors: list[np.ndarray]) -> np.ndarray:
    """Outer product of 1-axis states into a multi-axis tensor."""
    if not vectors:
        return np.array(1.0 + 0j)
    return functools.reduce(np.multiply.outer, vectors)


def _compositions(k: int, n: int):
    """All tuples of n nonnegative integers summing to k."""
    if n == 0:
        if k == 0:
            yield ()
        return
    for head in range(k + 1):
        for rest in _compositions(k - head, n - 1):
            yield (head,) + rest


def check_semantic_identity(
    ident: str,
    d: int,
    *,
    k: int | None = None,
    l: int | None = None,
    n: int | None = None,
    r: complex = 1.0,
    tol: float = 1e-10,
) -> bool:
    """Numerically verify one of the five storytelling identities.

    Eq1: the 1->n W-node spreads k particles multinomially.
    Eq2: the 2->1 W-node adds particle bunches, zero past the capacity.
    Eq3: the Z-spider copies a k-bunch, emitting scalar r^k.
    Eq4: <k|l> pairing equals k! * delta.
    Eq5: identity = sum over k of |k><k| / k!.
    """
    if d < 2:
        raise RangeViolation(f"d={d} < 2")

    def ket(j: int) -> Diagram:
        if not 0 <= j <= d - 1:
            raise RangeViolation(f"k={j} outside 0..{d - 1}")
        return derived_ket(j, flavor=QUDIT, dim=d)

    if ident == "Eq1":
        if n is None or k is None or n < 1:
            raise RangeViolation("Eq1 needs k and n >= 1")
        lhs = interpret(compose_seq(ket(k), make_w_node(n, dim=d)))
        rhs = np.zeros((d,) * n, dtype=complex)
        for parts in _compositions(k, n):
            rhs = rhs + multinomial(k, list(parts)) * _kron_states(
                [interpret(ket(p)) for p in parts]
            )
        return max_rel_dev(lhs, rhs) <= tol

    if ident == "Eq2":
        if k is None or l is None:
            raise RangeViolation("Eq2 needs k and l")
        pair = compose_par(ket(k), ket(l))
        lhs = interpret(compose_seq(pair, w_merge(2, dim=d)))
        if k + l < d:
            rhs = interpret(ket(k + l))
        else:
            rhs = np.zeros(d, dtype=complex)
        return max_rel_dev(lhs, rhs) <= tol

    if ident == "Eq3":
        if k is None or n is None or n < 0:
            raise RangeViolation("Eq3 needs k and n >= 0")
        spider = make_z_spider(r, 1, n, dim=d)
        lhs = interpret(compose_seq(ket(k), spider))
        rhs = complex(r) ** k * _kron_states([interpret(ket(k)) for _ in range(n)])
        return max_rel_dev(lhs, rhs) <= tol

    if ident == "Eq4":
        if k is None or l is None:
            raise RangeViolation("Eq4 needs k and l")
        lhs = interpret(compose_seq(ket(l), derived_bra(k, flavor=QUDIT, dim=d)))
        rhs = np.array(float(math.factorial(k)) if k == l else 0.0, dtype=complex)
        return max_rel_dev(lhs, rhs) <= tol

    if ident == "Eq5":
        lhs = interpret(identity(1, dim=d))
        rhs = np.zeros((d, d), dtype=complex)
        for j in range(d):
            ketbra = compose_seq(derived_bra(j, flavor=QUDIT, dim=d), ket(j))
            rhs = rhs + interpret(ketbra) / math.factorial(j)
        return max_rel_dev(lhs, rhs) <= tol

    raise RangeViolation(f"unknown identity {ident!r}")


# ---------------------------------------------------------------------------
# asymmetric-consistency report
# ---------------------------------------------------------------------------


def interpret_asymmetric_consistency(d: Diagram, tol: float = 1e-10) -> dict:
    """Report on the asymmetric semantics' defining properties.

    For a closed diagram, both semantics must coincide; independent of the
    input, the derived ket tree must denote |k> and its adjoint k!<k| under
    the asymmetric reading.
    """
    if d.flavor != QUDIT:
        raise InvalidDiagram("asymmetric semantics requires the qudit flavor")
    dim = d.dim
    report: dict = {"dim": dim}
    if d.n_in == 0 and d.n_out == 0:
        std = interpret(d, "standard")
        asym = interpret(d, "asymmetric")
        report["closed_dev"] = max_rel_dev(std, asym)
        report["closed_ok"] = report["closed_dev"] <= tol
    else:
        report["closed_dev"] = None
        report["closed_ok"] = None

    worst = 0.0
    for j in range(dim):
        ketj = derived_ket(j, flavor=QUDIT, dim=dim)
        want_ket = np.zeros(dim, dtype=complex)
        want_ket[j] = 1.0
        worst = max(worst, max_rel_dev(interpret(ketj, "asymmetric"), want_ket))
        want_bra = np.zeros(dim, dtype=complex)
        want_bra[j] = math.factorial(j)
        worst = max(worst, max_rel_dev(interpret(dagger(ketj), "asymmetric"), want_bra))
    report["ket_pin_dev"] = worst
    report["ket_pins_ok"] = worst <= tol
    report["passed"] = report["ket_pins_ok"] and report["closed_ok"] is not False
    return report
