"""Random diagram generation for property tests and context gluing.

``random_diagram`` samples a pool of generator nodes, then closes the
graph by randomly pairing all open ports (within each capacity class for
the mixed flavor), so every draw is a valid diagram by construction —
including self-loops, wires between boundary slots, and disconnected
pieces, all of which the rest of the library must cope with.
"""

from __future__ import annotations

import numpy as np

from .diagram import Diagram, GlobalScalar, KetOne, MIXED, QUDIT, WNode, ZSpider, _wire

_PARAMS = (
    1.0 + 0j,
    -1.0 + 0j,
    0j,
    1j,
    0.5 - 0.4j,
    2.0 + 0j,
    -0.3 + 1.1j,
)


def random_diagram(
    rng: np.random.Generator,
    *,
    flavor: str = QUDIT,
    dim: int | None = 3,
    n_in: int = 0,
    n_out: int = 1,
    n_nodes: int = 4,
    max_cap: int = 3,
    in_caps=None,
    out_caps=None,
    allow_scalar: bool = True,
) -> Diagram:
    """Draw a random valid diagram with the requested boundary."""
    if flavor == QUDIT:
        cap_pool = [dim - 1]
    else:
        dim = None
        cap_pool = list(range(1, max_cap + 1))

    def draw_cap(hi=None):
        pool = [c for c in cap_pool if hi is None or c <= hi]
        return int(rng.choice(pool))

    nodes = []
    ports = []  # (endpoint, cap)
    nid = 0
    for _ in range(n_nodes):
        kind = rng.choice(["z", "w", "ket", "scalar"] if allow_scalar
                          else ["z", "w", "ket"])
        if kind == "z":
            cap = draw_cap()
            legs = int(rng.integers(1, 5))
            nodes.append((nid, ZSpider(complex(rng.choice(_PARAMS)), cap)))
            for p in range(legs):
                ports.append((("n", nid, p), cap))
        elif kind == "w":
            in_cap = draw_cap()
            fanout = int(rng.integers(0, 4))
            out_caps_w = tuple(draw_cap(in_cap) for _ in range(fanout))
            nodes.append((nid, WNode(in_cap, out_caps_w)))
            ports.append((("n", nid, 0), in_cap))
            for p, c in enumerate(out_caps_w):
                ports.append((("n", nid, 1 + p), c))
        elif kind == "ket":
            cap = draw_cap()
            nodes.append((nid, KetOne(cap)))
            ports.append((("n", nid, 0), cap))
        else:
            nodes.append((nid, GlobalScalar(complex(rng.choice(_PARAMS)))))
        nid += 1

    ic = list(in_caps) if in_caps is not None else [draw_cap() for _ in range(n_in)]
    oc = list(out_caps) if out_caps is not None else [draw_cap() for _ in range(n_out)]
    if flavor == QUDIT:
        ic = [dim - 1] * n_in if in_caps is None else ic
        oc = [dim - 1] * n_out if out_caps is None else oc
    for i, c in enumerate(ic):
        ports.append((("in", i), c))
    for i, c in enumerate(oc):
        ports.append((("out", i), c))

    # balance parity per capacity class with 1-leg Z stubs
    by_cap: dict[int, list] = {}
    for ep, c in ports:
        by_cap.setdefault(c, []).append(ep)
    for c, eps in by_cap.items():
        if len(eps) % 2 == 1:
            nodes.append((nid, ZSpider(complex(rng.choice(_PARAMS)), c)))
            eps.append(("n", nid, 0))
            nid += 1

    wires = []
    for c, eps in sorted(by_cap.items()):
        order = list(eps)
        rng.shuffle(order)
        for i in range(0, len(order), 2):
            wires.append(_wire(order[i], order[i + 1]))

    return Diagram(
        flavor,
        dim,
        tuple(nodes),
        tuple(wires),
        tuple(ic),
        tuple(oc),
    )


def random_state(rng, *, flavor=QUDIT, dim=3, n_out=1, n_nodes=4, max_cap=3,
                 out_caps=None) -> Diagram:
    """A random diagram with no inputs."""
    return random_diagram(
        rng, flavor=flavor, dim=dim, n_in=0, n_out=n_out, n_nodes=n_nodes,
        max_cap=max_cap, out_caps=out_caps,
    )
