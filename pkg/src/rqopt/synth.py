"""Query templates, hand-built fixtures and seeded synthetic graphs."""

from __future__ import annotations

import re
from collections.abc import Mapping
from dataclasses import dataclass

import numpy as np

from .graph import LABEL_KEY, PropertyGraph
from .ir import Program, QueryError, parse_program


# -- templates ----------------------------------------------------------------------

_BASE = """
R(s, t) :- E(s, e, t), P(e, "label", {l1}).
S(s, t) :- E(s, e, t), P(e, "label", {l2}).
T(s, t) :- E(s, e, t), P(e, "label", {l3}).
"""

TEMPLATES: dict[str, str] = {
    "CCC1": "Ans(x, y, z) :- R+(x, y), S(x, z), T(z, y).",
    "CCC2": "Ans(x, y, z) :- R+(x, y), S(x, z), T(y, z).",
    "CCC3": "Ans(x, y, z) :- R+(x, y), S(z, x), T(z, y).",
    "CCC4": "Ans(x, y, z) :- R+(x, y), S(z, x), T(y, z).",
    "PCC2": "Ans(x, y) :- R+(x, y), S+(x, y).",
    "PCC3": "Ans(x, y) :- R+(x, y), S+(x, y), T+(x, y).",
    "RQ": "I(x, y) :- S(x, y), T+(x, z), z = {c1}.\nAns(x, y, z) :- R(x, y), I+(y, z).",
}

def _literal(value: str | int) -> str:
    if isinstance(value, int) or re.fullmatch(r"-?\d+", str(value)):
        return str(value)
    return '"' + str(value).replace("\\", "\\\\").replace('"', '\\"') + '"'


def template_text(name: str, bindings: Mapping[str, str | int]) -> str:
    """Source text of template ``name`` with l1, l2, l3 (labels) and c1 (constant) bound."""
    if name not in TEMPLATES:
        raise QueryError(f"unknown template {name!r}; expected one of {', '.join(TEMPLATES)}")
    text = _BASE + TEMPLATES[name]
    needed = set(re.findall(r"\{(\w+)\}", text))
    missing = sorted(needed - set(bindings))
    if missing:
        raise QueryError(f"template {name}: unbound template variable(s) {', '.join(missing)}")
    return text.format(**{k: _literal(bindings[k]) for k in needed})


def instantiate_template(name: str, bindings: Mapping[str, str | int]) -> Program:
    return parse_program(template_text(name, bindings))


def parse_bindings(text: str) -> dict[str, str]:
    """``key = value`` lines (``#`` comments allowed); quotes around values are stripped."""
    out: dict[str, str] = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise QueryError(f"bindings line {lineno}: expected key = value, got {raw!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        out[key] = value.strip('"')
    return out


# -- named queries ------------------------------------------------------------------

IBAN = "IE12...78"

QUERY1 = f"""
O(s, t) :- E(s, e, t), P(e, "label", "owns").
T(s, t) :- E(s, e, t), P(e, "label", "transaction").
F(s) :- T+(s, t), P(t, "IBAN", "{IBAN}").
I(x, y) :- T(x, y), F(x).
Ans(w, z) :- O(w, x), I+(x, y), O(z, y), F(y).
"""

QUERY2 = """
O(s, t) :- E(s, e, t), P(e, "label", "owns").
T(s, t) :- E(s, e, t), P(e, "label", "transaction").
Ans(x, z) :- O(x, y), T+(y, z).
"""

QUERY3 = """
X(s, t) :- E(s, e, t), P(e, "label", "lx").
Y(s, t) :- E(s, e, t), P(e, "label", "ly").
Z(s, t) :- E(s, e, t), P(e, "label", "lz").
Ans(s, t) :- X+(s, t), Y+(s, t), Z+(s, t).
"""

QUERY4 = """
V(s, t) :- E(s, e, t), P(e, "label", "l1").
W(s, t) :- E(s, e, t), P(e, "label", "l2").
Y(s, t) :- E(s, e, t), P(e, "label", "l3").
Z(s, t) :- E(s, e, t), P(e, "label", "l4").
Ans(x, y, z) :- V+(s, x), W+(x, y), Y+(y, z), Z(x, z).
"""

QUERIES = {"query1": QUERY1, "query2": QUERY2, "query3": QUERY3, "query4": QUERY4}


# -- graph construction ---------------------------------------------------------------


class GraphMaker:
    """Collects named vertices and labelled edges, then builds a :class:`PropertyGraph`."""

    def __init__(self, edge_base: int = 1_000_000) -> None:
        self.ids: dict[str, int] = {}
        self.edges: list[tuple[int, int, int]] = []
        self.props: list[tuple[int, str, str]] = []
        self._next_edge = edge_base

    def vertex(self, name: str | int) -> int:
        key = str(name)
        if key not in self.ids:
            self.ids[key] = len(self.ids)
        return self.ids[key]

    def edge(self, src: str | int, label: str, dst: str | int) -> int:
        e = self._next_edge
        self._next_edge += 1
        self.edges.append((self.vertex(src), e, self.vertex(dst)))
        self.props.append((e, LABEL_KEY, label))
        return e

    def prop(self, obj: str | int, key: str, value: str) -> None:
        self.props.append((self.vertex(obj), key, value))

    def build(self) -> PropertyGraph:
        g = PropertyGraph.build(self.edges, self.props)
        g.names = {v: k for k, v in self.ids.items()}
        return g


def fig1_fragment() -> PropertyGraph:
    """Accounts a1..a5 owned by p1..p3; a transaction path a1 -> a3 -> a5; a5 carries the IBAN."""
    m = GraphMaker()
    for p, a in (("p1", "a1"), ("p3", "a3"), ("p2", "a4")):
        m.edge(p, "owns", a)
    m.edge("a1", "transaction", "a3")
    m.edge("a3", "transaction", "a5")
    m.vertex("a2")
    m.prop("a5", "IBAN", IBAN)
    return m.build()


def query3_fragment() -> PropertyGraph:
    """Three labelled path families from s that meet at t (and one that does not)."""
    m = GraphMaker()
    m.edge("s", "lx", "x1")
    m.edge("x1", "lx", "t")
    m.edge("s", "ly", "t")
    m.edge("s", "lz", "z1")
    m.edge("z1", "lz", "z2")
    m.edge("z2", "lz", "t")
    m.edge("s", "lx", "u")
    m.edge("s", "ly", "u")
    m.edge("t", "lx", "s")
    m.edge("t", "ly", "s")
    m.edge("t", "lz", "s")
    return m.build()


def query4_fragment() -> PropertyGraph:
    """Label l3 is rarer than l2 so the interior closure over l3 is processed first."""
    m = GraphMaker()
    m.edge("s", "l1", "x")
    m.edge("s0", "l1", "s")
    m.edge("x", "l2", "y")
    m.edge("y", "l2", "y2")
    m.edge("x", "l2", "w")
    m.edge("w", "l2", "w2")
    m.edge("y2", "l3", "z")
    m.edge("x", "l4", "z")
    m.edge("x2", "l4", "z")
    m.edge("x2", "l2", "y")
    m.edge("z", "l2", "x")
    return m.build()


FRAGMENTS = {
    "query1": fig1_fragment,
    "query2": fig1_fragment,
    "query3": query3_fragment,
    "query4": query4_fragment,
}


def random_graph(
    seed: int,
    vertices: int = 24,
    edges: int = 60,
    labels: tuple[str, ...] = ("r", "s", "t", "u"),
    cycle: bool = True,
) -> PropertyGraph:
    """Uniform random labelled multigraph; ``cycle`` guarantees a directed cycle per label."""
    rng = np.random.default_rng(seed)
    m = GraphMaker()
    for v in range(vertices):
        m.vertex(v)
    if cycle:
        for label in labels:
            length = int(rng.integers(2, 5))
            nodes = [int(x) for x in rng.choice(vertices, size=length, replace=False)]
            for a, b in zip(nodes, nodes[1:] + nodes[:1]):
                m.edge(a, label, b)
    while len(m.edges) < edges:
        s, t = (int(x) for x in rng.integers(0, vertices, size=2))
        m.edge(s, labels[int(rng.integers(0, len(labels)))], t)
    return m.build()


RANDOM_BINDINGS = {"l1": "r", "l2": "s", "l3": "t", "c1": 3}


# -- selective instances --------------------------------------------------------------


@dataclass(frozen=True)
class Instance:
    """A named query on a graph built to make one optimization layer pay off."""

    name: str
    program_text: str
    graph: PropertyGraph

    @property
    def program(self) -> Program:
        return parse_program(self.program_text)


def _chains(m: GraphMaker, rng: np.random.Generator, label: str, nodes: list[int], jumps: int) -> None:
    """A long path over ``nodes`` plus a few forward shortcuts: hub-free, large closure."""
    for a, b in zip(nodes, nodes[1:]):
        m.edge(a, label, b)
    for _ in range(jumps):
        i = int(rng.integers(0, len(nodes) - 2))
        j = int(rng.integers(i + 1, min(len(nodes), i + 12)))
        m.edge(nodes[i], label, nodes[j])


def selective_instances(seed: int = 0, vertices: int = 1000, fraction: float = 0.01) -> list[Instance]:
    """Instances where only ``fraction`` of closure sources survive the seeding join.

    * ``exterior``: Query 2 shape; exterior seeding already pays off.
    * ``interior``: CCC2 shape; the closure is interior, so only interior seeding helps.
    * ``stacked``: PCC3 shape; stacking shrinks the seed for the later closures.
    """
    rng = np.random.default_rng(seed)
    n_seed = max(1, int(round(vertices * fraction)))
    out: list[Instance] = []

    # exterior: O(x, y), T+(y, z); T is a set of disjoint long chains over all vertices
    m = GraphMaker()
    order = [int(x) for x in rng.permutation(vertices)]
    for k in range(0, vertices, 100):
        _chains(m, rng, "transaction", order[k : k + 100], jumps=10)
    for y in rng.choice(vertices, size=n_seed, replace=False):
        m.edge(f"p{int(y)}", "owns", int(y))
    out.append(Instance("exterior", QUERY2, m.build()))

    # interior: R+(x, y), S(x, z), T(y, z); S and T edges exist for only a few x
    m = GraphMaker()
    order = [int(x) for x in rng.permutation(vertices)]
    for k in range(0, vertices, 100):
        _chains(m, rng, "r", order[k : k + 100], jumps=10)
    for x in rng.choice(vertices, size=n_seed, replace=False):
        z = f"z{int(x)}"
        m.edge(int(x), "s", z)
        for y in rng.choice(vertices, size=3, replace=False):
            m.edge(int(y), "t", z)
    text = _BASE.format(l1='"r"', l2='"s"', l3='"t"') + TEMPLATES["CCC2"]
    out.append(Instance("interior", text, m.build()))

    # stacked: R+, S+, T+ on (x, y); S leaves only a few vertices, R and T are long chains
    g = _stacked_graph(rng, vertices, n_seed)
    text = _BASE.format(l1='"r"', l2='"s"', l3='"t"')
    out.append(Instance("stacked", text + TEMPLATES["PCC3"], g))
    out.append(Instance("pcc2", text + TEMPLATES["PCC2"], g))
    return out


def _stacked_graph(rng: np.random.Generator, vertices: int, n_seed: int) -> PropertyGraph:
    m = GraphMaker()
    succ: dict[int, int] = {}
    for label in ("r", "t"):
        order = [int(x) for x in rng.permutation(vertices)]
        for k in range(0, vertices, 50):
            part = order[k : k + 50]
            _chains(m, rng, label, part, jumps=5)
            if label == "r":
                succ.update(zip(part, part[1:]))
    for x in rng.choice(vertices, size=n_seed, replace=False):
        y = int(x)
        for _ in range(3):
            y = succ.get(y, y)
        m.edge(int(x), "s", f"s{int(x)}")
        m.edge(f"s{int(x)}", "s", y)
        m.edge(int(x), "t", y)
    return m.build()


def selective_instance(name: str, seed: int = 0) -> Instance:
    for inst in selective_instances(seed):
        if inst.name == name:
            return inst
    raise KeyError(name)
