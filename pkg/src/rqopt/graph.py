"""Property graph storage, file ingestion and catalog statistics.

A property graph is the pair of an edge set ``E`` of ``(src, edge, dst)``
triples and a property set ``P`` of ``(obj, key, value)`` triples.  Property
keys and values are dictionary-encoded; edges are additionally grouped per
label into compressed sparse rows (one per direction) so that label scans
and seeded expansions only touch the edges they need.
"""

from __future__ import annotations

import io
from collections import Counter, defaultdict
from collections.abc import Iterable, Sequence
from dataclasses import dataclass, field
from typing import TextIO

import numpy as np

LABEL_KEY = "label"

Value = int | str


class GraphError(Exception):
    """Base class for graph ingestion errors."""


class GraphParseError(GraphError):
    def __init__(self, source: str, lineno: int, message: str) -> None:
        super().__init__(f"{source}:{lineno}: {message}")
        self.source = source
        self.lineno = lineno


class GraphIntegrityError(GraphError):
    pass


def typed_value(text: str) -> Value:
    """Property values that parse as integers compare as integers."""
    try:
        return int(text)
    except ValueError:
        return text


class Dictionary:
    """Bidirectional string <-> reference map."""

    def __init__(self) -> None:
        self._strings: list[str] = []
        self._refs: dict[str, int] = {}

    def encode(self, s: str) -> int:
        ref = self._refs.get(s)
        if ref is None:
            ref = len(self._strings)
            self._strings.append(s)
            self._refs[s] = ref
        return ref

    def lookup(self, s: str) -> int | None:
        return self._refs.get(s)

    def decode(self, ref: int) -> str:
        return self._strings[ref]

    def __len__(self) -> int:
        return len(self._strings)

    def __contains__(self, s: object) -> bool:
        return s in self._refs


@dataclass(frozen=True)
class LabelCSR:
    """Edges carrying one label, as CSR in both directions.

    ``vertices`` holds the sorted distinct vertex ids touched by the label;
    rows and neighbour arrays index into it.
    """

    vertices: np.ndarray
    fwd_ptr: np.ndarray
    fwd_nbr: np.ndarray
    fwd_eid: np.ndarray
    rev_ptr: np.ndarray
    rev_nbr: np.ndarray
    rev_eid: np.ndarray

    @classmethod
    def build(cls, src: Sequence[int], eid: Sequence[int], dst: Sequence[int]) -> LabelCSR:
        s = np.asarray(src, dtype=np.int64)
        e = np.asarray(eid, dtype=np.int64)
        d = np.asarray(dst, dtype=np.int64)
        vertices = np.unique(np.concatenate([s, d])) if len(s) else np.empty(0, np.int64)
        si = np.searchsorted(vertices, s)
        di = np.searchsorted(vertices, d)
        fwd = _csr(si, di, e, len(vertices))
        rev = _csr(di, si, e, len(vertices))
        return cls(vertices, *fwd, *rev)

    def __len__(self) -> int:
        return len(self.fwd_nbr)

    def pairs(self, reverse: bool = False) -> set[tuple[int, int]]:
        ptr, nbr = (self.rev_ptr, self.rev_nbr) if reverse else (self.fwd_ptr, self.fwd_nbr)
        rows = np.repeat(self.vertices, np.diff(ptr))
        cols = self.vertices[nbr]
        return set(zip(rows.tolist(), cols.tolist()))

    def triples(self) -> list[tuple[int, int, int]]:
        rows = np.repeat(self.vertices, np.diff(self.fwd_ptr))
        return list(zip(rows.tolist(), self.fwd_eid.tolist(), self.vertices[self.fwd_nbr].tolist()))

    def distinct_sources(self) -> int:
        return int(np.count_nonzero(np.diff(self.fwd_ptr)))

    def distinct_targets(self) -> int:
        return int(np.count_nonzero(np.diff(self.rev_ptr)))


def _csr(rows: np.ndarray, cols: np.ndarray, eids: np.ndarray, n: int):
    order = np.lexsort((cols, rows))
    counts = np.bincount(rows, minlength=n) if n else np.zeros(0, np.int64)
    ptr = np.zeros(n + 1, dtype=np.int64)
    np.cumsum(counts, out=ptr[1:])
    return ptr, cols[order], eids[order]


@dataclass
class PropertyGraph:
    """The pair ``G = (E, P)``; treat as immutable once built."""

    edges: list[tuple[int, int, int]]
    props: list[tuple[int, int, int]]
    dict: Dictionary
    vertex_ids: frozenset[int]
    edge_ids: frozenset[int]
    labels: dict[str, LabelCSR] = field(default_factory=dict)
    names: dict[int, str] = field(default_factory=dict)
    _prop_index: dict[tuple[str, Value], list[int]] = field(default_factory=dict, repr=False)
    _key_index: dict[str, list[tuple[int, Value]]] = field(default_factory=dict, repr=False)

    @classmethod
    def build(
        cls,
        edges: Iterable[tuple[int, int, int]],
        props: Iterable[tuple[int, str, str]],
        dictionary: Dictionary | None = None,
    ) -> PropertyGraph:
        d = dictionary or Dictionary()
        edge_list: list[tuple[int, int, int]] = []
        seen_eids: set[int] = set()
        vertices: set[int] = set()
        for s, e, t in edges:
            if e in seen_eids:
                raise GraphIntegrityError(f"duplicate edge id {e}")
            seen_eids.add(e)
            edge_list.append((s, e, t))
            vertices.add(s)
            vertices.add(t)
        clash = vertices & seen_eids
        if clash:
            raise GraphIntegrityError(f"ids used as both vertex and edge: {sorted(clash)[:5]}")

        prop_set: set[tuple[int, int, int]] = set()
        for o, k, v in props:
            prop_set.add((o, d.encode(k), d.encode(_normalize(v))))
        prop_list = sorted(prop_set)
        for o, _, _ in prop_list:
            if o not in seen_eids:
                vertices.add(o)

        g = cls(edge_list, prop_list, d, frozenset(vertices), frozenset(seen_eids))
        g._index()
        return g

    def _index(self) -> None:
        d = self.dict
        label_ref = d.lookup(LABEL_KEY)
        edge_labels: dict[int, list[str]] = defaultdict(list)
        for o, k, v in self.props:
            key = d.decode(k)
            value = typed_value(d.decode(v))
            self._prop_index.setdefault((key, value), []).append(o)
            self._key_index.setdefault(key, []).append((o, value))
            if k == label_ref and o in self.edge_ids:
                edge_labels[o].append(d.decode(v))
        grouped: dict[str, tuple[list[int], list[int], list[int]]] = defaultdict(lambda: ([], [], []))
        for s, e, t in self.edges:
            for label in edge_labels.get(e, ()):
                cols = grouped[label]
                cols[0].append(s)
                cols[1].append(e)
                cols[2].append(t)
        self.labels = {label: LabelCSR.build(*cols) for label, cols in sorted(grouped.items())}

    # -- read access ---------------------------------------------------

    def prop_rows(self) -> list[tuple[int, str, Value]]:
        d = self.dict
        return [(o, d.decode(k), typed_value(d.decode(v))) for o, k, v in self.props]

    def objects_with(self, key: str, value: Value) -> list[int]:
        return self._prop_index.get((key, value), [])

    def key_rows(self, key: str) -> list[tuple[int, Value]]:
        return self._key_index.get(key, [])

    def label_triples(self, label: str) -> list[tuple[int, int, int]]:
        csr = self.labels.get(str(label))
        return csr.triples() if csr is not None else []

    def __repr__(self) -> str:
        return f"PropertyGraph(|V|={len(self.vertex_ids)}, |E|={len(self.edges)}, |P|={len(self.props)})"


def _normalize(v: object) -> str:
    return str(typed_value(str(v)))


# -- ingestion ---------------------------------------------------------------


def _rows(stream: TextIO, name: str, ncols: int):
    for lineno, raw in enumerate(stream, start=1):
        line = raw.rstrip("\r\n")
        if not line.strip() or line.lstrip().startswith("#"):
            continue
        parts = line.split("\t")
        if len(parts) != ncols:
            raise GraphParseError(name, lineno, f"expected {ncols} tab-separated columns, got {len(parts)}")
        yield lineno, parts


def _int(text: str, name: str, lineno: int, what: str) -> int:
    try:
        value = int(text)
    except ValueError:
        raise GraphParseError(name, lineno, f"{what} must be an integer, got {text!r}") from None
    if value < 0:
        raise GraphParseError(name, lineno, f"{what} must be non-negative, got {value}")
    return value


def load_graph(edges_source: TextIO | str, props_source: TextIO | str | None = None) -> PropertyGraph:
    """Read ``src<TAB>edge<TAB>dst`` and ``obj<TAB>key<TAB>value`` streams."""
    if isinstance(edges_source, str):
        edges_source = io.StringIO(edges_source)
    if props_source is None:
        props_source = io.StringIO("")
    elif isinstance(props_source, str):
        props_source = io.StringIO(props_source)
    ename = getattr(edges_source, "name", "<edges>")
    pname = getattr(props_source, "name", "<props>")

    edges = []
    for lineno, (s, e, t) in _rows(edges_source, ename, 3):
        edges.append((_int(s, ename, lineno, "src"), _int(e, ename, lineno, "edge"), _int(t, ename, lineno, "dst")))
    props = []
    for lineno, (o, k, v) in _rows(props_source, pname, 3):
        props.append((_int(o, pname, lineno, "obj"), k, v))
    return PropertyGraph.build(edges, props)


def ingest_rdf(triples: Iterable[tuple[str, str, str]]) -> PropertyGraph:
    """Convert RDF triples: subjects/objects become vertices, triples become labelled edges.

    Vertex ids are assigned in order of first appearance starting at 0; edge
    ids continue after the last vertex id, so the two ranges are disjoint.
    """
    unique: list[tuple[str, str, str]] = list(dict.fromkeys((str(s), str(p), str(o)) for s, p, o in triples))
    eta: dict[str, int] = {}
    for s, _, o in unique:
        eta.setdefault(s, len(eta))
        eta.setdefault(o, len(eta))
    base = len(eta)
    edges = []
    props = []
    for i, (s, p, o) in enumerate(unique):
        zeta = base + i
        edges.append((eta[s], zeta, eta[o]))
        props.append((zeta, LABEL_KEY, p))
    g = PropertyGraph.build(edges, props)
    g.names = {v: k for k, v in eta.items()}
    return g


def read_rdf(stream: TextIO) -> list[tuple[str, str, str]]:
    name = getattr(stream, "name", "<rdf>")
    return [tuple(parts) for _, parts in _rows(stream, name, 3)]  # type: ignore[misc]


def write_graph(g: PropertyGraph, edges_out: TextIO, props_out: TextIO) -> None:
    for s, e, t in g.edges:
        edges_out.write(f"{s}\t{e}\t{t}\n")
    for o, k, v in g.prop_rows():
        props_out.write(f"{o}\t{k}\t{v}\n")


# -- catalog -----------------------------------------------------------------


@dataclass(frozen=True)
class Catalog:
    """Exact statistics over a graph."""

    total_edges: int
    vertex_count: int
    label_count: dict[str, int]
    distinct_src: dict[str, int]
    distinct_dst: dict[str, int]
    prop_count: int = 0
    key_count: dict[str, int] = field(default_factory=dict)
    key_value_count: dict[tuple[str, Value], int] = field(default_factory=dict)

    @classmethod
    def empty(cls) -> Catalog:
        return cls(0, 0, {}, {}, {})


def build_catalog(g: PropertyGraph) -> Catalog:
    label_count = {l: len(csr) for l, csr in g.labels.items()}
    distinct_src = {l: csr.distinct_sources() for l, csr in g.labels.items()}
    distinct_dst = {l: csr.distinct_targets() for l, csr in g.labels.items()}
    keys: Counter[str] = Counter()
    key_values: Counter[tuple[str, Value]] = Counter()
    for _, k, v in g.prop_rows():
        keys[k] += 1
        key_values[(k, v)] += 1
    return Catalog(
        total_edges=len(g.edges),
        vertex_count=len(g.vertex_ids),
        label_count=label_count,
        distinct_src=distinct_src,
        distinct_dst=distinct_dst,
        prop_count=len(g.props),
        key_count=dict(keys),
        key_value_count=dict(key_values),
    )


def scan_label(g: PropertyGraph, label: str, direction: str = "forward") -> set[tuple[int, int]]:
    """All ``(s, t)`` joined by an edge carrying ``label``; ``reverse`` swaps columns."""
    if direction not in ("forward", "reverse"):
        raise ValueError(f"direction must be 'forward' or 'reverse', got {direction!r}")
    csr = g.labels.get(str(label))
    if csr is None:
        return set()
    return csr.pairs(reverse=direction == "reverse")
