"""Logical query plans: operator graphs with buffers and embedded abstractions.

Operators reference their children by integer id, and ``PlanGraph.ops`` maps
ids to operators.  Columns are named; a join equates the listed column names
on both sides.  Buffers link a single :class:`BufferWrite` to any number of
:class:`BufferRead` operators and are the only way tuples can flow in a cycle.
"""

from __future__ import annotations

import heapq
import itertools
from collections.abc import Callable, Iterable, Mapping
from dataclasses import dataclass, field

import networkx as nx

from .ir import Const, ConjunctiveQuery, Var


class PlanError(Exception):
    pass


class SchemaMismatch(PlanError):
    pass


# -- operators ---------------------------------------------------------------


@dataclass(frozen=True)
class ScanE:
    """Reads the edge set ``E`` into columns (src, edge, dst)."""

    cols: tuple[str, str, str]
    kind = "ScanE"

    @property
    def children(self) -> tuple[int, ...]:
        return ()


@dataclass(frozen=True)
class ScanP:
    """Reads the property set ``P`` into columns (obj, key, value)."""

    cols: tuple[str, str, str]
    kind = "ScanP"

    @property
    def children(self) -> tuple[int, ...]:
        return ()


@dataclass(frozen=True)
class Join:
    """Natural join equating the ``on`` columns of both children."""

    left: int
    right: int
    on: tuple[str, ...]
    kind = "Join"

    @property
    def children(self) -> tuple[int, ...]:
        return (self.left, self.right)


@dataclass(frozen=True)
class Project:
    child: int
    cols: tuple[str, ...]
    kind = "Project"

    @property
    def children(self) -> tuple[int, ...]:
        return (self.child,)


@dataclass(frozen=True)
class Rename:
    """Output column ``out`` takes the value of child column ``src`` for each (out, src).

    A source column may feed several outputs, which is how identity pairs
    ``(u, u)`` are produced from a unary seed.
    """

    child: int
    mapping: tuple[tuple[str, str], ...]
    kind = "Rename"

    @property
    def children(self) -> tuple[int, ...]:
        return (self.child,)


@dataclass(frozen=True)
class Select:
    """Keeps tuples where every ``(col, operand)`` holds.

    The operand is a :class:`Const` (filter predicate) or a :class:`Var`
    naming a second column (used for repeated variables such as ``L(x, x)``).
    """

    child: int
    preds: tuple[tuple[str, Const | Var], ...]
    kind = "Select"

    @property
    def children(self) -> tuple[int, ...]:
        return (self.child,)


@dataclass(frozen=True)
class Union:
    inputs: tuple[int, ...]
    kind = "Union"

    @property
    def children(self) -> tuple[int, ...]:
        return self.inputs


@dataclass(frozen=True)
class BufferWrite:
    child: int
    buffer: int
    kind = "BufferWrite"

    @property
    def children(self) -> tuple[int, ...]:
        return (self.child,)


@dataclass(frozen=True)
class BufferRead:
    buffer: int
    cols: tuple[str, ...]
    kind = "BufferRead"

    @property
    def children(self) -> tuple[int, ...]:
        return ()


@dataclass(frozen=True)
class Dedup:
    child: int
    kind = "Dedup"

    @property
    def children(self) -> tuple[int, ...]:
        return (self.child,)


@dataclass(frozen=True)
class Abstraction:
    query: ConjunctiveQuery
    kind = "Abstraction"

    @property
    def children(self) -> tuple[int, ...]:
        return ()


Operator = ScanE | ScanP | Join | Project | Rename | Select | Union | BufferWrite | BufferRead | Dedup | Abstraction

OPERATOR_KINDS = (
    "ScanE", "ScanP", "Join", "Project", "Rename", "Select",
    "Union", "BufferWrite", "BufferRead", "Dedup", "Abstraction",
)
GENERATING_KINDS = frozenset({"ScanE", "ScanP", "Join"})


def remap(op: Operator, ids: Callable[[int], int], buffers: Callable[[int], int]) -> Operator:
    """Copy of ``op`` with child ids and buffer ids translated."""
    # direct constructors: this runs for every operator of every substitution
    if isinstance(op, Join):
        return Join(ids(op.left), ids(op.right), op.on)
    if isinstance(op, Union):
        return Union(tuple(ids(c) for c in op.inputs))
    if isinstance(op, BufferWrite):
        return BufferWrite(ids(op.child), buffers(op.buffer))
    if isinstance(op, BufferRead):
        return BufferRead(buffers(op.buffer), op.cols)
    if isinstance(op, Project):
        return Project(ids(op.child), op.cols)
    if isinstance(op, Rename):
        return Rename(ids(op.child), op.mapping)
    if isinstance(op, Select):
        return Select(ids(op.child), op.preds)
    if isinstance(op, Dedup):
        return Dedup(ids(op.child))
    return op


def rename_op_columns(op: Operator, f: Callable[[str], str]) -> Operator:
    """Copy of ``op`` with every column name passed through ``f``."""
    if isinstance(op, (ScanE, ScanP)):
        return type(op)(tuple(f(c) for c in op.cols))
    if isinstance(op, Join):
        return Join(op.left, op.right, tuple(f(c) for c in op.on))
    if isinstance(op, Project):
        return Project(op.child, tuple(f(c) for c in op.cols))
    if isinstance(op, Rename):
        return Rename(op.child, tuple((f(o), f(s)) for o, s in op.mapping))
    if isinstance(op, Select):
        preds = tuple((f(c), Var(f(x.name)) if isinstance(x, Var) else x) for c, x in op.preds)
        return Select(op.child, preds)
    if isinstance(op, BufferRead):
        return BufferRead(op.buffer, tuple(f(c) for c in op.cols))
    return op


# -- plans ---------------------------------------------------------------------


@dataclass(frozen=True)
class PlanGraph:
    """A plan ``(O, r)`` plus its abstraction stack (top of stack = last element).

    ``optimized`` records whether a seeding rule contributed to the plan;
    ``query`` is the conjunctive query the plan answers, when known.
    """

    ops: Mapping[int, Operator]
    root: int
    abstractions: tuple[int, ...] = ()
    optimized: bool = False
    query: ConjunctiveQuery | None = field(default=None, compare=False)

    @property
    def buffers(self) -> frozenset[int]:
        return frozenset(op.buffer for op in self.ops.values() if isinstance(op, (BufferWrite, BufferRead)))

    @property
    def is_concrete(self) -> bool:
        return not self.abstractions

    def top_abstraction(self) -> int:
        return self.abstractions[-1]

    def columns(self, op_id: int | None = None) -> tuple[str, ...]:
        return output_columns(self, self.root if op_id is None else op_id)

    def count(self, kind: str) -> int:
        return sum(1 for op in self.ops.values() if op.kind == kind)

    def writer(self, buffer: int) -> int:
        for i, op in self.ops.items():
            if isinstance(op, BufferWrite) and op.buffer == buffer:
                return i
        raise PlanError(f"buffer {buffer} has no writer")

    def __len__(self) -> int:
        return len(self.ops)


class PlanBuilder:
    """Incrementally assembles operators with fresh ids and buffer ids."""

    def __init__(self) -> None:
        self.ops: dict[int, Operator] = {}
        self._ids = itertools.count()
        self._buffers = itertools.count(1)
        self.abstractions: list[int] = []

    def add(self, op: Operator) -> int:
        i = next(self._ids)
        self.ops[i] = op
        if isinstance(op, Abstraction):
            self.abstractions.append(i)
        return i

    def buffer(self) -> int:
        return next(self._buffers)

    def scan_e(self, s: str, e: str, t: str) -> int:
        return self.add(ScanE((s, e, t)))

    def scan_p(self, o: str, k: str, v: str) -> int:
        return self.add(ScanP((o, k, v)))

    def join(self, left: int, right: int, on: Iterable[str]) -> int:
        return self.add(Join(left, right, tuple(on)))

    def project(self, child: int, cols: Iterable[str]) -> int:
        return self.add(Project(child, tuple(cols)))

    def rename(self, child: int, mapping: Iterable[tuple[str, str]]) -> int:
        return self.add(Rename(child, tuple(mapping)))

    def select(self, child: int, preds: Iterable[tuple[str, Const | Var]]) -> int:
        return self.add(Select(child, tuple(preds)))

    def union(self, inputs: Iterable[int]) -> int:
        return self.add(Union(tuple(inputs)))

    def write(self, child: int, buffer: int) -> int:
        return self.add(BufferWrite(child, buffer))

    def read(self, buffer: int, cols: Iterable[str]) -> int:
        return self.add(BufferRead(buffer, tuple(cols)))

    def dedup(self, child: int) -> int:
        return self.add(Dedup(child))

    def abstraction(self, query: ConjunctiveQuery) -> int:
        return self.add(Abstraction(query))

    def build(
        self,
        root: int,
        query: ConjunctiveQuery | None = None,
        optimized: bool = False,
        stack: Iterable[int] | None = None,
    ) -> PlanGraph:
        order = tuple(self.abstractions if stack is None else stack)
        return PlanGraph(dict(self.ops), root, order, optimized, query)


def output_columns(plan: PlanGraph, op_id: int) -> tuple[str, ...]:
    cache: dict[int, tuple[str, ...]] = {}
    return _columns(plan, op_id, cache, set())


def all_columns(plan: PlanGraph) -> dict[int, tuple[str, ...]]:
    """Output columns of every operator, sharing one cache."""
    cache: dict[int, tuple[str, ...]] = {}
    for i in plan.ops:
        _columns(plan, i, cache, set())
    return cache


def _columns(plan: PlanGraph, op_id: int, cache: dict[int, tuple[str, ...]], active: set[int]) -> tuple[str, ...]:
    if op_id in cache:
        return cache[op_id]
    if op_id in active:
        raise PlanError(f"operator {op_id} is its own descendant")
    active.add(op_id)
    op = plan.ops[op_id]
    if isinstance(op, (ScanE, ScanP, BufferRead)):
        cols = op.cols
    elif isinstance(op, Abstraction):
        cols = op.query.head
    elif isinstance(op, Join):
        left = _columns(plan, op.left, cache, active)
        right = _columns(plan, op.right, cache, active)
        cols = left + tuple(c for c in right if c not in left)
    elif isinstance(op, Project):
        cols = op.cols
    elif isinstance(op, Rename):
        cols = tuple(out for out, _ in op.mapping)
    elif isinstance(op, Union):
        cols = _columns(plan, op.inputs[0], cache, active)
    else:  # Select, Dedup, BufferWrite
        cols = _columns(plan, op.children[0], cache, active)
    active.discard(op_id)
    cache[op_id] = cols
    return cols


# -- validation ------------------------------------------------------------------


def _flow_edges(plan: PlanGraph) -> dict[int, list[int]]:
    succ: dict[int, list[int]] = {i: [] for i in plan.ops}
    writers: dict[int, list[int]] = {}
    readers: dict[int, list[int]] = {}
    for i, op in plan.ops.items():
        for c in op.children:
            if c in plan.ops:
                succ[c].append(i)
        if isinstance(op, BufferWrite):
            writers.setdefault(op.buffer, []).append(i)
        elif isinstance(op, BufferRead):
            readers.setdefault(op.buffer, []).append(i)
    for b, ws in writers.items():
        for w in ws:
            succ[w].extend(readers.get(b, ()))
    return succ


def tuple_flow_graph(plan: PlanGraph) -> nx.DiGraph:
    """Edges child -> parent and BufferWrite -> BufferRead of the same buffer."""
    g = nx.DiGraph()
    g.add_nodes_from(plan.ops)
    g.add_edges_from((u, v) for u, vs in _flow_edges(plan).items() for v in vs)
    return g


def validate(plan: PlanGraph) -> list[str]:
    """Every violated structural rule, as human-readable strings (empty = ok)."""
    problems: list[str] = []
    ops = plan.ops
    if plan.root not in ops:
        return [f"root {plan.root} is not an operator of the plan"]

    for i, op in sorted(ops.items()):
        for c in op.children:
            if c not in ops:
                problems.append(f"operator {i} ({op.kind}) references missing child {c}")
    if problems:
        return problems

    child_graph = nx.DiGraph()
    child_graph.add_nodes_from(ops)
    child_graph.add_edges_from((i, c) for i, op in ops.items() for c in op.children)
    if not nx.is_directed_acyclic_graph(child_graph):
        cycle = nx.find_cycle(child_graph)
        return [f"direct operator cycle {[u for u, _ in cycle]} (cycles must pass through buffers)"]

    writers: dict[int, list[int]] = {}
    readers: dict[int, list[int]] = {}
    for i, op in ops.items():
        if isinstance(op, BufferWrite):
            writers.setdefault(op.buffer, []).append(i)
        elif isinstance(op, BufferRead):
            readers.setdefault(op.buffer, []).append(i)
    for b in sorted(set(writers) | set(readers)):
        w = writers.get(b, [])
        if len(w) != 1:
            problems.append(f"buffer {b} has {len(w)} BufferWrite operators (expected exactly 1)")
        if not readers.get(b):
            problems.append(f"buffer {b} has no BufferRead operator")

    cols: dict[int, tuple[str, ...]] = {}
    for i in ops:
        try:
            cols[i] = output_columns(plan, i)
        except (PlanError, KeyError, IndexError) as exc:
            problems.append(f"operator {i}: cannot determine columns ({exc})")
    if len(cols) == len(ops):
        problems.extend(_schema_problems(plan, cols, writers))

    flow = tuple_flow_graph(plan)
    for scc in nx.strongly_connected_components(flow):
        cyclic = len(scc) > 1 or any(flow.has_edge(n, n) for n in scc)
        if not cyclic:
            continue
        without = flow.subgraph(n for n in scc if not isinstance(ops[n], Dedup))
        if not nx.is_directed_acyclic_graph(without):
            problems.append(f"tuple-flow cycle through operators {sorted(scc)} has no Dedup")

    reach = nx.DiGraph()
    reach.add_nodes_from(ops)
    reach.add_edges_from(child_graph.edges)
    for b, rs in readers.items():
        for r in rs:
            for w in writers.get(b, ()):
                reach.add_edge(r, w)
    unreachable = set(ops) - nx.descendants(reach, plan.root) - {plan.root}
    if unreachable:
        problems.append(f"operators {sorted(unreachable)} are unreachable from the root")

    abstraction_ids = {i for i, op in ops.items() if isinstance(op, Abstraction)}
    if len(set(plan.abstractions)) != len(plan.abstractions):
        problems.append("abstraction stack contains duplicates")
    if set(plan.abstractions) != abstraction_ids:
        problems.append(
            f"abstraction stack {list(plan.abstractions)} does not match abstraction operators {sorted(abstraction_ids)}"
        )
    return problems


def _schema_problems(plan: PlanGraph, cols: dict[int, tuple[str, ...]], writers: dict[int, list[int]]) -> list[str]:
    out: list[str] = []
    for i, op in sorted(plan.ops.items()):
        if len(set(cols[i])) != len(cols[i]):
            out.append(f"operator {i} ({op.kind}) outputs duplicate columns {cols[i]}")
        if isinstance(op, Join):
            left, right = set(cols[op.left]), set(cols[op.right])
            if not op.on:
                out.append(f"join {i} has no join predicates")
            elif set(op.on) != left & right:
                out.append(f"join {i} on {op.on} but children share {sorted(left & right)}")
        elif isinstance(op, Select):
            child = set(cols[op.child])
            if not op.preds:
                out.append(f"select {i} has no filter predicates")
            for col, operand in op.preds:
                if col not in child or (isinstance(operand, Var) and operand.name not in child):
                    out.append(f"select {i} filters on a column its child lacks")
        elif isinstance(op, Project):
            if not set(op.cols) <= set(cols[op.child]):
                out.append(f"project {i} keeps columns {op.cols} missing from child {cols[op.child]}")
        elif isinstance(op, Rename):
            if not {src for _, src in op.mapping} <= set(cols[op.child]):
                out.append(f"rename {i} reads columns missing from child {cols[op.child]}")
        elif isinstance(op, Union):
            first = set(cols[op.inputs[0]])
            if any(set(cols[c]) != first for c in op.inputs[1:]):
                out.append(f"union {i} children have different columns")
        elif isinstance(op, BufferRead):
            w = writers.get(op.buffer, [])
            if len(w) == 1 and set(cols[w[0]]) != set(op.cols):
                out.append(f"read {i} of buffer {op.buffer} expects {op.cols}, writer produces {cols[w[0]]}")
    return out


# -- flow groups ---------------------------------------------------------------


@dataclass(frozen=True)
class FlowGroup:
    ops: tuple[int, ...]
    fixpoint: bool


def _scc(succ: dict[int, list[int]]) -> dict[int, int]:
    """Component index per node (iterative Tarjan)."""
    index: dict[int, int] = {}
    low: dict[int, int] = {}
    comp: dict[int, int] = {}
    stack: list[int] = []
    on_stack: set[int] = set()
    counter = 0
    n_comps = 0
    for start in succ:
        if start in index:
            continue
        work = [(start, iter(succ[start]))]
        index[start] = low[start] = counter
        counter += 1
        stack.append(start)
        on_stack.add(start)
        while work:
            node, it = work[-1]
            advanced = False
            for nxt in it:
                if nxt not in index:
                    index[nxt] = low[nxt] = counter
                    counter += 1
                    stack.append(nxt)
                    on_stack.add(nxt)
                    work.append((nxt, iter(succ[nxt])))
                    advanced = True
                    break
                if nxt in on_stack:
                    low[node] = min(low[node], index[nxt])
            if advanced:
                continue
            work.pop()
            if work:
                parent = work[-1][0]
                low[parent] = min(low[parent], low[node])
            if low[node] == index[node]:
                while True:
                    w = stack.pop()
                    on_stack.discard(w)
                    comp[w] = n_comps
                    if w == node:
                        break
                n_comps += 1
    return comp


def flow_groups(plan: PlanGraph) -> list[FlowGroup]:
    """Strongly connected components of the tuple-flow graph in topological order.

    Ties between ready components go to the one with the smallest operator id,
    so the order is deterministic.  Runs once per costed plan, hence no networkx.
    """
    succ = _flow_edges(plan)
    comp = _scc(succ)
    members: dict[int, list[int]] = {}
    for node, c in comp.items():
        members.setdefault(c, []).append(node)
    indeg = {c: 0 for c in members}
    out: dict[int, set[int]] = {c: set() for c in members}
    for u, vs in succ.items():
        for v in vs:
            cu, cv = comp[u], comp[v]
            if cu != cv and cv not in out[cu]:
                out[cu].add(cv)
                indeg[cv] += 1
    first = {c: min(ns) for c, ns in members.items()}
    ready = [(first[c], c) for c, d in indeg.items() if d == 0]
    heapq.heapify(ready)
    groups = []
    while ready:
        _, c = heapq.heappop(ready)
        nodes = tuple(sorted(members[c]))
        cyclic = len(nodes) > 1 or nodes[0] in succ[nodes[0]]
        groups.append(FlowGroup(nodes, cyclic))
        for d in out[c]:
            indeg[d] -= 1
            if indeg[d] == 0:
                heapq.heappush(ready, (first[d], d))
    return groups


# -- substitution ----------------------------------------------------------------


def substitute(plan: PlanGraph, abstraction_id: int, replacement: PlanGraph) -> PlanGraph:
    """Replace the top abstraction of ``plan`` by ``replacement`` (ids freshened).

    Returns a new plan; neither input is modified.
    """
    if not plan.abstractions or plan.abstractions[-1] != abstraction_id:
        raise PlanError(f"operator {abstraction_id} is not the top abstraction")
    target = plan.ops[abstraction_id]
    assert isinstance(target, Abstraction)
    if replacement.abstractions:
        raise PlanError("replacement plan still contains abstractions")
    produced = set(replacement.columns())
    needed = set(target.query.head)
    if not needed <= produced:
        raise SchemaMismatch(
            f"replacement produces {sorted(produced)} but the abstraction needs {sorted(needed)}"
        )

    op_offset = max(plan.ops) + 1
    buf_offset = max(plan.buffers, default=0)
    new_ops: dict[int, Operator] = {}
    root_id = replacement.root + op_offset
    for i, op in replacement.ops.items():
        new_ops[i + op_offset] = remap(op, lambda c: c + op_offset, lambda b: b + buf_offset)
    if produced != needed:
        proj = max(new_ops) + 1
        new_ops[proj] = Project(root_id, tuple(c for c in replacement.columns() if c in needed))
        root_id = proj

    redirect = lambda c: root_id if c == abstraction_id else c  # noqa: E731
    for i, op in plan.ops.items():
        if i != abstraction_id:
            new_ops[i] = remap(op, redirect, lambda b: b)
    root = root_id if plan.root == abstraction_id else plan.root
    return PlanGraph(
        new_ops,
        root,
        plan.abstractions[:-1],
        plan.optimized or replacement.optimized,
        plan.query,
    )


def compact(plan: PlanGraph) -> PlanGraph:
    """Renumber operators 0..n-1 and buffers 1..m in deterministic traversal order."""
    order: list[int] = []
    seen: set[int] = set()
    writer = {op.buffer: i for i, op in plan.ops.items() if isinstance(op, BufferWrite)}

    def visit(i: int) -> None:
        if i in seen:
            return
        seen.add(i)
        order.append(i)
        op = plan.ops[i]
        for c in op.children:
            visit(c)
        if isinstance(op, BufferRead) and op.buffer in writer:
            visit(writer[op.buffer])

    visit(plan.root)
    for i in sorted(plan.ops):
        visit(i)
    ids = {old: new for new, old in enumerate(order)}
    bufs: dict[int, int] = {}
    for i in order:
        op = plan.ops[i]
        if isinstance(op, (BufferWrite, BufferRead)) and op.buffer not in bufs:
            bufs[op.buffer] = len(bufs) + 1
    ops = {ids[i]: remap(plan.ops[i], ids.__getitem__, bufs.__getitem__) for i in order}
    stack = tuple(ids[a] for a in plan.abstractions)
    return PlanGraph(ops, ids[plan.root], stack, plan.optimized, plan.query)


# -- rendering ----------------------------------------------------------------------


def describe(op: Operator) -> str:
    if isinstance(op, (ScanE, ScanP)):
        return f"{op.kind}({', '.join(op.cols)})"
    if isinstance(op, Join):
        return f"Join[{', '.join(op.on)}]"
    if isinstance(op, Project):
        return f"Project[{', '.join(op.cols)}]"
    if isinstance(op, Rename):
        return "Rename[" + ", ".join(f"{o}<-{s}" for o, s in op.mapping) + "]"
    if isinstance(op, Select):
        return "Select[" + ", ".join(f"{c}={v}" for c, v in op.preds) + "]"
    if isinstance(op, BufferWrite):
        return f"BufferWrite(b{op.buffer})"
    if isinstance(op, BufferRead):
        return f"BufferRead(b{op.buffer}: {', '.join(op.cols)})"
    if isinstance(op, Abstraction):
        return f"Abstraction({op.query})"
    return op.kind


def render_dot(plan: PlanGraph, title: str = "plan") -> str:
    """Deterministic Graphviz text; solid edges parent->child, dashed read->write."""
    p = compact(plan)
    lines = [f'digraph "{_escape(title)}" {{', "  node [shape=box, fontname=monospace];"]
    fix = {i for g in flow_groups(p) if g.fixpoint for i in g.ops}
    for i in sorted(p.ops):
        style = ", style=filled, fillcolor=lightyellow" if i in fix else ""
        root = ", penwidth=2" if i == p.root else ""
        lines.append(f'  n{i} [label="{_escape(describe(p.ops[i]))}"{style}{root}];')
    writer = {op.buffer: i for i, op in p.ops.items() if isinstance(op, BufferWrite)}
    for i in sorted(p.ops):
        op = p.ops[i]
        for c in op.children:
            lines.append(f"  n{i} -> n{c};")
        if isinstance(op, BufferRead) and op.buffer in writer:
            lines.append(f"  n{i} -> n{writer[op.buffer]} [style=dashed];")
    lines.append("}")
    return "\n".join(lines) + "\n"


def _escape(text: str) -> str:
    return text.replace("\\", "\\\\").replace('"', '\\"')


def render_text(plan: PlanGraph) -> str:
    """Indented tree dump; buffer reads reference their writer instead of recursing."""
    p = compact(plan)
    lines: list[str] = []
    printed: set[int] = set()
    writer = {op.buffer: i for i, op in p.ops.items() if isinstance(op, BufferWrite)}
    pending = [p.root]

    def visit(i: int, depth: int) -> None:
        op = p.ops[i]
        lines.append("  " * depth + describe(op))
        printed.add(i)
        for c in op.children:
            visit(c, depth + 1)
        if isinstance(op, BufferRead) and op.buffer in writer and writer[op.buffer] not in printed:
            pending.append(writer[op.buffer])

    while pending:
        i = pending.pop(0)
        if i not in printed:
            visit(i, 0)
    return "\n".join(lines) + "\n"


# -- index-backed fragments -----------------------------------------------------


@dataclass(frozen=True)
class LabelScan:
    """``ScanE ⋈ Select[key=label, value=l](ScanP)`` joined on the edge column."""

    scan_e: int
    select: int
    scan_p: int
    label: str


def label_scan(plan: PlanGraph, join_id: int) -> LabelScan | None:
    op = plan.ops[join_id]
    if not isinstance(op, Join):
        return None
    for e_id, s_id in ((op.left, op.right), (op.right, op.left)):
        e, s = plan.ops[e_id], plan.ops[s_id]
        if not isinstance(e, ScanE) or not isinstance(s, Select):
            continue
        p = plan.ops[s.child]
        if not isinstance(p, ScanP):
            continue
        obj, key, value = p.cols
        if op.on != (e.cols[1],) or obj != e.cols[1] or len({*e.cols, key, value}) != 5:
            continue
        preds = dict(s.preds)
        if len(preds) != 2 or preds.get(key) != Const("label") or not isinstance(preds.get(value), Const):
            continue
        return LabelScan(e_id, s_id, s.child, str(preds[value].value))  # type: ignore[union-attr]
    return None


def property_lookup(plan: PlanGraph, select_id: int) -> tuple[str, object | None] | None:
    """``Select`` over ``ScanP`` with a constant key: returns (key, value-or-None)."""
    op = plan.ops[select_id]
    if not isinstance(op, Select):
        return None
    p = plan.ops[op.child]
    if not isinstance(p, ScanP):
        return None
    _, key_col, value_col = p.cols
    preds = dict(op.preds)
    key = preds.get(key_col)
    if not isinstance(key, Const):
        return None
    value = preds.get(value_col)
    return str(key.value), value.value if isinstance(value, Const) else None
