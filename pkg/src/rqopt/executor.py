"""Set-semantics plan execution with semi-naive fixpoints, plus reference oracles."""

from __future__ import annotations

import time
from collections import defaultdict
from collections.abc import Iterable, Sequence
from dataclasses import dataclass, field

from .graph import LABEL_KEY, PropertyGraph, scan_label
from .ir import Atom, Const, Program, Var, topological_predicates
from .plan import (
    GENERATING_KINDS,
    Abstraction,
    BufferRead,
    BufferWrite,
    Dedup,
    Join,
    PlanGraph,
    Project,
    Rename,
    ScanE,
    ScanP,
    Select,
    Union,
    all_columns,
    flow_groups,
    label_scan,
    property_lookup,
)

Row = tuple


class ExecutionError(Exception):
    pass


class ExecutionTimeout(ExecutionError):
    pass


@dataclass(frozen=True)
class Relation:
    columns: tuple[str, ...]
    rows: frozenset[Row] | set[Row]

    def __len__(self) -> int:
        return len(self.rows)

    def project(self, cols: Sequence[str]) -> set[Row]:
        idx = [self.columns.index(c) for c in cols]
        return {tuple(r[i] for i in idx) for r in self.rows}


@dataclass
class EvalMetrics:
    """``tuples_processed`` is c(p): output tuples of ScanE, ScanP and Join only."""

    tuples_processed: int = 0
    op_outputs: dict[int, int] = field(default_factory=dict)
    iterations: dict[int, int] = field(default_factory=dict)
    t_exec_ms: float = 0.0
    t_opt_ms: float = 0.0

    @property
    def t_total_ms(self) -> float:
        return self.t_exec_ms + self.t_opt_ms


def execute(plan: PlanGraph, g: PropertyGraph, timeout_ms: float | None = None) -> tuple[Relation, EvalMetrics]:
    return Executor(plan, g, timeout_ms).run()


def _reorder(rows: Iterable[Row], src: Sequence[str], dst: Sequence[str]) -> set[Row]:
    if tuple(src) == tuple(dst):
        return rows if isinstance(rows, set) else set(rows)
    idx = [src.index(c) for c in dst]
    return {tuple(r[i] for i in idx) for r in rows}


def hash_join(
    lcols: Sequence[str], lrows: Iterable[Row], rcols: Sequence[str], rrows: Iterable[Row], on: Sequence[str]
) -> set[Row]:
    """Natural join; output columns are ``lcols`` followed by the right-only columns."""
    li = [lcols.index(c) for c in on]
    ri = [rcols.index(c) for c in on]
    rest = [i for i, c in enumerate(rcols) if c not in lcols]
    table: dict[tuple, list[Row]] = defaultdict(list)
    for r in rrows:
        table[tuple(r[i] for i in ri)].append(r)
    out: set[Row] = set()
    for l in lrows:
        matches = table.get(tuple(l[i] for i in li))
        if matches:
            for r in matches:
                out.add(l + tuple(r[i] for i in rest))
    return out


class Executor:
    """Evaluates one abstraction-free plan; all state is per execution."""

    def __init__(self, plan: PlanGraph, g: PropertyGraph, timeout_ms: float | None = None) -> None:
        if plan.abstractions or any(isinstance(op, Abstraction) for op in plan.ops.values()):
            raise ExecutionError("plan still contains abstractions")
        self.plan = plan
        self.g = g
        self.deadline = None if timeout_ms is None else time.perf_counter() + timeout_ms / 1000.0
        self.values: dict[int, set[Row]] = {}
        self.buffers: dict[int, set[Row]] = {}
        self.metrics = EvalMetrics()
        self.cols = all_columns(plan)
        self.fused: dict[int, str] = {}
        self.skip: set[int] = set()
        for i in plan.ops:
            ls = label_scan(plan, i)
            if ls is not None:
                self.fused[i] = ls.label
                self.skip.update((ls.scan_e, ls.select, ls.scan_p))
        for i, op in plan.ops.items():
            if i not in self.skip and property_lookup(plan, i) is not None:
                self.skip.add(op.children[0])

    def _check(self) -> None:
        if self.deadline is not None and time.perf_counter() > self.deadline:
            raise ExecutionTimeout("execution exceeded its time limit")

    def _emit(self, i: int, n: int) -> None:
        self.metrics.op_outputs[i] = self.metrics.op_outputs.get(i, 0) + n
        if self.plan.ops[i].kind in GENERATING_KINDS:
            self.metrics.tuples_processed += n

    def run(self) -> tuple[Relation, EvalMetrics]:
        start = time.perf_counter()
        for group in flow_groups(self.plan):
            self._check()
            if group.fixpoint:
                self._fixpoint(group.ops)
            else:
                (i,) = group.ops
                if i in self.skip:
                    continue
                rows = self._eval(i)
                self.values[i] = rows
                self._emit(i, len(rows))
        self.metrics.t_exec_ms = (time.perf_counter() - start) * 1000.0
        root = self.plan.root
        return Relation(self.cols[root], self.values[root]), self.metrics

    # -- acyclic evaluation ----------------------------------------------------------

    def _eval(self, i: int) -> set[Row]:
        op = self.plan.ops[i]
        g = self.g
        if i in self.fused:
            return self._label_scan(i, self.fused[i])
        if isinstance(op, ScanE):
            return set(g.edges)
        if isinstance(op, ScanP):
            return set(g.prop_rows())
        if isinstance(op, Select):
            lookup = property_lookup(self.plan, i)
            if lookup is not None:
                return self._property_lookup(i, op, lookup)
            return self._select(op, self.values[op.child], self.cols[op.child])
        if isinstance(op, Join):
            return self._join(op, self.values[op.left], self.values[op.right])
        if isinstance(op, Project):
            return _reorder(self.values[op.child], self.cols[op.child], op.cols)
        if isinstance(op, Rename):
            src = [s for _, s in op.mapping]
            return _reorder(self.values[op.child], self.cols[op.child], src)
        if isinstance(op, Union):
            out: set[Row] = set()
            mine = self.cols[i]
            for c in op.inputs:
                out |= _reorder(self.values[c], self.cols[c], mine)
            return out
        if isinstance(op, BufferWrite):
            rows = self.values[op.child]
            self.buffers[op.buffer] = set(rows)
            return rows
        if isinstance(op, BufferRead):
            if op.buffer not in self.buffers:
                raise ExecutionError(f"buffer {op.buffer} read before it was written")
            writer = self.plan.writer(op.buffer)
            return _reorder(self.buffers[op.buffer], self.cols[writer], op.cols)
        if isinstance(op, Dedup):
            return self.values[op.child]
        raise ExecutionError(f"cannot execute operator {op.kind}")

    def _label_scan(self, i: int, label: str) -> set[Row]:
        ls = label_scan(self.plan, i)
        assert ls is not None
        triples = self.g.label_triples(label)
        value = _typed_label(label)
        scan = self.plan.ops[ls.scan_e]
        p = self.plan.ops[ls.scan_p]
        assert isinstance(scan, ScanE) and isinstance(p, ScanP)
        n = len(triples)
        for part in (ls.scan_e, ls.select, ls.scan_p):
            self._emit(part, n)
        cols = self.cols[i]
        src = scan.cols + p.cols[1:]
        rows = ((s, e, t, LABEL_KEY, value) for s, e, t in triples)
        return _reorder(rows, src, cols)

    def _property_lookup(self, i: int, op: Select, lookup: tuple[str, object | None]) -> set[Row]:
        key, value = lookup
        if value is None:
            matches = {(o, key, v) for o, v in self.g.key_rows(key)}
        else:
            matches = {(o, key, value) for o in self.g.objects_with(key, value)}  # type: ignore[arg-type]
        self._emit(op.child, len(matches))
        return self._select(op, matches, self.cols[op.child])

    def _select(self, op: Select, rows: Iterable[Row], cols: Sequence[str]) -> set[Row]:
        checks = []
        for col, operand in op.preds:
            a = cols.index(col)
            if isinstance(operand, Const):
                checks.append((a, None, operand.value))
            else:
                checks.append((a, cols.index(operand.name), None))
        out = set()
        for r in rows:
            if all(r[a] == (r[b] if b is not None else v) for a, b, v in checks):
                out.add(r)
        return out

    def _join(self, op: Join, left: Iterable[Row], right: Iterable[Row]) -> set[Row]:
        self._check()
        return hash_join(self.cols[op.left], left, self.cols[op.right], right, op.on)

    # -- fixpoint groups ------------------------------------------------------------------

    def _fixpoint(self, members: tuple[int, ...]) -> None:
        """Semi-naive evaluation of one strongly connected buffer cycle."""
        plan = self.plan
        inside = set(members)
        # Inside the group, reads see the previous iteration's delta; ordering ignores
        # the write->read edges so it is a DAG.
        order: list[int] = []
        seen: set[int] = set()

        def visit(i: int) -> None:
            if i in seen:
                return
            seen.add(i)
            for c in plan.ops[i].children:
                if c in inside:
                    visit(c)
            order.append(i)

        for i in members:
            visit(i)

        full: dict[int, set[Row]] = {i: set() for i in members}
        dedup_seen: dict[int, set[Row]] = {i: set() for i in members if isinstance(plan.ops[i], Dedup)}
        write_delta: dict[int, set[Row]] = {}
        write_cols: dict[int, tuple[str, ...]] = {}
        for i in members:
            op = plan.ops[i]
            if isinstance(op, BufferWrite):
                self.buffers[op.buffer] = set()
                write_delta[op.buffer] = set()
                write_cols[op.buffer] = self.cols[i]

        iteration = 0
        while True:
            iteration += 1
            self._check()
            delta: dict[int, set[Row]] = {}

            def inp(c: int) -> tuple[set[Row], set[Row]]:
                if c in inside:
                    return delta[c], full[c]
                value = self.values[c]
                return (value if iteration == 1 else set()), value

            for i in order:
                op = plan.ops[i]
                if isinstance(op, BufferRead):
                    d = _reorder(write_delta.get(op.buffer, set()), write_cols[op.buffer], op.cols)
                elif isinstance(op, BufferWrite):
                    d_in, _ = inp(op.child)
                    buf = self.buffers[op.buffer]
                    d = d_in - buf
                    buf |= d
                elif isinstance(op, Dedup):
                    d_in, _ = inp(op.child)
                    d = d_in - dedup_seen[i]
                    dedup_seen[i] |= d
                elif isinstance(op, Join):
                    dl, fl = inp(op.left)
                    dr, fr = inp(op.right)
                    lcols, rcols = self.cols[op.left], self.cols[op.right]
                    d = set()
                    if dl and fr:
                        d |= hash_join(lcols, dl, rcols, fr, op.on)
                    old_l = fl - dl
                    if dr and old_l:
                        d |= hash_join(lcols, old_l, rcols, dr, op.on)
                    self._emit(i, len(d))
                elif isinstance(op, Union):
                    d = set()
                    for c in op.inputs:
                        dc, _ = inp(c)
                        d |= _reorder(dc, self.cols[c], self.cols[i])
                elif isinstance(op, Select):
                    d_in, _ = inp(op.child)
                    d = self._select(op, d_in, self.cols[op.child])
                elif isinstance(op, Project):
                    d_in, _ = inp(op.child)
                    d = _reorder(d_in, self.cols[op.child], op.cols)
                elif isinstance(op, Rename):
                    d_in, _ = inp(op.child)
                    d = _reorder(d_in, self.cols[op.child], [s for _, s in op.mapping])
                else:
                    raise ExecutionError(f"operator {op.kind} cannot take part in a buffer cycle")
                if not isinstance(op, Join):
                    self._emit(i, len(d))
                delta[i] = d
                full[i] |= d

            progressed = False
            for i in members:
                op = plan.ops[i]
                if isinstance(op, BufferWrite):
                    write_delta[op.buffer] = delta[i]
                    progressed = progressed or bool(delta[i])
            if not progressed:
                break

        for i in members:
            op = plan.ops[i]
            self.values[i] = self.buffers[op.buffer] if isinstance(op, BufferWrite) else full[i]
            self.metrics.iterations[i] = iteration


def _typed_label(label: str) -> int | str:
    try:
        return int(label)
    except ValueError:
        return label


def count_results(relation: Relation | set | frozenset) -> int:
    return len(relation.rows) if isinstance(relation, Relation) else len(relation)


# -- oracles ---------------------------------------------------------------------------


def transitive_closure_oracle(base: Iterable[tuple[int, int]]) -> set[tuple[int, int]]:
    """Naive iteration: keep composing with the base relation until nothing new appears."""
    closure = set(base)
    succ: dict[object, set[object]] = defaultdict(set)
    for s, t in closure:
        succ[s].add(t)
    while True:
        new = {(s, u) for s, t in closure for u in succ.get(t, ())} - closure
        if not new:
            return closure
        closure |= new


def seeded_closure_oracle(
    base: Iterable[tuple[int, int]], seed: Iterable[object], direction: str = "forward"
) -> set[tuple[object, object]]:
    """Paths of length >= 0 starting (forward) or ending (reverse) at a seed vertex."""
    seeds = set(seed)
    tc = transitive_closure_oracle(base)
    ident = {(u, u) for u in seeds}
    if direction == "forward":
        return {(u, v) for u, v in tc if u in seeds} | ident
    if direction == "reverse":
        return {(u, v) for u, v in tc if v in seeds} | ident
    raise ValueError(f"direction must be 'forward' or 'reverse', got {direction!r}")


def datalog_oracle(program: Program, g: PropertyGraph) -> set[Row]:
    """Bottom-up reference evaluation, independent of plans and the executor.

    Returns the answer predicate's tuples in head-argument order.
    """
    facts: dict[str, set[Row]] = {
        "E": set(g.edges),
        "P": set(g.prop_rows()),
    }
    closures: dict[str, set[Row]] = {}
    for pred in topological_predicates(program):
        rows: set[Row] = set()
        for rule in program.rules[pred]:
            for binding in _solve(rule.body, facts, closures):
                rows.add(tuple(_value(t, binding) for t in rule.head.terms))
        facts[pred] = rows
    return facts[program.answer]


def _value(term: object, binding: dict[str, object]) -> object:
    return binding[term.name] if isinstance(term, Var) else term.value  # type: ignore[union-attr]


def _solve(body: Sequence[Atom], facts: dict[str, set[Row]], closures: dict[str, set[Row]]):
    """Backtracking join with per-(atom, bound positions) hash indexes."""
    relational = [a for a in body if not a.is_filter]
    filters = [(f.terms[0].name, f.terms[1].value) for f in body if f.is_filter]  # type: ignore[union-attr]
    indexes: dict[tuple[int, tuple[int, ...]], dict[tuple, list[Row]]] = {}

    def relation(a: Atom) -> set[Row]:
        if not a.closure:
            return facts[a.predicate]
        if a.predicate not in closures:
            closures[a.predicate] = transitive_closure_oracle(facts[a.predicate])  # type: ignore[arg-type]
        return closures[a.predicate]

    def lookup(i: int, bound: tuple[int, ...], key: tuple) -> list[Row]:
        idx = indexes.get((i, bound))
        if idx is None:
            idx = defaultdict(list)
            for row in relation(relational[i]):
                idx[tuple(row[p] for p in bound)].append(row)
            indexes[(i, bound)] = idx
        return idx.get(key, [])

    def extend(remaining: list[int], binding: dict[str, object]):
        if not remaining:
            if all(binding[v] == c for v, c in filters):
                yield binding
            return

        def bound_positions(i: int) -> tuple[int, ...]:
            return tuple(
                p for p, t in enumerate(relational[i].terms) if isinstance(t, Const) or t.name in binding
            )

        i = max(remaining, key=lambda j: (len(bound_positions(j)), -j))
        rest = [j for j in remaining if j != i]
        a = relational[i]
        bound = bound_positions(i)
        key = tuple(_value(a.terms[p], binding) for p in bound)
        for row in lookup(i, bound, key):
            b = dict(binding)
            ok = True
            for t, v in zip(a.terms, row):
                if isinstance(t, Var):
                    if b.setdefault(t.name, v) != v:
                        ok = False
                        break
            if ok:
                yield from extend(rest, b)

    yield from extend(list(range(len(relational))), {})


def label_relation(g: PropertyGraph, label: str, reverse: bool = False) -> set[tuple[int, int]]:
    return scan_label(g, label, "reverse" if reverse else "forward")
