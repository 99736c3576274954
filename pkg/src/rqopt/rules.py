"""Enumeration rules: leaf scans, union, unseeded closure, join and seeding.

Every rule maps a conjunctive query to zero or more partial plans whose
unsolved parts are :class:`~rqopt.plan.Abstraction` operators.  Column names
in the produced plans are the query's variable names; fresh variables carry
a ``'`` so they never clash with parsed identifiers.
"""

from __future__ import annotations

import itertools
from collections.abc import Mapping, Sequence
from dataclasses import dataclass, replace

from .cost import CostModel
from .ir import (
    EDB,
    Atom,
    ConjunctiveQuery,
    Const,
    DisconnectedQueryError,
    JoinGraph,
    Program,
    Term,
    Var,
    atoms_connected,
    classify_closures,
    const,
    join_graph,
)
from .plan import PlanBuilder, PlanGraph


# -- configuration ---------------------------------------------------------------


_TRUE = {"on", "true", "1", "yes"}
_FALSE = {"off", "false", "0", "no"}
RULE_KEYS = {
    "join": "join",
    "seed": "seed",
    "seed.interior": "seed_interior",
    "seed.stacking": "stacking",
}


class RuleConfigError(ValueError):
    pass


@dataclass(frozen=True)
class RuleSet:
    """Enabled rules.  Leaf, union and unseeded-closure rules are always on.

    ``seed_interior`` off restricts seeding to queries without interior
    closures (exterior-only seeding).
    """

    join: bool = True
    seed: bool = True
    seed_interior: bool = True
    stacking: bool = True

    MODES = ("unopt", "waveguide", "opt")

    @classmethod
    def for_mode(cls, mode: str) -> RuleSet:
        if mode == "unopt":
            return cls(seed=False)
        if mode == "waveguide":
            return cls(seed_interior=False, stacking=False)
        if mode == "opt":
            return cls()
        raise RuleConfigError(f"unknown mode {mode!r}; expected one of {', '.join(cls.MODES)}")

    def with_config(self, config: Mapping[str, str | bool]) -> RuleSet:
        """Apply ``rules.<name>=on|off`` settings (the ``rules.`` prefix is optional)."""
        changes: dict[str, bool] = {}
        for key, raw in config.items():
            name = key.removeprefix("rules.")
            if key.startswith("cost."):
                continue
            if name not in RULE_KEYS:
                raise RuleConfigError(f"unknown rule setting {key!r}")
            if isinstance(raw, bool):
                value = raw
            elif str(raw).lower() in _TRUE:
                value = True
            elif str(raw).lower() in _FALSE:
                value = False
            else:
                raise RuleConfigError(f"{key} must be on or off, got {raw!r}")
            changes[RULE_KEYS[name]] = value
        return replace(self, **changes)

    def enabled(self) -> list[str]:
        names = ["leaf", "union", "closure"]
        if self.join:
            names.append("join")
        if self.seed:
            names.append("seed" if self.seed_interior else "seed-exterior-only")
        return names


class RuleContext:
    """Shared inputs of all rules: the program, cost model, rule set and a fresh-name supply."""

    def __init__(self, program: Program, cost: CostModel, rules: RuleSet | None = None) -> None:
        self.program = program
        self.cost = cost
        self.rules = rules or RuleSet()
        self._fresh = itertools.count()

    def fresh(self, base: str) -> str:
        return f"{base.split(chr(39))[0]}'{next(self._fresh)}"


# -- shared helpers ---------------------------------------------------------------


def _vars(atoms: Sequence[Atom]) -> tuple[str, ...]:
    return tuple(dict.fromkeys(v for a in atoms for v in a.vars))


def _filters_on(filters: Sequence[Atom], names: set[str] | Sequence[str]) -> tuple[Atom, ...]:
    names = set(names)
    return tuple(f for f in filters if f.terms[0].name in names)  # type: ignore[union-attr]


def _bind(
    b: PlanBuilder,
    child: int,
    bindings: Sequence[tuple[Term, str]],
    filters: Sequence[Atom],
    head: Sequence[str],
) -> int:
    """Match query terms against child columns, apply filters, and output ``head``."""
    col_of: dict[str, str] = {}
    preds: list[tuple[str, Const | Var]] = []
    for term, col in bindings:
        if isinstance(term, Const):
            preds.append((col, term))
        elif term.name in col_of:
            preds.append((col, Var(col_of[term.name])))
        else:
            col_of[term.name] = col
    for f in filters:
        var, value = f.terms
        preds.append((col_of[var.name], value))  # type: ignore[union-attr,arg-type]
    if preds:
        child = b.select(child, preds)
    mapping = [(v, col_of[v]) for v in head]
    return b.rename(child, mapping)


def _finish(b: PlanBuilder, root: int, q: ConjunctiveQuery, **kw) -> PlanGraph:
    return b.build(root, query=q, **kw)


# -- leaf and union rules ------------------------------------------------------------


def apply_leaf_rules(q: ConjunctiveQuery, ctx: RuleContext) -> list[tuple[str, PlanGraph]]:
    """Scans for E, P and label atoms; union (or single rename) over IDB rule bodies."""
    rel = q.relational
    if len(rel) != 1 or rel[0].closure:
        return []
    (a,) = rel
    filters = q.filters
    program = ctx.program
    label = program.label_of(a.predicate) if a.predicate not in EDB else None

    if label is not None:
        name, reverse = label
        b = PlanBuilder()
        e = b.scan_e("#s", "#e", "#t")
        p = b.scan_p("#e", "#k", "#v")
        sel = b.select(p, [("#k", Const("label")), ("#v", const(name))])
        j = b.join(e, sel, ["#e"])
        src, dst = ("#t", "#s") if reverse else ("#s", "#t")
        root = _bind(b, j, list(zip(a.terms, (src, dst))), filters, q.head)
        return [("leaf", _finish(b, root, q))]

    if a.predicate == "E" or a.predicate == "P":
        b = PlanBuilder()
        cols = ("#s", "#e", "#t") if a.predicate == "E" else ("#o", "#k", "#v")
        scan = b.scan_e(*cols) if a.predicate == "E" else b.scan_p(*cols)
        root = _bind(b, scan, list(zip(a.terms, cols)), filters, q.head)
        return [("leaf", _finish(b, root, q))]

    bodies = [_instantiate(rule.head.terms, rule.body, a, ctx) for rule in program.rules[a.predicate]]
    b = PlanBuilder()
    subs = []
    for body, extra in bodies:
        sub = ConjunctiveQuery(q.head, tuple(body) + tuple(extra) + tuple(filters))
        subs.append(b.abstraction(sub))
    if len(subs) == 1:
        root = b.rename(subs[0], [(v, v) for v in q.head])
        return [("leaf", _finish(b, root, q))]
    root = b.union(subs)
    return [("union", _finish(b, root, q))]


def _instantiate(
    head_terms: Sequence[Term], body: Sequence[Atom], use: Atom, ctx: RuleContext
) -> tuple[list[Atom], list[Atom]]:
    """Rule body with head variables bound to the terms of ``use`` and other variables fresh."""
    mapping: dict[str, str] = {}
    extra: list[Atom] = []
    for h, t in zip(head_terms, use.terms):
        assert isinstance(h, Var)
        if isinstance(t, Var):
            mapping[h.name] = t.name
        else:
            v = ctx.fresh(h.name)
            mapping[h.name] = v
            extra.append(Atom("=", (Var(v), t)))
    for v in _vars(body):
        if v not in mapping:
            mapping[v] = ctx.fresh(v)
    return [a.rename(mapping) for a in body], extra


# -- unseeded closure ------------------------------------------------------------------


def apply_closure_rule(q: ConjunctiveQuery, ctx: RuleContext) -> list[tuple[str, PlanGraph]]:
    """Fixpoint ``b = δ(L ∪ π(ρ(β(b)) ⋈ L))`` for a lone closure atom."""
    rel = q.relational
    if len(rel) != 1 or not rel[0].closure:
        return []
    (a,) = rel
    s, t = a.terms
    u = s.name if isinstance(s, Var) else ctx.fresh("u")
    v = t.name if isinstance(t, Var) and t != s else ctx.fresh("v")
    b = PlanBuilder()
    out = closure_fixpoint(b, a.predicate, u, v, ctx)
    root = _bind(b, out, [(s, u), (t, v)], q.filters, q.head)
    return [("closure", _finish(b, root, q))]


def closure_fixpoint(b: PlanBuilder, predicate: str, u: str, v: str, ctx: RuleContext) -> int:
    buf = b.buffer()
    m = ctx.fresh("m")
    init = b.abstraction(ConjunctiveQuery((u, v), (Atom(predicate, (Var(u), Var(v))),)))
    prev = b.rename(b.read(buf, (u, v)), [(u, u), (m, v)])
    step = b.abstraction(ConjunctiveQuery((m, v), (Atom(predicate, (Var(m), Var(v))),)))
    expanded = b.project(b.join(prev, step, [m]), (u, v))
    b.write(b.dedup(b.union([init, expanded])), buf)
    return b.read(buf, (u, v))


# -- join rule -----------------------------------------------------------------------


def ccp_pairs(jg: JoinGraph) -> list[tuple[tuple[int, ...], tuple[int, ...]]]:
    """All connected-complement pairs, one orientation each (``T`` holds the smallest node).

    Brute-force subset enumeration; bodies are small enough that clarity wins.
    """
    nodes = sorted(jg.nodes)
    if len(nodes) < 2 or not jg.connected():
        return []
    first, rest = nodes[0], nodes[1:]
    out = []
    for size in range(0, len(rest)):
        for combo in itertools.combinations(rest, size):
            t = (first, *combo)
            u = tuple(n for n in rest if n not in combo)
            if not jg.connected(t) or not jg.connected(u):
                continue
            if any(jg.has_edge(x, y) for x in t for y in u):
                out.append((t, u))
    return out


def apply_join_rule(q: ConjunctiveQuery, ctx: RuleContext) -> list[tuple[str, PlanGraph]]:
    if not ctx.rules.join:
        return []
    rel = q.relational
    jg = join_graph(rel)
    if len(rel) < 2 or not jg.connected():
        return []
    head = set(q.head)
    plans = []
    for t_idx, u_idx in ccp_pairs(jg):
        t_atoms = [rel[i] for i in t_idx]
        u_atoms = [rel[i] for i in u_idx]
        t_vars, u_vars = _vars(t_atoms), _vars(u_atoms)
        t_head = tuple(v for v in t_vars if v in head or v in u_vars)
        u_head = tuple(v for v in u_vars if v in head or v in t_vars)
        qt = ConjunctiveQuery(t_head, tuple(t_atoms) + _filters_on(q.filters, t_vars))
        qu = ConjunctiveQuery(u_head, tuple(u_atoms) + _filters_on(q.filters, u_vars))
        b = PlanBuilder()
        left = b.abstraction(qt)
        right = b.abstraction(qu)
        root = b.join(left, right, [v for v in t_head if v in u_head])
        cols = t_head + tuple(v for v in u_head if v not in t_head)
        if set(cols) != head:
            root = b.project(root, q.head)
        plans.append(("join", _finish(b, root, q)))
    return plans


# -- seeding rule ----------------------------------------------------------------------


@dataclass(frozen=True)
class FreedClosure:
    """A closure ``L+(u, v)`` whose endpoint at ``position`` is replaced by ``fresh`` in the seeding query.

    Freeing position 1 seeds a forward expansion producing ``(fresh, v)``;
    freeing position 0 seeds a reverse expansion producing ``(u, fresh)``.
    """

    atom: Atom
    position: int
    fresh: str

    @property
    def original(self) -> str:
        return self.atom.terms[self.position].name  # type: ignore[union-attr]

    @property
    def direction(self) -> str:
        return "forward" if self.position == 1 else "reverse"

    def seeding_atom(self) -> Atom:
        terms = list(self.atom.terms)
        terms[self.position] = Var(self.fresh)
        return Atom(self.atom.predicate, tuple(terms))


def expansion_direction(freed_position: int) -> str:
    """Seed binding the source side expands forward, the target side in reverse."""
    return "forward" if freed_position == 1 else "reverse"


@dataclass(frozen=True)
class SeedingPlan:
    """Intermediate description of one seeding-rule application."""

    seeding_query: ConjunctiveQuery
    interior: tuple[FreedClosure, ...]
    exterior: tuple[FreedClosure, ...]
    deferred: tuple[Atom, ...]


def h2_order_interior(closures: Sequence[Atom], ctx: RuleContext) -> list[Atom]:
    """Interior closures by ascending closure-size estimate; ties by atom text."""

    def estimate(a: Atom) -> float:
        label = ctx.program.label_of(a.predicate)
        return ctx.cost.closure_estimate(label[0] if label else None)

    return sorted(closures, key=lambda a: (estimate(a), str(a)))


def h1_choose_free_variable(closure: Atom, context: Sequence[Atom], fresh: str) -> tuple[int, Atom] | None:
    """Free position 0 if the body stays connected, else position 1, else ``None``."""
    for pos in (0, 1):
        terms = list(closure.terms)
        terms[pos] = Var(fresh)
        candidate = Atom(closure.predicate, tuple(terms))
        if atoms_connected([*context, candidate]):
            return pos, candidate
    return None


def build_seeding_query(q: ConjunctiveQuery, ctx: RuleContext) -> SeedingPlan | None:
    """Partition, apply h2 then h1, and assemble the seeding query (``None`` if inapplicable)."""
    rel = q.relational
    if not any(a.closure for a in rel) or not atoms_connected(rel):
        return None
    try:
        part = classify_closures(q.atoms)
    except DisconnectedQueryError:
        return None
    for a in part.I + part.X:
        if any(isinstance(t, Const) for t in a.terms) or a.terms[0] == a.terms[1]:
            return None
    if part.I and not ctx.rules.seed_interior:
        return None

    exterior = []
    for a in part.X:
        idx = q.atoms.index(a)
        shared0 = any(a.terms[0].name in o.vars for j, o in enumerate(q.atoms) if j != idx)  # type: ignore[union-attr]
        exterior.append(FreedClosure(a, 1 if shared0 else 0, ctx.fresh("f")))

    ordered = h2_order_interior(part.I, ctx)
    fresh = [ctx.fresh("f") for _ in ordered]
    positions = _h1_positions(ordered, fresh, part.N, [x.seeding_atom() for x in exterior])
    if positions is None:
        return None
    interior = [FreedClosure(a, pos, f) for a, pos, f in zip(ordered, positions, fresh)]

    body = list(part.N) + [c.seeding_atom() for c in interior] + [x.seeding_atom() for x in exterior]
    if not atoms_connected(body):
        return None
    body_vars = _vars(body)
    kept = tuple(f for f in q.filters if f.terms[0].name in body_vars)  # type: ignore[union-attr]
    deferred = tuple(f for f in q.filters if f not in kept)
    wanted = set(q.head)
    for c in (*interior, *exterior):
        wanted.update(c.atom.vars)
        wanted.add(c.fresh)
    head = tuple(v for v in body_vars if v in wanted)
    qs = ConjunctiveQuery(head, tuple(body) + kept)
    return SeedingPlan(qs, tuple(interior), tuple(exterior), deferred)


def _h1_positions(
    ordered: Sequence[Atom], fresh: Sequence[str], plain: Sequence[Atom], exterior: Sequence[Atom]
) -> list[int] | None:
    """Greedy h1 in h2 order; if it gets stuck, the first connected assignment overall."""
    chosen: list[Atom] = []
    positions: list[int] = []
    for i, a in enumerate(ordered):
        context = [*plain, *chosen, *(x.base() for x in ordered[i + 1:]), *exterior]
        pick = h1_choose_free_variable(a.base(), context, fresh[i])
        if pick is None:
            break
        positions.append(pick[0])
        chosen.append(pick[1])
    else:
        return positions
    for assignment in itertools.product((0, 1), repeat=len(ordered)):
        atoms = []
        for a, pos, f in zip(ordered, assignment, fresh):
            terms = list(a.terms)
            terms[pos] = Var(f)
            atoms.append(Atom(a.predicate, tuple(terms)))
        if atoms_connected([*plain, *atoms, *exterior]):
            return list(assignment)
    return None


def apply_seeding_rule(q: ConjunctiveQuery, ctx: RuleContext) -> list[tuple[str, PlanGraph]]:
    """At most one plan: seeding query into ``b1``, seeded interior closures with
    selectivity stacking, then seeded exterior closures."""
    if not ctx.rules.seed:
        return []
    sp = build_seeding_query(q, ctx)
    if sp is None:
        return []
    b = PlanBuilder()
    qs = sp.seeding_query
    b1 = b.buffer()
    qs_abs = b.abstraction(qs)
    b.write(qs_abs, b1)
    chain = b.read(b1, qs.head)
    chain_cols = qs.head
    seed_buf, seed_cols = b1, qs.head

    for i, c in enumerate(sp.interior):
        out, cols = seeded_closure(b, c, seed_buf, seed_cols, ctx)
        chain, chain_cols = _attach(b, chain, chain_cols, out, cols)
        more = i + 1 < len(sp.interior) or bool(sp.exterior)
        if ctx.rules.stacking and more:
            nb = b.buffer()
            b.write(chain, nb)
            chain = b.read(nb, chain_cols)
            seed_buf, seed_cols = nb, chain_cols

    for c in sp.exterior:
        out, cols = seeded_closure(b, c, seed_buf, seed_cols, ctx)
        chain, chain_cols = _attach(b, chain, chain_cols, out, cols)

    if sp.deferred:
        chain = b.select(chain, [(f.terms[0].name, f.terms[1]) for f in sp.deferred])  # type: ignore[union-attr,misc]
    if set(chain_cols) != set(q.head):
        chain = b.project(chain, q.head)
    stack = [i for i in b.abstractions if i != qs_abs] + [qs_abs]
    return [("seed", b.build(chain, query=q, optimized=True, stack=stack))]


def _attach(b: PlanBuilder, chain: int, chain_cols: tuple[str, ...], out: int, cols: tuple[str, ...]):
    on = [c for c in cols if c in chain_cols]
    joined = b.join(chain, out, on)
    return joined, chain_cols + tuple(c for c in cols if c not in chain_cols)


def seeded_closure(
    b: PlanBuilder, c: FreedClosure, seed_buf: int, seed_cols: tuple[str, ...], ctx: RuleContext
) -> tuple[int, tuple[str, ...]]:
    """Seeded fixpoint for ``c``; identity pairs on the seed start the expansion.

    Returns the read operator of the closure buffer and its columns.
    """
    f, other, pred = c.fresh, c.original, c.atom.predicate
    seed = b.dedup(b.project(b.read(seed_buf, seed_cols), [f]))
    buf = b.buffer()
    m = ctx.fresh("m")
    if c.direction == "forward":
        cols = (f, other)
        init = b.rename(seed, [(f, f), (other, f)])
        prev = b.rename(b.read(buf, cols), [(f, f), (m, other)])
        step = b.abstraction(ConjunctiveQuery((m, other), (Atom(pred, (Var(m), Var(other))),)))
        expanded = b.project(b.join(prev, step, [m]), cols)
    else:
        cols = (other, f)
        init = b.rename(seed, [(other, f), (f, f)])
        prev = b.rename(b.read(buf, cols), [(m, other), (f, f)])
        step = b.abstraction(ConjunctiveQuery((other, m), (Atom(pred, (Var(other), Var(m))),)))
        expanded = b.project(b.join(step, prev, [m]), cols)
    b.write(b.dedup(b.union([init, expanded])), buf)
    return b.read(buf, cols), cols


# -- dispatch -----------------------------------------------------------------------------


RULES = (
    ("leaf", apply_leaf_rules),
    ("closure", apply_closure_rule),
    ("join", apply_join_rule),
    ("seed", apply_seeding_rule),
)


def apply_rules(q: ConjunctiveQuery, ctx: RuleContext) -> list[tuple[str, PlanGraph]]:
    out: list[tuple[str, PlanGraph]] = []
    for _, rule in RULES:
        out.extend(rule(q, ctx))
    return out
