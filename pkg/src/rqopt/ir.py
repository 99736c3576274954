"""Datalog IR for Regular Queries.

Programs are non-recursive Datalog rules whose bodies may mark a binary
predicate with ``+`` to take its transitive closure.  Rule bodies (and the
conjunctive sub-queries the optimizer derives from them) are plain tuples of
:class:`Atom`; equality filters ``x = c`` are atoms with predicate ``=``.
"""

from __future__ import annotations

import itertools
import re
from collections.abc import Iterable, Sequence
from dataclasses import dataclass, field
from functools import cached_property, lru_cache

EDB = {"E": 3, "P": 3}
FILTER = "="


class QueryError(Exception):
    """Raised for malformed or invalid query programs."""


class QuerySyntaxError(QueryError):
    def __init__(self, message: str, pos: int, text: str) -> None:
        line = text.count("\n", 0, pos) + 1
        col = pos - (text.rfind("\n", 0, pos) + 1) + 1
        super().__init__(f"line {line}, column {col}: {message}")
        self.pos = pos


@dataclass(frozen=True, order=True)
class Var:
    name: str

    def __str__(self) -> str:
        return self.name


@dataclass(frozen=True)
class Const:
    value: int | str

    def __str__(self) -> str:
        return str(self.value) if isinstance(self.value, int) else f'"{self.value}"'


Term = Var | Const


def const(value: int | str) -> Const:
    """Build a constant, normalising strings that spell integers."""
    if isinstance(value, str):
        try:
            return Const(int(value))
        except ValueError:
            pass
    return Const(value)


@dataclass(frozen=True)
class Atom:
    predicate: str
    terms: tuple[Term, ...]
    closure: bool = False

    @property
    def is_filter(self) -> bool:
        return self.predicate == FILTER

    @cached_property
    def vars(self) -> tuple[str, ...]:
        return tuple(dict.fromkeys(t.name for t in self.terms if isinstance(t, Var)))

    def base(self) -> Atom:
        return Atom(self.predicate, self.terms, False)

    def rename(self, mapping: dict[str, str]) -> Atom:
        terms = tuple(Var(mapping.get(t.name, t.name)) if isinstance(t, Var) else t for t in self.terms)
        return Atom(self.predicate, terms, self.closure)

    def __str__(self) -> str:
        if self.is_filter:
            return f"{self.terms[0]} = {self.terms[1]}"
        plus = "+" if self.closure else ""
        return f"{self.predicate}{plus}({', '.join(map(str, self.terms))})"


def eq_filter(var: str, value: int | str) -> Atom:
    return Atom(FILTER, (Var(var), const(value)))


def atom(predicate: str, *args: str | int, closure: bool = False) -> Atom:
    """Shorthand: string arguments are variables, integers are constants."""
    terms = tuple(Var(a) if isinstance(a, str) else Const(a) for a in args)
    return Atom(predicate, terms, closure)


@dataclass(frozen=True)
class Rule:
    head: Atom
    body: tuple[Atom, ...]

    def __str__(self) -> str:
        return f"{self.head} :- {', '.join(map(str, self.body))}."


@dataclass(frozen=True)
class ConjunctiveQuery:
    """A body of atoms plus the set of variables it must output.

    Output order is irrelevant to the optimizer (plans carry named columns);
    ``head`` keeps a deterministic order for display and final projection.
    """

    head: tuple[str, ...]
    atoms: tuple[Atom, ...]

    @property
    def relational(self) -> tuple[Atom, ...]:
        return tuple(a for a in self.atoms if not a.is_filter)

    @property
    def filters(self) -> tuple[Atom, ...]:
        return tuple(a for a in self.atoms if a.is_filter)

    @property
    def vars(self) -> tuple[str, ...]:
        return tuple(dict.fromkeys(v for a in self.atoms for v in a.vars))

    def __str__(self) -> str:
        return f"Q({', '.join(self.head)}) :- {', '.join(map(str, self.atoms))}"


@dataclass
class Program:
    rules: dict[str, list[Rule]]
    answer: str
    order: list[str] = field(default_factory=list)

    def defines(self, predicate: str) -> bool:
        return predicate in self.rules

    def arity(self, predicate: str) -> int:
        if predicate in EDB:
            return EDB[predicate]
        return len(self.rules[predicate][0].head.terms)

    def answer_query(self) -> ConjunctiveQuery:
        """The query handed to the optimizer for the answer predicate."""
        rules = self.rules[self.answer]
        if len(rules) == 1 and _plain_head(rules[0].head):
            r = rules[0]
            return ConjunctiveQuery(r.head.vars, r.body)
        head = tuple(f"_h{i}" for i in range(len(rules[0].head.terms)))
        return ConjunctiveQuery(head, (atom(self.answer, *head),))

    def answer_columns(self) -> tuple[str, ...]:
        """Column name for every answer head position, following ``answer_query``."""
        rules = self.rules[self.answer]
        if len(rules) == 1 and _plain_head(rules[0].head):
            return tuple(t.name for t in rules[0].head.terms)  # type: ignore[union-attr]
        return tuple(f"_h{i}" for i in range(len(rules[0].head.terms)))

    def label_of(self, predicate: str) -> tuple[str, bool] | None:
        """If ``predicate`` is a single label-scan rule, return (label, reversed)."""
        rules = self.rules.get(predicate)
        if not rules or len(rules) != 1:
            return None
        return label_rule(rules[0])

    def __str__(self) -> str:
        return "\n".join(str(r) for name in self.order for r in self.rules[name])


def _plain_head(head: Atom) -> bool:
    names = [t.name for t in head.terms if isinstance(t, Var)]
    return len(names) == len(head.terms) and len(set(names)) == len(names)


def label_rule(rule: Rule) -> tuple[str, bool] | None:
    """Recognise ``L(s, t) :- E(s, e, t), P(e, "label", l)`` (either head order)."""
    if len(rule.body) != 2 or len(rule.head.terms) != 2:
        return None
    by_pred = {a.predicate: a for a in rule.body}
    e, p = by_pred.get("E"), by_pred.get("P")
    if e is None or p is None or e.closure or p.closure:
        return None
    if not all(isinstance(t, Var) for t in e.terms) or len(set(e.terms)) != 3:
        return None
    s, ev, t = e.terms
    if p.terms[0] != ev or p.terms[1] != Const("label") or not isinstance(p.terms[2], Const):
        return None
    label = str(p.terms[2].value)
    if rule.head.terms == (s, t):
        return label, False
    if rule.head.terms == (t, s):
        return label, True
    return None


# -- parsing -----------------------------------------------------------------

_TOKEN = re.compile(
    r"""
    (?P<ws>\s+|%[^\n]*|\#[^\n]*)
  | (?P<arrow>:-|<-|←)
  | (?P<string>"(?:[^"\\]|\\.)*")
  | (?P<int>-?\d+)
  | (?P<ident>[A-Za-z_][A-Za-z0-9_]*)
  | (?P<punct>[()+,.=])
    """,
    re.VERBOSE,
)


def _tokenize(text: str) -> list[tuple[str, str, int]]:
    tokens = []
    pos = 0
    while pos < len(text):
        m = _TOKEN.match(text, pos)
        if not m:
            raise QuerySyntaxError(f"unexpected character {text[pos]!r}", pos, text)
        kind = m.lastgroup
        if kind != "ws":
            value = m.group(kind)
            tokens.append((kind if kind != "punct" else value, value, pos))
        pos = m.end()
    tokens.append(("eof", "", len(text)))
    return tokens


class _Parser:
    def __init__(self, text: str) -> None:
        self.text = text
        self.tokens = _tokenize(text)
        self.i = 0
        self.anon = itertools.count()

    def peek(self, offset: int = 0) -> tuple[str, str, int]:
        return self.tokens[self.i + offset]

    def take(self, kind: str) -> tuple[str, str, int]:
        tok = self.tokens[self.i]
        if tok[0] != kind:
            want = kind if len(kind) == 1 else kind.upper()
            got = tok[1] or "end of input"
            raise QuerySyntaxError(f"expected {want!r}, got {got!r}", tok[2], self.text)
        self.i += 1
        return tok

    def rules(self) -> list[tuple[Rule, int]]:
        out = []
        while self.peek()[0] != "eof":
            out.append(self.rule())
        if not out:
            raise QuerySyntaxError("empty program", 0, self.text)
        return out

    def rule(self) -> tuple[Rule, int]:
        pos = self.peek()[2]
        name = self.take("ident")[1]
        self.take("(")
        terms = self.termlist()
        self.take(")")
        self.take("arrow")
        body = [self.literal()]
        while self.peek()[0] == ",":
            self.take(",")
            body.append(self.literal())
        self.take(".")
        return Rule(Atom(name, tuple(terms)), tuple(body)), pos

    def literal(self) -> Atom:
        name = self.take("ident")[1]
        if self.peek()[0] == "=":
            self.take("=")
            return Atom(FILTER, (self.var(name), self.constant()))
        closure = False
        if self.peek()[0] == "+":
            self.take("+")
            closure = True
        self.take("(")
        terms = self.termlist()
        self.take(")")
        return Atom(name, tuple(terms), closure)

    def termlist(self) -> list[Term]:
        terms = [self.term()]
        while self.peek()[0] == ",":
            self.take(",")
            terms.append(self.term())
        return terms

    def term(self) -> Term:
        kind, value, pos = self.peek()
        if kind == "ident":
            self.i += 1
            return self.var(value)
        if kind in ("int", "string"):
            return self.constant()
        raise QuerySyntaxError(f"expected a term, got {value or 'end of input'!r}", pos, self.text)

    def var(self, name: str) -> Var:
        if name == "_":
            return Var(f"_anon{next(self.anon)}")
        return Var(name)

    def constant(self) -> Const:
        kind, value, pos = self.peek()
        if kind == "int":
            self.i += 1
            return Const(int(value))
        if kind == "string":
            self.i += 1
            return const(bytes(value[1:-1], "utf-8").decode("unicode_escape"))
        raise QuerySyntaxError(f"expected a constant, got {value or 'end of input'!r}", pos, self.text)


def parse_program(text: str) -> Program:
    """Parse the textual rule language into a validated :class:`Program`."""
    parsed = _Parser(text).rules()
    rules: dict[str, list[Rule]] = {}
    order: list[str] = []
    for rule, pos in parsed:
        name = rule.head.predicate
        if name in EDB:
            raise QuerySyntaxError(f"cannot define extensional predicate {name}", pos, text)
        if any(isinstance(t, Const) for t in rule.head.terms):
            raise QueryError(f"rule for {name}: constants in rule heads are not supported")
        if name in rules and len(rules[name][0].head.terms) != len(rule.head.terms):
            raise QueryError(f"predicate {name} defined with inconsistent arities")
        if name not in rules:
            order.append(name)
        rules.setdefault(name, []).append(rule)

    answer = "Ans" if "Ans" in rules else parsed[-1][0].head.predicate
    program = Program(rules, answer, order)
    _validate(program)
    return program


def _validate(program: Program) -> None:
    deps: dict[str, set[str]] = {}
    for name, rules in program.rules.items():
        deps[name] = set()
        for r in rules:
            body_vars = {v for a in r.body if not a.is_filter for v in a.vars}
            if not _plain_head(r.head):
                raise QueryError(f"rule head {r.head} must list distinct variables")
            for v in r.head.vars:
                if v not in body_vars:
                    raise QueryError(f"unsafe rule {r}: head variable {v} does not occur in a body atom")
            for a in r.body:
                if a.is_filter:
                    if a.terms[0].name not in body_vars:  # type: ignore[union-attr]
                        raise QueryError(f"unsafe rule {r}: filter on unbound variable {a.terms[0]}")
                    continue
                if a.predicate in EDB:
                    if a.closure:
                        raise QueryError(f"closure over extensional predicate {a.predicate} in {r}")
                    if len(a.terms) != EDB[a.predicate]:
                        raise QueryError(f"{a.predicate} takes {EDB[a.predicate]} arguments in {r}")
                    continue
                if a.predicate not in program.rules:
                    raise QueryError(f"predicate {a.predicate} used in {r} is not defined")
                arity = program.arity(a.predicate)
                if len(a.terms) != arity:
                    raise QueryError(f"{a.predicate} has arity {arity}, used with {len(a.terms)} in {r}")
                if a.closure and arity != 2:
                    raise QueryError(f"closure over non-binary predicate {a.predicate} in {r}")
                deps[name].add(a.predicate)

    state: dict[str, int] = {}

    def visit(p: str, path: list[str]) -> None:
        if state.get(p) == 2:
            return
        if state.get(p) == 1:
            cycle = " -> ".join(path[path.index(p):] + [p])
            raise QueryError(f"recursive definition through {cycle}; recursion is only allowed via closure")
        state[p] = 1
        for q in sorted(deps[p]):
            visit(q, path + [p])
        state[p] = 2

    for p in program.rules:
        visit(p, [])


def topological_predicates(program: Program) -> list[str]:
    """Rule-defined predicates with dependencies first."""
    out: list[str] = []
    seen: set[str] = set()

    def visit(p: str) -> None:
        if p in seen or p not in program.rules:
            return
        seen.add(p)
        for r in program.rules[p]:
            for a in r.body:
                if not a.is_filter:
                    visit(a.predicate)
        out.append(p)

    for p in program.order:
        visit(p)
    return out


# -- join graphs ----------------------------------------------------------


@dataclass(frozen=True)
class JoinGraph:
    """Undirected graph over body-atom indices; edges carry the shared variables."""

    nodes: tuple[int, ...]
    edges: dict[tuple[int, int], frozenset[str]]

    def neighbours(self, i: int) -> set[int]:
        out = set()
        for a, b in self.edges:
            if a == i:
                out.add(b)
            elif b == i:
                out.add(a)
        return out

    def has_edge(self, a: int, b: int) -> bool:
        return (min(a, b), max(a, b)) in self.edges

    def connected(self, subset: Iterable[int] | None = None) -> bool:
        nodes = set(self.nodes if subset is None else subset)
        if not nodes:
            return False
        start = min(nodes)
        seen = {start}
        frontier = [start]
        while frontier:
            n = frontier.pop()
            for m in self.neighbours(n):
                if m in nodes and m not in seen:
                    seen.add(m)
                    frontier.append(m)
        return seen == nodes


def join_graph(body: Rule | ConjunctiveQuery | Sequence[Atom]) -> JoinGraph:
    if isinstance(body, Rule):
        atoms = body.body
    elif isinstance(body, ConjunctiveQuery):
        atoms = body.atoms
    else:
        atoms = tuple(body)
    nodes = tuple(i for i, a in enumerate(atoms) if not a.is_filter)
    edges = {}
    for i, j in itertools.combinations(nodes, 2):
        shared = set(atoms[i].vars) & set(atoms[j].vars)
        if shared:
            edges[(i, j)] = frozenset(shared)
    return JoinGraph(nodes, edges)


def atoms_connected(atoms: Sequence[Atom]) -> bool:
    jg = join_graph(atoms)
    return jg.connected() if jg.nodes else False


@dataclass(frozen=True)
class ClosurePartition:
    """Non-recursive atoms, interior closures and exterior closures (filters excluded)."""

    N: tuple[Atom, ...]
    I: tuple[Atom, ...]
    X: tuple[Atom, ...]


class DisconnectedQueryError(QueryError):
    pass


def _occurs_elsewhere(var: str, index: int, atoms: Sequence[Atom]) -> bool:
    return any(var in a.vars for j, a in enumerate(atoms) if j != index)


def classify_closures(body: Rule | ConjunctiveQuery | Sequence[Atom]) -> ClosurePartition:
    """Split a connected body into N (plain), I (interior closures), X (exterior closures).

    A closure endpoint counts as shared when it occurs in any other body atom,
    including an equality filter.
    """
    atoms = body.body if isinstance(body, Rule) else body.atoms if isinstance(body, ConjunctiveQuery) else tuple(body)
    jg = join_graph(atoms)
    if not jg.connected():
        raise DisconnectedQueryError("join graph of the body is not connected")
    n, i, x = [], [], []
    for idx, a in enumerate(atoms):
        if a.is_filter:
            continue
        if not a.closure:
            n.append(a)
            continue
        shared = [isinstance(t, Const) or _occurs_elsewhere(t.name, idx, atoms) for t in a.terms]
        if all(shared):
            i.append(a)
        elif any(shared):
            x.append(a)
        else:
            raise DisconnectedQueryError(f"closure {a} shares no variable with the rest of the body")
    return ClosurePartition(tuple(n), tuple(i), tuple(x))


# -- canonical signatures ---------------------------------------------------


def _const_tag(c: Const) -> tuple[str, str]:
    return (type(c.value).__name__, repr(c.value))


def _rank(keys: dict[str, object]) -> dict[str, int]:
    ordered = sorted(set(keys.values()))  # type: ignore[type-var]
    index = {k: i for i, k in enumerate(ordered)}
    return {v: index[k] for v, k in keys.items()}


def _refine(colors: dict[str, int], atoms: Sequence[Atom]) -> dict[str, int]:
    while True:
        ctx: dict[str, list] = {v: [] for v in colors}
        for a in atoms:
            shape = tuple(
                ("v", colors[t.name]) if isinstance(t, Var) else ("c",) + _const_tag(t) for t in a.terms
            )
            for pos, t in enumerate(a.terms):
                if isinstance(t, Var):
                    ctx[t.name].append((a.predicate, a.closure, pos, shape))
        new = _rank({v: (colors[v], tuple(sorted(ctx[v]))) for v in colors})
        if len(set(new.values())) == len(set(colors.values())):
            return new
        colors = new


def _form(head: frozenset[str], atoms: Sequence[Atom], labels: dict[str, int]) -> tuple:
    body = sorted(
        (a.predicate, a.closure, tuple(("v", labels[t.name]) if isinstance(t, Var) else ("c",) + _const_tag(t) for t in a.terms))
        for a in atoms
    )
    return (tuple(sorted(labels[v] for v in head)), tuple(body))


def _search(colors: dict[str, int], head: frozenset[str], atoms: Sequence[Atom]) -> tuple[tuple, dict[str, int]]:
    colors = _refine(colors, atoms)
    cells: dict[int, list[str]] = {}
    for v, c in colors.items():
        cells.setdefault(c, []).append(v)
    target = next((c for c in sorted(cells) if len(cells[c]) > 1), None)
    if target is None:
        return _form(head, atoms, colors), colors
    best: tuple[tuple, dict[str, int]] | None = None
    for v in sorted(cells[target]):
        split = {u: (c, 0 if u == v else 1) if c == target else (c, 0) for u, c in colors.items()}
        candidate = _search(_rank(split), head, atoms)
        if best is None or candidate[0] < best[0]:
            best = candidate
    assert best is not None
    return best


@lru_cache(maxsize=65536)
def _canonical(head: frozenset[str], atoms: tuple[Atom, ...]) -> tuple[bytes, tuple[tuple[str, int], ...]]:
    names = list(dict.fromkeys([v for a in atoms for v in a.vars] + sorted(head)))
    colors = _rank({v: (v in head,) for v in names})
    form, labels = _search(colors, head, atoms)
    return repr(form).encode(), tuple(sorted(labels.items()))


def canonical_labeling(head: Iterable[str], atoms: Sequence[Atom]) -> tuple[bytes, dict[str, int]]:
    """Canonical key plus the variable labelling that realises it."""
    key, labels = _canonical(frozenset(head), tuple(atoms))
    return key, dict(labels)


def canonical_signature(head: Iterable[str], atoms: Sequence[Atom]) -> bytes:
    """Key that is equal for queries identical up to variable renaming and atom order."""
    return _canonical(frozenset(head), tuple(atoms))[0]


def query_signature(q: ConjunctiveQuery) -> bytes:
    return canonical_signature(q.head, q.atoms)


def isomorphism(src: ConjunctiveQuery, dst: ConjunctiveQuery) -> dict[str, str]:
    """Variable bijection mapping ``src`` onto ``dst``; both must share a signature."""
    k1, l1 = canonical_labeling(src.head, src.atoms)
    k2, l2 = canonical_labeling(dst.head, dst.atoms)
    if k1 != k2:
        raise QueryError(f"queries are not isomorphic: {src} / {dst}")
    inverse = {label: v for v, label in l2.items()}
    return {v: inverse[label] for v, label in l1.items()}
