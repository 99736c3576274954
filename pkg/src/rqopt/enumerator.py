"""Top-down plan enumeration with memoization, and plan-space accounting.

The enumerator keeps one global stack of partial plans.  Each plan carries
its own stack of abstractions; the top one is always processed first.  A
concrete plan is costed and memoized under the canonical signature of the
query it answers.  An abstraction whose signature is memoized is replaced by
the stored plan (renamed onto the abstraction's variables); otherwise all
enabled rules are applied to it and their outputs are pushed.
"""

from __future__ import annotations

import time
from collections import Counter
from collections.abc import Iterator
from dataclasses import dataclass, field
from math import comb

from .cost import CostModel
from .ir import ConjunctiveQuery, Program, QueryError, isomorphism, parse_program, query_signature
from .plan import Abstraction, PlanBuilder, PlanGraph, Rename, all_columns, rename_op_columns, substitute
from .rules import RuleContext, RuleSet, apply_rules


class EnumerationError(QueryError):
    pass


@dataclass
class MemoEntry:
    plan: PlanGraph
    cost: float
    query: ConjunctiveQuery


@dataclass
class EnumerationStats:
    """Counters collected during one enumeration."""

    leaf_count: int = 0
    rule_applications: Counter = field(default_factory=Counter)
    memo_hits: int = 0
    memo_entries: int = 0
    peak_stack: int = 0
    t_opt_ms: float = 0.0

    def as_dict(self) -> dict[str, float | int]:
        out: dict[str, float | int] = {
            "leaf_count": self.leaf_count,
            "memo_hits": self.memo_hits,
            "memo_entries": self.memo_entries,
            "peak_stack": self.peak_stack,
            "t_opt_ms": round(self.t_opt_ms, 3),
        }
        for name in sorted(self.rule_applications):
            out[f"rule.{name}"] = self.rule_applications[name]
        return out

    def lines(self) -> list[str]:
        return [f"stat.{k}={v}" for k, v in self.as_dict().items()]


@dataclass
class EnumerationResult:
    best: PlanGraph
    cost: float
    stats: EnumerationStats
    roots: list[tuple[PlanGraph, float]] = field(default_factory=list)
    memo: dict[bytes, MemoEntry] = field(default_factory=dict)


def _bare(q: ConjunctiveQuery) -> PlanGraph:
    b = PlanBuilder()
    return b.build(b.abstraction(q), query=q)


def _is_bare(plan: PlanGraph) -> bool:
    return len(plan.ops) == 1 and isinstance(plan.ops[plan.root], Abstraction)


def adapt_memo_entry(entry: MemoEntry, target: ConjunctiveQuery) -> PlanGraph:
    """The memoized plan with its output columns renamed to ``target``'s variables."""
    mapping = isomorphism(entry.query, target)
    cols = entry.plan.columns()
    if all(mapping[c] == c for c in cols):
        return entry.plan
    ren = {c: mapping[c] for c in cols if mapping[c] != c}
    used = {c for cs in all_columns(entry.plan).values() for c in cs}
    if not (set(ren.values()) & used) - ren.keys():
        # the new names are free, so rename columns in place instead of adding an operator
        f = lambda c: ren.get(c, c)  # noqa: E731
        ops = {i: rename_op_columns(op, f) for i, op in entry.plan.ops.items()}
        return PlanGraph(ops, entry.plan.root, (), entry.plan.optimized, target)
    ops = dict(entry.plan.ops)
    root = ops[entry.plan.root]
    if isinstance(root, Rename):
        # compose with the existing rename rather than stacking another one
        ops[entry.plan.root] = Rename(root.child, tuple((mapping[o], s) for o, s in root.mapping))
        return PlanGraph(ops, entry.plan.root, (), entry.plan.optimized, target)
    top = max(ops) + 1
    ops[top] = Rename(entry.plan.root, tuple((mapping[c], c) for c in cols))
    return PlanGraph(ops, top, (), entry.plan.optimized, target)


def run_enumeration(
    program: Program,
    rules: RuleSet | None = None,
    cost: CostModel | None = None,
    *,
    query: ConjunctiveQuery | None = None,
    exhaustive: bool = False,
    max_roots: int | None = None,
) -> EnumerationResult:
    """Algorithm driver shared by :func:`enumerate_plans` and :func:`exhaustive_plans`."""
    if cost is None:
        from .graph import Catalog

        cost = CostModel(Catalog.empty())
    rules = rules or RuleSet()
    q_in = query or program.answer_query()
    ctx = RuleContext(program, cost, rules)
    stats = EnumerationStats()
    memo: dict[bytes, MemoEntry] = {}
    expanded: set[bytes] = set()
    root_sig = query_signature(q_in)
    roots: list[tuple[PlanGraph, float]] = []
    sig_cache: dict[ConjunctiveQuery, bytes] = {}

    def sig(q: ConjunctiveQuery) -> bytes:
        s = sig_cache.get(q)
        if s is None:
            s = sig_cache[q] = query_signature(q)
        return s

    start = time.perf_counter()
    stack: list[PlanGraph] = [_bare(q_in)]
    while stack:
        stats.peak_stack = max(stats.peak_stack, len(stack))
        plan = stack[-1]
        if plan.is_concrete:
            stack.pop()
            assert plan.query is not None
            c = cost.cost(plan)
            stats.leaf_count += 1
            s = sig(plan.query)
            if exhaustive and s == root_sig:
                roots.append((plan, c))
                if max_roots is not None and len(roots) > max_roots:
                    raise EnumerationError(f"more than {max_roots} root plans")
            incumbent = memo.get(s)
            if incumbent is None or c < incumbent.cost:
                memo[s] = MemoEntry(plan, c, plan.query)
            continue

        top = plan.top_abstraction()
        target = plan.ops[top].query  # type: ignore[union-attr]
        s = sig(target)
        entry = memo.get(s)
        if entry is not None:
            stack.pop()
            stack.append(substitute(plan, top, adapt_memo_entry(entry, target)))
            stats.memo_hits += 1
            continue
        if s in expanded:
            raise EnumerationError(f"no rule produces a plan for sub-query {target}")
        expanded.add(s)
        outputs = apply_rules(target, ctx)
        if not outputs:
            raise EnumerationError(f"no rule applies to sub-query {target}")
        if _is_bare(plan):
            stack.pop()
        for name, out in outputs:
            stats.rule_applications[name] += 1
            stack.append(out)

    stats.t_opt_ms = (time.perf_counter() - start) * 1000.0
    stats.memo_entries = len(memo)
    if root_sig not in memo:
        raise EnumerationError(f"no plan found for {q_in}")
    best = memo[root_sig]
    return EnumerationResult(best.plan, best.cost, stats, roots, memo)


def enumerate_plans(
    program: Program, rules: RuleSet | None = None, cost: CostModel | None = None
) -> tuple[PlanGraph, EnumerationStats]:
    """Best plan for the program's answer query and the enumeration statistics."""
    res = run_enumeration(program, rules, cost)
    return res.best, res.stats


def exhaustive_plans(
    program: Program,
    rules: RuleSet | None = None,
    cost: CostModel | None = None,
    max_roots: int | None = None,
) -> list[tuple[PlanGraph, float]]:
    """Every concrete plan produced for the root query (sub-queries stay best-only)."""
    return run_enumeration(program, rules, cost, exhaustive=True, max_roots=max_roots).roots


# -- plan-space accounting -------------------------------------------------------------


def predicted_plan_count(n: int, recursive: bool) -> int:
    """Leaf count of the star query of ``n`` atoms, by summation over atom subsets."""
    if n < 2:
        raise ValueError("n must be at least 2")
    if recursive:
        return 2 * n + sum(comb(n, k) * (2**k - 1) for k in range(2, n + 1))
    return n + sum(comb(n, k) * (2 ** (k - 1) - 1) for k in range(2, n + 1))


def closed_form_unrecursive(n: int) -> int:
    return (3**n - 2 ** (n + 1) + 2 * n + 1) // 2


def closed_form_recursive(n: int) -> int:
    return 3**n - 2**n + n


def _label_rules(n: int) -> list[str]:
    return [f'E{i}(s, t) :- E(s, e, t), P(e, "label", "E{i}").' for i in range(1, n + 1)]


def _program(n: int, body: list[str], head: list[str]) -> Program:
    text = "\n".join(_label_rules(n) + [f"Ans({', '.join(head)}) :- {', '.join(body)}."])
    return parse_program(text)


def make_star_query(n: int, recursive: bool) -> Program:
    """``Ans(c, x1..xn) :- E1(c, x1), ..., En(c, xn)`` with closures when ``recursive``."""
    if n < 2:
        raise ValueError("n must be at least 2")
    plus = "+" if recursive else ""
    body = [f"E{i}{plus}(c, x{i})" for i in range(1, n + 1)]
    return _program(n, body, ["c"] + [f"x{i}" for i in range(1, n + 1)])


def make_chain_query(n: int, recursive: bool) -> Program:
    """``Ans(x0..xn) :- E1(x0, x1), ..., En(x(n-1), xn)``."""
    if n < 2:
        raise ValueError("n must be at least 2")
    plus = "+" if recursive else ""
    body = [f"E{i}{plus}(x{i - 1}, x{i})" for i in range(1, n + 1)]
    return _program(n, body, [f"x{i}" for i in range(n + 1)])


def make_cycle_query(n: int, recursive: bool) -> Program:
    """Chain closed back onto its first variable (``ccc`` shape)."""
    if n < 3:
        raise ValueError("n must be at least 3")
    plus = "+" if recursive else ""
    body = [f"E{i}{plus}(x{i - 1}, x{i % n})" for i in range(1, n + 1)]
    return _program(n, body, [f"x{i}" for i in range(n)])


SHAPES = {"star": make_star_query, "chain": make_chain_query, "ccc": make_cycle_query}


@dataclass(frozen=True)
class CountRow:
    shape: str
    n: int
    recursive: bool
    leaf_count: int
    predicted: int | None
    t_opt_ms: float


def count_plans(
    shape: str, ns: range | list[int], recursive: bool, rules: RuleSet | None = None
) -> Iterator[CountRow]:
    """Leaf counts (and star predictions) for a family of query shapes."""
    make = SHAPES[shape]
    for n in ns:
        program = make(n, recursive)
        _, stats = enumerate_plans(program, rules)
        predicted = None
        if shape == "star":
            rs = rules or RuleSet()
            if not recursive or (rs.seed and rs.join):
                predicted = predicted_plan_count(n, recursive)
        yield CountRow(shape, n, recursive, stats.leaf_count, predicted, stats.t_opt_ms)
