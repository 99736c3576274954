from __future__ import annotations

import pytest

from rqopt.cost import CostModel
from rqopt.enumerator import run_enumeration
from rqopt.executor import datalog_oracle, execute
from rqopt.graph import PropertyGraph, build_catalog
from rqopt.ir import ConjunctiveQuery, Program, parse_program
from rqopt.plan import PlanGraph
from rqopt.rules import RuleSet
from rqopt.synth import QUERY1, QUERY2, QUERY3, QUERY4, fig1_fragment


@pytest.fixture(scope="session")
def fig1() -> PropertyGraph:
    return fig1_fragment()


@pytest.fixture(scope="session")
def query1() -> Program:
    return parse_program(QUERY1)


@pytest.fixture(scope="session")
def query2() -> Program:
    return parse_program(QUERY2)


@pytest.fixture(scope="session")
def query3() -> Program:
    return parse_program(QUERY3)


@pytest.fixture(scope="session")
def query4() -> Program:
    return parse_program(QUERY4)


def cost_for(g: PropertyGraph) -> CostModel:
    return CostModel(build_catalog(g))


def answers(plan: PlanGraph, program: Program, g: PropertyGraph) -> set[tuple]:
    rel, _ = execute(plan, g)
    return rel.project(program.answer_columns())


def names(g: PropertyGraph, rows: set[tuple]) -> set[tuple]:
    return {tuple(g.names.get(v, v) for v in r) for r in rows}


def all_roots_match(program: Program, g: PropertyGraph, mode: str = "opt") -> tuple[int, list[str]]:
    """Execute every root plan of ``mode`` and compare with the oracle; returns (count, failures)."""
    expected = datalog_oracle(program, g)
    res = run_enumeration(program, RuleSet.for_mode(mode), cost_for(g), exhaustive=True)
    failures = []
    for i, (plan, _) in enumerate(res.roots):
        got = answers(plan, program, g)
        if got != expected:
            failures.append(f"root plan {i}: {len(got)} rows, oracle {len(expected)}")
    return len(res.roots), failures


CLOSURE_PROGRAM = parse_program(
    'R(s, t) :- E(s, e, t), P(e, "label", "r").\n'
    'S(s, t) :- E(s, e, t), P(e, "label", "s").\n'
    "Ans(x, y) :- R+(x, y)."
)


def resolve(plan: PlanGraph, ctx) -> PlanGraph:
    """Fill every abstraction with the leaf-rule plan for its query."""
    from rqopt.plan import substitute
    from rqopt.rules import apply_leaf_rules

    while plan.abstractions:
        top = plan.top_abstraction()
        (_, leaf), *_ = apply_leaf_rules(plan.ops[top].query, ctx)
        plan = substitute(plan, top, leaf)
    return plan


def seeded_closure_plan(g: PropertyGraph, direction: str) -> PlanGraph:
    """Closure of label ``r`` seeded by the sources of ``s`` edges, in ``direction``."""
    from rqopt.ir import atom
    from rqopt.plan import PlanBuilder
    from rqopt.rules import FreedClosure, RuleContext, seeded_closure

    ctx = RuleContext(CLOSURE_PROGRAM, cost_for(g))
    b = PlanBuilder()
    seed_buf = b.buffer()
    seed_src = b.abstraction(ConjunctiveQuery(("f", "w"), (atom("S", "f", "w"),)))
    b.write(seed_src, seed_buf)
    position = 1 if direction == "forward" else 0
    c = FreedClosure(atom("R", "u", "v", closure=True), position, "f")
    out, _ = seeded_closure(b, c, seed_buf, ("f", "w"), ctx)
    return resolve(b.build(out), ctx)


# Measured figures reported by the acceptance suite, printed after the run.
REPORT: dict[str, str] = {}


def pytest_terminal_summary(terminalreporter):
    if REPORT:
        terminalreporter.section("acceptance measurements")
        for key in sorted(REPORT):
            terminalreporter.write_line(f"{key}: {REPORT[key]}")
