from __future__ import annotations

import pytest

from conftest import CLOSURE_PROGRAM, answers, cost_for, names, seeded_closure_plan
from rqopt.enumerator import run_enumeration
from rqopt.executor import (
    ExecutionError,
    ExecutionTimeout,
    count_results,
    datalog_oracle,
    execute,
    label_relation,
    seeded_closure_oracle,
    transitive_closure_oracle,
)
from rqopt.graph import load_graph
from rqopt.ir import Const
from rqopt.plan import PlanBuilder
from rqopt.rules import RuleSet
from rqopt.synth import GraphMaker, fig1_fragment, random_graph, selective_instance


def _ring(n: int, label: str = "r"):
    m = GraphMaker()
    for i in range(n):
        m.edge(i, label, (i + 1) % n)
    return m.build()


def test_closure_oracle_on_ring():
    base = {(i, (i + 1) % 4) for i in range(4)}
    assert transitive_closure_oracle(base) == {(a, b) for a in range(4) for b in range(4)}
    assert seeded_closure_oracle({(0, 1), (1, 2)}, {1}) == {(1, 1), (1, 2)}
    assert seeded_closure_oracle({(0, 1), (1, 2)}, {1}, "reverse") == {(1, 1), (0, 1)}
    with pytest.raises(ValueError):
        seeded_closure_oracle(set(), set(), "up")


def test_closure_plan_terminates_on_cycle():
    g = _ring(6)
    for mode in RuleSet.MODES:
        res = run_enumeration(CLOSURE_PROGRAM, RuleSet.for_mode(mode), cost_for(g))
        rows = answers(res.best, CLOSURE_PROGRAM, g)
        assert len(rows) == 36
        assert rows == transitive_closure_oracle(label_relation(g, "r"))


@pytest.mark.parametrize("direction", ["forward", "reverse"])
def test_seeded_closure_matches_oracle(direction):
    g = random_graph(5)
    rel, _ = execute(seeded_closure_plan(g, direction), g)
    seeds = {s for s, _ in label_relation(g, "s")}
    cols = ("f", "v") if direction == "forward" else ("u", "f")
    assert rel.project(cols) == seeded_closure_oracle(label_relation(g, "r"), seeds, direction)


def test_query_results_on_fig1(fig1, query1, query2):
    res = run_enumeration(query1, RuleSet(), cost_for(fig1))
    assert ("p1", "p3") in names(fig1, answers(res.best, query1, fig1))
    res = run_enumeration(query2, RuleSet(), cost_for(fig1))
    got = answers(res.best, query2, fig1)
    assert got == datalog_oracle(query2, fig1)
    assert count_results(got) == 3


def test_oracle_handles_filters_and_props():
    g = fig1_fragment()
    from rqopt.ir import parse_program
    from rqopt.synth import IBAN

    p = parse_program(f'Ans(a) :- P(a, "IBAN", "{IBAN}").')
    assert names(g, datalog_oracle(p, g)) == {("a5",)}
    res = run_enumeration(p, RuleSet(), cost_for(g))
    assert names(g, answers(res.best, p, g)) == {("a5",)}


def test_empty_graph_processes_nothing(query2):
    g = load_graph("", "")
    res = run_enumeration(query2, RuleSet(), cost_for(g))
    rel, metrics = execute(res.best, g)
    assert len(rel) == 0
    assert metrics.tuples_processed == 0


def test_metrics_count_generating_operators_only(fig1):
    b = PlanBuilder()
    scan = b.scan_e("s", "e", "t")
    plan = b.build(b.project(b.select(scan, [("s", Const(-1))]), ["t"]))
    rel, m = execute(plan, fig1)
    assert len(rel) == 0
    assert m.tuples_processed == len(fig1.edges)
    assert m.op_outputs[scan] == len(fig1.edges)


def test_iterations_are_recorded():
    g = _ring(5)
    res = run_enumeration(CLOSURE_PROGRAM, RuleSet(), cost_for(g))
    _, m = execute(res.best, g)
    assert m.iterations and max(m.iterations.values()) >= 4


def test_timeout():
    inst = selective_instance("exterior")
    res = run_enumeration(inst.program, RuleSet.for_mode("unopt"), cost_for(inst.graph))
    with pytest.raises(ExecutionTimeout):
        execute(res.best, inst.graph, timeout_ms=0.001)


def test_abstract_plan_rejected(query2):
    b = PlanBuilder()
    plan = b.build(b.abstraction(query2.answer_query()))
    with pytest.raises(ExecutionError):
        execute(plan, fig1_fragment())
