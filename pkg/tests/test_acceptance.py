"""Acceptance criteria, one test each.  Measured figures go to the run summary."""

from __future__ import annotations

import time
from itertools import combinations

from conftest import (
    CLOSURE_PROGRAM,
    REPORT,
    all_roots_match,
    answers,
    cost_for,
    names,
    seeded_closure_plan,
)
from rqopt.bench import run_mode
from rqopt.enumerator import (
    adapt_memo_entry,
    closed_form_unrecursive,
    enumerate_plans,
    make_chain_query,
    make_star_query,
    predicted_plan_count,
    run_enumeration,
)
from rqopt.executor import (
    datalog_oracle,
    execute,
    label_relation,
    seeded_closure_oracle,
    transitive_closure_oracle,
)
from rqopt.ir import atom, join_graph, parse_program, query_signature
from rqopt.plan import BufferRead, Dedup, Project, Rename, flow_groups, substitute, validate
from rqopt.rules import RuleContext, RuleSet, apply_seeding_rule, ccp_pairs
from rqopt.synth import (
    FRAGMENTS,
    QUERIES,
    RANDOM_BINDINGS,
    TEMPLATES,
    fig1_fragment,
    instantiate_template,
    query4_fragment,
    random_graph,
    selective_instance,
    selective_instances,
)

MODES = RuleSet.MODES


def _p_u(n: int) -> int:
    return predicted_plan_count(n, recursive=False)


def _p_o(n: int) -> int:
    return predicted_plan_count(n, recursive=True)


def test_01_plan_count_unrecursive():
    start = time.perf_counter()
    expected = [3, 9, 29, 95, _p_u(6)]
    got = []
    for n in range(2, 7):
        _, stats = enumerate_plans(make_star_query(n, False), RuleSet.for_mode("unopt"))
        got.append(stats.leaf_count)
        assert _p_u(n) == closed_form_unrecursive(n)
    elapsed = time.perf_counter() - start
    REPORT["01 P_u leaf counts n=2..6"] = f"{got} in {elapsed:.2f}s"
    assert got == expected
    assert elapsed < 10


def test_02_plan_count_recursive():
    expected = [7, 22, 69, 216, _p_o(6)]
    got = [enumerate_plans(make_star_query(n, True), RuleSet.for_mode("opt"))[1].leaf_count for n in range(2, 7)]
    REPORT["02 P_o leaf counts n=2..6"] = str(got)
    assert got == expected


def test_03_theorem_bound():
    for n in range(2, 13):
        assert _p_o(n) <= 6 * _p_u(n), n


def test_04_semantic_equivalence():
    start = time.perf_counter()
    checked = 0
    failures = []
    for seed in range(10):
        g = random_graph(seed)
        assert len(g.edges) <= 200 and len(g.labels) <= 4
        for name in TEMPLATES:
            program = instantiate_template(name, RANDOM_BINDINGS)
            for mode in MODES:
                n, bad = all_roots_match(program, g, mode)
                checked += n
                failures += [f"{name} seed={seed} {mode}: {b}" for b in bad]
    for name, text in QUERIES.items():
        g = FRAGMENTS[name]()
        for mode in MODES:
            n, bad = all_roots_match(parse_program(text), g, mode)
            checked += n
            failures += [f"{name} {mode}: {b}" for b in bad]
    elapsed = time.perf_counter() - start
    REPORT["04 root plans checked against the oracle"] = f"{checked} in {elapsed:.1f}s"
    assert not failures, failures[:10]
    assert elapsed < 300


def test_05_query1_witness():
    g = fig1_fragment()
    program = parse_program(QUERIES["query1"])
    for mode in MODES:
        res = run_enumeration(program, RuleSet.for_mode(mode), cost_for(g))
        assert ("p1", "p3") in names(g, answers(res.best, program, g)), mode


def test_06_join_rule_fidelity(query4):
    body = query4.rules["Ans"][0].body
    pred = {i: a.predicate for i, a in enumerate(body)}
    got = {
        frozenset([frozenset(pred[i] for i in t), frozenset(pred[i] for i in u)])
        for t, u in ccp_pairs(join_graph(body))
    }
    listed = [
        ({"V"}, {"W", "Y", "Z"}),
        ({"W"}, {"V", "Y", "Z"}),
        ({"Y"}, {"V", "W", "Z"}),
        ({"Z"}, {"V", "W", "Y"}),
        ({"V", "W"}, {"Y", "Z"}),
        ({"V", "Z"}, {"W", "Y"}),
    ]
    assert len(ccp_pairs(join_graph(body))) == 6
    assert got == {frozenset([frozenset(t), frozenset(u)]) for t, u in listed}
    for k in range(2, 9):
        atoms = [atom("R", "x", f"y{i}") for i in range(k)]
        nodes = list(range(k))
        # brute-force subset oracle: every split of a clique is connected on both sides
        oracle = {
            frozenset([frozenset(t), frozenset(set(nodes) - set(t))])
            for r in range(1, k)
            for t in combinations(nodes, r)
        }
        pairs = ccp_pairs(join_graph(atoms))
        assert len(pairs) == 2 ** (k - 1) - 1 == len(oracle)
        assert {frozenset([frozenset(t), frozenset(u)]) for t, u in pairs} == oracle


def seeding_rule_plan(program, g, memo):
    (_, plan), = apply_seeding_rule(program.answer_query(), RuleContext(program, cost_for(g)))
    while plan.abstractions:
        top = plan.top_abstraction()
        target = plan.ops[top].query
        plan = substitute(plan, top, adapt_memo_entry(memo[query_signature(target)], target))
    return plan


def _seed_nodes(plan):
    return [
        i for i, op in plan.ops.items()
        if isinstance(op, Dedup)
        and isinstance(plan.ops[op.child], Project)
        and isinstance(plan.ops[plan.ops[op.child].child], BufferRead)
    ]


def _identity_seeded(plan, seed: int) -> bool:
    for op in plan.ops.values():
        if isinstance(op, Rename) and op.child == seed:
            sources = {s for _, s in op.mapping}
            return len(op.mapping) == 2 and len(sources) == 1
    return False


SEEDING_CASES = [
    # (label, program, graphs, seeded closures, stacking buffers)
    ("query2", lambda: parse_program(QUERIES["query2"]),
     lambda: [fig1_fragment(), selective_instance("exterior").graph], 1, 0),
    ("pcc3", lambda: instantiate_template("PCC3", RANDOM_BINDINGS),
     lambda: [random_graph(s) for s in range(3)] + [selective_instance("stacked").graph], 3, 2),
    ("query4", lambda: parse_program(QUERIES["query4"]),
     lambda: [query4_fragment(), random_graph(0)], 3, 2),
]


def test_07_seeding_program_fidelity():
    for label, make_program, graphs, closures, stacking_buffers in SEEDING_CASES:
        program = make_program()
        seen = 0
        for g in graphs():
            expected = datalog_oracle(program, g)
            res = run_enumeration(program, RuleSet(), cost_for(g), exhaustive=True)
            seeded = [p for p, _ in res.roots if p.optimized]
            assert seeded, label
            for plan in seeded:
                seen += 1
                assert validate(plan) == [], label
                assert answers(plan, program, g) == expected, label

            # the seeding rule applied to the whole query, completed from the memo
            plan = seeding_rule_plan(program, g, res.memo)
            assert validate(plan) == [], label
            assert answers(plan, program, g) == expected, label
            seeds = _seed_nodes(plan)
            assert len(seeds) == closures, label
            assert all(_identity_seeded(plan, s) for s in seeds), label
            assert len([x for x in flow_groups(plan) if x.fixpoint]) == closures, label
            # one buffer for the seeding relation, one per closure, plus stacking
            assert len(plan.buffers) == 1 + closures + stacking_buffers, label
        REPORT[f"07 seeded root plans checked ({label})"] = str(seen)


def test_08_seeding_benefit():
    inst = selective_instance("exterior")
    unopt = run_mode(inst.name, inst.program, inst.graph, "unopt")
    opt = run_mode(inst.name, inst.program, inst.graph, "opt")
    assert opt.rows == unopt.rows
    ratio = opt.row.c_p / unopt.row.c_p
    REPORT["08 c(p) opt/unopt on the exterior instance"] = (
        f"{opt.row.c_p}/{unopt.row.c_p} = {ratio:.3f}"
    )
    assert ratio <= 0.5


def test_09_optimization_time_scaling():
    chain = {}
    for n in range(2, 11):
        _, stats = enumerate_plans(make_chain_query(n, True))
        chain[n] = stats.t_opt_ms
    star = {}
    for n in (5, 6, 7):
        _, stats = enumerate_plans(make_star_query(n, True))
        star[n] = stats.t_opt_ms
    REPORT["09 chain-r t_opt ms n=2..10"] = ", ".join(f"{chain[n]:.0f}" for n in chain)
    REPORT["09 star-r t_opt ms n=5..7"] = ", ".join(f"{star[n]:.0f}" for n in star)
    assert all(t < 1000 for t in chain.values()), chain
    assert star[6] >= 2 * star[5] and star[7] >= 2 * star[6], star


def test_10_fixpoints_on_cycles():
    start = time.perf_counter()
    for seed in range(20):
        g = random_graph(100 + seed, vertices=30, edges=90, cycle=True)
        base = label_relation(g, "r")
        full = transitive_closure_oracle(base)
        for mode in MODES:
            res = run_enumeration(CLOSURE_PROGRAM, RuleSet.for_mode(mode), cost_for(g))
            assert answers(res.best, CLOSURE_PROGRAM, g) == full
        seeds = {s for s, _ in label_relation(g, "s")}
        for direction, cols in (("forward", ("f", "v")), ("reverse", ("u", "f"))):
            rel, _ = execute(seeded_closure_plan(g, direction), g)
            assert rel.project(cols) == seeded_closure_oracle(base, seeds, direction)
    assert time.perf_counter() - start < 60


def test_11_mode_ordering():
    lines = []
    for inst in selective_instances():
        c = {}
        results = set()
        for mode in MODES:
            run = run_mode(inst.name, inst.program, inst.graph, mode)
            c[mode] = run.row.c_p
            results.add(frozenset(run.rows))
        lines.append(f"{inst.name} {c['unopt']}/{c['waveguide']}/{c['opt']}")
        assert len(results) == 1, inst.name
        assert c["opt"] <= c["waveguide"] <= c["unopt"], (inst.name, c)
    REPORT["11 c(p) unopt/waveguide/opt"] = "; ".join(lines)
