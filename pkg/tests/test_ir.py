from __future__ import annotations

import itertools
import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from rqopt.ir import (
    Atom,
    ConjunctiveQuery,
    DisconnectedQueryError,
    QueryError,
    QuerySyntaxError,
    atom,
    classify_closures,
    eq_filter,
    isomorphism,
    join_graph,
    parse_program,
    query_signature,
    topological_predicates,
)
from rqopt.synth import instantiate_template, RANDOM_BINDINGS


def test_query1_parses_five_predicates(query1):
    assert set(query1.rules) == {"O", "T", "F", "I", "Ans"}
    assert query1.answer == "Ans"
    assert query1.answer_columns() == ("w", "z")
    ans = query1.rules["Ans"][0]
    assert [a.predicate for a in ans.body] == ["O", "I", "O", "F"]
    assert [a.closure for a in ans.body] == [False, True, False, False]


def test_label_rules_are_recognised(query1):
    assert query1.label_of("O") == ("owns", False)
    assert query1.label_of("T") == ("transaction", False)
    assert query1.label_of("F") is None


def test_topological_order_puts_dependencies_first(query1):
    order = topological_predicates(query1)
    assert order.index("T") < order.index("F") < order.index("I") < order.index("Ans")


def test_query4_join_graph(query4):
    jg = join_graph(query4.rules["Ans"][0])
    # V+(s,x) W+(x,y) Y+(y,z) Z(x,z)
    assert set(jg.edges) == {(0, 1), (0, 3), (1, 2), (1, 3), (2, 3)}
    assert jg.edges[(0, 1)] == frozenset({"x"})
    assert jg.connected()


def test_classify_query4(query4):
    part = classify_closures(query4.rules["Ans"][0])
    assert [a.predicate for a in part.N] == ["Z"]
    assert [a.predicate for a in part.I] == ["W", "Y"]
    assert [a.predicate for a in part.X] == ["V"]


def test_classify_pcc2_and_query2(query2):
    pcc2 = instantiate_template("PCC2", RANDOM_BINDINGS)
    part = classify_closures(pcc2.rules["Ans"][0])
    assert part.N == () and len(part.I) == 2 and part.X == ()
    part = classify_closures(query2.rules["Ans"][0])
    assert [a.predicate for a in part.X] == ["T"] and part.I == ()


def test_filter_makes_endpoint_shared():
    part = classify_closures([atom("R", "x", "y", closure=True), atom("S", "x", "z"), eq_filter("y", 3)])
    assert len(part.I) == 1
    part = classify_closures([atom("R", "x", "y", closure=True), eq_filter("y", 3)])
    assert len(part.X) == 1


def test_disconnected_body_rejected():
    with pytest.raises(DisconnectedQueryError):
        classify_closures([atom("R", "x", "y"), atom("S", "u", "v")])


@pytest.mark.parametrize(
    "text, fragment",
    [
        ("Ans(x) :- R(x, y).", "not defined"),
        ("R(s,t) :- E(s,e,t).\nAns(x) :- R(x, y, z).", "arity"),
        ("Ans(x, y) :- E(x, e, t).", "unsafe"),
        ("A(x,y) :- B(x,y).\nB(x,y) :- A(x,y).", "recursive"),
        ("Ans(x, y) :- E+(x, e, y).", "closure over extensional"),
        ("R(s,t,u) :- E(s,t,u).\nAns(x,y,z) :- R+(x,y,z).", "non-binary"),
        ("Ans(x, x) :- E(x, e, t).", "distinct variables"),
        ("Ans(x) :- E(x, e, t), q = 3.", "unbound"),
    ],
)
def test_invalid_programs(text, fragment):
    with pytest.raises(QueryError) as err:
        parse_program(text)
    assert fragment in str(err.value)


def test_syntax_error_position():
    with pytest.raises(QuerySyntaxError) as err:
        parse_program("Ans(x) :- E(x, e t).")
    assert "line 1" in str(err.value)


def test_closure_recursion_is_allowed():
    p = parse_program('R(s,t) :- E(s,e,t), P(e,"label","r").\nAns(x,y) :- R+(x,y).')
    assert p.rules["Ans"][0].body[0].closure


def test_union_answer_uses_synthetic_head():
    p = parse_program("Ans(x) :- E(x,e,t).\nAns(x) :- E(t,e,x).")
    assert p.answer_columns() == ("_h0",)
    assert p.answer_query().atoms == (atom("Ans", "_h0"),)


# -- signatures -------------------------------------------------------------


def _random_query(rng: random.Random) -> ConjunctiveQuery:
    vars_ = [f"v{i}" for i in range(rng.randint(2, 5))]
    atoms = []
    for _ in range(rng.randint(1, 5)):
        pred = rng.choice("RST")
        atoms.append(atom(pred, rng.choice(vars_), rng.choice(vars_), closure=rng.random() < 0.4))
    if rng.random() < 0.3:
        atoms.append(eq_filter(rng.choice(atoms).vars[0], rng.randint(0, 2)))
    used = list(dict.fromkeys(v for a in atoms for v in a.vars))
    head = tuple(v for v in used if rng.random() < 0.5)
    return ConjunctiveQuery(head, tuple(atoms))


def _rename(q: ConjunctiveQuery, rng: random.Random) -> ConjunctiveQuery:
    names = q.vars
    fresh = [f"w{i}" for i in range(len(names))]
    rng.shuffle(fresh)
    m = dict(zip(names, fresh))
    atoms = [a.rename(m) for a in q.atoms]
    rng.shuffle(atoms)
    head = [m[v] for v in q.head]
    rng.shuffle(head)
    return ConjunctiveQuery(tuple(head), tuple(atoms))


def _brute_isomorphic(a: ConjunctiveQuery, b: ConjunctiveQuery) -> bool:
    va, vb = a.vars, b.vars
    if len(va) != len(vb) or len(a.atoms) != len(b.atoms):
        return False
    target = sorted(map(repr, set(b.atoms)))
    for perm in itertools.permutations(vb):
        m = dict(zip(va, perm))
        if {m[v] for v in a.head} != set(b.head):
            continue
        if sorted(map(repr, {x.rename(m) for x in a.atoms})) == target:
            return True
    return False


@settings(max_examples=150, deadline=None)
@given(st.integers(0, 10**9))
def test_signature_invariant_under_renaming(seed):
    rng = random.Random(seed)
    q = _random_query(rng)
    r = _rename(q, rng)
    assert query_signature(q) == query_signature(r)
    m = isomorphism(q, r)
    assert {x.rename(m) for x in q.atoms} == set(r.atoms)
    assert {m[v] for v in q.head} == set(r.head)


@settings(max_examples=200, deadline=None)
@given(st.integers(0, 10**9), st.integers(0, 10**9))
def test_signature_equality_matches_brute_force(s1, s2):
    a = _random_query(random.Random(s1))
    b = _random_query(random.Random(s2))
    if len(set(a.atoms)) != len(a.atoms) or len(set(b.atoms)) != len(b.atoms):
        return
    assert (query_signature(a) == query_signature(b)) == _brute_isomorphic(a, b)


def test_signature_distinguishes_closure_and_direction():
    base = ConjunctiveQuery(("x",), (atom("R", "x", "y"),))
    plus = ConjunctiveQuery(("x",), (atom("R", "x", "y", closure=True),))
    flipped = ConjunctiveQuery(("x",), (atom("R", "y", "x"),))
    assert len({query_signature(base), query_signature(plus), query_signature(flipped)}) == 3


def test_isomorphism_rejects_different_queries():
    a = ConjunctiveQuery(("x",), (atom("R", "x", "y"),))
    b = ConjunctiveQuery(("x",), (atom("S", "x", "y"),))
    with pytest.raises(QueryError):
        isomorphism(a, b)


def test_atom_rendering():
    assert str(atom("R", "x", 3, closure=True)) == "R+(x, 3)"
    assert str(Atom("=", eq_filter("x", "a").terms)) == 'x = "a"'
