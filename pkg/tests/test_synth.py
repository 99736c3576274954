from __future__ import annotations

from pathlib import Path

import pytest

from rqopt.executor import datalog_oracle
from rqopt.graph import build_catalog
from rqopt.ir import QueryError
from rqopt.synth import (
    FRAGMENTS,
    RANDOM_BINDINGS,
    TEMPLATES,
    GraphMaker,
    instantiate_template,
    parse_bindings,
    random_graph,
    selective_instances,
    template_text,
)

SAMPLES = Path(__file__).resolve().parent.parent / "samples"


def test_every_template_instantiates():
    for name in TEMPLATES:
        p = instantiate_template(name, RANDOM_BINDINGS)
        assert p.answer == "Ans"


def test_unbound_template_variable():
    with pytest.raises(QueryError) as err:
        template_text("RQ", {"l1": "r", "l2": "s", "l3": "t"})
    assert "c1" in str(err.value)
    with pytest.raises(QueryError):
        template_text("CCC9", RANDOM_BINDINGS)


def test_bindings_are_quoted_or_numeric():
    text = template_text("RQ", {"l1": 'we"ird', "l2": "s", "l3": "t", "c1": "7"})
    assert '"we\\"ird"' in text
    assert "z = 7" in text


def test_parse_bindings_file():
    b = parse_bindings((SAMPLES / "bindings.txt").read_text())
    assert b == {"l1": "r", "l2": "s", "l3": "t", "c1": "3"}
    with pytest.raises(QueryError):
        parse_bindings("l1 r\n")


def test_ccc1_and_ccc2_differ_on_asymmetric_graph():
    m = GraphMaker()
    m.edge("a", "r", "b")
    m.edge("a", "s", "c")
    m.edge("c", "t", "b")  # CCC1 wants T(z, y)
    g = m.build()
    ccc1 = datalog_oracle(instantiate_template("CCC1", RANDOM_BINDINGS), g)
    ccc2 = datalog_oracle(instantiate_template("CCC2", RANDOM_BINDINGS), g)
    assert len(ccc1) == 1 and ccc2 == set()


def test_random_graph_is_seeded_and_cyclic():
    a, b = random_graph(3), random_graph(3)
    assert a.edges == b.edges
    assert random_graph(4).edges != a.edges
    cat = build_catalog(a)
    assert len(a.edges) == 60 and set(cat.label_count) <= {"r", "s", "t", "u"}
    assert len(a.edges) <= 200


def test_fragments_build():
    for name, make in FRAGMENTS.items():
        g = make()
        assert g.edges, name


def test_selective_instances_are_selective():
    for inst in selective_instances():
        cat = build_catalog(inst.graph)
        assert cat.vertex_count >= 1000
        assert inst.program.answer == "Ans"
