from __future__ import annotations

import csv
import io
from pathlib import Path

import pytest

from rqopt.cli import main, parse_range, parse_settings, CliError

SAMPLES = Path(__file__).resolve().parent.parent / "samples"


def run(*argv: str) -> tuple[int, str]:
    out = io.StringIO()
    code = main(list(argv), out=out)
    return code, out.getvalue()


def fig1_args(query: str = "query1.rq") -> list[str]:
    return [
        "--edges", str(SAMPLES / "fig1.edges"),
        "--props", str(SAMPLES / "fig1.props"),
        "--names", str(SAMPLES / "fig1.names"),
        "--query", str(SAMPLES / query),
    ]


def test_run_prints_results_and_metrics():
    code, out = run("run", *fig1_args())
    assert code == 0
    lines = out.splitlines()
    assert lines[0] == "w\tz"
    assert "p1\tp3" in lines
    assert any(l.startswith("count: ") for l in lines)
    assert any(l.startswith("c_p: ") for l in lines)
    assert "plan:" in lines
    assert any(l.startswith("stat.leaf_count=") for l in lines)


@pytest.mark.parametrize("mode", ["unopt", "waveguide", "opt"])
def test_run_modes_agree(mode):
    code, out = run("run", *fig1_args("query2.rq"), "--mode", mode, "--count-only")
    assert code == 0
    assert "count: 3" in out.splitlines()


def test_rules_override_disables_seeding():
    code, out = run("run", *fig1_args("query2.rq"), "--rules", "seed=off", "--count-only")
    assert code == 0 and "stat.rule.seed" not in out


def test_run_csv():
    code, out = run("run", *fig1_args("query2.rq"), "--format", "csv")
    rows = list(csv.reader(io.StringIO(out)))
    assert rows[0] == ["x", "z"] and len(rows) == 4


def test_missing_file_exits_2(capsys):
    code, _ = run("run", "--edges", "/nonexistent/g.edges", "--query", str(SAMPLES / "query1.rq"))
    assert code == 2
    err = capsys.readouterr().err
    assert "/nonexistent/g.edges" in err and err.startswith("rqopt run: error:")


def test_bad_rules_exit_2(capsys):
    code, _ = run("run", *fig1_args(), "--rules", "warp=on")
    assert code == 2
    assert "warp" in capsys.readouterr().err


def test_bad_query_exit_2(tmp_path, capsys):
    q = tmp_path / "bad.rq"
    q.write_text("Ans(x) :- Nope(x).")
    code, _ = run("run", "--seed", "1", "--query", str(q))
    assert code == 2
    assert "Nope" in capsys.readouterr().err


def test_explain_is_deterministic_dot():
    args = ["explain", "--edges", str(SAMPLES / "sel_pcc2.edges"), "--props", str(SAMPLES / "sel_pcc2.props"),
            "--query", str(SAMPLES / "sel_pcc2.rq")]
    code, a = run(*args)
    _, b = run(*args)
    assert code == 0 and a == b
    assert a.startswith("// est_cost=")
    assert 'digraph "sel_pcc2"' in a
    # two seeded closures plus the stacking buffer between them
    assert a.count("fillcolor=lightyellow") > 0
    assert a.count("BufferWrite") == 4
    assert a.count("style=dashed") >= 4


def test_explain_text():
    code, out = run("explain", *fig1_args("query2.rq"), "--format", "text")
    assert code == 0 and "est_cost=" in out and "Join" in out


def test_count_plans_csv():
    code, out = run("count-plans", "--shape", "star", "--n", "2-4", "--recursive")
    rows = list(csv.DictReader(io.StringIO(out)))
    assert [int(r["leaf_count"]) for r in rows] == [7, 22, 69]
    assert [r["leaf_count"] for r in rows] == [r["predicted"] for r in rows]
    code, _ = run("count-plans", "--n", "1-3")
    assert code == 2


def test_templates_with_bindings():
    code, out = run("templates", "--seed", "7", "--bindings", str(SAMPLES / "bindings.txt"), "--only", "CCC1,PCC2")
    assert code == 0
    lines = out.splitlines()
    assert lines[0].split()[:2] == ["query", "mode"]
    assert len(lines) == 1 + 2 * 3


def test_templates_unbound_variable(tmp_path, capsys):
    b = tmp_path / "b.txt"
    b.write_text("l1 = r\n")
    code, _ = run("templates", "--seed", "7", "--bindings", str(b), "--only", "RQ")
    assert code == 2
    assert "unbound" in capsys.readouterr().err


def test_ingest_rdf_round_trip(tmp_path):
    e, p, n = tmp_path / "g.edges", tmp_path / "g.props", tmp_path / "g.names"
    code, out = run("ingest-rdf", "--rdf", str(SAMPLES / "tiny.rdf"), "--out-edges", str(e),
                    "--out-props", str(p), "--out-names", str(n))
    assert code == 0 and "edges=3" in out
    q = tmp_path / "q.rq"
    q.write_text('K(s, t) :- E(s, e, t), P(e, "label", "knows").\nAns(x, y) :- K+(x, y).')
    code, out = run("run", "--edges", str(e), "--props", str(p), "--query", str(q), "--count-only")
    assert "count: 3" in out.splitlines()


def test_exhaustive_reports_ratios():
    code, out = run("exhaustive", *fig1_args("query2.rq"))
    assert code == 0
    for key in ("PC=", "PT=", "AC=", "AT="):
        assert any(l.startswith(key) for l in out.splitlines())
    classes = {l.split()[0] for l in out.splitlines()[1:] if l[:2] in ("U ", "O ")}
    assert classes == {"U", "O"}


def test_bad_names_file(tmp_path, capsys):
    n = tmp_path / "bad.names"
    n.write_text("x\tp1\n")
    args = fig1_args()
    args[args.index("--names") + 1] = str(n)
    code, _ = run("run", *args)
    assert code == 2 and "not an integer" in capsys.readouterr().err


def test_helpers():
    assert parse_range("2-6") == [2, 3, 4, 5, 6]
    assert parse_range("3..4") == [3, 4]
    assert parse_range("5") == [5]
    assert parse_settings("seed=off, cost.expansion_cap=8") == {"seed": "off", "cost.expansion_cap": "8"}
    with pytest.raises(CliError):
        parse_settings("seed")
