"""Command-line front end: ``rqopt <command> [options]``."""

from __future__ import annotations

import argparse
import sys
from collections.abc import Sequence
from pathlib import Path

from .bench import (
    BenchRow,
    exhaustive_report,
    ratios_lines,
    rows_to_csv,
    rows_to_text,
    run_mode,
)
from .cost import CostConfigError, CostModel
from .enumerator import SHAPES, EnumerationError, count_plans, run_enumeration
from .executor import ExecutionError, execute
from .graph import GraphError, PropertyGraph, build_catalog, ingest_rdf, load_graph, read_rdf, write_graph
from .ir import Program, QueryError, parse_program
from .plan import render_dot, render_text
from .rules import RuleConfigError, RuleSet
from .synth import TEMPLATES, instantiate_template, parse_bindings, random_graph

EXIT_ERROR = 2


class CliError(Exception):
    pass


def parse_settings(text: str | None) -> dict[str, str]:
    """``k=v,k=v`` into a dict; keys without a ``cost.`` prefix are rule toggles."""
    out: dict[str, str] = {}
    if not text:
        return out
    for item in text.split(","):
        item = item.strip()
        if not item:
            continue
        if "=" not in item:
            raise CliError(f"--rules entries must look like key=value, got {item!r}")
        k, v = item.split("=", 1)
        out[k.strip()] = v.strip()
    return out


def parse_range(text: str) -> list[int]:
    """``5``, ``2-6`` or ``2..6`` (inclusive)."""
    for sep in ("..", "-"):
        if sep in text:
            lo, hi = text.split(sep, 1)
            return list(range(int(lo), int(hi) + 1))
    return [int(text)]


def _read(path: str) -> str:
    return Path(path).read_text(encoding="utf-8")


def read_names(path: str) -> dict[int, str]:
    """``id<TAB>name`` lines, as written by ``ingest-rdf --out-names``."""
    names: dict[int, str] = {}
    for lineno, line in enumerate(_read(path).splitlines(), 1):
        if not line.strip() or line.startswith("#"):
            continue
        parts = line.split("\t")
        if len(parts) != 2:
            raise CliError(f"{path}:{lineno}: expected id<TAB>name")
        try:
            names[int(parts[0])] = parts[1]
        except ValueError:
            raise CliError(f"{path}:{lineno}: vertex id {parts[0]!r} is not an integer") from None
    return names


def load_inputs(args: argparse.Namespace) -> PropertyGraph:
    if args.edges:
        with open(args.edges, encoding="utf-8") as e:
            if args.props:
                with open(args.props, encoding="utf-8") as p:
                    g = load_graph(e, p)
            else:
                g = load_graph(e)
        if args.names:
            g.names = read_names(args.names)
        return g
    if args.seed is not None:
        return random_graph(args.seed)
    raise CliError("a graph is required: pass --edges/--props or --seed")


def load_program(args: argparse.Namespace) -> Program:
    if not args.query:
        raise CliError("--query is required")
    return parse_program(_read(args.query))


def configure(args: argparse.Namespace, g: PropertyGraph) -> tuple[RuleSet, CostModel]:
    settings = parse_settings(args.rules)
    rules = RuleSet.for_mode(args.mode).with_config({k: v for k, v in settings.items() if not k.startswith("cost.")})
    cost = CostModel.from_config(build_catalog(g), {k: v for k, v in settings.items() if k.startswith("cost.")})
    return rules, cost


def _fmt_value(g: PropertyGraph, v: object) -> str:
    return g.names.get(v, str(v)) if isinstance(v, int) else str(v)


# -- commands --------------------------------------------------------------------------


def cmd_run(args: argparse.Namespace, out) -> int:
    g = load_inputs(args)
    program = load_program(args)
    rules, cost = configure(args, g)
    res = run_enumeration(program, rules, cost)
    rel, metrics = execute(res.best, g, args.timeout_ms)
    rows = sorted(rel.project(program.answer_columns()), key=lambda r: tuple(map(str, r)))
    cols = program.answer_columns()
    if args.format == "csv":
        out.write(",".join(cols) + "\n")
        for r in rows:
            out.write(",".join(_fmt_value(g, v) for v in r) + "\n")
        return 0
    if not args.count_only:
        out.write("\t".join(cols) + "\n")
        for r in rows:
            out.write("\t".join(_fmt_value(g, v) for v in r) + "\n")
    out.write(f"count: {len(rows)}\n")
    out.write(f"t_opt_ms: {res.stats.t_opt_ms:.3f}\n")
    out.write(f"t_exec_ms: {metrics.t_exec_ms:.3f}\n")
    out.write(f"c_p: {metrics.tuples_processed}\n")
    out.write(f"est_cost: {res.cost:.1f}\n")
    out.write("plan:\n" + render_text(res.best) + "\n")
    for line in res.stats.lines():
        out.write(line + "\n")
    return 0


def cmd_explain(args: argparse.Namespace, out) -> int:
    g = load_inputs(args)
    program = load_program(args)
    rules, cost = configure(args, g)
    res = run_enumeration(program, rules, cost)
    if args.format == "text":
        out.write(render_text(res.best) + "\n")
        out.write(f"est_cost={res.cost:.1f}\n")
    else:
        out.write(f"// est_cost={res.cost:.1f}\n")
        out.write(render_dot(res.best, title=Path(args.query).stem) + "\n")
    return 0


def cmd_exhaustive(args: argparse.Namespace, out) -> int:
    g = load_inputs(args)
    program = load_program(args)
    _, cost = configure(args, g)
    report = exhaustive_report(Path(args.query).stem, program, g, cost, args.timeout_ms, args.max_plans)
    write = rows_to_csv if args.format == "csv" else rows_to_text
    out.write(write(report.runs))
    for line in ratios_lines(report):
        out.write(line + "\n")
    return 0


def cmd_count_plans(args: argparse.Namespace, out) -> int:
    rules = RuleSet.for_mode(args.mode).with_config(parse_settings(args.rules))
    ns = parse_range(args.n)
    if min(ns) < 2:
        raise CliError("--n must start at 2 or more")
    rows = list(count_plans(args.shape, ns, args.recursive, rules))
    write = rows_to_text if args.format == "text" else rows_to_csv
    out.write(write(rows))
    return 0


def cmd_templates(args: argparse.Namespace, out) -> int:
    g = load_inputs(args)
    bindings = parse_bindings(_read(args.bindings)) if args.bindings else {}
    settings = parse_settings(args.rules)
    cost = CostModel.from_config(build_catalog(g), {k: v for k, v in settings.items() if k.startswith("cost.")})
    names = args.only.split(",") if args.only else list(TEMPLATES)
    rows: list[BenchRow] = []
    for name in names:
        program = instantiate_template(name, bindings)
        counts = set()
        for mode in RuleSet.MODES:
            run = run_mode(name, program, g, mode, cost, args.timeout_ms)
            rows.append(run.row)
            if not run.row.timed_out:
                counts.add(run.row.result_count)
        if len(counts) > 1:
            raise CliError(f"template {name}: modes disagree on the result count {sorted(counts)}")
    write = rows_to_csv if args.format == "csv" else rows_to_text
    out.write(write(rows))
    return 0


def cmd_ingest_rdf(args: argparse.Namespace, out) -> int:
    with open(args.rdf, encoding="utf-8") as f:
        g = ingest_rdf(read_rdf(f))
    with open(args.out_edges, "w", encoding="utf-8") as e, open(args.out_props, "w", encoding="utf-8") as p:
        write_graph(g, e, p)
    if args.out_names:
        with open(args.out_names, "w", encoding="utf-8") as n:
            for v in sorted(g.names):
                n.write(f"{v}\t{g.names[v]}\n")
    out.write(f"vertices={len(g.vertex_ids)} edges={len(g.edges)} props={len(g.props)}\n")
    return 0


# -- parser ------------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--edges", help="edge file: src<TAB>edge<TAB>dst per line")
    common.add_argument("--props", help="property file: obj<TAB>key<TAB>value per line")
    common.add_argument("--names", help="optional id<TAB>name file used when printing vertices")
    common.add_argument("--query", help="query file in the rule language")
    common.add_argument("--rules", help="comma-separated settings, e.g. seed=off,cost.expansion_cap=8")
    common.add_argument("--mode", choices=RuleSet.MODES, default="opt", help="rule set (default: opt)")
    common.add_argument("--timeout-ms", type=float, default=None, help="execution time limit per plan")
    common.add_argument("--format", choices=("text", "csv", "dot"), default=None)
    common.add_argument("--seed", type=int, default=None, help="use a random graph with this seed instead of files")

    parser = argparse.ArgumentParser(prog="rqopt", description="Optimize and evaluate regular queries on property graphs.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", parents=[common], help="optimize, execute and print the result")
    p.add_argument("--count-only", action="store_true", help="omit result tuples")
    p.set_defaults(func=cmd_run, default_format="text")

    p = sub.add_parser("explain", parents=[common], help="print the chosen plan (DOT by default)")
    p.set_defaults(func=cmd_explain, default_format="dot")

    p = sub.add_parser("exhaustive", parents=[common], help="execute every root plan and report PC/PT/AC/AT")
    p.add_argument("--max-plans", type=int, default=500)
    p.set_defaults(func=cmd_exhaustive, default_format="text", timeout_default=30_000.0)

    p = sub.add_parser("count-plans", parents=[common], help="plan-space size per query shape")
    p.add_argument("--shape", choices=sorted(SHAPES), default="star")
    p.add_argument("--n", default="2-6", help="size or inclusive range, e.g. 2-6")
    p.add_argument("--recursive", action="store_true")
    p.set_defaults(func=cmd_count_plans, default_format="csv")

    p = sub.add_parser("templates", parents=[common], help="run the query templates in all three modes")
    p.add_argument("--bindings", help="file of l1/l2/l3/c1 = value lines")
    p.add_argument("--only", help="comma-separated template names")
    p.set_defaults(func=cmd_templates, default_format="text")

    p = sub.add_parser("ingest-rdf", help="convert tab-separated RDF triples into graph files")
    p.add_argument("--rdf", required=True)
    p.add_argument("--out-edges", required=True)
    p.add_argument("--out-props", required=True)
    p.add_argument("--out-names", help="optional vertex-name mapping output")
    p.set_defaults(func=cmd_ingest_rdf, default_format="text")
    return parser


def main(argv: Sequence[str] | None = None, out=None) -> int:
    out = out or sys.stdout
    parser = build_parser()
    args = parser.parse_args(argv)
    if getattr(args, "format", None) is None:
        args.format = args.default_format
    if getattr(args, "timeout_ms", None) is None and hasattr(args, "timeout_default"):
        args.timeout_ms = args.timeout_default
    try:
        return args.func(args, out)
    except (
        OSError,
        GraphError,
        QueryError,
        EnumerationError,
        ExecutionError,
        RuleConfigError,
        CostConfigError,
        CliError,
        ValueError,
    ) as exc:
        print(f"rqopt {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
