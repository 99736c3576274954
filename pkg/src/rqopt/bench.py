"""Per-mode runs, exhaustive plan-class comparison and improvement ratios."""

from __future__ import annotations

import csv
import io
from collections.abc import Iterable, Sequence
from dataclasses import asdict, dataclass, field

from .cost import CostModel
from .enumerator import run_enumeration
from .executor import ExecutionTimeout, execute
from .graph import PropertyGraph, build_catalog
from .ir import Program
from .plan import PlanGraph
from .rules import RuleSet

MODE_NAMES = {"unopt": "unoptimized", "waveguide": "waveguide", "opt": "optimized"}


@dataclass
class BenchRow:
    query: str
    mode: str
    t_opt_ms: float
    t_exec_ms: float | None
    c_p: int | None
    result_count: int | None
    est_cost: float
    optimized: bool
    timed_out: bool = False


@dataclass
class ModeRun:
    row: BenchRow
    plan: PlanGraph
    rows: set | None


def run_mode(
    name: str,
    program: Program,
    g: PropertyGraph,
    mode: str,
    cost: CostModel | None = None,
    timeout_ms: float | None = None,
    rules: RuleSet | None = None,
) -> ModeRun:
    """Enumerate with the mode's rule set, then execute the chosen plan."""
    cost = cost or CostModel(build_catalog(g))
    rs = rules or RuleSet.for_mode(mode)
    res = run_enumeration(program, rs, cost)
    row = BenchRow(name, mode, res.stats.t_opt_ms, None, None, None, res.cost, res.best.optimized)
    rows = None
    try:
        rel, metrics = execute(res.best, g, timeout_ms)
        rows = rel.project(program.answer_columns())
        row.t_exec_ms, row.c_p, row.result_count = metrics.t_exec_ms, metrics.tuples_processed, len(rows)
    except ExecutionTimeout:
        row.timed_out = True
    return ModeRun(row, res.best, rows)


# -- exhaustive comparison --------------------------------------------------------------


@dataclass
class PlanRun:
    plan_class: str  # "U" or "O"
    index: int
    est_cost: float
    c_p: int | None
    t_exec_ms: float | None
    result_count: int | None
    timed_out: bool


@dataclass
class Ratios:
    PC: float | None
    PT: float | None
    AC: float | None
    AT: float | None


@dataclass
class ExhaustiveReport:
    query: str
    runs: list[PlanRun]
    best_u: PlanRun | None
    best_o: PlanRun | None
    est_o: PlanRun | None
    ratios: Ratios
    notes: list[str] = field(default_factory=list)


def _ratio(num: float | None, den: float | None) -> float | None:
    if num is None or den is None:
        return None
    if den == 0:
        return None if num == 0 else float("inf")
    return num / den


def _execute_all(
    cls: str, plans: Sequence[tuple[PlanGraph, float]], program: Program, g: PropertyGraph, timeout_ms: float | None
) -> list[PlanRun]:
    out = []
    for i, (plan, c) in enumerate(plans):
        try:
            rel, m = execute(plan, g, timeout_ms)
            out.append(PlanRun(cls, i, c, m.tuples_processed, m.t_exec_ms, len(rel.project(program.answer_columns())), False))
        except ExecutionTimeout:
            out.append(PlanRun(cls, i, c, None, None, None, True))
    return out


def _in_practice(runs: Iterable[PlanRun]) -> PlanRun | None:
    done = [r for r in runs if not r.timed_out]
    return min(done, key=lambda r: (r.t_exec_ms, r.c_p, r.index)) if done else None


def exhaustive_report(
    name: str,
    program: Program,
    g: PropertyGraph,
    cost: CostModel | None = None,
    timeout_ms: float | None = 30_000.0,
    max_roots: int | None = 500,
) -> ExhaustiveReport:
    """Execute every root plan of the unoptimized class U and the optimized class O.

    U holds the root plans found with seeding disabled; O holds root plans of
    the full rule set that used seeding somewhere in their derivation.  The
    estimated best optimized plan is the cheapest member of O by the cost model.
    """
    cost = cost or CostModel(build_catalog(g))
    u_plans = run_enumeration(program, RuleSet.for_mode("unopt"), cost, exhaustive=True, max_roots=max_roots).roots
    o_all = run_enumeration(program, RuleSet.for_mode("opt"), cost, exhaustive=True, max_roots=max_roots).roots
    o_plans = [(p, c) for p, c in o_all if p.optimized]
    runs = _execute_all("U", u_plans, program, g, timeout_ms) + _execute_all("O", o_plans, program, g, timeout_ms)
    u_runs = [r for r in runs if r.plan_class == "U"]
    o_runs = [r for r in runs if r.plan_class == "O"]
    best_u, best_o = _in_practice(u_runs), _in_practice(o_runs)
    est_o = min(o_runs, key=lambda r: (r.est_cost, r.index)) if o_runs else None
    notes = []
    if best_u is None:
        notes.append("no unoptimized plan finished: PC, PT, AC, AT unavailable")
    if best_o is None:
        notes.append("no optimized plan finished: PC, PT unavailable")
    if est_o is not None and est_o.timed_out:
        notes.append("estimated best optimized plan timed out: AC, AT unavailable")
    if not o_runs:
        notes.append("optimized class is empty (seeding does not apply)")

    def c(r):
        return None if r is None or r.timed_out else r.c_p

    def t(r):
        return None if r is None or r.timed_out else r.t_exec_ms

    ratios = Ratios(
        _ratio(c(best_u), c(best_o)),
        _ratio(t(best_u), t(best_o)),
        _ratio(c(best_u), c(est_o)),
        _ratio(t(best_u), t(est_o)),
    )
    return ExhaustiveReport(name, runs, best_u, best_o, est_o, ratios, notes)


# -- formatting ---------------------------------------------------------------------------


def _fmt(v: object) -> str:
    if v is None:
        return "n/a"
    if isinstance(v, float):
        return f"{v:.3f}"
    return str(v)


def rows_to_csv(rows: Sequence[object]) -> str:
    buf = io.StringIO()
    if not rows:
        return ""
    dicts = [asdict(r) for r in rows]  # type: ignore[call-overload]
    w = csv.DictWriter(buf, fieldnames=list(dicts[0]), lineterminator="\n")
    w.writeheader()
    for d in dicts:
        w.writerow({k: _fmt(v) for k, v in d.items()})
    return buf.getvalue()


def rows_to_text(rows: Sequence[object]) -> str:
    if not rows:
        return ""
    dicts = [asdict(r) for r in rows]  # type: ignore[call-overload]
    keys = list(dicts[0])
    table = [keys] + [[_fmt(d[k]) for k in keys] for d in dicts]
    widths = [max(len(r[i]) for r in table) for i in range(len(keys))]
    return "\n".join("  ".join(c.ljust(w) for c, w in zip(r, widths)).rstrip() for r in table) + "\n"


def ratios_lines(report: ExhaustiveReport) -> list[str]:
    r = report.ratios
    lines = [f"{k}={_fmt(getattr(r, k))}" for k in ("PC", "PT", "AC", "AT")]
    return lines + [f"note: {n}" for n in report.notes]
