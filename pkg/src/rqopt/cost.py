"""Catalog-driven cardinality and cost estimation for logical plans."""

from __future__ import annotations

from collections.abc import Mapping
from dataclasses import dataclass, field

from .graph import LABEL_KEY, Catalog
from .ir import Const
from .plan import (
    OPERATOR_KINDS,
    BufferRead,
    BufferWrite,
    Join,
    PlanGraph,
    Project,
    Rename,
    ScanE,
    ScanP,
    Select,
    Union,
    all_columns,
    flow_groups,
    label_scan,
    property_lookup,
)


class CostConfigError(ValueError):
    pass


@dataclass(frozen=True)
class Estimate:
    card: float
    distinct: Mapping[str, float] = field(default_factory=dict)

    def d(self, col: str) -> float | None:
        return self.distinct.get(col)


@dataclass(frozen=True)
class CostModel:
    catalog: Catalog
    weights: Mapping[str, float] = field(default_factory=lambda: {k: 1.0 for k in OPERATOR_KINDS})
    expansion_cap: float = 16.0
    default_selectivity: float = 0.1
    iteration_factor: float = 4.0

    def __post_init__(self) -> None:
        if any(w <= 0 for w in self.weights.values()):
            raise CostConfigError("operator weights must be positive")
        if self.expansion_cap < 1:
            raise CostConfigError("cost.expansion_cap must be >= 1")
        if not 0 < self.default_selectivity <= 1:
            raise CostConfigError("cost.default_selectivity must be in (0, 1]")

    @classmethod
    def from_config(cls, catalog: Catalog, config: Mapping[str, str | float]) -> CostModel:
        """Build from ``cost.weight.<kind>``, ``cost.expansion_cap`` and ``cost.default_selectivity`` keys."""
        weights = {k: 1.0 for k in OPERATOR_KINDS}
        kwargs: dict[str, float] = {}
        for key, raw in config.items():
            if not key.startswith("cost."):
                continue
            try:
                value = float(raw)
            except ValueError:
                raise CostConfigError(f"{key} must be a number, got {raw!r}") from None
            if key.startswith("cost.weight."):
                kind = key.removeprefix("cost.weight.")
                if kind not in weights:
                    raise CostConfigError(f"unknown operator kind in {key}")
                weights[kind] = value
            elif key == "cost.expansion_cap":
                kwargs["expansion_cap"] = value
            elif key == "cost.default_selectivity":
                kwargs["default_selectivity"] = value
            elif key == "cost.iteration_factor":
                kwargs["iteration_factor"] = value
            else:
                raise CostConfigError(f"unknown cost setting {key}")
        return cls(catalog, weights, **kwargs)

    def weight(self, kind: str) -> float:
        return self.weights.get(kind, 1.0)

    # -- closures ------------------------------------------------------------

    def expansion_factor(self, count: float, distinct: float) -> float:
        return min(self.expansion_cap, max(1.0, count / max(1.0, distinct)))

    def iterations(self, factor: float) -> float:
        return max(1.0, min(self.expansion_cap, self.iteration_factor * factor))

    def closure_estimate(self, label: str | None) -> float:
        """Full transitive-closure size estimate for a label (used to order interior closures)."""
        cat = self.catalog
        if label is None:
            return float(cat.vertex_count)
        count = cat.label_count.get(label, 0)
        return count * self.expansion_factor(count, cat.distinct_src.get(label, 0))

    # -- plans ----------------------------------------------------------------

    def estimates(self, plan: PlanGraph) -> dict[int, Estimate]:
        return _Estimator(self, plan).run()[0]

    def cost(self, plan: PlanGraph) -> float:
        return _Estimator(self, plan).run()[1]


def estimate_cardinality(plan: PlanGraph, op_id: int, cm: CostModel) -> float:
    return cm.estimates(plan)[op_id].card


def estimate_cost(plan: PlanGraph, cm: CostModel) -> float:
    return cm.cost(plan)


class _Estimator:
    def __init__(self, cm: CostModel, plan: PlanGraph) -> None:
        self.cm = cm
        self.plan = plan
        self.cat = cm.catalog
        self.cols = all_columns(plan)
        self.est: dict[int, Estimate] = {}
        self.buffers: dict[int, Estimate] = {}
        self.fused: dict[int, str] = {}
        for i in plan.ops:
            ls = label_scan(plan, i)
            if ls is not None:
                self.fused.update({ls.scan_e: ls.label, ls.select: ls.label, ls.scan_p: ls.label})
        self.total = 0.0

    def run(self) -> tuple[dict[int, Estimate], float]:
        if self.plan.abstractions:
            raise ValueError("cannot cost a plan that still contains abstractions")
        for group in flow_groups(self.plan):
            if group.fixpoint:
                self._fixpoint(group.ops)
            else:
                (i,) = group.ops
                self.est[i] = self._acyclic(i)
                self._charge(i, self.est[i].card, self._input_card(i))
        return self.est, self.total

    def _charge(self, i: int, out: float, inputs: float) -> None:
        self.total += self.cm.weight(self.plan.ops[i].kind) * (inputs + out)

    def _input_card(self, i: int) -> float:
        op = self.plan.ops[i]
        if isinstance(op, BufferRead):
            return 0.0
        return sum(self.est[c].card for c in op.children)

    # -- acyclic operators ------------------------------------------------------

    def _acyclic(self, i: int) -> Estimate:
        op = self.plan.ops[i]
        cat = self.cat
        if i in self.fused:
            # Served by the label index: only the label's edges are touched.
            n = float(cat.label_count.get(self.fused[i], 0))
            return Estimate(n, {c: n for c in self.cols[i]})
        if isinstance(op, ScanE):
            s, e, t = op.cols
            n = float(cat.total_edges)
            return Estimate(n, {s: float(cat.vertex_count), e: n, t: float(cat.vertex_count)})
        if isinstance(op, ScanP):
            o, k, v = op.cols
            n = float(cat.prop_count)
            return Estimate(n, {o: n, k: float(len(cat.key_count)), v: float(len(cat.key_value_count))})
        if isinstance(op, Select):
            return self._select(i, op)
        if isinstance(op, Join):
            return self._join(i, op)
        if isinstance(op, Project):
            child = self.est[op.child]
            return Estimate(child.card, {c: child.distinct.get(c, child.card) for c in op.cols})
        if isinstance(op, Rename):
            child = self.est[op.child]
            return Estimate(child.card, {o: child.distinct.get(s, child.card) for o, s in op.mapping})
        if isinstance(op, Union):
            card = sum(self.est[c].card for c in op.inputs)
            cols = self.cols[i]
            distinct = {c: min(card, sum(self.est[x].distinct.get(c, self.est[x].card) for x in op.inputs)) for c in cols}
            return Estimate(card, distinct)
        if isinstance(op, BufferWrite):
            self.buffers[op.buffer] = self.est[op.child]
            return self.est[op.child]
        if isinstance(op, BufferRead):
            src = self.buffers.get(op.buffer, Estimate(0.0))
            return Estimate(src.card, {c: src.distinct.get(c, src.card) for c in op.cols})
        # Dedup forwards its child estimate unchanged.
        return self.est[op.children[0]]

    def _select(self, i: int, op: Select) -> Estimate:
        lookup = property_lookup(self.plan, i)
        child = self.est[op.child]
        if lookup is not None:
            key, value = lookup
            if key == LABEL_KEY and value is not None:
                card = float(self.cat.label_count.get(str(value), 0))
            elif value is not None:
                card = float(self.cat.key_value_count.get((key, value), 0))
            else:
                card = float(self.cat.key_count.get(key, 0))
            cols = self.cols[i]
            return Estimate(card, {c: min(card, child.distinct.get(c, card)) for c in cols})
        card = child.card
        distinct = dict(child.distinct)
        for col, operand in op.preds:
            d = distinct.get(col)
            sel = 1.0 / d if d and d >= 1 else self.cm.default_selectivity
            card *= sel
            distinct[col] = 1.0
            if not isinstance(operand, Const):
                distinct[operand.name] = distinct[col]
        return Estimate(card, {c: min(card, v) for c, v in distinct.items()})

    def _join(self, i: int, op: Join) -> Estimate:
        fused = label_scan(self.plan, i)
        if fused is not None:
            label = fused.label
            scan = self.plan.ops[fused.scan_e]
            assert isinstance(scan, ScanE)
            s, e, t = scan.cols
            n = float(self.cat.label_count.get(label, 0))
            distinct = {c: 1.0 for c in self.cols[i]}
            distinct.update({
                s: float(self.cat.distinct_src.get(label, 0)),
                e: n,
                t: float(self.cat.distinct_dst.get(label, 0)),
            })
            return Estimate(n, distinct)
        left, right = self.est[op.left], self.est[op.right]
        card = left.card * right.card
        for col in op.on:
            dl, dr = left.d(col), right.d(col)
            if dl is None or dr is None or max(dl, dr) < 1:
                card *= self.cm.default_selectivity
            else:
                card /= max(dl, dr)
        distinct = {}
        for col in self.cols[i]:
            ds = [x.d(col) for x in (left, right) if x.d(col) is not None]
            distinct[col] = min([card, *ds]) if ds else card
        return Estimate(card, distinct)

    # -- fixpoint groups ---------------------------------------------------------

    def _fixpoint(self, members: tuple[int, ...]) -> None:
        """Estimate a buffer cycle in one shot: seed size times a capped expansion factor."""
        ops = self.plan.ops
        inside = set(members)
        seed = 0.0
        fanout = 1.0
        static_inputs: dict[int, float] = {}
        for i in members:
            op = ops[i]
            outside = [c for c in op.children if c not in inside]
            static_inputs[i] = sum(self.est[c].card for c in outside)
            if isinstance(op, Join):
                for c in outside:
                    rel = self.est[c]
                    ds = [rel.d(col) for col in op.on if rel.d(col)]
                    fanout *= rel.card / max(1.0, max(ds)) if ds else rel.card * self.cm.default_selectivity
            elif outside:
                seed += static_inputs[i]
        factor = min(self.cm.expansion_cap, max(1.0, fanout))
        total = seed * factor
        iters = self.cm.iterations(factor)
        per_iter = total / iters
        vertices = float(max(1, self.cat.vertex_count))
        for i in members:
            op = ops[i]
            cols = self.cols[i]
            self.est[i] = Estimate(total, {c: min(total, vertices) for c in cols})
            if isinstance(op, BufferWrite):
                self.buffers[op.buffer] = self.est[i]
            dynamic_in = sum(per_iter for c in op.children if c in inside)
            if isinstance(op, BufferRead):
                dynamic_in = 0.0
            out = per_iter * (fanout if isinstance(op, Join) else 1.0)
            w = self.cm.weight(op.kind)
            self.total += w * (static_inputs[i] + iters * (dynamic_in + out))


def describe_estimates(plan: PlanGraph, cm: CostModel) -> str:
    est = cm.estimates(plan)
    lines = [f"op {i}: {plan.ops[i].kind} card~{e.card:.1f}" for i, e in sorted(est.items())]
    lines.append(f"cost {cm.cost(plan):.1f}")
    return "\n".join(lines)
