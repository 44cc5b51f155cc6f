"""Planning-model compilation and the reference exact solver.

A compiled model carries explicit constraint records (MOQ activation pair,
capacity caps, tier eligibility, cadence, substitution rules, and structural
balance/service rows), each tagged with a family and contract provenance.

The reference solver enumerates order schedules over a quantized grid (DFS in
lexicographic order with static pruning) and completes each schedule with a
deterministic recourse policy: production is just-in-time via MRP netting
down the BOM, shortfalls are met by emergency purchases exactly where a
channel exists, and holding accrues on end-of-period inventory every period
including the last. Orders whose arrival falls beyond the horizon are still
paid for. The model representation is solver-agnostic; an external MILP
backend can be plugged in behind the same interface.

Infeasibility is diagnosed by slack minimization: every constraint family may
be violated at a per-unit slack price and the assignment minimizing total
weighted slack localizes which families drive infeasibility.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from datetime import date, timedelta
from pathlib import Path

from .consolidate import ConsolidatedConstraintSet, ConsolidationPolicy
from .corpus import EvidenceSpan
from .errors import (
    InfeasibleModel,
    InstanceTooLarge,
    MissingConstraint,
    MultiNodeUnsupported,
)
from .kernels import ACTION_SET
from .schema import PriceTier, SeasonWindow

MAX_EVALUATIONS = 10**7

FAMILIES = ("moq", "capacity", "tier", "cadence", "substitution", "service", "balance")
STRUCTURAL_FAMILIES = ("service", "balance")


# -- instance ---------------------------------------------------------------------


@dataclass(frozen=True, order=True)
class OrderLine:
    supplier_id: str
    part_id: str

    def display(self) -> str:
        return f"{self.supplier_id}/{self.part_id}"


@dataclass(frozen=True)
class PlanningInstance:
    suppliers: tuple[str, ...]
    parts: tuple[str, ...]
    finished: tuple[str, ...]
    horizon: int
    bom: dict[tuple[str, str], float]        # (component, finished) -> units per unit
    demand: dict[tuple[str, int], int]       # (part, period 1..T) -> units
    unit_cost: dict[tuple[str, str], float]  # (supplier, part) -> base unit price
    emergency_cost: dict[str, float]         # parts without an entry have no channel
    holding_cost: dict[str, float]
    initial_inventory: dict[str, int]
    site: str | None = None
    start_date: date | None = None
    period_days: int = 7
    substitutes: tuple[tuple[str, str], ...] = ()  # (primary, substitute)

    def __post_init__(self):
        _check_acyclic(self.bom)
        for (p, t), d in self.demand.items():
            if d < 0:
                raise ValueError(f"negative demand for {p} at t={t}")
        for cost_map in (self.unit_cost, self.emergency_cost, self.holding_cost):
            for key, value in cost_map.items():
                if value < 0:
                    raise ValueError(f"negative cost for {key}")

    def order_lines(self) -> tuple[OrderLine, ...]:
        return tuple(sorted(OrderLine(s, p) for (s, p) in self.unit_cost))

    def period_date(self, t: int) -> date | None:
        if self.start_date is None:
            return None
        return self.start_date + timedelta(days=(t - 1) * self.period_days)

    def producible(self, part: str) -> bool:
        return part in self.finished and any(f == part for (_c, f) in self.bom)

    def components_of(self, part: str) -> list[tuple[str, float]]:
        return sorted((c, a) for (c, f), a in self.bom.items() if f == part)

    def substitutes_of(self, part: str) -> list[str]:
        return sorted(sub for (primary, sub) in self.substitutes if primary == part)


def _check_acyclic(bom: dict[tuple[str, str], float]) -> None:
    consumers: dict[str, list[str]] = {}
    for (component, finished), coeff in bom.items():
        if coeff < 0:
            raise ValueError("negative BOM coefficient")
        consumers.setdefault(finished, []).append(component)
    state: dict[str, int] = {}

    def visit(node: str) -> None:
        state[node] = 1
        for nxt in consumers.get(node, ()):
            mark = state.get(nxt, 0)
            if mark == 1:
                raise ValueError(f"BOM cycle through {node!r}")
            if mark == 0:
                visit(nxt)
        state[node] = 2

    for node in sorted(consumers):
        if state.get(node, 0) == 0:
            visit(node)


def _toposort_consumers_first(instance: PlanningInstance) -> list[str]:
    """Parts ordered so every consumer precedes its components."""
    order: list[str] = []
    seen: set[str] = set()

    def visit(part: str) -> None:
        if part in seen:
            return
        seen.add(part)
        order.append(part)
        for component, _a in instance.components_of(part):
            visit(component)

    roots = sorted(set(instance.parts)
                   - {c for (c, _f) in instance.bom})
    for part in roots:
        visit(part)
    for part in sorted(instance.parts):
        visit(part)
    return order


def instance_from_json(source: dict | str | Path) -> PlanningInstance:
    if not isinstance(source, dict):
        source = json.loads(Path(source).read_text(encoding="utf-8"))
    nodes = source.get("nodes", ["main"])
    if len(nodes) > 1:
        raise MultiNodeUnsupported(
            f"{len(nodes)} nodes declared; only a single planning node is supported")
    bom = {(row["component"], row["finished"]): float(row["per_unit"])
           for row in source.get("bom", [])}
    demand = {}
    for part, by_period in source.get("demand", {}).items():
        for t, qty in by_period.items():
            demand[(part, int(t))] = int(qty)
    unit_cost = {}
    for supplier, by_part in source.get("unit_cost", {}).items():
        for part, price in by_part.items():
            unit_cost[(supplier, part)] = float(price)
    start = source.get("start_date")
    return PlanningInstance(
        suppliers=tuple(source.get("suppliers", [])),
        parts=tuple(source.get("parts", [])),
        finished=tuple(source.get("finished_goods", [])),
        horizon=int(source["horizon"]),
        bom=bom,
        demand=demand,
        unit_cost=unit_cost,
        emergency_cost={k: float(v) for k, v in source.get("emergency_cost", {}).items()},
        holding_cost={k: float(v) for k, v in source.get("holding_cost", {}).items()},
        initial_inventory={k: int(v) for k, v in source.get("initial_inventory", {}).items()},
        site=source.get("site"),
        start_date=date.fromisoformat(start) if start else None,
        period_days=int(source.get("period_days", 7)),
        substitutes=tuple((row["primary"], row["substitute"])
                          for row in source.get("substitutes", [])),
    )


# -- compiled model -----------------------------------------------------------------


@dataclass(frozen=True)
class CompiledConstraint:
    family: str
    description: str
    line: OrderLine | None
    provenance: tuple[EvidenceSpan, ...] = ()
    structural: bool = False
    note: str = ""


@dataclass
class PlanningModel:
    instance: PlanningInstance
    lines: tuple[OrderLine, ...]
    grid: tuple[int, ...]
    moq: dict[OrderLine, int]
    big_m: dict[OrderLine, int]
    cap: dict[OrderLine, int | None]
    tiers: dict[OrderLine, tuple[PriceTier, ...]]
    lead: dict[OrderLine, tuple[int, ...]]   # per order period, index t-1
    interval: dict[OrderLine, int]
    allowed_sub: dict[tuple[str, str], tuple[EvidenceSpan, ...]]
    forbidden_sub: tuple[tuple[str, str], ...]
    constraints: list[CompiledConstraint]
    field_provenance: dict[tuple[OrderLine, str], tuple[EvidenceSpan, ...]]
    collapse_notes: tuple[str, ...] = ()
    attested_fields: tuple[tuple[OrderLine, str], ...] = ()

    def dump(self) -> str:
        lines = []
        for c in self.constraints:
            tag = "structural" if c.structural else ", ".join(
                s.key() for s in c.provenance) or "unreferenced"
            note = f"  # {c.note}" if c.note else ""
            lines.append(f"[{c.family}] {c.description}  <{tag}>{note}")
        return "\n".join(lines) + "\n"


def _lead_profile(entry_value, instance: PlanningInstance) -> tuple[int, ...]:
    std, peak, window_display = entry_value
    if peak is None or window_display is None or instance.start_date is None:
        return tuple([std] * instance.horizon)
    window = SeasonWindow.from_display(window_display)
    out = []
    for t in range(1, instance.horizon + 1):
        d = instance.period_date(t)
        out.append(peak if (d is not None and window.contains(d)) else std)
    return tuple(out)


def compile(consolidated: ConsolidatedConstraintSet, instance: PlanningInstance,
            grid: tuple[int, ...] = ACTION_SET,
            policy: ConsolidationPolicy | None = None) -> PlanningModel:
    """Compile consolidated constraints plus instance data into an explicit
    model. Refuses when a field the instance needs is still gated or absent."""
    policy = policy or ConsolidationPolicy()
    lines = instance.order_lines()
    on = instance.start_date

    moq: dict[OrderLine, int] = {}
    big_m: dict[OrderLine, int] = {}
    cap: dict[OrderLine, int | None] = {}
    tiers: dict[OrderLine, tuple[PriceTier, ...]] = {}
    lead: dict[OrderLine, tuple[int, ...]] = {}
    interval: dict[OrderLine, int] = {}
    constraints: list[CompiledConstraint] = []
    provenance: dict[tuple[OrderLine, str], tuple[EvidenceSpan, ...]] = {}
    notes: list[str] = []
    attested: list[tuple[OrderLine, str]] = []

    for line in lines:
        for fname in ("moq", "lead_time", "capacity_per_period", "price_tiers",
                      "order_interval", "substitution_policy"):
            if consolidated.has_open_gate(line.supplier_id, line.part_id, fname):
                raise MissingConstraint(
                    f"open gate on {fname} for line {line.display()}; "
                    "resolve gates before compiling")

        def entry_for(fname):
            return consolidated.find(line.supplier_id, line.part_id, fname,
                                     instance.site, on)

        moq_entry = entry_for("moq")
        if moq_entry is None:
            if not policy.allow_absent_moq:
                raise MissingConstraint(
                    f"no MOQ constraint for line {line.display()} and "
                    "allow_absent_moq is not set")
            moq[line] = 0
            constraints.append(CompiledConstraint(
                "moq", f"x[{line.display()},t] unconstrained below (absent MOQ "
                       "admitted by policy)", line, structural=True))
        else:
            moq[line] = int(moq_entry.value)
            provenance[(line, "moq")] = moq_entry.provenance
            if moq_entry.attested:
                attested.append((line, "moq"))
            notes.extend(moq_entry.notes)
            constraints.append(CompiledConstraint(
                "moq",
                f"x[{line.display()},t] >= {moq[line]}*z and <= M*z "
                f"(order is 0 or >= {moq[line]})",
                line, moq_entry.provenance,
                note="; ".join(moq_entry.notes)))

        cap_entry = entry_for("capacity_per_period")
        if cap_entry is not None:
            cap[line] = int(cap_entry.value)
            provenance[(line, "capacity")] = cap_entry.provenance
            if cap_entry.attested:
                attested.append((line, "capacity"))
            constraints.append(CompiledConstraint(
                "capacity", f"x[{line.display()},t] <= {cap[line]} per period",
                line, cap_entry.provenance))
        else:
            cap[line] = None

        tier_entry = entry_for("price_tiers")
        if tier_entry is not None:
            tiers[line] = tuple(PriceTier(t, p) for t, p in tier_entry.value)
            provenance[(line, "tier")] = tier_entry.provenance
            thresholds = ", ".join(str(t.threshold) for t in tiers[line])
            constraints.append(CompiledConstraint(
                "tier",
                f"sum_k u[{line.display()},t,k] = z[{line.display()},t]; "
                f"x >= selected tier threshold (thresholds {thresholds})",
                line, tier_entry.provenance))
        else:
            tiers[line] = ()

        lead_entry = entry_for("lead_time")
        if lead_entry is not None:
            lead[line] = _lead_profile(lead_entry.value, instance)
            provenance[(line, "lead_time")] = lead_entry.provenance
            if len(set(lead[line])) > 1:
                desc = (f"arrival[{line.display()},t] = x[t - L(t)] with "
                        f"per-period lead {list(lead[line])}")
            else:
                desc = (f"arrival[{line.display()},t] = x[t - {lead[line][0]}]")
            constraints.append(CompiledConstraint(
                "balance", desc, line, lead_entry.provenance,
                note="lead time enters the inventory balance"))
        else:
            lead[line] = tuple([0] * instance.horizon)

        interval_entry = entry_for("order_interval")
        if interval_entry is not None:
            interval[line] = int(interval_entry.value)
            provenance[(line, "cadence")] = interval_entry.provenance
            constraints.append(CompiledConstraint(
                "cadence",
                f"z[{line.display()},t] + z[{line.display()},t'] <= 1 for "
                f"0 < t'-t < {interval[line]}",
                line, interval_entry.provenance))
        else:
            interval[line] = 0

        big_m[line] = max(grid) if cap[line] is None else min(max(grid), cap[line])

    allowed_sub: dict[tuple[str, str], tuple[EvidenceSpan, ...]] = {}
    forbidden: list[tuple[str, str]] = []
    for primary, substitute in sorted(instance.substitutes):
        entry = None
        for supplier in sorted(set(instance.suppliers) | {"*"}):
            entry = consolidated.find(supplier, primary,
                                      "substitution_policy", instance.site, on)
            if entry is not None:
                break
        if entry is not None and entry.value in ("allowed", "allowed_with_approval"):
            allowed_sub[(primary, substitute)] = entry.provenance
            constraints.append(CompiledConstraint(
                "substitution",
                f"substitute {substitute} may replace {primary} (approved)",
                None, entry.provenance))
        else:
            forbidden.append((primary, substitute))
            spans = entry.provenance if entry is not None else ()
            note = ("" if entry is not None
                    else "no substitution clause; forbidden by default")
            constraints.append(CompiledConstraint(
                "substitution",
                f"substitute {substitute} must not replace {primary}",
                None, spans, structural=entry is None, note=note))

    for part in sorted(instance.parts):
        constraints.append(CompiledConstraint(
            "balance",
            f"I[{part},t] = I[{part},t-1] + arrivals + emergency + production "
            f"- consumption - demand", None, structural=True))
        has_channel = part in instance.emergency_cost
        constraints.append(CompiledConstraint(
            "service",
            f"demand on {part} met each period from inventory + arrivals"
            + (" + emergency" if has_channel else " (no emergency channel)"),
            None, structural=True))

    size = float(len(grid)) ** (instance.horizon * len(lines))
    if size > MAX_EVALUATIONS:
        raise InstanceTooLarge(
            f"{len(grid)}^{instance.horizon * len(lines)} = {size:.3g} grid "
            f"schedules exceeds the {MAX_EVALUATIONS:.0e} evaluation limit")

    return PlanningModel(
        instance=instance, lines=lines, grid=tuple(sorted(grid)),
        moq=moq, big_m=big_m, cap=cap, tiers=tiers, lead=lead,
        interval=interval, allowed_sub=allowed_sub,
        forbidden_sub=tuple(forbidden), constraints=constraints,
        field_provenance=provenance,
        collapse_notes=tuple(dict.fromkeys(notes)),
        attested_fields=tuple(attested),
    )


# -- plans -------------------------------------------------------------------------


@dataclass
class Plan:
    orders: dict[tuple[OrderLine, int], int]
    production: dict[tuple[str, int], float]
    emergency: dict[tuple[str, int], float]
    inventory: dict[tuple[str, int], float]
    tier_selected: dict[tuple[OrderLine, int], int | None]
    substitution_use: dict[tuple[str, str, int], float]
    cost_purchase: float
    cost_emergency: float
    cost_holding: float
    total_cost: float

    def nonzero_orders(self) -> list[tuple[OrderLine, int, int]]:
        out = []
        for t in range(1, 1 + max((k[1] for k in self.orders), default=0)):
            for (line, period), qty in sorted(self.orders.items()):
                if period == t and qty > 0:
                    out.append((line, period, qty))
        return out


@dataclass(frozen=True)
class SlackItem:
    family: str
    subject: str
    period: int | None
    amount: float


@dataclass
class Diagnosis:
    slacks: tuple[SlackItem, ...]
    weights: dict[str, float]
    family_totals: dict[str, float]
    dominant_family: str | None
    feasible: bool = False

    def total(self) -> float:
        return sum(self.weights[s.family] * s.amount for s in self.slacks)


@dataclass(frozen=True)
class Feasible:
    pass


@dataclass(frozen=True)
class Infeasible:
    diagnosis: Diagnosis


# -- schedule evaluation -------------------------------------------------------------


def _tier_price(model: PlanningModel, line: OrderLine, qty: int) -> tuple[float, int | None]:
    """Unit price and selected tier index for a nonzero order quantity.
    With tiers, the cheapest eligible tier is selected (prices decrease as
    thresholds rise)."""
    tiers = model.tiers[line]
    if not tiers:
        return model.instance.unit_cost[(line.supplier_id, line.part_id)], None
    eligible = [k for k, tier in enumerate(tiers) if qty >= tier.threshold]
    if not eligible:
        return float("nan"), None  # callers guard via static checks/slacks
    k = eligible[-1]
    return tiers[k].unit_price, k


def _static_violations(model: PlanningModel, line: OrderLine, t: int, qty: int,
                       earlier: dict[tuple[OrderLine, int], int]) -> list[SlackItem]:
    """Per-cell constraint slacks that need no flow simulation."""
    out: list[SlackItem] = []
    if 0 < qty < model.moq[line]:
        out.append(SlackItem("moq", line.display(), t, model.moq[line] - qty))
    cap = model.cap[line]
    if cap is not None and qty > cap:
        out.append(SlackItem("capacity", line.display(), t, qty - cap))
    tiers = model.tiers[line]
    if tiers and 0 < qty < tiers[0].threshold:
        out.append(SlackItem("tier", line.display(), t, tiers[0].threshold - qty))
    gap = model.interval[line]
    if gap > 1 and qty > 0:
        for back in range(1, gap):
            if earlier.get((line, t - back), 0) > 0:
                out.append(SlackItem("cadence", line.display(), t, 1.0))
    return out


@dataclass
class _FlowResult:
    production: dict[tuple[str, int], float]
    emergency: dict[tuple[str, int], float]
    inventory: dict[tuple[str, int], float]
    substitution_use: dict[tuple[str, str, int], float]
    service_slacks: list[SlackItem]
    cost_emergency: float
    cost_holding: float


def _simulate_flow(model: PlanningModel,
                   orders: dict[tuple[OrderLine, int], int]) -> _FlowResult:
    """Deterministic completion: arrivals, JIT production via MRP netting,
    emergency recourse where a channel exists, holding on end inventory."""
    inst = model.instance
    horizon = inst.horizon
    arrivals: dict[tuple[str, int], float] = {}
    for (line, t), qty in orders.items():
        if qty <= 0:
            continue
        arrive = t + model.lead[line][t - 1]
        if arrive <= horizon:
            key = (line.part_id, arrive)
            arrivals[key] = arrivals.get(key, 0.0) + qty

    topo = _toposort_consumers_first(inst)
    inv = {p: float(inst.initial_inventory.get(p, 0)) for p in inst.parts}
    production: dict[tuple[str, int], float] = {}
    emergency: dict[tuple[str, int], float] = {}
    inventory: dict[tuple[str, int], float] = {}
    sub_use: dict[tuple[str, str, int], float] = {}
    service: list[SlackItem] = []
    cost_emergency = 0.0
    cost_holding = 0.0

    for t in range(1, horizon + 1):
        for p in inv:
            inv[p] += arrivals.get((p, t), 0.0)

        # requirement netting, consumers before components
        req = {p: float(inst.demand.get((p, t), 0)) for p in inv}
        planned: dict[str, float] = {}
        for p in topo:
            if p not in inv:
                continue
            short = max(req[p] - inv[p], 0.0)
            if short > 0 and inst.producible(p):
                planned[p] = short
                for component, a in inst.components_of(p):
                    req[component] = req.get(component, 0.0) + a * short

        # execute production, components before consumers
        for p in reversed(topo):
            want = planned.get(p, 0.0)
            if want <= 0:
                continue
            feasible = want
            for component, a in inst.components_of(p):
                avail = inv[component]
                for sub in inst.substitutes_of(component):
                    if (component, sub) in model.allowed_sub:
                        avail += inv.get(sub, 0.0)
                if a > 0:
                    feasible = min(feasible, avail / a)
            made = min(want, feasible)
            if made > 0:
                for component, a in inst.components_of(p):
                    need = a * made
                    take = min(inv[component], need)
                    inv[component] -= take
                    need -= take
                    for sub in inst.substitutes_of(component):
                        if need <= 0:
                            break
                        if (component, sub) in model.allowed_sub:
                            got = min(inv.get(sub, 0.0), need)
                            if got > 0:
                                inv[sub] -= got
                                need -= got
                                key = (component, sub, t)
                                sub_use[key] = sub_use.get(key, 0.0) + got
                inv[p] += made
                production[(p, t)] = production.get((p, t), 0.0) + made

        # meet external demand; emergency recourse where the channel exists
        for p in sorted(inv):
            d = float(inst.demand.get((p, t), 0))
            if d <= 0:
                continue
            short = max(d - inv[p], 0.0)
            if short > 0:
                price = inst.emergency_cost.get(p)
                if price is not None:
                    emergency[(p, t)] = emergency.get((p, t), 0.0) + short
                    cost_emergency += short * price
                    inv[p] += short
                else:
                    service.append(SlackItem("service", p, t, short))
                    inv[p] += short  # relax to keep the simulation defined
            inv[p] -= d

        for p in sorted(inv):
            inventory[(p, t)] = inv[p]
            cost_holding += inst.holding_cost.get(p, 0.0) * inv[p]

    return _FlowResult(production, emergency, inventory, sub_use, service,
                       cost_emergency, cost_holding)


def _purchase_cost(model: PlanningModel,
                   orders: dict[tuple[OrderLine, int], int]
                   ) -> tuple[float, dict[tuple[OrderLine, int], int | None]]:
    total = 0.0
    selected: dict[tuple[OrderLine, int], int | None] = {}
    for (line, t) in sorted(orders):
        qty = orders[(line, t)]
        if qty <= 0:
            selected[(line, t)] = None
            continue
        price, k = _tier_price(model, line, qty)
        selected[(line, t)] = k
        total += price * qty
    return total, selected


def _cells(model: PlanningModel) -> list[tuple[int, OrderLine]]:
    return [(t, line) for t in range(1, model.instance.horizon + 1)
            for line in model.lines]


def _enumerate(model: PlanningModel):
    """DFS over grid assignments in lexicographic (period-major, line, value)
    order, yielding (orders, static_slacks) per leaf. Assignments without any
    static violation come first within each subtree only in value order; the
    caller decides what to do with violating leaves."""
    cells = _cells(model)
    orders: dict[tuple[OrderLine, int], int] = {}

    def walk(i: int, slacks: list[SlackItem]):
        if i == len(cells):
            yield dict(orders), list(slacks)
            return
        t, line = cells[i]
        for qty in model.grid:
            cell_slacks = _static_violations(model, line, t, qty, orders)
            orders[(line, t)] = qty
            yield from walk(i + 1, slacks + cell_slacks)
        del orders[(line, t)]

    yield from walk(0, [])


def optimize(model: PlanningModel) -> Plan:
    """Minimum-cost grid plan; deterministic tie-break by lexicographically
    smallest order vector (period-major, then line). Raises InfeasibleModel
    with a slack diagnosis when no grid schedule is feasible."""
    cells = _cells(model)
    best: tuple[float, dict] | None = None

    def walk(i: int, orders: dict[tuple[OrderLine, int], int]):
        nonlocal best
        if i == len(cells):
            flow = _simulate_flow(model, orders)
            if flow.service_slacks:
                return
            purchase, _sel = _purchase_cost(model, orders)
            cost = purchase + flow.cost_emergency + flow.cost_holding
            if best is None or cost < best[0]:
                best = (cost, dict(orders))
            return
        t, line = cells[i]
        for qty in model.grid:
            if _static_violations(model, line, t, qty, orders):
                continue  # prune constraint-violating subtrees
            orders[(line, t)] = qty
            walk(i + 1, orders)
            del orders[(line, t)]

    walk(0, {})
    if best is None:
        raise InfeasibleModel(diagnose(model))

    _cost, orders = best
    flow = _simulate_flow(model, orders)
    purchase, selected = _purchase_cost(model, orders)
    plan = Plan(
        orders=orders,
        production=flow.production,
        emergency=flow.emergency,
        inventory=flow.inventory,
        tier_selected=selected,
        substitution_use=flow.substitution_use,
        cost_purchase=purchase,
        cost_emergency=flow.cost_emergency,
        cost_holding=flow.cost_holding,
        total_cost=purchase + flow.cost_emergency + flow.cost_holding,
    )
    problems = recheck_plan(plan, model)
    if problems:
        raise AssertionError(f"solver emitted a plan failing re-check: {problems}")
    return plan


def orders_feasible(model: PlanningModel, orders: dict[tuple[OrderLine, int], int]) -> bool:
    """True iff a fixed order assignment satisfies every model constraint."""
    seen: dict[tuple[OrderLine, int], int] = {}
    for t in range(1, model.instance.horizon + 1):
        for line in model.lines:
            qty = int(orders.get((line, t), 0))
            if qty not in model.grid:
                return False
            if _static_violations(model, line, t, qty, seen):
                return False
            seen[(line, t)] = qty
    return not _simulate_flow(model, seen).service_slacks


def plan_for_orders(model: PlanningModel,
                    orders: dict[tuple[OrderLine, int], int]) -> Plan:
    """Price out a fixed order schedule under the model's completion policy.
    Raises InfeasibleModel when the schedule violates a constraint."""
    full = {(line, t): int(orders.get((line, t), 0))
            for t in range(1, model.instance.horizon + 1)
            for line in model.lines}
    if not orders_feasible(model, full):
        raise ValueError("order schedule violates model constraints")
    flow = _simulate_flow(model, full)
    purchase, selected = _purchase_cost(model, full)
    return Plan(
        orders=full,
        production=flow.production,
        emergency=flow.emergency,
        inventory=flow.inventory,
        tier_selected=selected,
        substitution_use=flow.substitution_use,
        cost_purchase=purchase,
        cost_emergency=flow.cost_emergency,
        cost_holding=flow.cost_holding,
        total_cost=purchase + flow.cost_emergency + flow.cost_holding,
    )


def check_feasibility(model: PlanningModel) -> Feasible | Infeasible:
    """Feasible iff at least one grid schedule satisfies every constraint."""
    cells = _cells(model)

    def walk(i: int, orders: dict[tuple[OrderLine, int], int]) -> bool:
        if i == len(cells):
            return not _simulate_flow(model, orders).service_slacks
        t, line = cells[i]
        for qty in model.grid:
            if _static_violations(model, line, t, qty, orders):
                continue
            orders[(line, t)] = qty
            if walk(i + 1, orders):
                del orders[(line, t)]
                return True
            del orders[(line, t)]
        return False

    if walk(0, {}):
        return Feasible()
    return Infeasible(diagnose(model))


def diagnose(model: PlanningModel,
             weights: dict[str, float] | None = None) -> Diagnosis:
    """Slack-minimization diagnosis: find the grid assignment minimizing total
    weighted constraint slack. Ties prefer assignments whose slack sits on
    contract families rather than structural service/balance rows, so the
    diagnosis points at the contract term blocking the plan."""
    weights = {**{f: 1.0 for f in FAMILIES}, **(weights or {})}
    best: tuple[float, float, tuple[SlackItem, ...]] | None = None

    for orders, static_slacks in _enumerate(model):
        flow = _simulate_flow(model, orders)
        slacks = tuple(static_slacks + flow.service_slacks)
        total = sum(weights[s.family] * s.amount for s in slacks)
        structural = sum(s.amount for s in slacks
                         if s.family in STRUCTURAL_FAMILIES)
        key = (total, structural)
        if best is None or key < (best[0], best[1]):
            best = (total, structural, slacks)
            if total == 0:
                break

    total, _structural, slacks = best
    family_totals = {f: 0.0 for f in FAMILIES}
    for s in slacks:
        family_totals[s.family] += weights[s.family] * s.amount
    feasible = total == 0
    dominant = None
    if not feasible:
        dominant = max(FAMILIES, key=lambda f: (family_totals[f], -FAMILIES.index(f)))
    return Diagnosis(
        slacks=slacks,
        weights=weights,
        family_totals=family_totals,
        dominant_family=dominant,
        feasible=feasible,
    )


# -- independent plan re-check --------------------------------------------------------


def recheck_plan(plan: Plan, model: PlanningModel) -> list[str]:
    """Validate a plan against every compiled constraint without reusing the
    solver's forward simulation: balances are checked algebraically from the
    plan's own arrays. Returns a list of violation descriptions (empty = ok)."""
    inst = model.instance
    problems: list[str] = []

    for (line, t), qty in sorted(plan.orders.items()):
        if qty < 0:
            problems.append(f"negative order {line.display()} t={t}")
        if 0 < qty < model.moq[line]:
            problems.append(
                f"moq: order {qty} below MOQ {model.moq[line]} on {line.display()} t={t}")
        if qty > model.big_m[line]:
            problems.append(f"big-M: order {qty} above M on {line.display()} t={t}")
        cap = model.cap[line]
        if cap is not None and qty > cap:
            problems.append(
                f"capacity: order {qty} above cap {cap} on {line.display()} t={t}")
        tiers = model.tiers[line]
        selected = plan.tier_selected.get((line, t))
        if tiers:
            if (qty > 0) != (selected is not None):
                problems.append(
                    f"tier: selection count != activation on {line.display()} t={t}")
            if selected is not None and qty < tiers[selected].threshold:
                problems.append(
                    f"tier: quantity {qty} below selected threshold "
                    f"{tiers[selected].threshold} on {line.display()} t={t}")
        elif selected is not None:
            problems.append(f"tier selected without tier table on {line.display()}")
        gap = model.interval[line]
        if gap > 1 and qty > 0:
            for back in range(1, gap):
                if plan.orders.get((line, t - back), 0) > 0:
                    problems.append(
                        f"cadence: orders at t={t - back} and t={t} within "
                        f"interval {gap} on {line.display()}")

    for (primary, sub, t), qty in sorted(plan.substitution_use.items()):
        if qty > 0 and (primary, sub) not in model.allowed_sub:
            problems.append(f"substitution: {sub} used for {primary} at t={t} "
                            "without approval")

    # algebraic inventory balance and no-backlog service
    arrivals: dict[tuple[str, int], float] = {}
    for (line, t), qty in plan.orders.items():
        if qty > 0:
            arrive = t + model.lead[line][t - 1]
            if arrive <= inst.horizon:
                arrivals[(line.part_id, arrive)] = (
                    arrivals.get((line.part_id, arrive), 0.0) + qty)
    for p in sorted(inst.parts):
        prev = float(inst.initial_inventory.get(p, 0))
        for t in range(1, inst.horizon + 1):
            produced = plan.production.get((p, t), 0.0)
            consumed = 0.0
            for (c, f), a in inst.bom.items():
                if c == p:
                    consumed += a * plan.production.get((f, t), 0.0)
            # substituted consumption moves off the primary onto the substitute
            for (primary, sub, ts), qty in plan.substitution_use.items():
                if ts == t:
                    if primary == p:
                        consumed -= qty
                    if sub == p:
                        consumed += qty
            expected = (prev + arrivals.get((p, t), 0.0)
                        + plan.emergency.get((p, t), 0.0) + produced
                        - consumed - float(inst.demand.get((p, t), 0)))
            got = plan.inventory.get((p, t), 0.0)
            if abs(expected - got) > 1e-9:
                problems.append(
                    f"balance: {p} t={t} expected {expected:.6f} got {got:.6f}")
            if got < -1e-9:
                problems.append(f"service: negative inventory {p} t={t}")
            prev = got

    return problems


# -- serialization --------------------------------------------------------------------


def plan_to_json(plan: Plan) -> dict:
    return {
        "orders": [
            {"supplier_id": line.supplier_id, "part_id": line.part_id,
             "period": t, "quantity": qty,
             "tier_selected": plan.tier_selected.get((line, t))}
            for (line, t), qty in sorted(plan.orders.items()) if qty > 0
        ],
        "production": [
            {"part_id": p, "period": t, "quantity": qty}
            for (p, t), qty in sorted(plan.production.items()) if qty > 0
        ],
        "emergency": [
            {"part_id": p, "period": t, "quantity": qty}
            for (p, t), qty in sorted(plan.emergency.items()) if qty > 0
        ],
        "inventory": [
            {"part_id": p, "period": t, "quantity": qty}
            for (p, t), qty in sorted(plan.inventory.items())
        ],
        "substitution_use": [
            {"primary": a, "substitute": b, "period": t, "quantity": qty}
            for (a, b, t), qty in sorted(plan.substitution_use.items())
        ],
        "cost": {
            "purchase": plan.cost_purchase,
            "emergency": plan.cost_emergency,
            "holding": plan.cost_holding,
            "total": plan.total_cost,
        },
    }


def diagnosis_to_json(diag: Diagnosis) -> dict:
    return {
        "feasible": diag.feasible,
        "dominant_family": diag.dominant_family,
        "family_totals": diag.family_totals,
        "weights": diag.weights,
        "slacks": [
            {"family": s.family, "subject": s.subject, "period": s.period,
             "amount": s.amount}
            for s in diag.slacks
        ],
    }
