"""Mission plans: solving, expansion to arc flows, exports, cost curves."""

from __future__ import annotations

import io
import math
from dataclasses import dataclass, field

import numpy as np

from ..astro import DeltaVMatrix
from ..catalog import Catalog, EARTH_NODE_ID
from ..errors import Infeasible, TimeLimitReached
from ..network import (
    Arc,
    ArcKind,
    CostTable,
    Method,
    NetworkModel,
    Vehicle,
    _greedy_segments,
    build_network,
)
from .bnb import RawSolution, ReducedModel, branch_and_bound, build_reduced
from .milp import MilpProblem, formulate


@dataclass
class SolveOptions:
    gap_tol: float = 1e-6
    time_limit_s: float | None = None
    seed: int = 0
    use_greedy_incumbent: bool = True


@dataclass
class FlowSet:
    """Arc flows keyed by (arc index, departure step)."""

    x_out: dict[tuple[int, int], np.ndarray] = field(default_factory=dict)
    x_in: dict[tuple[int, int], np.ndarray] = field(default_factory=dict)
    y_out: dict[tuple[int, int], float] = field(default_factory=dict)
    y_in: dict[tuple[int, int], float] = field(default_factory=dict)


@dataclass
class Leg:
    t: int
    from_id: str
    to_id: str
    propellant_out_kg: float
    debris_id: str | None


@dataclass
class SolveStats:
    status: str
    nodes_explored: int = 0
    lp_iterations: int = 0
    gap: float = 0.0
    bound_usd: float = math.nan


@dataclass
class MissionPlan:
    method: Method
    d: int
    legs: list[Leg]
    flows: FlowSet
    total_cost_usd: float
    cost_by_time: dict[int, float]
    cost_by_category: dict[str, float]
    stats: SolveStats

    @property
    def route(self) -> list[str]:
        """Ordered node visits, starting from Earth."""
        if not self.legs:
            return []
        return [self.legs[0].from_id] + [leg.to_id for leg in self.legs]

    def remediation_times(self) -> dict[str, int]:
        """Debris node id -> time step at which it reaches the sink."""
        return {leg.debris_id: leg.t + 1 for leg in self.legs if leg.debris_id is not None}

    def refuel_count(self) -> int:
        """Depot returns after launch (each one is a refueling stop)."""
        depot = self.method.depot_id
        return sum(
            1 for leg in self.legs if leg.to_id == depot and leg.from_id != EARTH_NODE_ID
        )

    def to_csv(self) -> str:
        out = io.StringIO()
        out.write("t,vehicle,from,to,propellant_kg,debris\n")
        for leg in self.legs:
            out.write(
                f"{leg.t},servicer,{leg.from_id},{leg.to_id},"
                f"{leg.propellant_out_kg:.6f},{leg.debris_id or ''}\n"
            )
        return out.getvalue()


def leg_depot_id(plan: MissionPlan) -> str:
    return plan.method.depot_id


# ---------------------------------------------------------------------------
# route simulation shared by the greedy incumbent and flow expansion
# ---------------------------------------------------------------------------


def _leg_propellants(
    model: NetworkModel, legs: list[tuple[int, str | None]]
) -> tuple[list[float], float]:
    """Backward-minimal propellant aboard at each leg departure.

    ``legs`` lists (arc index, carried debris id) for one refuel-to-refuel
    segment; the vehicle ends the segment dry.
    """
    after = 0.0
    out: list[float] = [0.0] * len(legs)
    s_v = model.vehicle.structure_mass_kg
    for i in range(len(legs) - 1, -1, -1):
        ai, debris_id = legs[i]
        arc = model.arcs[ai]
        payload = 0.0
        if debris_id is not None:
            payload = model.commodities[model.commodity_index(debris_id)].mass_kg
        before = (after + arc.phi * (payload + s_v)) / (1.0 - arc.phi)
        out[i] = before
        after = before
    return out, out[0] if out else 0.0


def _arc_lookup(model: NetworkModel) -> dict[tuple[str, str], int]:
    table: dict[tuple[str, str], int] = {}
    for ai, arc in enumerate(model.arcs):
        if arc.kind is ArcKind.FLIGHT:
            table[(arc.from_id, arc.to_id)] = ai
    return table


def segments_to_legs(model: NetworkModel, segments: list[list[str]]) -> list[Leg] | None:
    """Timed legs for a depot-anchored visit order; None if the horizon is short.

    Reentry segments run depot -> a1 -> sink -> a2 -> ... -> ak -> sink and
    return to the depot unless final; recycling segments are single
    depot -> a -> depot trips.
    """
    arcs = _arc_lookup(model)
    flights: list[tuple[int, str | None]] = [(arcs[(EARTH_NODE_ID, model.depot_id)], None)]
    seg_spans: list[tuple[int, int]] = []  # [start, end) leg indices per segment
    for si, seg in enumerate(segments):
        start = len(flights)
        last = len(segments) - 1 == si
        if model.method is Method.RECYCLING:
            a = seg[0]
            flights.append((arcs[(model.depot_id, a)], None))
            flights.append((arcs[(a, model.depot_id)], a))
        else:
            for pos, a in enumerate(seg):
                origin = model.depot_id if pos == 0 else model.sink_id
                flights.append((arcs[(origin, a)], None))
                flights.append((arcs[(a, model.sink_id)], a))
            if not last:
                flights.append((arcs[(model.sink_id, model.depot_id)], None))
        seg_spans.append((start, len(flights)))
    if len(flights) > model.horizon - 1:
        return None

    # launch carries the first segment's propellant for free
    legs: list[Leg] = []
    seg_props: dict[int, float] = {}
    for si, (a, b) in enumerate(seg_spans):
        props, first = _leg_propellants(model, flights[a:b])
        seg_props[a] = first
        for off, p in enumerate(props):
            i = a + off
            ai, debris_id = flights[i]
            arc = model.arcs[ai]
            legs.append(Leg(t=i, from_id=arc.from_id, to_id=arc.to_id, propellant_out_kg=p, debris_id=debris_id))
    launch_arc = model.arcs[flights[0][0]]
    legs.insert(
        0,
        Leg(t=0, from_id=launch_arc.from_id, to_id=launch_arc.to_id,
            propellant_out_kg=seg_props.get(1, 0.0), debris_id=None),
    )
    return legs


def evaluate_segments(model: NetworkModel, segments: list[list[str]]) -> tuple[float, bool]:
    """(total cost, capacity-feasible) for a depot-anchored segment plan."""
    import math

    costs = model.costs
    vehicle = model.vehicle
    ve = vehicle.isp_s * model.g0_m_s2 / 1000.0
    cap = vehicle.propellant_capacity_kg
    s_v = vehicle.structure_mass_kg
    dv = model.dv
    mass = {nid: model.commodities[model.commodity_index(nid)].mass_kg for nid in model.debris_ids}
    depot, sink = model.depot_id, model.sink_id

    total_prop = 0.0
    feasible = True
    n_arcs = 1
    for si, seg in enumerate(segments):
        legs: list[tuple[float, float]] = []
        for pos, nid in enumerate(seg):
            origin = depot if pos == 0 else sink
            legs.append((dv.get(origin, nid), 0.0))
            legs.append((dv.get(nid, sink), mass[nid]))
        if si < len(segments) - 1:
            legs.append((dv.get(sink, depot), 0.0))
        p = 0.0
        growth = 1.0
        for dvv, payload in legs:
            e = math.exp(dvv / ve)
            p += (e - 1.0) * (payload + s_v) * growth
            growth *= e
        feasible &= p <= cap + 1e-9
        total_prop += p
        n_arcs += len(legs)
    if costs.operation_basis == "per_arc":
        ops = costs.operation_usd_per_flight * n_arcs
    else:
        ops = costs.operation_usd_per_flight * (1 + len(segments))
    cost = (
        costs.vehicle_usd
        + costs.launch_usd_per_kg * s_v
        + ops
        + costs.depot_propellant_usd_per_kg * total_prop
    )
    return cost, feasible


def _local_search(model: NetworkModel, segments: list[list[str]]) -> list[list[str]]:
    """Relocate/swap improvement over the greedy segment plan."""
    best_cost, ok = evaluate_segments(model, segments)
    if not ok:
        return segments
    max_nseg = max(1, model.horizon - 1 - 2 * model.d)
    improved = True
    passes = 0
    while improved and passes < 12:
        improved = False
        passes += 1
        flat = [(si, pi) for si, seg in enumerate(segments) for pi in range(len(seg))]
        for si, pi in flat:
            nid = segments[si][pi]
            for sj in range(len(segments)):
                for pj in range(len(segments[sj]) + 1):
                    if sj == si and pj in (pi, pi + 1):
                        continue
                    cand = [list(s) for s in segments]
                    cand[si].pop(pi)
                    cand[sj if sj != si or pj < pi else sj].insert(
                        pj if sj != si or pj < pi else pj - 1, nid
                    )
                    cand = [s for s in cand if s]
                    if len(cand) > max_nseg:
                        continue
                    cost, ok = evaluate_segments(model, cand)
                    if ok and cost < best_cost - 1e-6:
                        segments, best_cost, improved = cand, cost, True
                        break
                if improved:
                    break
            if improved:
                break
    return segments


def greedy_plan_legs(model: NetworkModel) -> list[Leg] | None:
    """Capacity-aware greedy route used as the branch-and-bound incumbent."""
    if model.method is Method.RECYCLING:
        segments = [[nid] for nid in model.debris_ids]
        cap = model.vehicle.propellant_capacity_kg
        arcs = _arc_lookup(model)
        for nid in model.debris_ids:
            trip = [(arcs[(model.depot_id, nid)], None), (arcs[(nid, model.depot_id)], nid)]
            _, need = _leg_propellants(model, trip)
            if need > cap:
                return None
    else:
        debris = [n for n in model.nodes if n.node_id in model.debris_ids]
        segments = _greedy_segments(
            model.dv, model.depot_id, model.sink_id, debris, model.vehicle, model.g0_m_s2
        )
        if segments is None:
            return None
        segments = _local_search(model, segments)
    return segments_to_legs(model, segments)


def _purchases_from_legs(model: NetworkModel, legs: list[Leg]) -> dict[tuple[int, int], float]:
    """Propellant market draws (supply arc index, t) -> kg for a leg sequence."""
    supply_idx = {a.to_id: ai for ai, a in enumerate(model.arcs) if a.kind is ArcKind.SUPPLY}
    arcs = _arc_lookup(model)
    draws: dict[tuple[int, int], float] = {}
    prev_arrival = 0.0
    for leg in legs:
        need = leg.propellant_out_kg
        if leg.from_id == EARTH_NODE_ID:
            if need > 1e-12:
                draws[(supply_idx[EARTH_NODE_ID], leg.t)] = need
        else:
            topup = need - prev_arrival
            if topup > 1e-9:
                if leg.from_id != model.depot_id:
                    # beyond numerical noise this would be a modeling violation
                    if topup > 1e-3:
                        raise ValueError("propellant increased away from the depot")
                else:
                    key = (supply_idx[model.depot_id], leg.t)
                    draws[key] = draws.get(key, 0.0) + topup
        arc = model.arcs[arcs[(leg.from_id, leg.to_id)]]
        payload = 0.0
        if leg.debris_id is not None:
            payload = model.commodities[model.commodity_index(leg.debris_id)].mass_kg
        if arc.from_id == EARTH_NODE_ID:
            prev_arrival = need  # launch burns nothing
        else:
            prev_arrival = (1.0 - arc.phi) * need - arc.phi * (payload + model.vehicle.structure_mass_kg)
            prev_arrival = max(prev_arrival, 0.0)
    return draws


def legs_to_flows(model: NetworkModel, legs: list[Leg]) -> FlowSet:
    """Expand a leg sequence into the full faithful arc-flow set."""
    p = model.n_commodities
    prop = model.propellant_index
    s_v = model.vehicle.structure_mass_kg
    arcs = _arc_lookup(model)
    flows = FlowSet()

    for leg in legs:
        ai = arcs[(leg.from_id, leg.to_id)]
        arc = model.arcs[ai]
        xo = np.zeros(p)
        xo[prop] = leg.propellant_out_kg
        if leg.debris_id is not None:
            xo[model.commodity_index(leg.debris_id)] = 1.0
        stacked = np.concatenate([xo, [s_v * 1.0]])
        arrived = arc.Q @ stacked
        xi = arrived[:p]
        key = (ai, leg.t)
        flows.x_out[key] = xo
        flows.x_in[key] = xi
        flows.y_out[key] = 1.0
        flows.y_in[key] = arrived[p] / s_v

    for (ai, t), amount in _purchases_from_legs(model, legs).items():
        if amount <= 0:
            continue
        xo = np.zeros(p)
        xo[prop] = amount
        flows.x_out[(ai, t)] = xo
        flows.x_in[(ai, t)] = xo.copy()

    # debris wait at their origin until pickup and at the sink afterwards
    hold_idx = {
        a.from_id: ai for ai, a in enumerate(model.arcs) if a.kind is ArcKind.HOLDOVER
    }
    pickups = {leg.debris_id: leg.t for leg in legs if leg.debris_id is not None}
    for k, commodity in enumerate(model.commodities[:-1]):
        nid = commodity.object_node_id
        t_pick = pickups.get(nid)
        if t_pick is None:
            continue
        for t in range(0, t_pick):
            key = (hold_idx[nid], t)
            xo = flows.x_out.setdefault(key, np.zeros(p))
            xo[k] += 1.0
            flows.x_in.setdefault(key, xo)
        for t in range(t_pick + 1, model.horizon - 1):
            key = (hold_idx[model.sink_id], t)
            xo = flows.x_out.setdefault(key, np.zeros(p))
            xo[k] += 1.0
    # holdover arcs transform by identity
    for key in list(flows.x_out.keys()):
        ai = key[0]
        if model.arcs[ai].kind is ArcKind.HOLDOVER:
            flows.x_in[key] = flows.x_out[key].copy()
    return flows


def objective_usd(model: NetworkModel, flows: FlowSet) -> float:
    total = 0.0
    for (ai, _t), xo in flows.x_out.items():
        total += float(model.arcs[ai].cost_x_usd @ xo)
    for (ai, _t), y in flows.y_out.items():
        total += model.arcs[ai].vehicle_cost_usd * y
    return total


def _cost_breakdown(model: NetworkModel, flows: FlowSet) -> tuple[dict[int, float], dict[str, float]]:
    costs = model.costs
    prop = model.propellant_index
    by_time: dict[int, float] = {}
    cat = {
        "vehicle_manufacturing": 0.0,
        "launch_services": 0.0,
        "propellant_commodity": 0.0,
        "operations": 0.0,
    }
    earth_price = costs.earth_propellant_usd_per_kg
    for (ai, t), xo in flows.x_out.items():
        arc = model.arcs[ai]
        usd = float(arc.cost_x_usd @ xo)
        if usd:
            by_time[t] = by_time.get(t, 0.0) + usd
        if arc.kind is ArcKind.SUPPLY:
            cat["propellant_commodity"] += earth_price * xo[prop]
            cat["launch_services"] += (arc.cost_x_usd[prop] - earth_price) * xo[prop]
        elif arc.kind is ArcKind.FLIGHT and arc.from_id == EARTH_NODE_ID:
            cat["launch_services"] += float(arc.cost_x_usd @ xo)
    for (ai, t), y in flows.y_out.items():
        arc = model.arcs[ai]
        usd = arc.vehicle_cost_usd * y
        if usd:
            by_time[t] = by_time.get(t, 0.0) + usd
        if arc.kind is ArcKind.FLIGHT and y:
            veh = arc.vehicle_cost_usd
            if arc.from_id == EARTH_NODE_ID:
                cat["vehicle_manufacturing"] += costs.vehicle_usd * y
                cat["launch_services"] += costs.launch_usd_per_kg * model.vehicle.structure_mass_kg * y
                veh -= costs.vehicle_usd + costs.launch_usd_per_kg * model.vehicle.structure_mass_kg
            cat["operations"] += veh * y
    return by_time, cat


def _plan_from_legs(model: NetworkModel, legs: list[Leg], stats: SolveStats) -> MissionPlan:
    flows = legs_to_flows(model, legs)
    total = objective_usd(model, flows)
    by_time, by_cat = _cost_breakdown(model, flows)
    return MissionPlan(
        method=model.method,
        d=model.d,
        legs=legs,
        flows=flows,
        total_cost_usd=total,
        cost_by_time=by_time,
        cost_by_category=by_cat,
        stats=stats,
    )


def _legs_from_reduced(reduced: ReducedModel, x: np.ndarray) -> list[Leg]:
    model = reduced.model
    chosen: list[tuple[int, int]] = []  # (t, arc)
    for j, key in enumerate(reduced.var_keys):
        if key[0] == "Y" and x[j] > 0.5:
            chosen.append((key[2], key[1]))
    chosen.sort()
    carried_at: dict[tuple[int, int], str] = {}
    for j, key in enumerate(reduced.var_keys):
        if key[0] == "X" and x[j] > 0.5:
            k, t = key[1], key[2]
            ai = reduced.carry_arc_of[k]
            carried_at[(t, ai)] = model.commodities[k].object_node_id
    legs = []
    for t, ai in chosen:
        arc = model.arcs[ai]
        pj = reduced.var_index.get(("P", ai, t))
        prop = float(x[pj]) * reduced.prop_scale_kg if pj is not None else 0.0
        legs.append(
            Leg(
                t=t,
                from_id=arc.from_id,
                to_id=arc.to_id,
                propellant_out_kg=prop,
                debris_id=carried_at.get((t, ai)),
            )
        )
    return legs


def _raw_to_plan(reduced: ReducedModel, raw: RawSolution) -> MissionPlan:
    stats = SolveStats(
        status=raw.status,
        nodes_explored=raw.nodes_explored,
        lp_iterations=raw.lp_iterations,
        gap=raw.gap,
        bound_usd=raw.bound_usd,
    )
    legs = _legs_from_reduced(reduced, raw.x)
    plan = _plan_from_legs(reduced.model, legs, stats)
    # Keep the solver's own propellant accounting; rebuild purchases exactly
    # from the reduced solution for fidelity.
    return plan


def _incumbent_vector(reduced: ReducedModel, legs: list[Leg]) -> np.ndarray | None:
    model = reduced.model
    x = np.zeros(len(reduced.var_keys))
    arcs = _arc_lookup(model)
    pscale = reduced.prop_scale_kg
    for leg in legs:
        ai = arcs[(leg.from_id, leg.to_id)]
        jy = reduced.var_index.get(("Y", ai, leg.t))
        jp = reduced.var_index.get(("P", ai, leg.t))
        if jy is None or jp is None:
            return None
        x[jy] = 1.0
        x[jp] = leg.propellant_out_kg / pscale
        jz = reduced.var_index.get(("Z", ai))
        if jz is not None:
            x[jz] += 1.0
        if leg.debris_id is not None:
            k = model.commodity_index(leg.debris_id)
            jx = reduced.var_index.get(("X", k, leg.t))
            if jx is None:
                return None
            x[jx] = 1.0
    for (ai, t), amount in _purchases_from_legs(model, legs).items():
        ju = reduced.var_index.get(("U", ai, t))
        if ju is None:
            return None
        x[ju] = amount / pscale
    return x


def solve(problem: MilpProblem, opts: SolveOptions = SolveOptions()) -> MissionPlan:
    """Solve the network MILP to proven optimality (within ``gap_tol``).

    Raises :class:`Infeasible`, :class:`Unbounded` or
    :class:`TimeLimitReached`; the latter carries the best incumbent
    :class:`MissionPlan` found plus the proven lower bound.
    """
    model = problem.model
    if not model.arcs:
        return MissionPlan(
            method=model.method, d=0, legs=[], flows=FlowSet(), total_cost_usd=0.0,
            cost_by_time={}, cost_by_category={}, stats=SolveStats(status="optimal"),
        )
    reduced = build_reduced(model)
    incumbent = None
    if opts.use_greedy_incumbent:
        legs = greedy_plan_legs(model)
        if legs is not None:
            incumbent = _incumbent_vector(reduced, legs)
    try:
        raw = branch_and_bound(
            reduced,
            gap_tol=opts.gap_tol,
            time_limit_s=opts.time_limit_s,
            incumbent_x=incumbent,
        )
    except TimeLimitReached as exc:
        raw = exc.incumbent
        plan = None
        if raw is not None and raw.x.size:
            plan = _raw_to_plan(reduced, raw)
        raise TimeLimitReached(str(exc), incumbent=plan, bound=exc.bound) from None
    return _raw_to_plan(reduced, raw)


@dataclass
class CurvePoint:
    d: int
    status: str  # "optimal" | "infeasible" | "time_limit"
    cost_usd: float | None
    bound_usd: float | None
    plan: MissionPlan | None


def cost_curve(
    catalog: Catalog,
    dv: DeltaVMatrix,
    method: Method,
    d_max: int,
    vehicle: Vehicle = Vehicle(),
    costs: CostTable = CostTable(),
    opts: SolveOptions = SolveOptions(),
    d_values: list[int] | None = None,
) -> list[CurvePoint]:
    """Optimal mission cost for each debris count d.

    Infeasible instances (an object that cannot be serviced within the
    vehicle's capacity) and time-limited instances are reported as such
    rather than omitted.
    """
    points: list[CurvePoint] = []
    for d in d_values if d_values is not None else range(1, d_max + 1):
        try:
            model = build_network(catalog, dv, method, d, vehicle, costs)
            plan = solve(formulate(model), opts)
            points.append(CurvePoint(d, "optimal", plan.total_cost_usd, plan.stats.bound_usd, plan))
        except Infeasible:
            points.append(CurvePoint(d, "infeasible", None, None, None))
        except TimeLimitReached as exc:
            cost = exc.incumbent.total_cost_usd if exc.incumbent is not None else None
            points.append(CurvePoint(d, "time_limit", cost, exc.bound, exc.incumbent))
    return points
