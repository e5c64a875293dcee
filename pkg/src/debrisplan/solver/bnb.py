"""Branch and bound over LP relaxations of the network MILP.

``solve`` consumes the faithful :class:`MilpProblem` but operates on an
equivalent reduced system derived from the network structure: arrival
variables are substituted through the transformation matrices, debris
holdover chains collapse to one delivery equality per object, and vehicle
idling variables are dropped whenever every time window is open (an optimal
schedule then never needs to wait).  The reduction provably preserves the
set of optimal objective values; solutions are expanded back to the full
arc-flow form afterwards.

Branching is on the most fractional integer variable (ties broken by lowest
index), node selection is best-bound (ties by creation order), and each node
LP warm-starts from its parent basis.
"""

from __future__ import annotations

import heapq
import time
from dataclasses import dataclass, field

import numpy as np
from scipy.sparse import csc_matrix, eye, hstack

from ..errors import Infeasible, TimeLimitReached, Unbounded
from ..network import ArcKind, NetworkModel, EARTH_NODE_ID, SUPPLY_SOURCE_ID
from .simplex import AT_LOWER, BASIC, BoundedSimplex

INTEGRALITY_TOL = 1e-6
FEASIBILITY_TOL = 1e-7
OBJ_SCALE = 1e-6  # dollars -> millions, keeps the simplex well conditioned


@dataclass
class ReducedModel:
    model: NetworkModel
    var_keys: list[tuple]
    var_index: dict[tuple, int]
    lb: np.ndarray
    ub: np.ndarray
    is_int: np.ndarray
    c_usd: np.ndarray
    A: csc_matrix
    senses: list[str]
    rhs: np.ndarray
    carry_arc_of: dict[int, int]  # commodity index -> arc index
    has_windows: bool
    prop_scale_kg: float = 1.0  # one unit of P/U/PH in kilograms


def _earliest_arrival(model: NetworkModel) -> dict[str, int]:
    earliest = {EARTH_NODE_ID: 0}
    frontier = [EARTH_NODE_ID]
    flights = model.flight_arcs()
    while frontier:
        nxt = []
        for nid in frontier:
            for a in flights:
                if a.from_id == nid:
                    t = earliest[nid] + a.dt
                    if a.to_id not in earliest or t < earliest[a.to_id]:
                        earliest[a.to_id] = t
                        nxt.append(a.to_id)
        frontier = nxt
    return earliest


def build_reduced(model: NetworkModel) -> ReducedModel:
    T = model.horizon
    p = model.n_commodities
    prop = model.propellant_index
    s_v = model.vehicle.structure_mass_kg
    cap = model.vehicle.propellant_capacity_kg
    # propellant variables live in units of one tank; this keeps every
    # matrix coefficient near unity (raw kilograms would mix 1 and 1e4)
    pscale = cap
    slots = float(model.vehicle.debris_slots)
    has_windows = any(a.windows is not None for a in model.arcs)
    earliest = _earliest_arrival(model)

    carry_arc_of: dict[int, int] = {}
    for ai, arc in enumerate(model.arcs):
        if arc.kind is ArcKind.FLIGHT and arc.to_id == model.sink_id:
            for k, c in enumerate(model.commodities[:-1]):
                if c.object_node_id == arc.from_id:
                    carry_arc_of[k] = ai

    keys: list[tuple] = []
    index: dict[tuple, int] = {}
    lb: list[float] = []
    ub: list[float] = []
    is_int: list[bool] = []
    c: list[float] = []

    def add(key, lo, hi, integer, cost):
        index[key] = len(keys)
        keys.append(key)
        lb.append(lo)
        ub.append(hi)
        is_int.append(integer)
        c.append(cost)

    flight_steps: dict[int, range] = {}
    for ai, arc in enumerate(model.arcs):
        if arc.kind is not ArcKind.FLIGHT:
            continue
        t0 = earliest.get(arc.from_id, 0)
        if arc.from_id == EARTH_NODE_ID and not has_windows:
            steps = range(0, 1)  # without waiting options the launch leaves at t=0
        else:
            steps = range(t0, T - arc.dt)
        flight_steps[ai] = steps

    # Aggregate arc-use counters come first: with the most-fractional /
    # lowest-index branching rule, route-shape decisions (does the mission
    # ever fly this arc?) are taken before departure-timing ones, which
    # keeps the search tree small.
    for ai, arc in enumerate(model.arcs):
        if arc.kind is not ArcKind.FLIGHT:
            continue
        once = (
            arc.from_id == EARTH_NODE_ID
            or arc.to_id in model.debris_ids
            or arc.from_id in model.debris_ids
        )
        # presolve fixing: any mission with work to do launches exactly once
        launch_lb = 1.0 if arc.from_id == EARTH_NODE_ID and model.d >= 1 else 0.0
        add(("Z", ai), launch_lb, 1.0 if once else float(T), True, 0.0)
    for ai, arc in enumerate(model.arcs):
        if arc.kind is not ArcKind.FLIGHT:
            continue
        for t in flight_steps[ai]:
            open_ = arc.window_open(t)
            add(("Y", ai, t), 0.0, 1.0 if open_ else 0.0, True, arc.vehicle_cost_usd)
            add(("P", ai, t), 0.0, 1.0 if open_ else 0.0, False, float(arc.cost_x_usd[prop]) * pscale)
    for k, ai in sorted(carry_arc_of.items()):
        arc = model.arcs[ai]
        for t in flight_steps[ai]:
            add(("X", k, t), 0.0, 1.0 if arc.window_open(t) else 0.0, True, float(arc.cost_x_usd[k]))
    for ai, arc in enumerate(model.arcs):
        if arc.kind is ArcKind.SUPPLY:
            steps = range(0, 1) if (arc.to_id == EARTH_NODE_ID and not has_windows) else range(T)
            for t in steps:
                add(("U", ai, t), 0.0, np.inf, False, float(arc.cost_x_usd[prop]) * pscale)
    if has_windows:
        storage = (EARTH_NODE_ID, model.depot_id)
        for n in model.nodes:
            for t in range(T - 1):
                add(("YH", n.node_id, t), 0.0, 1.0, True, 0.0)
                add(("PH", n.node_id, t), 0.0, np.inf if n.node_id in storage else 1.0, False, 0.0)

    rows: list[int] = []
    cols: list[int] = []
    vals: list[float] = []
    senses: list[str] = []
    rhs: list[float] = []

    def new_row(sense, b):
        senses.append(sense)
        rhs.append(b)
        return len(rhs) - 1

    def put(r, key, v):
        j = index.get(key)
        if j is not None:
            rows.append(r)
            cols.append(j)
            vals.append(v)

    node_ids = [n.node_id for n in model.nodes]
    out_f: dict[str, list[int]] = {nid: [] for nid in node_ids}
    in_f: dict[str, list[int]] = {nid: [] for nid in node_ids}
    supply_at: dict[str, list[int]] = {nid: [] for nid in node_ids}
    for ai, arc in enumerate(model.arcs):
        if arc.kind is ArcKind.FLIGHT:
            out_f[arc.from_id].append(ai)
            in_f[arc.to_id].append(ai)
        elif arc.kind is ArcKind.SUPPLY:
            supply_at[arc.to_id].append(ai)

    def arriving_prop_terms(r, ai, t, sign=1.0):
        """(1-phi) P - phi m X - phi s Y of arc ai departing at t, times sign.

        Expressed in tank units: mass terms divide by the propellant scale.
        """
        arc = model.arcs[ai]
        put(r, ("P", ai, t), sign * (1.0 - arc.phi))
        put(r, ("Y", ai, t), sign * (-arc.phi * s_v / pscale))
        for k, cmod in enumerate(model.commodities[:-1]):
            if carry_arc_of.get(k) == ai:
                put(r, ("X", k, t), sign * (-arc.phi * cmod.mass_kg / pscale))

    # vehicle and propellant balances
    for nid in node_ids:
        for t in range(T):
            r = new_row("L", model.vehicle_supply.get((nid, t), 0.0))
            for ai in out_f[nid]:
                put(r, ("Y", ai, t), 1.0)
            for ai in in_f[nid]:
                put(r, ("Y", ai, t - 1), -1.0)
            if has_windows:
                put(r, ("YH", nid, t), 1.0)
                put(r, ("YH", nid, t - 1), -1.0)

            r = new_row("L", 0.0)
            for ai in out_f[nid]:
                put(r, ("P", ai, t), 1.0)
            for ai in in_f[nid]:
                if t - 1 in flight_steps[ai]:
                    arriving_prop_terms(r, ai, t - 1, sign=-1.0)
            for ai in supply_at[nid]:
                put(r, ("U", ai, t), -1.0)
            if has_windows:
                put(r, ("PH", nid, t), 1.0)
                put(r, ("PH", nid, t - 1), -1.0)

    # aggregate arc-use links
    for ai, arc in enumerate(model.arcs):
        if arc.kind is not ArcKind.FLIGHT:
            continue
        r = new_row("E", 0.0)
        put(r, ("Z", ai), 1.0)
        for t in flight_steps[ai]:
            put(r, ("Y", ai, t), -1.0)

    # one delivery per debris object
    for k, ai in sorted(carry_arc_of.items()):
        r = new_row("E", 1.0)
        for t in flight_steps[ai]:
            put(r, ("X", k, t), 1.0)

    # arriving propellant is a non-negative flow (x_in >= 0 in the full model)
    for ai, arc in enumerate(model.arcs):
        if arc.kind is not ArcKind.FLIGHT or arc.phi == 0.0:
            continue
        for t in flight_steps[ai]:
            r = new_row("L", 0.0)
            arriving_prop_terms(r, ai, t, sign=-1.0)

    # concurrency links
    for ai, arc in enumerate(model.arcs):
        if arc.kind is not ArcKind.FLIGHT:
            continue
        for t in flight_steps[ai]:
            r = new_row("L", 0.0)
            put(r, ("P", ai, t), 1.0)
            put(r, ("Y", ai, t), -1.0)
    for k, ai in sorted(carry_arc_of.items()):
        for t in flight_steps[ai]:
            r = new_row("L", 0.0)
            put(r, ("X", k, t), 1.0)
            put(r, ("Y", ai, t), -slots)
    if has_windows:
        storage = (EARTH_NODE_ID, model.depot_id)
        for n in model.nodes:
            if n.node_id in storage:
                continue
            for t in range(T - 1):
                r = new_row("L", 0.0)
                put(r, ("PH", n.node_id, t), 1.0)
                put(r, ("YH", n.node_id, t), -1.0)

    # at most one visit per debris node
    for nid in model.debris_ids:
        r = new_row("L", 1.0)
        for ai in in_f[nid]:
            for t in flight_steps[ai]:
                put(r, ("Y", ai, t), 1.0)

    n = len(keys)
    A = csc_matrix(
        (np.array(vals), (np.array(rows, dtype=np.int64), np.array(cols, dtype=np.int64))),
        shape=(len(rhs), n),
    )
    return ReducedModel(
        model=model,
        var_keys=keys,
        var_index=index,
        lb=np.array(lb),
        ub=np.array(ub),
        is_int=np.array(is_int, dtype=bool),
        c_usd=np.array(c),
        A=A,
        senses=senses,
        rhs=np.array(rhs),
        carry_arc_of=carry_arc_of,
        has_windows=has_windows,
        prop_scale_kg=pscale,
    )


@dataclass
class RawSolution:
    x: np.ndarray  # reduced structural variables
    objective_usd: float
    bound_usd: float
    nodes_explored: int
    lp_iterations: int
    status: str
    gap: float


@dataclass
class _Node:
    bound: float
    seq: int
    overlay: dict[int, tuple[float, float]]
    basis: np.ndarray | None
    vstat: np.ndarray | None

    def __lt__(self, other):
        return (self.bound, self.seq) < (other.bound, other.seq)


def branch_and_bound(
    reduced: ReducedModel,
    *,
    gap_tol: float = 1e-6,
    time_limit_s: float | None = None,
    incumbent_x: np.ndarray | None = None,
    node_limit: int = 500_000,
) -> RawSolution:
    m, n = reduced.A.shape
    slack_lb = np.zeros(m)
    slack_ub = np.array([np.inf if s == "L" else 0.0 for s in reduced.senses])
    A_std = hstack([reduced.A, eye(m, format="csc")], format="csc")
    c_std = np.concatenate([reduced.c_usd * OBJ_SCALE, np.zeros(m)])
    base_lb = np.concatenate([reduced.lb, slack_lb])
    base_ub = np.concatenate([reduced.ub, slack_ub])
    int_cols = np.where(reduced.is_int)[0]
    branch_priority = np.zeros(n)
    for j, key in enumerate(reduced.var_keys):
        if key[0] == "Z":
            branch_priority[j] = 1.0

    best_x: np.ndarray | None = None
    best_obj = np.inf
    if incumbent_x is not None:
        resid = reduced.A @ incumbent_x - reduced.rhs
        ok = True
        for i, s in enumerate(reduced.senses):
            if s == "L" and resid[i] > 1e-6:
                ok = False
            if s == "E" and abs(resid[i]) > 1e-6:
                ok = False
        if ok and np.all(incumbent_x >= reduced.lb - 1e-9) and np.all(incumbent_x <= reduced.ub + 1e-9):
            best_x = incumbent_x.copy()
            best_obj = float(reduced.c_usd @ incumbent_x) * OBJ_SCALE

    start = time.monotonic()
    deadline = start + time_limit_s if time_limit_s is not None else None

    def cutoff() -> float:
        return best_obj - gap_tol * max(1.0, abs(best_obj))

    heap: list[_Node] = []
    seq = 0
    heapq.heappush(heap, _Node(-np.inf, seq, {}, None, None))
    nodes = 0
    lp_iters = 0
    solver = BoundedSimplex(A_std, reduced.rhs, c_std, base_lb, base_ub)

    def finish(status: str) -> RawSolution:
        open_bounds = [nd.bound for nd in heap]
        bound = min(open_bounds) if open_bounds else best_obj
        bound = min(bound, best_obj)
        gap = (best_obj - bound) / max(1.0, abs(best_obj)) if best_obj < np.inf else np.inf
        return RawSolution(
            x=best_x if best_x is not None else np.array([]),
            objective_usd=best_obj / OBJ_SCALE if best_obj < np.inf else np.inf,
            bound_usd=bound / OBJ_SCALE if np.isfinite(bound) else -np.inf,
            nodes_explored=nodes,
            lp_iterations=lp_iters,
            status=status,
            gap=gap,
        )

    while heap:
        if deadline is not None and time.monotonic() > deadline:
            raise TimeLimitReached(
                "time limit reached in branch and bound",
                incumbent=finish("time_limit"),
                bound=finish("time_limit").bound_usd,
            )
        if nodes >= node_limit:
            raise TimeLimitReached(
                "node limit reached in branch and bound",
                incumbent=finish("node_limit"),
                bound=finish("node_limit").bound_usd,
            )
        node = heapq.heappop(heap)
        if best_x is not None and node.bound >= cutoff():
            continue
        lo = base_lb.copy()
        hi = base_ub.copy()
        for j, (l, u) in node.overlay.items():
            lo[j], hi[j] = l, u
        solver.lb, solver.ub = lo, hi
        res = solver.solve(node.basis, node.vstat, warm_dual=node.basis is not None)
        nodes += 1
        lp_iters += res.iterations
        if res.status == "infeasible":
            continue
        if res.status == "unbounded":
            raise Unbounded("LP relaxation unbounded")
        if res.status != "optimal":
            raise TimeLimitReached(
                "simplex iteration limit reached", incumbent=finish("iteration_limit"), bound=None
            )
        if best_x is not None and res.obj >= cutoff():
            continue
        if nodes == 1 and best_x is not None and res.reduced_costs is not None:
            # Root reduced-cost fixing: a nonbasic variable whose reduced
            # cost alone would push the objective past the incumbent can be
            # pinned to its bound without losing any optimal solution.
            gap_abs = best_obj - res.obj + 1e-12
            rc = res.reduced_costs[:n]
            stat = res.vstat[:n]
            fix_lo = (stat == 0) & (rc >= gap_abs) & reduced.is_int
            fix_hi = (stat == 1) & (-rc >= gap_abs) & reduced.is_int
            base_ub[:n][fix_lo] = base_lb[:n][fix_lo]
            base_lb[:n][fix_hi] = base_ub[:n][fix_hi]
        x = res.x[:n]
        frac = np.abs(x[int_cols] - np.round(x[int_cols]))
        if frac.size == 0 or frac.max() <= INTEGRALITY_TOL:
            xi = x.copy()
            xi[int_cols] = np.round(xi[int_cols])
            best_x = xi
            best_obj = res.obj
            continue
        # Branch on the most fractional variable (ties by lowest index),
        # taking aggregate arc-use variables before departure-step ones:
        # fixing whether an arc is flown moves the bound, whereas the same
        # route merely shifted in time does not.
        dist = np.abs((x[int_cols] - np.floor(x[int_cols])) - 0.5)
        cand = np.where(frac > INTEGRALITY_TOL)[0]
        prio = branch_priority[int_cols[cand]]
        order = cand[np.lexsort((int_cols[cand], dist[cand], -prio))]
        j = int(int_cols[order[0]])
        floor_v = np.floor(x[j])
        for child_bounds in (
            {j: (lo[j], floor_v)},
            {j: (floor_v + 1.0, hi[j])},
        ):
            seq += 1
            overlay = dict(node.overlay)
            overlay.update(child_bounds)
            heapq.heappush(heap, _Node(res.obj, seq, overlay, res.basis, res.vstat))

    if best_x is None:
        raise Infeasible("no feasible mission plan exists for this network")
    out = finish("optimal")
    return out
