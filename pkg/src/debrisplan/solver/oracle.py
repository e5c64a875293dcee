"""Exhaustive route enumeration: an independent optimum for small instances.

For the reentry methods every mission is a sequence of depot-anchored
segments: the servicer launches to the depot, opens each segment with a
depot departure, alternates capture and disposal legs, and returns to the
depot between segments to refuel.  The oracle enumerates every visit order
and every refuel split that fits the time horizon, prices each candidate
with the closed-form propellant cascade (the product form of the rocket
equation, identical in value to chaining the arc transformation matrices),
and returns the cheapest feasible one.  Recycling missions are a fixed
sequence of independent depot round trips, so only the canonical order is
evaluated.

The evaluation is vectorized over all candidate orders; d is capped at 8 to
keep the factorial enumeration at desk scale.
"""

from __future__ import annotations

import itertools
import math

import numpy as np

from ..errors import Infeasible, TooLarge
from ..network import ArcKind, Method, NetworkModel, EARTH_NODE_ID
from .plan import Leg, MissionPlan, SolveStats, _plan_from_legs, segments_to_legs

MAX_ORACLE_D = 8


def _compositions(n: int, max_parts: int) -> list[tuple[int, ...]]:
    """All ordered splits of n positions into at most max_parts nonempty runs."""
    out: list[tuple[int, ...]] = []
    for parts in range(1, min(n, max_parts) + 1):
        for cuts in itertools.combinations(range(1, n), parts - 1):
            bounds = (0,) + cuts + (n,)
            out.append(tuple(bounds[i + 1] - bounds[i] for i in range(parts)))
    return out


def _operation_flights(model: NetworkModel, d: int, nseg: int) -> float:
    """Number of operation-cost charges for a reentry route shape."""
    n_arcs = 1 + 2 * d + (nseg - 1)
    if model.costs.operation_basis == "per_arc":
        return float(n_arcs)
    return float(1 + nseg)  # launch plus one depot departure per segment


def enumerate_routes(model: NetworkModel) -> MissionPlan:
    """Cheapest feasible route by exhaustive enumeration (exact, d <= 8)."""
    d = model.d
    if d == 0:
        return _plan_from_legs(model, [], SolveStats(status="oracle"))
    if model.method is not Method.RECYCLING and d > MAX_ORACLE_D:
        raise TooLarge(f"route enumeration is capped at d={MAX_ORACLE_D}, got {d}")

    vehicle = model.vehicle
    costs = model.costs
    ve = vehicle.isp_s * model.g0_m_s2 / 1000.0
    cap = vehicle.propellant_capacity_kg
    s_v = vehicle.structure_mass_kg
    prop_price = costs.depot_propellant_usd_per_kg
    fixed = costs.vehicle_usd + costs.launch_usd_per_kg * s_v
    op = costs.operation_usd_per_flight
    dv = model.dv
    depot, sink = model.depot_id, model.sink_id
    ids = model.debris_ids
    masses = np.array(
        [model.commodities[model.commodity_index(nid)].mass_kg for nid in ids]
    )

    if model.method is Method.RECYCLING:
        total_prop = 0.0
        for nid, mass in zip(ids, masses):
            e_out = math.exp(dv.get(depot, nid) / ve)
            e_back = math.exp(dv.get(nid, depot) / ve)
            trip = (e_out - 1.0) * s_v + (e_back - 1.0) * (mass + s_v) * e_out
            if trip > cap:
                raise Infeasible(
                    f"debris {nid} cannot be recycled within the propellant capacity "
                    f"({trip:,.0f} kg needed)"
                )
            total_prop += trip
        n_arcs = 1 + 2 * d
        n_ops = n_arcs if costs.operation_basis == "per_arc" else 1 + d
        cost = fixed + op * n_ops + prop_price * total_prop
        legs = segments_to_legs(model, [[nid] for nid in ids])
        plan = _plan_from_legs(model, legs, SolveStats(status="oracle"))
        assert abs(plan.total_cost_usd - cost) < 1e-6 * max(1.0, cost)
        return plan

    # reentry methods: vectorize over permutations x refuel compositions
    e_start = np.exp(np.array([dv.get(depot, nid) for nid in ids]) / ve)
    e_up = np.exp(np.array([dv.get(sink, nid) for nid in ids]) / ve)
    e_dn = np.exp(np.array([dv.get(nid, sink) for nid in ids]) / ve)
    e_ret = math.exp(dv.get(sink, depot) / ve)

    max_arcs = model.horizon - 1
    max_nseg = max(1, max_arcs - 2 * d)  # 1 + 2d + (nseg-1) <= max_arcs
    perms = np.array(list(itertools.permutations(range(d))), dtype=np.int64)
    n_perm = perms.shape[0]
    pe_start = e_start[perms]
    pe_up = e_up[perms]
    pe_dn = e_dn[perms]
    pm = masses[perms]

    best = (np.inf, None, None)  # cost, perm row, composition
    for comp in _compositions(d, max_nseg):
        nseg = len(comp)
        total_prop = np.zeros(n_perm)
        feasible = np.ones(n_perm, dtype=bool)
        pos = 0
        for si, length in enumerate(comp):
            seg_prop = np.zeros(n_perm)
            growth = np.ones(n_perm)
            for off in range(length):
                i = pos + off
                e_in = pe_start[:, i] if off == 0 else pe_up[:, i]
                seg_prop += (e_in - 1.0) * s_v * growth
                growth = growth * e_in
                seg_prop += (pe_dn[:, i] - 1.0) * (pm[:, i] + s_v) * growth
                growth = growth * pe_dn[:, i]
            if si < nseg - 1:
                seg_prop += (e_ret - 1.0) * s_v * growth
            feasible &= seg_prop <= cap + 1e-9
            total_prop += seg_prop
            pos += length
        if not feasible.any():
            continue
        cost = fixed + op * _operation_flights(model, d, nseg) + prop_price * total_prop
        cost[~feasible] = np.inf
        row = int(np.argmin(cost))
        if cost[row] < best[0] - 1e-9:
            best = (float(cost[row]), perms[row], comp)

    if best[1] is None:
        raise Infeasible("no feasible route within capacity and horizon")

    perm, comp = best[1], best[2]
    segments: list[list[str]] = []
    pos = 0
    for length in comp:
        segments.append([ids[perm[pos + off]] for off in range(length)])
        pos += length
    legs = segments_to_legs(model, segments)
    plan = _plan_from_legs(model, legs, SolveStats(status="oracle"))
    assert abs(plan.total_cost_usd - best[0]) < 1e-6 * max(1.0, best[0])
    return plan
