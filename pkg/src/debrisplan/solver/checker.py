"""Independent verification of a mission plan against the network model.

The checker rebuilds every constraint family from the model definition and
evaluates the plan's arc flows directly, without reusing any solver
bookkeeping: mass balances against supplies and demands, per-arc flow
transformations, concurrency capacity, time-window closures, the
at-most-one-visit routing rule, variable domains, and the objective value.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..network import ArcKind, NetworkModel
from .plan import FlowSet, MissionPlan, objective_usd


@dataclass
class CheckReport:
    max_residual: float
    violations: list[str] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.violations


def check_plan(model: NetworkModel, plan: MissionPlan, tol: float = 1e-7) -> CheckReport:
    flows: FlowSet = plan.flows
    p = model.n_commodities
    s_v = model.vehicle.structure_mass_kg
    T = model.horizon
    worst = 0.0
    bad: list[str] = []

    def note(residual: float, message: str):
        nonlocal worst
        worst = max(worst, residual)
        if residual > tol:
            bad.append(f"{message} (residual {residual:.3e})")

    # variable domains
    for key, xo in flows.x_out.items():
        ai, t = key
        arc = model.arcs[ai]
        note(float(np.maximum(-xo, 0.0).max(initial=0.0)), f"negative outflow on {arc.key()} t={t}")
        xi = flows.x_in.get(key, np.zeros(p))
        note(float(np.maximum(-xi, 0.0).max(initial=0.0)), f"negative inflow on {arc.key()} t={t}")
        for k, c in enumerate(model.commodities):
            if c.integer:
                note(abs(xo[k] - round(xo[k])), f"fractional {c.name} on {arc.key()} t={t}")
        if not arc.window_open(t) and (np.abs(xo).max(initial=0.0) > tol or flows.y_out.get(key, 0.0) > tol):
            bad.append(f"flow outside time window on {arc.key()} t={t}")
    for key, y in flows.y_out.items():
        note(abs(y - round(y)), f"fractional vehicle count on arc {key}")
        note(max(-y, 0.0), f"negative vehicle flow on arc {key}")

    # Commodity mass balance per (node, t, commodity): outflow - inflow <= demand.
    node_ids = [n.node_id for n in model.nodes]
    for nid in node_ids:
        for t in range(T):
            lhs = np.zeros(p)
            for ai, arc in enumerate(model.arcs):
                if arc.from_id == nid and (ai, t) in flows.x_out:
                    lhs += flows.x_out[(ai, t)]
                if arc.to_id == nid and (ai, t - arc.dt) in flows.x_in:
                    lhs -= flows.x_in[(ai, t - arc.dt)]
            for k in range(p):
                demand = model.demands.get((nid, t, k), 0.0)
                note(float(lhs[k] - demand), f"mass balance {model.commodities[k].name} at ({nid}, t={t})")

    # Vehicle balance.
    for nid in node_ids:
        for t in range(T):
            lhs = 0.0
            for ai, arc in enumerate(model.arcs):
                if not arc.allows_vehicle:
                    continue
                lhs += flows.y_out.get((ai, t), 0.0) if arc.from_id == nid else 0.0
                lhs -= flows.y_in.get((ai, t - arc.dt), 0.0) if arc.to_id == nid else 0.0
            note(lhs - model.vehicle_supply.get((nid, t), 0.0), f"vehicle balance at ({nid}, t={t})")

    # Flow transformation on every used arc step.
    keys = set(flows.x_out) | set(flows.y_out)
    for ai, t in sorted(keys):
        arc = model.arcs[ai]
        xo = flows.x_out.get((ai, t), np.zeros(p))
        xi = flows.x_in.get((ai, t), np.zeros(p))
        yo = flows.y_out.get((ai, t), 0.0)
        yi = flows.y_in.get((ai, t), 0.0)
        stacked = np.concatenate([xo, [s_v * yo]])
        expect = arc.Q @ stacked
        resid = float(np.abs(np.concatenate([xi, [s_v * yi]]) - expect).max())
        scale = max(1.0, float(np.abs(stacked).max()))
        note(resid / scale, f"transformation on {arc.key()} t={t}")

    # Concurrency.
    for ai, t in sorted(flows.x_out):
        arc = model.arcs[ai]
        if arc.H is None:
            continue
        xo = flows.x_out[(ai, t)]
        yo = flows.y_out.get((ai, t), 0.0)
        lhs = arc.H @ xo - arc.h_caps * yo
        scale = max(1.0, float(np.abs(arc.h_caps).max()))
        note(float(lhs.max(initial=0.0)) / scale, f"capacity on {arc.key()} t={t}")

    # Routing: at most one visit per debris node.
    for nid in model.debris_ids:
        arrivals = 0.0
        for ai, arc in enumerate(model.arcs):
            if arc.kind is ArcKind.FLIGHT and arc.to_id == nid:
                arrivals += sum(v for (a2, _t), v in flows.y_in.items() if a2 == ai)
        note(arrivals - 1.0, f"multiple visits to debris node {nid}")

    # Objective consistency.
    recomputed = objective_usd(model, flows)
    note(
        abs(recomputed - plan.total_cost_usd) / max(1.0, abs(recomputed)),
        "objective mismatch between plan and flows",
    )
    return CheckReport(max_residual=worst, violations=bad)
