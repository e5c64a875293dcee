"""Explicit MILP formulation of a network model.

The problem is written exactly as the network defines it: outflow and inflow
variables per arc and departure step, mass-balance inequalities per node,
step and commodity, per-arc flow transformation equalities, concurrency
bounds, time-window variable bounds, and the at-most-one-visit routing rows
for debris nodes.  Commodity variables are only materialized on arcs that
can structurally carry them (a debris object exists on its own orbit, its
single carry arc, and the sink), which leaves the feasible set unchanged.
"""

from __future__ import annotations

import io
from dataclasses import dataclass, field

import numpy as np
from scipy.sparse import csr_matrix

from ..network import Arc, ArcKind, NetworkModel, SUPPLY_SOURCE_ID

SENSE_LE = "L"
SENSE_EQ = "E"


@dataclass
class MilpProblem:
    model: NetworkModel
    var_names: list[str]
    lb: np.ndarray
    ub: np.ndarray
    is_integer: np.ndarray
    objective: np.ndarray
    A: csr_matrix
    senses: list[str]
    rhs: np.ndarray
    row_names: list[str]
    var_index: dict[tuple, int] = field(default_factory=dict)

    @property
    def n_vars(self) -> int:
        return len(self.var_names)

    @property
    def n_rows(self) -> int:
        return len(self.rhs)


def _arc_steps(arc: Arc, horizon: int) -> range:
    return range(0, horizon - arc.dt) if horizon > arc.dt else range(0)


def _commodity_support(model: NetworkModel, arc: Arc) -> list[int]:
    """Commodity indices that can ever be nonzero on this arc."""
    prop = model.propellant_index
    if arc.kind is ArcKind.SUPPLY:
        return [prop]
    if arc.kind is ArcKind.HOLDOVER:
        node = arc.from_id
        debris = [
            i
            for i, c in enumerate(model.commodities[:-1])
            if node == c.object_node_id or node == model.sink_id
        ]
        return debris + [prop]
    # flight arc: a debris object rides only its delivery arc
    for i, c in enumerate(model.commodities[:-1]):
        if arc.from_id == c.object_node_id and arc.to_id == model.sink_id:
            return [i, prop]
    return [prop]


def formulate(model: NetworkModel) -> MilpProblem:
    T = model.horizon
    p = model.n_commodities
    s_v = model.vehicle.structure_mass_kg

    var_names: list[str] = []
    lbs: list[float] = []
    ubs: list[float] = []
    ints: list[bool] = []
    objs: list[float] = []
    index: dict[tuple, int] = {}

    def add_var(key: tuple, name: str, lb: float, ub: float, integer: bool, obj: float) -> int:
        idx = len(var_names)
        index[key] = idx
        var_names.append(name)
        lbs.append(lb)
        ubs.append(ub)
        ints.append(integer)
        objs.append(obj)
        return idx

    supports = [_commodity_support(model, a) for a in model.arcs]
    for ai, arc in enumerate(model.arcs):
        tag = f"{arc.from_id}.{arc.to_id}".replace("_", "")
        for t in _arc_steps(arc, T):
            closed = not arc.window_open(t)
            ub_flow = 0.0 if closed else np.inf
            for k in supports[ai]:
                cname = model.commodities[k].name
                integer = model.commodities[k].integer
                add_var(("xp", ai, t, k), f"xp_{tag}_t{t}_{cname}", 0.0, ub_flow, integer, float(arc.cost_x_usd[k]))
                add_var(("xm", ai, t, k), f"xm_{tag}_t{t}_{cname}", 0.0, ub_flow, integer, 0.0)
            if arc.allows_vehicle:
                add_var(("yp", ai, t), f"yp_{tag}_t{t}", 0.0, ub_flow, True, arc.vehicle_cost_usd)
                add_var(("ym", ai, t), f"ym_{tag}_t{t}", 0.0, ub_flow, True, 0.0)

    rows_i: list[int] = []
    cols_i: list[int] = []
    vals: list[float] = []
    senses: list[str] = []
    rhs: list[float] = []
    row_names: list[str] = []

    def new_row(name: str, sense: str, b: float) -> int:
        row_names.append(name)
        senses.append(sense)
        rhs.append(b)
        return len(rhs) - 1

    def put(r: int, key: tuple, coeff: float):
        j = index.get(key)
        if j is not None:
            rows_i.append(r)
            cols_i.append(j)
            vals.append(coeff)

    node_ids = [n.node_id for n in model.nodes]
    out_arcs: dict[str, list[int]] = {nid: [] for nid in node_ids}
    in_arcs: dict[str, list[int]] = {nid: [] for nid in node_ids}
    for ai, arc in enumerate(model.arcs):
        if arc.from_id in out_arcs:
            out_arcs[arc.from_id].append(ai)
        if arc.to_id in in_arcs:
            in_arcs[arc.to_id].append(ai)

    # Commodity mass balance: outflow - arriving inflow <= demand.
    for nid in node_ids:
        for t in range(T):
            for k in range(p):
                terms = []
                for ai in out_arcs[nid]:
                    if k in supports[ai] and ("xp", ai, t, k) in index:
                        terms.append((("xp", ai, t, k), 1.0))
                for ai in in_arcs[nid]:
                    td = t - model.arcs[ai].dt
                    if k in supports[ai] and ("xm", ai, td, k) in index:
                        terms.append((("xm", ai, td, k), -1.0))
                d = model.demands.get((nid, t, k), 0.0)
                if not terms and d == 0.0:
                    continue
                r = new_row(f"bal_{nid}_t{t}_{model.commodities[k].name}", SENSE_LE, d)
                for key, coeff in terms:
                    put(r, key, coeff)

    # Vehicle balance.
    for nid in node_ids:
        for t in range(T):
            terms = []
            for ai in out_arcs[nid]:
                if model.arcs[ai].allows_vehicle and ("yp", ai, t) in index:
                    terms.append((("yp", ai, t), 1.0))
            for ai in in_arcs[nid]:
                td = t - model.arcs[ai].dt
                if model.arcs[ai].allows_vehicle and ("ym", ai, td) in index:
                    terms.append((("ym", ai, td), -1.0))
            supply = model.vehicle_supply.get((nid, t), 0.0)
            if not terms and supply == 0.0:
                continue
            r = new_row(f"veh_{nid}_t{t}", SENSE_LE, supply)
            for key, coeff in terms:
                put(r, key, coeff)

    # Flow transformation: [x_in; s y_in] = Q [x_out; s y_out].
    for ai, arc in enumerate(model.arcs):
        sup = supports[ai]
        for t in _arc_steps(arc, T):
            for k in sup:
                r = new_row(f"tr_{ai}_t{t}_{model.commodities[k].name}", SENSE_EQ, 0.0)
                put(r, ("xm", ai, t, k), 1.0)
                for k2 in sup:
                    q = arc.Q[k, k2]
                    if q != 0.0:
                        put(r, ("xp", ai, t, k2), -q)
                if arc.allows_vehicle and arc.Q[k, p] != 0.0:
                    put(r, ("yp", ai, t), -arc.Q[k, p] * s_v)
            if arc.allows_vehicle:
                r = new_row(f"tr_{ai}_t{t}_vehicle", SENSE_EQ, 0.0)
                put(r, ("ym", ai, t), s_v)
                for k2 in sup:
                    q = arc.Q[p, k2]
                    if q != 0.0:
                        put(r, ("xp", ai, t, k2), -q)
                put(r, ("yp", ai, t), -arc.Q[p, p] * s_v)

    # Concurrency: H x_out <= e_v y_out.
    for ai, arc in enumerate(model.arcs):
        if arc.H is None:
            continue
        sup = supports[ai]
        for t in _arc_steps(arc, T):
            for li in range(arc.H.shape[0]):
                coeffs = [(k, arc.H[li, k]) for k in sup if arc.H[li, k] != 0.0]
                if not coeffs:
                    continue
                r = new_row(f"cap_{ai}_t{t}_l{li}", SENSE_LE, 0.0)
                for k, h in coeffs:
                    put(r, ("xp", ai, t, k), h)
                put(r, ("yp", ai, t), -float(arc.h_caps[li]))

    # Routing: each debris node is visited at most once over the horizon.
    for nid in model.debris_ids:
        r = new_row(f"visit_{nid}", SENSE_LE, 1.0)
        for ai in in_arcs[nid]:
            arc = model.arcs[ai]
            if arc.kind is ArcKind.FLIGHT:
                for t in _arc_steps(arc, T):
                    put(r, ("ym", ai, t), 1.0)

    n = len(var_names)
    A = csr_matrix(
        (np.array(vals), (np.array(rows_i, dtype=np.int64), np.array(cols_i, dtype=np.int64))),
        shape=(len(rhs), n),
    )
    return MilpProblem(
        model=model,
        var_names=var_names,
        lb=np.array(lbs),
        ub=np.array(ubs),
        is_integer=np.array(ints, dtype=bool),
        objective=np.array(objs),
        A=A,
        senses=senses,
        rhs=np.array(rhs),
        row_names=row_names,
        var_index=index,
    )


def write_lp(problem: MilpProblem, out=None) -> str:
    """Serialize to CPLEX LP format (minimization)."""
    buf = io.StringIO()
    buf.write("\\ debrisplan MILP export\n")
    buf.write("Minimize\n obj:")
    written = 0
    for j, coef in enumerate(problem.objective):
        if coef == 0.0:
            continue
        buf.write(f" {'+' if coef >= 0 else '-'} {abs(coef):.10g} {problem.var_names[j]}")
        written += 1
        if written % 6 == 0:
            buf.write("\n     ")
    if written == 0:
        buf.write(" 0 " + (problem.var_names[0] if problem.var_names else "x0"))
    buf.write("\nSubject To\n")
    A = problem.A.tocsr()
    for r in range(problem.n_rows):
        start, end = A.indptr[r], A.indptr[r + 1]
        buf.write(f" {problem.row_names[r]}:")
        for pos in range(start, end):
            coef = A.data[pos]
            buf.write(f" {'+' if coef >= 0 else '-'} {abs(coef):.10g} {problem.var_names[A.indices[pos]]}")
        op = "<=" if problem.senses[r] == SENSE_LE else "="
        buf.write(f" {op} {problem.rhs[r]:.10g}\n")
    buf.write("Bounds\n")
    for j in range(problem.n_vars):
        lo, hi = problem.lb[j], problem.ub[j]
        if np.isinf(hi):
            if lo != 0.0:
                buf.write(f" {problem.var_names[j]} >= {lo:.10g}\n")
        else:
            buf.write(f" {lo:.10g} <= {problem.var_names[j]} <= {hi:.10g}\n")
    ints = [problem.var_names[j] for j in range(problem.n_vars) if problem.is_integer[j]]
    if ints:
        buf.write("Generals\n")
        for i in range(0, len(ints), 8):
            buf.write(" " + " ".join(ints[i : i + 8]) + "\n")
    buf.write("End\n")
    text = buf.getvalue()
    if out is not None:
        out.write(text)
    return text
