"""Time-expanded multi-commodity network construction.

A scenario network has one location node per orbit (Earth, one depot, the
first ``d`` debris objects, and for the reentry methods one disposal orbit),
replicated over ``T`` time steps.  Commodities are the ``d`` individual
debris objects (integer units) plus propellant (continuous kilograms).  Every
maneuver fits within a single time step.

Arcs come in three kinds:

* ``FLIGHT``   - the servicer flies between orbits; propellant burns via the
  arc's transformation matrix ``Q``, and the concurrency matrix ``H`` caps
  what fits aboard (tank capacity, one debris slot).
* ``HOLDOVER`` - commodities (or an idle vehicle) stay put for one step.
* ``SUPPLY``   - priced propellant enters from the market: purchased on Earth
  at the commodity price, or delivered pre-positioned at the depot at the
  commodity price plus launch cost per kilogram.

Each debris commodity is supplied once at its origin at t=0 and demanded at
the method's sink at the final step; the single vehicle is supplied on Earth
at t=0.
"""

from __future__ import annotations

import enum
import io
import math
from dataclasses import dataclass, field, replace

import numpy as np

from .astro import DeltaVMatrix, fuel_fraction
from .catalog import (
    DEPOT_AVG_ID,
    DEPOT_SUNSYNC_ID,
    DISPOSAL_CONTROLLED_ID,
    DISPOSAL_UNCONTROLLED_ID,
    EARTH_NODE_ID,
    Catalog,
    NodeRole,
    OrbitNode,
)
from .errors import InfeasibleCapacity

SUPPLY_SOURCE_ID = "_market"


class Method(enum.Enum):
    CONTROLLED = "controlled"
    UNCONTROLLED = "uncontrolled"
    RECYCLING = "recycling"

    @property
    def depot_id(self) -> str:
        return DEPOT_AVG_ID if self is Method.RECYCLING else DEPOT_SUNSYNC_ID

    @property
    def sink_id(self) -> str:
        if self is Method.CONTROLLED:
            return DISPOSAL_CONTROLLED_ID
        if self is Method.UNCONTROLLED:
            return DISPOSAL_UNCONTROLLED_ID
        return DEPOT_AVG_ID


class ArcKind(enum.Enum):
    FLIGHT = "flight"
    HOLDOVER = "holdover"
    SUPPLY = "supply"


@dataclass(frozen=True)
class Vehicle:
    structure_mass_kg: float = 1000.0
    propellant_capacity_kg: float = 10000.0
    debris_slots: int = 1
    isp_s: float = 420.0
    fuel_type: str = "LH2/LOX"

    def __post_init__(self):
        if self.propellant_capacity_kg != 10.0 * self.structure_mass_kg:
            raise ValueError(
                "propellant capacity must be ten times the structure mass "
                f"(got {self.propellant_capacity_kg} vs {self.structure_mass_kg})"
            )

    @property
    def capacities(self) -> np.ndarray:
        """Concurrency capacities per vehicle: [propellant kg, debris slots]."""
        return np.array([self.propellant_capacity_kg, float(self.debris_slots)])


def per_kg_propellant_price(lh2_usd_per_kg: float, lo2_usd_per_kg: float, ratio: float) -> float:
    """Blended price of one kilogram of propellant at an O2:H2 mass ratio."""
    if ratio <= 0:
        raise ValueError("O2:H2 ratio must be positive")
    return (lh2_usd_per_kg + ratio * lo2_usd_per_kg) / (1.0 + ratio)


@dataclass(frozen=True)
class CostTable:
    launch_usd_per_kg: float = 1500.0
    vehicle_usd: float = 115e6
    operation_usd_per_flight: float = 45000.0
    lh2_usd_per_kg: float = 5.94
    lo2_usd_per_kg: float = 0.09
    o2_h2_ratio: float = 5.5
    # "per_arc" charges the operation cost on every flown arc; "per_sortie"
    # only on arcs leaving Earth or the depot.
    operation_basis: str = "per_arc"

    def __post_init__(self):
        if self.operation_basis not in ("per_arc", "per_sortie"):
            raise ValueError(f"unknown operation basis {self.operation_basis!r}")

    @property
    def earth_propellant_usd_per_kg(self) -> float:
        return per_kg_propellant_price(self.lh2_usd_per_kg, self.lo2_usd_per_kg, self.o2_h2_ratio)

    @property
    def depot_propellant_usd_per_kg(self) -> float:
        return self.earth_propellant_usd_per_kg + self.launch_usd_per_kg


@dataclass(frozen=True)
class Commodity:
    name: str
    kind: str  # "debris" | "propellant"
    integer: bool
    object_node_id: str | None = None
    mass_kg: float = 0.0


@dataclass(frozen=True)
class Arc:
    kind: ArcKind
    from_id: str
    to_id: str
    dt: int
    dv_kms: float
    phi: float
    Q: np.ndarray
    H: np.ndarray | None
    h_caps: np.ndarray | None
    cost_x_usd: np.ndarray
    vehicle_cost_usd: float
    allows_vehicle: bool
    windows: frozenset[int] | None = None  # None = every step is open

    def window_open(self, t: int) -> bool:
        return self.windows is None or t in self.windows

    def key(self) -> tuple[str, str, str]:
        return (self.kind.value, self.from_id, self.to_id)


@dataclass
class NetworkModel:
    method: Method
    d: int
    nodes: list[OrbitNode]
    commodities: list[Commodity]
    arcs: list[Arc]
    horizon: int
    vehicle: Vehicle
    costs: CostTable
    demands: dict[tuple[str, int, int], float]
    vehicle_supply: dict[tuple[str, int], float]
    depot_id: str
    sink_id: str
    debris_ids: list[str]
    dv: DeltaVMatrix
    g0_m_s2: float = 9.80665
    node_index: dict[str, int] = field(init=False)

    def __post_init__(self):
        self.node_index = {n.node_id: i for i, n in enumerate(self.nodes)}

    @property
    def n_commodities(self) -> int:
        return len(self.commodities)

    @property
    def propellant_index(self) -> int:
        return self.n_commodities - 1

    def commodity_index(self, debris_node_id: str) -> int:
        for i, c in enumerate(self.commodities):
            if c.object_node_id == debris_node_id:
                return i
        raise KeyError(debris_node_id)

    def flight_arcs(self) -> list[Arc]:
        return [a for a in self.arcs if a.kind is ArcKind.FLIGHT]

    def describe(self) -> str:
        """Human-readable audit dump of arcs, Q/H matrices and demands."""
        out = io.StringIO()
        out.write(
            f"method={self.method.value} d={self.d} horizon={self.horizon} "
            f"commodities={[c.name for c in self.commodities]}\n"
        )
        for a in self.arcs:
            out.write(
                f"[{a.kind.value}] {a.from_id} -> {a.to_id} dt={a.dt} "
                f"dv={a.dv_kms:.4f} phi={a.phi:.5f} veh_cost=${a.vehicle_cost_usd:,.0f}\n"
            )
            if a.kind is ArcKind.FLIGHT:
                out.write(f"  Q=\n{np.array_str(a.Q, precision=5)}\n")
                out.write(f"  H=\n{np.array_str(a.H, precision=3)}\n")
            nz = [f"{c.name}:{a.cost_x_usd[i]}" for i, c in enumerate(self.commodities) if a.cost_x_usd[i]]
            if nz:
                out.write(f"  commodity costs: {', '.join(nz)}\n")
        for (node, t, p), val in sorted(self.demands.items()):
            out.write(f"demand {self.commodities[p].name} at ({node}, t={t}): {val:+g}\n")
        for (node, t), val in sorted(self.vehicle_supply.items()):
            out.write(f"vehicle supply at ({node}, t={t}): {val:+g}\n")
        return out.getvalue()


def _transformation_matrix(
    phi: float, debris_masses: np.ndarray, structure_mass: float
) -> np.ndarray:
    """Arc transformation acting on [debris..., propellant, structure*y].

    Debris ride unchanged; structure mass is never consumed; arriving
    propellant is what leaves minus the rocket-equation burn on the full
    departing stack.
    """
    p = len(debris_masses) + 1
    q = np.eye(p + 1)
    q[p - 1, :] = 0.0
    q[p - 1, : p - 1] = -phi * debris_masses
    q[p - 1, p - 1] = 1.0 - phi
    q[p - 1, p] = -phi
    return q


def _segment_propellant(
    legs: list[tuple[float, float]], structure_mass: float, ve_kms: float
) -> float:
    """Propellant needed at the start of a refuel-to-refuel segment.

    ``legs`` is a sequence of (delta_v, debris_mass_aboard).  Equivalent to
    chaining the per-arc transformation matrices with zero propellant left at
    the end.
    """
    total = 0.0
    growth = 1.0
    for dv, payload in legs:
        e = math.exp(dv / ve_kms)
        total += (e - 1.0) * (payload + structure_mass) * growth
        growth *= e
    return total


def _greedy_segments(
    dv: DeltaVMatrix,
    depot_id: str,
    sink_id: str,
    debris: list[OrbitNode],
    vehicle: Vehicle,
    g0_m_s2: float,
) -> list[list[str]] | None:
    """Capacity-driven segment packing for the reentry methods.

    Opens each segment at the cheapest remaining depot departure, then keeps
    appending the cheapest next target while the segment (including its
    refuel return when more work remains) still fits the tank.  Returns None
    if some object cannot be serviced even in a dedicated segment.
    """
    ve = vehicle.isp_s * g0_m_s2 / 1000.0
    cap = vehicle.propellant_capacity_kg
    s = vehicle.structure_mass_kg
    remaining = {n.node_id: n for n in debris}
    segments: list[list[str]] = []

    def seg_legs(ids: list[str], with_return: bool) -> list[tuple[float, float]]:
        legs = [(dv.get(depot_id, ids[0]), 0.0)]
        for pos, nid in enumerate(ids):
            if pos > 0:
                legs.append((dv.get(sink_id, nid), 0.0))
            legs.append((dv.get(nid, sink_id), remaining_all[nid].mass_kg or 0.0))
        if with_return:
            legs.append((dv.get(sink_id, depot_id), 0.0))
        return legs

    remaining_all = {n.node_id: n for n in debris}
    while remaining:
        start = min(remaining, key=lambda nid: (dv.get(depot_id, nid), int(nid)))
        seg = [start]
        del remaining[start]
        if _segment_propellant(seg_legs(seg, with_return=False), s, ve) > cap:
            return None
        while remaining:
            nxt = min(remaining, key=lambda nid: (dv.get(sink_id, nid), int(nid)))
            trial = seg + [nxt]
            need = _segment_propellant(seg_legs(trial, with_return=bool(len(remaining) > 1)), s, ve)
            if need > cap:
                break
            seg = trial
            del remaining[nxt]
        segments.append(seg)
    return segments


def _recycling_trip_propellant(dv: DeltaVMatrix, depot_id: str, node: OrbitNode, vehicle: Vehicle, g0: float) -> float:
    ve = vehicle.isp_s * g0 / 1000.0
    legs = [(dv.get(depot_id, node.node_id), 0.0), (dv.get(node.node_id, depot_id), node.mass_kg or 0.0)]
    return _segment_propellant(legs, vehicle.structure_mass_kg, ve)


def build_network(
    catalog: Catalog,
    dv: DeltaVMatrix,
    method: Method,
    d: int,
    vehicle: Vehicle = Vehicle(),
    costs: CostTable = CostTable(),
    *,
    horizon: int | None = None,
    allow_empty: bool = False,
    windows: dict[tuple[str, str], frozenset[int]] | None = None,
) -> NetworkModel:
    """Assemble the scenario network for remediating the first ``d`` debris.

    The default horizon is ``2 d + 4`` steps, widened automatically when the
    tank capacity forces more refuel returns than that admits (each return
    consumes one extra step).  ``windows`` optionally restricts specific
    (from, to) flight arcs to a subset of departure steps.
    """
    if d == 0:
        if allow_empty:
            return NetworkModel(
                method=method,
                d=0,
                nodes=[],
                commodities=[Commodity("propellant", "propellant", integer=False)],
                arcs=[],
                horizon=0,
                vehicle=vehicle,
                costs=costs,
                demands={},
                vehicle_supply={},
                depot_id=method.depot_id,
                sink_id=method.sink_id,
                debris_ids=[],
                dv=dv,
                g0_m_s2=catalog.constants.g0_m_s2,
            )
        raise ValueError("d must be at least 1 (pass allow_empty=True for an empty model)")
    if not 1 <= d <= len(catalog.records):
        raise ValueError(f"d must be in 1..{len(catalog.records)}, got {d}")

    g0 = catalog.constants.g0_m_s2
    earth = catalog.node(EARTH_NODE_ID)
    depot = catalog.node(method.depot_id)
    debris = [catalog.node(str(r.ranking)) for r in catalog.records[:d]]
    nodes = [earth, depot] + debris
    if method is not Method.RECYCLING:
        sink = catalog.node(method.sink_id)
        nodes.append(sink)

    # Capacity guard: at least one object must be remediable in a single
    # depot round trip.
    if method is Method.RECYCLING:
        trips = [_recycling_trip_propellant(dv, depot.node_id, n, vehicle, g0) for n in debris]
        if min(trips) > vehicle.propellant_capacity_kg:
            raise InfeasibleCapacity(
                "no debris object fits a single recycling round trip "
                f"(cheapest needs {min(trips):,.0f} kg > {vehicle.propellant_capacity_kg:,.0f} kg)"
            )
        n_segments = d
    else:
        ve = vehicle.isp_s * g0 / 1000.0
        singles = []
        for n in debris:
            legs = [
                (dv.get(depot.node_id, n.node_id), 0.0),
                (dv.get(n.node_id, method.sink_id), n.mass_kg or 0.0),
                (dv.get(method.sink_id, depot.node_id), 0.0),
            ]
            singles.append(_segment_propellant(legs, vehicle.structure_mass_kg, ve))
        if min(singles) > vehicle.propellant_capacity_kg:
            raise InfeasibleCapacity(
                "no debris object fits a single remediation round trip "
                f"(cheapest needs {min(singles):,.0f} kg > {vehicle.propellant_capacity_kg:,.0f} kg)"
            )
        segments = _greedy_segments(dv, depot.node_id, method.sink_id, debris, vehicle, g0)
        n_segments = len(segments) if segments is not None else d

    if horizon is None:
        if method is Method.RECYCLING:
            horizon = 2 * d + 4
        else:
            arcs_needed = 1 + 2 * d + (n_segments - 1)
            horizon = max(2 * d + 4, arcs_needed + 3)
    T = horizon

    commodities = [
        Commodity(
            name=f"debris_{n.node_id}",
            kind="debris",
            integer=True,
            object_node_id=n.node_id,
            mass_kg=n.mass_kg or 0.0,
        )
        for n in debris
    ]
    commodities.append(Commodity(name="propellant", kind="propellant", integer=False))
    p = len(commodities)
    prop = p - 1
    debris_masses = np.array([c.mass_kg for c in commodities[:-1]])

    op_cost = costs.operation_usd_per_flight
    windows = windows or {}

    def flight(from_id: str, to_id: str) -> Arc:
        dv_val = dv.get(from_id, to_id)
        phi = fuel_fraction(dv_val, vehicle.isp_s, g0)
        cost_x = np.zeros(p)
        veh_cost = 0.0
        if from_id == EARTH_NODE_ID:
            cost_x[prop] = costs.launch_usd_per_kg
            veh_cost += costs.vehicle_usd + costs.launch_usd_per_kg * vehicle.structure_mass_kg
        is_sortie_start = from_id in (EARTH_NODE_ID, depot.node_id)
        if costs.operation_basis == "per_arc" or is_sortie_start:
            veh_cost += op_cost
        return Arc(
            kind=ArcKind.FLIGHT,
            from_id=from_id,
            to_id=to_id,
            dt=1,
            dv_kms=dv_val,
            phi=phi,
            Q=_transformation_matrix(phi, debris_masses, vehicle.structure_mass_kg),
            H=np.vstack([np.eye(p)[prop], np.concatenate([np.ones(p - 1), [0.0]])]),
            h_caps=vehicle.capacities,
            cost_x_usd=cost_x,
            vehicle_cost_usd=veh_cost,
            allows_vehicle=True,
            windows=windows.get((from_id, to_id)),
        )

    def holdover(node_id: str) -> Arc:
        # Loose propellant can only wait where there is a facility (Earth,
        # depot); elsewhere it stays coupled to the vehicle's tank.
        if node_id in (EARTH_NODE_ID, depot.node_id):
            h, caps = None, None
        else:
            h = np.eye(p)[prop].reshape(1, p)
            caps = np.array([vehicle.propellant_capacity_kg])
        return Arc(
            kind=ArcKind.HOLDOVER,
            from_id=node_id,
            to_id=node_id,
            dt=1,
            dv_kms=0.0,
            phi=0.0,
            Q=np.eye(p + 1),
            H=h,
            h_caps=caps,
            cost_x_usd=np.zeros(p),
            vehicle_cost_usd=0.0,
            allows_vehicle=True,
        )

    def supply(node_id: str, price: float) -> Arc:
        cost_x = np.zeros(p)
        cost_x[prop] = price
        return Arc(
            kind=ArcKind.SUPPLY,
            from_id=SUPPLY_SOURCE_ID,
            to_id=node_id,
            dt=0,
            dv_kms=0.0,
            phi=0.0,
            Q=np.eye(p + 1),
            H=None,
            h_caps=None,
            cost_x_usd=cost_x,
            vehicle_cost_usd=0.0,
            allows_vehicle=False,
        )

    arcs: list[Arc] = [flight(EARTH_NODE_ID, depot.node_id)]
    for n in debris:
        arcs.append(flight(depot.node_id, n.node_id))
    if method is Method.RECYCLING:
        for n in debris:
            arcs.append(flight(n.node_id, depot.node_id))
    else:
        for n in debris:
            arcs.append(flight(n.node_id, method.sink_id))
        for n in debris:
            arcs.append(flight(method.sink_id, n.node_id))
        arcs.append(flight(method.sink_id, depot.node_id))
    for n in nodes:
        arcs.append(holdover(n.node_id))
    arcs.append(supply(EARTH_NODE_ID, costs.earth_propellant_usd_per_kg))
    arcs.append(supply(depot.node_id, costs.depot_propellant_usd_per_kg))

    demands: dict[tuple[str, int, int], float] = {}
    for i, n in enumerate(debris):
        demands[(n.node_id, 0, i)] = 1.0
        demands[(method.sink_id, T - 1, i)] = -1.0

    return NetworkModel(
        method=method,
        d=d,
        nodes=nodes,
        commodities=commodities,
        arcs=arcs,
        horizon=T,
        vehicle=vehicle,
        costs=costs,
        demands=demands,
        vehicle_supply={(EARTH_NODE_ID, 0): 1.0},
        depot_id=depot.node_id,
        sink_id=method.sink_id,
        debris_ids=[n.node_id for n in debris],
        dv=dv,
        g0_m_s2=g0,
    )
