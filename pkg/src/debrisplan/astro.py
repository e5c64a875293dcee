"""One-way transfer delta-v between circular orbit nodes.

All transfers are impulsive and composed from three primitives, following the
mission assumptions: a two-burn Hohmann altitude change, a plane change
executed at the higher of the two altitudes, and a co-orbital phasing
rendezvous.  A phasing burn is only charged when origin and destination share
the same altitude; any altitude change absorbs the argument-of-latitude
matching into a free wait in the initial orbit.  RAAN differences are
likewise absorbed by waiting and never cost delta-v.

Reentry disposal orbits are modeled as matching the inclination of whichever
node they are paired with, so transfers to or from a disposal node carry no
plane-change component, and drops onto a disposal orbit need no phasing.
Controlled-reentry drops append the small reentry initiation burn.
"""

from __future__ import annotations

import io
import math
from dataclasses import dataclass, field

import numpy as np

from .catalog import Catalog, NodeRole, OrbitNode, PhysicalConstants
from .errors import NoFeasiblePhasing, NonPositiveRadius

REENTRY_INITIATION_DV_KMS = 0.0005  # 0.5 m/s to start the controlled reentry

COMPONENT_LABELS = (
    "hohmann_burn1",
    "hohmann_burn2",
    "plane_change",
    "phasing",
    "reentry_initiation",
)

# Altitudes closer than this count as "the same orbit" for phasing purposes.
SAME_ALTITUDE_TOL_KM = 1e-9


@dataclass(frozen=True)
class PhasingConfig:
    """Knobs for the co-orbital phasing rendezvous search.

    ``mode`` selects when a phasing burn is charged on a transfer:
    ``auto`` (only for equal-altitude pairs, the mission assumption),
    ``always`` (every non-disposal destination) or ``never``.
    """

    dphi_deg: float = 180.0
    k_max: int = 4
    t_max_s: float = 8.0 * 3600.0
    perigee_floor_km: float = 200.0
    mode: str = "auto"

    def __post_init__(self):
        if self.mode not in ("auto", "always", "never"):
            raise ValueError(f"unknown phasing mode {self.mode!r}")


@dataclass(frozen=True)
class TransferResult:
    total_dv_kms: float
    components: tuple[tuple[str, float], ...]
    transfer_time_s: float

    def component(self, label: str) -> float:
        for name, value in self.components:
            if name == label:
                return value
        return 0.0


def hohmann(r1_km: float, r2_km: float, mu: float) -> tuple[float, float, float]:
    """Two-burn Hohmann transfer between circular orbits of radius r1 and r2.

    Returns (dv1, dv2, transfer_time) with both burn magnitudes >= 0 and the
    time equal to the transfer-ellipse half period.
    """
    if r1_km <= 0 or r2_km <= 0:
        raise NonPositiveRadius(f"radii must be positive, got {r1_km}, {r2_km}")
    a_t = 0.5 * (r1_km + r2_km)
    v1 = math.sqrt(mu / r1_km)
    v2 = math.sqrt(mu / r2_km)
    dv1 = abs(v1 * (math.sqrt(2.0 * r2_km / (r1_km + r2_km)) - 1.0))
    dv2 = abs(v2 * (1.0 - math.sqrt(2.0 * r1_km / (r1_km + r2_km))))
    t = math.pi * math.sqrt(a_t**3 / mu)
    return dv1, dv2, t


def plane_change(v_circ_kms: float, delta_i_deg: float) -> float:
    """Impulsive plane rotation at circular speed ``v_circ``."""
    return 2.0 * v_circ_kms * abs(math.sin(math.radians(delta_i_deg) / 2.0))


def phasing_rendezvous(
    radius_km: float,
    dphi_deg: float,
    k_max: int = 4,
    t_max_s: float = 8.0 * 3600.0,
    mu: float = PhysicalConstants().mu_km3_s2,
    perigee_floor_km: float = 200.0,
    earth_radius_km: float = PhysicalConstants().earth_radius_km,
) -> tuple[float, float]:
    """Cheapest co-orbital phasing maneuver closing a phase gap of ``dphi``.

    The target leads the chaser by ``dphi`` on the same circular orbit.  The
    chaser enters a phasing ellipse with two equal burns; candidates allow
    the target k_initial in 1..k_max revolutions of the initial orbit while
    the chaser flies k_transfer in 1..k_max revolutions of the phasing orbit.
    Returns (delta_v, maneuver_time) for the cheapest candidate whose total
    time stays within ``t_max_s`` and whose phasing ellipse does not dip
    below the perigee floor.
    """
    dphi = math.radians(dphi_deg % 360.0)
    if dphi == 0.0:
        return 0.0, 0.0
    n = math.sqrt(mu / radius_km**3)
    v_circ = math.sqrt(mu / radius_km)
    floor_radius = earth_radius_km + perigee_floor_km

    best: tuple[float, float] | None = None
    for k_initial in range(1, k_max + 1):
        t_rdv = (2.0 * math.pi * k_initial - dphi) / n
        if t_rdv > t_max_s:
            continue
        for k_transfer in range(1, k_max + 1):
            t_phase = t_rdv / k_transfer
            a_phase = (mu * (t_phase / (2.0 * math.pi)) ** 2) ** (1.0 / 3.0)
            # The burn point is an apse of the phasing ellipse; the opposite
            # apse must clear the floor.
            other_apse = 2.0 * a_phase - radius_km
            if other_apse < floor_radius:
                continue
            v_burn_sq = mu * (2.0 / radius_km - 1.0 / a_phase)
            if v_burn_sq <= 0.0:
                continue
            dv = 2.0 * abs(math.sqrt(v_burn_sq) - v_circ)
            cand = (dv, t_rdv)
            if best is None or cand < best:
                best = cand
    if best is None:
        raise NoFeasiblePhasing(
            f"no phasing candidate within {t_max_s:.0f} s and above the "
            f"{perigee_floor_km:.0f} km perigee floor (dphi={dphi_deg} deg, "
            f"r={radius_km:.1f} km)"
        )
    return best


def _is_disposal(node: OrbitNode) -> bool:
    return node.role in (NodeRole.DISPOSAL_UNCONTROLLED, NodeRole.DISPOSAL_CONTROLLED)


def transfer(
    a: OrbitNode,
    b: OrbitNode,
    constants: PhysicalConstants = PhysicalConstants(),
    phasing: PhasingConfig = PhasingConfig(),
) -> TransferResult:
    """One-way transfer from node ``a`` to node ``b``."""
    if a.node_id == b.node_id:
        raise ValueError("transfer endpoints must differ")
    if b.role is NodeRole.EARTH:
        raise ValueError("no arcs into the Earth node")
    # Launches are priced per kilogram, not as a propulsive transfer.
    if a.role is NodeRole.EARTH:
        return TransferResult(0.0, tuple((lbl, 0.0) for lbl in COMPONENT_LABELS), 0.0)

    mu = constants.mu_km3_s2
    r1 = a.radius_km(constants)
    r2 = b.radius_km(constants)
    dv1, dv2, t_hohmann = hohmann(r1, r2, mu)

    # Disposal orbits adopt the plane of the opposing node.
    if _is_disposal(a) or _is_disposal(b):
        delta_i = 0.0
    else:
        delta_i = abs(a.inclination_deg - b.inclination_deg)
    dv_plane = plane_change(math.sqrt(mu / max(r1, r2)), delta_i)

    same_altitude = abs(r1 - r2) <= SAME_ALTITUDE_TOL_KM
    if same_altitude:
        dv1 = dv2 = 0.0
        t_hohmann = 0.0
    want_phasing = not _is_disposal(b) and (
        phasing.mode == "always" or (phasing.mode == "auto" and same_altitude)
    )
    if want_phasing and phasing.dphi_deg % 360.0 != 0.0:
        dv_phase, t_phase = phasing_rendezvous(
            r2,
            phasing.dphi_deg,
            k_max=phasing.k_max,
            t_max_s=phasing.t_max_s,
            mu=mu,
            perigee_floor_km=phasing.perigee_floor_km,
            earth_radius_km=constants.earth_radius_km,
        )
    else:
        dv_phase, t_phase = 0.0, 0.0

    dv_reentry = REENTRY_INITIATION_DV_KMS if b.role is NodeRole.DISPOSAL_CONTROLLED else 0.0

    components = (
        ("hohmann_burn1", dv1),
        ("hohmann_burn2", dv2),
        ("plane_change", dv_plane),
        ("phasing", dv_phase),
        ("reentry_initiation", dv_reentry),
    )
    total = dv1 + dv2 + dv_plane + dv_phase + dv_reentry
    return TransferResult(total, components, t_hohmann + t_phase)


@dataclass
class DeltaVMatrix:
    """Dense one-way transfer costs; ``dv[i, j]`` is from node j to node i."""

    node_ids: list[str]
    dv: np.ndarray
    transfer_time_s: np.ndarray
    _index: dict[str, int] = field(init=False, repr=False)

    def __post_init__(self):
        self._index = {nid: i for i, nid in enumerate(self.node_ids)}

    def get(self, from_id: str, to_id: str) -> float:
        return float(self.dv[self._index[to_id], self._index[from_id]])

    def time(self, from_id: str, to_id: str) -> float:
        return float(self.transfer_time_s[self._index[to_id], self._index[from_id]])

    def to_csv(self) -> str:
        """Matrix CSV: one row per destination node, one column per origin."""
        out = io.StringIO()
        out.write("to_id\\from_id," + ",".join(self.node_ids) + "\n")
        for i, nid in enumerate(self.node_ids):
            row = ",".join(f"{self.dv[i, j]:.6f}" for j in range(len(self.node_ids)))
            out.write(f"{nid},{row}\n")
        return out.getvalue()


def build_matrix(catalog: Catalog, phasing: PhasingConfig = PhasingConfig()) -> DeltaVMatrix:
    """All ordered node pairs.  Earth rows/columns and the diagonal are zero."""
    nodes = catalog.nodes
    ids = [n.node_id for n in nodes]
    m = len(nodes)
    dv = np.zeros((m, m))
    times = np.zeros((m, m))
    for j, src in enumerate(nodes):
        for i, dst in enumerate(nodes):
            if i == j or dst.role is NodeRole.EARTH:
                continue
            res = transfer(src, dst, catalog.constants, phasing)
            dv[i, j] = res.total_dv_kms
            times[i, j] = res.transfer_time_s
    return DeltaVMatrix(node_ids=ids, dv=dv, transfer_time_s=times)


def fuel_fraction(dv_kms: float, isp_s: float, g0_m_s2: float = PhysicalConstants().g0_m_s2) -> float:
    """Fraction of departing wet mass burned for an impulsive ``dv``."""
    if dv_kms < 0:
        raise ValueError("delta-v must be non-negative")
    ve_kms = isp_s * g0_m_s2 / 1000.0
    return 1.0 - math.exp(-dv_kms / ve_kms)
