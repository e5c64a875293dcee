"""Debris catalog ingestion and orbit-node construction.

The catalog is a ranked list of large debris objects with apogee, perigee,
inclination and mass.  Each record is reduced to a circular orbit at the
apse-average altitude.  On top of the 50 debris nodes the full node set adds
two refueling depots (node ``51_S`` sun-synchronous, node ``51_A`` at the
average debris inclination), two reentry disposal orbits (``52`` at 350 km,
``53`` at 50 km) and the Earth launch node ``E``.
"""

from __future__ import annotations

import csv
import enum
import io
import math
from dataclasses import dataclass, field, replace
from importlib import resources
from typing import IO, Iterable

from . import constants as k
from .errors import (
    CatalogError,
    DuplicateRanking,
    MissingColumn,
    NonNumericField,
    SunSyncInfeasible,
)

CSV_COLUMNS = ("ranking", "name", "apogee_km", "perigee_km", "incl_deg", "mass_kg")

EARTH_NODE_ID = "E"
DEPOT_SUNSYNC_ID = "51_S"
DEPOT_AVG_ID = "51_A"
DISPOSAL_UNCONTROLLED_ID = "52"
DISPOSAL_CONTROLLED_ID = "53"

DISPOSAL_UNCONTROLLED_ALT_KM = 350.0
DISPOSAL_CONTROLLED_ALT_KM = 50.0

# Apogee-minus-perigee gap beyond which a record is flagged as anomalously
# eccentric for a "circular" reduction (catches the known outlier row 27).
DEFAULT_FLAG_APSE_GAP_KM = 500.0


class NodeRole(enum.Enum):
    DEBRIS = "debris"
    DEPOT_SUNSYNC = "depot_sunsync"
    DEPOT_AVG_INCLINATION = "depot_avg_inclination"
    DISPOSAL_UNCONTROLLED = "disposal_uncontrolled"
    DISPOSAL_CONTROLLED = "disposal_controlled"
    EARTH = "earth"


@dataclass(frozen=True)
class PhysicalConstants:
    mu_km3_s2: float = k.MU_EARTH_KM3_S2
    earth_radius_km: float = k.EARTH_RADIUS_KM
    j2: float = k.J2_EARTH
    g0_m_s2: float = k.G0_M_S2


@dataclass(frozen=True)
class DebrisRecord:
    ranking: int
    name: str
    apogee_km: float
    perigee_km: float
    inclination_deg: float
    mass_kg: float
    flags: tuple[str, ...] = ()

    @property
    def circular_altitude_km(self) -> float:
        return 0.5 * (self.apogee_km + self.perigee_km)


@dataclass(frozen=True)
class OrbitNode:
    node_id: str
    altitude_km: float
    inclination_deg: float
    role: NodeRole
    mass_kg: float | None = None

    def radius_km(self, constants: PhysicalConstants = PhysicalConstants()) -> float:
        return constants.earth_radius_km + self.altitude_km


@dataclass
class Catalog:
    records: list[DebrisRecord]
    nodes: list[OrbitNode]
    constants: PhysicalConstants
    warnings: list[str] = field(default_factory=list)

    def node(self, node_id: str) -> OrbitNode:
        for n in self.nodes:
            if n.node_id == node_id:
                return n
        raise KeyError(node_id)

    @property
    def debris_nodes(self) -> list[OrbitNode]:
        return [n for n in self.nodes if n.role is NodeRole.DEBRIS]


def circularize(record: DebrisRecord) -> OrbitNode:
    """Reduce a record to a circular orbit at the apse-average altitude."""
    return OrbitNode(
        node_id=str(record.ranking),
        altitude_km=record.circular_altitude_km,
        inclination_deg=record.inclination_deg,
        role=NodeRole.DEBRIS,
        mass_kg=record.mass_kg,
    )


def sun_sync_inclination_deg(
    altitude_km: float, constants: PhysicalConstants = PhysicalConstants()
) -> float:
    """Inclination whose J2 nodal regression matches one rotation per tropical year.

    Solves  dRAAN/dt = -(3/2) n J2 (Re/a)^2 cos(i)  =  +360 deg / 365.2422 d
    for a circular orbit of the given altitude.
    """
    a = constants.earth_radius_km + altitude_km
    n = math.sqrt(constants.mu_km3_s2 / a**3)
    cos_i = -k.SUN_SYNC_NODAL_RATE_RAD_S / (
        1.5 * n * constants.j2 * (constants.earth_radius_km / a) ** 2
    )
    if abs(cos_i) > 1.0:
        raise SunSyncInfeasible(
            f"no sun-synchronous inclination exists at {altitude_km:.1f} km "
            f"(required cos i = {cos_i:.4f})"
        )
    return math.degrees(math.acos(cos_i))


def place_depots(
    records: Iterable[DebrisRecord], constants: PhysicalConstants = PhysicalConstants()
) -> tuple[OrbitNode, OrbitNode]:
    """Position the two depots from the debris population averages.

    ``51_S`` sits at the mean circular debris altitude with the
    sun-synchronous inclination for that altitude.  ``51_A`` sits at the same
    mean altitude with the mean debris inclination.
    """
    recs = list(records)
    if not recs:
        raise CatalogError("cannot place depots for an empty record list")
    mean_alt = sum(r.circular_altitude_km for r in recs) / len(recs)
    mean_inc = sum(r.inclination_deg for r in recs) / len(recs)
    sun_sync = OrbitNode(
        node_id=DEPOT_SUNSYNC_ID,
        altitude_km=mean_alt,
        inclination_deg=sun_sync_inclination_deg(mean_alt, constants),
        role=NodeRole.DEPOT_SUNSYNC,
    )
    avg = OrbitNode(
        node_id=DEPOT_AVG_ID,
        altitude_km=mean_alt,
        inclination_deg=mean_inc,
        role=NodeRole.DEPOT_AVG_INCLINATION,
    )
    return sun_sync, avg


def _validate_row(raw: dict[str, str], row_num: int) -> DebrisRecord:
    values: dict[str, float] = {}
    for col in ("ranking", "apogee_km", "perigee_km", "incl_deg", "mass_kg"):
        text = (raw.get(col) or "").strip()
        if not text:
            raise NonNumericField(
                f"row {row_num}: empty value in column '{col}'", row=row_num, field=col
            )
        try:
            values[col] = float(text)
        except ValueError:
            raise NonNumericField(
                f"row {row_num}: non-numeric value {text!r} in column '{col}'",
                row=row_num,
                field=col,
            ) from None
    ranking = int(values["ranking"])
    if ranking != values["ranking"] or ranking < 1:
        raise NonNumericField(
            f"row {row_num}: ranking must be a positive integer, got {raw['ranking']!r}",
            row=row_num,
            field="ranking",
        )
    if values["mass_kg"] <= 0:
        raise NonNumericField(
            f"row {row_num}: mass must be positive", row=row_num, field="mass_kg"
        )
    if not 0.0 <= values["incl_deg"] <= 180.0:
        raise NonNumericField(
            f"row {row_num}: inclination outside [0, 180]", row=row_num, field="incl_deg"
        )
    return DebrisRecord(
        ranking=ranking,
        name=(raw.get("name") or "").strip(),
        apogee_km=values["apogee_km"],
        perigee_km=values["perigee_km"],
        inclination_deg=values["incl_deg"],
        mass_kg=values["mass_kg"],
    )


def _flag_record(record: DebrisRecord, flag_apse_gap_km: float) -> DebrisRecord:
    flags = []
    if record.apogee_km < record.perigee_km:
        flags.append("apogee_below_perigee")
    elif record.apogee_km - record.perigee_km > flag_apse_gap_km:
        flags.append("apogee_anomalously_high")
    return replace(record, flags=tuple(flags)) if flags else record


def parse_catalog(
    source: bytes | str | IO,
    *,
    exclude_flagged: bool = False,
    flag_apse_gap_km: float = DEFAULT_FLAG_APSE_GAP_KM,
    constants: PhysicalConstants = PhysicalConstants(),
) -> Catalog:
    """Parse a catalog CSV and build the full node set.

    Data-quality oddities (apogee below perigee, or an apse gap wide enough
    to make the circular reduction dubious) are flagged and reported through
    ``Catalog.warnings``; rows are never silently edited.  With
    ``exclude_flagged`` the flagged rows are dropped before node
    construction, in which case rankings need not stay contiguous.
    """
    if isinstance(source, bytes):
        text = source.decode("utf-8")
    elif isinstance(source, str):
        text = source
    else:
        data = source.read()
        text = data.decode("utf-8") if isinstance(data, bytes) else data

    reader = csv.DictReader(io.StringIO(text))
    header = reader.fieldnames or []
    missing = [c for c in CSV_COLUMNS if c not in header]
    if missing:
        raise MissingColumn(f"missing column(s): {', '.join(missing)}", field=missing[0])

    records: list[DebrisRecord] = []
    seen: dict[int, int] = {}
    for row_num, raw in enumerate(reader, start=1):
        rec = _validate_row(raw, row_num)
        if rec.ranking in seen:
            raise DuplicateRanking(
                f"row {row_num}: ranking {rec.ranking} already used in row {seen[rec.ranking]}",
                row=row_num,
                field="ranking",
            )
        seen[rec.ranking] = row_num
        records.append(_flag_record(rec, flag_apse_gap_km))
    if not records:
        raise MissingColumn("catalog has a header but no data rows")

    records.sort(key=lambda r: r.ranking)
    warnings = [
        f"row ranking {r.ranking} ({r.name}): {flag}" for r in records for flag in r.flags
    ]
    if exclude_flagged:
        records = [r for r in records if not r.flags]
        if not records:
            raise CatalogError("all records were flagged and excluded")
    else:
        expected = list(range(1, len(records) + 1))
        if [r.ranking for r in records] != expected:
            raise DuplicateRanking(
                "ranking values must be contiguous from 1", field="ranking"
            )

    depot_s, depot_a = place_depots(records, constants)
    nodes = [circularize(r) for r in records]
    nodes.append(depot_s)
    nodes.append(depot_a)
    nodes.append(
        OrbitNode(
            node_id=DISPOSAL_UNCONTROLLED_ID,
            altitude_km=DISPOSAL_UNCONTROLLED_ALT_KM,
            inclination_deg=math.nan,  # matches the opposing node's plane
            role=NodeRole.DISPOSAL_UNCONTROLLED,
        )
    )
    nodes.append(
        OrbitNode(
            node_id=DISPOSAL_CONTROLLED_ID,
            altitude_km=DISPOSAL_CONTROLLED_ALT_KM,
            inclination_deg=math.nan,
            role=NodeRole.DISPOSAL_CONTROLLED,
        )
    )
    nodes.append(
        OrbitNode(node_id=EARTH_NODE_ID, altitude_km=0.0, inclination_deg=0.0, role=NodeRole.EARTH)
    )
    return Catalog(records=records, nodes=nodes, constants=constants, warnings=warnings)


def serialize_catalog(catalog: Catalog) -> str:
    """Render the parsed records back to the canonical CSV form."""
    out = io.StringIO()
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(CSV_COLUMNS)

    def fmt(x: float) -> str:
        return f"{x:g}"

    for r in catalog.records:
        writer.writerow(
            [r.ranking, r.name, fmt(r.apogee_km), fmt(r.perigee_km), fmt(r.inclination_deg), fmt(r.mass_kg)]
        )
    return out.getvalue()


def load_bundled_catalog(**kwargs) -> Catalog:
    """Parse the packaged top-50 catalog."""
    data = resources.files("debrisplan.data").joinpath("debris_top50.csv").read_bytes()
    return parse_catalog(data, **kwargs)
