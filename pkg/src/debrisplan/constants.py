"""Bundled physical constants (km / kg / s unless suffixed otherwise)."""

MU_EARTH_KM3_S2 = 398600.4418
EARTH_RADIUS_KM = 6378.137
J2_EARTH = 1.0826e-3
G0_M_S2 = 9.80665

SECONDS_PER_DAY = 86400.0
TROPICAL_YEAR_DAYS = 365.2422
# One calendar evaluation year for encounter rates.
JULIAN_YEAR_S = 365.25 * SECONDS_PER_DAY

# Sun-synchronous orbits precess the node once per tropical year, eastward.
SUN_SYNC_NODAL_RATE_RAD_S = 2.0 * 3.141592653589793 / (TROPICAL_YEAR_DAYS * SECONDS_PER_DAY)
