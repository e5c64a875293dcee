"""Exception hierarchy shared across the package."""

from __future__ import annotations


class DebrisPlanError(Exception):
    """Base class for all package errors."""


class ConfigError(DebrisPlanError):
    """A config file is malformed or references unknown keys."""


class CatalogError(DebrisPlanError):
    """A catalog file failed validation.

    ``row`` is the 1-based data row (header excluded) when known; ``field``
    names the offending column.
    """

    def __init__(self, message: str, row: int | None = None, field: str | None = None):
        super().__init__(message)
        self.row = row
        self.field = field


class MissingColumn(CatalogError):
    pass


class NonNumericField(CatalogError):
    pass


class DuplicateRanking(CatalogError):
    pass


class SunSyncInfeasible(DebrisPlanError):
    """No sun-synchronous inclination exists at the requested altitude."""


class NonPositiveRadius(DebrisPlanError):
    """A transfer endpoint lies at or below the minimum admissible radius."""


class NoFeasiblePhasing(DebrisPlanError):
    """Every phasing candidate violates the time bound or the perigee floor."""


class InfeasibleCapacity(DebrisPlanError):
    """No single-debris round trip fits the vehicle propellant capacity."""


class SolverError(DebrisPlanError):
    pass


class Infeasible(SolverError):
    """The optimization problem admits no feasible solution."""


class Unbounded(SolverError):
    """The optimization problem is unbounded below."""


class TimeLimitReached(SolverError):
    """Branch and bound hit its time limit before proving optimality.

    Carries the best incumbent plan found (may be ``None``) and the proven
    lower ``bound`` on the optimum.
    """

    def __init__(self, message: str, incumbent=None, bound: float | None = None):
        super().__init__(message)
        self.incumbent = incumbent
        self.bound = bound


class TooLarge(DebrisPlanError):
    """The instance exceeds the route-enumeration oracle's size guard."""


class InfeasibleBargain(DebrisPlanError):
    """Total benefit never covers mission cost; no bargaining space exists."""
