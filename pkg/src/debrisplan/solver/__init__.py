"""Exact MILP solving for the logistics network.

``formulate`` turns a :class:`~debrisplan.network.NetworkModel` into an
explicit mixed-integer linear program, ``solve`` runs the bundled
branch-and-bound over LP relaxations, ``enumerate_routes`` is the
independent exhaustive oracle used for verification, and ``check_plan``
re-validates any plan against the network constraints.
"""

from .milp import MilpProblem, formulate, write_lp
from .plan import MissionPlan, SolveOptions, cost_curve, solve
from .oracle import enumerate_routes
from .checker import check_plan

__all__ = [
    "MilpProblem",
    "MissionPlan",
    "SolveOptions",
    "check_plan",
    "cost_curve",
    "enumerate_routes",
    "formulate",
    "solve",
    "write_lp",
]
