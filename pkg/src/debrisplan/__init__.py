"""Planning and pricing of orbital-debris remediation campaigns.

The package is organized around the campaign pipeline:

* :mod:`debrisplan.catalog` ingests the debris catalog and builds orbit nodes.
* :mod:`debrisplan.astro` computes pairwise transfer delta-v.
* :mod:`debrisplan.network` assembles the time-expanded logistics network.
* :mod:`debrisplan.solver` solves the resulting MILP exactly and carries an
  independent route-enumeration oracle.
* :mod:`debrisplan.benefit` prices avoided warnings/maneuvers/collisions.
* :mod:`debrisplan.bargain` solves the two-player Nash bargaining problem.
* :mod:`debrisplan.cli` drives everything from the command line.
"""

__version__ = "0.1.0"
