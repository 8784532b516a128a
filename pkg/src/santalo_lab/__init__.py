"""Numerical laboratory for generalized Blaschke-Santalo inequalities.

Modules
-------
geometry    direction and Cartesian grids, star bodies, gauges, measures, quadrature
costs       multi-marginal cost families and their structural checks
transforms  c-Legendre and c-polar transforms, best-response sweeps, homogeneous lifts
functional  the BS functional, exponent systems, admissibility and stationarity
transport   exact and entropic multi-marginal transport, monotonicity and certificates
sphere      the reduction of homogeneous tuples to profiles on the sphere
symmetrize  Steiner-type symmetrization of admissible body tuples
cli         experiment runner (``santalo-lab``)
"""

__version__ = "0.1.0"
