"""Photon-number-resolved OAM correlations of a random two-mode Gaussian source.

Modules: ``source`` (mode statistics behind angular slits), ``fock`` (Fock
matrix elements), ``correlators`` (g2 and multiphoton g2), ``montecarlo``
(sampling oracle), ``synthesis`` (turbulent-field simulation) and ``cli``.
"""

__version__ = "0.1.0"
