"""Surface diffusion flow of curves and epitaxial films with elasticity.

Modules
-------
geometry
    Reference curves, height fields and the normal-graph geometry.
anisotropy
    Surface energy densities and the coefficient ``g(nu)``.
elasticity
    Plane-strain finite elements on the film below a periodic graph.
flow
    Semi-implicit time integration, direct and Picard elastic coupling.
stability
    Grinfeld functions, the critical thickness and decay-rate fits.
diagnostics
    Energies, dissipation checks and the interpolation property suite.
config, cli
    Configuration schema and the ``sdflow`` command.
"""

from .anisotropy import Elliptic, Isotropic, Tabulated
from .elasticity import ElasticSetup, LameMaterial, solve_film
from .flow import DtPolicy, FlowState, ForcingSpec, picard_solve, run, step
from .geometry import HeightField, ReferenceCurve
from .stability import a_stable, grinfeld_H, grinfeld_K

__version__ = "0.1.0"

__all__ = [
    "DtPolicy", "ElasticSetup", "Elliptic", "FlowState", "ForcingSpec", "HeightField",
    "Isotropic", "LameMaterial", "ReferenceCurve", "Tabulated", "a_stable", "grinfeld_H",
    "grinfeld_K", "picard_solve", "run", "solve_film", "step",
]
