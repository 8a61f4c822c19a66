"""Numerical laboratory for the prescribed mean curvature (PMC) inverse source problem.

Modules
-------
mesh          disk triangulations and boundary functions
forward       PMC flux, Newton solver, manufactured sources
dnmap         Dirichlet-to-Neumann map and its finite-difference derivatives
linearization metric, Schrodinger potential, second linearization, gauges
jets          boundary jets from Cauchy data
cgo           complex geometrical optics solutions on a uniform grid
inverse       sensitivities, adjoints and Gauss-Newton source recovery
formats, config, experiments, cli   I/O and orchestration
"""
from .kernels import BACKEND
from .mesh import BoundaryFunction, Mesh, generate_disk_mesh

__version__ = "0.1.0"

__all__ = ["BACKEND", "BoundaryFunction", "Mesh", "generate_disk_mesh", "__version__"]
