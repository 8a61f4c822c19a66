"""Dirichlet-to-Neumann map of the PMC equation and its finite-difference derivatives.

The boundary flux is computed variationally: the weak residual is tested
with boundary hat functions and divided by the boundary mass matrix, which
gives the conormal flux ``c = nu . F(grad u)``. The DN output is the normal
derivative ``n = d_nu u``, recovered pointwise from ``c`` and the tangential
derivative ``t = d_tau f`` of the Dirichlet data through

    c = n / sqrt(1 + t^2 + n^2)   <=>   n = c sqrt((1 + t^2) / (1 - c^2)).

Because every step is a smooth function of the nodal solution, the discrete
map is exactly differentiable, and the linearized solvers in
``pmclab.linearization`` reproduce its derivatives to round-off.
"""
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse.linalg as spla

from . import fem
from .fields import nodal
from .forward import pmc_residual, solve_pmc
from .mesh import BoundaryFunction, boundary_frame, tangential_derivative


@dataclass(frozen=True, eq=False)
class CauchyDataPair:
    dirichlet: BoundaryFunction
    neumann: BoundaryFunction


@dataclass(eq=False)
class DNDataset:
    """Base value ``f0``, Cauchy pairs for ``f0 + f_i``, and the source trace.

    ``pairs[0]`` is the base pair ``(f0, Lambda f0)``; ``directions[i]`` is
    the perturbation of ``pairs[i + 1]``.
    """

    level: int
    f0: BoundaryFunction
    H_trace: BoundaryFunction
    directions: list = field(default_factory=list)
    pairs: list = field(default_factory=list)


@dataclass(eq=False)
class BoundaryState:
    """Boundary quantities of a solved PMC state."""

    u: np.ndarray
    conormal: np.ndarray
    dtau: np.ndarray
    dnu: np.ndarray


def boundary_gradient(mesh, dtau, dnu):
    """Cartesian gradient (Nb, 2) from tangential and normal components."""
    tangent, normal = boundary_frame(mesh)
    return np.asarray(dtau)[:, None] * tangent + np.asarray(dnu)[:, None] * normal


def _bmass_lu(mesh):
    return spla.splu(fem.boundary_mass(mesh).tocsc())


def conormal_to_normal(c, t):
    """Normal derivative from PMC conormal flux ``c`` and tangential derivative ``t``."""
    c = np.asarray(c, float)
    t = np.asarray(t, float)
    return c * np.sqrt((1.0 + t * t) / (1.0 - c * c))


def normal_from_conormal_linear(c, t, A_b, mesh):
    """``d_nu v`` from conormal ``c = nu . A grad v`` given boundary tensors ``A_b``."""
    tangent, normal = boundary_frame(mesh)
    a_nn = np.einsum("ia,iab,ib->i", normal, A_b, normal)
    a_nt = np.einsum("ia,iab,ib->i", normal, A_b, tangent)
    return (np.asarray(c) - a_nt * np.asarray(t)) / a_nn


def pmc_conormal(mesh, u, H):
    """Variational conormal flux ``nu . F(grad u)`` at boundary nodes."""
    res, _ = pmc_residual(mesh, nodal(u), fem.mass(mesh) @ nodal(H), with_jacobian=False)
    return _bmass_lu(mesh).solve(res[mesh.boundary_nodes])


def neumann_trace(mesh, u, coefficient="pmc", source=None, convention="normal"):
    """Boundary flux of ``u``.

    Parameters
    ----------
    coefficient : "pmc", None or MetricField
        "pmc": nonlinear flux ``F(grad u)`` with source ``source`` (H).
        None: Laplacian. MetricField: ``div(A grad u) = source``.
    convention : "normal" (d_nu u, default) or "conormal".
    """
    s = None if source is None else nodal(source)
    t = tangential_derivative(BoundaryFunction.trace(mesh, nodal(u)), 1).values
    if isinstance(coefficient, str) and coefficient == "pmc":
        c = pmc_conormal(mesh, u, np.zeros(mesh.n_nodes) if s is None else s)
        out = c if convention == "conormal" else conormal_to_normal(c, t)
        return BoundaryFunction(out)
    if coefficient is None:
        K = fem.stiffness(mesh)
        A_b = np.broadcast_to(np.eye(2), (mesh.n_boundary, 2, 2))
    else:
        K = fem.stiffness(mesh, coefficient.A)
        A_b = coefficient.boundary_tensor(mesh)
    load = None if s is None else fem.mass(mesh) @ s
    c = fem.variational_flux(mesh, K, nodal(u), load, _bmass_lu(mesh))
    if convention == "conormal":
        return BoundaryFunction(c)
    return BoundaryFunction(normal_from_conormal_linear(c, t, A_b, mesh))


def solve_state(mesh, H, f, opts=None):
    """Solve the PMC problem and collect boundary quantities."""
    u, report = solve_pmc(mesh, H, f, opts)
    c = pmc_conormal(mesh, u.values, H)
    t = tangential_derivative(BoundaryFunction(nodal(f)), 1).values
    return BoundaryState(u=u.values, conormal=c, dtau=t, dnu=conormal_to_normal(c, t)), report


def dn_apply(mesh, H, f, opts=None):
    """``(f, Lambda_H f)`` with ``Lambda_H f = d_nu u_f``."""
    state, _ = solve_state(mesh, H, f, opts)
    return CauchyDataPair(dirichlet=BoundaryFunction(nodal(f)), neumann=BoundaryFunction(state.dnu))


def _lam(mesh, H, f, opts):
    return dn_apply(mesh, H, f, opts).neumann.values


def fd_first_dn(mesh, H, f0, f1, eps=1e-3, opts=None):
    """Central difference ``(Lambda(f0 + eps f1) - Lambda(f0 - eps f1)) / (2 eps)``."""
    f0, f1 = nodal(f0), nodal(f1)
    if not np.any(f1):
        return BoundaryFunction(np.zeros_like(f1))
    lp = _lam(mesh, H, f0 + eps * f1, opts)
    lm = _lam(mesh, H, f0 - eps * f1, opts)
    return BoundaryFunction((lp - lm) / (2.0 * eps))


def fd_second_dn(mesh, H, f0, f1, f2, eps=1e-3, opts=None):
    """Mixed central difference of the DN map in directions ``f1`` and ``f2``.

    Corner data are built as ``f0 +- eps (f1 + f2)`` and ``f0 +- eps (f1 - f2)``.
    Swapping the directions maps these onto the same floating-point inputs
    (sum is commutative, negation exact), so the output is bit-identical
    under ``f1 <-> f2``.
    """
    f0, f1, f2 = nodal(f0), nodal(f1), nodal(f2)
    if not np.any(f1) or not np.any(f2):
        return BoundaryFunction(np.zeros_like(f0))
    s, d = f1 + f2, f1 - f2
    pp = _lam(mesh, H, f0 + eps * s, opts)
    mm = _lam(mesh, H, f0 - eps * s, opts)
    pm = _lam(mesh, H, f0 + eps * d, opts)
    mp = _lam(mesh, H, f0 - eps * d, opts)
    return BoundaryFunction(((pp + mm) - (pm + mp)) / (4.0 * eps * eps))


def fit_slope(x, y):
    """Least-squares slope of ``log y`` against ``log x``."""
    x = np.asarray(x, float)
    y = np.asarray(y, float)
    if np.any(y <= 0) or len(x) < 2:
        raise ValueError("slope fit needs >= 2 positive values")
    return float(np.polyfit(np.log(x), np.log(y), 1)[0])


def eps_sweep(fd_func, reference, eps_list):
    """Deviation of ``fd_func(eps)`` from ``reference`` over ``eps_list``.

    Returns ``(eps, deviations, slope)`` with deviations in the boundary L2
    norm and the log-log slope of deviation against eps.
    """
    ref = nodal(reference)
    n = ref.shape[0]
    devs = []
    for e in eps_list:
        d = nodal(fd_func(e)) - ref
        devs.append(float(np.sqrt(np.sum(d * d) * 2.0 * np.pi / n)))
    return np.asarray(eps_list, float), np.asarray(devs), fit_slope(eps_list, devs)
