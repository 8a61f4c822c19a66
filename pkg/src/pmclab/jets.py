"""Boundary jets of a PMC solution from Cauchy data and the source trace.

On the unit circle write ``t = d_tau u``, ``n = d_nu u`` (so the gradient is
``t tau + n nu`` and ``S^2 = 1 + t^2 + n^2``). In polar coordinates at
``r = 1`` the Cartesian Hessian in the (nu, tau) frame is

    H_tt = d_th^2 f + n,     H_nt = d_th n - t,     H_nn = u_rr,

the extra terms coming from the curvature of the circle. The PMC equation
``S^2 (H_nn + H_tt) - p^T Hess p = H S^3`` then gives

    (1 + t^2) H_nn = H S^3 - (1 + n^2) H_tt + 2 n t H_nt.

The coefficient ``1 + t^2`` is ``S^2`` times the division factor
``1 - n^2 / S^2``. The third normal derivative has no closed form available
here and is estimated by a local least-squares polynomial fit.
"""
from dataclasses import dataclass

import numpy as np
from scipy.spatial import cKDTree

from .fields import nodal
from .mesh import BoundaryFunction, boundary_frame, tangential_derivative


@dataclass(frozen=True, eq=False)
class BoundaryJet:
    """Boundary trace ``u``, tangential and normal derivatives, and higher normal derivatives."""

    u: BoundaryFunction
    dtau: BoundaryFunction
    dnu: BoundaryFunction
    d2nu: BoundaryFunction = None
    d3nu: BoundaryFunction = None

    def cartesian_gradient(self, mesh):
        tangent, normal = boundary_frame(mesh)
        return self.dtau.values[:, None] * tangent + self.dnu.values[:, None] * normal

    def with_(self, **kw):
        d = dict(u=self.u, dtau=self.dtau, dnu=self.dnu, d2nu=self.d2nu, d3nu=self.d3nu)
        d.update(kw)
        return BoundaryJet(**d)


def gradient_from_cauchy(f0, lam_f0):
    """First-order jet from Dirichlet data and its DN image."""
    f0 = BoundaryFunction(nodal(f0))
    lam = BoundaryFunction(nodal(lam_f0))
    if len(f0) != len(lam):
        raise ValueError("Dirichlet and Neumann data must live on the same boundary")
    return BoundaryJet(u=f0, dtau=tangential_derivative(f0, 1), dnu=lam)


def division_factor(jet):
    """``1 - n^2 / (1 + |grad u|^2)``, equal to ``(1 + t^2) / (1 + t^2 + n^2)``."""
    t, n = jet.dtau.values, jet.dnu.values
    return 1.0 - n * n / (1.0 + t * t + n * n)


def second_normal_jet(H_trace, jet):
    """``d_nu^2 u`` on the unit circle from the source trace and the first-order jet."""
    Hb = nodal(H_trace)
    t, n = jet.dtau.values, jet.dnu.values
    f2 = tangential_derivative(jet.u, 2).values
    dn_th = tangential_derivative(jet.dnu, 1).values
    h_tt = f2 + n
    h_nt = dn_th - t
    s2 = 1.0 + t * t + n * n
    fac = division_factor(jet)
    if np.any(fac < 1e-6):
        raise RuntimeError("degenerate division factor")
    rhs = Hb * np.sqrt(s2) - (h_tt * (1.0 + n * n) - 2.0 * n * t * h_nt) / s2
    return BoundaryFunction(rhs / fac)


def third_normal_jet_numeric(mesh, u0, degree=4, radius=0.3, min_points=None):
    """Estimate ``d_nu^3 u`` at boundary nodes from nodal values of ``u0``.

    For each boundary node a polynomial of total degree ``degree`` in the
    local (normal, tangent) coordinates is least-squares fitted to the nodal
    values within ``radius``; six times the coefficient of ``s^3`` (s the
    offset along the outward normal) is the third normal derivative. This is a
    numeric estimate; its accuracy is controlled by ``degree`` and
    ``radius``.
    """
    if degree < 3:
        raise ValueError("degree must be at least 3")
    u = nodal(u0)
    tangent, normal = boundary_frame(mesh)
    pts = mesh.nodes
    B = mesh.boundary_nodes
    powers = [(i, j) for i in range(degree + 1) for j in range(degree + 1 - i)]
    k3 = powers.index((3, 0))
    need = min_points or 2 * len(powers)
    out = np.empty(len(B))
    tree = cKDTree(pts)
    for k, b in enumerate(B):
        idx = tree.query_ball_point(pts[b], radius)
        if len(idx) < need:
            _, idx = tree.query(pts[b], k=need)
        idx = np.asarray(idx)
        d = pts[idx] - pts[b]
        s = d @ normal[k]
        tt = d @ tangent[k]
        scale = radius
        V = np.stack([(s / scale) ** i * (tt / scale) ** j for i, j in powers], axis=1)
        coef, *_ = np.linalg.lstsq(V, u[idx], rcond=None)
        out[k] = coef[k3] * 6.0 / scale ** 3
    return BoundaryFunction(out)


def jet_from_solution(mesh, u0, dnu, H_trace, with_third=False, **kw):
    """Full boundary jet of a solved ``u0`` (normal derivative supplied by the DN map)."""
    f0 = BoundaryFunction.trace(mesh, nodal(u0))
    jet = gradient_from_cauchy(f0, dnu)
    jet = jet.with_(d2nu=second_normal_jet(H_trace, jet))
    if with_third:
        jet = jet.with_(d3nu=third_normal_jet_numeric(mesh, u0, **kw))
    return jet
