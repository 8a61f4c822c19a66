"""Prescribed mean curvature equation: flux, its derivatives and the Newton solver.

Solves ``div F(grad u) = H`` in the disk with ``u = f`` on the boundary, where
``F(p) = p / sqrt(1 + |p|^2)``, using P1 elements. The discrete problem is

    R_i(u) = sum_e |e| F(grad u_e) . grad phi_i + (M H)_i = 0

at interior nodes, with Dirichlet values imposed by node elimination.
"""
import warnings
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse.linalg as spla

from . import fem, kernels
from .errors import NewtonError, SmallnessWarning
from .fields import ScalarField, nodal
from .mesh import BoundaryFunction, tangential_derivative


def flux(p):
    """``F(p) = p / sqrt(1 + |p|^2)`` for p of shape (..., 2)."""
    p = np.asarray(p, dtype=float)
    s = np.sqrt(1.0 + np.sum(p * p, axis=-1))
    return p / s[..., None]


def flux_jacobian(p):
    """``DF(p)_ab = delta_ab / S - p_a p_b / S^3`` with ``S = sqrt(1 + |p|^2)``."""
    p = np.asarray(p, dtype=float)
    s2 = 1.0 + np.sum(p * p, axis=-1)
    s = np.sqrt(s2)
    eye = np.eye(2)
    return eye / s[..., None, None] - p[..., :, None] * p[..., None, :] / (s2 * s)[..., None, None]


def flux_hessian(p):
    """Second derivative ``d^2 F^a / dp_c dp_b`` as an array indexed [a, b, c].

    Direct differentiation gives
    ``-(p_c delta_ab + p_b delta_ac + p_a delta_bc) / S^3 + 3 p_a p_b p_c / S^5``.
    """
    p = np.asarray(p, dtype=float)
    s2 = 1.0 + np.sum(p * p, axis=-1)
    s3 = s2 * np.sqrt(s2)
    s5 = s3 * s2
    eye = np.eye(2)
    pa = p[..., :, None, None]
    pb = p[..., None, :, None]
    pc = p[..., None, None, :]
    lin = pc * eye[:, :, None] + pb * eye[:, None, :] + pa * eye[None, :, :]
    return -lin / s3[..., None, None, None] + 3.0 * pa * pb * pc / s5[..., None, None, None]


@dataclass
class NewtonOptions:
    """Controls for :func:`solve_pmc`.

    ``tol`` bounds the Euclidean norm of the interior residual vector (entries
    are integrals against hat functions). ``polish`` takes one extra Newton
    step after convergence, kept only if it lowers the residual; this drives
    the residual to round-off, which finite-difference derivatives of the DN
    map need.
    """

    tol: float = 1e-11
    max_iter: int = 40
    min_damping: float = 2.0 ** -12
    polish: bool = True
    budget_H: float = 0.5
    budget_f: float = 0.5
    check_budget: bool = True


@dataclass
class NewtonReport:
    iterations: int = 0
    residual_norms: list = field(default_factory=list)
    damping: list = field(default_factory=list)
    converged: bool = False
    polished: bool = False

    def quadratic_ratio(self, floor=1e-14):
        """``log r_{k+1} / log r_k`` over the last two residuals above ``floor``."""
        r = [x for x in self.residual_norms if x > floor]
        if len(r) < 2:
            return float("nan")
        return float(np.log(r[-1]) / np.log(r[-2]))


def f_c2_proxy(f):
    """``max_{k=0,1,2} sup |d^k/dth^k (f - mean f)|`` on the boundary."""
    g = BoundaryFunction(nodal(f) - nodal(f).mean())
    return float(max(np.abs(g.values).max(),
                     np.abs(tangential_derivative(g, 1).values).max(),
                     np.abs(tangential_derivative(g, 2).values).max()))


def check_budget(H, f, opts):
    """Warn (``SmallnessWarning``) when data leave the smallness budget."""
    h_inf = float(np.abs(nodal(H)).max()) if len(nodal(H)) else 0.0
    f_norm = f_c2_proxy(f)
    msgs = []
    if h_inf > opts.budget_H:
        msgs.append(f"|H|_inf = {h_inf:.3g} > {opts.budget_H}")
    if f_norm > opts.budget_f:
        msgs.append(f"|f|_C2 = {f_norm:.3g} > {opts.budget_f}")
    if msgs:
        warnings.warn("smallness budget exceeded: " + "; ".join(msgs), SmallnessWarning, stacklevel=3)
    return h_inf, f_norm


def pmc_residual(mesh, u, H_load=None, with_jacobian=True):
    """Full nodal residual ``R(u)`` and (optionally) the Jacobian matrix."""
    indptr, indices, slots = mesh.csr_pattern
    res, data = kernels.pmc_residual_jacobian(
        mesh.triangles, np.ascontiguousarray(mesh.areas), np.ascontiguousarray(mesh.grads),
        np.ascontiguousarray(u, dtype=float), slots, indices.shape[0])
    if H_load is not None:
        res = res + H_load
    if not with_jacobian:
        return res, None
    return res, mesh.csr(data)


def harmonic_extension(mesh, f):
    return fem.DirichletSolver(mesh, fem.stiffness(mesh)).solve(nodal(f))


def solve_pmc(mesh, H, f, opts=None, u_init=None):
    """Damped Newton solve of the discrete PMC Dirichlet problem.

    Parameters
    ----------
    mesh : Mesh
    H : ScalarField or array, nodal source
    f : BoundaryFunction or array, Dirichlet data at boundary nodes
    opts : NewtonOptions
    u_init : optional initial guess (default: discrete harmonic extension of f)

    Returns
    -------
    (ScalarField, NewtonReport)

    Raises
    ------
    NewtonError
        if the residual does not reach ``opts.tol`` within ``opts.max_iter``
        iterations or the line search stalls.
    """
    opts = opts or NewtonOptions()
    Hv = nodal(H)
    fv = nodal(f)
    if opts.check_budget:
        check_budget(Hv, fv, opts)
    I = mesh.interior_nodes
    H_load = fem.mass(mesh) @ Hv
    if u_init is None:
        u = harmonic_extension(mesh, fv)
    else:
        u = np.array(nodal(u_init), dtype=float)
        u[mesh.boundary_nodes] = fv
    report = NewtonReport()
    res, J = pmc_residual(mesh, u, H_load)
    rnorm = float(np.linalg.norm(res[I]))
    report.residual_norms.append(rnorm)

    def newton_step(u, res, J):
        J_II = J[I][:, I].tocsc()
        du = np.zeros_like(u)
        du[I] = -spla.splu(J_II).solve(res[I])
        return du

    while rnorm > opts.tol:
        if report.iterations >= opts.max_iter:
            raise NewtonError(f"Newton did not converge in {opts.max_iter} iterations "
                              f"(residual {rnorm:.3e})", report)
        du = newton_step(u, res, J)
        alpha = 1.0
        while True:
            u_try = u + alpha * du
            res_try, J_try = pmc_residual(mesh, u_try, H_load)
            r_try = float(np.linalg.norm(res_try[I]))
            if np.isfinite(r_try) and r_try < (1.0 - 1e-4 * alpha) * rnorm:
                break
            alpha *= 0.5
            if alpha < opts.min_damping:
                raise NewtonError(f"line search stalled at residual {rnorm:.3e}", report)
        u, res, J, rnorm = u_try, res_try, J_try, r_try
        report.iterations += 1
        report.damping.append(alpha)
        report.residual_norms.append(rnorm)

    if opts.polish and rnorm > 0.0:
        du = newton_step(u, res, J)
        u_try = u + du
        res_try, _ = pmc_residual(mesh, u_try, H_load, with_jacobian=False)
        r_try = float(np.linalg.norm(res_try[I]))
        if r_try < rnorm:
            u, rnorm = u_try, r_try
            report.iterations += 1
            report.damping.append(1.0)
            report.residual_norms.append(rnorm)
            report.polished = True
    report.converged = True
    return ScalarField(u), report


def manufactured_source(mesh, u_exact, boundary_values=None):
    """Nodal source ``H`` for which ``u_exact`` solves the discrete problem.

    Interior values solve ``(M H)_I = -R(u_exact)_I`` with the consistent
    mass matrix, so ``solve_pmc(manufactured_source(u*), trace(u*))``
    reproduces ``u*`` up to Newton tolerance. Boundary values, which the
    discrete equation does not see beyond their mass coupling, are taken from
    ``boundary_values`` or else from the lumped interior values at adjacent
    nodes.
    """
    u = nodal(u_exact)
    I, B = mesh.interior_nodes, mesh.boundary_nodes
    res, _ = pmc_residual(mesh, u, None, with_jacobian=False)
    if boundary_values is None:
        lumped = -res / fem.lumped_mass(mesh)
        t = mesh.triangles
        interior_mask = ~mesh.is_boundary
        num = np.zeros(mesh.n_nodes)
        den = np.zeros(mesh.n_nodes)
        for a in range(3):
            for b in range(3):
                if a == b:
                    continue
                src = t[:, b]
                w = interior_mask[src].astype(float)
                np.add.at(num, t[:, a], w * lumped[src])
                np.add.at(den, t[:, a], w)
        hb = num[B] / np.maximum(den[B], 1.0)
    else:
        hb = nodal(boundary_values)
    M = fem.mass(mesh).tocsr()
    rhs = -res[I] - M[I][:, B] @ hb
    H = np.zeros(mesh.n_nodes)
    H[B] = hb
    H[I] = spla.splu(M[I][:, I].tocsc()).solve(rhs)
    return ScalarField(H)
