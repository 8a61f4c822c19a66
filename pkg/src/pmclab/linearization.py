"""Geometry of the linearized PMC equation.

Around a background solution ``u0`` the first linearization is the
conductivity equation ``div(A grad v) = 0`` with ``A = DF(grad u0)``; ``A`` is
read as an inverse Riemannian metric ``g^{-1}``. This module builds ``A``,
``g``, ``gamma = |g|^{-1/2}``, the Schrodinger potential, the third-order tensor
``C = D^2F(grad u0)``, the second-linearized solve, the interior/boundary
terms of the second-order integral identity, the field ``T`` comparing two
backgrounds, and gauge pullbacks.

Discrete conventions
--------------------
* Element quantities are piecewise constant (P1 gradients).
* ``Delta_g v = |g|^{-1/2} div(|g|^{1/2} A grad v)`` is assembled in weak form
  with weight ``|g|^{1/2} = 1/gamma`` and divided by the correspondingly
  weighted lumped mass. Values at boundary-layer nodes (boundary nodes and
  their neighbours) use one-sided stencils and are flagged.
* Substituting ``v = gamma^{-1/2} vhat`` in ``div(A grad v) = 0`` gives
  ``(Delta_g + q) vhat = 0`` with ``q = -Delta_g(gamma^{1/2}) / gamma^{1/2}``.
"""
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from . import fem
from .dnmap import _bmass_lu, boundary_gradient, normal_from_conormal_linear
from .errors import InvalidGaugeError, SpectralError
from .fields import nodal
from .forward import flux_hessian, flux_jacobian
from .mesh import BoundaryFunction, boundary_frame, tangential_derivative


@dataclass(frozen=True, eq=False)
class MetricField:
    """Per-triangle inverse metric ``A = g^{-1}``, metric ``g``, ``det g`` and ``gamma``.

    ``boundary_A`` optionally holds ``A`` evaluated from the boundary
    gradient (tangential derivative of the Dirichlet data plus recovered
    normal derivative) at boundary nodes; it is used to convert conormal
    fluxes to normal derivatives.
    """

    A: np.ndarray
    g: np.ndarray
    det_g: np.ndarray
    gamma: np.ndarray
    boundary_A: np.ndarray = None

    def boundary_tensor(self, mesh):
        if self.boundary_A is not None:
            return self.boundary_A
        return fem.nodal_average(mesh, self.A)[mesh.boundary_nodes]

    @property
    def sqrt_det_g(self):
        return 1.0 / self.gamma


def _det2(m):
    return m[..., 0, 0] * m[..., 1, 1] - m[..., 0, 1] * m[..., 1, 0]


def metric_from_gradient(grad_u0, boundary_grad=None):
    """MetricField for background gradient ``grad_u0`` (nt, 2).

    ``g = A^{-1} = S (I + p p^T)`` with ``S = sqrt(1 + |p|^2)``, so
    ``det g = S^4`` and ``gamma = 1 / S^2``.
    """
    p = np.asarray(nodal(grad_u0), float)
    A = flux_jacobian(p)
    s2 = 1.0 + np.sum(p * p, axis=-1)
    s = np.sqrt(s2)
    g = s[:, None, None] * (np.eye(2)[None] + p[:, :, None] * p[:, None, :])
    det_g = _det2(g)
    gamma = 1.0 / np.sqrt(det_g)
    bA = None if boundary_grad is None else flux_jacobian(np.asarray(boundary_grad, float))
    return MetricField(A=A, g=g, det_g=det_g, gamma=gamma, boundary_A=bA)


def metric_from_state(mesh, state):
    """MetricField of a solved background (``pmclab.dnmap.BoundaryState``)."""
    grad = fem.element_gradients(mesh, state.u)
    return metric_from_gradient(grad, boundary_gradient(mesh, state.dtau, state.dnu))


def identity_metric(mesh):
    return metric_from_gradient(np.zeros((mesh.n_triangles, 2)), np.zeros((mesh.n_boundary, 2)))


@dataclass(frozen=True, eq=False)
class CTensorField:
    """Per-triangle third-order tensor ``C^{abc}`` (nt, 2, 2, 2)."""

    values: np.ndarray


def c_tensor(grad_u0):
    """``C^{abc} = d^2 F^a / dp_c dp_b`` at ``grad u0`` (direct differentiation)."""
    return CTensorField(flux_hessian(nodal(grad_u0)))


def c_tensor_contracted(grad_u0):
    """``-(p_a A^{bc} + p_b A^{ac} + p_c A^{ab}) / (1 + |p|^2)`` with ``A = DF(p)``."""
    p = np.asarray(nodal(grad_u0), float)
    A = flux_jacobian(p)
    s2 = 1.0 + np.sum(p * p, axis=-1)
    t = (p[:, :, None, None] * A[:, None, :, :]
         + p[:, None, :, None] * A[:, :, None, :]
         + p[:, None, None, :] * A[:, :, :, None])
    return CTensorField(-t / s2[:, None, None, None])


def contract_c(C, x, y):
    """Vector ``C^{abc} y_b x_c`` per triangle."""
    return np.einsum("eabc,eb,ec->ea", C.values if hasattr(C, "values") else C, y, x)


# ---------------------------------------------------------------- conductivity

def solve_conductivity(mesh, m, f, source=None):
    """Weak solution of ``div(A grad v) = source`` with ``v = f`` on the boundary."""
    K = fem.stiffness(mesh, m.A)
    rhs = None if source is None else -(fem.mass(mesh) @ nodal(source))
    return fem.DirichletSolver(mesh, K).solve(nodal(f), rhs)


def conductivity_dn(mesh, m, v, dirichlet=None, source=None, convention="normal"):
    """Normal derivative (or conormal flux) of a conductivity solution ``v``."""
    K = fem.stiffness(mesh, m.A)
    load = None if source is None else fem.mass(mesh) @ nodal(source)
    c = fem.variational_flux(mesh, K, nodal(v), load, _bmass_lu(mesh))
    if convention == "conormal":
        return BoundaryFunction(c)
    f = nodal(v)[mesh.boundary_nodes] if dirichlet is None else nodal(dirichlet)
    t = tangential_derivative(BoundaryFunction(f), 1).values
    return BoundaryFunction(normal_from_conormal_linear(c, t, m.boundary_tensor(mesh), mesh))


def conductivity_dn_map(mesh, m, f):
    """``f -> d_nu v`` for the conductivity equation with metric ``m``."""
    v = solve_conductivity(mesh, m, f)
    return conductivity_dn(mesh, m, v, dirichlet=f)


# ------------------------------------------------------- Laplace-Beltrami / q

def _lb_operator(mesh, m):
    K = fem.stiffness(mesh, m.A / m.gamma[:, None, None])
    mw = fem.lumped_mass(mesh, 1.0 / m.gamma)
    return K, mw


def boundary_layer_mask(mesh):
    """Boundary nodes and their edge neighbours."""
    mask = mesh.is_boundary.copy()
    t = mesh.triangles
    touch = mesh.is_boundary[t].any(axis=1)
    mask[t[touch].reshape(-1)] = True
    return mask


def laplace_beltrami(mesh, m, v):
    """Mass-lumped nodal ``|g|^{-1/2} div(|g|^{1/2} A grad v)``.

    Values at boundary-layer nodes are one-sided and only first-order
    meaningful; see :func:`boundary_layer_mask`.
    """
    K, mw = _lb_operator(mesh, m)
    # rows of K sum to zero, so K v = sum_j K_ij (v_j - v_i); constants map to exactly 0
    K = K.tocoo()
    v = nodal(v)
    kv = np.bincount(K.row, weights=K.data * (v[K.col] - v[K.row]), minlength=mesh.n_nodes)
    return -kv / mw


def nodal_sqrt_gamma(mesh, m):
    return fem.nodal_average(mesh, np.sqrt(m.gamma))


def _fill_flagged(mesh, values, flagged):
    """Replace flagged nodal values by averages of unflagged neighbours, sweeping inward-out."""
    vals = np.array(values, float)
    known = ~flagged
    t = mesh.triangles
    for _ in range(mesh.n_nodes):
        if known.all():
            break
        num = np.zeros(mesh.n_nodes)
        den = np.zeros(mesh.n_nodes)
        for a in range(3):
            for b in range(3):
                if a != b:
                    w = known[t[:, b]].astype(float)
                    np.add.at(num, t[:, a], w * vals[t[:, b]])
                    np.add.at(den, t[:, a], w)
        new = (~known) & (den > 0)
        vals[new] = num[new] / den[new]
        known = known | new
    return vals


@dataclass(frozen=True, eq=False)
class PotentialField:
    """Nodal Schrodinger potential; ``flagged`` marks boundary-layer nodes (filled by extrapolation)."""

    values: np.ndarray
    flagged: np.ndarray


def schrodinger_potential(mesh, m):
    """``q = -Delta_g(gamma^{1/2}) / gamma^{1/2}`` as a nodal field.

    With this sign ``div(A grad v) = 0`` is equivalent to
    ``(Delta_g + q)(gamma^{1/2} v) = 0``.
    """
    sg = nodal_sqrt_gamma(mesh, m)
    q = -laplace_beltrami(mesh, m, sg) / sg
    flagged = boundary_layer_mask(mesh)
    return PotentialField(values=_fill_flagged(mesh, q, flagged), flagged=flagged)


def schrodinger_residual(mesh, m, q, vhat):
    """Nodal ``(Delta_g + q) vhat``."""
    return laplace_beltrami(mesh, m, vhat) + nodal(q) * nodal(vhat)


def schrodinger_matrix(mesh, m, q):
    """Symmetric matrix ``S`` with ``-(S vhat)_i / mw_i = ((Delta_g + q) vhat)_i``."""
    K, mw = _lb_operator(mesh, m)
    return (K - sp.diags(mw * nodal(q))).tocsr(), mw


def solve_schrodinger(mesh, m, q, fhat, check_spectrum=True, rel_tol=1e-8):
    """Solve ``(Delta_g + q) vhat = 0`` with ``vhat = fhat`` on the boundary.

    Raises
    ------
    SpectralError
        if 0 is numerically a Dirichlet eigenvalue of the discrete operator.
    """
    S, mw = schrodinger_matrix(mesh, m, q)
    I = mesh.interior_nodes
    if check_spectrum:
        S_II = S[I][:, I].tocsc()
        Mi = sp.diags(mw[I]).tocsc()
        lam = spla.eigsh(S_II, k=1, M=Mi, sigma=0.0, which="LM", return_eigenvectors=False)[0]
        scale = float(np.abs(S_II.diagonal() / mw[I]).max())
        if abs(lam) < rel_tol * scale:
            raise SpectralError(f"0 is close to a Dirichlet eigenvalue (lambda={lam:.3e}); "
                                "refine the mesh or reduce the data size")
    return fem.DirichletSolver(mesh, S).solve(nodal(fhat))


def interior_mask(mesh, radius=0.9):
    return np.hypot(mesh.nodes[:, 0], mesh.nodes[:, 1]) <= radius + 1e-12


def nodal_l2(mesh, values, mask=None):
    """Lumped-mass L2 norm of nodal values, optionally restricted to ``mask``."""
    w = fem.lumped_mass(mesh)
    v = nodal(values)
    if mask is not None:
        w = w * mask
    return float(np.sqrt(np.sum(w * v * v)))


# -------------------------------------------------------- second linearization

def second_lin_load(mesh, C, v1, v2):
    """``b_i = sum_e |e| C_e[grad v1, grad v2] . grad phi_i``."""
    g1 = fem.element_gradients(mesh, v1)
    g2 = fem.element_gradients(mesh, v2)
    vec = contract_c(C, g1, g2)
    loc = np.einsum("eia,ea->ei", mesh.grads, vec) * mesh.areas[:, None]
    return np.bincount(mesh.triangles.reshape(-1), weights=loc.reshape(-1), minlength=mesh.n_nodes)


def solve_second_linearized(mesh, m, C, v1, v2):
    """``w`` with ``w = 0`` on the boundary and ``div(C[grad v1, grad v2] + A grad w) = 0``."""
    b = second_lin_load(mesh, C, nodal(v1), nodal(v2))
    K = fem.stiffness(mesh, m.A)
    return fem.DirichletSolver(mesh, K).solve(np.zeros(mesh.n_boundary), -b)


def second_lin_conormal(mesh, m, C, v1, v2, w):
    """Conormal ``(C[grad v1, grad v2] + A grad w) . nu`` at the boundary (variational)."""
    b = second_lin_load(mesh, C, nodal(v1), nodal(v2))
    K = fem.stiffness(mesh, m.A)
    r = K @ nodal(w) + b
    return _bmass_lu(mesh).solve(r[mesh.boundary_nodes])


def second_linearized_dn(mesh, m, C, p_boundary, f1, f2):
    """Second derivative of the DN map in directions ``f1``, ``f2`` (normal convention).

    ``c = nu . F(p_b)`` with ``p_b = t tau + n nu``; differentiating twice
    with Dirichlet data linear in the parameters gives
    ``n'' = (c'' - nu . D^2F(p_b)[p1', p2']) / A_nunu``, where
    ``pk' = d_tau fk tau + d_nu vk nu``. Returns ``(w, n'')``.
    """
    v1 = solve_conductivity(mesh, m, f1)
    v2 = solve_conductivity(mesh, m, f2)
    n1 = conductivity_dn(mesh, m, v1, dirichlet=f1).values
    n2 = conductivity_dn(mesh, m, v2, dirichlet=f2).values
    w = solve_second_linearized(mesh, m, C, v1, v2)
    tangent, normal = boundary_frame(mesh)
    c2 = second_lin_conormal(mesh, m, C, v1, v2, w)
    t1 = tangential_derivative(BoundaryFunction(nodal(f1)), 1).values
    t2 = tangential_derivative(BoundaryFunction(nodal(f2)), 1).values
    p1 = t1[:, None] * tangent + n1[:, None] * normal
    p2 = t2[:, None] * tangent + n2[:, None] * normal
    D2 = flux_hessian(np.asarray(p_boundary, float))
    corr = np.einsum("ia,iabc,ib,ic->i", normal, D2, p2, p1)
    A_b = m.boundary_tensor(mesh)
    a_nn = np.einsum("ia,iab,ib->i", normal, A_b, normal)
    return w, BoundaryFunction((c2 - corr) / a_nn)


@dataclass(eq=False)
class LinearizedState:
    """A solved background together with its metric and C tensor."""

    mesh: object
    H: np.ndarray
    f0: np.ndarray
    state: object
    metric: MetricField
    C: CTensorField

    @property
    def p_boundary(self):
        return boundary_gradient(self.mesh, self.state.dtau, self.state.dnu)

    def first_dn(self, f1):
        """``(v1, d_nu v1)`` for Dirichlet direction ``f1``."""
        v = solve_conductivity(self.mesh, self.metric, f1)
        return v, conductivity_dn(self.mesh, self.metric, v, dirichlet=f1)

    def second_dn(self, f1, f2):
        """``(w, second DN derivative)`` for directions ``f1``, ``f2``."""
        return second_linearized_dn(self.mesh, self.metric, self.C, self.p_boundary, f1, f2)


def linearize(mesh, H, f0, opts=None):
    """Solve the background problem and build its metric and C tensor."""
    from .dnmap import solve_state
    state, _ = solve_state(mesh, H, f0, opts)
    grad = fem.element_gradients(mesh, state.u)
    m = metric_from_state(mesh, state)
    return LinearizedState(mesh=mesh, H=nodal(H), f0=nodal(f0), state=state, metric=m, C=c_tensor(grad))


# ------------------------------------------------------------ integral identity

def interior_term_I(mesh, u0, v0, v1, v2):
    """``I = int -grad u0 / (1 + |grad u0|^2) . (grad v0 g(v1, v2) + grad v1 g(v0, v2) + grad v2 g(v0, v1))``.

    ``g(x, y) = x . A y`` with ``A = DF(grad u0)``; one-point quadrature per
    triangle (exact for P1 data).
    """
    p = fem.element_gradients(mesh, u0)
    A = flux_jacobian(p)
    g0, g1, g2 = (fem.element_gradients(mesh, v) for v in (v0, v1, v2))

    def ip(x, y):
        return np.einsum("ea,eab,eb->e", x, A, y)

    vec = g0 * ip(g1, g2)[:, None] + g1 * ip(g0, g2)[:, None] + g2 * ip(g0, g1)[:, None]
    s2 = 1.0 + np.sum(p * p, axis=1)
    dens = -np.sum(p * vec, axis=1) / s2
    return float(np.sum(mesh.areas * dens))


def interior_term_I_tensor(mesh, C, v0, v1, v2):
    """Same quantity written as ``int C^{abc} d_c v1 d_b v2 d_a v0``."""
    g0, g1, g2 = (fem.element_gradients(mesh, v) for v in (v0, v1, v2))
    return float(np.sum(mesh.areas * np.sum(contract_c(C, g1, g2) * g0, axis=1)))


def boundary_weights(mesh):
    """Trapezoidal weights on the boundary polygon (half the adjacent edge lengths)."""
    seg = mesh.nodes[mesh.boundary_edges[:, 1]] - mesh.nodes[mesh.boundary_edges[:, 0]]
    ln = np.sqrt((seg ** 2).sum(axis=1))
    return 0.5 * (ln + np.roll(ln, 1))


def boundary_term_B(mesh, m, C, v0, v1, v2, w, quadrature="trapezoid"):
    """``B = int_bdry (C[grad v1, grad v2] + A grad w) . nu v0 - w (A grad v0 . nu) dS``.

    Both conormal fluxes are the variational ones. ``quadrature="trapezoid"``
    integrates the boundary densities pointwise; ``"consistent"`` uses the
    boundary mass matrix, which makes the discrete identity ``I = B`` exact.
    """
    B = mesh.boundary_nodes
    c2 = second_lin_conormal(mesh, m, C, v1, v2, w)
    K = fem.stiffness(mesh, m.A)
    c0 = _bmass_lu(mesh).solve((K @ nodal(v0))[B])
    v0b = nodal(v0)[B]
    wb = nodal(w)[B]
    if quadrature == "consistent":
        Mb = fem.boundary_mass(mesh)
        return float(v0b @ (Mb @ c2) - wb @ (Mb @ c0))
    if quadrature != "trapezoid":
        raise ValueError(f"unknown quadrature {quadrature!r}")
    wts = boundary_weights(mesh)
    return float(np.sum(wts * (c2 * v0b - wb * c0)))


# ---------------------------------------------------------------------- gauges

@dataclass(frozen=True, eq=False)
class GaugePair:
    """Nodal map ``phi`` (N, 2), nodal conformal factor ``lam`` (N,), per-triangle ``J`` (nt,)."""

    phi: np.ndarray
    lam: np.ndarray
    J: np.ndarray
    identity_map: bool = False

    def map_gradient(self, mesh):
        """Per-triangle ``D phi`` (nt, 2, 2) of the P1 map (exactly I for the identity map)."""
        if self.identity_map:
            return np.broadcast_to(np.eye(2), (mesh.n_triangles, 2, 2)).copy()
        return np.einsum("eia,eib->eab", self.phi[mesh.triangles], mesh.grads)

    def is_identity(self, mesh):
        return np.array_equal(self.phi, mesh.nodes) and np.all(self.lam == 1.0)


def make_gauge(mesh, phi, lam=None):
    """Validated GaugePair from nodal map values."""
    phi = np.asarray(phi, float)
    lam = np.ones(mesh.n_nodes) if lam is None else np.asarray(lam, float)
    B = mesh.boundary_nodes
    if np.max(np.abs(phi[B] - mesh.nodes[B])) > 1e-12:
        raise InvalidGaugeError("gauge map must fix the boundary nodes")
    if np.max(np.abs(lam[B] - 1.0)) > 1e-12 or np.any(lam <= 0):
        raise InvalidGaugeError("conformal factor must be positive and equal 1 on the boundary")
    ident = bool(np.array_equal(phi, mesh.nodes))
    gauge = GaugePair(phi=phi, lam=lam, J=np.zeros(mesh.n_triangles), identity_map=ident)
    J = _det2(gauge.map_gradient(mesh))
    if np.any(J <= 0):
        raise InvalidGaugeError("gauge map has non-positive Jacobian")
    return GaugePair(phi=phi, lam=lam, J=J, identity_map=ident)


def identity_gauge(mesh):
    return make_gauge(mesh, mesh.nodes.copy())


def twist_gauge(mesh, tau=0.05):
    """Area-preserving twist ``(r, th) -> (r, th + tau (1 - r^2)^2)``.

    The twist angle vanishes with its first derivative at ``r = 1``, so the
    map fixes the boundary to second order; ``J = 1`` in the continuum.
    """
    if abs(tau) > 0.05:
        raise InvalidGaugeError("twist amplitude limited to |tau| <= 0.05")
    x, y = mesh.nodes[:, 0], mesh.nodes[:, 1]
    r2 = x * x + y * y
    a = tau * (1.0 - r2) ** 2
    c, s = np.cos(a), np.sin(a)
    phi = np.stack([c * x - s * y, s * x + c * y], axis=1)
    phi[mesh.boundary_nodes] = mesh.nodes[mesh.boundary_nodes]
    return make_gauge(mesh, phi)


def _lookup_triangles(mesh, gauge):
    """Triangle containing ``phi(centroid)`` for each triangle."""
    if np.array_equal(gauge.phi, mesh.nodes):
        return np.arange(mesh.n_triangles)
    cphi = gauge.phi[mesh.triangles].mean(axis=1)
    tri, _ = mesh.locate(cphi)
    return tri


def pullback_metric(mesh, mt, gauge):
    """``A = lam^{-1} (D phi)^{-1} At(phi) (D phi)^{-T}`` per triangle.

    ``At(phi)`` is evaluated piecewise constant: the value on the triangle
    containing the image of each centroid.
    """
    D = gauge.map_gradient(mesh)
    J = _det2(D)
    if np.any(J <= 0):
        raise InvalidGaugeError("degenerate gauge map")
    Dinv = np.empty_like(D)
    Dinv[:, 0, 0] = D[:, 1, 1] / J
    Dinv[:, 1, 1] = D[:, 0, 0] / J
    Dinv[:, 0, 1] = -D[:, 0, 1] / J
    Dinv[:, 1, 0] = -D[:, 1, 0] / J
    lam_e = gauge.lam[mesh.triangles].mean(axis=1)
    At = mt.A[_lookup_triangles(mesh, gauge)]
    A = np.einsum("eab,ebc,edc->ead", Dinv, At, Dinv) / lam_e[:, None, None]
    A = 0.5 * (A + np.transpose(A, (0, 2, 1)))
    g = np.linalg.inv(A)
    det_g = _det2(g)
    return MetricField(A=A, g=g, det_g=det_g, gamma=1.0 / np.sqrt(det_g), boundary_A=mt.boundary_A)


def compute_T(mesh, u0, ut0, gauge):
    """``T = (lam J phi^* grad ut0 / (1 + |grad ut0|^2 o phi) - grad u0 / (1 + |grad u0|^2)) |g|^{-1/2}``.

    ``phi^* grad ut0 = D phi^T (grad ut0 o phi)``; ``|g|^{-1/2}`` is the
    conformal weight of ``u0``, i.e. ``1 / (1 + |grad u0|^2)``.
    """
    if np.any(gauge.J <= 0):
        raise InvalidGaugeError("gauge Jacobian must be positive")
    p = fem.element_gradients(mesh, u0)
    pt = fem.element_gradients(mesh, ut0)[_lookup_triangles(mesh, gauge)]
    D = gauge.map_gradient(mesh)
    pull = np.einsum("eba,eb->ea", D, pt)
    lam_e = gauge.lam[mesh.triangles].mean(axis=1)
    s2 = 1.0 + np.sum(p * p, axis=1)
    st2 = 1.0 + np.sum(pt * pt, axis=1)
    first = (lam_e * gauge.J)[:, None] * pull / st2[:, None]
    second = p / s2[:, None]
    return (first - second) / s2[:, None]


def lambda_times_J(mesh, u0, ut0, gauge):
    """``(1 + |grad u0|^2) / (1 + |grad ut0|^2 o phi)`` per triangle."""
    p = fem.element_gradients(mesh, u0)
    pt = fem.element_gradients(mesh, ut0)[_lookup_triangles(mesh, gauge)]
    return (1.0 + np.sum(p * p, axis=1)) / (1.0 + np.sum(pt * pt, axis=1))
