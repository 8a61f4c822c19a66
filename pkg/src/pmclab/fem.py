"""P1 assembly helpers: stiffness, mass, boundary mass, gradients, Dirichlet solves."""
import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from . import kernels


def element_gradients(mesh, u):
    """Per-triangle gradient (nt, 2) of the P1 function with nodal values ``u``."""
    u = np.asarray(u, dtype=float)
    return np.einsum("ei,eia->ea", u[mesh.triangles], mesh.grads)


def _as_tensor(mesh, coef):
    nt = mesh.n_triangles
    if coef is None:
        c = np.zeros((nt, 2, 2))
        c[:, 0, 0] = c[:, 1, 1] = 1.0
        return c
    coef = np.asarray(coef, dtype=float)
    if coef.ndim == 1:
        c = np.zeros((nt, 2, 2))
        c[:, 0, 0] = c[:, 1, 1] = coef
        return c
    return np.ascontiguousarray(coef)


def stiffness(mesh, coef=None):
    """Stiffness matrix ``K_ij = sum_e |e| (coef grad phi_j) . grad phi_i``.

    ``coef`` may be None (identity), a per-triangle scalar (nt,), or a
    per-triangle tensor (nt, 2, 2).
    """
    _, _, slots = mesh.csr_pattern
    data = kernels.stiffness_data(np.ascontiguousarray(mesh.areas), np.ascontiguousarray(mesh.grads),
                                  _as_tensor(mesh, coef), slots, mesh.csr_pattern[1].shape[0])
    return mesh.csr(data)


def mass(mesh, weight=None):
    """Consistent P1 mass matrix, optionally with a per-triangle constant weight."""
    w = mesh.areas if weight is None else mesh.areas * np.asarray(weight, float)
    loc = (np.ones((3, 3)) + np.eye(3)) / 12.0
    vals = (w[:, None, None] * loc[None]).reshape(-1)
    _, _, slots = mesh.csr_pattern
    return mesh.csr(np.bincount(slots, weights=vals, minlength=mesh.csr_pattern[1].shape[0]))


def lumped_mass(mesh, weight=None):
    """Row-sum lumped mass (nodal area / 3 per adjacent triangle)."""
    w = mesh.areas if weight is None else mesh.areas * np.asarray(weight, float)
    return np.bincount(mesh.triangles.reshape(-1), weights=np.repeat(w / 3.0, 3), minlength=mesh.n_nodes)


def boundary_mass(mesh):
    """Consistent P1 mass matrix of the boundary polygon (Nb x Nb, loop order)."""
    nb = mesh.n_boundary
    seg = mesh.nodes[mesh.boundary_edges[:, 1]] - mesh.nodes[mesh.boundary_edges[:, 0]]
    ln = np.sqrt((seg ** 2).sum(axis=1))
    i = np.arange(nb)
    j = (i + 1) % nb
    rows = np.concatenate([i, j, i, j])
    cols = np.concatenate([i, j, j, i])
    vals = np.concatenate([ln / 3.0, ln / 3.0, ln / 6.0, ln / 6.0])
    return sp.csr_matrix((vals, (rows, cols)), shape=(nb, nb))


def nodal_average(mesh, elem_values):
    """Area-weighted average of per-triangle values onto nodes."""
    elem_values = np.asarray(elem_values, float)
    w = np.repeat(mesh.areas, 3)
    tri = mesh.triangles.reshape(-1)
    den = np.bincount(tri, weights=w, minlength=mesh.n_nodes)
    if elem_values.ndim == 1:
        return np.bincount(tri, weights=w * np.repeat(elem_values, 3), minlength=mesh.n_nodes) / den
    flat = elem_values.reshape(elem_values.shape[0], -1)
    out = np.empty((mesh.n_nodes, flat.shape[1]))
    for c in range(flat.shape[1]):
        out[:, c] = np.bincount(tri, weights=w * np.repeat(flat[:, c], 3), minlength=mesh.n_nodes) / den
    return out.reshape((mesh.n_nodes,) + elem_values.shape[1:])


class DirichletSolver:
    """Factorized interior block of a matrix for repeated Dirichlet solves.

    Solves ``K u = rhs`` at interior nodes with ``u`` prescribed at boundary
    nodes (node elimination).
    """

    def __init__(self, mesh, K):
        self.mesh = mesh
        self.K = K.tocsr()
        I = mesh.interior_nodes
        B = mesh.boundary_nodes
        self.K_II = self.K[I][:, I].tocsc()
        self.K_IB = self.K[I][:, B]
        self._lu = spla.splu(self.K_II)

    def solve(self, boundary_values, rhs=None):
        mesh = self.mesh
        u = np.zeros(mesh.n_nodes)
        g = np.asarray(boundary_values, float)
        u[mesh.boundary_nodes] = g
        r = -(self.K_IB @ g)
        if rhs is not None:
            r = r + np.asarray(rhs, float)[mesh.interior_nodes]
        u[mesh.interior_nodes] = self._lu.solve(r)
        return u

    def solve_interior(self, r, trans=False):
        """Raw interior solve ``K_II x = r`` (or its transpose)."""
        return self._lu.solve(np.asarray(r, float), trans="T" if trans else "N")


def variational_flux(mesh, K, u, source_load=None, bmass_lu=None):
    """Conormal flux of ``u`` solving div(A grad u) = s, from the weak residual.

    Testing with a boundary hat function gives
    ``int (A grad u . nu) phi_i = (K u)_i + (M s)_i``; the flux density is
    that functional divided by the boundary mass matrix. ``source_load`` is
    ``M s`` (omit for s = 0).
    """
    r = K @ u
    if source_load is not None:
        r = r + source_load
    lb = r[mesh.boundary_nodes]
    if bmass_lu is None:
        bmass_lu = spla.splu(boundary_mass(mesh).tocsc())
    return bmass_lu.solve(lb)
