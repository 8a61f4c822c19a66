"""Pure numpy element kernels.

Reference implementation of the hot P1 loops. The compiled module
``_kernels`` exposes the same functions with identical signatures; see
``pmclab.kernels`` for backend selection.

All scatter operations go through ``np.bincount`` over a precomputed slot map,
which sums contributions in element order and is therefore deterministic.
"""
import numpy as np


def element_geometry(nodes, triangles):
    """Signed areas and barycentric gradients of P1 triangles.

    Returns
    -------
    area : (nt,) ndarray
    grads : (nt, 3, 2) ndarray
        ``grads[e, i]`` is the constant gradient of the hat function of local
        vertex ``i`` on triangle ``e``.
    """
    p = nodes[triangles]
    x, y = p[..., 0], p[..., 1]
    area = 0.5 * ((x[:, 1] - x[:, 0]) * (y[:, 2] - y[:, 0])
                  - (x[:, 2] - x[:, 0]) * (y[:, 1] - y[:, 0]))
    grads = np.empty(triangles.shape + (2,))
    for i in range(3):
        j, k = (i + 1) % 3, (i + 2) % 3
        grads[:, i, 0] = (y[:, j] - y[:, k]) / (2.0 * area)
        grads[:, i, 1] = (x[:, k] - x[:, j]) / (2.0 * area)
    return area, grads


def _local_stiffness(area, grads, coef):
    cg = np.einsum("eab,ejb->eja", coef, grads)
    loc = np.einsum("eia,eja->eij", grads, cg) * area[:, None, None]
    return loc.reshape(-1)


def stiffness_data(area, grads, coef, slots, nnz):
    """CSR data of the stiffness matrix with per-element tensor ``coef``.

    Local entries ``|e| (coef grad_j) . grad_i`` (row-major over (i, j)) are
    summed into the ``nnz`` CSR slots given by ``slots``.
    """
    return np.bincount(slots, weights=_local_stiffness(area, grads, coef), minlength=nnz)


def pmc_residual_jacobian(triangles, area, grads, u, slots, nnz):
    """Weak residual of div F(grad u) and its Jacobian data.

    The residual is ``R_i = sum_e |e| F(grad u_e) . grad phi_i`` (the
    source term is added by the caller). Jacobian entries are
    ``|e| (DF(grad u_e) grad phi_j) . grad phi_i`` scattered into CSR data
    through ``slots``.
    """
    g = np.einsum("ei,eia->ea", u[triangles], grads)
    s2 = 1.0 + g[:, 0] ** 2 + g[:, 1] ** 2
    s = np.sqrt(s2)
    flux = g / s[:, None]
    loc_r = np.einsum("eia,ea->ei", grads, flux) * area[:, None]
    res = np.bincount(triangles.reshape(-1), weights=loc_r.reshape(-1), minlength=u.shape[0])
    s3 = s2 * s
    df = np.empty((g.shape[0], 2, 2))
    df[:, 0, 0] = 1.0 / s - g[:, 0] * g[:, 0] / s3
    df[:, 0, 1] = -g[:, 0] * g[:, 1] / s3
    df[:, 1, 0] = df[:, 0, 1]
    df[:, 1, 1] = 1.0 / s - g[:, 1] * g[:, 1] / s3
    return res, stiffness_data(area, grads, df, slots, nnz)
