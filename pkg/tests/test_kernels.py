import numpy as np
import pytest

from pmclab import kernels
from pmclab._kernels_py import element_geometry as geom_py

from conftest import cached_mesh

try:
    cy = kernels.get_backend("cython")
except ImportError:
    cy = None

needs_cython = pytest.mark.skipif(cy is None, reason="compiled extension not built")


def test_python_backend_selectable():
    assert kernels.get_backend("python").element_geometry is geom_py
    with pytest.raises(ValueError):
        kernels.get_backend("fortran")
    assert kernels.BACKEND in ("python", "cython")


@needs_cython
@pytest.mark.parametrize("level", [1, 3, 5])
def test_backends_agree(level):
    m = cached_mesh(level)
    py = kernels.get_backend("python")
    a1, g1 = py.element_geometry(m.nodes, m.triangles)
    a2, g2 = cy.element_geometry(m.nodes, m.triangles)
    assert np.allclose(a1, a2, rtol=1e-12, atol=0) and np.allclose(g1, g2, rtol=1e-12, atol=1e-12)
    indptr, indices, slots = m.csr_pattern
    nnz = indices.shape[0]
    rng = np.random.default_rng(level)
    coef = rng.standard_normal((m.n_triangles, 2, 2))
    coef = coef + coef.transpose(0, 2, 1)
    s1 = py.stiffness_data(a1, g1, coef, slots, nnz)
    s2 = cy.stiffness_data(a1, g1, coef, slots, nnz)
    assert np.max(np.abs(s1 - s2)) <= 1e-12 * np.abs(s1).max()
    u = 0.3 * rng.standard_normal(m.n_nodes)
    r1, j1 = py.pmc_residual_jacobian(m.triangles, a1, g1, u, slots, nnz)
    r2, j2 = cy.pmc_residual_jacobian(m.triangles, a1, g1, u, slots, nnz)
    assert np.max(np.abs(r1 - r2)) <= 1e-12 * np.abs(r1).max()
    assert np.max(np.abs(j1 - j2)) <= 1e-12 * np.abs(j1).max()


def test_residual_jacobian_matches_finite_difference():
    m = cached_mesh(2)
    py = kernels.get_backend("python")
    indptr, indices, slots = m.csr_pattern
    rng = np.random.default_rng(0)
    u = 0.5 * rng.standard_normal(m.n_nodes)
    du = rng.standard_normal(m.n_nodes)
    _, jd = py.pmc_residual_jacobian(m.triangles, m.areas, m.grads, u, slots, indices.shape[0])
    J = m.csr(jd)
    e = 1e-6
    rp, _ = py.pmc_residual_jacobian(m.triangles, m.areas, m.grads, u + e * du, slots, indices.shape[0])
    rm, _ = py.pmc_residual_jacobian(m.triangles, m.areas, m.grads, u - e * du, slots, indices.shape[0])
    assert np.allclose((rp - rm) / (2 * e), J @ du, atol=1e-8)
