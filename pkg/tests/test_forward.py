import warnings

import numpy as np
import pytest
import sympy as sp
from hypothesis import given, settings, strategies as st

from pmclab.errors import NewtonError, SmallnessWarning
from pmclab.forward import (NewtonOptions, check_budget, flux, flux_hessian, flux_jacobian,
                            manufactured_source, solve_pmc)
from pmclab.linearization import c_tensor_contracted
from pmclab.mesh import l2_error_vs_function

from conftest import cached_mesh

vec = st.tuples(st.floats(-4, 4), st.floats(-4, 4)).map(np.array)


def test_flux_values():
    assert np.allclose(flux([0.0, 0.0]), [0, 0])
    assert np.allclose(flux([1.0, 0.0]), [0.70710678, 0], atol=1e-8)
    mags = [np.linalg.norm(flux([t, 0.0])) for t in (1, 10, 100, 1e4)]
    assert np.all(np.diff(mags) > 0) and mags[-1] < 1 and mags[-1] > 1 - 1e-8


def test_flux_jacobian_values():
    assert np.allclose(flux_jacobian([0.0, 0.0]), np.eye(2))
    assert np.allclose(flux_jacobian([1.0, 0.0]), np.diag([0.35355339, 0.70710678]), atol=1e-8)


def test_flux_hessian_values():
    assert np.all(flux_hessian([0.0, 0.0]) == 0)
    D2 = flux_hessian([1.0, 0.0])
    assert D2[0, 0, 0] == pytest.approx(-3 / (4 * np.sqrt(2)), abs=1e-12)
    assert D2[0, 0, 0] == pytest.approx(-0.53033009, abs=1e-8)
    C2 = c_tensor_contracted(np.array([[1.0, 0.0]])).values[0]
    assert np.allclose(C2, D2, atol=1e-15)


@settings(max_examples=60, deadline=None)
@given(vec)
def test_jacobian_matches_central_difference(p):
    d = 1e-5
    fd = np.stack([(flux(p + d * e) - flux(p - d * e)) / (2 * d) for e in np.eye(2)], axis=1)
    assert np.allclose(flux_jacobian(p), fd, atol=1e-8)


@settings(max_examples=60, deadline=None)
@given(vec)
def test_hessian_matches_difference_of_jacobian(p):
    d = 1e-5
    fd = np.stack([(flux_jacobian(p + d * e) - flux_jacobian(p - d * e)) / (2 * d) for e in np.eye(2)], axis=2)
    assert np.allclose(flux_hessian(p), fd, atol=1e-8)


@settings(max_examples=60, deadline=None)
@given(vec)
def test_hessian_fully_symmetric(p):
    D2 = flux_hessian(p)
    for perm in [(0, 2, 1), (1, 0, 2), (2, 1, 0), (1, 2, 0), (2, 0, 1)]:
        assert np.allclose(D2, np.transpose(D2, perm), atol=1e-15)


@settings(max_examples=60, deadline=None)
@given(vec)
def test_jacobian_eigenvalues_bounded(p):
    # DF has eigenvalues 1/S (tangential to p) and 1/S^3 (along p)
    s = np.sqrt(1 + p @ p)
    ev = np.linalg.eigvalsh(flux_jacobian(p))
    assert np.allclose(np.sort(ev), np.sort([1 / s, 1 / s ** 3]), rtol=1e-10, atol=1e-15)
    assert ev.min() > 0 and ev.max() <= 1 + 1e-15


def test_zero_data_gives_zero_solution():
    m = cached_mesh(3)
    u, rep = solve_pmc(m, np.zeros(m.n_nodes), np.zeros(m.n_boundary))
    assert np.all(u.values == 0) and rep.converged


@pytest.mark.parametrize("alpha,beta,c", [(0.3, -0.2, 0.1), (1.5, 2.0, -1.0)])
def test_affine_is_exact(alpha, beta, c):
    m = cached_mesh(3)
    ex = alpha * m.nodes[:, 0] + beta * m.nodes[:, 1] + c
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", SmallnessWarning)
        u, _ = solve_pmc(m, np.zeros(m.n_nodes), ex[m.boundary_nodes])
    assert np.max(np.abs(u.values - ex)) <= 1e-10


def _paraboloid(m):
    return (1 - m.nodes[:, 0] ** 2 - m.nodes[:, 1] ** 2) / 4


def test_manufactured_source_of_affine_is_zero():
    m = cached_mesh(3)
    H = manufactured_source(m, 0.2 + 0.5 * m.nodes[:, 0] - m.nodes[:, 1])
    assert np.max(np.abs(H.values)) <= 1e-10


def test_manufactured_source_sign_and_continuum_value():
    x, y = sp.symbols("x y")
    u = (1 - x ** 2 - y ** 2) / 4
    s = sp.sqrt(1 + sp.diff(u, x) ** 2 + sp.diff(u, y) ** 2)
    # weak form sum |e| F . grad phi + M H = 0 is the strong equation div F = H
    Hsym = sp.lambdify((x, y), sp.simplify(sp.diff(sp.diff(u, x) / s, x) + sp.diff(sp.diff(u, y) / s, y)))
    m = cached_mesh(4)
    H = manufactured_source(m, _paraboloid(m)).values
    I = m.interior_nodes
    assert np.all(H[I] < 0)
    r = np.hypot(*m.nodes.T)
    inner = r < 0.8
    assert np.max(np.abs(H[inner] - Hsym(*m.nodes[inner].T))) < 2e-2


def test_manufactured_round_trip():
    m = cached_mesh(4)
    ue = _paraboloid(m)
    u, _ = solve_pmc(m, manufactured_source(m, ue), ue[m.boundary_nodes])
    assert np.max(np.abs(u.values - ue)) <= 1e-9


def test_manufactured_convergence_order():
    errs, hs = [], []
    for L in (3, 4, 5):
        m = cached_mesh(L)
        x, y = sp.symbols("x y")
        ue_f = lambda X, Y: (1 - X ** 2 - Y ** 2) / 4 + 0.1 * X * Y
        uu = (1 - x ** 2 - y ** 2) / 4 + 0.1 * x * y
        s = sp.sqrt(1 + sp.diff(uu, x) ** 2 + sp.diff(uu, y) ** 2)
        Hc = sp.lambdify((x, y), sp.diff(sp.diff(uu, x) / s, x) + sp.diff(sp.diff(uu, y) / s, y))
        H = Hc(*m.nodes.T)
        u, _ = solve_pmc(m, H, ue_f(*m.nodes[m.boundary_nodes].T))
        errs.append(l2_error_vs_function(m, u.values, ue_f))
        hs.append(m.h_max)
    order = np.polyfit(np.log(hs), np.log(errs), 1)[0]
    assert order >= 1.8


def test_newton_reports_residual_history():
    m = cached_mesh(3)
    H = -0.3 * np.ones(m.n_nodes)
    u, rep = solve_pmc(m, H, 0.1 * np.cos(m.theta))
    assert rep.converged and rep.residual_norms[-1] <= 1e-11
    assert rep.residual_norms[0] > rep.residual_norms[-1]


def test_newton_failure_raises():
    m = cached_mesh(3)
    with pytest.raises(NewtonError):
        solve_pmc(m, -0.3 * np.ones(m.n_nodes), np.zeros(m.n_boundary), NewtonOptions(max_iter=1, polish=False))


def test_budget_is_a_warning_only():
    m = cached_mesh(2)
    with pytest.warns(SmallnessWarning):
        check_budget(np.full(m.n_nodes, 2.0), np.zeros(m.n_boundary), NewtonOptions())
