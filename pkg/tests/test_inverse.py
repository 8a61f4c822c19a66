import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from pmclab import fem
from pmclab.dnmap import dn_apply, fit_slope
from pmclab.errors import PreconditionError
from pmclab.inverse import (Sensitivity, add_noise, forward_data, fourier_directions, fd_source_sensitivity,
                            gn_reconstruct, interior_l2_error, morozov_select, source_sensitivity,
                            uniqueness_probe, uniqueness_sweep)

from conftest import cached_mesh


def _H(m):
    x, y = m.nodes.T
    return 0.3 * np.exp(-4 * ((x - 0.2) ** 2 + y * y)) + 0.1 * y


def _bump(m):
    r2 = np.sum(m.nodes ** 2, 1)
    return np.where(r2 < 0.5 ** 2, np.cos(np.pi * np.sqrt(r2)) ** 2 * (0.25 - r2), 0.0)


def _f0(m):
    return 0.1 * np.cos(m.theta)


def test_fourier_directions():
    d = fourier_directions(24, K=5, delta=0.1)
    assert len(d) == 5
    th = 2 * np.pi * np.arange(24) / 24
    assert np.allclose(d[0].values, 0.1 * np.cos(th)) and np.allclose(d[3].values, 0.1 * np.sin(2 * th))


def test_forward_data_harmonic_oracle():
    m = cached_mesh(4)
    data = forward_data(m, np.zeros(m.n_nodes), np.zeros(m.n_boundary), directions=[np.cos(m.theta)])
    assert len(data.pairs) == 2
    assert np.max(np.abs(data.pairs[1].neumann.values - np.cos(m.theta))) < 1e-3
    empty = forward_data(m, np.zeros(m.n_nodes), np.zeros(m.n_boundary), directions=[])
    assert len(empty.pairs) == 1 and empty.directions == []


def test_forward_data_is_bit_identical():
    m = cached_mesh(3)
    a = forward_data(m, _H(m), _f0(m), K=3)
    b = forward_data(m, _H(m), _f0(m), K=3)
    for p, q in zip(a.pairs, b.pairs):
        assert p.neumann.values.tobytes() == q.neumann.values.tobytes()


def test_sensitivity_zero_and_fd_slope():
    m = cached_mesh(3)
    H, f = _H(m), _f0(m) + 0.05 * np.sin(2 * m.theta)
    assert np.all(source_sensitivity(m, H, f, np.zeros(m.n_nodes)).values == 0)
    dH = _bump(m)
    ref = source_sensitivity(m, H, f, dH).values
    eps = np.array([0.4, 0.2, 0.1, 0.05])
    devs = [np.linalg.norm(fd_source_sensitivity(m, H, f, dH, e).values - ref) for e in eps]
    assert 1.9 <= fit_slope(eps, devs) <= 2.1


@settings(max_examples=10, deadline=None)
@given(st.integers(0, 2 ** 31 - 1))
def test_sensitivity_superposition(seed):
    m = cached_mesh(3)
    S = _sens_cache()
    rng = np.random.default_rng(seed)
    a, b = rng.standard_normal((2, m.n_nodes))
    lhs = S.apply(a + b)
    assert np.max(np.abs(lhs - S.apply(a) - S.apply(b))) <= 1e-10 * max(1.0, np.abs(lhs).max())


_SENS = {}


def _sens_cache():
    if "s" not in _SENS:
        m = cached_mesh(3)
        _SENS["s"] = Sensitivity(m, _H(m), _f0(m))
    return _SENS["s"]


@pytest.mark.parametrize("level", [2, 3, 4])
def test_adjoint_identity(level):
    m = cached_mesh(level)
    S = Sensitivity(m, _H(m), _f0(m))
    rng = np.random.default_rng(level)
    dH = rng.standard_normal(m.n_nodes)
    b = rng.standard_normal(m.n_boundary)
    lhs = S.apply(dH) @ b
    rhs = dH @ S.adjoint(b)
    assert abs(lhs - rhs) <= 1e-8 * abs(lhs)
    assert np.allclose(S.matrix() @ dH, S.apply(dH), rtol=1e-12, atol=1e-14)


def test_gn_fixed_point_at_zero():
    m = cached_mesh(3)
    data = forward_data(m, np.zeros(m.n_nodes), np.zeros(m.n_boundary), K=4)
    res = gn_reconstruct(m, data, np.zeros(m.n_boundary), 1e-6, H_init=np.zeros(m.n_nodes))
    assert res.converged and res.iterations == 0
    assert np.all(res.H.values == 0) and res.misfit == [0.0]


def test_gn_recovers_source_with_monotone_misfit():
    m = cached_mesh(4)
    H = _H(m)
    data = forward_data(m, H, _f0(m), K=8)
    res = gn_reconstruct(m, data, H[m.boundary_nodes], 1e-12, H_true=H)
    assert all(b <= a * (1 + 1e-12) for a, b in zip(res.misfit, res.misfit[1:]))
    assert res.misfit[-1] <= 1e-6 * res.misfit[0]
    assert res.rel_error <= 0.10
    assert np.all(res.H.values[m.boundary_nodes] == H[m.boundary_nodes])


def test_gn_large_reg_tends_to_harmonic_extension():
    m = cached_mesh(3)
    H = _H(m)
    data = forward_data(m, H, _f0(m), K=4)
    hb = H[m.boundary_nodes]
    harm = fem.DirichletSolver(m, fem.stiffness(m)).solve(hb)
    big = gn_reconstruct(m, data, hb, 1e3, max_iter=3)
    small = gn_reconstruct(m, data, hb, 1e-10, max_iter=8)
    K = fem.stiffness(m)

    def energy(v):
        return float(v @ (K @ v))

    assert abs(energy(big.H.values) - energy(harm)) <= 1e-6 * energy(harm)
    assert energy(small.H.values) > energy(big.H.values)


def test_gn_guards():
    m = cached_mesh(2)
    data = forward_data(m, np.zeros(m.n_nodes), np.zeros(m.n_boundary), K=1)
    with pytest.raises(ValueError):
        gn_reconstruct(m, data, np.zeros(m.n_boundary), 0.0)
    with pytest.raises(ValueError):
        gn_reconstruct(m, data, np.zeros(3), 1e-6)


def test_noise_is_seeded_and_morozov_returns_candidate():
    m = cached_mesh(3)
    H = _H(m)
    data = forward_data(m, H, _f0(m), K=4)
    a = add_noise(data, 1e-4, seed=7)
    b = add_noise(data, 1e-4, seed=7)
    assert all(np.array_equal(p.neumann.values, q.neumann.values) for p, q in zip(a.pairs, b.pairs))
    reg, res = morozov_select(m, a, H[m.boundary_nodes], [1e-4, 1e-8], noise_level=1e-3, max_iter=3)
    assert reg in (1e-4, 1e-8) and len(res.misfit) >= 1


def test_interior_error_metric():
    m = cached_mesh(3)
    H = _H(m)
    assert interior_l2_error(m, H, H) == 0.0
    assert interior_l2_error(m, 1.1 * H, H) == pytest.approx(0.1, rel=1e-12)


def test_uniqueness_probe_and_sweep():
    m = cached_mesh(3)
    H = _H(m)
    dirs = fourier_directions(m, 2, 1e-2)
    same = uniqueness_probe(m, H, H, _f0(m), dirs)
    assert same.dn_gap == 0.0 and same.source_gap == 0.0
    rep = uniqueness_sweep(m, H, _bump(m), [0.05, 0.1, 0.2, 0.4], _f0(m), dirs)
    assert rep.monotone and np.all(np.diff(rep.source_gaps) > 0)
    bad = H.copy()
    bad[m.boundary_nodes[0]] += 0.1
    with pytest.raises(PreconditionError):
        uniqueness_probe(m, H, bad, _f0(m), dirs)


def test_dataset_neumann_matches_dn_apply():
    m = cached_mesh(3)
    H = _H(m)
    data = forward_data(m, H, _f0(m), K=2)
    direct = dn_apply(m, H, data.pairs[2].dirichlet)
    assert np.array_equal(direct.neumann.values, data.pairs[2].neumann.values)
