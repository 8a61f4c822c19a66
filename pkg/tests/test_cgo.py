import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.integrate import dblquad

from pmclab import cgo
from pmclab.errors import ContractionError, PreconditionError
from pmclab.experiments import cgo_cases


def _bump(grid, x0=0.1, y0=-0.05, w=6.0):
    z = grid.z
    return np.exp(-w * ((z.real - x0) ** 2 + (z.imag - y0) ** 2)) * cgo.cutoff(grid.r, 0.8, 1.0)


def _field(grid, v):
    return cgo.ComplexGridField(v, grid)


def test_kernel_cells_match_adaptive_quadrature():
    n, dx = 8, 0.3
    K = cgo.cauchy_kernel(n, dx)
    for ox, oy in [(1, 0), (0, 2), (-3, 1), (2, -2)]:
        cx, cy = ox * dx, oy * dx
        # offset z - w = (cx, cy) + cell, integrate 1/(pi (z - w)) over the cell
        re = dblquad(lambda v, u: (u / (u * u + v * v)) / np.pi, cx - dx / 2, cx + dx / 2,
                     cy - dx / 2, cy + dx / 2, epsabs=1e-14)[0]
        im = dblquad(lambda v, u: (-v / (u * u + v * v)) / np.pi, cx - dx / 2, cx + dx / 2,
                     cy - dx / 2, cy + dx / 2, epsabs=1e-14)[0]
        assert abs(K[oy + n - 1, ox + n - 1] - (re + 1j * im)) <= 1e-12
    assert K[n - 1, n - 1] == 0


def test_right_inverse_on_smooth_bump():
    grid = cgo.make_grid(0.0125)
    f = _bump(grid)
    for adjoint, op in ((False, cgo.dbar), (True, cgo.d)):
        T = cgo.cauchy_transform(_field(grid, f), adjoint=adjoint).values
        err = grid.norm(op(T, grid.dx) - f, mask=None) / grid.norm(f, mask=None)
        assert err <= 0.01


def test_right_inverse_error_is_second_order():
    errs = []
    for dx in (0.05, 0.025, 0.0125):
        grid = cgo.make_grid(dx)
        f = _bump(grid)
        T = cgo.cauchy_transform_array(grid, f)
        errs.append(grid.norm(cgo.dbar(T, grid.dx) - f, mask=None) / grid.norm(f, mask=None))
    slope = np.polyfit(np.log([0.05, 0.025, 0.0125]), np.log(errs), 1)[0]
    assert slope >= 1.8


def test_zero_field_and_edge_guard():
    grid = cgo.Grid(32)
    assert np.all(cgo.cauchy_transform(_field(grid, np.zeros((32, 32)))).values == 0)
    bad = np.zeros((32, 32))
    bad[0, 5] = 1.0
    with pytest.raises(PreconditionError):
        cgo.cauchy_transform(_field(grid, bad))


def test_radial_bump_symmetry():
    grid = cgo.Grid(64)
    f = np.exp(-8 * grid.r ** 2) * cgo.cutoff(grid.r, 0.8, 1.0)
    T = cgo.cauchy_transform_array(grid, f)
    scale = np.abs(T).max()
    assert np.max(np.abs(T[::-1, ::-1] + T)) <= 1e-13 * scale
    assert np.max(np.abs(T[::-1, :] - np.conj(T))) <= 1e-13 * scale


def test_grid_field_validation():
    grid = cgo.Grid(8)
    with pytest.raises(ValueError):
        cgo.ComplexGridField(np.zeros((4, 4)), grid)
    with pytest.raises(ValueError):
        cgo.ComplexGridField(np.full((8, 8), np.inf), grid)


def test_phase_examples():
    ph = cgo.make_phase(z0=0)
    assert ph.dphi(0) == 0 and ph.critical_points == (0j,)
    assert np.polynomial.polynomial.polyval(0, np.polynomial.polynomial.polyder(ph.coeffs, 2)) == 1
    assert ph.is_morse()
    lin = cgo.make_phase()
    assert lin.critical_points == ()
    assert np.all(lin.dphi(np.array([0.3 + 0.2j, -0.9j])) == 1)
    with pytest.raises(PreconditionError):
        cgo.make_phase(z0=1.2)
    with pytest.raises(ValueError):
        cgo.make_phase(kind="meromorphic")


def test_phase_pair_checker_locates_roots():
    z0 = 0.1
    rep = cgo.check_phase_pair(cgo.make_phase(), cgo.make_phase(z0=z0))
    roots = sorted(rep["plus"] + rep["minus"], key=lambda z: z.real)
    assert np.allclose(roots, [z0 - 1, z0 + 1])
    # z0 - 1 = -0.9 lies inside the unit disk, so the pair is rejected
    assert rep["pass"] is False
    far = cgo.check_phase_pair(cgo.phase_from_coeffs([0, 3.0]), cgo.make_phase(z0=z0))
    assert far["pass"] is True


def test_conjugated_inverse_large_h_limit_and_zero():
    grid = cgo.make_grid(0.025)
    f = _field(grid, _bump(grid))
    ph = cgo.make_phase(z0=0.1)
    plain = cgo.cauchy_transform_array(grid, cgo.extension_cutoff(grid) * f.values, adjoint=False)
    ci = cgo.conjugated_inverse(f, ph, 1e3).values
    assert grid.norm(ci - plain) / grid.norm(plain) <= 1e-3
    zero = cgo.conjugated_inverse(_field(grid, np.zeros((grid.n, grid.n))), ph, 0.1).values
    assert np.all(zero == 0)
    with pytest.raises(ValueError):
        cgo.conjugated_inverse(f, ph, 0.1, flavor="d")


def test_conjugated_inverse_decays_in_h():
    hs = [0.4, 0.2, 0.1, 0.05]
    grid = cgo.make_grid(min(hs) / 8)
    f = _field(grid, _bump(grid, 0.3, 0.2, 4.0))
    ph = cgo.make_phase(z0=0.1)
    norms = [grid.norm(cgo.conjugated_inverse(f, ph, h).values) for h in hs]
    assert np.polyfit(np.log(hs), np.log(norms), 1)[0] >= 0.5


def _case(grid, k=0):
    _, qf, af = cgo_cases()[k]
    return cgo.extend_potential(grid, qf), af(grid.z)


def test_q_zero_gives_exact_plane_solution():
    grid = cgo.make_grid(0.05 / 8)
    ph = cgo.make_phase(z0=0.1)
    q0 = _field(grid, np.zeros((grid.n, grid.n)))
    a = np.ones((grid.n, grid.n), complex)
    sol = cgo.build_cgo(q0, a, ph, 0.3)
    assert np.all(sol.r.values == 0) and np.all(sol.s.values == 0)
    assert np.array_equal(sol.vhat(), np.exp(ph.phi(grid.z) / 0.3) * a)
    assert sol.residual == 0.0
    rep = cgo.decay_study(ph, q0, a, [0.4, 0.2, 0.1, 0.05])
    assert rep.passed and rep.norms == [0.0] * 4


def test_remainder_is_linear_in_amplitude():
    grid = cgo.make_grid(0.025)
    q, a = _case(grid, 1)
    ph = cgo.make_phase(z0=0.1)
    r1 = cgo.neumann_remainder(q, a, ph, 0.3).r
    r2 = cgo.neumann_remainder(q, 2 * a, ph, 0.3).r
    assert np.max(np.abs(r2 - 2 * r1)) <= 1e-12 * np.abs(r1).max()


@settings(max_examples=8, deadline=None)
@given(st.complex_numbers(max_magnitude=3, allow_nan=False, allow_infinity=False))
def test_remainder_homogeneous_in_amplitude(c):
    grid = cgo.Grid(96)
    q, a = _case(grid, 0)
    ph = cgo.make_phase()
    r1 = cgo.neumann_remainder(q, a, ph, 0.4).r
    rc = cgo.neumann_remainder(q, c * a, ph, 0.4).r
    assert np.max(np.abs(rc - c * r1)) <= 1e-10 * max(1.0, abs(c)) * np.abs(r1).max()


def test_tighter_tolerance_stays_within_tail_bound():
    grid = cgo.make_grid(0.025)
    q, a = _case(grid, 2)
    ph = cgo.make_phase(z0=0.1)
    loose = cgo.neumann_remainder(q, a, ph, 0.3, tol=1e-4)
    tight = cgo.neumann_remainder(q, a, ph, 0.3, tol=1e-5)
    assert tight.terms >= loose.terms
    assert np.sqrt(np.sum(np.abs(tight.s - loose.s) ** 2)) * grid.dx <= loose.tail_bound
    norms = loose.term_norms
    assert all(n1 < n0 for n0, n1 in zip(norms, norms[1:]))


def test_non_contracting_series_is_refused():
    grid = cgo.make_grid(0.02)
    q = cgo.extend_potential(grid, lambda x, y: 300.0 * np.exp(-4 * (x * x + y * y)))
    with pytest.raises(ContractionError) as exc:
        cgo.neumann_remainder(q, np.ones((grid.n, grid.n)), cgo.make_phase(z0=0.1), 0.4)
    assert exc.value.ratio >= 0.9


def test_residual_small_and_refining():
    ph = cgo.make_phase(z0=0.1)
    res = []
    for dx in (0.025, 0.0125, 0.00625):
        grid = cgo.make_grid(dx)
        q, a = _case(grid, 0)
        res.append(cgo.build_cgo(q, a, ph, 0.2).residual)
    assert res[-1] <= 0.05
    assert res[0] > res[1] > res[2]


def test_antiholomorphic_mirrors_holomorphic():
    # conjugating the holomorphic problem (phase Phi, q, a) gives the
    # antiholomorphic one with phase -Phi, potential conj(q), amplitude conj(a)
    grid = cgo.make_grid(0.02)
    z = grid.z
    q = cgo.extend_potential(grid, lambda x, y: np.exp(-4 * ((x - 0.2) ** 2 + y * y)) + 0.3j * x)
    a = 1 + 0.5 * z
    ph = cgo.make_phase(z0=0.1)
    hol = cgo.build_cgo(q, a, ph, 0.3)
    mirror = cgo.phase_from_coeffs(-ph.coeffs, kind="antiholomorphic")
    anti = cgo.build_cgo(_field(grid, np.conj(q.values)), np.conj(a), mirror, 0.3)
    assert np.max(np.abs(anti.r.values - np.conj(hol.r.values))) <= 1e-12 * np.abs(hol.r.values).max()
    assert anti.residual == pytest.approx(hol.residual, rel=1e-10)
    assert np.allclose(anti.vhat(), np.conj(hol.vhat()), rtol=1e-12, atol=0)


def test_coarse_grid_is_rejected():
    grid = cgo.make_grid(0.05)
    q, a = _case(grid)
    with pytest.raises(PreconditionError):
        cgo.build_cgo(q, a, cgo.make_phase(), 0.4)


def test_decay_study_guards():
    grid = cgo.make_grid(0.025)
    q, a = _case(grid)
    ph = cgo.make_phase()
    with pytest.raises(PreconditionError):
        cgo.decay_study(ph, q, a, [0.4, 0.3, 0.2])
    with pytest.raises(PreconditionError):
        cgo.decay_study(ph, q, a, [0.4, 0.3, 0.2, 0.1])
    with pytest.raises(PreconditionError):
        cgo.decay_study(ph, q, a, [0.4, 0.2, 0.1, 0.05])


@pytest.mark.slow
def test_decay_slopes_one_case_each_phase():
    hs = [0.4, 0.2, 0.1, 0.05]
    grid = cgo.make_grid(min(hs) / 8)
    q, a = _case(grid, 0)
    morse = cgo.decay_study(cgo.make_phase(z0=0.1), q, a, hs)
    linear = cgo.decay_study(cgo.make_phase(), q, a, hs)
    assert morse.target == 0.45 and morse.passed
    assert linear.target == 0.9 and linear.passed


def test_stationary_phase_constant_is_near_half_pi():
    # independent check: the Gaussian model integral has the closed form pi / sqrt(1 + 16/h^2) / h -> pi/4 * ...
    c = cgo.stationary_phase_constant()
    hs = np.array([0.4, 0.3, 0.2, 0.15, 0.1])
    closed = np.pi / np.sqrt(1 + 4 / hs ** 2) / hs
    assert closed[-1] == pytest.approx(np.pi / 2, rel=2e-3)
    assert c == pytest.approx(np.pi / 2, rel=1e-3)


def test_stationary_phase_probe_cases():
    grid = cgo.make_grid(0.01)
    ph = cgo.make_phase(z0=0.1)
    hs = [0.1, 0.08, 0.06, 0.05, 0.04]
    z = grid.z
    g = np.exp(-6 * np.abs(z - 0.1) ** 2) * cgo.cutoff(grid.r, 0.9, 1.15)
    gen = cgo.stationary_phase_probe(_field(grid, g * (1 + 0.5 * z)), ph, hs)
    assert gen.rel_error <= 0.05
    zero = cgo.stationary_phase_probe(_field(grid, np.zeros_like(g)), ph, hs)
    assert zero.limit == 0
    vanish = g * np.abs(z - 0.1) ** 2
    vals = [abs(cgo.oscillatory_integral(grid, vanish, ph, h)) for h in hs]
    assert np.polyfit(np.log(hs), np.log(vals), 1)[0] >= 0.9
    with pytest.raises(PreconditionError):
        cgo.stationary_phase_probe(_field(grid, g), cgo.make_phase(), hs)


def test_pairing_with_vanishing_f_decays():
    hs = [0.4, 0.2, 0.1, 0.05]
    grid = cgo.make_grid(min(hs) / 8)
    q, a = _case(grid, 0)
    f = np.clip(1 - grid.r ** 2, 0, None)
    _, slope = cgo.pairing_decay(q, a, cgo.make_phase(z0=0.1), f, hs)
    assert slope >= 1.0
