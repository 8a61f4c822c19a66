"""Experiment drivers behind ``pmc <experiment>``.

Each driver takes a :class:`~pmclab.config.Config` and an output directory,
writes CSV tables (and field dumps where useful) plus ``summary.json``, and
returns the list of checks. Files hold only deterministic quantities; wall
clock times are checked against their budgets and reported on stdout.
"""
import os
import time
import warnings
from dataclasses import dataclass

import numpy as np

from . import cgo, fem, formats, inverse
from .dnmap import eps_sweep, fd_first_dn, fd_second_dn, fit_slope, solve_state
from .errors import SmallnessWarning
from .forward import NewtonOptions, solve_pmc
from .jets import jet_from_solution
from .linearization import (
    _det2, _lookup_triangles, boundary_layer_mask, boundary_term_B, c_tensor, c_tensor_contracted, compute_T,
    conductivity_dn_map, identity_gauge, interior_mask, interior_term_I, interior_term_I_tensor,
    linearize, metric_from_gradient, nodal_l2, nodal_sqrt_gamma, pullback_metric,
    schrodinger_potential, schrodinger_residual, solve_conductivity, solve_second_linearized,
    twist_gauge,
)
from .mesh import generate_disk_mesh, l2_error_vs_function


@dataclass
class Check:
    criterion: str
    name: str
    value: object
    target: str
    passed: bool
    asserted: bool = True

    def as_dict(self):
        return {"criterion": self.criterion, "name": self.name, "value": self.value,
                "target": self.target, "passed": bool(self.passed), "asserted": self.asserted}


def _opts(cfg):
    return NewtonOptions(tol=cfg.newton_tol, max_iter=cfg.newton_max_iter,
                         budget_H=cfg.budget_H, budget_f=cfg.budget_f)


def _xy(mesh):
    return mesh.nodes[:, 0], mesh.nodes[:, 1]


def background(mesh):
    """Reference source and Dirichlet data used by the linearization experiments."""
    x, y = _xy(mesh)
    H = 0.3 * np.exp(-3.0 * (x * x + y * y)) - 0.1 * x
    th = mesh.theta
    return H, 0.2 * np.cos(th) + 0.1 * np.sin(2 * th)


def test_directions(mesh):
    th = mesh.theta
    return np.cos(2 * th) + 0.3 * np.sin(th), np.sin(3 * th) + 0.2, np.cos(th)


def radial_source(du, d2u, r):
    """``H(r)`` for a radial ``u`` with ``u'(r) = du``, ``u''(r) = d2u``."""
    s = np.sqrt(1.0 + du * du)
    phi = du / s
    dphi = d2u / s ** 3
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.where(r > 0, phi / np.where(r > 0, r, 1.0), dphi)
    return dphi + ratio


# ------------------------------------------------------------------ criterion 1

def forward_convergence(cfg, out):
    rows, hs, errs = [], [], []
    t0 = time.perf_counter()
    for L in cfg.levels:
        mesh = generate_disk_mesh(L)
        x, y = _xy(mesh)
        r2 = x * x + y * y
        H = -(r2 + 8.0) / (r2 + 4.0) ** 1.5
        u, rep = solve_pmc(mesh, H, np.zeros(mesh.n_boundary), _opts(cfg))
        err = l2_error_vs_function(mesh, u.values, lambda X, Y: 0.25 * (1.0 - X * X - Y * Y))
        rows.append((L, mesh.h_max, mesh.n_nodes, err, rep.iterations))
        hs.append(mesh.h_max)
        errs.append(err)
        if L == cfg.levels[-1]:
            formats.write_scalar_field(os.path.join(out, f"u_level{L}.txt"), u.values, level=L)
    elapsed = time.perf_counter() - t0
    order = fit_slope(hs, errs)
    formats.write_csv(os.path.join(out, "convergence.csv"),
                      ["level", "h", "n_nodes", "l2_error", "newton_iterations"], rows)

    mesh = generate_disk_mesh(cfg.levels[0])
    x, y = _xy(mesh)
    aff = 0.1 + 0.3 * x - 0.2 * y
    u, _ = solve_pmc(mesh, np.zeros(mesh.n_nodes), aff[mesh.boundary_nodes], _opts(cfg))
    aff_err = float(np.max(np.abs(u.values - aff)))
    print(f"  forward-convergence runtime {elapsed:.1f} s")
    return [
        Check("1", "manufactured L2 order", order, ">= 1.8", order >= 1.8),
        Check("1", "affine exactness", aff_err, "<= 1e-10", aff_err <= 1e-10),
        Check("1", "runtime", None, "< 60 s", elapsed < 60.0),
    ]


# --------------------------------------------------------------- criteria 3, 5

def dn_consistency(cfg, out):
    checks = []
    mesh = generate_disk_mesh(cfg.mesh_level)
    H, f0 = background(mesh)
    f1, f2, _ = test_directions(mesh)
    opts = _opts(cfg)
    ls = linearize(mesh, H, f0, opts)
    _, n1 = ls.first_dn(f1)
    _, d1, s1 = eps_sweep(lambda e: fd_first_dn(mesh, H, f0, f1, e, opts), n1, cfg.fd_eps)
    _, n2 = ls.second_dn(f1, f2)
    _, d2, s2 = eps_sweep(lambda e: fd_second_dn(mesh, H, f0, f1, f2, e, opts), n2, cfg.fd_eps)
    e = cfg.fd_eps[len(cfg.fd_eps) // 2]
    sym = float(np.max(np.abs(fd_second_dn(mesh, H, f0, f1, f2, e, opts).values
                              - fd_second_dn(mesh, H, f0, f2, f1, e, opts).values)))
    formats.write_csv(os.path.join(out, "eps_sweep.csv"), ["eps", "first_dev", "second_dev"],
                      list(zip(cfg.fd_eps, d1, d2)))
    checks += [
        Check("3", "first linearization eps slope", s1, "in [1.9, 2.1]", 1.9 <= s1 <= 2.1),
        Check("5", "second linearization eps slope", s2, "in [1.9, 2.1]", 1.9 <= s2 <= 2.1),
        Check("5", "second FD symmetry", sym, "<= 1e-12", sym <= 1e-12),
    ]

    zero = np.zeros(mesh.n_nodes)
    ls0 = linearize(mesh, zero, np.zeros(mesh.n_boundary), opts)
    rows = []
    worst = 0.0
    for k in range(1, 5):
        f = np.cos(k * mesh.theta)
        _, n = ls0.first_dn(f)
        sym_k = float(n.values @ f / (f @ f))
        rel = abs(sym_k - k) / k
        worst = max(worst, rel)
        rows.append((k, sym_k, rel))
    formats.write_csv(os.path.join(out, "laplace_symbol.csv"), ["k", "measured", "rel_error"], rows)
    checks.append(Check("3", "disk DN symbol k<=4 max rel error", worst, "<= 0.05", worst <= 0.05))
    return checks


# ------------------------------------------------------------------ criterion 4

def schrodinger_equivalence(cfg, out):
    rows, hs, res = [], [], []
    for L in cfg.levels:
        mesh = generate_disk_mesh(L)
        H, f0 = background(mesh)
        f1, _, _ = test_directions(mesh)
        m = linearize(mesh, H, f0, _opts(cfg)).metric
        v = solve_conductivity(mesh, m, f1)
        q = schrodinger_potential(mesh, m)
        sg = nodal_sqrt_gamma(mesh, m)
        r = schrodinger_residual(mesh, m, q.values, sg * v)
        mask = interior_mask(mesh, 0.9) & ~boundary_layer_mask(mesh)
        rel = nodal_l2(mesh, r, mask) / nodal_l2(mesh, q.values * sg * v, mask)
        rows.append((L, mesh.h_max, rel))
        hs.append(mesh.h_max)
        res.append(rel)
    slope = fit_slope(hs, res)
    formats.write_csv(os.path.join(out, "residual.csv"), ["level", "h", "rel_residual"], rows)
    return [Check("4", "Schrodinger residual refinement slope", slope, ">= 1", slope >= 1.0)]


# --------------------------------------------------------------- criteria 2, 5

def algebraic_identities(mesh, u0):
    p = fem.element_gradients(mesh, u0)
    s2 = 1.0 + np.sum(p * p, axis=1)
    m = metric_from_gradient(p)
    det_err = float(np.max(np.abs(_det2(m.A) - s2 ** -2)))
    gam_err = float(np.max(np.abs(m.gamma - 1.0 / s2)))
    C = c_tensor(p).values
    perms = [(0, 1, 2, 3), (0, 1, 3, 2), (0, 2, 1, 3), (0, 2, 3, 1), (0, 3, 1, 2), (0, 3, 2, 1)]
    sym_err = float(max(np.max(np.abs(C - np.transpose(C, pp))) for pp in perms))
    forms_err = float(np.max(np.abs(C - c_tensor_contracted(p).values)))
    return det_err, gam_err, sym_err, forms_err


def identity_check(cfg, out):
    rows, hs, rels = [], [], []
    checks = []
    for L in cfg.levels:
        mesh = generate_disk_mesh(L)
        H, f0 = background(mesh)
        f1, f2, fv = test_directions(mesh)
        ls = linearize(mesh, H, f0, _opts(cfg))
        m, C = ls.metric, ls.C
        v0, v1, v2 = (solve_conductivity(mesh, m, f) for f in (fv, f1, f2))
        w = solve_second_linearized(mesh, m, C, v1, v2)
        I = interior_term_I(mesh, ls.state.u, v0, v1, v2)
        I_t = interior_term_I_tensor(mesh, C, v0, v1, v2)
        B = boundary_term_B(mesh, m, C, v0, v1, v2, w)
        rel = abs(I - B) / abs(I)
        rows.append((L, mesh.h_max, I, I_t, B, rel))
        hs.append(mesh.h_max)
        rels.append(rel)
        if L == cfg.levels[-1]:
            ids = algebraic_identities(mesh, ls.state.u)
            formats.write_metric_field(os.path.join(out, f"metric_level{L}.txt"), m)
    slope = fit_slope(hs, rels)
    formats.write_csv(os.path.join(out, "identity.csv"),
                      ["level", "h", "I", "I_tensor", "B", "rel_gap"], rows)
    names = ["det(g^-1) = (1+|p|^2)^-2", "gamma = (1+|p|^2)^-1", "C full symmetry", "C closed forms agree"]
    checks += [Check("2", n, v, "<= 1e-12", v <= 1e-12) for n, v in zip(names, ids)]
    checks.append(Check("5", "|I - B| / |I| refinement slope", slope, ">= 1", slope >= 1.0))
    return checks


# ------------------------------------------------------------------ criterion 6

def gauge_invariance(cfg, out):
    rows, hs, gaps = [], [], []
    det_err = 0.0
    for L in cfg.levels:
        mesh = generate_disk_mesh(L)
        H, f0 = background(mesh)
        f1, _, _ = test_directions(mesh)
        mt = linearize(mesh, H, f0, _opts(cfg)).metric
        gauge = twist_gauge(mesh, cfg.gauge_tau)
        mp = pullback_metric(mesh, mt, gauge)
        d = conductivity_dn_map(mesh, mp, f1) - conductivity_dn_map(mesh, mt, f1)
        gap = d.l2()
        lam_e = gauge.lam[mesh.triangles].mean(axis=1)
        pred = lam_e ** 2 * gauge.J ** 2 * mt.det_g[_lookup_triangles(mesh, gauge)]
        det_err = max(det_err, float(np.max(np.abs(mp.det_g - pred) / pred)))
        rows.append((L, mesh.h_max, gap))
        hs.append(mesh.h_max)
        gaps.append(gap)
    slope = fit_slope(hs, gaps)
    formats.write_csv(os.path.join(out, "gauge.csv"), ["level", "h", "dn_gap"], rows)
    return [
        Check("6", "gauge DN gap refinement slope", slope, ">= 0.9 (O(h))", slope >= 0.9),
        Check("6", "det transformation identity", det_err, "<= 1e-12", det_err <= 1e-12),
    ]


# ------------------------------------------------------------------ criterion 7

def _radial_jet_case():
    """u = 0.05 (1 - r^2)^2: u' = -0.2 r (1 - r^2), u'' = -0.2 (1 - 3 r^2), u_rr(1) = 0.4."""
    def u(x, y):
        return 0.05 * (1.0 - x * x - y * y) ** 2

    def H(x, y):
        r = np.hypot(x, y)
        return radial_source(-0.2 * r * (1 - r * r), -0.2 * (1 - 3 * r * r), r)

    return u, H, 0.4


def jet_recovery(cfg, out):
    u_fn, H_fn, d2_exact = _radial_jet_case()
    rows, hs, errs = [], [], []
    for L in cfg.levels:
        mesh = generate_disk_mesh(L)
        x, y = _xy(mesh)
        H = H_fn(x, y)
        B = mesh.boundary_nodes
        st, _ = solve_state(mesh, H, u_fn(x[B], y[B]), _opts(cfg))
        jet = jet_from_solution(mesh, st.u, st.dnu, H[B])
        err = float(np.max(np.abs(jet.d2nu.values - d2_exact)))
        rows.append((L, mesh.h_max, err))
        hs.append(mesh.h_max)
        errs.append(err)
        if L == cfg.levels[-1]:
            formats.write_jet(os.path.join(out, f"jet_level{L}.txt"), jet)
    slope = fit_slope(hs, errs)
    formats.write_csv(os.path.join(out, "jet.csv"), ["level", "h", "d2nu_max_error"], rows)
    mesh = generate_disk_mesh(cfg.levels[0])
    z = np.zeros(mesh.n_nodes)
    jet0 = jet_from_solution(mesh, z, np.zeros(mesh.n_boundary), np.zeros(mesh.n_boundary))
    zmax = float(np.max(np.abs(jet0.d2nu.values)))
    return [
        Check("7", "second normal jet error slope", slope, ">= 0.9 (O(h))", slope >= 0.9),
        Check("7", "zero data gives zero jet", zmax, "== 0", zmax == 0.0),
    ]


# ------------------------------------------------------------------ criterion 8

def cgo_cases():
    """Three (q, a) pairs: callables ``q(x, y)`` and amplitudes ``a(z)``."""
    return [
        ("gauss-shift/1", lambda x, y: np.exp(-4 * ((x - 0.2) ** 2 + y * y)), lambda z: np.ones_like(z)),
        ("linear-gauss/z", lambda x, y: (1 + x) * np.exp(-3 * (x * x + y * y)), lambda z: z),
        ("trig/quadratic", lambda x, y: np.cos(2 * y) + 0.5 * x * y, lambda z: 1 + 0.5 * z * z),
    ]


def cgo_decay(cfg, out):
    hs = [float(h) for h in cfg.cgo_h_list]
    grid = cgo.make_grid(cfg.cgo_dx if cfg.cgo_dx > 0 else min(hs) / 8.0)
    phases = [("morse", cgo.make_phase(z0=cfg.cgo_z0)), ("linear", cgo.make_phase())]
    rows, checks = [], []
    worst = {"morse": np.inf, "linear": np.inf}
    slowest = 0.0
    for pname, ph in phases:
        for cname, qf, af in cgo_cases():
            q = cgo.extend_potential(grid, qf)
            t0 = time.perf_counter()
            rep = cgo.decay_study(ph, q, af(grid.z), hs, tol=cfg.cgo_tol)
            slowest = max(slowest, time.perf_counter() - t0)
            worst[pname] = min(worst[pname], rep.slope)
            rows += [(pname, cname, h, v, rep.slope) for h, v in zip(rep.h, rep.norms)]
            checks.append(Check("8", f"{pname} {cname} slope", rep.slope, f">= {rep.target}", rep.passed))
    formats.write_csv(os.path.join(out, "decay.csv"), ["phase", "case", "h", "r_L2", "slope"], rows)
    q0 = cgo.ComplexGridField(np.zeros((grid.n, grid.n)), grid)
    sol0 = cgo.build_cgo(q0, np.ones((grid.n, grid.n)), phases[0][1], hs[0])
    rmax = float(np.max(np.abs(sol0.r.values)))
    checks.append(Check("8", "q = 0 gives r_h = 0", rmax, "== 0", rmax == 0.0))
    checks.append(Check("8", "runtime per sweep", None, "< 300 s", slowest < 300.0))
    print(f"  cgo-decay slowest sweep {slowest:.1f} s on {grid.n}x{grid.n} grid")
    return checks


# ------------------------------------------------------------------ criterion 9

def sp_amplitudes(grid, z0):
    z = grid.z
    g = np.exp(-6.0 * np.abs(z - z0) ** 2) * cgo.cutoff(grid.r, 0.9, 1.15)
    return [
        ("gauss*(1+z/2)", g * (1 + 0.5 * z)),
        ("gauss*(2-x+iy^2)", g * (2 - z.real + 1j * z.imag ** 2)),
        ("gauss*cos(x)", g * np.cos(z.real)),
    ]


def stationary_phase(cfg, out):
    grid = cgo.make_grid(cfg.sp_dx)
    ph = cgo.make_phase(z0=cfg.cgo_z0)
    rows, checks = [], []
    c_sp = cgo.stationary_phase_constant()
    for name, A in sp_amplitudes(grid, cfg.cgo_z0):
        res = cgo.stationary_phase_probe(cgo.ComplexGridField(A, grid), ph, cfg.sp_h_list)
        rows.append((name, res.limit.real, res.limit.imag, res.prediction.real, res.prediction.imag, res.rel_error))
        checks.append(Check("9", f"{name} extrapolated vs C_sp A(z0)", res.rel_error, "<= 0.05",
                            res.rel_error <= 0.05))
    formats.write_csv(os.path.join(out, "stationary_phase.csv"),
                      ["amplitude", "limit_re", "limit_im", "pred_re", "pred_im", "rel_error"], rows)
    formats.write_csv(os.path.join(out, "c_sp.csv"), ["c_sp"], [(c_sp,)])
    return checks


# ----------------------------------------------------------------- criterion 10

def true_source(mesh):
    x, y = _xy(mesh)
    return 0.3 * np.exp(-4.0 * ((x - 0.2) ** 2 + y * y)) + 0.1 * y


def invert(cfg, out):
    mesh = generate_disk_mesh(cfg.gn_level)
    H = true_source(mesh)
    f0 = 0.1 * np.cos(mesh.theta)
    opts = NewtonOptions(tol=cfg.newton_tol, max_iter=cfg.newton_max_iter, check_budget=False)
    data = inverse.forward_data(mesh, H, f0, K=cfg.n_directions, delta=cfg.delta, opts=opts)
    if cfg.noise > 0:
        data = inverse.add_noise(data, cfg.noise, cfg.seed)
    formats.write_dn_dataset(os.path.join(out, "data.txt"), data)

    S = inverse.Sensitivity(mesh, H, data.pairs[1].dirichlet.values, opts)
    rng = np.random.default_rng(cfg.seed)
    dH = rng.standard_normal(mesh.n_nodes)
    b = rng.standard_normal(mesh.n_boundary)
    lhs = float(S.apply(dH) @ b)
    rhs = float(dH @ S.adjoint(b))
    adj = abs(lhs - rhs) / max(abs(lhs), abs(rhs))

    res = inverse.gn_reconstruct(mesh, data, H[mesh.boundary_nodes], cfg.gn_reg, H_true=H,
                                 max_iter=cfg.gn_max_iter, opts=opts)
    formats.write_scalar_field(os.path.join(out, "H_estimate.txt"), res.H.values, level=cfg.gn_level)
    formats.write_csv(os.path.join(out, "gn.csv"), ["iteration", "misfit", "regularization"],
                      [(i, a, r) for i, (a, r) in enumerate(zip(res.misfit, res.regularization))])

    u0, _ = solve_pmc(mesh, H, f0, opts)
    T = compute_T(mesh, u0.values, u0.values, identity_gauge(mesh))
    tmax = float(np.max(np.abs(T)))
    monotone = bool(np.all(np.diff(res.misfit) <= 0))
    return [
        Check("10", "adjoint identity (relative)", adj, "<= 1e-8", adj <= 1e-8),
        Check("10", "recovery rel L2 error (r <= 0.9)", res.rel_error, "<= 0.10 (soft)",
              res.rel_error <= 0.10, asserted=False),
        Check("10", "misfit non-increasing", monotone, "true", monotone),
        Check("10", "T(u0, u0, identity gauge) == 0", tmax, "== 0", tmax == 0.0),
    ]


EXPERIMENTS = {
    "forward-convergence": forward_convergence,
    "dn-consistency": dn_consistency,
    "schrodinger-equivalence": schrodinger_equivalence,
    "identity-check": identity_check,
    "jet-recovery": jet_recovery,
    "cgo-decay": cgo_decay,
    "stationary-phase": stationary_phase,
    "invert": invert,
    "gauge-invariance": gauge_invariance,
}


def output_root(cfg):
    return os.environ.get("PMC_OUT_DIR") or cfg.out_dir


def run_experiment(cfg, name, out_root=None):
    """Run one experiment; returns ``(exit_status, summary_dict)``.

    Exit status is 0 iff every asserted check passes.
    """
    if name not in EXPERIMENTS:
        raise KeyError(name)
    out = formats.ensure_dir(os.path.join(out_root or output_root(cfg), name))
    np.random.seed(cfg.seed)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", SmallnessWarning)
        checks = EXPERIMENTS[name](cfg, out)
    passed = all(c.passed for c in checks if c.asserted)
    summary = {"experiment": name, "config": cfg.to_dict(), "passed": passed,
               "checks": [c.as_dict() for c in checks]}
    formats.write_json(os.path.join(out, "summary.json"), summary)
    return (0 if passed else 1), summary
