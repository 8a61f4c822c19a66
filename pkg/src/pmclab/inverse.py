"""Recovery of the source H from Dirichlet-to-Neumann data.

The sensitivity of ``Lambda_H f`` to ``H`` is the exact derivative of the
discrete forward map: with ``J`` the PMC Jacobian at ``u_f`` (the stiffness
matrix of ``A = DF(grad u_f)``),

    J_II du_I = -(M dH)_I,     dc = M_b^{-1} (J_BI du_I + (M dH)_B),
    dn = dn/dc * dc,   dn/dc = sqrt(1 + t^2) (1 - c^2)^{-3/2}.

Gauss-Newton minimizes

    1/2 sum_i |Lambda_H(f_i) - d_i|^2_{M_b} + reg/2 H^T K_lap H

over interior nodal values, the boundary values of H being pinned.
"""
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla
import scipy.sparse.linalg as spla

from . import fem
from .dnmap import DNDataset, CauchyDataPair, _bmass_lu, solve_state
from .errors import PreconditionError
from .fields import ScalarField, nodal
from .forward import NewtonOptions, pmc_residual
from .mesh import BoundaryFunction


def fourier_directions(mesh_or_n, K=8, delta=1e-2):
    """``delta cos(k th)``, ``delta sin(k th)`` for ``k = 1..ceil(K/2)``, truncated to K functions."""
    out = []
    k = 1
    while len(out) < K:
        for trig in (np.cos, np.sin):
            if len(out) < K:
                kk = k
                out.append(BoundaryFunction.from_callable(mesh_or_n, lambda th, kk=kk, trig=trig: delta * trig(kk * th)))
        k += 1
    return out


def forward_data(mesh, H, f0, directions=None, K=8, delta=1e-2, opts=None):
    """DNDataset with the base pair and pairs ``(f0 + f_i, Lambda_H(f0 + f_i))``."""
    f0 = BoundaryFunction(nodal(f0))
    if directions is None:
        directions = fourier_directions(mesh, K, delta)
    directions = [BoundaryFunction(nodal(d)) for d in directions]
    Hv = nodal(H)
    pairs = []
    for g in [None] + directions:
        f = f0.values if g is None else f0.values + g.values
        st, _ = solve_state(mesh, Hv, f, opts)
        pairs.append(CauchyDataPair(BoundaryFunction(f), BoundaryFunction(st.dnu)))
    return DNDataset(level=mesh.level, f0=f0, H_trace=BoundaryFunction(Hv[mesh.boundary_nodes]),
                     directions=directions, pairs=pairs)


class Sensitivity:
    """Linearization of ``H -> Lambda_H f`` at a solved state, with its adjoint."""

    def __init__(self, mesh, H, f, opts=None, state=None):
        self.mesh = mesh
        Hv = nodal(H)
        if state is None:
            state, _ = solve_state(mesh, Hv, f, opts)
        self.state = state
        self.M = fem.mass(mesh).tocsr()
        _, J = pmc_residual(mesh, state.u, self.M @ Hv)
        I, B = mesh.interior_nodes, mesh.boundary_nodes
        J = J.tocsr()
        self.J_BI = J[B][:, I]
        self._lu = spla.splu(J[I][:, I].tocsc())
        self._bm = _bmass_lu(mesh)
        c, t = state.conormal, state.dtau
        self.dn_dc = np.sqrt(1.0 + t * t) * (1.0 - c * c) ** -1.5

    def apply(self, dH):
        """Boundary response ``d(Lambda_H f)`` to a nodal perturbation ``dH``."""
        mesh = self.mesh
        I, B = mesh.interior_nodes, mesh.boundary_nodes
        load = self.M @ np.asarray(dH, float)
        du_I = -self._lu.solve(load[I])
        dc = self._bm.solve(self.J_BI @ du_I + load[B])
        return self.dn_dc * dc

    def adjoint(self, b):
        """Euclidean adjoint of :meth:`apply`; ``b`` may be (Nb,) or (Nb, k)."""
        mesh = self.mesh
        I, B = mesh.interior_nodes, mesh.boundary_nodes
        b = np.asarray(b, float)
        y = self._bm.solve((self.dn_dc * b.T).T, trans="T")
        z = self._lu.solve(np.asarray(self.J_BI.T @ y), trans="T")
        load = np.zeros((mesh.n_nodes,) + b.shape[1:])
        load[B] = y
        load[I] -= z
        return self.M.T @ load

    def matrix(self):
        """Dense (Nb, N) matrix of :meth:`apply`."""
        return self.adjoint(np.eye(self.mesh.n_boundary)).T


def source_sensitivity(mesh, H, f, dH, opts=None):
    return BoundaryFunction(Sensitivity(mesh, H, f, opts).apply(nodal(dH)))


def fd_source_sensitivity(mesh, H, f, dH, eps, opts=None):
    """``(Lambda_{H + eps dH} f - Lambda_{H - eps dH} f) / (2 eps)``."""
    Hv, d = nodal(H), nodal(dH)
    sp, _ = solve_state(mesh, Hv + eps * d, f, opts)
    sm, _ = solve_state(mesh, Hv - eps * d, f, opts)
    return BoundaryFunction((sp.dnu - sm.dnu) / (2.0 * eps))


@dataclass(eq=False)
class ReconstructionResult:
    H: ScalarField
    misfit: list = field(default_factory=list)
    regularization: list = field(default_factory=list)
    gradient_norm: list = field(default_factory=list)
    rel_error: float = float("nan")
    converged: bool = False
    stagnated: bool = False
    iterations: int = 0


def _laplace_stiffness(mesh):
    return fem.stiffness(mesh).tocsr()


def interior_l2_error(mesh, H, H_true, radius=0.9):
    """Relative L2 error over the disk of radius ``radius`` (lumped quadrature)."""
    r = np.hypot(mesh.nodes[:, 0], mesh.nodes[:, 1])
    m = fem.lumped_mass(mesh) * (r <= radius)
    d = nodal(H) - nodal(H_true)
    den = np.sqrt(np.sum(m * nodal(H_true) ** 2))
    num = np.sqrt(np.sum(m * d * d))
    return float(num / den) if den > 0 else float(num)


def gn_reconstruct(mesh, data, H_boundary, reg, H_true=None, H_init=None, max_iter=15,
                   gtol=1e-9, opts=None):
    """Gauss-Newton with ``|grad H|^2`` regularization and pinned boundary values.

    Iterates are accepted only if both the objective and the data misfit do
    not increase (halving the step up to 10 times); otherwise the best iterate
    is returned with ``stagnated=True``. Stops when the projected gradient is
    below ``gtol`` times its initial value (or absolutely below ``gtol``).
    """
    if reg <= 0:
        raise ValueError("reg must be positive")
    I, B = mesh.interior_nodes, mesh.boundary_nodes
    hb = nodal(H_boundary)
    if hb.shape[0] != mesh.n_boundary:
        raise ValueError("boundary trace has wrong length")
    opts = opts or NewtonOptions(check_budget=False)
    Klap = _laplace_stiffness(mesh)
    Mb = fem.boundary_mass(mesh).toarray()
    if H_init is None:
        H = fem.DirichletSolver(mesh, Klap).solve(hb)
    else:
        H = np.array(nodal(H_init), float)
        H[B] = hb
    fs = [p.dirichlet.values for p in data.pairs]
    ds = [p.neumann.values for p in data.pairs]

    def evaluate(H):
        states, resid = [], []
        for f, d in zip(fs, ds):
            st, _ = solve_state(mesh, H, f, opts)
            states.append(st)
            resid.append(st.dnu - d)
        mis = 0.5 * sum(float(r @ Mb @ r) for r in resid)
        rg = 0.5 * reg * float(H @ (Klap @ H))
        return states, resid, mis, rg

    result = ReconstructionResult(H=ScalarField(H))
    states, resid, mis, rg = evaluate(H)
    result.misfit.append(mis)
    result.regularization.append(rg)
    Kii = Klap[I][:, I].toarray()
    g0 = None
    for it in range(max_iter):
        JtJ = reg * Kii
        grad = reg * (Klap @ H)[I]
        for f, st, r in zip(fs, states, resid):
            S = Sensitivity(mesh, H, f, opts, state=st).matrix()[:, I]
            MS = Mb @ S
            JtJ = JtJ + S.T @ MS
            grad = grad + MS.T @ r
        gn = float(np.linalg.norm(grad))
        result.gradient_norm.append(gn)
        if g0 is None:
            g0 = gn
        if gn <= gtol * max(g0, 1.0) or gn == 0.0:
            result.converged = True
            break
        step = sla.solve(JtJ, -grad, assume_a="pos")
        alpha = 1.0
        accepted = False
        for _ in range(10):
            Ht = H.copy()
            Ht[I] += alpha * step
            st_t, r_t, mis_t, rg_t = evaluate(Ht)
            if mis_t + rg_t <= mis + rg and mis_t <= mis * (1 + 1e-12) + 1e-300:
                accepted = True
                break
            alpha *= 0.5
        if not accepted:
            result.stagnated = True
            break
        H, states, resid, mis, rg = Ht, st_t, r_t, mis_t, rg_t
        result.misfit.append(mis)
        result.regularization.append(rg)
        result.iterations += 1
    result.H = ScalarField(H)
    if H_true is not None:
        result.rel_error = interior_l2_error(mesh, H, H_true)
    return result


def add_noise(data, sigma, seed=0):
    """Copy of ``data`` with Gaussian noise of standard deviation ``sigma`` on Neumann traces."""
    rng = np.random.default_rng(seed)
    pairs = [CauchyDataPair(p.dirichlet, BoundaryFunction(p.neumann.values + sigma * rng.standard_normal(len(p.neumann))))
             for p in data.pairs]
    return DNDataset(level=data.level, f0=data.f0, H_trace=data.H_trace,
                     directions=list(data.directions), pairs=pairs)


def morozov_select(mesh, data, H_boundary, regs, noise_level, tau=1.1, **kw):
    """Largest ``reg`` in ``regs`` whose final misfit is within ``tau`` of the noise level.

    ``noise_level`` is the expected value of the data misfit at the truth.
    Returns ``(reg, result)``; falls back to the smallest ``reg``.
    """
    last = None
    for reg in sorted(regs, reverse=True):
        res = gn_reconstruct(mesh, data, H_boundary, reg, **kw)
        last = (reg, res)
        if res.misfit[-1] <= tau * noise_level:
            return last
    return last


@dataclass(eq=False)
class UniquenessReport:
    dn_gap: float
    source_gap: float
    taus: list = field(default_factory=list)
    dn_gaps: list = field(default_factory=list)
    source_gaps: list = field(default_factory=list)
    monotone: bool = True


def _dn_gap(mesh, H, Ht, f0, directions, opts):
    f0 = nodal(f0)
    w = 2.0 * np.pi / mesh.n_boundary
    gap = 0.0
    for g in [np.zeros_like(f0)] + [nodal(d) for d in directions]:
        a, _ = solve_state(mesh, H, f0 + g, opts)
        b, _ = solve_state(mesh, Ht, f0 + g, opts)
        gap = max(gap, float(np.sqrt(np.sum((a.dnu - b.dnu) ** 2) * w)))
    return gap


def _source_gap(mesh, H, Ht):
    d = nodal(H) - nodal(Ht)
    return float(np.sqrt(d @ (fem.mass(mesh) @ d)))


def uniqueness_probe(mesh, H, Ht, f0, directions, opts=None, tol=1e-12):
    """DN-data gap and source gap for two sources with equal boundary traces."""
    H, Ht = nodal(H), nodal(Ht)
    B = mesh.boundary_nodes
    if np.max(np.abs(H[B] - Ht[B])) > tol:
        raise PreconditionError("sources must share their boundary trace")
    return UniquenessReport(dn_gap=_dn_gap(mesh, H, Ht, f0, directions, opts),
                            source_gap=_source_gap(mesh, H, Ht))


def uniqueness_sweep(mesh, H, rho, taus, f0, directions, opts=None):
    """Gaps for ``H + tau rho`` over ``taus``; ``monotone`` if the DN gap strictly increases."""
    H, rho = nodal(H), nodal(rho)
    if np.max(np.abs(rho[mesh.boundary_nodes])) > 0:
        raise PreconditionError("perturbation must vanish on the boundary")
    rep = UniquenessReport(dn_gap=0.0, source_gap=0.0)
    for t in taus:
        rep.taus.append(float(t))
        rep.dn_gaps.append(_dn_gap(mesh, H, H + t * rho, f0, directions, opts))
        rep.source_gaps.append(_source_gap(mesh, H, H + t * rho))
    rep.dn_gap, rep.source_gap = rep.dn_gaps[-1], rep.source_gaps[-1]
    rep.monotone = bool(np.all(np.diff(rep.dn_gaps) > 0))
    return rep
