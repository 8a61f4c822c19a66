"""Complex geometrical optics (CGO) solutions on a uniform grid.

Solutions of ``(Delta_g + q) v = 0`` for a conformal metric ``g = c I`` have
the form ``v = exp(Phi/h) (a + r_h)`` with ``Phi`` holomorphic, ``a``
holomorphic and

    s_h = sum_j T_h^j dbar_psi^{*-1}(Q a),     r_h = -dbar_psi^{-1} s_h,
    T_h = -dbar_psi^{*-1} Q dbar_psi^{-1},

where ``psi = Im Phi``, ``dbar_psi^{-1} f = dbar^{-1}(exp(-2i psi/h) E f)``,
``dbar_psi^{*-1} f = d^{-1}(exp(2i psi/h) E f)`` and ``E`` is a smooth
cutoff extension. With ``Delta = 4 d dbar`` the potential entering the series
is ``Q = c q / 4``; then ``4 (d + Phi'/h) dbar r_h + c q (a + r_h) = 0`` on
the region where the cutoff equals one.

Grid layout: ``values[iy, ix]`` with cell centres
``x_k = -L + (k + 1/2) dx``; ``L = 1.2`` by default.
"""
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
import scipy.fft as sfft

from .dnmap import fit_slope
from .errors import ContractionError, PreconditionError

HALF_WIDTH = 1.2
Q_SUPPORT = 1.1
MIN_SPAN = 8.0  # ratio h_max / h_min required by decay_study (0.05..0.4 is the reference sweep)


# ------------------------------------------------------------------------ grid

@dataclass(frozen=True, eq=False)
class Grid:
    n: int
    half_width: float = HALF_WIDTH

    @property
    def dx(self):
        return 2.0 * self.half_width / self.n

    @property
    def x(self):
        return -self.half_width + (np.arange(self.n) + 0.5) * self.dx

    @property
    def origin(self):
        return (float(self.x[0]), float(self.x[0]))

    @property
    def z(self):
        x = self.x
        return x[None, :] + 1j * x[:, None]

    @property
    def r(self):
        return np.abs(self.z)

    @property
    def disk(self):
        """Mask of the unit disk (the surface Sigma)."""
        return self.r <= 1.0

    def integrate(self, f, mask=None):
        f = np.asarray(f)
        if mask is not None:
            f = np.where(mask, f, 0.0)
        return np.sum(f) * self.dx ** 2

    def norm(self, f, p=2, mask="disk"):
        """L^p norm of ``f`` over ``mask`` (default: the unit disk)."""
        m = self.disk if isinstance(mask, str) and mask == "disk" else mask
        a = np.abs(np.asarray(f))
        if m is not None:
            a = a[m]
        return float((np.sum(a ** p) * self.dx ** 2) ** (1.0 / p))


def make_grid(dx_max, half_width=HALF_WIDTH):
    """Smallest even-sized grid on ``[-L, L]^2`` with spacing at most ``dx_max``."""
    n = int(np.ceil(2.0 * half_width / dx_max))
    n += n % 2
    return Grid(n=n, half_width=half_width)


@dataclass(frozen=True, eq=False)
class ComplexGridField:
    values: np.ndarray
    grid: Grid

    def __post_init__(self):
        v = np.array(self.values, dtype=complex)
        if v.shape != (self.grid.n, self.grid.n):
            raise ValueError("field shape does not match grid")
        if not np.all(np.isfinite(v)):
            raise ValueError("grid field must be finite")
        object.__setattr__(self, "values", v)

    @property
    def spacing(self):
        return self.grid.dx


def smooth_step(t):
    """C-infinity step: 0 for t <= 0, 1 for t >= 1."""
    t = np.clip(np.asarray(t, float), 0.0, 1.0)
    a = np.where(t > 0, np.exp(-1.0 / np.maximum(t, 1e-300)), 0.0)
    b = np.where(t < 1, np.exp(-1.0 / np.maximum(1.0 - t, 1e-300)), 0.0)
    return a / (a + b)


def cutoff(r, r_in, r_out):
    """Smooth radial cutoff, 1 for ``r <= r_in`` and 0 for ``r >= r_out``."""
    return 1.0 - smooth_step((np.asarray(r) - r_in) / (r_out - r_in))


def extend_potential(grid, q, r_in=1.0, r_out=Q_SUPPORT):
    """Grid potential ``chi q`` with ``chi`` a cutoff supported in ``r < r_out``.

    ``q`` is a callable ``q(x, y)`` or an array on the grid.
    """
    vals = q(grid.z.real, grid.z.imag) if callable(q) else np.asarray(q)
    return ComplexGridField(vals * cutoff(grid.r, r_in, r_out), grid)


def extension_cutoff(grid):
    """Cutoff used as the extension operator ``E``: 1 on ``r <= 1.1``, 0 near the grid edge."""
    r_out = grid.half_width - 2.0 * grid.dx
    if r_out - Q_SUPPORT < 2.0 * grid.dx - 1e-12:
        raise PreconditionError(f"grid spacing {grid.dx:.4g} leaves no room for the extension cutoff "
                                f"(need <= {(grid.half_width - Q_SUPPORT) / 4:.4g})")
    return cutoff(grid.r, Q_SUPPORT, r_out)


# ------------------------------------------------------------- Cauchy transform

def _prim_x(x, y, crosses_x):
    """Antiderivative F with F_xy = x / (x^2 + y^2).

    Two branches are used so that F is smooth on the integration rectangle:
    ``x atan(y/x)`` when the rectangle does not meet ``x = 0``, and
    ``-x atan(x/y)`` (differing by a function of x alone) otherwise.
    """
    base = 0.5 * y * np.log(x * x + y * y) - y
    with np.errstate(divide="ignore", invalid="ignore"):
        a = np.where(crosses_x, -x * np.arctan(x / y), x * np.arctan(y / x))
    return base + a


def _rect_integral_x(x1, x2, y1, y2):
    crosses = (x1 < 0) & (x2 > 0)
    return (_prim_x(x2, y2, crosses) - _prim_x(x1, y2, crosses)
            - _prim_x(x2, y1, crosses) + _prim_x(x1, y1, crosses))


@lru_cache(maxsize=8)
def cauchy_kernel(n, dx):
    """Cell integrals ``(1/pi) int_cell dA(w) / (z - w)`` for offsets ``z - w_k``.

    Returns a (2n-1, 2n-1) complex array indexed by offset
    ``(iy + n - 1, ix + n - 1)``. The singular cell integrates to zero by
    symmetry.
    """
    k = np.arange(-(n - 1), n) * dx
    cx = k[None, :] * np.ones((2 * n - 1, 1))
    cy = k[:, None] * np.ones((1, 2 * n - 1))
    h = 0.5 * dx
    ix = _rect_integral_x(cx - h, cx + h, cy - h, cy + h)
    iy = _rect_integral_x(cy - h, cy + h, cx - h, cx + h)
    K = (ix - 1j * iy) / np.pi
    K[n - 1, n - 1] = 0.0
    return K


@lru_cache(maxsize=8)
def _kernel_fft(n, dx):
    # circular convolution of period >= 2n - 1 leaves the wanted block unaliased
    size = sfft.next_fast_len(2 * n - 1)
    return sfft.fft2(cauchy_kernel(n, dx), s=(size, size), workers=-1), size


def _check_support(f, tol=0.0):
    edge = np.concatenate([f[0], f[-1], f[:, 0], f[:, -1]])
    if np.any(np.abs(edge) > tol):
        raise PreconditionError("field support touches the grid edge")


def cauchy_transform(f, adjoint=False):
    """Discrete solid Cauchy transform ``(1/pi) int f(w) / (z - w) dA(w)``.

    ``f`` is a ComplexGridField (or (grid, array) via :func:`cauchy_transform_array`).
    With ``adjoint=True`` the kernel is ``1/(pi (conj z - conj w))``, a right
    inverse of ``d``. The normalization ``1/pi`` makes ``dbar`` of the
    transform reproduce ``f``.
    """
    return ComplexGridField(cauchy_transform_array(f.grid, f.values, adjoint), f.grid)


def cauchy_transform_array(grid, f, adjoint=False):
    f = np.asarray(f, dtype=complex)
    _check_support(f)
    if adjoint:
        return np.conj(cauchy_transform_array(grid, np.conj(f), False))
    n = grid.n
    kf, size = _kernel_fft(n, grid.dx)
    conv = sfft.ifft2(kf * sfft.fft2(f, s=(size, size), workers=-1), workers=-1)
    return conv[n - 1:2 * n - 1, n - 1:2 * n - 1]


def _diff(f, axis, dx):
    """Fourth-order central difference; second order (central, then one-sided) in the two outer layers."""
    f = np.moveaxis(np.asarray(f), axis, 0)
    out = np.zeros_like(f)
    out[2:-2] = (-f[4:] + 8 * f[3:-1] - 8 * f[1:-3] + f[:-4]) / (12 * dx)
    out[1] = (f[2] - f[0]) / (2 * dx)
    out[-2] = (f[-1] - f[-3]) / (2 * dx)
    out[0] = (-3 * f[0] + 4 * f[1] - f[2]) / (2 * dx)
    out[-1] = (3 * f[-1] - 4 * f[-2] + f[-3]) / (2 * dx)
    return np.moveaxis(out, 0, axis)


def dbar(f, dx):
    """``(d_x + i d_y) / 2`` by finite differences (axis 1 is x, axis 0 is y)."""
    return 0.5 * (_diff(f, 1, dx) + 1j * _diff(f, 0, dx))


def d(f, dx):
    """``(d_x - i d_y) / 2`` by finite differences."""
    return 0.5 * (_diff(f, 1, dx) - 1j * _diff(f, 0, dx))


# ----------------------------------------------------------------------- phase

@dataclass(frozen=True, eq=False)
class CGOPhase:
    """Polynomial phase ``Phi(z) = sum_k coeffs[k] z^k``.

    ``kind="antiholomorphic"`` represents the phase ``-conj(Phi)`` of the
    conjugate construction; ``coeffs`` always stores the holomorphic ``Phi``.
    """

    kind: str
    coeffs: np.ndarray
    critical_points: tuple

    def phi(self, z):
        return np.polynomial.polynomial.polyval(z, self.coeffs)

    def dphi(self, z):
        return np.polynomial.polynomial.polyval(z, np.polynomial.polynomial.polyder(self.coeffs))

    def psi(self, grid):
        """``psi = Im Phi`` on the grid."""
        return self.phi(grid.z).imag

    def is_morse(self, tol=1e-8):
        d2 = np.polynomial.polynomial.polyder(self.coeffs, 2)
        return all(abs(np.polynomial.polynomial.polyval(z, d2)) > tol for z in self.critical_points)


def _critical_points(coeffs):
    der = np.polynomial.polynomial.polyder(np.asarray(coeffs, complex))
    der = np.trim_zeros(der, "b")
    if len(der) <= 1:
        return ()
    return tuple(complex(r) for r in np.polynomial.polynomial.polyroots(der))


def make_phase(kind="holomorphic", z0=None, radius=1.0):
    """Morse phase ``(z - z0)^2 / 2`` when ``z0`` is given, else ``Phi = z``."""
    if kind not in ("holomorphic", "antiholomorphic"):
        raise ValueError(f"unknown phase kind {kind!r}")
    if z0 is None:
        coeffs = np.array([0.0, 1.0], dtype=complex)
    else:
        z0 = complex(z0)
        if abs(z0) >= radius:
            raise PreconditionError("critical point must lie strictly inside the domain")
        coeffs = np.array([z0 * z0 / 2.0, -z0, 0.5], dtype=complex)
    return CGOPhase(kind=kind, coeffs=coeffs, critical_points=_critical_points(coeffs))


def phase_from_coeffs(coeffs, kind="holomorphic"):
    coeffs = np.asarray(coeffs, dtype=complex)
    return CGOPhase(kind=kind, coeffs=coeffs, critical_points=_critical_points(coeffs))


def check_phase_pair(Psi, Phi, radius=1.0):
    """Critical points of ``Phi + Psi`` and ``Phi - Psi``; pass if none lies in the closed disk.

    ``Psi``, ``Phi`` are coefficient arrays (increasing powers) or CGOPhase.
    """
    a = np.asarray(getattr(Psi, "coeffs", Psi), complex)
    b = np.asarray(getattr(Phi, "coeffs", Phi), complex)
    m = max(len(a), len(b))
    a = np.pad(a, (0, m - len(a)))
    b = np.pad(b, (0, m - len(b)))
    plus = _critical_points(b + a)
    minus = _critical_points(b - a)
    ok = all(abs(z) > radius for z in plus + minus)
    return {"plus": plus, "minus": minus, "pass": bool(ok)}


# ---------------------------------------------------------- conjugated inverses

def conjugated_inverse(f, phase, h, flavor="dbar", E=None):
    """``dbar_psi^{-1}`` (flavor "dbar") or ``dbar_psi^{*-1}`` (flavor "dbar_star").

    For an antiholomorphic phase the roles of ``d`` and ``dbar`` are swapped.
    """
    grid = f.grid if isinstance(f, ComplexGridField) else None
    if grid is None:
        raise TypeError("f must be a ComplexGridField")
    return ComplexGridField(_conj_inv(grid, f.values, phase.psi(grid), h, flavor, phase.kind, E), grid)


def _conj_inv(grid, f, psi, h, flavor, kind="holomorphic", E=None):
    if E is None:
        E = extension_cutoff(grid)
    if flavor == "dbar":
        g = np.exp(-2j * psi / h) * E * f
        adjoint = kind == "antiholomorphic"
    elif flavor == "dbar_star":
        g = np.exp(2j * psi / h) * E * f
        adjoint = kind != "antiholomorphic"
    else:
        raise ValueError(f"unknown flavor {flavor!r}")
    return cauchy_transform_array(grid, g, adjoint=adjoint)


@dataclass(eq=False)
class NeumannResult:
    r: np.ndarray
    s: np.ndarray
    terms: int
    term_norms: list
    ratio: float
    tail_bound: float


def neumann_remainder(q, a, phase, h, tol=1e-10, c=1.0, max_terms=200, max_ratio=0.9):
    """Series ``s_h = sum_j T_h^j dbar_psi^{*-1}(Q a)`` and ``r_h = -dbar_psi^{-1} s_h``.

    The series stops when a term's L2 norm (over the grid) drops below
    ``tol`` times the first term's. ``ratio`` is the measured contraction
    ``|T s_0| / |s_0|``; if it is not below ``max_ratio`` the construction is
    refused with :class:`ContractionError`.
    """
    grid = q.grid
    Q = c * q.values / 4.0
    a = np.asarray(getattr(a, "values", a), dtype=complex)
    psi = phase.psi(grid)
    E = extension_cutoff(grid)
    kind = phase.kind

    def dinv(f):
        return _conj_inv(grid, f, psi, h, "dbar", kind, E)

    def dinv_star(f):
        return _conj_inv(grid, f, psi, h, "dbar_star", kind, E)

    def T(f):
        return -dinv_star(Q * dinv(f))

    def nrm(f):
        return float(np.sqrt(np.sum(np.abs(f) ** 2)) * grid.dx)

    term = dinv_star(Q * a)
    s = term.copy()
    n0 = nrm(term)
    norms = [n0]
    if n0 == 0.0:
        return NeumannResult(r=np.zeros_like(s), s=s, terms=1, term_norms=norms, ratio=0.0, tail_bound=0.0)
    ratio = None
    count = 1
    while norms[-1] >= tol * n0:
        if count >= max_terms:
            break
        term = T(term)
        nt = nrm(term)
        if ratio is None:
            ratio = nt / n0
            if ratio >= max_ratio:
                raise ContractionError(f"T_h not contracting at h={h}: measured ratio {ratio:.3f}", ratio)
        s = s + term
        norms.append(nt)
        count += 1
    ratio = ratio if ratio is not None else 0.0
    rate = max(ratio, norms[-1] / norms[-2] if len(norms) > 1 and norms[-2] > 0 else 0.0)
    tail = norms[-1] * rate / (1.0 - rate) if rate < 1 else float("inf")
    r = -dinv(s)
    return NeumannResult(r=r, s=s, terms=count, term_norms=norms, ratio=ratio, tail_bound=tail)


@dataclass(eq=False)
class CGOSolution:
    phase: CGOPhase
    a: ComplexGridField
    r: ComplexGridField
    s: ComplexGridField
    h: float
    terms: int
    norms: dict = field(default_factory=dict)
    residual: float = float("nan")

    def vhat(self):
        """``exp(Phi/h)(a + r)`` (holomorphic) or ``exp(-conj Phi / h)(b + r)``; may overflow for tiny h."""
        z = self.a.grid.z
        ph = self.phase.phi(z)
        ph = ph if self.phase.kind == "holomorphic" else -np.conj(ph)
        return np.exp(ph / self.h) * (self.a.values + self.r.values)


def cgo_residual(grid, phase, h, q, a, r, c=1.0):
    """Relative residual of the conjugated equation on the unit disk.

    Holomorphic: ``4 (d + Phi'/h) dbar r + c q (a + r)``; antiholomorphic:
    ``4 (dbar - conj(Phi')/h) d r + c q (b + r)``. Normalized by
    ``|c q (a + r)|``; both measured in L2 over ``|z| <= 1``.
    """
    dx = grid.dx
    z = grid.z
    cq = c * np.asarray(getattr(q, "values", q))
    av = np.asarray(getattr(a, "values", a))
    if phase.kind == "holomorphic":
        lhs = 4.0 * (d(dbar(r, dx), dx) + phase.dphi(z) / h * dbar(r, dx))
    else:
        lhs = 4.0 * (dbar(d(r, dx), dx) - np.conj(phase.dphi(z)) / h * d(r, dx))
    res = lhs + cq * (av + r)
    den = grid.norm(cq * (av + r))
    return grid.norm(res) / den if den > 0 else grid.norm(res)


def build_cgo(q, a, phase, h, tol=1e-10, c=1.0):
    """CGO solution with norm diagnostics and the PDE residual."""
    grid = q.grid
    av = np.asarray(getattr(a, "values", a), dtype=complex)
    nr = neumann_remainder(q, av, phase, h, tol=tol, c=c)
    dx = grid.dx
    grad_r = np.sqrt(np.abs(_diff(nr.r, 1, dx)) ** 2 + np.abs(_diff(nr.r, 0, dx)) ** 2)
    norms = {
        "r_L2": grid.norm(nr.r), "s_L2": grid.norm(nr.s), "grad_r_L2": grid.norm(grad_r),
        "r_L4": grid.norm(nr.r, 4), "s_L4": grid.norm(nr.s, 4),
        "ratio": nr.ratio, "tail_bound": nr.tail_bound,
    }
    res = cgo_residual(grid, phase, h, q, av, nr.r, c)
    return CGOSolution(phase=phase, a=ComplexGridField(av, grid), r=ComplexGridField(nr.r, grid),
                       s=ComplexGridField(nr.s, grid), h=h, terms=nr.terms, norms=norms, residual=res)


def default_h_list(n=6, h_max=0.4, h_min=0.05):
    return [float(h) for h in np.geomspace(h_max, h_min, n)]


@dataclass(eq=False)
class DecayReport:
    h: list
    norms: list
    slope: float
    target: float
    passed: bool
    label: str = ""


def decay_study(phase, q, a, h_list, target=None, quantity="r_L2", tol=1e-10):
    """Log-log slope of a remainder norm against ``h``.

    Default targets: 0.45 when the phase has a critical point in the disk,
    0.9 otherwise.
    """
    h_list = [float(h) for h in h_list]
    if len(h_list) < 4:
        raise PreconditionError("decay study needs at least 4 values of h")
    if max(h_list) / min(h_list) < MIN_SPAN - 1e-9:
        raise PreconditionError(f"h values must span a factor of at least {MIN_SPAN}")
    grid = q.grid
    if grid.dx > min(h_list) / 8.0 + 1e-15:
        raise PreconditionError(f"grid spacing {grid.dx:.4g} exceeds h_min/8")
    if target is None:
        crit = any(abs(z) < 1.0 for z in phase.critical_points)
        target = 0.45 if crit else 0.9
    norms = []
    for h in h_list:
        if not np.any(q.values) or not np.any(np.asarray(getattr(a, "values", a))):
            norms.append(0.0)
            continue
        sol = build_cgo(q, a, phase, h, tol=tol)
        norms.append(sol.norms[quantity])
    if all(v == 0.0 for v in norms):
        return DecayReport(h=h_list, norms=norms, slope=float("inf"), target=target, passed=True)
    if any(v <= 0.0 for v in norms):
        raise ValueError("degenerate fit: zero norm in sweep")
    slope = fit_slope(h_list, norms)
    return DecayReport(h=h_list, norms=norms, slope=slope, target=target, passed=slope >= target)


# ------------------------------------------------------------ stationary phase

def oscillatory_integral(grid, amplitude, phase, h):
    """``(1/h) int A exp((2 Phi - 2 conj Phi)/h) dA = (1/h) int A exp(4 i psi / h) dA``."""
    A = np.asarray(getattr(amplitude, "values", amplitude))
    return complex(np.sum(A * np.exp(4j * phase.psi(grid) / h)) * grid.dx ** 2 / h)


def _richardson_limit(h, vals, degree=2):
    """Value at ``h = 0`` of the least-squares polynomial of ``degree`` in ``h``."""
    h = np.asarray(h, float)
    vals = np.asarray(vals, complex)
    V = np.vander(h, degree + 1, increasing=True)
    cr, *_ = np.linalg.lstsq(V, vals.real, rcond=None)
    ci, *_ = np.linalg.lstsq(V, vals.imag, rcond=None)
    return complex(cr[0], ci[0])


@lru_cache(maxsize=1)
def stationary_phase_constant(n=1024, half_width=7.0):
    """``C_sp`` by brute force on the Gaussian model.

    Evaluates ``(1/h) int exp(-|z|^2) exp(4 i x y / h) dA`` by dense midpoint
    quadrature for several ``h`` and extrapolates to ``h = 0``. The value is
    the limit of ``(1/h) int A exp(4 i psi/h)`` divided by ``A(z0)`` for the
    Morse phase ``(z - z0)^2 / 2``.
    """
    x = -half_width + (np.arange(n) + 0.5) * (2 * half_width / n)
    dx = x[1] - x[0]
    X, Y = np.meshgrid(x, x)
    gauss = np.exp(-(X * X + Y * Y))
    hs = np.array([0.4, 0.3, 0.2, 0.15, 0.1])
    vals = [np.sum(gauss * np.exp(4j * X * Y / h)) * dx * dx / h for h in hs]
    return _richardson_limit(hs, vals, degree=3).real


@dataclass(eq=False)
class StationaryPhaseResult:
    h: list
    values: list
    limit: complex
    prediction: complex
    rel_error: float
    c_sp: float


def stationary_phase_probe(amplitude, phase, h_list, degree=2):
    """Extrapolated ``(1/h) int A exp(4 i psi/h)`` versus ``C_sp A(z0)``."""
    grid = amplitude.grid
    if len(phase.critical_points) != 1:
        raise PreconditionError("probe needs exactly one critical point")
    z0 = phase.critical_points[0]
    if abs(z0.real) >= grid.half_width or abs(z0.imag) >= grid.half_width:
        raise PreconditionError("critical point outside the grid")
    vals = [oscillatory_integral(grid, amplitude, phase, h) for h in h_list]
    limit = _richardson_limit(h_list, vals, degree)
    A = amplitude.values
    a0 = complex(_bilinear(grid, A, z0))
    c_sp = stationary_phase_constant()
    pred = c_sp * a0
    if abs(pred) > 0:
        err = abs(limit - pred) / abs(pred)
    else:
        err = abs(limit)
    return StationaryPhaseResult(h=list(h_list), values=vals, limit=limit, prediction=pred,
                                 rel_error=float(err), c_sp=c_sp)


def _bilinear(grid, A, z):
    fx = (z.real - grid.x[0]) / grid.dx
    fy = (z.imag - grid.x[0]) / grid.dx
    i, j = int(np.floor(fx)), int(np.floor(fy))
    tx, ty = fx - i, fy - j
    return ((1 - tx) * (1 - ty) * A[j, i] + tx * (1 - ty) * A[j, i + 1]
            + (1 - tx) * ty * A[j + 1, i] + tx * ty * A[j + 1, i + 1])


def boundary_pairing(grid, f, r, psi_hat, h):
    """``int_Sigma exp(i psi_hat / h) f r_h`` over the unit disk."""
    return complex(grid.integrate(np.exp(1j * psi_hat / h) * f * r, grid.disk))


def pairing_decay(q, a, phase, f, h_list, psi_hat=None, tol=1e-10):
    """Slope of ``|int exp(i psi_hat/h) f r_h|`` against ``h``.

    ``f`` should vanish on the unit circle; ``psi_hat`` defaults to
    ``4 psi`` (the oscillation of ``exp((2 Phi - 2 conj Phi)/h)``).
    Returns ``(values, slope)``.
    """
    grid = q.grid
    ph = 4.0 * phase.psi(grid) if psi_hat is None else np.asarray(psi_hat)
    vals = []
    for h in h_list:
        sol = build_cgo(q, a, phase, h, tol=tol)
        vals.append(abs(boundary_pairing(grid, f, sol.r.values, ph, h)))
    return vals, fit_slope(h_list, vals)
