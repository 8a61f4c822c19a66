"""Triangulated unit disk, boundary calculus and quadrature.

The disk mesh uses a concentric hexagonal-ring topology: ring ``k`` of a
level-``L`` mesh (``n = 2**L`` rings) carries ``6k`` nodes. Boundary nodes sit
exactly on the unit circle at uniform angles. Interior nodes are then moved to
the uniform-weight harmonic (Tutte) embedding of the graph, which keeps every
triangle positively oriented and makes the mesh a smooth image of the
hexagonal lattice. Without that relaxation the ring layout has kinks along the
six sector lines where the nodal P1 Laplacian is O(1) inconsistent.
"""
from dataclasses import dataclass
from functools import cached_property

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from scipy.spatial import cKDTree

from . import kernels
from .errors import ConfigurationError

MAX_LEVEL = 8


@dataclass(frozen=True, eq=False)
class Mesh:
    """Immutable P1 triangulation of (a polygonal approximation of) the unit disk.

    Attributes
    ----------
    nodes : (N, 2) float array
    triangles : (nt, 3) int64 array, counterclockwise
    boundary_edges : (Nb, 2) int64 array, closed loop traversed counterclockwise
    boundary_nodes : (Nb,) int64 array, ``boundary_edges[:, 0]``
    h_max : float, longest edge
    level : int, refinement level (-1 for meshes not made by the generator)
    """

    nodes: np.ndarray
    triangles: np.ndarray
    boundary_edges: np.ndarray
    boundary_nodes: np.ndarray
    h_max: float
    level: int = -1

    def __post_init__(self):
        for name in ("nodes", "triangles", "boundary_edges", "boundary_nodes"):
            arr = np.ascontiguousarray(getattr(self, name))
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    @property
    def n_nodes(self):
        return self.nodes.shape[0]

    @property
    def n_triangles(self):
        return self.triangles.shape[0]

    @property
    def n_boundary(self):
        return self.boundary_nodes.shape[0]

    @cached_property
    def _geometry(self):
        area, grads = kernels.element_geometry(
            np.ascontiguousarray(self.nodes, dtype=float),
            np.ascontiguousarray(self.triangles, dtype=np.int64))
        area.setflags(write=False)
        grads.setflags(write=False)
        return area, grads

    @property
    def areas(self):
        """Signed triangle areas."""
        return self._geometry[0]

    @property
    def grads(self):
        """(nt, 3, 2) gradients of the local hat functions."""
        return self._geometry[1]

    @cached_property
    def centroids(self):
        return self.nodes[self.triangles].mean(axis=1)

    @cached_property
    def is_boundary(self):
        mask = np.zeros(self.n_nodes, dtype=bool)
        mask[self.boundary_nodes] = True
        mask.setflags(write=False)
        return mask

    @cached_property
    def interior_nodes(self):
        idx = np.flatnonzero(~self.is_boundary)
        idx.setflags(write=False)
        return idx

    @cached_property
    def theta(self):
        """Angles of the boundary nodes, in loop order."""
        b = self.nodes[self.boundary_nodes]
        return np.arctan2(b[:, 1], b[:, 0])

    @cached_property
    def csr_pattern(self):
        """(indptr, indices, slots) of the P1 sparsity pattern.

        ``slots[9*e + 3*i + j]`` is the CSR data position of the local entry
        (i, j) of triangle ``e``.
        """
        n = self.n_nodes
        t = self.triangles
        rows = np.repeat(t, 3, axis=1).reshape(-1)
        cols = np.tile(t, (1, 3)).reshape(-1)
        keys = rows * n + cols
        uniq, slots = np.unique(keys, return_inverse=True)
        indices = (uniq % n).astype(np.int64)
        counts = np.bincount(uniq // n, minlength=n)
        indptr = np.concatenate([[0], np.cumsum(counts)]).astype(np.int64)
        return indptr, indices, np.ascontiguousarray(slots.reshape(-1), dtype=np.int64)

    def csr(self, data):
        indptr, indices, _ = self.csr_pattern
        return sp.csr_matrix((data, indices.copy(), indptr.copy()), shape=(self.n_nodes, self.n_nodes))

    @cached_property
    def _centroid_tree(self):
        return cKDTree(self.centroids)

    def locate(self, points, k=12):
        """Containing triangle and barycentric coordinates for each point.

        Points outside the polygon (e.g. in the thin gap between the polygon
        and the circle) are assigned to the nearby triangle whose smallest
        barycentric coordinate is largest, i.e. linear extrapolation.
        """
        points = np.atleast_2d(np.asarray(points, dtype=float))
        k = min(k, self.n_triangles)
        _, cand = self._centroid_tree.query(points, k=k)
        cand = cand.reshape(points.shape[0], k)
        p = self.nodes[self.triangles[cand]]  # (m, k, 3, 2)
        v0 = p[:, :, 1] - p[:, :, 0]
        v1 = p[:, :, 2] - p[:, :, 0]
        d = points[:, None, :] - p[:, :, 0]
        det = v0[..., 0] * v1[..., 1] - v0[..., 1] * v1[..., 0]
        l1 = (d[..., 0] * v1[..., 1] - d[..., 1] * v1[..., 0]) / det
        l2 = (v0[..., 0] * d[..., 1] - v0[..., 1] * d[..., 0]) / det
        bary = np.stack([1.0 - l1 - l2, l1, l2], axis=-1)
        best = np.argmax(bary.min(axis=-1), axis=1)
        rows = np.arange(points.shape[0])
        return cand[rows, best], bary[rows, best]

    def interpolate(self, values, points):
        """Evaluate the P1 interpolant of nodal ``values`` at ``points``."""
        tri, bary = self.locate(points)
        return np.einsum("mi,mi->m", np.asarray(values)[self.triangles[tri]], bary)


def _ring_index(k, j):
    if k == 0:
        return 0
    return 1 + 3 * k * (k - 1) + (j % (6 * k))


def _ring_topology(n):
    tris = []
    for k in range(1, n + 1):
        for s in range(6):
            for m in range(k):
                tris.append((_ring_index(k - 1, s * (k - 1) + m),
                             _ring_index(k, s * k + m),
                             _ring_index(k, s * k + m + 1)))
            for m in range(k - 1):
                tris.append((_ring_index(k - 1, s * (k - 1) + m),
                             _ring_index(k, s * k + m + 1),
                             _ring_index(k - 1, s * (k - 1) + m + 1)))
    return np.array(tris, dtype=np.int64)


def _edges(triangles):
    e = np.concatenate([triangles[:, [0, 1]], triangles[:, [1, 2]], triangles[:, [2, 0]]])
    return np.unique(np.sort(e, axis=1), axis=0)


def generate_disk_mesh(refinement_level, relax=True):
    """Concentric-ring triangulation of the unit disk.

    Parameters
    ----------
    refinement_level : int
        ``0 <= L <= MAX_LEVEL``; the mesh has ``2**L`` rings and
        ``6 * 2**L`` boundary nodes.
    relax : bool
        Move interior nodes to the harmonic embedding (default). Disable only
        to inspect the raw ring layout.
    """
    level = int(refinement_level)
    if level != refinement_level or level < 0 or level > MAX_LEVEL:
        raise ConfigurationError(f"refinement level must be an integer in [0, {MAX_LEVEL}], got {refinement_level!r}")
    n = 2 ** level
    n_nodes = 1 + 3 * n * (n + 1)
    nodes = np.zeros((n_nodes, 2))
    for k in range(1, n + 1):
        ang = 2.0 * np.pi * np.arange(6 * k) / (6 * k)
        sl = slice(_ring_index(k, 0), _ring_index(k, 0) + 6 * k)
        nodes[sl, 0] = k / n * np.cos(ang)
        nodes[sl, 1] = k / n * np.sin(ang)
    triangles = _ring_topology(n)
    boundary_nodes = np.arange(n_nodes - 6 * n, n_nodes, dtype=np.int64)
    boundary_edges = np.stack([boundary_nodes, np.roll(boundary_nodes, -1)], axis=1)

    edges = _edges(triangles)
    if relax and n > 1:
        w = np.ones(edges.shape[0])
        adj = sp.coo_matrix((np.concatenate([w, w]),
                             (np.concatenate([edges[:, 0], edges[:, 1]]),
                              np.concatenate([edges[:, 1], edges[:, 0]]))),
                            shape=(n_nodes, n_nodes)).tocsr()
        lap = sp.diags(np.asarray(adj.sum(axis=1)).ravel()) - adj
        interior = np.arange(n_nodes - 6 * n)
        lii = lap[interior][:, interior].tocsc()
        lib = lap[interior][:, boundary_nodes]
        rhs = -lib @ nodes[boundary_nodes]
        nodes[interior] = spla.splu(lii).solve(rhs)

    seg = nodes[edges[:, 1]] - nodes[edges[:, 0]]
    h_max = float(np.sqrt((seg ** 2).sum(axis=1)).max())
    return Mesh(nodes=nodes, triangles=triangles, boundary_edges=boundary_edges,
                boundary_nodes=boundary_nodes, h_max=h_max, level=level)


def check_mesh(mesh, tol=1e-12):
    """Raise ``ValueError`` if ``mesh`` violates a Mesh invariant."""
    if np.any(mesh.areas <= 0):
        raise ValueError("non-positive triangle area")
    be = mesh.boundary_edges
    if not np.array_equal(be[:, 1], np.roll(be[:, 0], -1)):
        raise ValueError("boundary edges do not form a closed loop")
    if len(np.unique(be[:, 0])) != be.shape[0]:
        raise ValueError("boundary loop visits a node twice")
    r = np.hypot(*mesh.nodes[mesh.boundary_nodes].T)
    if np.max(np.abs(r - 1.0)) > tol:
        raise ValueError("boundary node off the unit circle")
    pts = mesh.nodes[be]
    signed = 0.5 * np.sum(pts[:, 0, 0] * pts[:, 1, 1] - pts[:, 1, 0] * pts[:, 0, 1])
    if signed <= 0:
        raise ValueError("boundary loop is not counterclockwise")
    t = mesh.triangles
    e = np.sort(np.concatenate([t[:, [0, 1]], t[:, [1, 2]], t[:, [2, 0]]]), axis=1)
    uniq, counts = np.unique(e, axis=0, return_counts=True)
    bset = {tuple(sorted(x)) for x in be.tolist()}
    for edge, c in zip(map(tuple, uniq.tolist()), counts):
        expected = 1 if edge in bset else 2
        if c != expected:
            raise ValueError(f"edge {edge} shared by {c} triangles")
    return True


def boundary_frame(mesh):
    """Unit tangent and outward normal at each boundary node.

    On the unit circle the normal is the position vector and the tangent is
    its counterclockwise rotation.
    """
    th = mesh.theta
    normal = np.stack([np.cos(th), np.sin(th)], axis=1)
    tangent = np.stack([-np.sin(th), np.cos(th)], axis=1)
    return tangent, normal


@dataclass(frozen=True, eq=False)
class BoundaryFunction:
    """Values at the boundary nodes of a mesh, in loop order.

    Boundary nodes sit at uniform angles ``theta_j = 2 pi j / N`` (the
    generator starts the loop at angle 0), so the Fourier view is a real DFT.
    """

    values: np.ndarray

    def __post_init__(self):
        v = np.array(self.values, dtype=float).reshape(-1)
        if not np.all(np.isfinite(v)):
            raise ValueError("boundary values must be finite")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    def __len__(self):
        return self.values.shape[0]

    @property
    def theta(self):
        n = len(self)
        return 2.0 * np.pi * np.arange(n) / n

    @classmethod
    def from_callable(cls, mesh_or_n, func):
        """Sample ``func(theta)`` at the boundary angles."""
        n = mesh_or_n if isinstance(mesh_or_n, (int, np.integer)) else mesh_or_n.n_boundary
        return cls(func(2.0 * np.pi * np.arange(n) / n))

    @classmethod
    def zeros(cls, mesh_or_n):
        return cls.from_callable(mesh_or_n, lambda th: np.zeros_like(th))

    @classmethod
    def trace(cls, mesh, nodal):
        """Restriction of a nodal array to the boundary nodes."""
        return cls(np.asarray(nodal)[mesh.boundary_nodes])

    def fourier(self, K=None):
        """Coefficients ``(a, b)`` with ``f = sum_k a_k cos k th + b_k sin k th``.

        ``a`` and ``b`` have length ``K_eff + 1`` and ``b[0] = 0``. The view is
        complete, hence round-trips exactly, once ``K >= N/2 - 1``: in that
        case the Nyquist cosine is always included.
        """
        n = len(self)
        kmax = n // 2
        if K is None or K >= kmax - 1:
            K = kmax
        c = np.fft.rfft(self.values) / n
        a = 2.0 * c.real[:K + 1]
        b = -2.0 * c.imag[:K + 1]
        a[0] = c[0].real
        b[0] = 0.0
        if n % 2 == 0 and K == kmax:
            a[kmax] = c[kmax].real
            b[kmax] = 0.0
        return a, b

    @classmethod
    def from_fourier(cls, a, b, n):
        th = 2.0 * np.pi * np.arange(n) / n
        k = np.arange(len(a))
        vals = np.cos(np.outer(th, k)) @ np.asarray(a, float) + np.sin(np.outer(th, k)) @ np.asarray(b, float)
        return cls(vals)

    def integral(self):
        """Trapezoidal integral over the circle (spectrally accurate)."""
        return float(self.values.sum() * 2.0 * np.pi / len(self))

    def l2(self):
        return float(np.sqrt((self.values ** 2).sum() * 2.0 * np.pi / len(self)))

    def __add__(self, other):
        return BoundaryFunction(self.values + _vals(other))

    def __sub__(self, other):
        return BoundaryFunction(self.values - _vals(other))

    def __mul__(self, s):
        return BoundaryFunction(self.values * _vals(s))

    __rmul__ = __mul__

    def __neg__(self):
        return BoundaryFunction(-self.values)


def _vals(x):
    return x.values if isinstance(x, BoundaryFunction) else x


def tangential_derivative(f, order=1):
    """Spectral derivative of ``f`` in the angle (arc length on the unit circle).

    The Nyquist mode is dropped for odd orders; for ``order=2`` it is kept,
    which is exact for the sampled ``cos(N th / 2)``.
    """
    if order not in (1, 2):
        raise ValueError(f"order must be 1 or 2, got {order!r}")
    vals = f.values if isinstance(f, BoundaryFunction) else np.asarray(f, float)
    n = vals.shape[0]
    c = np.fft.rfft(vals)
    k = np.arange(c.shape[0])
    if order == 1:
        c = c * (1j * k)
        if n % 2 == 0:
            c[-1] = 0.0
    else:
        c = c * (-(k.astype(float) ** 2))
    return BoundaryFunction(np.fft.irfft(c, n))


# Radon's seven-point rule, exact for degree 5 (barycentric coords, weights sum to 1).
_S15 = np.sqrt(15.0)
_A1, _B1 = (6 - _S15) / 21, (9 + 2 * _S15) / 21
_A2, _B2 = (6 + _S15) / 21, (9 - 2 * _S15) / 21
QUAD7_BARY = np.array([
    [1 / 3, 1 / 3, 1 / 3],
    [_A1, _A1, _B1], [_A1, _B1, _A1], [_B1, _A1, _A1],
    [_A2, _A2, _B2], [_A2, _B2, _A2], [_B2, _A2, _A2],
])
QUAD7_W = np.array([9 / 40] + [(155 - _S15) / 1200] * 3 + [(155 + _S15) / 1200] * 3)


def quadrature_points(mesh):
    """Physical points (nt, 7, 2) and weights (nt, 7) of the degree-5 rule."""
    p = mesh.nodes[mesh.triangles]
    pts = np.einsum("qi,eia->eqa", QUAD7_BARY, p)
    w = mesh.areas[:, None] * QUAD7_W[None, :]
    return pts, w


def l2_error_vs_function(mesh, nodal, func):
    """L2 norm over the mesh of ``P1(nodal) - func``; ``func(x, y)`` vectorized."""
    pts, w = quadrature_points(mesh)
    uh = np.einsum("qi,ei->eq", QUAD7_BARY, np.asarray(nodal)[mesh.triangles])
    ex = func(pts[..., 0], pts[..., 1])
    return float(np.sqrt(np.sum(w * (uh - ex) ** 2)))


def boundary_length(mesh):
    seg = mesh.nodes[mesh.boundary_edges[:, 1]] - mesh.nodes[mesh.boundary_edges[:, 0]]
    return float(np.sqrt((seg ** 2).sum(axis=1)).sum())
