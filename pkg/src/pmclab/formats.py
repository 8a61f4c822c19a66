"""Plain-text file formats.

Every file starts with a header line ``# pmclab-<kind> v<version>`` followed
by optional ``# key=value`` lines. Floats are written with ``repr`` (shortest
round-trip form), so nodal files round-trip exactly and write -> read ->
write is byte-identical. DN datasets store Fourier coefficients; their
boundary values round-trip to rounding error only. Layouts are documented in
``docs/formats.md``.
"""
import csv
import io
import json
import os

import numpy as np

from .dnmap import CauchyDataPair, DNDataset
from .fields import ScalarField, nodal
from .mesh import BoundaryFunction, Mesh, _edges

VERSION = 1


class FormatError(ValueError):
    pass


def _f(x):
    return repr(float(x))


def _header(kind, **meta):
    lines = [f"# pmclab-{kind} v{VERSION}"]
    lines += [f"# {k}={v}" for k, v in meta.items()]
    return lines


def _write(path, lines):
    with open(path, "w", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")


def _read(path, kind):
    with open(path) as fh:
        lines = fh.read().splitlines()
    if not lines or not lines[0].startswith(f"# pmclab-{kind} v"):
        raise FormatError(f"{path}: not a pmclab-{kind} file")
    version = int(lines[0].rsplit("v", 1)[1])
    if version > VERSION:
        raise FormatError(f"{path}: unsupported version {version}")
    meta = {}
    i = 1
    while i < len(lines) and lines[i].startswith("# ") and "=" in lines[i]:
        k, v = lines[i][2:].split("=", 1)
        meta[k.strip()] = v.strip()
        i += 1
    return meta, lines[i:]


# ------------------------------------------------------------------------ mesh

def write_mesh(path, mesh):
    out = _header("mesh", level=mesh.level)
    out.append("#nodes x y")
    out += [f"{_f(x)} {_f(y)}" for x, y in mesh.nodes]
    out.append("#triangles i j k")
    out += [f"{i} {j} {k}" for i, j, k in mesh.triangles]
    out.append("#boundary i j")
    out += [f"{i} {j}" for i, j in mesh.boundary_edges]
    _write(path, out)


def read_mesh(path):
    meta, body = _read(path, "mesh")
    sections = {}
    cur = None
    for line in body:
        if line.startswith("#"):
            cur = line[1:].split()[0]
            sections[cur] = []
        elif line.strip():
            if cur is None:
                raise FormatError("data before first section")
            sections[cur].append(line.split())
    for s in ("nodes", "triangles", "boundary"):
        if s not in sections:
            raise FormatError(f"missing section #{s}")
    nodes = np.array(sections["nodes"], dtype=float).reshape(-1, 2)
    tri = np.array(sections["triangles"], dtype=np.int64).reshape(-1, 3)
    be = np.array(sections["boundary"], dtype=np.int64).reshape(-1, 2)
    e = _edges(tri)
    seg = nodes[e[:, 1]] - nodes[e[:, 0]]
    return Mesh(nodes=nodes, triangles=tri, boundary_edges=be, boundary_nodes=be[:, 0].copy(),
                h_max=float(np.sqrt((seg ** 2).sum(axis=1)).max()), level=int(meta.get("level", -1)))


# ---------------------------------------------------------------- scalar data

def write_scalar_field(path, values, **meta):
    v = nodal(values)
    _write(path, _header("scalar", n=v.shape[0], **meta) + [f"{i} {_f(x)}" for i, x in enumerate(v)])


def read_scalar_field(path):
    meta, body = _read(path, "scalar")
    rows = [line.split() for line in body if line.strip() and not line.startswith("#")]
    idx = np.array([int(r[0]) for r in rows])
    if not np.array_equal(idx, np.arange(len(rows))):
        raise FormatError("scalar field indices must be 0..n-1 in order")
    return ScalarField(np.array([float(r[1]) for r in rows]))


def write_boundary_function(path, f, **meta):
    v = nodal(f)
    out = _header("boundary", n=v.shape[0], **meta)
    out.append("#theta value")
    th = 2.0 * np.pi * np.arange(v.shape[0]) / v.shape[0]
    out += [f"{_f(t)} {_f(x)}" for t, x in zip(th, v)]
    _write(path, out)


def read_boundary_function(path):
    _, body = _read(path, "boundary")
    rows = [line.split() for line in body if line.strip() and not line.startswith("#")]
    return BoundaryFunction(np.array([float(r[1]) for r in rows]))


def read_values(path):
    """Nodal/boundary values from a scalar or boundary file."""
    with open(path) as fh:
        first = fh.readline()
    if first.startswith("# pmclab-scalar"):
        return read_scalar_field(path).values
    if first.startswith("# pmclab-boundary"):
        return read_boundary_function(path).values
    raise FormatError(f"{path}: expected a scalar or boundary file")


def write_metric_field(path, m):
    out = _header("metric", n=m.A.shape[0])
    out.append("#a11 a12 a22 detg gamma")
    out += [f"{_f(A[0, 0])} {_f(A[0, 1])} {_f(A[1, 1])} {_f(d)} {_f(g)}"
            for A, d, g in zip(m.A, m.det_g, m.gamma)]
    _write(path, out)


def read_metric_rows(path):
    """(nt, 5) array of ``a11 a12 a22 detg gamma``."""
    _, body = _read(path, "metric")
    rows = [line.split() for line in body if line.strip() and not line.startswith("#")]
    return np.array(rows, dtype=float).reshape(-1, 5)


def write_jet(path, jet):
    cols = ["theta", "u", "dtau_u", "dnu_u", "d2nu_u"] + (["d3nu_u"] if jet.d3nu is not None else [])
    out = _header("jet", n=len(jet.u))
    out.append("#" + " ".join(cols))
    th = jet.u.theta
    arrs = [th, jet.u.values, jet.dtau.values, jet.dnu.values,
            jet.d2nu.values if jet.d2nu is not None else np.full(len(th), np.nan)]
    if jet.d3nu is not None:
        arrs.append(jet.d3nu.values)
    out += [" ".join(_f(a[i]) for a in arrs) for i in range(len(th))]
    _write(path, out)


def read_jet_rows(path):
    _, body = _read(path, "jet")
    cols = body[0][1:].split()
    rows = np.array([line.split() for line in body[1:] if line.strip()], dtype=float)
    return {c: rows[:, i] for i, c in enumerate(cols)}


# ----------------------------------------------------------------- grid fields

def write_grid_field(path, field):
    """Text raster: header (nx, ny, spacing, origin), then rows ``ix iy re im``."""
    g = field.grid
    ox, oy = g.origin
    out = _header("grid", nx=g.n, ny=g.n, spacing=_f(g.dx), origin=f"{_f(ox)},{_f(oy)}",
                  half_width=_f(g.half_width))
    out.append("#ix iy re im")
    v = field.values
    for iy in range(g.n):
        for ix in range(g.n):
            out.append(f"{ix} {iy} {_f(v[iy, ix].real)} {_f(v[iy, ix].imag)}")
    _write(path, out)


def read_grid_field(path):
    from .cgo import ComplexGridField, Grid

    meta, body = _read(path, "grid")
    n = int(meta["nx"])
    grid = Grid(n=n, half_width=float(meta["half_width"]))
    v = np.zeros((n, n), complex)
    for line in body:
        if not line.strip() or line.startswith("#"):
            continue
        ix, iy, re, im = line.split()
        v[int(iy), int(ix)] = complex(float(re), float(im))
    return ComplexGridField(v, grid)


# ---------------------------------------------------------------- DN datasets

def _coef_line(tag, a, b):
    return tag + " " + " ".join(_f(x) for x in a) + " | " + " ".join(_f(x) for x in b)


def _parse_coef(line):
    tag, rest = line.split(" ", 1)
    a, b = rest.split("|")
    return tag, np.array(a.split(), float), np.array(b.split(), float)


def write_dn_dataset(path, data):
    """Header with level and H trace, then per-pair blocks of full Fourier coefficients."""
    n = len(data.f0)
    out = _header("dndataset", level=data.level, n_boundary=n, pairs=len(data.pairs),
                  directions=len(data.directions))
    out.append("#htrace " + " ".join(_f(x) for x in data.H_trace.values))
    out.append(_coef_line("f0", *data.f0.fourier()))
    for i, d in enumerate(data.directions):
        out.append(f"#direction {i}")
        out.append(_coef_line("f", *d.fourier()))
    for i, p in enumerate(data.pairs):
        out.append(f"#pair {i}")
        out.append(_coef_line("dirichlet", *p.dirichlet.fourier()))
        out.append(_coef_line("neumann", *p.neumann.fourier()))
    _write(path, out)


def read_dn_dataset(path):
    meta, body = _read(path, "dndataset")
    n = int(meta["n_boundary"])
    htrace = None
    f0 = None
    directions, pairs = [], []
    cur = None
    for line in body:
        if line.startswith("#htrace"):
            htrace = BoundaryFunction(np.array(line.split()[1:], float))
        elif line.startswith("#direction"):
            cur = "direction"
        elif line.startswith("#pair"):
            cur = "pair"
            pairs.append({})
        elif line.strip():
            tag, a, b = _parse_coef(line)
            bf = BoundaryFunction.from_fourier(a, b, n)
            if tag == "f0":
                f0 = bf
            elif cur == "direction":
                directions.append(bf)
            elif cur == "pair":
                pairs[-1][tag] = bf
    if htrace is None or f0 is None:
        raise FormatError("dataset missing H trace or base value")
    cp = [CauchyDataPair(p["dirichlet"], p["neumann"]) for p in pairs]
    return DNDataset(level=int(meta["level"]), f0=f0, H_trace=htrace, directions=directions, pairs=cp)


# -------------------------------------------------------------- CSV and JSON

def csv_text(columns, rows):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for r in rows:
        w.writerow([_f(x) if isinstance(x, (float, np.floating)) else x for x in r])
    return buf.getvalue()


def write_csv(path, columns, rows, kind="table"):
    """CSV preceded by the versioned header line (a ``#`` comment)."""
    with open(path, "w", newline="\n") as fh:
        fh.write(f"# pmclab-{kind} v{VERSION}\n")
        fh.write(csv_text(columns, rows))


def read_csv(path):
    with open(path) as fh:
        lines = [line for line in fh.read().splitlines() if not line.startswith("#")]
    rows = list(csv.reader(lines))
    return rows[0], rows[1:]


def write_decay_report(path, report):
    rows = [(h, v, report.slope) for h, v in zip(report.h, report.norms)]
    write_csv(path, ["h", "norm", "slope"], rows, kind="decay")


def _clean(obj):
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        return x if np.isfinite(x) else str(x)
    if isinstance(obj, complex):
        return [obj.real, obj.imag]
    return obj


def write_json(path, obj):
    with open(path, "w", newline="\n") as fh:
        json.dump(_clean(obj), fh, indent=2, sort_keys=True)
        fh.write("\n")


def ensure_dir(path):
    os.makedirs(path, exist_ok=True)
    return path
