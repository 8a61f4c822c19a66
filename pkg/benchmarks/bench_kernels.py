"""Time the compiled element kernels against the numpy fallback.

    python benchmarks/bench_kernels.py [--levels 3 4 5 6] [--repeat 5] [--csv FILE]

Prints one row per (level, kernel) with the best-of-``repeat`` wall time for
each backend, their ratio, and the max abs difference between the outputs.
"""
import argparse
import sys
import timeit

import numpy as np

from pmclab import kernels
from pmclab.mesh import generate_disk_mesh


def _cases(m, rng):
    _, indices, slots = m.csr_pattern
    nnz = indices.shape[0]
    coef = rng.standard_normal((m.n_triangles, 2, 2))
    coef = coef + coef.transpose(0, 2, 1)
    u = 0.3 * rng.standard_normal(m.n_nodes)
    return {
        "element_geometry": lambda k: k.element_geometry(m.nodes, m.triangles),
        "stiffness_data": lambda k: k.stiffness_data(m.areas, m.grads, coef, slots, nnz),
        "pmc_residual_jacobian": lambda k: k.pmc_residual_jacobian(m.triangles, m.areas, m.grads, u, slots, nnz),
    }


def _flat(out):
    parts = out if isinstance(out, tuple) else (out,)
    return np.concatenate([np.ravel(p) for p in parts])


def main(argv=None):
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--levels", type=int, nargs="+", default=[3, 4, 5, 6])
    p.add_argument("--repeat", type=int, default=5)
    p.add_argument("--csv")
    a = p.parse_args(argv)
    py = kernels.get_backend("python")
    try:
        cy = kernels.get_backend("cython")
    except ImportError:
        print("compiled extension not built; nothing to compare", file=sys.stderr)
        return 1
    rows = []
    print(f"{'level':>5} {'triangles':>9} {'kernel':<22} {'python s':>10} {'cython s':>10} {'speedup':>8} {'max diff':>9}")
    for level in a.levels:
        m = generate_disk_mesh(level)
        for name, fn in _cases(m, np.random.default_rng(level)).items():
            t_py = min(timeit.repeat(lambda: fn(py), number=1, repeat=a.repeat))
            t_cy = min(timeit.repeat(lambda: fn(cy), number=1, repeat=a.repeat))
            diff = float(np.max(np.abs(_flat(fn(py)) - _flat(fn(cy)))))
            rows.append((level, m.n_triangles, name, t_py, t_cy, t_py / t_cy, diff))
            print(f"{level:>5} {m.n_triangles:>9} {name:<22} {t_py:>10.2e} {t_cy:>10.2e} {t_py / t_cy:>8.1f} {diff:>9.1e}")
    if a.csv:
        from pmclab.formats import write_csv
        write_csv(a.csv, ["level", "triangles", "kernel", "python_s", "cython_s", "speedup", "max_diff"],
                  rows, kind="benchmark")
    return 0


if __name__ == "__main__":
    sys.exit(main())
