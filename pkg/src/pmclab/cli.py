"""``pmc`` command line.

    pmc <experiment> [--config FILE] [--key value ...]
    pmc mesh|forward|dnmap|fd-lin|linearize|cgo [options]
    pmc invert --data FILE --reg R --out FILE [--truth FILE]

``invert`` without ``--data`` runs the synthetic reconstruction experiment.

Experiments write into ``$PMC_OUT_DIR/<experiment>/`` (default ``pmc_out``).
"""
import argparse
import os
import sys

import numpy as np

from . import cgo, formats, inverse
from .config import FIELDS, load_config
from .dnmap import fd_first_dn, fd_second_dn
from .errors import ConfigurationError
from .experiments import EXPERIMENTS, cgo_cases, run_experiment
from .forward import NewtonOptions, solve_pmc
from .linearization import linearize
from .mesh import generate_disk_mesh


def _parse_overrides(tokens):
    out = {}
    i = 0
    while i < len(tokens):
        tok = tokens[i]
        if not tok.startswith("--"):
            raise ConfigurationError(f"unexpected argument {tok!r}")
        key = tok[2:]
        if "=" in key:
            key, val = key.split("=", 1)
            i += 1
        else:
            if i + 1 >= len(tokens):
                raise ConfigurationError(f"missing value for --{key}")
            val = tokens[i + 1]
            i += 2
        out[key.replace("-", "_")] = val
    return out


def _experiment_main(name, argv):
    p = argparse.ArgumentParser(prog=f"pmc {name}", add_help=True,
                                epilog="Any config key may be overridden as --key value; keys: "
                                + ", ".join(k.replace("_", "-") for k in FIELDS))
    p.add_argument("--config", help="YAML config file")
    args, rest = p.parse_known_args(argv)
    cfg = load_config(args.config, _parse_overrides(rest))
    status, summary = run_experiment(cfg, name)
    for c in summary["checks"]:
        flag = "PASS" if c["passed"] else ("FAIL" if c["asserted"] else "MISS (soft)")
        val = "" if c["value"] is None else f" = {c['value']}"
        print(f"[{c['criterion']:>2}] {flag:<11} {c['name']}{val} (target {c['target']})")
    return status


def _values(path, n, default=0.0):
    if path is None:
        return np.full(n, default)
    v = formats.read_values(path)
    if v.shape[0] != n:
        raise ConfigurationError(f"{path}: expected {n} values, got {v.shape[0]}")
    return v


def _mesh_arg(p):
    p.add_argument("--mesh-level", type=int, default=4)


def cmd_mesh(a):
    formats.write_mesh(a.out, generate_disk_mesh(a.mesh_level))


def cmd_forward(a):
    mesh = generate_disk_mesh(a.mesh_level)
    H = _values(a.source, mesh.n_nodes)
    f = _values(a.dirichlet, mesh.n_boundary)
    u, rep = solve_pmc(mesh, H, f, NewtonOptions(tol=a.tol))
    formats.write_scalar_field(a.out, u.values, level=a.mesh_level, newton_iterations=rep.iterations)


def cmd_dnmap(a):
    mesh = generate_disk_mesh(a.mesh_level)
    H = _values(a.source, mesh.n_nodes)
    f0 = _values(a.base, mesh.n_boundary)
    data = inverse.forward_data(mesh, H, f0, K=a.directions, delta=a.delta)
    formats.write_dn_dataset(a.out, data)


def cmd_fd_lin(a):
    mesh = generate_disk_mesh(a.mesh_level)
    H = _values(a.source, mesh.n_nodes)
    f0 = _values(a.base, mesh.n_boundary)
    f1 = _values(a.direction, mesh.n_boundary)
    if a.direction2:
        out = fd_second_dn(mesh, H, f0, f1, _values(a.direction2, mesh.n_boundary), a.eps)
    else:
        out = fd_first_dn(mesh, H, f0, f1, a.eps)
    formats.write_boundary_function(a.out, out, eps=a.eps)


def cmd_linearize(a):
    mesh = generate_disk_mesh(a.mesh_level)
    H = _values(a.source, mesh.n_nodes)
    f0 = _values(a.base, mesh.n_boundary)
    ls = linearize(mesh, H, f0)
    formats.write_metric_field(a.out, ls.metric)
    if a.direction:
        f1 = _values(a.direction, mesh.n_boundary)
        _, dn = ls.first_dn(f1)
        formats.write_boundary_function(a.out_dn or a.out + ".dn", dn)


def _complex(s):
    return complex(s.replace(" ", "").replace("i", "j"))


def cmd_cgo(a):
    if a.phase == "morse":
        ph = cgo.make_phase(z0=_complex(a.z0))
    else:
        ph = cgo.make_phase()
    name, qf, af = cgo_cases()[a.case]
    if a.sweep:
        hs = [float(h) for h in a.sweep.split(",")]
        grid = cgo.make_grid(a.dx or min(hs) / 8.0)
        rep = cgo.decay_study(ph, cgo.extend_potential(grid, qf), af(grid.z), hs)
        formats.write_decay_report(a.out, rep)
        print(f"{name}: slope {rep.slope:.4f} (target {rep.target}) {'pass' if rep.passed else 'fail'}")
    else:
        grid = cgo.make_grid(a.dx or min(a.h / 8.0, 0.025))
        sol = cgo.build_cgo(cgo.extend_potential(grid, qf), af(grid.z), ph, a.h)
        formats.write_grid_field(a.out, sol.r)
        print(f"{name}: |r_h|_L2 = {sol.norms['r_L2']:.6e}, residual {sol.residual:.3e}, terms {sol.terms}")


def cmd_invert(a):
    data = formats.read_dn_dataset(a.data)
    mesh = generate_disk_mesh(data.level)
    truth = None if a.truth is None else formats.read_values(a.truth)
    res = inverse.gn_reconstruct(mesh, data, data.H_trace, a.reg, H_true=truth, max_iter=a.max_iter,
                                 opts=NewtonOptions(check_budget=False))
    formats.write_csv(a.out, ["iteration", "misfit", "regularization"],
                      [(i, m, r) for i, (m, r) in enumerate(zip(res.misfit, res.regularization))],
                      kind="reconstruction")
    base, _ = os.path.splitext(a.out)
    formats.write_scalar_field(base + "_H.txt", res.H.values, level=data.level)
    if truth is not None:
        print(f"relative L2 error (r <= 0.9): {res.rel_error:.4e}")


def _tool_parser():
    p = argparse.ArgumentParser(prog="pmc")
    sub = p.add_subparsers(dest="cmd", required=True)

    s = sub.add_parser("mesh", help="dump the disk mesh")
    _mesh_arg(s)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_mesh)

    s = sub.add_parser("forward", help="solve the PMC Dirichlet problem")
    _mesh_arg(s)
    s.add_argument("--source", help="nodal scalar file (default 0)")
    s.add_argument("--dirichlet", help="boundary file (default 0)")
    s.add_argument("--tol", type=float, default=1e-11)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_forward)

    s = sub.add_parser("dnmap", help="generate a DN dataset")
    _mesh_arg(s)
    s.add_argument("--source")
    s.add_argument("--base", help="boundary file for f0 (default 0)")
    s.add_argument("--directions", type=int, default=8)
    s.add_argument("--delta", type=float, default=1e-2)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_dnmap)

    s = sub.add_parser("fd-lin", help="finite-difference derivative of the DN map")
    _mesh_arg(s)
    s.add_argument("--source")
    s.add_argument("--base")
    s.add_argument("--direction", required=True)
    s.add_argument("--direction2")
    s.add_argument("--eps", type=float, default=1e-2)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_fd_lin)

    s = sub.add_parser("linearize", help="metric of the first linearization")
    _mesh_arg(s)
    s.add_argument("--source")
    s.add_argument("--base")
    s.add_argument("--direction", help="optional boundary file; writes its linearized DN image")
    s.add_argument("--out", required=True)
    s.add_argument("--out-dn")
    s.set_defaults(func=cmd_linearize)

    s = sub.add_parser("cgo", help="CGO remainder for one h or an h sweep")
    s.add_argument("--phase", choices=["morse", "linear"], default="morse")
    s.add_argument("--z0", default="0.1+0.0i")
    s.add_argument("--case", type=int, choices=range(len(cgo_cases())), default=0)
    s.add_argument("--sweep", help="comma-separated h values")
    s.add_argument("--h", type=float, default=0.1)
    s.add_argument("--dx", type=float, default=0.0)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_cgo)

    s = sub.add_parser("invert", help="Gauss-Newton source reconstruction")
    s.add_argument("--data", required=True)
    s.add_argument("--reg", type=float, default=1e-12)
    s.add_argument("--max-iter", type=int, default=15)
    s.add_argument("--truth")
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_invert)
    return p


TOOLS = ("mesh", "forward", "dnmap", "fd-lin", "linearize", "cgo", "invert")


def _is_tool_call(cmd, rest):
    """``invert`` names both an experiment and a tool; ``--data`` selects the tool."""
    return cmd == "invert" and any(a == "--data" or a.startswith("--data=") for a in rest)


def usage():
    return ("usage: pmc <experiment> [--config FILE] [--key value ...]\n"
            "       pmc {mesh,forward,dnmap,fd-lin,linearize,cgo} [options]\n"
            "       pmc invert --data FILE --reg R --out FILE [--truth FILE]\n"
            "experiments: " + ", ".join(EXPERIMENTS))


def main(argv=None):
    argv = list(sys.argv[1:] if argv is None else argv)
    if not argv or argv[0] in ("-h", "--help"):
        print(usage())
        return 0 if argv else 2
    cmd = argv[0]
    try:
        if cmd in EXPERIMENTS and not _is_tool_call(cmd, argv[1:]):
            return _experiment_main(cmd, argv[1:])
        if cmd not in TOOLS:
            print(f"pmc: unknown command {cmd!r}\n" + usage(), file=sys.stderr)
            return 2
        args = _tool_parser().parse_args(argv)
        args.func(args)
        return 0
    except (ConfigurationError, formats.FormatError) as exc:
        print(f"pmc: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
