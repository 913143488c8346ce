"""Command line interface: run benchmarks, trace cohesive laws, generate meshes."""

from __future__ import annotations

import argparse
import json
import sys

import numpy as np


def _load_run_config(spec):
    from . import benchmarks
    from .config import load_config

    if spec.startswith("builtin:"):
        return benchmarks.get(spec.split(":", 1)[1])
    return load_config(spec)


def cmd_run(args):
    from .run import run

    cfg = _load_run_config(args.config)
    if args.threads:
        # assembly is ordered and single-threaded; BLAS threading is external
        print(f"note: --threads {args.threads} only affects library-internal threading")
    result = run(cfg, out_dir=args.out, seed=args.seed)
    print(f"{cfg.name}: {len(result.records)} increments, "
          f"{len(result.model.cracks)} cracked elements "
          f"({result.model.n_active()} active), "
          f"W_I={result.model.ledger.w_mode_i:.6g} W_II={result.model.ledger.w_mode_ii:.6g}, "
          f"{result.elapsed:.1f}s")
    if result.load_factor is not None:
        print(f"final load factor: {result.load_factor:.6g}")
    return 0


def cmd_law_trace(args):
    from .cohesive import (ExponentialSoftening, ZigZagSoftening,
                           initialize_crack_state, return_map_normal,
                           return_map_tangential)

    with open(args.config) as fh:
        cfg = json.load(fh)
    law = cfg.get("law", {"kind": "exponential"})
    sigma_u = cfg["sigma_u"]
    if law.get("kind", "exponential") == "zigzag":
        curve = ZigZagSoftening(sigma_u, tuple(law["xi_breaks"]), tuple(law["gf_segments"]))
    else:
        curve = ExponentialSoftening(sigma_u, cfg["g_f"])
    state = initialize_crack_state(curve, cfg.get("kappa0", 1e-5))
    floor_k = cfg.get("k_full_soft", 0.0)
    mode = cfg.get("mode", "normal")
    update = return_map_normal if mode == "normal" else return_map_tangential
    knots = np.asarray(cfg["history"], dtype=float)  # [[t, u], ...]
    n_sub = int(cfg.get("substeps", 20))
    ts = []
    for k in range(1, len(knots)):
        ts.extend(np.linspace(knots[k - 1, 0], knots[k, 0], n_sub + 1)[1:])
    out = open(args.out, "w") if args.out else sys.stdout
    out.write("t,u,traction,xi,Q\n")
    for t in ts:
        u = float(np.interp(t, knots[:, 0], knots[:, 1]))
        res = update(curve, u, state, floor_k)
        state = res.state
        out.write(f"{t:.17g},{u:.17g},{res.traction:.17g},{state.xi:.17g},"
                  f"{state.q_compliance:.17g}\n")
    if args.out:
        out.close()
        print(f"wrote {args.out}")
    return 0


def cmd_mesh_gen(args):
    from .mesh import generate

    with open(args.spec) as fh:
        spec = json.load(fh)
    mesh = generate(spec)
    mesh.save(args.out)
    print(f"wrote {args.out}: {mesh.n_nodes} nodes, {mesh.n_elements} elements")
    return 0


def main(argv=None):
    parser = argparse.ArgumentParser(prog="edfrac",
                                     description="2D embedded-discontinuity fracture solver")
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run a benchmark configuration")
    p_run.add_argument("config", help="JSON config path or builtin:<name>")
    p_run.add_argument("--out", default=None, help="output directory")
    p_run.add_argument("--threads", type=int, default=0)
    p_run.add_argument("--seed", type=int, default=None)
    p_run.set_defaults(func=cmd_run)

    p_law = sub.add_parser("law-trace", help="drive a cohesive law through a u(t) history")
    p_law.add_argument("config", help="JSON with law parameters and history knots")
    p_law.add_argument("--out", default=None, help="CSV output path (default stdout)")
    p_law.set_defaults(func=cmd_law_trace)

    p_mesh = sub.add_parser("mesh-gen", help="generate a mesh file from a spec")
    p_mesh.add_argument("spec", help="JSON generator spec")
    p_mesh.add_argument("--out", required=True, help="mesh JSON output path")
    p_mesh.set_defaults(func=cmd_mesh_gen)

    args = parser.parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
