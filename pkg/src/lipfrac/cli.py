"""Command line entry points: run a simulation, validate a config, inspect a mesh."""
from __future__ import annotations

import argparse
import sys

from .config import ConfigError, load_config
from .dynamics import DivergenceError
from .lipfield import RegionSolveError
from .material import wave_speeds
from .mesh import MeshError, load_mesh, min_element_size


def _cmd_run(args) -> int:
    from .driver import Simulation

    config = load_config(args.config)
    sim = Simulation(config)
    print(f"mesh: {sim.mesh.n_nodes} nodes, {sim.mesh.n_elements} elements")
    print(f"dt = {sim.tc.dt:.6e} s, {sim.tc.n_steps} steps to t_end = {config.t_end:.6e} s")
    try:
        summary = sim.run()
    except (DivergenceError, RegionSolveError) as exc:
        print(f"aborted at step {sim.step_index}: {exc}", file=sys.stderr)
        print(f"partial outputs retained in {config.out_dir}", file=sys.stderr)
        return 1
    print(f"done: {summary['steps_completed']} steps in {summary['wall_time_s']:.1f} s")
    print(f"crack length = {summary['crack_length']:.6e} m, t_br = {summary['t_br']}")
    print(f"outputs in {config.out_dir}")
    return 0


def _cmd_check(args) -> int:
    config = load_config(args.config)
    mesh = load_mesh(config.mesh_path, fmt=config.mesh_format, tag_names=config.tag_names)
    p = config.material
    speeds = wave_speeds(p)
    h_min = min_element_size(mesh)
    dt = config.cfl_factor * h_min / speeds.c_d
    print(f"config ok: {args.config}")
    print(f"mesh: {mesh.n_nodes} nodes, {mesh.n_elements} elements, h_min = {h_min:.6e} m")
    print(f"lambda = {p.lam:.6e} Pa, mu = {p.mu:.6e} Pa")
    print(f"c_d = {speeds.c_d:.2f} m/s, c_s = {speeds.c_s:.2f} m/s, c_R = {speeds.c_R:.2f} m/s")
    print(f"Yc = {p.yc:.6e} J/m^3, lc = {p.lc:.6e} m")
    print(f"dt = {dt:.6e} s ({config.cfl_factor} * h_min / c_d)")
    print(f"boundary conditions: {len(config.bcs)}")
    return 0


def _cmd_mesh_info(args) -> int:
    mesh = load_mesh(args.mesh, fmt=args.format)
    print(f"nodes: {mesh.n_nodes}")
    print(f"elements: {mesh.n_elements}")
    print(f"h_min: {min_element_size(mesh):.6e} m")
    print(f"total area: {mesh.element_area.sum():.6e} m^2")
    tags = mesh.tags()
    if tags:
        for tag in sorted(tags):
            print(f"tag {tag!r}: {len(mesh.facets_with_tag(tag))} facets")
    else:
        print("no tagged facets")
    return 0


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="lipfrac",
        description="Explicit-dynamics brittle fracture with Lipschitz-regularized damage",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run a simulation from a config file")
    p_run.add_argument("config")
    p_run.set_defaults(func=_cmd_run)

    p_check = sub.add_parser("check", help="validate a config and print derived quantities")
    p_check.add_argument("config")
    p_check.set_defaults(func=_cmd_check)

    p_info = sub.add_parser("mesh-info", help="print mesh statistics")
    p_info.add_argument("mesh")
    p_info.add_argument("--format", default="native_text")
    p_info.set_defaults(func=_cmd_mesh_info)

    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, MeshError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
