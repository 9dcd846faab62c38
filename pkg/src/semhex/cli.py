"""Command line front end: ``semhex {poisson,heat,mms,bench,meshgen}``.

Exit codes: 0 converged, 2 not converged, 3 invalid configuration or mesh.
"""
from __future__ import annotations

import argparse
import csv
import json
import logging
import sys

import numpy as np

from .counters import intensity
from .fine import FineSchwarz
from .geometry import InvertedElementError
from .gll import GllBasis
from .krylov import IndefiniteOperatorError
from .mesh import FAMILIES, MeshError, build_index_maps, generate_box_mesh
from .meshio import write_mesh
from .operator import SemOperator
from .problems import (
    PRECONDITIONERS,
    ConfigError,
    MeshConfig,
    ProblemConfig,
    SolveError,
    make_mesh,
    mms_convergence,
    solve_heat,
    solve_poisson,
)

EXIT_OK, EXIT_NOT_CONVERGED, EXIT_INVALID = 0, 2, 3
HEAT_BAR = {"shape": (8, 8, 64), "lengths": (0.1, 0.1, 0.8)}


def _mesh_args(p):
    g = p.add_argument_group("mesh")
    g.add_argument("--family", choices=FAMILIES, help="generated mesh family (default uniform)")
    g.add_argument("--k", type=int, help="elements per direction of the generated cube")
    g.add_argument("--shape", type=int, nargs=3, metavar=("KX", "KY", "KZ"), help="box element counts")
    g.add_argument("--lengths", type=float, nargs=3, metavar=("LX", "LY", "LZ"), help="box side lengths")
    g.add_argument("--mesh-file", help="read a .msh (gmsh 2.2 ASCII) or native binary mesh instead")
    g.add_argument("--refine", type=int, help="uniform refinements applied after loading")
    g.add_argument("--seed", type=int, help="seed of the distorted_elements perturbation")


def _solver_args(p):
    g = p.add_argument_group("discretization and solver")
    g.add_argument("--config", help="TOML file; flags override its values")
    g.add_argument("--order", "-n", type=int, help="polynomial order (default 3)")
    g.add_argument("--kappa", type=float, help="diffusion coefficient")
    g.add_argument("--dirichlet", help="'all', 'none', or comma list of tags/names (xmin,...,zmax)")
    g.add_argument("--precond", choices=PRECONDITIONERS, help="preconditioner (default two_scale)")
    g.add_argument("--overlap-weighting", choices=("multiplicity", "none"))
    g.add_argument("--coarse-solver", choices=("auto", "direct", "amg"))
    g.add_argument("--variant", choices=("stored", "on_the_fly"), help="geometric factor storage")
    g.add_argument("--precision", choices=("double", "single"))
    g.add_argument("--tol", type=float, help="relative residual tolerance (default 1e-6)")
    g.add_argument("--max-it", type=int, help="iteration cap (default 500)")
    g.add_argument("--concurrent", action="store_true", default=None, help="run the coarse correction on a second thread")
    g.add_argument("--workers", type=int, help="threads for the operator")
    o = p.add_argument_group("output")
    o.add_argument("--report", help="JSON report path")
    o.add_argument("--history", help="CSV convergence history path")
    o.add_argument("--vtk", help="legacy VTK field path")
    o.add_argument("--vtk-mode", choices=("conforming", "element"))
    o.add_argument("--timings", action="store_true", default=None, help="include wall-clock timings in the report")


def build_config(args, defaults: dict | None = None, heat: dict | None = None) -> ProblemConfig:
    data = {} if not args.config else _load_toml(args.config)
    for key, value in (defaults or {}).items():
        if isinstance(value, dict):
            data[key] = {**value, **data.get(key, {})}
        else:
            data.setdefault(key, value)
    mesh = data.setdefault("mesh", {})
    for flag, key in (("family", "family"), ("k", "k"), ("shape", "shape"), ("lengths", "lengths"),
                      ("mesh_file", "file"), ("refine", "refine"), ("seed", "seed")):
        v = getattr(args, flag, None)
        if v is not None:
            mesh[key] = v
    if getattr(args, "k", None) is not None and getattr(args, "shape", None) is None:
        mesh.pop("shape", None)
    top = (("order", "order"), ("kappa", "kappa"), ("dirichlet", "dirichlet"), ("precond", "preconditioner"),
           ("overlap_weighting", "overlap_weighting"), ("coarse_solver", "coarse_solver"), ("variant", "variant"),
           ("precision", "precision"), ("concurrent", "concurrent"), ("workers", "workers"))
    for flag, key in top:
        v = getattr(args, flag, None)
        if v is not None:
            data[key] = v
    solver = data.setdefault("solver", {})
    if args.tol is not None:
        solver["rel_tolerance"] = args.tol
    if args.max_it is not None:
        solver["max_iterations"] = args.max_it
    out = data.setdefault("output", {})
    for flag in ("report", "history", "vtk", "vtk_mode"):
        v = getattr(args, flag, None)
        if v is not None:
            out[flag] = v
    if args.timings:
        out["deterministic"] = False
    if heat is not None:
        data["heat"] = {**data.get("heat", {}), **heat}
    return ProblemConfig.from_dict(data)


def _load_toml(path) -> dict:
    import tomli

    with open(path, "rb") as fh:
        try:
            return tomli.load(fh)
        except tomli.TOMLDecodeError as exc:
            raise ConfigError(f"{path}: {exc}") from None


def _summary(report) -> dict:
    return {
        "problem": report.problem,
        "status": report.status,
        "iterations": report.iterations,
        "num_nodes": report.mesh["num_nodes"],
        "num_elements": report.mesh["num_elements"],
        "final_residual": report.residual_norms[-1] if report.residual_norms else None,
    }


def cmd_poisson(args) -> int:
    cfg = build_config(args)
    report, _, _ = solve_poisson(cfg)
    print(json.dumps(_summary(report)))
    return EXIT_OK if report.converged else EXIT_NOT_CONVERGED


def cmd_heat(args) -> int:
    heat = {}
    for flag in ("dt", "steps", "rho", "cp", "Q", "radius", "initial"):
        v = getattr(args, flag)
        if v is not None:
            heat[flag] = v
    defaults = {"mesh": dict(HEAT_BAR), "kappa": 1e-2, "dirichlet": "none"}
    cfg = build_config(args, defaults, heat)
    try:
        report, _, _ = solve_heat(cfg)
    except SolveError as exc:
        print(f"error: {exc}", file=sys.stderr)
        if exc.report is not None and cfg.output.report:
            with open(cfg.output.report, "w") as fh:
                fh.write(exc.report.to_json(cfg.output.deterministic))
        return EXIT_NOT_CONVERGED
    summary = _summary(report)
    summary["steps"] = len(report.steps)
    summary["final_mean"] = report.steps[-1]["mean"]
    print(json.dumps(summary))
    return EXIT_OK


def cmd_mms(args) -> int:
    rows = mms_convergence(range(1, args.max_order + 1), k=args.k)
    w = csv.DictWriter(sys.stdout, fieldnames=["order", "num_nodes", "error", "iterations"])
    w.writeheader()
    w.writerows(rows)
    if args.csv:
        with open(args.csv, "w", newline="") as fh:
            w = csv.DictWriter(fh, fieldnames=["order", "num_nodes", "error", "iterations"])
            w.writeheader()
            w.writerows(rows)
    return EXIT_OK


def bench(orders, k: int = 4, family: str = "uniform", repeats: int = 3, word_size: int = 4) -> list:
    """Apply residual (both variants) and fine kernels, return model vs measured counters."""
    mesh = generate_box_mesh((k, k, k), family=family)
    rng = np.random.default_rng(0)
    rows = []
    for n in orders:
        basis = GllBasis.build(n)
        maps = build_index_maps(mesh, n)
        u = rng.standard_normal(maps.n_global)
        kernels = [
            SemOperator(mesh, basis, maps, variant="stored", word_size=word_size),
            SemOperator(mesh, basis, maps, variant="on_the_fly", word_size=word_size),
            FineSchwarz(mesh, basis, maps, word_size=word_size),
        ]
        for kern in kernels:
            for _ in range(repeats):
                kern.apply_unmasked(u) if isinstance(kern, SemOperator) else kern.apply(u)
            c = kern.counters_report()
            row = c.to_dict()
            row["intensity_model"] = c.intensity_model
            flops = c.flops_measured + (c.geometry_flops_measured if c.includes_geometry_flops else 0)
            row["intensity_measured"] = intensity(flops, c.bytes_measured // word_size, word_size)
            row["gflops_measured"] = c.flops_measured / c.wall_seconds / 1e9 if c.wall_seconds else None
            rows.append(row)
    return rows


def cmd_bench(args) -> int:
    rows = bench(args.orders, k=args.k, family=args.family or "uniform", repeats=args.repeats, word_size=args.word_size)
    cols = ["kernel", "variant", "n", "N_E", "calls", "flops_model", "flops_measured", "bytes_model",
            "bytes_measured", "intensity_model", "intensity_measured", "wall_seconds", "gflops_measured"]
    w = csv.DictWriter(sys.stdout, fieldnames=cols, extrasaction="ignore")
    w.writeheader()
    w.writerows(rows)
    if args.json:
        with open(args.json, "w") as fh:
            json.dump(rows, fh, indent=2)
    return EXIT_OK


def cmd_meshgen(args) -> int:
    data = {"family": args.family or "uniform", "k": args.k or 8}
    for key in ("shape", "lengths", "refine", "seed"):
        v = getattr(args, key)
        if v is not None:
            data[key] = tuple(v) if isinstance(v, list) else v
    if args.mesh_file:
        data["file"] = args.mesh_file
    cfg = MeshConfig(**data)
    cfg.validate()
    mesh = make_mesh(cfg)
    write_mesh(mesh, args.output)
    print(json.dumps({"num_elements": mesh.num_elements, "num_vertices": mesh.num_vertices, "output": args.output}))
    return EXIT_OK


class _Parser(argparse.ArgumentParser):
    """Usage errors are invalid configurations: exit 3 instead of argparse's 2."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_INVALID, f"{self.prog}: error: {message}\n")


def make_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="semhex", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="count", default=0)
    sub = p.add_subparsers(dest="command", required=True)

    sp = sub.add_parser("poisson", help="Poisson benchmark (kappa=1, c=0, s=1, Dirichlet cube)")
    _mesh_args(sp)
    _solver_args(sp)
    sp.set_defaults(func=cmd_poisson)

    sh = sub.add_parser("heat", help="backward Euler heat run with a moving ball source (default 8x8x64 bar)")
    _mesh_args(sh)
    _solver_args(sh)
    g = sh.add_argument_group("time stepping")
    g.add_argument("--dt", type=float, help="time step (default 0.04)")
    g.add_argument("--steps", type=int, help="number of steps (default 70)")
    g.add_argument("--rho", type=float, help="density (default 7000)")
    g.add_argument("--cp", type=float, help="heat capacity (default 0.8)")
    g.add_argument("--Q", type=float, help="volume source strength (default 1000)")
    g.add_argument("--radius", type=float, help="source ball radius (default 0.05)")
    g.add_argument("--initial", type=float, help="uniform initial temperature (default 0)")
    sh.set_defaults(func=cmd_heat)

    sm = sub.add_parser("mms", help="manufactured-solution order sweep on a k^3 unit cube")
    sm.add_argument("--k", type=int, default=4)
    sm.add_argument("--max-order", type=int, default=6)
    sm.add_argument("--csv", help="also write the table here")
    sm.set_defaults(func=cmd_mms)

    sb = sub.add_parser("bench", help="kernel flop/byte counters, model vs measured")
    sb.add_argument("--orders", type=int, nargs="+", default=[2, 3, 4, 5, 6, 7])
    sb.add_argument("--k", type=int, default=4)
    sb.add_argument("--family", choices=FAMILIES)
    sb.add_argument("--repeats", type=int, default=3)
    sb.add_argument("--word-size", type=int, choices=(4, 8), default=4)
    sb.add_argument("--json", help="write the rows as JSON")
    sb.set_defaults(func=cmd_bench)

    sg = sub.add_parser("meshgen", help="generate (and optionally refine) a mesh and write it")
    _mesh_args(sg)
    sg.add_argument("--output", "-o", required=True, help=".msh for gmsh ASCII, anything else for binary")
    sg.set_defaults(func=cmd_meshgen)
    return p


def main(argv=None) -> int:
    parser = make_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2), format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (ConfigError, MeshError, InvertedElementError, FileNotFoundError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except IndefiniteOperatorError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NOT_CONVERGED


if __name__ == "__main__":
    sys.exit(main())
