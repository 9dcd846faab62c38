"""CG iteration counts for the three mesh families, two-scale vs fine-only.

    python scripts/table1.py --levels 8 16 32 --json table1.json
"""
import argparse
import json
import time

from semhex.krylov import PcgConfig
from semhex.problems import MeshConfig, ProblemConfig, solve_poisson

REFERENCE = {
    ("two_scale", "uniform"): {8: 10, 16: 11, 32: 13},
    ("two_scale", "distorted_domain"): {8: 10, 16: 13, 32: 15},
    ("two_scale", "distorted_elements"): {8: 12, 16: 18, 32: 21},
    ("fine_only", "uniform"): {8: 10, 16: 16, 32: 28},
    ("fine_only", "distorted_domain"): {8: 13, 16: 20, 32: 32},
    ("fine_only", "distorted_elements"): {8: 14, 16: 23, 32: 41},
}
LABEL = {"uniform": "Mesh 1", "distorted_domain": "Mesh 2", "distorted_elements": "Mesh 3"}


def iterations(family, k, precond, order=3, weighting="multiplicity"):
    cfg = ProblemConfig(
        mesh=MeshConfig(family=family, k=k),
        order=order,
        preconditioner=precond,
        overlap_weighting=weighting,
        solver=PcgConfig(rel_tolerance=1e-6, max_iterations=1000, record_history=False),
    )
    t0 = time.perf_counter()
    report, _, _ = solve_poisson(cfg, write=False)
    return report.iterations, time.perf_counter() - t0, report.coarse.get("solver")


def main():
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--levels", type=int, nargs="+", default=[8, 16, 32])
    p.add_argument("--families", nargs="+", default=list(LABEL))
    p.add_argument("--preconds", nargs="+", default=["two_scale", "fine_only"])
    p.add_argument("--order", type=int, default=3)
    p.add_argument("--weighting", default="multiplicity", choices=("multiplicity", "none"))
    p.add_argument("--json")
    args = p.parse_args()
    rows = []
    for precond in args.preconds:
        for family in args.families:
            for k in args.levels:
                its, secs, coarse = iterations(family, k, precond, args.order, args.weighting)
                ref = REFERENCE.get((precond, family), {}).get(k) if args.order == 3 else None
                rows.append({"preconditioner": precond, "family": family, "k": k, "iterations": its,
                             "reference": ref, "seconds": round(secs, 2), "coarse_solver": coarse})
                print(f"{precond:10s} {LABEL[family]} {k:3d}^3  its {its:4d}  (ref {ref})  {secs:7.1f}s  coarse={coarse}",
                      flush=True)
    if args.json:
        with open(args.json, "w") as fh:
            json.dump(rows, fh, indent=2)


if __name__ == "__main__":
    main()
