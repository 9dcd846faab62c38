"""Manufactured-solution error against polynomial order on a k^3 unit cube.

    python scripts/mms_table.py --k 4 --max-order 8
"""
import argparse

from semhex.problems import mms_convergence


def main():
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--k", type=int, default=4)
    p.add_argument("--max-order", type=int, default=7)
    p.add_argument("--family", default="uniform")
    args = p.parse_args()
    prev = None
    print(f"{'n':>2s} {'nodes':>8s} {'error':>10s} {'drop':>7s} {'its':>5s}")
    for r in mms_convergence(range(1, args.max_order + 1), k=args.k, family=args.family):
        drop = f"{prev / r['error']:7.1f}" if prev else "      -"
        print(f"{r['order']:2d} {r['num_nodes']:8d} {r['error']:10.2e} {drop} {r['iterations']:5d}")
        prev = r["error"]


if __name__ == "__main__":
    main()
