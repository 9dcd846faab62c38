"""Model vs measured flop and byte counts of the residual and subdomain kernels.

    python scripts/kernel_counters.py --orders 2 3 4 5 6 7 --k 8
"""
import argparse

from semhex.cli import bench


def main():
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--orders", type=int, nargs="+", default=[2, 3, 4, 5, 6, 7])
    p.add_argument("--k", type=int, default=8)
    p.add_argument("--repeats", type=int, default=3)
    p.add_argument("--word-size", type=int, default=4, choices=(4, 8))
    args = p.parse_args()
    rows = bench(args.orders, k=args.k, repeats=args.repeats, word_size=args.word_size)
    head = f"{'kernel':9s} {'variant':21s} {'n':>2s} {'flops model':>14s} {'flops meas.':>14s} " \
           f"{'bytes model':>13s} {'bytes meas.':>13s} {'I model':>8s} {'I meas.':>8s} {'GFlop/s':>8s}"
    print(head)
    for r in rows:
        calls = r["calls"]
        print(
            f"{r['kernel']:9s} {r['variant']:21s} {r['n']:2d} {r['flops_model'] // calls:14d} "
            f"{r['flops_measured'] // calls:14d} {r['bytes_model'] // calls:13d} {r['bytes_measured'] // calls:13d} "
            f"{r['intensity_model']:8.3f} {r['intensity_measured']:8.3f} {r['gflops_measured'] or 0:8.3f}"
        )


if __name__ == "__main__":
    main()
