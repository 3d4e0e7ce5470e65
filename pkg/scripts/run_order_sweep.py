"""Approximation-error sweeps: truncation order vs distance from softmax.

One CSV per feature map at the requested logit bound, plus an identity-map
sweep at bound 5 (the clamp value) to show the slower convergence.
"""

import argparse
import os
import sys

sys.path.insert(0, os.path.join(os.path.dirname(__file__), "..", "src"))

from taylor_attention.bench import approx_error_sweep, write_sweep_csv
from taylor_attention.config import FeatureMapKind


def main() -> None:
    ap = argparse.ArgumentParser()
    ap.add_argument("--orders", type=int, default=14)
    ap.add_argument("--bound", type=float, default=1.0)
    ap.add_argument("--seed", type=int, default=3)
    args = ap.parse_args()

    orders = range(args.orders + 1)
    for fmap in FeatureMapKind:
        rows = approx_error_sweep(orders, args.bound, args.seed, 32, 2, 3,
                                  query_map=fmap, key_map=fmap)
        path = f"sweep_{fmap.value}_bound{args.bound:g}.csv"
        write_sweep_csv(path, rows)
        print(f"{path}: order {rows[0][0]} err {rows[0][1]:.3e} -> "
              f"order {rows[-1][0]} err {rows[-1][1]:.3e}")

    rows = approx_error_sweep(range(26), 5.0, args.seed, 32, 2, 3)
    write_sweep_csv("sweep_identity_bound5.csv", rows)
    print(f"sweep_identity_bound5.csv: final max_rel_err {rows[-1][1]:.3e}")


if __name__ == "__main__":
    main()
