#!/usr/bin/env python3
"""Run the covariance NLL sweep and print mean held-out NLL per (method, n).

Thin wrapper over `nglf experiment covariance`; all flags pass through.
Methods whose estimate is not positive definite at a given n (empirical
when n < p) show as nan.
"""

import sys

from nglf.cli import main


if __name__ == "__main__":
    code = main(["experiment", "covariance", *sys.argv[1:]])
    if code == 0:
        import csv
        import math
        import os
        from collections import defaultdict

        out_dir = os.environ.get("NGLF_OUT_DIR", ".")
        for i, a in enumerate(sys.argv[1:]):
            if a == "--out-dir":
                out_dir = sys.argv[1:][i + 1]
        cells = defaultdict(list)
        with open(os.path.join(out_dir, "nll.csv"), newline="") as f:
            for row in csv.DictReader(f):
                cells[(row["method"], int(row["n"]))].append(float(row["nll"]))
        methods = sorted({k[0] for k in cells})
        ns = sorted({k[1] for k in cells})
        print(f"{'method':>13}  " + "  ".join(f"n={n:>5}" for n in ns))
        for method in methods:
            vals = []
            for n in ns:
                xs = cells[(method, n)]
                mean = sum(xs) / len(xs)
                vals.append("    nan" if math.isnan(mean) else f"{mean:7.2f}")
            print(f"{method:>13}  " + "  ".join(vals))
    sys.exit(code)
