#!/usr/bin/env python3
"""Run the NMI-vs-dimensionality sweep and print a per-p summary table.

Thin wrapper over `nglf experiment blessing`; all flags pass through. The
full sweep (p up to 4096, 5 seeds) takes a few tens of minutes single-core
(the p=4096 cells dominate); pass --p-list 128,256 for a quick look.
"""

import sys

from nglf.cli import main


if __name__ == "__main__":
    code = main(["experiment", "blessing", *sys.argv[1:]])
    if code == 0:
        import csv
        import os
        from collections import defaultdict

        out_dir = os.environ.get("NGLF_OUT_DIR", ".")
        for i, a in enumerate(sys.argv[1:]):
            if a == "--out-dir":
                out_dir = sys.argv[1:][i + 1]
        by_p = defaultdict(list)
        with open(os.path.join(out_dir, "nmi.csv"), newline="") as f:
            for row in csv.DictReader(f):
                by_p[int(row["p"])].append(float(row["nmi"]))
        print(f"{'p':>6}  {'mean nmi':>9}  {'min':>6}  {'max':>6}")
        for p in sorted(by_p):
            vals = by_p[p]
            print(
                f"{p:>6}  {sum(vals) / len(vals):>9.4f}  "
                f"{min(vals):>6.4f}  {max(vals):>6.4f}"
            )
    sys.exit(code)
