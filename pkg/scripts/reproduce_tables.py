"""Refinement studies for every convergence preset; one CSV per study.

    python3 scripts/reproduce_tables.py --out results/
    python3 scripts/reproduce_tables.py --quick      # coarse meshes only
"""
import argparse
import os
import time

from cutdg.harness import run_convergence
from cutdg.harness.output import CONVERGENCE_HEADER, convergence_rows, csv_text, write_text

STUDIES = [
    ("stationary_scalar_accuracy", {"degree": 1}, None),
    ("stationary_scalar_accuracy", {"degree": 2}, None),
    ("stationary_scalar_accuracy", {"degree": 3}, None),
    ("acoustic", {"degree": 2}, (200, 400, 800, 1600)),
    ("moving_accuracy", {"degree": 1}, None),
    ("moving_accuracy", {"degree": 2}, None),
    ("coupled", {}, (20, 40, 80, 160, 320)),
    ("twod_convergence", {"degree": 1}, None),
    ("twod_convergence", {"degree": 2}, None),
]


def main():
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--out", default="results")
    ap.add_argument("--quick", action="store_true", help="first three refinements only")
    args = ap.parse_args()
    os.makedirs(args.out, exist_ok=True)
    for preset, ov, ns in STUDIES:
        t0 = time.perf_counter()
        if args.quick:
            from cutdg.harness import get_preset

            pr = get_preset(preset)
            ns = (ns or pr.refinement_list(pr.resolve(ov)["degree"]))[:3]
        rows, _ = run_convergence(preset, ns, ov)
        tag = preset + "".join(f"_{k}{v}" for k, v in ov.items())
        write_text(os.path.join(args.out, tag + ".csv"), csv_text(CONVERGENCE_HEADER, convergence_rows(rows)))
        last = rows[-1]
        print(f"{tag:40s} N={last.n:5d} L2={last.norms.L2:.3e} order={last.order_L2:.2f} "
              f"({time.perf_counter() - t0:.0f}s)", flush=True)


if __name__ == "__main__":
    main()
