"""Mass-matrix conditioning against the relative cut size.

Prints max/min condition numbers per degree and face rule, the location of the
extremes, and the unstabilised control (gamma_M = 0).
"""
import argparse

import numpy as np

from cutdg.assembly1d import FluxModel, PenaltyConfig, build_operators
from cutdg.geometry1d import build_mesh
from cutdg.harness import alpha_values, condition_number_blocks


def sweep(n, r, pen, alphas):
    mesh = build_mesh(-1.0, 1.0, n)
    flux = FluxModel.scalar(2.0, 1.0)
    return np.array([condition_number_blocks(build_operators(mesh, a * mesh.h, r, flux, pen).mass) for a in alphas])


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--n", type=int, default=400)
    ap.add_argument("--samples", type=int, default=400)
    args = ap.parse_args()
    alphas = alpha_values(args.samples)
    print("r  face_rule   cond_min  at_alpha  cond_max  at_alpha  ratio")
    for r in (1, 2, 3):
        for rule in ("small_side", "literal"):
            c = sweep(args.n, r, PenaltyConfig(face_rule=rule), alphas)
            print(f"{r}  {rule:10s}  {c.min():8.3g}  {alphas[c.argmin()]:.4f}    {c.max():8.3g}  "
                  f"{alphas[c.argmax()]:.4f}    {c.max() / c.min():6.2f}", flush=True)
    tiny = np.array([1e-8, 1e-6, 1e-4, 1e-2])
    for gm in (0.25, 0.0):
        mesh = build_mesh(-1.0, 1.0, args.n)
        vals = []
        for a in tiny:
            M = build_operators(mesh, a * mesh.h, 1, FluxModel.scalar(2.0, 1.0), PenaltyConfig(gamma_M=gm)).mass
            s = np.linalg.svd(M.toarray(), compute_uv=False)
            vals.append(s[0] / s[-1])
        print(f"gamma_M={gm}: " + "  ".join(f"alpha={a:.0e} cond={v:.3g}" for a, v in zip(tiny, vals)))


if __name__ == "__main__":
    main()
