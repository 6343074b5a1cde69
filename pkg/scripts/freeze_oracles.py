"""Recompute the brute-force reference values and write tests/data/oracle_values.json.

Run from the repository root:  python3 scripts/freeze_oracles.py
Takes about two minutes; the d=2 radius bisection dominates.
"""
import json
import math
import sys
from pathlib import Path

import numpy as np

ROOT = Path(__file__).resolve().parents[1]
sys.path.insert(0, str(ROOT / "tests"))
import oracles as o  # noqa: E402

A = 4.0


def main():
    out = {}
    out["angular_h_s1_d2"] = o.angular_h(1.0, 2, n=200_000)
    out["angular_h_s1_d3"] = o.angular_h(1.0, 3, n=200_000)
    out["angular_h1_s2_d2"] = o.angular_h(2.0, 2, deriv=1, n=200_000)
    out["radial_kernel_d1_a4_D1"] = o.trap(
        lambda s: (1 - s * s) * s**2 * np.exp(-o.phi(s, A)), 0.0, o.S_MAX)
    out["tensor_v2_d1_a1_D05_u03"] = o.gibbs_1d(1.0, 0.5, 0.3, lambda v: v * v)
    out["logZ_d1_a4_D05_u07"] = o.log_Z_1d(A, 0.5, 0.7)
    logZ0 = o.log_Z_1d(A, 0.2, 0.0)
    e1 = 0.5 + A / 4 - A / 2
    out["density_d1_a4_D02_u0_v1"] = math.exp(-e1 / 0.2 - logZ0)
    H, K = o.H_and_K(1, A, 0.2, 0.5)
    out["H_d1_a4_D02_r05"], out["K_d1_a4_D02_r05"] = H, K
    out["mean_gibbs_d1_a4_D02_u05"] = o.mean_1d(A, 0.2, 0.5, lambda v: v)
    r02 = o.r_of_D(1, A, 0.2)
    out["r_d1_a4_D02"] = r02
    out["W6_d1_a4_D02"] = o.mean_1d(A, 0.2, r02, lambda v: v**6)
    for d in (1, 2):
        Ds = o.D_star(d, A)
        out[f"D_star_d{d}"] = Ds
        out[f"critical_ratio_d{d}_tenth"] = o.critical_ratio(d, A, Ds / 10)
        out[f"r_d{d}_08"] = o.r_of_D(d, A, 0.8 * Ds)
        print(d, Ds, out[f"r_d{d}_08"], flush=True)
    D = 0.8 * out["D_star_d1"]
    r = out["r_d1_08"]
    var = o.mean_1d(A, D, r, lambda v: (v - r) ** 2)
    out["kappa_d1_08"] = var / D
    out["W2_d1_08"] = o.mean_1d(A, D, r, lambda v: v * v)
    out["W6_d1_08"] = o.mean_1d(A, D, r, lambda v: v**6)
    out["Lambda_d1_08"] = o.poincare_1d(A, D, r, degree=60)
    out["Lambda_a0_D05"] = o.poincare_1d(0.0, 0.5, 0.3, degree=20)
    # g = v - r (zero G-mean since u_G = r): Q1 = D var - var^2, Q2 = (D - var)^2
    out["Q1_linear_d1_08"] = D * var - var * var
    out["Q2_linear_d1_08"] = (D - var) ** 2
    # F[G_r] = -D log Z(r) on the sphere; H[G_r | G_0]
    logZr = o.log_Z_1d(A, D, r)
    logZ0 = o.log_Z_1d(A, D, 0.0)
    out["free_energy_G_r_d1_08"] = -D * logZr
    # log(G_r/G_0) = (r v - r^2/2)/D - logZr + logZ0
    out["rel_entropy_Gr_G0_d1_08"] = (r * r - r * r / 2) / D - logZr + logZ0
    path = ROOT / "tests" / "data" / "oracle_values.json"
    path.write_text(json.dumps(out, indent=1, sort_keys=True) + "\n")
    print(f"wrote {len(out)} values to {path}")


if __name__ == "__main__":
    main()
