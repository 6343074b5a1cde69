"""Grid refinement of the coercivity margins and of the weak-form residual.

For a fixed family of aligned perturbations, prints the margins of the four
coercivity bounds on three nested grids and the ratio of successive
differences (about 4 for second-order convergence).

    python3 scripts/refinement_study.py --d 2
"""
import argparse
import math

import numpy as np

import flockfp.linearized as lin
from flockfp.model import ModelParams
from flockfp.phase import coercivity_constants, find_D_star, require_r_of_D
from flockfp.solver import SolverConfig

NAMES = ("Q2 - b^2 Q1", "Q1 - eta^2 |g|^2", "|grad g| - a Q2^1/2", "b Q2^1/2 - |grad g|")


def margins(q, co):
    Q1, Q2 = lin.q1(q), lin.q2(q)
    nrm, grd = lin.l2_norm_sq(q), lin.grad_norm_sq(q)
    return np.array([Q2 - co.beta**2 * Q1, Q1 - co.eta**2 * nrm,
                     math.sqrt(grd) - co.a * math.sqrt(Q2), co.b * math.sqrt(Q2) - math.sqrt(grd)])


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--d", type=int, default=1, choices=(1, 2))
    ap.add_argument("--rel", type=float, default=0.8, help="D / D*")
    ap.add_argument("--samples", type=int, default=10)
    ap.add_argument("--seed", type=int, default=5)
    args = ap.parse_args()
    p = ModelParams(args.d, 4.0, args.rel * find_D_star(args.d, 4.0))
    r = require_r_of_D(p)
    co = coercivity_constants(p)
    u = np.zeros(args.d)
    u[0] = r
    base = SolverConfig().resolve(p, r).grid(args.d)
    table, weak = [], []
    for k in range(3):
        g = base.refine(2**k) if k else base
        a = lin.Anchor.at(g, p, u)
        rng = np.random.default_rng(args.seed)
        qs = [lin.aligned_perturbation(a, rng) for _ in range(args.samples)]
        table.append(np.array([margins(q, co) for q in qs]))
        x, y = qs[0], qs[1]
        weak.append(abs(lin.inner_arrays(a, lin.apply_L(x), y.g) - lin.weak_L_form(x, y)))
        print(f"n={g.n}: min margins " + "  ".join(f"{m:.3e}" for m in table[-1].min(axis=0)))
    e1, e2 = np.abs(table[0] - table[1]), np.abs(table[1] - table[2])
    for j, name in enumerate(NAMES):
        if np.all(e1[:, j] <= 1e-12 * np.abs(table[2][:, j])):
            print(f"{name:22s} converged to round-off on every grid")
        else:
            print(f"{name:22s} refinement ratio median {np.median(e1[:, j] / e2[:, j]):.3f}")
    print("weak-form residual of <L g, h>: " + ", ".join(f"{w:.2e}" for w in weak)
          + f"  ratios {weak[0] / weak[1]:.2f}, {weak[1] / weak[2]:.2f}")


if __name__ == "__main__":
    main()
