"""Algebraic decay at the threshold noise D = D* in one dimension.

Prints t, F - F[G_0], t^1.5 (F - F[G_0]) and |u_f|^4 / (F - F[G_0]) along the
run, and the constant 24 / V''''(0) that the last column approaches.

    python3 scripts/critical_decay.py --t-scaled 50
"""
import argparse

import numpy as np

from flockfp.gibbs import V_and_derivatives
from flockfp.model import ModelParams
from flockfp.phase import find_D_star
from flockfp.solver import SolverConfig, initial_data, run


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--t-scaled", type=float, default=50.0, help="t_end * D*")
    ap.add_argument("--u0", type=float, default=0.6)
    ap.add_argument("--rows", type=int, default=25)
    args = ap.parse_args()
    Ds = find_D_star(1, 4.0)
    p = ModelParams(1, 4.0, Ds)
    cfg = SolverConfig(t_end=args.t_scaled / Ds, output_stride=50).resolve(p, 1.0)
    f0, _ = initial_data("gibbs_tilt", p, cfg.grid(1), u0=[args.u0], eps=0.3)
    res = run(f0, cfg, p, fill_u_inf=False)
    t, gap = res.times, res.column("F_gap")
    u4 = np.abs(res.column("u_f")[:, 0]) ** 4
    print(f"24 / V''''(0) = {24 / V_and_derivatives(p, 0.0, 4):.4f}")
    print(f"{'t':>10s} {'F_gap':>12s} {'t^1.5 gap':>12s} {'|u|^4/gap':>10s}")
    for k in np.linspace(1, t.size - 1, args.rows).astype(int):
        print(f"{t[k]:10.3f} {gap[k]:12.4e} {t[k] ** 1.5 * gap[k]:12.4e} {u4[k] / gap[k]:10.4f}")


if __name__ == "__main__":
    main()
