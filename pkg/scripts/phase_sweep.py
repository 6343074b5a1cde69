"""Phase portrait across the transition for d = 1, 2, 3 (alpha = 4).

Writes one CSV per dimension into the output directory through the CLI, so
each file carries the usual provenance comment block.

    python3 scripts/phase_sweep.py --out runs/phase
"""
import argparse
import os
from pathlib import Path

from flockfp.cli import main as cli


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--out", default="runs/phase")
    ap.add_argument("--n-D", type=int, default=20)
    ap.add_argument("--threads", type=int, default=os.cpu_count() or 1)
    args = ap.parse_args()
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    os.environ["FLOCKFP_THREADS"] = str(args.threads)
    for d in (1, 2, 3):
        # the Poincare gap is a grid eigenproblem; skip it in d = 3
        coer = "yes" if d < 3 else "no"
        code = cli(["phase", "--set", f"model.d={d}", "--set", f"phase.n_D={args.n_D}",
                    "--set", f"phase.coercivity={coer}", "--out", str(out / f"phase_d{d}.csv")])
        if code:
            raise SystemExit(code)
        print(f"wrote {out / f'phase_d{d}.csv'}")


if __name__ == "__main__":
    main()
