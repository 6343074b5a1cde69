"""Simulate a relaxation run and fit its decay rates.

Defaults reproduce the polarized d = 1 run at 0.8 D*; use --set to change
any configuration key, e.g. ``--set model.d=2 --set init.u0=0.4,0.5``.

    python3 scripts/relaxation_run.py --out runs/relax --set model.D_rel=0.8
"""
import argparse
from pathlib import Path

from flockfp.cli import main as cli


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--out", default="runs/relax")
    ap.add_argument("--set", action="append", default=[], metavar="KEY=VALUE")
    args = ap.parse_args()
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    overrides = [x for kv in args.set for x in ("--set", kv)]
    traj, rates = out / "trajectory.csv", out / "rates.csv"
    if cli(["simulate", "--out", str(traj)] + overrides):
        raise SystemExit("simulation failed")
    if cli(["rates", "--set", f"rates.input={traj}", "--out", str(rates)]):
        raise SystemExit("rate fit failed")
    print(rates.read_text())


if __name__ == "__main__":
    main()
