"""Pilot run that picks the (SBR, MSC) cell for the multi-band regime check.

Rule, fixed before looking at the acceptance seed: run the four-band MLE
sweep with an independent seed and a coarse grid, keep cells where PB at
beta=0.7 reaches p_d >= 0.95 while BF stays <= 0.30, and take the one with the
lowest SBR (then the lowest MSC). The margins leave room for Monte Carlo
noise when the check reruns at N_MC=200 with seed 0.

    python scripts/msl_pilot.py [--out tests/fixtures/msl_pilot.json]
"""
import argparse
import json
from pathlib import Path

import numpy as np

from splidar.msl import MslSweepSpec, msl_sweep
from splidar.sim import SweepSpec, rows_to_csv

PILOT_SEED = 1
PB_MIN, BF_MAX = 0.95, 0.30


def main():
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--out", type=Path, default=Path(__file__).resolve().parents[1] / "tests/fixtures/msl_pilot.json")
    ap.add_argument("--csv", type=Path, help="also dump the pilot table")
    args = ap.parse_args()

    base = SweepSpec(sbr_values=list(np.logspace(-3, 1, 9)), msc_values=[10, 20, 35, 50, 100],
                     n_mc=100, seed=PILOT_SEED)
    spec = MslSweepSpec(base=base, n_bands=4, betas=[0.7])
    rows = msl_sweep(spec)
    if args.csv:
        args.csv.write_text(rows_to_csv(rows))

    table = {}
    for r in rows:
        table.setdefault((float(r["sbr"]), float(r["msc"])), {})[r["estimator"]] = float(r["p_d"])
    ok = [(sbr, msc) for (sbr, msc), v in table.items() if v["pb"] >= PB_MIN and v["bf"] <= BF_MAX]
    if not ok:
        raise SystemExit("no pilot cell satisfies the selection rule")
    sbr, msc = min(ok)
    doc = {
        "sbr": sbr, "msc": msc, "n_bands": 4, "beta": 0.7,
        "pilot": {"seed": PILOT_SEED, "n_mc": base.n_mc, "pb_min": PB_MIN, "bf_max": BF_MAX,
                  "p_d": table[(sbr, msc)]},
    }
    args.out.parent.mkdir(parents=True, exist_ok=True)
    args.out.write_text(json.dumps(doc, indent=2) + "\n")
    print(json.dumps(doc, indent=2))


if __name__ == "__main__":
    main()
