"""How much does beta = 0.7 lose against beta = 0.5 at moderate SBR and low MSC?

Prints p_d for PB at several betas over a small MSC range at SBR = 2, for
the symmetric Gaussian IRF and the right-skewed EMG IRF. The size of the
loss depends strongly on the IRF shape.

    python scripts/beta_tradeoff.py [--n-mc 200]
"""
import argparse

from splidar.sim import SweepSpec, sweep


def main():
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--n-mc", type=int, default=200)
    ap.add_argument("--sbr", type=float, default=2.0)
    args = ap.parse_args()
    msc = [10, 15, 20, 35, 50]
    betas = [0.3, 0.5, 0.7, 1.0]
    for irf in ("gaussian", "emg"):
        spec = SweepSpec(sbr_values=[args.sbr], msc_values=msc, n_mc=args.n_mc, irf=irf,
                         estimators=[f"pb:{b}" for b in betas])
        rows = sweep(spec)
        print(f"\n{irf} IRF, SBR = {args.sbr:g}, N_MC = {args.n_mc}")
        print("MSC   " + "  ".join(f"b={b:<4g}" for b in betas))
        for m in msc:
            vals = [r["p_d"] for r in rows if float(r["msc"]) == m]
            print(f"{m:<5} " + "  ".join(f"{float(v):.3f} " for v in vals))


if __name__ == "__main__":
    main()
