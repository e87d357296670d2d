"""Trace the adversarial schedule on the default planted-partition graph.

    python3 scripts/gan_schedule.py --out runs/gan_trace.csv

Prints the first and last discriminator loss of every D phase and the mean
D(fake) at both ends of every G phase.
"""

import argparse
import warnings

from heco.io import SynthSpec, generate_synthetic_hin, write_csv
from heco.model import HeCo
from heco.negatives import GanSchedule
from heco.presets import synthetic_config
from heco.train import train


def phases(log):
    out = []
    for row in log:
        if row["phase"] not in ("D", "G"):
            continue
        if not out or out[-1][0] != row["phase"]:
            out.append((row["phase"], []))
        out[-1][1].append(row)
    return out


def main():
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--seed", type=int, default=0)
    for name, default in (("k0", 50), ("i-dg", 2), ("k-d", 20), ("k-g", 20), ("k-h", 50)):
        ap.add_argument(f"--{name}", type=int, default=default)
    ap.add_argument("--out", default=None)
    args = ap.parse_args()
    warnings.filterwarnings("ignore", message="zero embedding row")
    sched = GanSchedule(k0=args.k0, i_dg=args.i_dg, k_d=args.k_d, k_g=args.k_g, k_h=args.k_h)
    ds = generate_synthetic_hin(SynthSpec(), args.seed)
    res = train(HeCo(ds.graph, synthetic_config("heco_gan", args.seed, gan=sched)), early_stop=False)
    for k, (phase, rows) in enumerate(phases(res.gan_log)):
        key = "L_D" if phase == "D" else "D_fake"
        a, b = rows[0][key], rows[-1][key]
        trend = "down" if b < a else "up" if b > a else "flat"
        print(f"{k:2d} {phase} {key:6} {a:.5f} -> {b:.5f} ({trend})")
    if args.out:
        cols = ["phase", "epoch", "L_D", "L_G", "L_heco", "D_fake"]
        write_csv(args.out, cols, [[r[c] for c in cols] for r in res.gan_log])


if __name__ == "__main__":
    main()
