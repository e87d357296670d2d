"""Convert the ACM arrays distributed with the public HeCo code release into a bundle.

Expected input directory (the release layout):

    pa.txt, ps.txt     whitespace-separated index pairs
    p_feat.npz         scipy sparse paper x keyword matrix
    labels.npy         one label per paper
    train_{L}.npy, val_{L}.npy, test_{L}.npy   for L in 20, 40, 60

Usage, then the benchmark check:

    python3 scripts/convert_acm.py raw/acm data/acm
    HECO_ACM_BUNDLE=data/acm pytest tests/test_acceptance.py -k acm -s

This path has not been exercised here because the data is not shipped.
"""

import argparse
from pathlib import Path

import numpy as np
import scipy.sparse as sp

from heco.evaluation import Split
from heco.hin import HeteroGraph, MetaPath, Relation, validate_graph
from heco.io import Dataset, save_dataset


def main():
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("src")
    ap.add_argument("dst")
    args = ap.parse_args()
    src = Path(args.src)
    pa = np.loadtxt(src / "pa.txt", dtype=np.int64).reshape(-1, 2)
    ps = np.loadtxt(src / "ps.txt", dtype=np.int64).reshape(-1, 2)
    feats = sp.load_npz(src / "p_feat.npz").toarray().astype(np.float64)
    labels = np.load(src / "labels.npy").astype(np.int64).ravel()
    n = {"paper": len(labels), "author": int(pa[:, 1].max()) + 1, "subject": int(ps[:, 1].max()) + 1}
    g = HeteroGraph(
        ["paper", "author", "subject"], "paper", n,
        {"paper": feats, "author": sp.identity(n["author"], format="csr"),
         "subject": sp.identity(n["subject"], format="csr")},
        {"pa": Relation("pa", "paper", "author", pa), "ps": Relation("ps", "paper", "subject", ps)},
        [MetaPath("PAP", ("pa", "~pa")), MetaPath("PSP", ("ps", "~ps"))],
        labels, {"paper": "dense", "author": "onehot", "subject": "onehot"},
    )
    print(validate_graph(g))
    splits = {}
    for L in (20, 40, 60):
        parts = [src / f"{k}_{L}.npy" for k in ("train", "val", "test")]
        if all(p.exists() for p in parts):
            splits[L] = Split(*(np.load(p).astype(np.int64).ravel() for p in parts), per_class=L)
    save_dataset(Dataset("acm", g, splits), args.dst)
    print(f"wrote {args.dst}: {n}, splits {sorted(splits)}")


if __name__ == "__main__":
    main()
