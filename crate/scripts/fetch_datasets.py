#!/usr/bin/env python3
"""Write the breast-cancer and wine benchmark sets as headerless CSV files
(features first, integer label last) into data/.

Two variants per set:
  <name>_raw.csv  features as distributed
  <name>.csv      every feature column z-scored over the whole file

The circuit classifier only normalizes each input vector, so on raw files a
few large-valued columns (tumour area, proline) dominate the encoded state.
The benchmark configs use the z-scored files.

Uses the copies bundled with scikit-learn, so no network access is needed.
"""

import argparse
import csv
import hashlib
import pathlib

import numpy as np
from sklearn.datasets import load_breast_cancer, load_wine


def write(path, features, target):
    with open(path, "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        for x, y in zip(features, target):
            w.writerow([repr(float(v)) for v in x] + [int(y)])
    digest = hashlib.sha256(path.read_bytes()).hexdigest()
    print(f"{path}: {len(target)} rows, {features.shape[1]} features, sha256 {digest}")


def main():
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--out", default=pathlib.Path(__file__).resolve().parent.parent / "data", type=pathlib.Path)
    args = ap.parse_args()
    args.out.mkdir(parents=True, exist_ok=True)
    for name, bunch in [("cancer", load_breast_cancer()), ("wine", load_wine())]:
        x = np.asarray(bunch.data, dtype=float)
        write(args.out / f"{name}_raw.csv", x, bunch.target)
        z = (x - x.mean(axis=0)) / x.std(axis=0)
        write(args.out / f"{name}.csv", z, bunch.target)


if __name__ == "__main__":
    main()
