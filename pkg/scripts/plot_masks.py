#!/usr/bin/env python3
"""Bar chart of mean effective attention per modality and weather.

Input is one or more CSVs written by ``mmodom masks``:

    mmodom masks -c configs/desk.yaml --checkpoint runs/desk/two_stage/checkpoint.bin \
        --out reports/masks.csv
    python scripts/plot_masks.py reports/masks.csv --out reports/masks.png

Needs the ``plot`` extra (matplotlib).
"""
import argparse
import csv
from collections import defaultdict

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from mmodom.fusion import MODALITIES  # noqa: E402
from mmodom.synthsim import WEATHERS  # noqa: E402


def read_means(paths):
    means = defaultdict(dict)
    for p in paths:
        with open(p, newline="") as fh:
            for row in csv.DictReader(fh):
                if row["frame"] == "summary" and row["mask"].startswith("effective_"):
                    means[row["weather"]][row["mask"][len("effective_"):]] = float(row["mean"])
    return means


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("csv", nargs="+")
    ap.add_argument("--out", default="masks.png")
    args = ap.parse_args()

    means = read_means(args.csv)
    weathers = [w for w in WEATHERS if w in means]
    x = np.arange(len(weathers))
    width = 0.8 / len(MODALITIES)
    fig, ax = plt.subplots(figsize=(7, 3.5))
    for i, k in enumerate(MODALITIES):
        ax.bar(x + (i - 1) * width, [means[w].get(k, np.nan) for w in weathers], width, label=k)
    ax.set_xticks(x, weathers)
    ax.set_ylabel("mean effective mask")
    ax.legend(title="modality")
    fig.tight_layout()
    fig.savefig(args.out, dpi=150)
    print(f"wrote {args.out}")


if __name__ == "__main__":
    main()
