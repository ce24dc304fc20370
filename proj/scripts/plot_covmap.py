#!/usr/bin/env python3
"""Render covariance-map CSVs as pan/tilt heat maps, one panel per range.

  python3 scripts/plot_covmap.py out/covmap.csv --metric bearing_err_rms_deg
"""

import argparse
import csv
from collections import defaultdict

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("csv_path")
    parser.add_argument("--metric", default="bearing_err_rms_deg")
    parser.add_argument("--out", default="covmap.png")
    args = parser.parse_args()

    by_range = defaultdict(dict)
    pans, tilts = set(), set()
    with open(args.csv_path, newline="") as f:
        for row in csv.DictReader(f):
            pan = float(row["pan_deg"])
            tilt = float(row["tilt_deg"])
            pans.add(pan)
            tilts.add(tilt)
            by_range[float(row["range_m"])][(pan, tilt)] = float(row[args.metric])

    pans = sorted(pans)
    tilts = sorted(tilts)
    ranges = sorted(by_range)
    fig, axes = plt.subplots(1, len(ranges), figsize=(4 * len(ranges), 4), squeeze=False)
    for ax, rng in zip(axes[0], ranges):
        grid = np.full((len(tilts), len(pans)), np.nan)
        for (pan, tilt), value in by_range[rng].items():
            grid[tilts.index(tilt), pans.index(pan)] = value
        im = ax.imshow(
            grid,
            origin="lower",
            aspect="auto",
            extent=[pans[0], pans[-1], tilts[0], tilts[-1]],
            cmap="viridis",
        )
        ax.set_title(f"range {rng:g} m")
        ax.set_xlabel("pan (deg)")
        ax.set_ylabel("tilt (deg)")
        fig.colorbar(im, ax=ax, label=args.metric)
    fig.tight_layout()
    fig.savefig(args.out, dpi=140)
    print(f"wrote {args.out}")


if __name__ == "__main__":
    main()
