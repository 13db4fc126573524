#!/usr/bin/env python3
"""
Plot rate-power boundaries from sweep CSVs written by `swiptmdp sweep`.

Usage: python scripts/plot_region.py runs/mp/sweep_i.csv runs/mp/sweep_ii.csv -o region.png
"""

import argparse
import csv
import math
from pathlib import Path
from typing import List, Tuple

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

SCHEME_LABELS = {"i": "Scheme I (known state)", "ii": "Scheme II (unknown state)",
                 "iii": "Scheme III (memoryless)"}


def read_sweep(path: Path) -> Tuple[str, List[float], List[float]]:
    rates, powers, scheme = [], [], ""
    with open(path, "r", encoding="utf-8", newline="") as f:
        for row in csv.DictReader(f):
            scheme = row["scheme"]
            rates.append(float(row["bitrate_bps"]) / 1e6)
            powers.append(float(row["power_watts"]) * 1e6)
    return scheme, rates, powers


def main() -> None:
    parser = argparse.ArgumentParser(description="Plot rate-power regions")
    parser.add_argument("sweeps", nargs="+", help="sweep CSV files")
    parser.add_argument("-o", "--output", default="rate_power_region.png")
    parser.add_argument("--width", type=float, default=6.0, help="figure width in inches")
    args = parser.parse_args()

    golden_ratio = (math.sqrt(5) - 1.0) / 2.0
    fig, ax = plt.subplots(figsize=(args.width, args.width * golden_ratio))
    for path in args.sweeps:
        scheme, rates, powers = read_sweep(Path(path))
        ax.plot(rates, powers, marker="o", markersize=3,
                label=SCHEME_LABELS.get(scheme, Path(path).stem))
    ax.set_xlabel("Bit rate (Mbit/s)")
    ax.set_ylabel("Delivered power (uW)")
    ax.grid(True, alpha=0.3)
    ax.legend()
    fig.tight_layout()
    fig.savefig(args.output, dpi=200)
    print(f"Saved {args.output}")


if __name__ == "__main__":
    main()
