"""Rank-deficit bar chart over bond dimension, annotated with N mod 4."""

from __future__ import annotations

import argparse
import sys

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .csvio import SchemaError, read_rank_scan


def plot_rank_deficit(scan_csv: str, out_image: str) -> None:
    table = read_rank_scan(scan_csv)
    fig, ax = plt.subplots(figsize=(7.0, 4.0))
    by_n = table.deficits_by_n()
    if not by_n:
        ax.text(
            0.5, 0.5, "empty rank scan: no data rows",
            ha="center", va="center", transform=ax.transAxes, color="tab:red",
        )
        ax.set_xticks([])
    else:
        ns = sorted(by_n)
        heights = [float(np.mean(by_n[n])) for n in ns]
        colors = ["tab:red" if n % 4 in (2, 3) else "tab:gray" for n in ns]
        ax.bar(ns, heights, color=colors, width=0.7)
        ax.set_xticks(ns)
        ax.set_xticklabels([f"{n}\nmod {n % 4}" for n in ns], fontsize=8)
        top = max(heights + [1.0])
        ax.set_ylim(0.0, top * 1.2)
    ax.set_xlabel("bond dimension N (with N mod 4)")
    ax.set_ylabel("rank deficit (QMC - rank)")
    net = table.meta.get("network", scan_csv)
    ax.set_title(f"rank deficit scan: {net}", fontsize=10)
    fig.tight_layout()
    fig.savefig(out_image, dpi=120, metadata={"Software": None})
    plt.close(fig)


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="plot-rank-deficit", description=__doc__)
    parser.add_argument("scan_csv")
    parser.add_argument("--out", required=True, help="output image (PNG)")
    args = parser.parse_args(argv)
    try:
        plot_rank_deficit(args.scan_csv, args.out)
    except (SchemaError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
