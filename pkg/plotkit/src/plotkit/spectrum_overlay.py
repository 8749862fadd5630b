"""Sorted singular-value overlay: network sample, Gaussian baseline, and the
quarter-circle limit curve."""

from __future__ import annotations

import argparse
import sys
from dataclasses import dataclass

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .csvio import SchemaError, SpectrumTable, read_spectrum


@dataclass(frozen=True)
class PlotSpec:
    network_csv: str
    baseline_csv: str | None
    out_image: str
    xlabel: str = "rank fraction"
    ylabel: str = "normalized singular value"


def quarter_circle_quantiles(positions: np.ndarray) -> np.ndarray:
    """Descending quantile curve of the density sqrt(4 - x^2) / pi on [0, 2]."""
    x = np.linspace(0.0, 2.0, 2001)
    cdf = (x * np.sqrt(4.0 - x**2) / 2.0 + 2.0 * np.arcsin(x / 2.0)) / np.pi
    return np.interp(1.0 - positions, cdf, x)


def _check_normalizations(network: SpectrumTable, baseline: SpectrumTable | None):
    if network.normalization != "knorm":
        raise SchemaError(
            f"{network.path}: network spectrum must be K-normalized "
            f"(normalization 'knorm'), got {network.normalization!r}"
        )
    if baseline is not None and baseline.normalization != "chgue":
        raise SchemaError(
            f"{baseline.path}: baseline spectrum must carry normalization "
            f"'chgue', got {baseline.normalization!r}"
        )


def plot_spectrum_overlay(
    network_csv: str, baseline_csv: str | None, out_image: str
) -> PlotSpec:
    spec = PlotSpec(network_csv, baseline_csv, out_image)
    network = read_spectrum(network_csv)
    baseline = read_spectrum(baseline_csv) if baseline_csv else None
    _check_normalizations(network, baseline)

    fig, ax = plt.subplots(figsize=(7.0, 4.5))
    vals = np.sort(network.sigma_normalized)[::-1]
    pos = (np.arange(len(vals)) + 0.5) / len(vals)
    ax.plot(pos, vals, color="tab:blue", lw=1.4, label=network.label)
    if baseline is not None:
        bvals = np.sort(baseline.sigma_normalized)[::-1]
        bpos = (np.arange(len(bvals)) + 0.5) / len(bvals)
        ax.plot(bpos, bvals, color="tab:green", lw=1.4, label=baseline.label)
    grid = np.linspace(0.0005, 0.9995, 800)
    ax.plot(
        grid,
        quarter_circle_quantiles(grid),
        color="black",
        ls="--",
        lw=1.0,
        label="quarter-circle limit",
    )
    ax.set_xlabel(spec.xlabel)
    ax.set_ylabel(spec.ylabel)
    ax.set_xlim(0.0, 1.0)
    ax.set_ylim(bottom=0.0)
    ax.legend(frameon=False)
    fig.tight_layout()
    fig.savefig(out_image, dpi=120, metadata={"Software": None})
    plt.close(fig)
    return spec


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="plot-spectrum-overlay", description=__doc__
    )
    parser.add_argument("network_csv")
    parser.add_argument("baseline_csv", nargs="?", default=None)
    parser.add_argument("--out", required=True, help="output image (PNG)")
    args = parser.parse_args(argv)
    try:
        plot_spectrum_overlay(args.network_csv, args.baseline_csv, args.out)
    except (SchemaError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
