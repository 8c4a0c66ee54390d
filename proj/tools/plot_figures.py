#!/usr/bin/env python3
"""Render the plot-data CSVs written by `herding` into PNG files.

Usage: plot_figures.py OUTPUT_DIR

Reads dispersion.csv and any smoothed_<design>.csv found in OUTPUT_DIR and
writes dispersion.png and smoothed_<design>.png next to them.
"""

import argparse
import pathlib
import sys

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import pandas as pd  # noqa: E402


def plot_dispersion(path: pathlib.Path) -> pathlib.Path:
    df = pd.read_csv(path, parse_dates=["date"])
    fig, (top, bottom) = plt.subplots(2, 1, sharex=True, figsize=(10, 6))
    top.plot(df["date"], df["csad"], lw=0.7, label="CSAD")
    if "cssd" in df and df["cssd"].notna().any():
        top.plot(df["date"], df["cssd"], lw=0.7, label="CSSD")
    top.legend(loc="upper right")
    top.set_ylabel("dispersion")
    bottom.plot(df["date"], df["rm"], lw=0.7, color="black")
    bottom.set_ylabel("market return")
    out = path.with_suffix(".png")
    fig.tight_layout()
    fig.savefig(out, dpi=120)
    plt.close(fig)
    return out


def plot_smoothed(path: pathlib.Path) -> pathlib.Path:
    df = pd.read_csv(path, parse_dates=["date"])
    regimes = [c for c in df.columns if c.startswith("regime_")]
    fig, axes = plt.subplots(len(regimes), 1, sharex=True, figsize=(10, 2 * len(regimes)), squeeze=False)
    for ax, col in zip(axes[:, 0], regimes):
        ax.fill_between(df["date"], df[col], lw=0, alpha=0.6)
        ax.set_ylim(0, 1)
        ax.set_ylabel(col.replace("_", " "))
    out = path.with_suffix(".png")
    fig.tight_layout()
    fig.savefig(out, dpi=120)
    plt.close(fig)
    return out


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("output_dir", type=pathlib.Path)
    args = parser.parse_args(argv)
    written = []
    dispersion = args.output_dir / "dispersion.csv"
    if dispersion.exists():
        written.append(plot_dispersion(dispersion))
    for smoothed in sorted(args.output_dir.glob("smoothed_*.csv")):
        written.append(plot_smoothed(smoothed))
    if not written:
        print(f"no plot data in {args.output_dir}", file=sys.stderr)
        return 2
    for w in written:
        print(w)
    return 0


if __name__ == "__main__":
    sys.exit(main())
