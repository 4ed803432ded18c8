#!/usr/bin/env python3
"""Plot the CSV tables a hetq run directory contains.

    python3 scripts/plot.py OUT_DIR [--save]

Needs matplotlib. Each known table gets one figure; unknown files are skipped.
"""

import argparse
import csv
import pathlib
import sys


def read(path):
    with open(path, newline="") as f:
        rows = list(csv.DictReader(f))
    return {k: [float(r[k]) for r in rows] for k in rows[0]} if rows else {}


def path_plot(ax, t):
    ax.step(t["t"], t["X"], where="post", label="X")
    ax.step(t["t"], t["Q"], where="post", label="Q")
    ax.set_xlabel("t")


def density_plot(ax, t):
    ax.plot(t["x"], t["density"])
    ax.set_xlabel("scaled headcount")


def ql_plot(ax, t):
    ax.plot(t["eps"], t["QL_lisf"], marker="o", label="LISF")
    ax.plot(t["eps"], t["QL_fsf"], marker="s", label="FSF")
    ax.set_xlabel("eps")
    ax.set_ylabel("QL")


def curve_plot(ax, t):
    ax.plot(t["x"], t["cost"])
    ax.set_xlabel("safety coefficient x")
    ax.set_ylabel("cost")


def ssc_plot(ax, t):
    rs = sorted(set(t["r"]))
    ax.boxplot([[v for r, v in zip(t["r"], t["ratio"]) if r == rr] for rr in rs])
    ax.set_xticks(range(1, len(rs) + 1), [f"{r:g}" for r in rs])
    ax.set_xlabel("r")
    ax.set_ylabel("SSC ratio")


def fairness_plot(ax, t):
    mids = [(a + b) / 2 for a, b in zip(t["bin_lo"], t["bin_hi"])]
    widths = [b - a for a, b in zip(t["bin_lo"], t["bin_hi"])]
    ax.bar(mids, t["eta_hat"], width=[0.9 * w for w in widths], alpha=0.6, label="estimate")
    ax.plot(mids, t["eta_theory"], "k.", label="theory")
    ax.set_xlabel("service rate")


def couple_plot(ax, t):
    ax.step(t["t"], t["D_hom"], where="post", label="homogeneous")
    ax.step(t["t"], t["D_het"], where="post", label="heterogeneous")
    ax.set_xlabel("t")
    ax.set_ylabel("departures")


PLOTS = {
    "path.csv": path_plot,
    "density.csv": density_plot,
    "ql.csv": ql_plot,
    "curve.csv": curve_plot,
    "ssc.csv": ssc_plot,
    "fairness.csv": fairness_plot,
    "couple.csv": couple_plot,
}


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("out_dir", type=pathlib.Path)
    ap.add_argument("--save", action="store_true", help="write PNGs next to the tables")
    args = ap.parse_args()
    import matplotlib

    if args.save:
        matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    found = False
    for name, plot in PLOTS.items():
        f = args.out_dir / name
        if not f.exists():
            continue
        found = True
        fig, ax = plt.subplots()
        plot(ax, read(f))
        ax.set_title(name)
        if ax.get_legend_handles_labels()[0]:
            ax.legend()
        if args.save:
            fig.savefig(f.with_suffix(".png"), dpi=120)
    if not found:
        sys.exit(f"no known CSV tables in {args.out_dir}")
    if not args.save:
        plt.show()


if __name__ == "__main__":
    main()
