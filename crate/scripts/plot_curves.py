#!/usr/bin/env python3
"""Draw RE curves from a `rankset ... --plot-data FILE` CSV.

One PNG per `figure` value, one panel per `panel` value, one line per
`series`, with +/- 2 stderr bars.

    python3 scripts/plot_curves.py curves.csv --out plots/
"""

import argparse
import csv
from collections import defaultdict
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402


def load(path):
    figs = defaultdict(lambda: defaultdict(lambda: defaultdict(list)))
    with open(path, newline="") as fh:
        for row in csv.DictReader(line for line in fh if not line.startswith("#")):
            se = float("nan") if row["stderr"] == "NA" else float(row["stderr"])
            figs[row["figure"]][row["panel"]][row["series"]].append((float(row["x"]), float(row["re"]), se))
    return figs


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("plot_data")
    ap.add_argument("--out", default=".", help="output directory")
    args = ap.parse_args()
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)

    for fig_name, panels in sorted(load(args.plot_data).items()):
        fig, axes = plt.subplots(1, len(panels), figsize=(4.5 * len(panels), 4), squeeze=False, sharey=True)
        for ax, (panel, series) in zip(axes[0], sorted(panels.items())):
            for name, pts in sorted(series.items()):
                pts.sort()
                xs, ys, ses = zip(*pts)
                ax.errorbar(xs, ys, yerr=[2 * s for s in ses], marker="o", ms=3, capsize=2, label=name)
            ax.axhline(1.0, color="grey", lw=0.8, ls=":")
            ax.set_title(panel)
            ax.set_xlabel("r" if fig_name == "re_dataset" else "p")
            ax.legend(fontsize=7)
        axes[0][0].set_ylabel("RE")
        fig.tight_layout()
        target = out / f"{fig_name}.png"
        fig.savefig(target, dpi=120)
        plt.close(fig)
        print(target)


if __name__ == "__main__":
    main()
