"""
Plot error curves from a results directory.

    python plot_results.py results/quick [--x comm_total] [--out fig.png]

Reads every `<label>__seed<seed>.csv`, averages mean_err across seeds per
label and draws it against iterations or communication rounds.
"""

import argparse
import csv
import glob
import os
import sys
from typing import Dict, List

import numpy as np

# Optional plotting (install: pip install matplotlib)
try:
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt
except Exception:  # pragma: no cover
    plt = None


def load_curves(results_dir: str, x_field: str) -> Dict[str, Dict[str, np.ndarray]]:
    grouped: Dict[str, List[Dict[str, np.ndarray]]] = {}
    for path in sorted(glob.glob(os.path.join(results_dir, "*__seed*.csv"))):
        label = os.path.basename(path).split("__seed")[0]
        with open(path, "r", encoding="utf-8") as f:
            rows = list(csv.DictReader(f))
        if not rows:
            continue
        grouped.setdefault(label, []).append({
            "x": np.array([float(r[x_field]) for r in rows]),
            "err": np.array([float(r["mean_err"]) for r in rows]),
        })

    curves = {}
    for label, runs in grouped.items():
        length = min(len(r["err"]) for r in runs)
        curves[label] = {
            "x": runs[0]["x"][:length],
            "err": np.mean([r["err"][:length] for r in runs], axis=0),
        }
    return curves


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(description="Plot mean squared error curves")
    parser.add_argument("results_dir")
    parser.add_argument("--x", default="k", choices=["k", "comm_total", "evals_total"])
    parser.add_argument("--out", default=None, help="Image path (default <results_dir>/errors_<x>.png)")
    args = parser.parse_args(argv)

    if plt is None:
        print("matplotlib is not installed; nothing to plot", file=sys.stderr)
        return 1

    curves = load_curves(args.results_dir, args.x)
    if not curves:
        print(f"No run CSVs found in {args.results_dir}", file=sys.stderr)
        return 1

    fig, ax = plt.subplots(figsize=(7, 4.5))
    for label, curve in curves.items():
        ax.semilogy(curve["x"], np.maximum(curve["err"], 1e-300), label=label)
    ax.set_xlabel(args.x)
    ax.set_ylabel("mean squared error")
    ax.grid(True, which="both", alpha=0.3)
    ax.legend(fontsize=8)
    out = args.out or os.path.join(args.results_dir, f"errors_{args.x}.png")
    fig.tight_layout()
    fig.savefig(out, dpi=150)
    print(out)
    return 0


if __name__ == "__main__":
    sys.exit(main())
