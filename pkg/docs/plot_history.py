#!/usr/bin/env python3
"""Plot a search history CSV: fitness curves and the time composition.

Usage: python docs/plot_history.py search_history.csv [out.png]
"""

import csv
import sys

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt


def main():
    if len(sys.argv) < 2:
        print(__doc__)
        return 2
    path = sys.argv[1]
    out = sys.argv[2] if len(sys.argv) > 2 else "search_history.png"
    rows = list(csv.DictReader(open(path, encoding="utf-8")))
    gens = [int(r["generation"]) for r in rows]

    fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(10, 4))
    ax1.plot(gens, [float(r["best_fitness"]) for r in rows], label="best")
    ax1.plot(gens, [float(r["mean_fitness"]) for r in rows], label="mean")
    ax1.set_xlabel("generation")
    ax1.set_ylabel("validation accuracy")
    ax1.legend()

    labels = ("scratch_match_s", "incremental_match_s", "eval_s")
    totals = [sum(float(r[k]) for r in rows) for k in labels]
    ax2.bar(range(3), totals)
    ax2.set_xticks(range(3), ["scratch\nmatch", "incremental\nmatch", "model\neval"])
    ax2.set_ylabel("seconds")

    fig.tight_layout()
    fig.savefig(out, dpi=150)
    print(f"wrote {out}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
