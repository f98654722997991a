#!/usr/bin/env python3
"""Write the built-in toy datasets to disk in the CLI's file formats.

Usage: python scripts/gen_synthetic.py {two-star|cycle-triangle} OUT_DIR
"""

import sys
from pathlib import Path

from egoae.graph_core import save_edge_list
from egoae.synthetic import cycle_triangle_dataset, two_star_dataset


def main():
    if len(sys.argv) != 3 or sys.argv[1] not in ("two-star", "cycle-triangle"):
        print(__doc__)
        return 2
    name, out_dir = sys.argv[1], Path(sys.argv[2])
    out_dir.mkdir(parents=True, exist_ok=True)
    graph, X, labels = (two_star_dataset() if name == "two-star"
                        else cycle_triangle_dataset())
    save_edge_list(graph, out_dir / "edges.txt")
    with open(out_dir / "features.csv", "w", encoding="utf-8") as fh:
        for row in X:
            fh.write(",".join(repr(float(x)) for x in row) + "\n")
    with open(out_dir / "labels.csv", "w", encoding="utf-8") as fh:
        for i, y in enumerate(labels):
            fh.write(f"{i},{int(y)}\n")
    print(f"{name}: {graph.num_nodes} nodes, {graph.num_edges} edges -> {out_dir}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
