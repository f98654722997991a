#!/usr/bin/env python3
"""Convert the classic citation-network layout (cora.content / cora.cites)
into this package's edge-list + CSV formats, keeping ids aligned.

Usage: python scripts/prepare_cora.py RAW_DIR OUT_DIR
"""

import sys
from pathlib import Path

import numpy as np

from egoae.graph_core import Graph


def load_raw(raw_dir):
    """Returns (graph, features, labels) with node order fixed by the
    content file; citation edges are treated as undirected links."""
    raw_dir = Path(raw_dir)
    ids = []
    feats = []
    label_names = []
    with open(raw_dir / "cora.content", encoding="utf-8") as fh:
        for line in fh:
            parts = line.strip().split()
            if not parts:
                continue
            ids.append(parts[0])
            feats.append([float(x) for x in parts[1:-1]])
            label_names.append(parts[-1])
    index = {pid: i for i, pid in enumerate(ids)}
    classes = {name: i for i, name in enumerate(sorted(set(label_names)))}
    labels = np.array([classes[n] for n in label_names], dtype=np.int64)
    X = np.asarray(feats, dtype=np.float64)

    edges = set()
    with open(raw_dir / "cora.cites", encoding="utf-8") as fh:
        for line in fh:
            parts = line.split()
            if len(parts) != 2:
                continue
            a, b = index.get(parts[0]), index.get(parts[1])
            if a is None or b is None or a == b:
                continue
            edges.add((min(a, b), max(a, b)))
    return Graph(len(ids), sorted(edges)), X, labels


def main():
    if len(sys.argv) != 3:
        print(__doc__)
        return 2
    raw_dir, out_dir = Path(sys.argv[1]), Path(sys.argv[2])
    out_dir.mkdir(parents=True, exist_ok=True)
    graph, X, labels = load_raw(raw_dir)
    with open(out_dir / "edges.txt", "w", encoding="utf-8") as fh:
        for u, v in graph.edges:
            fh.write(f"{u} {v}\n")
    with open(out_dir / "features.csv", "w", encoding="utf-8") as fh:
        for row in X:
            fh.write(",".join(repr(float(x)) for x in row) + "\n")
    with open(out_dir / "labels.csv", "w", encoding="utf-8") as fh:
        for i, y in enumerate(labels):
            fh.write(f"{i},{int(y)}\n")
    print(f"{graph.num_nodes} nodes, {graph.num_edges} edges, "
          f"{X.shape[1]} features, {labels.max() + 1} classes -> {out_dir}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
