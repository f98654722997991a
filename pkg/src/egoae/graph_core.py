"""Immutable graph storage plus loaders for edge lists, features, labels and splits.

File formats:
  * edge list  -- UTF-8 text, one "src dst" pair per line, '#' starts a comment line
  * features   -- headerless CSV, one row per node
  * labels     -- headerless CSV "node_id,label" per line
  * split      -- JSON {"seed": ..., "train": [...], "val": [...], "test": [...]}
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass

import numpy as np

log = logging.getLogger("egoae.graph")


@dataclass(frozen=True)
class EdgeListReport:
    """What the edge-list loader dropped or rewrote while normalizing input."""

    dropped_self_loops: int = 0
    dropped_duplicates: int = 0
    remapped: bool = False

    @property
    def dropped(self) -> int:
        return self.dropped_self_loops + self.dropped_duplicates


class Graph:
    """Static graph over nodes 0..num_nodes-1 with sorted neighbor lists.

    Immutable after construction; safe for concurrent reads. Undirected
    graphs keep symmetric adjacency, directed graphs keep separate
    out-/in-neighbor lists. Self-loops and duplicate edges are rejected.
    """

    __slots__ = ("num_nodes", "directed", "edges",
                 "_out", "_in", "_out_sets", "_in_sets", "_any", "_any_sets")

    def __init__(self, num_nodes: int, edges, directed: bool = False):
        if num_nodes <= 0:
            raise ValueError("graph must have at least one node")
        norm = set()
        for u, v in edges:
            u, v = int(u), int(v)
            if not (0 <= u < num_nodes and 0 <= v < num_nodes):
                raise ValueError(f"edge ({u},{v}) out of range for {num_nodes} nodes")
            if u == v:
                raise ValueError(f"self-loop at node {u}")
            key = (u, v) if directed else (min(u, v), max(u, v))
            if key in norm:
                raise ValueError(f"duplicate edge ({u},{v})")
            norm.add(key)
        self.num_nodes = num_nodes
        self.directed = directed
        self.edges = tuple(sorted(norm))

        out = [[] for _ in range(num_nodes)]
        inn = [[] for _ in range(num_nodes)]
        for u, v in self.edges:
            out[u].append(v)
            inn[v].append(u)
            if not directed:
                out[v].append(u)
                inn[u].append(v)
        self._out = tuple(tuple(sorted(ns)) for ns in out)
        self._in = tuple(tuple(sorted(ns)) for ns in inn)
        self._out_sets = tuple(frozenset(ns) for ns in self._out)
        self._in_sets = tuple(frozenset(ns) for ns in self._in)
        if directed:
            self._any = tuple(tuple(sorted(set(o) | set(i)))
                              for o, i in zip(self._out, self._in))
            self._any_sets = tuple(frozenset(ns) for ns in self._any)
        else:
            self._any = self._out
            self._any_sets = self._out_sets

    # -- adjacency accessors ------------------------------------------------

    def out_neighbors(self, v: int) -> tuple:
        return self._out[v]

    def in_neighbors(self, v: int) -> tuple:
        return self._in[v]

    def neighbors(self, v: int) -> tuple:
        """Out-neighbors; equals the full neighbor list on undirected graphs."""
        return self._out[v]

    def any_neighbors(self, v: int) -> tuple:
        """Neighbors in either direction (union of out and in)."""
        return self._any[v]

    def has_edge(self, u: int, v: int) -> bool:
        return v in self._out_sets[u]

    def has_any_edge(self, u: int, v: int) -> bool:
        return v in self._any_sets[u]

    def degree(self, v: int) -> int:
        return len(self._out[v])

    @property
    def num_edges(self) -> int:
        return len(self.edges)

    def __eq__(self, other) -> bool:
        return (isinstance(other, Graph)
                and self.num_nodes == other.num_nodes
                and self.directed == other.directed
                and self.edges == other.edges)

    def __hash__(self):
        return hash((self.num_nodes, self.directed, self.edges))

    def __repr__(self):
        kind = "directed" if self.directed else "undirected"
        return f"Graph({self.num_nodes} nodes, {self.num_edges} edges, {kind})"


def load_edge_list(path, directed: bool = False):
    """Parse an edge-list file into a normalized Graph.

    Sparse or non-contiguous node ids are densely remapped (the mapping is
    written next to the input as ``<path>.idmap.json``). Self-loops and
    duplicate edges are dropped and counted in the returned report.

    Returns (Graph, EdgeListReport).
    """
    raw = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            tokens = line.split()
            if len(tokens) != 2:
                raise ValueError(f"{path}:{lineno}: expected two integer tokens, got {line!r}")
            try:
                u, v = int(tokens[0]), int(tokens[1])
            except ValueError:
                raise ValueError(f"{path}:{lineno}: non-integer node id in {line!r}") from None
            raw.append((u, v))
    if not raw:
        raise ValueError(f"{path}: empty graph (no edges)")

    ids = sorted({u for e in raw for u in e})
    remap = {orig: new for new, orig in enumerate(ids)}
    remapped = ids != list(range(len(ids)))
    if remapped:
        sidecar = f"{path}.idmap.json"
        with open(sidecar, "w", encoding="utf-8") as fh:
            json.dump({str(k): v for k, v in remap.items()}, fh)
        log.info("remapped %d sparse node ids; mapping written to %s", len(ids), sidecar)

    self_loops = 0
    dups = 0
    seen = set()
    edges = []
    for u, v in raw:
        u, v = remap[u], remap[v]
        if u == v:
            self_loops += 1
            continue
        key = (u, v) if directed else (min(u, v), max(u, v))
        if key in seen:
            dups += 1
            continue
        seen.add(key)
        edges.append(key)

    if not edges:
        raise ValueError(f"{path}: empty graph after dropping self-loops/duplicates")
    report = EdgeListReport(self_loops, dups, remapped)
    if report.dropped:
        log.warning("%s: dropped %d self-loops and %d duplicate edges",
                    path, self_loops, dups)
    return Graph(len(ids), edges, directed=directed), report


def save_edge_list(graph: Graph, path) -> None:
    """Write the graph back out in canonical edge order (round-trips with load)."""
    with open(path, "w", encoding="utf-8") as fh:
        for u, v in graph.edges:
            fh.write(f"{u} {v}\n")


def load_features(path, num_nodes: int, row_normalize: bool = False) -> np.ndarray:
    """Read a headerless CSV into an (num_nodes, dim) float64 matrix."""
    rows = []
    width = None
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            cells = line.split(",")
            if width is None:
                width = len(cells)
            elif len(cells) != width:
                raise ValueError(f"{path}:{lineno}: expected {width} columns, got {len(cells)}")
            try:
                rows.append([float(c) for c in cells])
            except ValueError:
                raise ValueError(f"{path}:{lineno}: non-numeric cell") from None
    if len(rows) != num_nodes:
        raise ValueError(f"{path}: {len(rows)} feature rows for {num_nodes} nodes")
    X = np.asarray(rows, dtype=np.float64)
    if not np.all(np.isfinite(X)):
        raise ValueError(f"{path}: non-finite feature values")
    if row_normalize:
        norms = X.sum(axis=1, keepdims=True)
        norms[norms == 0.0] = 1.0
        X = X / norms
    return X


def dummy_features(num_nodes: int) -> np.ndarray:
    """All-ones feature column, for topology-only experiments."""
    return np.ones((num_nodes, 1), dtype=np.float64)


def random_features(num_nodes: int, dim: int, seed: int) -> np.ndarray:
    """Seeded standard-normal features, deterministic across runs."""
    rng = np.random.default_rng(seed)
    return rng.standard_normal((num_nodes, dim))


def load_labels(path, num_nodes: int):
    """Read "node_id,label" CSV lines. Returns (labels int64 array, num_classes)."""
    labels = np.full(num_nodes, -1, dtype=np.int64)
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            cells = line.split(",")
            if len(cells) != 2:
                raise ValueError(f"{path}:{lineno}: expected 'node_id,label'")
            try:
                node, lab = int(cells[0]), int(cells[1])
            except ValueError:
                raise ValueError(f"{path}:{lineno}: non-integer entry") from None
            if not 0 <= node < num_nodes:
                raise ValueError(f"{path}:{lineno}: node id {node} out of range")
            if lab < 0:
                raise ValueError(f"{path}:{lineno}: negative label")
            if labels[node] != -1:
                raise ValueError(f"{path}:{lineno}: duplicate label for node {node}")
            labels[node] = lab
    if np.any(labels < 0):
        missing = int(np.argmin(labels >= 0))
        raise ValueError(f"{path}: missing label for node {missing}")
    return labels, int(labels.max()) + 1


@dataclass(frozen=True)
class Split:
    """Disjoint train/val/test node-id sets covering all nodes (60/20/20)."""

    train: tuple
    val: tuple
    test: tuple
    seed: int

    def __post_init__(self):
        t, v, s = set(self.train), set(self.val), set(self.test)
        if t & v or t & s or v & s:
            raise ValueError("split sets overlap")


def make_split(num_nodes: int, seed: int) -> Split:
    """Seeded 60/20/20 permutation split (sizes within one node of exact)."""
    if num_nodes < 5:
        raise ValueError("need at least 5 nodes to split 60/20/20")
    rng = np.random.default_rng(seed)
    perm = rng.permutation(num_nodes)
    n_train = int(round(0.6 * num_nodes))
    n_val = int(round(0.2 * num_nodes))
    train = tuple(sorted(int(i) for i in perm[:n_train]))
    val = tuple(sorted(int(i) for i in perm[n_train:n_train + n_val]))
    test = tuple(sorted(int(i) for i in perm[n_train + n_val:]))
    return Split(train=train, val=val, test=test, seed=seed)


def save_split(split: Split, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump({"seed": split.seed, "train": list(split.train),
                   "val": list(split.val), "test": list(split.test)}, fh)


def load_split(path) -> Split:
    with open(path, "r", encoding="utf-8") as fh:
        obj = json.load(fh)
    return Split(train=tuple(obj["train"]), val=tuple(obj["val"]),
                 test=tuple(obj["test"]), seed=int(obj["seed"]))
