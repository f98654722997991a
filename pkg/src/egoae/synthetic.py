"""Built-in toy graphs for demos, sanity training runs, and benchmarks."""

from __future__ import annotations

import numpy as np

from .graph_core import Graph


def two_star_dataset(leaves: int = 9):
    """Two disjoint stars with class-distinct features; linearly separable.

    Returns (graph, features, labels): star A nodes get feature [1, 0] and
    label 0, star B nodes [0, 1] and label 1.
    """
    n_star = leaves + 1
    edges = [(0, i) for i in range(1, n_star)]
    edges += [(n_star, n_star + i) for i in range(1, n_star)]
    g = Graph(2 * n_star, edges, directed=False)
    X = np.zeros((g.num_nodes, 2))
    X[:n_star, 0] = 1.0
    X[n_star:, 1] = 1.0
    y = np.array([0] * n_star + [1] * n_star, dtype=np.int64)
    return g, X, y


def cycle_triangle_dataset(num_triangles: int = 10, num_hexagons: int = 5,
                           feat_dim: int = 4):
    """Disjoint triangles and hexagons with uniform features.

    Every node has degree 2, so the two roles (label 1 = triangle member,
    label 0 = cycle member) are invisible to plain neighborhood sums but
    separable through triangle-anchored matching.
    """
    edges = []
    labels = []
    n = 0
    for _ in range(num_triangles):
        a, b, c = n, n + 1, n + 2
        edges += [(a, b), (b, c), (a, c)]
        labels += [1, 1, 1]
        n += 3
    for _ in range(num_hexagons):
        ring = list(range(n, n + 6))
        edges += [(ring[i], ring[(i + 1) % 6]) for i in range(6)]
        labels += [0] * 6
        n += 6
    g = Graph(n, edges, directed=False)
    X = np.ones((n, feat_dim))
    return g, X, np.array(labels, dtype=np.int64)


def limitation_pair():
    """Two 2-regular graphs a neighborhood-sum network cannot tell apart:
    a 6-cycle and two disjoint triangles."""
    c6 = Graph(6, [(i, (i + 1) % 6) for i in range(6)], directed=False)
    tri2 = Graph(6, [(0, 1), (1, 2), (0, 2), (3, 4), (4, 5), (3, 5)],
                 directed=False)
    return c6, tri2


def erdos_renyi(n: int, p: float, seed: int, directed: bool = False) -> Graph:
    """Seeded G(n, p); pair selection is vectorized so large n stays cheap."""
    rng = np.random.default_rng(seed)
    if directed:
        mask = rng.random((n, n)) < p
        np.fill_diagonal(mask, False)
        src, dst = np.nonzero(mask)
    else:
        iu, ju = np.triu_indices(n, k=1)
        keep = rng.random(len(iu)) < p
        src, dst = iu[keep], ju[keep]
    edges = list(zip(src.tolist(), dst.tolist()))
    if not edges:
        raise ValueError("random draw produced an empty graph; raise p or n")
    return Graph(n, edges, directed=directed)
