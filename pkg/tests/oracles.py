"""Independent reference implementations the tests check the library against.

Everything here is deliberately naive: exhaustive enumeration over injective
mappings or permutations, 1-WL color refinement, and finite differences.
None of it shares code with the library paths it validates.
"""

import itertools

import numpy as np

from egoae.templates import AnchoredTemplate


def graph_edge_pairs(graph):
    """Directed pair set built straight from the edge list."""
    pairs = set()
    for u, v in graph.edges:
        pairs.add((u, v))
        if not graph.directed:
            pairs.add((v, u))
    return pairs


def naive_matches(graph, template, ego, ignore_direction=False):
    """Every injective mapping with the anchor pinned, checked edge by edge."""
    pairs = graph_edge_pairs(graph)
    if ignore_direction:
        pairs = pairs | {(v, u) for u, v in pairs}
    others = [v for v in range(graph.num_nodes) if v != ego]
    found = []
    for tail in itertools.permutations(others, template.num_nodes - 1):
        m = (ego,) + tail
        ok = True
        for i, j in template.edges:
            if template.directed:
                if (m[i], m[j]) not in pairs:
                    ok = False
                    break
            else:
                if (m[i], m[j]) not in pairs and (m[j], m[i]) not in pairs:
                    ok = False
                    break
        if ok:
            found.append(m)
    return sorted(found)


def naive_all_matches(graph, template, ignore_direction=False):
    return [naive_matches(graph, template, ego, ignore_direction)
            for ego in range(graph.num_nodes)]


def anchor_fixing_permutations(template):
    """Exhaustively enumerated edge-preserving permutations with node 0 fixed."""
    n = template.num_nodes
    edges = set(template.edges)
    out = []
    for tail in itertools.permutations(range(1, n)):
        p = (0,) + tail
        if template.directed:
            mapped = {(p[i], p[j]) for i, j in edges}
        else:
            mapped = {(min(p[i], p[j]), max(p[i], p[j])) for i, j in edges}
        if mapped == edges:
            out.append(p)
    return out


def orbit_classes_bruteforce(template):
    """Node equivalence classes from pairwise reachability under the
    permutations above; returned sorted by smallest member."""
    n = template.num_nodes
    perms = anchor_fixing_permutations(template)
    parent = list(range(n))

    def find(x):
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    for p in perms:
        for i in range(n):
            a, b = find(i), find(p[i])
            if a != b:
                parent[max(a, b)] = min(a, b)
    classes = {}
    for i in range(n):
        classes.setdefault(find(i), []).append(i)
    return sorted([tuple(sorted(c)) for c in classes.values()], key=lambda c: c[0])


def wl_colors(graph, rounds):
    """1-WL color refinement from a uniform start; returns per-node colors."""
    colors = [0] * graph.num_nodes
    for _ in range(rounds):
        signatures = []
        for v in range(graph.num_nodes):
            neigh = sorted(colors[u] for u in graph.any_neighbors(v))
            signatures.append((colors[v], tuple(neigh)))
        table = {sig: i for i, sig in enumerate(sorted(set(signatures)))}
        colors = [table[sig] for sig in signatures]
    return colors


def fd_gradients(loss_fn, params, eps=1e-5):
    """Central finite differences of loss_fn() w.r.t. every parameter entry."""
    grads = {}
    for name, p in params.items():
        fd = np.zeros_like(p)
        it = np.nditer(p, flags=["multi_index"])
        for _ in it:
            ix = it.multi_index
            orig = p[ix]
            p[ix] = orig + eps
            up = loss_fn()
            p[ix] = orig - eps
            down = loss_fn()
            p[ix] = orig
            fd[ix] = (up - down) / (2.0 * eps)
        grads[name] = fd
    return grads


def random_template(rng, num_nodes, directed=False):
    """Random connected anchored template: random attachment tree plus extra
    edges with probability 0.3 (randomly oriented when directed)."""
    edges = set()
    for i in range(1, num_nodes):
        j = int(rng.integers(i))
        if directed and rng.integers(2) == 1:
            edges.add((i, j))
        else:
            edges.add((j, i))
    for i in range(num_nodes):
        for j in range(i + 1, num_nodes):
            if (i, j) in edges or (j, i) in edges:
                continue
            if rng.random() < 0.3:
                if directed and rng.integers(2) == 1:
                    edges.add((j, i))
                else:
                    edges.add((i, j))
    return AnchoredTemplate(num_nodes, tuple(edges), directed=directed)
