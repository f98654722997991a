"""Anchored subgraph templates: parsing, the built-in catalogue, canonical forms.

A template is a small connected graphlet whose node 0 is the anchor; during
matching the anchor is pinned to the ego node. Canonical forms quotient out
all relabelings of the non-anchor nodes, which is what the genetic search
uses to deduplicate and cache work.
"""

from __future__ import annotations

import itertools
import json
from dataclasses import dataclass, field

ANCHOR = 0
DEFAULT_SIZE_CAP = 6


@dataclass(frozen=True)
class AnchoredTemplate:
    """Connected anchored graphlet. Node 0 is the anchor, edges are index pairs.

    Undirected edges are normalized to (min, max). Instances are immutable
    and hashable, so they can key caches directly.
    """

    num_nodes: int
    edges: tuple
    directed: bool = False
    name: str | None = field(default=None, compare=False)

    def __post_init__(self):
        if self.num_nodes < 2:
            raise ValueError("template needs at least 2 nodes")
        norm = set()
        for e in self.edges:
            i, j = int(e[0]), int(e[1])
            if not (0 <= i < self.num_nodes and 0 <= j < self.num_nodes):
                raise ValueError(f"template edge ({i},{j}) out of range")
            if i == j:
                raise ValueError("template self-loop")
            key = (i, j) if self.directed else (min(i, j), max(i, j))
            if key in norm:
                raise ValueError(f"duplicate template edge ({i},{j})")
            norm.add(key)
        object.__setattr__(self, "edges", tuple(sorted(norm)))
        if not self._connected():
            raise ValueError("template skeleton is disconnected")

    def _connected(self) -> bool:
        adj = self.skeleton_neighbors()
        seen = {0}
        stack = [0]
        while stack:
            for w in adj[stack.pop()]:
                if w not in seen:
                    seen.add(w)
                    stack.append(w)
        return len(seen) == self.num_nodes

    def skeleton_neighbors(self) -> tuple:
        """Undirected adjacency lists (direction ignored), sorted."""
        adj = [set() for _ in range(self.num_nodes)]
        for i, j in self.edges:
            adj[i].add(j)
            adj[j].add(i)
        return tuple(tuple(sorted(a)) for a in adj)

    def edge_set(self) -> frozenset:
        return frozenset(self.edges)

    def has_edge(self, i: int, j: int) -> bool:
        key = (i, j) if self.directed else (min(i, j), max(i, j))
        return key in self.edge_set()

    def with_name(self, name: str) -> "AnchoredTemplate":
        return AnchoredTemplate(self.num_nodes, self.edges, self.directed, name)

    def to_json_dict(self) -> dict:
        obj = {"directed": self.directed, "num_nodes": self.num_nodes,
               "edges": [list(e) for e in self.edges]}
        if self.name is not None:
            obj["name"] = self.name
        return obj

    def __repr__(self):
        tag = self.name or f"{self.num_nodes}n{len(self.edges)}e"
        return f"AnchoredTemplate({tag}, directed={self.directed})"


def parse_template(obj, size_cap: int = DEFAULT_SIZE_CAP) -> AnchoredTemplate:
    """Validate a JSON-style dict {"num_nodes", "edges", "directed", "name"?}."""
    if isinstance(obj, str):
        obj = json.loads(obj)
    if not isinstance(obj, dict):
        raise ValueError("template must be a JSON object")
    for key in ("num_nodes", "edges"):
        if key not in obj:
            raise ValueError(f"template missing field {key!r}")
    n = int(obj["num_nodes"])
    if n > size_cap:
        raise ValueError(f"template has {n} nodes, over the size cap {size_cap}")
    return AnchoredTemplate(
        num_nodes=n,
        edges=tuple((int(e[0]), int(e[1])) for e in obj["edges"]),
        directed=bool(obj.get("directed", False)),
        name=obj.get("name"),
    )


def load_templates(path, size_cap: int = DEFAULT_SIZE_CAP) -> list:
    """Load one template object or an array of them from a JSON file."""
    with open(path, "r", encoding="utf-8") as fh:
        obj = json.load(fh)
    items = obj if isinstance(obj, list) else [obj]
    if not items:
        raise ValueError(f"{path}: no templates")
    return [parse_template(t, size_cap) for t in items]


def save_templates(templates, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump([t.to_json_dict() for t in templates], fh, indent=2)


# -- canonical forms ---------------------------------------------------------

def _encode(num_nodes: int, directed: bool, edges) -> bytes:
    head = bytes([num_nodes, 1 if directed else 0])
    body = b"".join(bytes([i, j]) for i, j in sorted(edges))
    return head + body


def _relabeled_edges(template: AnchoredTemplate, perm) -> list:
    out = []
    for i, j in template.edges:
        a, b = perm[i], perm[j]
        out.append((a, b) if template.directed else (min(a, b), max(a, b)))
    return out


def canonicalize(template: AnchoredTemplate):
    """Minimum-encoding relabeling with the anchor fixed.

    Returns (canonical template, perm) where perm[i] is the canonical index
    of original node i. Brute force over (n-1)! permutations; fine under the
    size cap.
    """
    n = template.num_nodes
    best = None
    best_perm = None
    for tail in itertools.permutations(range(1, n)):
        perm = (0,) + tail
        # perm maps position -> label; invert to get original -> canonical
        inv = [0] * n
        for pos, orig in enumerate(perm):
            inv[orig] = pos
        enc = _encode(n, template.directed, _relabeled_edges(template, inv))
        if best is None or enc < best or (enc == best and inv < best_perm):
            best = enc
            best_perm = list(inv)
    canon = AnchoredTemplate(
        num_nodes=n,
        edges=tuple(_relabeled_edges(template, best_perm)),
        directed=template.directed,
        name=template.name,
    )
    return canon, tuple(best_perm)


def canonical_form(template: AnchoredTemplate) -> bytes:
    """Anchor-preserving isomorphism invariant: equal bytes iff isomorphic."""
    canon, _ = canonicalize(template)
    return _encode(canon.num_nodes, canon.directed, canon.edges)


# -- built-in catalogue -------------------------------------------------------

def _t(name, n, edges, directed=False):
    return AnchoredTemplate(num_nodes=n, edges=tuple(edges), directed=directed, name=name)


EDGE = _t("edge", 2, [(0, 1)])
PATH3 = _t("path3", 3, [(0, 1), (1, 2)])
TRIANGLE = _t("triangle", 3, [(0, 1), (0, 2), (1, 2)])
PATH4 = _t("path4", 4, [(0, 1), (1, 2), (2, 3)])
CLIQUE4 = _t("clique4", 4, [(0, 1), (0, 2), (0, 3), (1, 2), (1, 3), (2, 3)])
TAILED_TRIANGLE = _t("tailed-triangle", 4, [(0, 1), (0, 2), (1, 2), (0, 3)])
IN_EDGE = _t("in-edge", 2, [(1, 0)], directed=True)
OUT_EDGE = _t("out-edge", 2, [(0, 1)], directed=True)
BI_EDGE = _t("bi-edge", 2, [(0, 1), (1, 0)], directed=True)
IN_OUT = _t("in-out", 3, [(1, 0), (0, 2)], directed=True)
# Two directed-triangle variants exist; the catalogue ships the "inward" one,
# whose swap symmetry groups the two non-anchor nodes into a single orbit.
DIRECTED_TRIANGLE = _t("directed-triangle", 3,
                       [(1, 0), (2, 0), (1, 2), (2, 1)], directed=True)
DIRECTED_TRIANGLE_CYCLIC = _t("directed-triangle-cyclic", 3,
                              [(0, 1), (1, 2), (2, 0)], directed=True)

NAMED_TEMPLATES = {
    t.name: t for t in (
        EDGE, PATH3, TRIANGLE, PATH4, CLIQUE4, TAILED_TRIANGLE,
        IN_EDGE, OUT_EDGE, BI_EDGE, IN_OUT,
        DIRECTED_TRIANGLE, DIRECTED_TRIANGLE_CYCLIC,
    )
}

_DOMAINS = {
    "citation": (EDGE, PATH3, TRIANGLE, PATH4, TAILED_TRIANGLE),
    "social": (EDGE, PATH3, TRIANGLE, CLIQUE4, TAILED_TRIANGLE),
    "ecommerce": (IN_EDGE, OUT_EDGE, BI_EDGE, IN_OUT, DIRECTED_TRIANGLE),
}


def catalogue(domain: str) -> list:
    """Five built-in templates per dataset domain (ecommerce ones directed)."""
    try:
        return list(_DOMAINS[domain])
    except KeyError:
        raise ValueError(f"unknown domain {domain!r}; expected one of {sorted(_DOMAINS)}") from None


def template_by_name(name: str) -> AnchoredTemplate:
    try:
        return NAMED_TEMPLATES[name]
    except KeyError:
        raise ValueError(f"unknown template {name!r}; known: {sorted(NAMED_TEMPLATES)}") from None
