"""Ego-anchored subgraph matching and per-orbit equivalence-set indexing.

Matching semantics are non-induced (subgraph monomorphism): a match is an
injective map from template nodes to graph nodes that preserves every
template edge, with the anchor pinned to the ego. Extra graph edges among
the mapped nodes are allowed; this is what makes edge-mutation filtering
sound (the child's matches are exactly the parent matches that survive the
one extra edge check).

Two incremental paths rebuild a child template's index from its parent's:
attaching a pendant node extends every parent match by one neighbor hop,
and adding an edge filters parent matches in place. Both must reproduce
``build_index`` on the child exactly, which the test suite enforces.
"""

from __future__ import annotations

import functools
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

from .orbits import OrbitPartition, orbit_partition
from .templates import AnchoredTemplate

log = logging.getLogger("egoae.matcher")

DEFAULT_MAX_MATCHES_PER_EGO = 10_000

# candidate source / edge check kinds
_OUT = 0   # template edge placed -> new: candidates are out-neighbors
_IN = 1    # template edge new -> placed: candidates are in-neighbors


@dataclass
class MatchCounters:
    """Work counters: one candidate_expansion per candidate node or parent
    match examined, whether or not it survives."""

    candidate_expansions: int = 0
    matches_found: int = 0
    truncated_egos: int = 0

    def add(self, other: "MatchCounters") -> None:
        self.candidate_expansions += other.candidate_expansions
        self.matches_found += other.matches_found
        self.truncated_egos += other.truncated_egos


@functools.lru_cache(maxsize=512)
def _match_plan(template: AnchoredTemplate):
    """Static backtracking plan: a connectivity-respecting node order plus,
    per placed node, the pivot edge that generates candidates and the
    remaining edge checks against already-placed nodes.

    Order heuristic: always place the node with the most already-placed
    skeleton neighbors next (ties to the smallest index), so every node has
    a pivot and the search space stays tight.
    """
    n = template.num_nodes
    skel = template.skeleton_neighbors()
    placed = [0]
    remaining = set(range(1, n))
    while remaining:
        nxt = max(remaining,
                  key=lambda v: (sum(1 for w in skel[v] if w in placed), -v))
        if not any(w in placed for w in skel[nxt]):
            raise AssertionError("disconnected template slipped past validation")
        placed.append(nxt)
        remaining.remove(nxt)

    steps = []
    edge_set = template.edge_set()
    for p in range(1, n):
        t = placed[p]
        earlier = placed[:p]
        pivot = None
        checks = []
        for e in earlier:
            if template.directed:
                if (e, t) in edge_set:
                    rel = (e, _OUT)
                elif (t, e) in edge_set:
                    rel = (e, _IN)
                else:
                    rel = None
                # a bidirected pair contributes the second direction as a check
                if rel is not None and (e, t) in edge_set and (t, e) in edge_set:
                    extra = (e, _IN)
                else:
                    extra = None
            else:
                rel = (e, _OUT) if (min(e, t), max(e, t)) in edge_set else None
                extra = None
            if rel is None:
                continue
            if pivot is None:
                pivot = rel
                if extra is not None:
                    checks.append(extra)
            else:
                checks.append(rel)
                if extra is not None:
                    checks.append(extra)
        steps.append((t, pivot[0], pivot[1], tuple(checks)))
    return tuple(placed), tuple(steps)


def _check_modes(graph, template, ignore_direction):
    if template.directed and not graph.directed:
        raise ValueError("directed template cannot be matched on an undirected graph")
    if graph.directed and not template.directed and not ignore_direction:
        raise ValueError("undirected template on a directed graph requires "
                         "ignore_direction=True")


def _adjacency(graph, template, ignore_direction):
    """Pick candidate generators and the edge predicate for the mode."""
    if graph.directed and not template.directed:
        # ignore-direction mode: adjacency in either direction counts
        return graph.any_neighbors, graph.any_neighbors, graph.has_any_edge
    return graph.out_neighbors, graph.in_neighbors, graph.has_edge


def match_template(graph, template: AnchoredTemplate, ego: int, *,
                   ignore_direction: bool = False, max_matches: int | None = None,
                   counters: MatchCounters | None = None) -> list:
    """All anchored matches of the template at one ego node.

    Returns mappings as tuples (mapping[i] = graph node for template node i)
    in lexicographic order. Empty list when nothing matches.
    """
    if not 0 <= ego < graph.num_nodes:
        raise ValueError(f"ego {ego} out of range")
    _check_modes(graph, template, ignore_direction)
    if counters is None:
        counters = MatchCounters()
    out = _match_at(graph, template, ego, ignore_direction, max_matches, counters)
    out.sort()
    return out


def _match_at(graph, template, ego, ignore_direction, max_matches, counters):
    _, steps = _match_plan(template)
    cand_out, cand_in, has_edge = _adjacency(graph, template, ignore_direction)
    n = template.num_nodes
    mapping = [-1] * n
    mapping[0] = ego
    used = bytearray(graph.num_nodes)
    used[ego] = 1
    matches = []
    cap = max_matches if max_matches is not None else float("inf")
    depth = len(steps)

    def descend(p):
        node, pivot_node, pivot_kind, checks = steps[p]
        pivot_img = mapping[pivot_node]
        cands = cand_out(pivot_img) if pivot_kind == _OUT else cand_in(pivot_img)
        last = p == depth - 1
        for w in cands:
            counters.candidate_expansions += 1
            if used[w]:
                continue
            ok = True
            for cnode, ckind in checks:
                other = mapping[cnode]
                if ckind == _OUT:
                    if not has_edge(other, w):
                        ok = False
                        break
                elif not has_edge(w, other):
                    ok = False
                    break
            if not ok:
                continue
            mapping[node] = w
            if last:
                matches.append(tuple(mapping))
                if len(matches) >= cap:
                    mapping[node] = -1
                    return False
            else:
                used[w] = 1
                more = descend(p + 1)
                used[w] = 0
                mapping[node] = -1
                if not more:
                    return False
                continue
            mapping[node] = -1
        return True

    if depth == 0:
        matches.append((ego,))
        completed = True
    else:
        completed = descend(0)
    if not completed:
        counters.truncated_egos += 1
        log.warning("match cap %s hit at ego %d; results truncated", max_matches, ego)
    counters.matches_found += len(matches)
    return matches


# -- per-ego equivalence-set index --------------------------------------------

class EgoAeIndex:
    """For one (graph, template) pair: every ego's matches and the node sets
    obtained by projecting matches through the template's orbit partition.

    ``ae_sets[v][j]`` is the sorted tuple of graph nodes that play an
    orbit-j role in some match at ego v. Orbit 0 is always ``(v,)``: the
    anchor orbit when matches exist, a self-feature fallback otherwise (so
    an unmatched ego still sees its own features downstream).
    """

    __slots__ = ("template", "partition", "num_nodes", "matches", "ae_sets",
                 "counters", "ignore_direction", "max_matches_per_ego", "_orbit_mats")

    def __init__(self, template, partition, num_nodes, matches, ae_sets,
                 counters, ignore_direction, max_matches_per_ego):
        self.template = template
        self.partition = partition
        self.num_nodes = num_nodes
        self.matches = matches
        self.ae_sets = ae_sets
        self.counters = counters
        self.ignore_direction = ignore_direction
        self.max_matches_per_ego = max_matches_per_ego
        self._orbit_mats = None

    def orbit_matrices(self):
        """Per-orbit CSR indicator matrices A_j with A_j[v, u] = 1 iff
        u ∈ ae_sets[v][j]; cached, shared by every model built on this index."""
        if self._orbit_mats is None:
            from scipy.sparse import csr_matrix
            import numpy as np

            mats = []
            for j in range(self.partition.num_orbits):
                rows, cols = [], []
                for v in range(self.num_nodes):
                    for u in self.ae_sets[v][j]:
                        rows.append(v)
                        cols.append(u)
                data = np.ones(len(rows), dtype=np.float64)
                mats.append(csr_matrix((data, (rows, cols)),
                                       shape=(self.num_nodes, self.num_nodes)))
            self._orbit_mats = tuple(mats)
        return self._orbit_mats

    def weighted_matrix(self, beta):
        """One CSR combining all orbits, entry (v, u) = sum of beta[j] over
        the orbits that place u in ae_sets[v][j]. A single matmul with this
        equals the per-orbit weighted sum, in canonical (sorted-column)
        accumulation order."""
        mats = self.orbit_matrices()
        M = beta[0] * mats[0]
        for j in range(1, len(mats)):
            M = M + beta[j] * mats[j]
        return M

    def same_sets(self, other: "EgoAeIndex") -> bool:
        """Exact equality of match sets and equivalence sets (used by the
        incremental-vs-scratch soundness checks)."""
        return (self.template == other.template
                and self.num_nodes == other.num_nodes
                and self.matches == other.matches
                and self.ae_sets == other.ae_sets)


def project_orbits(matches, partition: OrbitPartition, ego: int):
    """Collapse matches at one ego into per-orbit node sets (set union, no
    multiplicity), with the self-feature fallback for unmatched egos."""
    m = partition.num_orbits
    sets = [set() for _ in range(m)]
    orbit_of = partition.orbit_of
    for mp in matches:
        for i, u in enumerate(mp):
            sets[orbit_of[i]].add(u)
    if not matches:
        sets[0].add(ego)
    return tuple(tuple(sorted(s)) for s in sets)


def index_from_matches(graph, template, matches_per_ego, counters,
                       ignore_direction=False,
                       max_matches_per_ego=DEFAULT_MAX_MATCHES_PER_EGO,
                       partition=None) -> EgoAeIndex:
    if partition is None:
        partition = orbit_partition(template)
    ae_sets = [project_orbits(matches_per_ego[v], partition, v)
               for v in range(graph.num_nodes)]
    return EgoAeIndex(template=template, partition=partition,
                      num_nodes=graph.num_nodes, matches=matches_per_ego,
                      ae_sets=ae_sets, counters=counters,
                      ignore_direction=ignore_direction,
                      max_matches_per_ego=max_matches_per_ego)


def build_index(graph, template: AnchoredTemplate, *,
                ignore_direction: bool = False,
                max_matches_per_ego: int = DEFAULT_MAX_MATCHES_PER_EGO,
                threads: int = 1, keep_matches: bool = True) -> EgoAeIndex:
    """Match the template at every ego and project the orbit sets.

    Egos are independent, so with threads > 1 they are chunked over a
    thread pool and merged back in ego order; results are identical to the
    sequential build. keep_matches=False discards each ego's match list
    right after projection (the equivalence sets stay exact); use it for
    training-only indices on dense graphs, where match lists dominate
    memory. Incremental extension needs the matches, so keep them there.
    """
    _check_modes(graph, template, ignore_direction)
    partition = orbit_partition(template)

    def run(ego):
        local = MatchCounters()
        found = _match_at(graph, template, ego, ignore_direction,
                          max_matches_per_ego, local)
        found.sort()
        if not keep_matches:
            sets = project_orbits(found, partition, ego)
            return [], sets, local
        return found, None, local

    if threads > 1 and graph.num_nodes > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(run, range(graph.num_nodes)))
    else:
        results = [run(v) for v in range(graph.num_nodes)]

    matches_per_ego = []
    counters = MatchCounters()
    for found, _, local in results:
        matches_per_ego.append(found)
        counters.add(local)
    if not keep_matches:
        ae_sets = [sets for _, sets, _ in results]
        return EgoAeIndex(template=template, partition=partition,
                          num_nodes=graph.num_nodes, matches=matches_per_ego,
                          ae_sets=ae_sets, counters=counters,
                          ignore_direction=ignore_direction,
                          max_matches_per_ego=max_matches_per_ego)
    return index_from_matches(graph, template, matches_per_ego, counters,
                              ignore_direction, max_matches_per_ego,
                              partition=partition)


# -- incremental paths ---------------------------------------------------------

def _single_new_edge(parent: AnchoredTemplate, child: AnchoredTemplate):
    extra = set(child.edges) - set(parent.edges)
    if set(parent.edges) - set(child.edges) or len(extra) != 1:
        raise ValueError("child must equal the parent plus exactly one edge")
    return next(iter(extra))


def extend_node_mutation(graph, parent_idx: EgoAeIndex, child: AnchoredTemplate,
                         attach_at: int) -> EgoAeIndex:
    """Index for a child template that adds one pendant node at ``attach_at``.

    Every child match is a parent match plus one neighbor of the image of
    ``attach_at`` (direction respected for directed templates), so the
    parent's matches are extended instead of searching from scratch.
    """
    parent = parent_idx.template
    new_node = parent.num_nodes
    if child.num_nodes != parent.num_nodes + 1 or child.directed != parent.directed:
        raise ValueError("child/parent shape mismatch")
    extra = _single_new_edge(parent, child)
    if child.directed:
        if extra == (attach_at, new_node):
            grow_out = True
        elif extra == (new_node, attach_at):
            grow_out = False
        else:
            raise ValueError(f"new edge {extra} does not join {attach_at} and {new_node}")
    else:
        if extra != (min(attach_at, new_node), max(attach_at, new_node)):
            raise ValueError(f"new edge {extra} does not join {attach_at} and {new_node}")
        grow_out = True

    cand_out, cand_in, _ = _adjacency(graph, child, parent_idx.ignore_direction)
    cand = cand_out if grow_out else cand_in
    counters = MatchCounters()
    cap = parent_idx.max_matches_per_ego
    matches_per_ego = []
    for ego in range(graph.num_nodes):
        out = []
        truncated = False
        for m in parent_idx.matches[ego]:
            base = m[attach_at]
            for w in cand(base):
                counters.candidate_expansions += 1
                if w not in m:
                    out.append(m + (w,))
            if len(out) >= cap:
                truncated = True
                break
        if truncated:
            counters.truncated_egos += 1
            out = out[:cap]
        out.sort()
        counters.matches_found += len(out)
        matches_per_ego.append(out)
    return index_from_matches(graph, child, matches_per_ego, counters,
                              parent_idx.ignore_direction, cap)


def filter_edge_mutation(graph, parent_idx: EgoAeIndex, child: AnchoredTemplate,
                         new_edge) -> EgoAeIndex:
    """Index for a child template that adds one edge between existing nodes:
    parent matches survive iff the graph has the corresponding edge."""
    parent = parent_idx.template
    if child.num_nodes != parent.num_nodes or child.directed != parent.directed:
        raise ValueError("child/parent shape mismatch")
    i, j = int(new_edge[0]), int(new_edge[1])
    norm = (i, j) if child.directed else (min(i, j), max(i, j))
    if _single_new_edge(parent, child) != norm:
        raise ValueError(f"child does not add edge {new_edge}")

    _, _, has_edge = _adjacency(graph, child, parent_idx.ignore_direction)
    counters = MatchCounters()
    matches_per_ego = []
    for ego in range(graph.num_nodes):
        out = []
        for m in parent_idx.matches[ego]:
            counters.candidate_expansions += 1
            if has_edge(m[i], m[j]):
                out.append(m)
        counters.matches_found += len(out)
        matches_per_ego.append(out)
    return index_from_matches(graph, child, matches_per_ego, counters,
                              parent_idx.ignore_direction,
                              parent_idx.max_matches_per_ego)


def match_stats(index: EgoAeIndex) -> dict:
    """Summary counters for one index: match totals, equivalence-set sizes,
    and the backtracking work that built it.

    An ego has matches iff any non-anchor set is populated, so the summary
    stays correct for indices built with keep_matches=False.
    """
    sizes = [len(s) for per_ego in index.ae_sets for s in per_ego]
    matched = sum(1 for per_ego in index.ae_sets if any(per_ego[1:]))
    return {
        "total_matches": index.counters.matches_found,
        "egos_with_matches": matched,
        "mean_ae_set_size": (sum(sizes) / len(sizes)) if sizes else 0.0,
        "max_ae_set_size": max(sizes) if sizes else 0,
        "candidate_expansions": index.counters.candidate_expansions,
        "truncated_egos": index.counters.truncated_egos,
    }
