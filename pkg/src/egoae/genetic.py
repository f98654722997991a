"""Population search over template sets with incremental match reuse.

A gene is a fixed-length list of templates; the pool evolves by per-slot
mutation (grow a pendant node or add an edge), pairwise crossover, fitness
evaluation (reduced-budget training, validation accuracy), and
eliminate-and-clone selection with a protected elite. Matching work is
shared aggressively: indices are cached by canonical form, and a mutated
template's index is derived from its parent's matches instead of a fresh
search whenever the parent is cached.

Templates inside genes are kept in canonical labeling, so equal canonical
form means the identical labeled object and cached indices line up orbit
for orbit.
"""

from __future__ import annotations

import hashlib
import logging
import time
from dataclasses import dataclass, field, replace

import numpy as np

from .matcher import (build_index, extend_node_mutation, filter_edge_mutation,
                      index_from_matches, MatchCounters)
from .model import GrapeModel, ModelConfig, train
from .templates import (AnchoredTemplate, EDGE, IN_EDGE, OUT_EDGE,
                        canonical_form, canonicalize, DEFAULT_SIZE_CAP)

log = logging.getLogger("egoae.genetic")


@dataclass(frozen=True)
class MutationStep:
    """How a child template was derived from its parent, in the parent's
    labels; perm maps the raw child labels to the child's canonical labels."""

    kind: str                    # "node" | "edge"
    attach_at: int | None
    new_edge: tuple
    perm: tuple


@dataclass(frozen=True)
class Lineage:
    parent: AnchoredTemplate
    step: MutationStep


@dataclass
class Gene:
    templates: list
    lineages: list
    fitness: float | None = None

    def key(self) -> tuple:
        """Canonical multiset of the gene's templates."""
        return tuple(sorted(canonical_form(t) for t in self.templates))

    def clone(self) -> "Gene":
        return Gene(list(self.templates), list(self.lineages), self.fitness)


@dataclass
class GenePool:
    genes: list
    generation: int = 0
    elite: int | None = None

    @property
    def size(self) -> int:
        return len(self.genes)


@dataclass
class GenTimers:
    """Per-generation accounting mirrored into the history CSV."""

    scratch_s: float = 0.0
    incremental_s: float = 0.0
    eval_s: float = 0.0
    match_cache_hits: int = 0
    fitness_cache_hits: int = 0
    scratch_expansions: int = 0
    incremental_expansions: int = 0


class MatchCache:
    """Canonical-form keyed store of match indices with an incremental path.

    acquire() resolves a template's index by (1) cache hit, (2) extending or
    filtering the cached parent index recorded in the lineage, or (3) a
    scratch build. Times and expansion counters land in the caller's
    per-generation buckets.
    """

    def __init__(self, graph, max_matches_per_ego=10_000, threads=1):
        self.graph = graph
        self.max_matches = max_matches_per_ego
        self.threads = threads
        self.store = {}

    def acquire(self, template, lineage, timers: GenTimers):
        key = canonical_form(template)
        hit = self.store.get(key)
        if hit is not None:
            timers.match_cache_hits += 1
            return hit
        idx = None
        if lineage is not None:
            parent_key = canonical_form(lineage.parent)
            parent_idx = self.store.get(parent_key)
            if parent_idx is not None:
                t0 = time.perf_counter()
                idx = self._incremental(template, lineage, parent_idx)
                timers.incremental_s += time.perf_counter() - t0
                timers.incremental_expansions += idx.counters.candidate_expansions
        if idx is None:
            t0 = time.perf_counter()
            idx = build_index(self.graph, template,
                              max_matches_per_ego=self.max_matches,
                              threads=self.threads)
            timers.scratch_s += time.perf_counter() - t0
            timers.scratch_expansions += idx.counters.candidate_expansions
        self.store[key] = idx
        return idx

    def _incremental(self, template, lineage, parent_idx):
        step = lineage.step
        parent = lineage.parent
        raw_child = AnchoredTemplate(
            num_nodes=parent.num_nodes + (1 if step.kind == "node" else 0),
            edges=parent.edges + (step.new_edge,),
            directed=parent.directed)
        if step.kind == "node":
            raw_idx = extend_node_mutation(self.graph, parent_idx, raw_child,
                                           step.attach_at)
        else:
            raw_idx = filter_edge_mutation(self.graph, parent_idx, raw_child,
                                           step.new_edge)
        return _relabel_index(self.graph, raw_idx, template, step.perm)

    def verify_random(self, rng) -> None:
        """Spot-check one cached entry against a scratch rebuild."""
        if not self.store:
            return
        keys = sorted(self.store)
        key = keys[int(rng.integers(len(keys)))]
        idx = self.store[key]
        fresh = build_index(self.graph, idx.template,
                            max_matches_per_ego=self.max_matches)
        if not idx.same_sets(fresh):
            raise AssertionError("cached index diverged from scratch build")


def _relabel_index(graph, raw_idx, canon_template, perm):
    """Move an index computed in raw child labels into canonical labels."""
    n = canon_template.num_nodes
    matches_per_ego = []
    for per_ego in raw_idx.matches:
        out = []
        for m in per_ego:
            relabeled = [0] * n
            for i, node in enumerate(m):
                relabeled[perm[i]] = node
            out.append(tuple(relabeled))
        out.sort()
        matches_per_ego.append(out)
    counters = MatchCounters(raw_idx.counters.candidate_expansions,
                             raw_idx.counters.matches_found,
                             raw_idx.counters.truncated_egos)
    return index_from_matches(graph, canon_template, matches_per_ego, counters,
                              raw_idx.ignore_direction, raw_idx.max_matches_per_ego)


# -- genetic operators ----------------------------------------------------------

def init_pool(pool_size: int, gene_size: int, directed: bool = False,
              rng=None) -> GenePool:
    """Every gene starts as copies of the plainest template: the undirected
    edge, or (directed graphs) an edge pointing to or from the anchor."""
    if pool_size < 2:
        raise ValueError("pool needs at least 2 genes")
    if gene_size < 1:
        raise ValueError("genes need at least 1 template")
    rng = rng or np.random.default_rng(0)
    genes = []
    for _ in range(pool_size):
        templates = []
        for _ in range(gene_size):
            if directed:
                base = IN_EDGE if rng.integers(2) == 0 else OUT_EDGE
            else:
                base = EDGE
            templates.append(canonicalize(base)[0])
        genes.append(Gene(templates=templates, lineages=[None] * gene_size))
    return GenePool(genes=genes)


def _mutate_template(template, rng, p_node, p_edge, size_cap):
    """Return (child, lineage) or (template, None) when no mutation lands."""
    u = rng.random()
    if u < p_node:
        if template.num_nodes >= size_cap:
            log.debug("node mutation skipped: size cap %d reached", size_cap)
            return template, None
        attach = int(rng.integers(template.num_nodes))
        new = template.num_nodes
        if template.directed and rng.integers(2) == 1:
            edge = (new, attach)
        else:
            edge = (attach, new)
        raw = AnchoredTemplate(template.num_nodes + 1,
                               template.edges + (edge,), template.directed)
        child, perm = canonicalize(raw)
        return child, Lineage(template, MutationStep("node", attach, edge, perm))
    if u < p_node + p_edge:
        n = template.num_nodes
        present = template.edge_set()
        if template.directed:
            cands = [(i, j) for i in range(n) for j in range(n)
                     if i != j and (i, j) not in present]
        else:
            cands = [(i, j) for i in range(n) for j in range(i + 1, n)
                     if (i, j) not in present]
        if not cands:
            log.debug("edge mutation skipped: template already complete")
            return template, None
        edge = cands[int(rng.integers(len(cands)))]
        raw = AnchoredTemplate(n, template.edges + (edge,), template.directed)
        child, perm = canonicalize(raw)
        return child, Lineage(template, MutationStep("edge", None, edge, perm))
    return template, None


def mutate(pool: GenePool, p_node: float, p_edge: float, rng,
           size_cap: int = DEFAULT_SIZE_CAP) -> GenePool:
    """Each template of each gene draws at most one mutation (grow a pendant
    node with probability p_node, else add an edge with probability p_edge).
    The elite gene is left untouched so the best fitness can never regress."""
    if p_node + p_edge > 1.0:
        raise ValueError("p_node + p_edge must be at most 1")
    for gi, gene in enumerate(pool.genes):
        if gi == pool.elite:
            continue
        changed = False
        for si in range(len(gene.templates)):
            child, lineage = _mutate_template(gene.templates[si], rng,
                                              p_node, p_edge, size_cap)
            if lineage is not None:
                gene.templates[si] = child
                gene.lineages[si] = lineage
                changed = True
        if changed:
            gene.fitness = None
    return pool


def crossover(pool: GenePool, p_cross: float, rng) -> GenePool:
    """Randomly pair genes and swap aligned template slots with probability
    p_cross. The elite sits out; with an odd number of participants one more
    gene sits out the round."""
    idxs = [i for i in range(pool.size) if i != pool.elite]
    order = [idxs[i] for i in rng.permutation(len(idxs))]
    for a, b in zip(order[0::2], order[1::2]):
        ga, gb = pool.genes[a], pool.genes[b]
        swapped = False
        for si in range(len(ga.templates)):
            if rng.random() < p_cross:
                ga.templates[si], gb.templates[si] = gb.templates[si], ga.templates[si]
                ga.lineages[si], gb.lineages[si] = gb.lineages[si], ga.lineages[si]
                swapped = True
        if swapped:
            ga.fitness = None
            gb.fitness = None
    return pool


def _derived_seed(search_seed: int, key) -> int:
    h = hashlib.blake2b(digest_size=8)
    h.update(str(search_seed).encode())
    for form in key:
        h.update(form)
    return int.from_bytes(h.digest(), "big") % (2 ** 31)


def evaluate(gene: Gene, graph, X, labels, split, eval_config: ModelConfig,
             match_cache: MatchCache, fitness_cache: dict, timers: GenTimers,
             search_seed: int = 0) -> float:
    """Fitness = best validation accuracy of a reduced-budget training run.

    Identical genes (same canonical multiset) are served from the fitness
    cache without retraining; per-gene failures score 0 instead of aborting
    the generation.
    """
    key = gene.key()
    if key in fitness_cache:
        timers.fitness_cache_hits += 1
        gene.fitness = fitness_cache[key]
        return gene.fitness
    try:
        by_form = {}
        for t, lineage in zip(gene.templates, gene.lineages):
            form = canonical_form(t)
            if form not in by_form:
                by_form[form] = match_cache.acquire(t, lineage, timers)
        indices = [by_form[canonical_form(t)] for t in gene.templates]
        cfg = replace(eval_config, seed=_derived_seed(search_seed, key))
        num_classes = int(np.max(labels)) + 1
        model = GrapeModel(X.shape[1], num_classes,
                           [idx.partition.num_orbits for idx in indices], cfg)
        t0 = time.perf_counter()
        report = train(model, graph, indices, X, labels, split, cfg)
        timers.eval_s += time.perf_counter() - t0
        fitness = report.best_val_acc
    except Exception:
        log.exception("gene evaluation failed; scoring 0")
        fitness = 0.0
    gene.fitness = fitness
    fitness_cache[key] = fitness
    return fitness


def select(pool: GenePool, metrics, eliminate: int) -> GenePool:
    """Drop the `eliminate` worst genes (ties: lower index goes first) and
    refill by round-robin cloning the top survivors; the single best gene
    is always retained unmodified."""
    B = pool.size
    if eliminate >= B:
        raise ValueError("cannot eliminate the whole pool")
    if eliminate > 0:
        removal_order = sorted(range(B), key=lambda i: (metrics[i], i))
        removed = set(removal_order[:eliminate])
        survivors = [pool.genes[i] for i in range(B) if i not in removed]
        surv_metrics = [metrics[i] for i in range(B) if i not in removed]
        rank = sorted(range(len(survivors)),
                      key=lambda i: (-surv_metrics[i], i))
        top = rank[:eliminate]
        clones = [survivors[top[i % len(top)]].clone() for i in range(eliminate)]
        pool.genes = survivors + clones
    fitnesses = [g.fitness if g.fitness is not None else -1.0 for g in pool.genes]
    pool.elite = int(np.argmax(fitnesses))
    return pool


# -- search driver ---------------------------------------------------------------

@dataclass(frozen=True)
class SearchConfig:
    pool_size: int = 16
    gene_size: int = 3
    eliminate: int = 4
    p_node: float = 0.3
    p_edge: float = 0.3
    p_cross: float = 0.5
    generations: int = 50
    budget_s: float = 3000.0
    size_cap: int = DEFAULT_SIZE_CAP
    seed: int = 0
    threads: int = 1
    max_matches_per_ego: int = 10_000
    verify_cache: bool = False
    eval_config: ModelConfig = field(
        default_factory=lambda: ModelConfig(max_epochs=100, patience=20))


@dataclass
class HistoryRow:
    generation: int
    best_fitness: float
    mean_fitness: float
    scratch_match_s: float
    incremental_match_s: float
    eval_s: float
    match_cache_hits: int = 0
    fitness_cache_hits: int = 0
    scratch_expansions: int = 0
    incremental_expansions: int = 0


@dataclass
class SearchResult:
    best_gene: Gene
    history: list
    generations_run: int
    pool: GenePool

    @property
    def best_fitness(self) -> float:
        return self.best_gene.fitness if self.best_gene.fitness is not None else 0.0


HISTORY_COLUMNS = ("generation", "best_fitness", "mean_fitness",
                   "scratch_match_s", "incremental_match_s", "eval_s")


def write_history_csv(history, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(",".join(HISTORY_COLUMNS) + "\n")
        for row in history:
            fh.write(f"{row.generation},{row.best_fitness!r},{row.mean_fitness!r},"
                     f"{row.scratch_match_s!r},{row.incremental_match_s!r},"
                     f"{row.eval_s!r}\n")


def search(graph, X, labels, split, config: SearchConfig | None = None,
           on_generation=None) -> SearchResult:
    """Run the full loop: evaluate the initial edge-only pool, then
    mutate -> crossover -> evaluate -> select until the generation count or
    the wall-clock budget runs out. Returns the best gene ever seen plus a
    per-generation history."""
    cfg = config or SearchConfig()
    rng = np.random.default_rng(cfg.seed)
    labels = np.asarray(labels, dtype=np.int64)
    match_cache = MatchCache(graph, cfg.max_matches_per_ego, cfg.threads)
    fitness_cache = {}
    started = time.perf_counter()

    pool = init_pool(cfg.pool_size, cfg.gene_size, graph.directed, rng)
    history = []

    def run_generation(gen):
        timers = GenTimers()
        for gene in pool.genes:
            evaluate(gene, graph, X, labels, split, cfg.eval_config,
                     match_cache, fitness_cache, timers, cfg.seed)
        fitnesses = [g.fitness for g in pool.genes]
        history.append(HistoryRow(
            generation=gen,
            best_fitness=float(max(fitnesses)),
            mean_fitness=float(sum(fitnesses) / len(fitnesses)),
            scratch_match_s=timers.scratch_s,
            incremental_match_s=timers.incremental_s,
            eval_s=timers.eval_s,
            match_cache_hits=timers.match_cache_hits,
            fitness_cache_hits=timers.fitness_cache_hits,
            scratch_expansions=timers.scratch_expansions,
            incremental_expansions=timers.incremental_expansions))
        if cfg.verify_cache:
            match_cache.verify_random(rng)
        return fitnesses

    metrics = run_generation(0)
    select(pool, metrics, 0)
    best_ever = pool.genes[pool.elite].clone()

    gens_run = 0
    for gen in range(1, cfg.generations + 1):
        if time.perf_counter() - started >= cfg.budget_s:
            log.info("wall-clock budget reached after %d generations", gens_run)
            break
        mutate(pool, cfg.p_node, cfg.p_edge, rng, cfg.size_cap)
        crossover(pool, cfg.p_cross, rng)
        metrics = run_generation(gen)
        select(pool, metrics, cfg.eliminate)
        pool.generation = gen
        gens_run = gen
        best = pool.genes[pool.elite]
        if best.fitness is not None and best.fitness > (best_ever.fitness or -1.0):
            best_ever = best.clone()
        if on_generation is not None and on_generation(pool, history[-1], best_ever):
            log.info("search stopped early by callback at generation %d", gen)
            break
    return SearchResult(best_gene=best_ever, history=history,
                        generations_run=gens_run, pool=pool)
