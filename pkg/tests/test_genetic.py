import numpy as np
import pytest

from egoae.genetic import (Gene, GenePool, GenTimers, MatchCache, SearchConfig,
                           crossover, evaluate, init_pool, mutate, search,
                           select)
from egoae.graph_core import make_split
from egoae.matcher import build_index
from egoae.model import ModelConfig
from egoae.synthetic import cycle_triangle_dataset, two_star_dataset
from egoae.templates import (AnchoredTemplate, canonical_form, canonicalize,
                             template_by_name)

EDGE = template_by_name("edge")
PATH3 = template_by_name("path3")
TRIANGLE = template_by_name("triangle")
EVAL_CFG = ModelConfig(embed_dim=8, dropout=0.0, max_epochs=40, patience=10)


def make_pool(template_lists, fitnesses=None):
    genes = [Gene(list(ts), [None] * len(ts)) for ts in template_lists]
    if fitnesses:
        for g, f in zip(genes, fitnesses):
            g.fitness = f
    return GenePool(genes=genes)


class TestInitPool:
    def test_all_edge_templates(self):
        pool = init_pool(4, 3)
        assert pool.size == 4
        target = canonical_form(EDGE)
        for gene in pool.genes:
            assert len(gene.templates) == 3
            assert all(canonical_form(t) == target for t in gene.templates)

    def test_directed_uses_oriented_edges(self):
        pool = init_pool(6, 2, directed=True, rng=np.random.default_rng(3))
        allowed = {canonical_form(template_by_name("in-edge")),
                   canonical_form(template_by_name("out-edge"))}
        seen = {canonical_form(t) for g in pool.genes for t in g.templates}
        assert seen <= allowed and seen

    def test_minimum_pool_size(self):
        with pytest.raises(ValueError):
            init_pool(1, 3)


class TestMutate:
    def test_edge_node_mutation_yields_both_three_node_shapes(self):
        seen = set()
        for seed in range(40):
            pool = make_pool([[EDGE]])
            mutate(pool, p_node=1.0, p_edge=0.0, rng=np.random.default_rng(seed))
            seen.add(canonical_form(pool.genes[0].templates[0]))
        path_end = canonical_form(AnchoredTemplate(3, ((0, 1), (1, 2))))
        path_mid = canonical_form(AnchoredTemplate(3, ((0, 1), (0, 2))))
        assert seen == {path_end, path_mid}

    def test_path3_edge_mutation_closes_the_triangle(self):
        pool = make_pool([[PATH3]])
        mutate(pool, p_node=0.0, p_edge=1.0, rng=np.random.default_rng(0))
        t = pool.genes[0].templates[0]
        assert canonical_form(t) == canonical_form(TRIANGLE)
        lineage = pool.genes[0].lineages[0]
        assert lineage.step.kind == "edge"

    def test_complete_template_edge_mutation_skipped(self):
        pool = make_pool([[TRIANGLE]])
        mutate(pool, p_node=0.0, p_edge=1.0, rng=np.random.default_rng(0))
        assert pool.genes[0].templates[0] == canonicalize(TRIANGLE)[0]
        assert pool.genes[0].lineages[0] is None

    def test_size_cap_blocks_node_mutation(self):
        six = AnchoredTemplate(6, tuple((i, i + 1) for i in range(5)))
        pool = make_pool([[six]])
        mutate(pool, p_node=1.0, p_edge=0.0, rng=np.random.default_rng(0),
               size_cap=6)
        assert pool.genes[0].templates[0] == six

    def test_probability_budget_checked(self):
        pool = make_pool([[EDGE]])
        with pytest.raises(ValueError):
            mutate(pool, p_node=0.7, p_edge=0.7, rng=np.random.default_rng(0))

    def test_elite_gene_left_alone(self):
        pool = make_pool([[EDGE], [EDGE]])
        pool.elite = 0
        mutate(pool, p_node=1.0, p_edge=0.0, rng=np.random.default_rng(1))
        assert pool.genes[0].templates[0].num_nodes == 2
        assert pool.genes[1].templates[0].num_nodes == 3

    def test_directed_mutation_orients_new_edges(self):
        base = template_by_name("out-edge")
        kinds = set()
        for seed in range(30):
            pool = make_pool([[base]])
            mutate(pool, p_node=1.0, p_edge=0.0, rng=np.random.default_rng(seed))
            t = pool.genes[0].templates[0]
            assert t.directed and t.num_nodes == 3
            kinds.add(t.edges)
        assert len(kinds) >= 3  # attach point and orientation both vary


class TestCrossover:
    def test_zero_probability_is_identity(self):
        pool = make_pool([[EDGE, PATH3], [TRIANGLE, EDGE]])
        before = [list(g.templates) for g in pool.genes]
        crossover(pool, 0.0, np.random.default_rng(0))
        assert [list(g.templates) for g in pool.genes] == before

    def test_full_probability_swaps_everything(self):
        pool = make_pool([[EDGE, PATH3], [TRIANGLE, TRIANGLE]])
        a_before = list(pool.genes[0].templates)
        b_before = list(pool.genes[1].templates)
        crossover(pool, 1.0, np.random.default_rng(0))
        assert list(pool.genes[0].templates) == b_before
        assert list(pool.genes[1].templates) == a_before

    def test_odd_pool_leaves_one_out(self):
        pool = make_pool([[EDGE], [PATH3], [TRIANGLE]])
        before = [g.templates[0] for g in pool.genes]
        crossover(pool, 1.0, np.random.default_rng(5))
        after = [g.templates[0] for g in pool.genes]
        assert sorted(canonical_form(t) for t in before) == \
               sorted(canonical_form(t) for t in after)
        unchanged = sum(a == b for a, b in zip(before, after))
        assert unchanged == 1


class TestEvaluate:
    def setup_method(self):
        self.g, self.X, self.y = two_star_dataset()
        self.split = make_split(self.g.num_nodes, 1)
        self.cache = MatchCache(self.g)
        self.fitness_cache = {}

    def _gene(self):
        t = canonicalize(EDGE)[0]
        return Gene([t, t], [None, None])

    def test_edge_gene_solves_the_separable_toy(self):
        timers = GenTimers()
        fit = evaluate(self._gene(), self.g, self.X, self.y, self.split,
                       EVAL_CFG, self.cache, self.fitness_cache, timers)
        assert fit == 1.0
        assert timers.eval_s > 0.0

    def test_second_call_served_from_cache(self):
        t1 = GenTimers()
        evaluate(self._gene(), self.g, self.X, self.y, self.split,
                 EVAL_CFG, self.cache, self.fitness_cache, t1)
        t2 = GenTimers()
        fit = evaluate(self._gene(), self.g, self.X, self.y, self.split,
                       EVAL_CFG, self.cache, self.fitness_cache, t2)
        assert fit == 1.0
        assert t2.fitness_cache_hits == 1
        assert t2.eval_s == 0.0

    def test_duplicate_templates_matched_once(self):
        timers = GenTimers()
        evaluate(self._gene(), self.g, self.X, self.y, self.split,
                 EVAL_CFG, self.cache, self.fitness_cache, timers)
        assert len(self.cache.store) == 1

    def test_failure_scores_zero_instead_of_raising(self):
        bad_labels = np.zeros(self.g.num_nodes, dtype=np.int64)  # one class
        timers = GenTimers()
        fit = evaluate(self._gene(), self.g, self.X, bad_labels, self.split,
                       EVAL_CFG, self.cache, {}, timers)
        assert fit == 0.0

    def test_never_matching_template_still_evaluates(self):
        # the two-star graph is triangle-free: fallback sets only, no crash
        t = canonicalize(TRIANGLE)[0]
        gene = Gene([t], [None])
        fit = evaluate(gene, self.g, self.X, self.y, self.split,
                       EVAL_CFG, self.cache, {}, GenTimers())
        assert 0.0 <= fit <= 1.0
        idx = self.cache.store[canonical_form(t)]
        assert all(len(m) == 0 for m in idx.matches)


class TestSelect:
    def test_worst_removed_best_cloned(self):
        pool = make_pool([[EDGE], [PATH3], [TRIANGLE], [template_by_name("clique4")]],
                         fitnesses=[0.3, 0.1, 0.2, 0.4])
        select(pool, [0.3, 0.1, 0.2, 0.4], eliminate=1)
        names = [g.templates[0].name for g in pool.genes]
        assert names == ["edge", "triangle", "clique4", "clique4"]
        assert pool.genes[3].templates == pool.genes[2].templates
        assert pool.elite in (2, 3)

    def test_zero_elimination_keeps_pool(self):
        pool = make_pool([[EDGE], [PATH3]], fitnesses=[0.5, 0.6])
        before = [g.templates[0] for g in pool.genes]
        select(pool, [0.5, 0.6], eliminate=0)
        assert [g.templates[0] for g in pool.genes] == before
        assert pool.elite == 1

    def test_tie_break_removes_lowest_index_first(self):
        pool = make_pool([[EDGE], [PATH3], [TRIANGLE], [template_by_name("clique4")]],
                         fitnesses=[0.5, 0.5, 0.5, 0.5])
        select(pool, [0.5] * 4, eliminate=1)
        names = [g.templates[0].name for g in pool.genes]
        # gene 0 removed; rank-first survivor (gene 1) cloned
        assert names == ["path3", "triangle", "clique4", "path3"]

    def test_cannot_eliminate_everything(self):
        pool = make_pool([[EDGE], [PATH3]], fitnesses=[0.1, 0.2])
        with pytest.raises(ValueError):
            select(pool, [0.1, 0.2], eliminate=2)


class TestMatchCacheIncremental:
    def test_incremental_acquisition_equals_scratch(self):
        g, X, y = cycle_triangle_dataset(num_triangles=4, num_hexagons=2)
        cache = MatchCache(g)
        timers = GenTimers()
        parent = canonicalize(EDGE)[0]
        cache.acquire(parent, None, timers)

        pool = make_pool([[parent]])
        # force a known mutation chain: pendant node then closing edge
        for kwargs in ({"p_node": 1.0, "p_edge": 0.0}, {"p_node": 0.0, "p_edge": 1.0}):
            mutate(pool, rng=np.random.default_rng(7), size_cap=6, **kwargs)
            gene = pool.genes[0]
            child = gene.templates[0]
            idx = cache.acquire(child, gene.lineages[0], timers)
            assert idx.same_sets(build_index(g, child))
        assert timers.incremental_expansions > 0
        assert timers.scratch_expansions > 0  # only the initial edge build

    def test_verify_random_passes_on_fresh_cache(self):
        g, _, _ = cycle_triangle_dataset(num_triangles=2, num_hexagons=1)
        cache = MatchCache(g)
        cache.acquire(canonicalize(EDGE)[0], None, GenTimers())
        cache.verify_random(np.random.default_rng(0))


class TestSearch:
    def setup_method(self):
        self.g, self.X, self.y = cycle_triangle_dataset(num_triangles=6,
                                                        num_hexagons=3)
        self.split = make_split(self.g.num_nodes, 5)

    def _config(self, **kw):
        base = dict(pool_size=6, gene_size=2, eliminate=2, generations=5,
                    budget_s=120.0, seed=0, eval_config=EVAL_CFG)
        base.update(kw)
        return SearchConfig(**base)

    def test_zero_generations_returns_evaluated_initial_gene(self):
        res = search(self.g, self.X, self.y, self.split,
                     self._config(generations=0))
        assert res.generations_run == 0
        assert len(res.history) == 1
        assert res.history[0].generation == 0
        assert res.best_gene.fitness is not None
        target = canonical_form(EDGE)
        assert all(canonical_form(t) == target for t in res.best_gene.templates)

    def test_best_fitness_is_monotone(self):
        res = search(self.g, self.X, self.y, self.split, self._config())
        best_so_far = -1.0
        for row in res.history:
            assert row.best_fitness >= best_so_far - 1e-12
            best_so_far = max(best_so_far, row.best_fitness)

    def test_fixed_seed_reproduces_history(self):
        a = search(self.g, self.X, self.y, self.split, self._config())
        b = search(self.g, self.X, self.y, self.split, self._config())
        assert [(r.generation, r.best_fitness, r.mean_fitness) for r in a.history] == \
               [(r.generation, r.best_fitness, r.mean_fitness) for r in b.history]

    def test_cache_verification_enabled_run(self):
        res = search(self.g, self.X, self.y, self.split,
                     self._config(generations=3, verify_cache=True))
        assert res.generations_run == 3

    def test_zero_budget_stops_before_first_generation(self):
        res = search(self.g, self.X, self.y, self.split,
                     self._config(budget_s=0.0))
        assert res.generations_run == 0
        assert len(res.history) == 1


def test_gene_key_is_order_invariant():
    a = Gene([canonicalize(EDGE)[0], canonicalize(TRIANGLE)[0]], [None, None])
    b = Gene([canonicalize(TRIANGLE)[0], canonicalize(EDGE)[0]], [None, None])
    assert a.key() == b.key()
