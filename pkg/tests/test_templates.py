import itertools

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from egoae.templates import (AnchoredTemplate, canonical_form, canonicalize,
                             catalogue, load_templates, parse_template,
                             save_templates, template_by_name)

from oracles import random_template


class TestParse:
    def test_edge_template(self):
        t = parse_template({"num_nodes": 2, "edges": [[0, 1]]})
        assert t.num_nodes == 2 and t.edges == ((0, 1),) and not t.directed

    def test_triangle(self):
        t = parse_template({"num_nodes": 3, "edges": [[0, 1], [0, 2], [1, 2]]})
        assert canonical_form(t) == canonical_form(template_by_name("triangle"))

    def test_disconnected_rejected(self):
        with pytest.raises(ValueError, match="disconnected"):
            parse_template({"num_nodes": 4, "edges": [[0, 1], [2, 3]]})

    def test_size_cap(self):
        obj = {"num_nodes": 7, "edges": [[i, i + 1] for i in range(6)]}
        with pytest.raises(ValueError, match="cap"):
            parse_template(obj)
        assert parse_template(obj, size_cap=8).num_nodes == 7

    def test_out_of_range_index(self):
        with pytest.raises(ValueError, match="range"):
            parse_template({"num_nodes": 2, "edges": [[0, 5]]})

    def test_missing_field(self):
        with pytest.raises(ValueError, match="missing"):
            parse_template({"edges": [[0, 1]]})

    def test_undirected_edges_normalized(self):
        a = AnchoredTemplate(3, ((2, 0), (1, 0)))
        b = AnchoredTemplate(3, ((0, 2), (0, 1)))
        assert a == b

    def test_duplicate_edge_rejected(self):
        with pytest.raises(ValueError, match="duplicate"):
            AnchoredTemplate(2, ((0, 1), (1, 0)))
        # ...but opposite directions are distinct edges when directed
        assert AnchoredTemplate(2, ((0, 1), (1, 0)), directed=True).num_nodes == 2


class TestCatalogue:
    def test_domain_contents(self):
        assert [t.name for t in catalogue("citation")] == [
            "edge", "path3", "triangle", "path4", "tailed-triangle"]
        assert [t.name for t in catalogue("social")] == [
            "edge", "path3", "triangle", "clique4", "tailed-triangle"]
        assert [t.name for t in catalogue("ecommerce")] == [
            "in-edge", "out-edge", "bi-edge", "in-out", "directed-triangle"]

    def test_ecommerce_all_directed(self):
        assert all(t.directed for t in catalogue("ecommerce"))

    def test_bi_edge_has_both_orientations(self):
        t = template_by_name("bi-edge")
        assert t.edges == ((0, 1), (1, 0))

    def test_clique4_in_social(self):
        names = {t.name for t in catalogue("social")}
        assert "clique4" in names

    def test_path4_is_a_path_from_the_anchor(self):
        t = template_by_name("path4")
        assert t.edges == ((0, 1), (1, 2), (2, 3))

    def test_unknown_domain(self):
        with pytest.raises(ValueError, match="unknown domain"):
            catalogue("astrology")

    def test_every_catalogue_template_reparses(self):
        for domain in ("citation", "social", "ecommerce"):
            for t in catalogue(domain):
                again = parse_template(t.to_json_dict())
                assert again == t


class TestCanonicalForm:
    def test_triangle_relabelings_equal(self):
        a = AnchoredTemplate(3, ((0, 1), (1, 2), (0, 2)))
        b = AnchoredTemplate(3, ((0, 2), (2, 1), (1, 0)))
        assert canonical_form(a) == canonical_form(b)

    def test_anchor_position_matters(self):
        end = AnchoredTemplate(3, ((0, 1), (1, 2)))      # anchored at an end
        middle = AnchoredTemplate(3, ((1, 0), (0, 2)))   # anchored at the middle
        assert canonical_form(end) != canonical_form(middle)

    def test_direction_matters(self):
        assert (canonical_form(template_by_name("in-edge"))
                != canonical_form(template_by_name("out-edge")))

    def test_canonicalize_perm_is_consistent(self):
        t = AnchoredTemplate(4, ((0, 2), (2, 1), (1, 3)))
        canon, perm = canonicalize(t)
        assert perm[0] == 0
        relabeled = {(min(perm[i], perm[j]), max(perm[i], perm[j]))
                     for i, j in t.edges}
        assert relabeled == set(canon.edges)
        assert canonical_form(canon) == canonical_form(t)

    @given(st.integers(2, 5), st.integers(0, 10_000), st.booleans())
    @settings(max_examples=80, deadline=None)
    def test_invariant_under_anchor_fixing_relabeling(self, n, seed, directed):
        import numpy as np

        rng = np.random.default_rng(seed)
        t = random_template(rng, n, directed)
        base = canonical_form(t)
        for tail in itertools.permutations(range(1, n)):
            perm = (0,) + tail
            edges = tuple((perm[i], perm[j]) for i, j in t.edges)
            relabeled = AnchoredTemplate(n, edges, directed=directed)
            assert canonical_form(relabeled) == base


def test_file_round_trip(tmp_path):
    ts = catalogue("social")
    path = tmp_path / "templates.json"
    save_templates(ts, path)
    back = load_templates(path)
    assert back == ts
    assert [t.name for t in back] == [t.name for t in ts]


def test_single_object_file(tmp_path):
    path = tmp_path / "one.json"
    path.write_text('{"num_nodes": 2, "edges": [[0, 1]]}')
    assert load_templates(path)[0].num_nodes == 2
