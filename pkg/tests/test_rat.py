"""Relation matrix assembly and the relation-biased attention layer."""

import numpy as np
import pytest

import duosql.autodiff as ad
from duosql.autodiff import ParameterStore, Tensor, gradcheck
from duosql.linking import build_question_graph, build_schema_graph, link_cross_graph
from duosql.rat import RatLayerParams, build_relation_matrix, rat_layer
from duosql.relations import CrossRelMatrix, RelationType
from duosql.schema import ColumnDef, SchemaDef, TableDef, tokens_from_strings


def sig(x):
    return 1.0 / (1.0 + np.exp(-x))


def np_softmax_rows(s):
    e = np.exp(s - s.max(axis=1, keepdims=True))
    return e / e.sum(axis=1, keepdims=True)


def np_layer_norm(x, g, b, eps=1e-10):
    mu = x.mean(axis=-1, keepdims=True)
    var = ((x - mu) ** 2).mean(axis=-1, keepdims=True)
    return (x - mu) / np.sqrt(var + eps) * g + b


class TestRelationMatrix:
    def fixture(self):
        tokens = tokens_from_strings(["show", "student", "age"])
        q = build_question_graph(tokens)
        schema = SchemaDef(
            "d", [TableDef(["student"])],
            [ColumnDef(None, ["*"]), ColumnDef(0, ["age"], "number")])
        s = build_schema_graph(schema)
        cross = link_cross_graph(tokens, schema)
        return q, s, cross, schema

    def test_adjacent_words_symmetric_dist1(self):
        q, s, cross, _ = self.fixture()
        grid = build_relation_matrix(q, s, cross)
        assert grid[0, 1] == int(RelationType.DIST1)
        assert grid[1, 0] == int(RelationType.DIST1)

    def test_cross_cell_copied(self):
        q, s, cross, schema = self.fixture()
        grid = build_relation_matrix(q, s, cross)
        m = q.node_count
        # word "age" (index 2) vs column age (schema node 2)
        assert grid[2, m + schema.column_node(1)] == int(RelationType.EXACT_MATCH_WORD_COL)
        assert grid[m + schema.column_node(1), 2] == int(RelationType.EXACT_MATCH_WORD_COL)

    def test_counting_against_hand_enumeration(self):
        # 3 words, 1 table, 2 columns: enumerate every non-NO_MATCH cell
        q, s, cross, schema = self.fixture()
        grid = build_relation_matrix(q, s, cross)
        m = q.node_count
        nonmatch = int(RelationType.NO_MATCH)
        # question block: Dist1 x2 pairs + Dist2 x1 pair, each mirrored
        q_cells = (grid[:m, :m] != nonmatch).sum()
        assert q_cells == 2 * 3
        # schema block: table-col edges (* and age) mirrored
        s_cells = (grid[m:, m:] != nonmatch).sum()
        assert s_cells == 2 * len(s.edges)
        # cross block mirrored: "student" matches table, "age" matches column
        c_cells = (grid[:m, m:] != nonmatch).sum()
        assert c_cells == 2
        assert (grid == grid.T).all()
        assert (np.diag(grid) == nonmatch).all()

    def test_diagonal_forced_no_match(self):
        q, s, cross, _ = self.fixture()
        grid = build_relation_matrix(q, s, cross)
        assert (np.diag(grid) == int(RelationType.NO_MATCH)).all()

    def test_precedence_dep_parse_over_dist1(self):
        tokens = tokens_from_strings(["a", "b"])
        q = build_question_graph(tokens, dep_edges=[(0, 1)])
        schema = SchemaDef("d", [TableDef(["t"])], [ColumnDef(None, ["*"])])
        s = build_schema_graph(schema)
        cross = link_cross_graph(tokens, schema)
        grid = build_relation_matrix(q, s, cross)
        assert grid[0, 1] == int(RelationType.DEP_PARSE)


def oracle_rat_layer(x, rel_ids, params):
    """Straight-line evaluation of the attention equations."""
    L, d = x.shape
    H = len(params.heads)
    dh = d // H
    rk = params.rel_k.data
    rv = params.rel_v.data
    heads = []
    for head in params.heads:
        wq, wk, wv = head["wq"].data, head["wk"].data, head["wv"].data
        e = np.zeros((L, L))
        for i in range(L):
            for j in range(L):
                e[i, j] = (x[i] @ wq) @ (x[j] @ wk + rk[rel_ids[i, j]]) / np.sqrt(d / H)
        alpha = np_softmax_rows(e)
        z = np.zeros((L, dh))
        for i in range(L):
            for j in range(L):
                z[i] += alpha[i, j] * (x[j] @ wv + rv[rel_ids[i, j]])
        heads.append(z)
    z = np.concatenate(heads, axis=1)
    mid = np_layer_norm(x + z, params.ln1_g.data, params.ln1_b.data)
    ff = np.maximum(mid @ params.ff_w1.data + params.ff_b1.data, 0.0) @ params.ff_w2.data \
        + params.ff_b2.data
    return np_layer_norm(mid + ff, params.ln2_g.data, params.ln2_b.data)


class TestRatLayer:
    def test_matches_scripted_oracle(self):
        store = ParameterStore(0)
        params = RatLayerParams.create(store, 8, 2, "rat")
        rng = np.random.default_rng(0)
        x = rng.normal(size=(5, 8))
        rel_ids = rng.integers(0, 15, size=(5, 5))
        out = rat_layer(Tensor(x), rel_ids, params)
        np.testing.assert_allclose(out.data, oracle_rat_layer(x, rel_ids, params), atol=1e-12)

    def test_singleton_sequence(self):
        store = ParameterStore(1)
        params = RatLayerParams.create(store, 4, 2, "rat")
        params.rel_k.data[:] = 0.0
        params.rel_v.data[:] = 0.0
        x = np.random.default_rng(1).normal(size=(1, 4))
        rel = np.full((1, 1), int(RelationType.NO_MATCH))
        trace = {}
        out = rat_layer(Tensor(x), rel, params, trace=trace)
        for alpha in trace["attention"]:
            np.testing.assert_allclose(alpha, [[1.0]])
        np.testing.assert_allclose(out.data, oracle_rat_layer(x, rel, params), atol=1e-12)

    def test_zero_relation_embeddings_equal_plain_transformer(self):
        store = ParameterStore(2)
        params = RatLayerParams.create(store, 8, 2, "rat")
        params.rel_k.data[:] = 0.0
        params.rel_v.data[:] = 0.0
        rng = np.random.default_rng(2)
        x = rng.normal(size=(4, 8))
        rel_a = rng.integers(0, 15, size=(4, 4))
        rel_b = rng.integers(0, 15, size=(4, 4))
        out_a = rat_layer(Tensor(x), rel_a, params)
        out_b = rat_layer(Tensor(x), rel_b, params)
        # relations can no longer matter
        np.testing.assert_array_equal(out_a.data, out_b.data)

        # plain multi-head reference without any relation machinery
        def plain(x, params):
            L, d = x.shape
            heads = []
            for head in params.heads:
                q = x @ head["wq"].data
                k = x @ head["wk"].data
                v = x @ head["wv"].data
                alpha = np_softmax_rows(q @ k.T / np.sqrt(d / len(params.heads)))
                heads.append(alpha @ v)
            z = np.concatenate(heads, axis=1)
            mid = np_layer_norm(x + z, params.ln1_g.data, params.ln1_b.data)
            ff = np.maximum(mid @ params.ff_w1.data + params.ff_b1.data, 0.0) \
                @ params.ff_w2.data + params.ff_b2.data
            return np_layer_norm(mid + ff, params.ln2_g.data, params.ln2_b.data)

        np.testing.assert_allclose(out_a.data, plain(x, params), atol=1e-12)

    def test_attention_rows_sum_to_one(self):
        store = ParameterStore(3)
        params = RatLayerParams.create(store, 8, 4, "rat")
        rng = np.random.default_rng(3)
        x = rng.normal(size=(6, 8))
        rel = rng.integers(0, 15, size=(6, 6))
        trace = {}
        rat_layer(Tensor(x), rel, params, trace=trace)
        for alpha in trace["attention"]:
            np.testing.assert_allclose(alpha.sum(axis=1), 1.0, atol=1e-9)

    def test_gradcheck_one_layer(self):
        store = ParameterStore(4)
        params = RatLayerParams.create(store, 8, 2, "rat")
        rng = np.random.default_rng(4)
        x = rng.normal(size=(5, 8))
        rel = rng.integers(0, 15, size=(5, 5))
        target = rng.normal(size=(5, 8))

        def f():
            out = rat_layer(Tensor(x), rel, params)
            diff = ad.sub(out, Tensor(target))
            return ad.tsum(ad.mul(diff, diff))

        report = gradcheck(f, store, h=1e-5, tol=1e-4)
        assert report.passed, report.failures
