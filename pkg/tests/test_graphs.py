"""Dual-graph construction: relations, question/schema graphs, cross linking, Levi."""

from collections import Counter

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from duosql.linking import build_question_graph, build_schema_graph, link_cross_graph
from duosql.relations import (
    CROSS_RELATIONS,
    NUM_RELATIONS,
    QUESTION_RELATIONS,
    SCHEMA_RELATIONS,
    EdgeKind,
    GraphError,
    RelGraph,
    RelationType,
    levi_transform,
)
from duosql.schema import ColumnDef, SchemaDef, TableDef, tokens_from_strings


def toks(*words):
    return tokens_from_strings(list(words))


def edge_set(graph):
    return set(graph.edges)


# ---------------------------------------------------------------------------
# relation inventory
# ---------------------------------------------------------------------------

class TestRelationInventory:
    def test_fourteen_relations_excluding_sentinel(self):
        members = [r for r in RelationType if r is not RelationType.NO_MATCH]
        assert len(members) == NUM_RELATIONS == 14

    def test_partition_matches_published_grouping(self):
        # question 3, schema 6, cross 5; word-table cross pairs have two
        # relations (exact, partial) and word-column pairs three
        assert len(QUESTION_RELATIONS) == 3
        assert len(SCHEMA_RELATIONS) == 6
        assert len(CROSS_RELATIONS) == 5
        assert QUESTION_RELATIONS | SCHEMA_RELATIONS | CROSS_RELATIONS == {
            r for r in RelationType if r is not RelationType.NO_MATCH
        }

    def test_groups_are_disjoint(self):
        assert not QUESTION_RELATIONS & SCHEMA_RELATIONS
        assert not QUESTION_RELATIONS & CROSS_RELATIONS
        assert not SCHEMA_RELATIONS & CROSS_RELATIONS


# ---------------------------------------------------------------------------
# question graph
# ---------------------------------------------------------------------------

class TestQuestionGraph:
    def test_three_tokens_no_deps(self):
        g = build_question_graph(toks("list", "all", "pets"))
        assert edge_set(g) == {
            (0, 1, RelationType.DIST1),
            (1, 2, RelationType.DIST1),
            (0, 2, RelationType.DIST2),
        }

    def test_single_token_has_no_edges(self):
        g = build_question_graph(toks("pets"))
        assert g.edges == []

    def test_five_tokens_one_dep(self):
        g = build_question_graph(toks("a", "b", "c", "d", "e"), dep_edges=[(0, 3)])
        counts = Counter(rel for _, _, rel in g.edges)
        assert counts[RelationType.DIST1] == 4
        assert counts[RelationType.DIST2] == 3
        assert counts[RelationType.DEP_PARSE] == 1
        assert len(g.edges) == 8

    def test_dep_kept_alongside_distance_edge(self):
        g = build_question_graph(toks("a", "b"), dep_edges=[(1, 0)])
        assert g.has_edge(0, 1, RelationType.DIST1)
        assert g.has_edge(0, 1, RelationType.DEP_PARSE)

    def test_out_of_range_dep_rejected(self):
        with pytest.raises(GraphError):
            build_question_graph(toks("a", "b"), dep_edges=[(0, 5)])

    @settings(max_examples=50, deadline=None)
    @given(st.integers(min_value=2, max_value=40))
    def test_edge_count_formula(self, n):
        g = build_question_graph(toks(*[f"w{i}" for i in range(n)]))
        assert len(g.edges) == (n - 1) + (n - 2)


# ---------------------------------------------------------------------------
# schema graph
# ---------------------------------------------------------------------------

def make_schema(db_id="toy", n_extra_cols=2, with_fk=False):
    """One or two tables; columns: [*, id, name, ...] per table."""
    if not with_fk:
        tables = [TableDef(["head"])]
        columns = [ColumnDef(None, ["*"]),
                   ColumnDef(0, ["id"], "number"),
                   ColumnDef(0, ["name"], "text")]
        return SchemaDef(db_id, tables, columns, primary_keys=[1])
    tables = [TableDef(["department"]), TableDef(["head"])]
    columns = [
        ColumnDef(None, ["*"]),
        ColumnDef(0, ["id"], "number"),          # department.id (PK)
        ColumnDef(0, ["name"], "text"),
        ColumnDef(1, ["id"], "number"),          # head.id
        ColumnDef(1, ["department", "id"], "number"),  # head.department_id (FK)
    ]
    return SchemaDef(db_id, tables, columns, primary_keys=[1],
                     foreign_keys=[(4, 1)])


class TestSchemaGraph:
    def test_one_table_two_columns_no_keys(self):
        schema = SchemaDef("t", [TableDef(["head"])],
                           [ColumnDef(0, ["age"], "number"), ColumnDef(0, ["name"], "text")])
        g = build_schema_graph(schema)
        counts = Counter(rel for *_, rel in g.edges)
        assert counts[RelationType.SAME_TABLE] == 1
        assert counts[RelationType.TABLE_COLUMN_MATCH] == 2
        assert sum(counts.values()) == 3

    def test_three_columns_all_pairs_same_table(self):
        schema = SchemaDef("t", [TableDef(["a"])],
                           [ColumnDef(0, ["x"]), ColumnDef(0, ["y"]), ColumnDef(0, ["z"])])
        g = build_schema_graph(schema)
        counts = Counter(rel for *_, rel in g.edges)
        assert counts[RelationType.SAME_TABLE] == 3

    def test_foreign_key_emits_all_four_relations(self):
        schema = make_schema(with_fk=True)
        g = build_schema_graph(schema)
        tab_a, tab_b = schema.table_node(0), schema.table_node(1)
        col_pk = schema.column_node(1)
        col_fk = schema.column_node(4)
        assert g.has_edge(col_fk, col_pk, RelationType.COL_COL_PKFK)
        assert g.has_edge(tab_a, tab_b, RelationType.TAB_TAB_PKFK)
        assert g.has_edge(col_pk, tab_a, RelationType.PRIMARY_KEY_COL_TAB)
        assert g.has_edge(col_fk, tab_b, RelationType.FOREIGN_KEY_COL_TAB)

    def test_wildcard_links_to_every_table(self):
        schema = make_schema(with_fk=True)
        g = build_schema_graph(schema)
        star = schema.column_node(0)
        for t in range(schema.n_tables):
            assert g.has_edge(star, schema.table_node(t), RelationType.TABLE_COLUMN_MATCH)

    def test_dangling_foreign_key_rejected(self):
        with pytest.raises(Exception):
            SchemaDef("bad", [TableDef(["a"])],
                      [ColumnDef(0, ["x"])], foreign_keys=[(0, 9)])


# ---------------------------------------------------------------------------
# cross linking
# ---------------------------------------------------------------------------

def pets_schema():
    tables = [TableDef(["student"]), TableDef(["pets"])]
    columns = [
        ColumnDef(None, ["*"]),
        ColumnDef(0, ["id"], "number"),
        ColumnDef(0, ["first", "name"], "text"),
        ColumnDef(0, ["age"], "number"),
        ColumnDef(1, ["pet", "type"], "text", cell_values=["dog", "cat"]),
    ]
    return SchemaDef("pets", tables, columns, primary_keys=[1])


class TestCrossLinking:
    def test_age_exact_match(self):
        schema = pets_schema()
        tokens = toks("what", "is", "the", "age", "of", "students")
        cross = link_cross_graph(tokens, schema)
        assert cross.values[3, schema.n_tables + 3] == int(RelationType.EXACT_MATCH_WORD_COL)

    def test_name_partial_match_when_full_name_absent(self):
        schema = pets_schema()
        tokens = toks("show", "name", "of", "student")
        cross = link_cross_graph(tokens, schema)
        # "first name" never appears contiguously, so "name" is partial
        assert cross.values[1, schema.n_tables + 2] == int(RelationType.PARTIAL_MATCH_WORD_COL)

    def test_first_name_exact_when_contiguous(self):
        schema = pets_schema()
        tokens = toks("show", "the", "first", "name", "of", "student")
        cross = link_cross_graph(tokens, schema)
        col = schema.n_tables + 2
        assert cross.values[2, col] == int(RelationType.EXACT_MATCH_WORD_COL)
        assert cross.values[3, col] == int(RelationType.EXACT_MATCH_WORD_COL)

    def test_dog_value_match(self):
        schema = pets_schema()
        tokens = toks("who", "has", "a", "dog")
        cross = link_cross_graph(tokens, schema)
        assert cross.values[3, schema.n_tables + 4] == int(RelationType.VALUE_MATCH)

    def test_word_table_match(self):
        schema = pets_schema()
        tokens = toks("list", "every", "student")
        cross = link_cross_graph(tokens, schema)
        assert cross.values[2, schema.table_node(0)] == int(RelationType.EXACT_MATCH_WORD_TAB)

    def test_exact_beats_value_on_same_cell(self):
        tables = [TableDef(["shop"])]
        columns = [ColumnDef(None, ["*"]),
                   ColumnDef(0, ["dog"], "text", cell_values=["dog"])]
        schema = SchemaDef("s", tables, columns)
        cross = link_cross_graph(toks("show", "dog"), schema)
        assert cross.values[1, schema.n_tables + 1] == int(RelationType.EXACT_MATCH_WORD_COL)

    def test_case_insensitive(self):
        schema = pets_schema()
        lower = link_cross_graph(toks("the", "age", "of", "student"), schema)
        upper = link_cross_graph(toks("THE", "AGE", "OF", "STUDENT"), schema)
        np.testing.assert_array_equal(lower.values, upper.values)

    def test_cell_value_permutation_invariance(self):
        tokens = toks("who", "has", "a", "cat")
        base = pets_schema()
        flipped = pets_schema()
        flipped.columns[4].cell_values = list(reversed(flipped.columns[4].cell_values))
        np.testing.assert_array_equal(
            link_cross_graph(tokens, base).values,
            link_cross_graph(tokens, flipped).values,
        )

    def test_wildcard_never_matches(self):
        tables = [TableDef(["a"])]
        columns = [ColumnDef(None, ["*"]), ColumnDef(0, ["x"])]
        schema = SchemaDef("w", tables, columns)
        cross = link_cross_graph(toks("*", "x"), schema)
        star_col = schema.n_tables + 0
        assert (cross.values[:, star_col] == int(RelationType.NO_MATCH)).all()

    def test_word_can_match_table_and_column_in_their_own_cells(self):
        tables = [TableDef(["name"])]
        columns = [ColumnDef(None, ["*"]), ColumnDef(0, ["name"], "text")]
        schema = SchemaDef("n", tables, columns)
        cross = link_cross_graph(toks("name"), schema)
        assert cross.values[0, 0] == int(RelationType.EXACT_MATCH_WORD_TAB)
        assert cross.values[0, schema.n_tables + 1] == int(RelationType.EXACT_MATCH_WORD_COL)


# ---------------------------------------------------------------------------
# Levi transform
# ---------------------------------------------------------------------------

def collapse(levi):
    """Oracle: rebuild the original edge multiset from Forward edges."""
    ends = {}
    for s, d, k in levi.typed_edges:
        if k is not EdgeKind.FORWARD:
            continue
        if s >= levi.base_node_count:
            ends.setdefault(s, [None, None])[1] = d
        else:
            ends.setdefault(d, [None, None])[0] = s
    out = []
    for rnode, (a, b) in sorted(ends.items()):
        rel = levi.relation_nodes[rnode - levi.base_node_count]
        out.append((a, b, rel))
    return Counter(out)


class TestLeviTransform:
    def test_single_edge(self):
        g = RelGraph(2, [(0, 1, RelationType.DIST1)])
        levi = levi_transform(g)
        assert levi.node_count == 3
        fwd = {(s, d) for s, d, k in levi.typed_edges if k is EdgeKind.FORWARD}
        bwd = {(s, d) for s, d, k in levi.typed_edges if k is EdgeKind.BACKWARD}
        loops = {(s, d) for s, d, k in levi.typed_edges if k is EdgeKind.SELF_LOOP}
        assert fwd == {(0, 2), (2, 1)}
        assert bwd == {(2, 0), (1, 2)}
        assert loops == {(0, 0), (1, 1), (2, 2)}

    def test_empty_edge_set(self):
        levi = levi_transform(RelGraph(4, []))
        assert levi.node_count == 4
        assert all(k is EdgeKind.SELF_LOOP for _, _, k in levi.typed_edges)
        assert len(levi.typed_edges) == 4

    def test_triangle(self):
        g = RelGraph(3, [(0, 1, RelationType.DIST1), (1, 2, RelationType.DIST1),
                         (0, 2, RelationType.DIST2)])
        levi = levi_transform(g)
        assert levi.node_count == 6
        kinds = Counter(k for *_, k in levi.typed_edges)
        assert kinds[EdgeKind.FORWARD] == 6
        assert kinds[EdgeKind.BACKWARD] == 6
        assert kinds[EdgeKind.SELF_LOOP] == 6
        for node, nbrs in enumerate(levi.base_adjacency):
            assert nbrs == sorted(set(range(3)) - {node})

    def test_round_trip_recovers_edges(self):
        g = build_question_graph(toks("a", "b", "c", "d"), dep_edges=[(0, 3)])
        levi = levi_transform(g)
        assert collapse(levi) == Counter(g.edges)

    def test_base_adjacency_symmetric(self):
        g = build_question_graph(toks("a", "b", "c", "d", "e"))
        levi = levi_transform(g)
        for i, nbrs in enumerate(levi.base_adjacency):
            for j in nbrs:
                assert i in levi.base_adjacency[j]
