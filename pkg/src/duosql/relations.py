"""Typed relation inventory and graph containers for the dual-graph encoder.

Fourteen predefined relations partition into question (word-word), schema
(table/column) and cross (word to table/column) groups; NO_MATCH is a
sentinel used only in dense relation grids, never as a graph edge.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import IntEnum

import numpy as np


class RelationType(IntEnum):
    # question graph: word-word
    DIST1 = 0              # adjacent words
    DIST2 = 1              # words two apart
    DEP_PARSE = 2          # ingested grammatical dependency
    # schema graph
    SAME_TABLE = 3         # column-column, same table
    COL_COL_PKFK = 4       # column-column, foreign key onto primary key
    FOREIGN_KEY_COL_TAB = 5  # column-table, column is a foreign key of its table
    PRIMARY_KEY_COL_TAB = 6  # column-table, column is a primary key of the table
    TABLE_COLUMN_MATCH = 7   # column-table, column belongs to the table
    TAB_TAB_PKFK = 8         # table-table, linked by a foreign key
    # cross graph: word to schema node
    EXACT_MATCH_WORD_TAB = 9
    PARTIAL_MATCH_WORD_TAB = 10
    EXACT_MATCH_WORD_COL = 11
    PARTIAL_MATCH_WORD_COL = 12
    VALUE_MATCH = 13
    # sentinel for "no predefined relation" cells
    NO_MATCH = 14


QUESTION_RELATIONS = frozenset({RelationType.DIST1, RelationType.DIST2, RelationType.DEP_PARSE})
SCHEMA_RELATIONS = frozenset({
    RelationType.SAME_TABLE, RelationType.COL_COL_PKFK, RelationType.FOREIGN_KEY_COL_TAB,
    RelationType.PRIMARY_KEY_COL_TAB, RelationType.TABLE_COLUMN_MATCH, RelationType.TAB_TAB_PKFK,
})
CROSS_RELATIONS = frozenset({
    RelationType.EXACT_MATCH_WORD_TAB, RelationType.PARTIAL_MATCH_WORD_TAB,
    RelationType.EXACT_MATCH_WORD_COL, RelationType.PARTIAL_MATCH_WORD_COL,
    RelationType.VALUE_MATCH,
})
WORD_TABLE_RELATIONS = frozenset({
    RelationType.EXACT_MATCH_WORD_TAB, RelationType.PARTIAL_MATCH_WORD_TAB,
})
WORD_COLUMN_RELATIONS = frozenset({
    RelationType.EXACT_MATCH_WORD_COL, RelationType.PARTIAL_MATCH_WORD_COL,
    RelationType.VALUE_MATCH,
})

NUM_RELATIONS = 14            # excludes NO_MATCH
NUM_RELATION_ROWS = 15        # embedding-table rows, including NO_MATCH

# row index inside cross-relation embedding tables (cross subset + NO_MATCH)
CROSS_ROW_INDEX = {
    RelationType.EXACT_MATCH_WORD_TAB: 0,
    RelationType.PARTIAL_MATCH_WORD_TAB: 1,
    RelationType.EXACT_MATCH_WORD_COL: 2,
    RelationType.PARTIAL_MATCH_WORD_COL: 3,
    RelationType.VALUE_MATCH: 4,
    RelationType.NO_MATCH: 5,
}
NUM_CROSS_ROWS = 6


class GraphError(ValueError):
    """Invalid graph structure (bad index, self edge, duplicate edge)."""


@dataclass
class RelGraph:
    """Undirected typed graph; edges stored canonically as (low, high, rel)."""

    node_count: int
    edges: list[tuple[int, int, RelationType]] = field(default_factory=list)

    def __post_init__(self):
        seen = set()
        canon = []
        for i, j, rel in self.edges:
            if i == j:
                raise GraphError(f"self edge on node {i}")
            if not (0 <= i < self.node_count and 0 <= j < self.node_count):
                raise GraphError(f"edge ({i},{j}) out of range for {self.node_count} nodes")
            if rel is RelationType.NO_MATCH:
                raise GraphError("NO_MATCH is not a graph edge relation")
            a, b = (i, j) if i < j else (j, i)
            key = (a, b, rel)
            if key in seen:
                raise GraphError(f"duplicate edge {key}")
            seen.add(key)
            canon.append(key)
        self.edges = canon

    def has_edge(self, i: int, j: int, rel: RelationType) -> bool:
        a, b = (i, j) if i < j else (j, i)
        return (a, b, rel) in set(self.edges)

    def adjacency(self) -> list[list[int]]:
        """Neighbor lists ignoring relation types, symmetric and sorted."""
        nbrs: list[set[int]] = [set() for _ in range(self.node_count)]
        for i, j, _ in self.edges:
            nbrs[i].add(j)
            nbrs[j].add(i)
        return [sorted(s) for s in nbrs]


@dataclass
class CrossRelMatrix:
    """Word-by-schema-node grid of cross relations (or NO_MATCH).

    Schema nodes are ordered tables first, then columns; word-table cells may
    only hold word-table relations and word-column cells only word-column
    relations.
    """

    values: np.ndarray            # (words, tables + columns) of RelationType ints
    n_tables: int

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.int16)
        tab = self.values[:, :self.n_tables]
        col = self.values[:, self.n_tables:]
        ok_tab = {int(r) for r in WORD_TABLE_RELATIONS} | {int(RelationType.NO_MATCH)}
        ok_col = {int(r) for r in WORD_COLUMN_RELATIONS} | {int(RelationType.NO_MATCH)}
        if tab.size and not set(np.unique(tab).tolist()) <= ok_tab:
            raise GraphError("word-table cell holds a non word-table relation")
        if col.size and not set(np.unique(col).tolist()) <= ok_col:
            raise GraphError("word-column cell holds a non word-column relation")

    @property
    def shape(self) -> tuple[int, int]:
        return self.values.shape

    def transposed(self) -> np.ndarray:
        return self.values.T

    def cross_rows(self) -> np.ndarray:
        """Map cells to cross-embedding row indices."""
        lut = np.full(NUM_RELATION_ROWS, CROSS_ROW_INDEX[RelationType.NO_MATCH], dtype=np.int64)
        for rel, row in CROSS_ROW_INDEX.items():
            lut[int(rel)] = row
        return lut[self.values]


class EdgeKind(IntEnum):
    FORWARD = 0
    BACKWARD = 1
    SELF_LOOP = 2


@dataclass
class LeviGraph:
    """Relation-node transform of a RelGraph.

    Each typed edge (a, b, rel) with a < b becomes an extra node carrying the
    relation; Forward edges run a -> relnode -> b, Backward edges reverse
    them, and every node (base and relation) carries one self loop.
    ``base_adjacency`` keeps the pre-transform neighbor lists for the local
    linking phase downstream.
    """

    base_node_count: int
    relation_nodes: list[RelationType]
    typed_edges: list[tuple[int, int, EdgeKind]]
    base_adjacency: list[list[int]]

    @property
    def node_count(self) -> int:
        return self.base_node_count + len(self.relation_nodes)

    def edges_of_kind(self, kind: EdgeKind) -> tuple[np.ndarray, np.ndarray]:
        """(sources, destinations) arrays for one edge kind."""
        src = [s for s, _, k in self.typed_edges if k is kind]
        dst = [d for _, d, k in self.typed_edges if k is kind]
        return np.asarray(src, dtype=np.int64), np.asarray(dst, dtype=np.int64)


def levi_transform(graph: RelGraph) -> LeviGraph:
    """Replace each typed edge with an intermediate relation node."""
    base = graph.node_count
    relation_nodes: list[RelationType] = []
    typed: list[tuple[int, int, EdgeKind]] = []
    for k, (a, b, rel) in enumerate(graph.edges):
        r = base + k
        relation_nodes.append(rel)
        typed.append((a, r, EdgeKind.FORWARD))
        typed.append((r, b, EdgeKind.FORWARD))
        typed.append((r, a, EdgeKind.BACKWARD))
        typed.append((b, r, EdgeKind.BACKWARD))
    for v in range(base + len(relation_nodes)):
        typed.append((v, v, EdgeKind.SELF_LOOP))
    return LeviGraph(
        base_node_count=base,
        relation_nodes=relation_nodes,
        typed_edges=typed,
        base_adjacency=graph.adjacency(),
    )
