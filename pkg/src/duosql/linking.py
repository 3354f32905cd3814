"""Dual-graph construction: question graph, schema graph and cross linking.

The cross linker is purely string based. A word is "part of" a name when it
equals one of the name's tokens (surface first, lemma as fallback); a name is
"contained in the question" when its full token sequence appears contiguously
in the question lemmas. Value matching compares a word against the column's
cell values and their tokens. When several relations apply to one cell the
precedence is exact > partial > value.
"""

from __future__ import annotations

import numpy as np

from .relations import CrossRelMatrix, GraphError, RelGraph, RelationType
from .schema import SchemaDef, Token


def build_question_graph(tokens: list[Token],
                         dep_edges: list[tuple[int, int]] | None = None) -> RelGraph:
    """Distance-1/2 relations over word positions plus ingested dependency edges."""
    if not tokens:
        raise GraphError("question must have at least one token")
    n = len(tokens)
    edges: list[tuple[int, int, RelationType]] = []
    for i in range(n - 1):
        edges.append((i, i + 1, RelationType.DIST1))
    for i in range(n - 2):
        edges.append((i, i + 2, RelationType.DIST2))
    seen_dep = set()
    for h, d in dep_edges or []:
        if not (0 <= h < n and 0 <= d < n):
            raise GraphError(f"dependency edge ({h},{d}) out of range for {n} tokens")
        if h == d:
            raise GraphError(f"dependency self edge on token {h}")
        key = (min(h, d), max(h, d))
        if key in seen_dep:
            continue
        seen_dep.add(key)
        edges.append((key[0], key[1], RelationType.DEP_PARSE))
    return RelGraph(node_count=n, edges=edges)


def build_schema_graph(schema: SchemaDef) -> RelGraph:
    """Database-specific relations over tables-then-columns node ids."""
    edges: list[tuple[int, int, RelationType]] = []
    seen: set[tuple[int, int, RelationType]] = set()

    def emit(i: int, j: int, rel: RelationType) -> None:
        key = (min(i, j), max(i, j), rel)
        if key not in seen:
            seen.add(key)
            edges.append(key)

    for t in range(schema.n_tables):
        cols = schema.columns_of(t)
        for a_pos, a in enumerate(cols):
            emit(schema.column_node(a), schema.table_node(t), RelationType.TABLE_COLUMN_MATCH)
            for b in cols[a_pos + 1:]:
                emit(schema.column_node(a), schema.column_node(b), RelationType.SAME_TABLE)

    # the wildcard column has no owning table; link it to every table so the
    # decoder can still reach it through graph structure
    for ci, col in enumerate(schema.columns):
        if col.is_wildcard:
            for t in range(schema.n_tables):
                emit(schema.column_node(ci), schema.table_node(t), RelationType.TABLE_COLUMN_MATCH)

    for pk in schema.primary_keys:
        emit(schema.column_node(pk), schema.table_node(schema.columns[pk].table_index),
             RelationType.PRIMARY_KEY_COL_TAB)

    for fk, ref in schema.foreign_keys:
        emit(schema.column_node(fk), schema.column_node(ref), RelationType.COL_COL_PKFK)
        emit(schema.column_node(fk), schema.table_node(schema.columns[fk].table_index),
             RelationType.FOREIGN_KEY_COL_TAB)
        emit(schema.table_node(schema.columns[fk].table_index),
             schema.table_node(schema.columns[ref].table_index),
             RelationType.TAB_TAB_PKFK)

    return RelGraph(node_count=schema.n_nodes, edges=edges)


def _contains_contiguous(haystack: list[str], needle: list[str]) -> bool:
    if not needle or len(needle) > len(haystack):
        return False
    for start in range(len(haystack) - len(needle) + 1):
        if haystack[start:start + len(needle)] == needle:
            return True
    return False


def _word_in_name(token: Token, name_tokens: list[str]) -> bool:
    return token.surface.lower() in name_tokens or token.lemma in name_tokens


def _value_tokens(values: list[str]) -> set[str]:
    out: set[str] = set()
    for v in values:
        v = v.lower()
        out.add(v)
        out.update(v.split())
    return out


def link_cross_graph(tokens: list[Token], schema: SchemaDef) -> CrossRelMatrix:
    """Cross relations between question words and schema nodes."""
    lemmas = [t.lemma for t in tokens]
    surfaces = [t.surface.lower() for t in tokens]
    m = len(tokens)
    grid = np.full((m, schema.n_nodes), int(RelationType.NO_MATCH), dtype=np.int16)

    for ti in range(schema.n_tables):
        name = schema.tables[ti].name_tokens
        full = _contains_contiguous(lemmas, name) or _contains_contiguous(surfaces, name)
        for wi, tok in enumerate(tokens):
            if _word_in_name(tok, name):
                rel = (RelationType.EXACT_MATCH_WORD_TAB if full
                       else RelationType.PARTIAL_MATCH_WORD_TAB)
                grid[wi, schema.table_node(ti)] = int(rel)

    for ci, col in enumerate(schema.columns):
        node = schema.column_node(ci)
        if col.is_wildcard:
            continue
        name = col.name_tokens
        full = _contains_contiguous(lemmas, name) or _contains_contiguous(surfaces, name)
        values = _value_tokens(col.cell_values)
        for wi, tok in enumerate(tokens):
            if _word_in_name(tok, name):
                rel = (RelationType.EXACT_MATCH_WORD_COL if full
                       else RelationType.PARTIAL_MATCH_WORD_COL)
            elif tok.surface.lower() in values or tok.lemma in values:
                rel = RelationType.VALUE_MATCH
            else:
                continue
            grid[wi, node] = int(rel)

    return CrossRelMatrix(values=grid, n_tables=schema.n_tables)
