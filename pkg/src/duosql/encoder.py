"""Dual-graph encoding: input featurization and gated graph message passing.

Nodes are featurized from learned word / node-kind / column-type embeddings
and projected to the hidden size. Message passing runs over the
relation-node (Levi) form of each graph with three edge-type parameter sets
(forward, backward, self loop); an ablation switch instead keeps the base
graph and spends one parameter set per relation type and direction.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import ContractError, ParameterStore, Tensor
from .relations import (
    NUM_RELATION_ROWS,
    EdgeKind,
    LeviGraph,
    RelGraph,
    RelationType,
)
from .schema import COLUMN_TYPES, SchemaDef, Token

UNK = "<unk>"
NODE_KINDS = ("word", "table", "column")


class Vocab:
    """Word-to-id mapping with a dedicated unknown row at index 0."""

    def __init__(self, words: list[str]):
        self.words = [UNK] + sorted(set(w.lower() for w in words) - {UNK})
        self.index = {w: i for i, w in enumerate(self.words)}

    def __len__(self) -> int:
        return len(self.words)

    def get(self, word: str) -> int:
        return self.index.get(word.lower(), 0)

    @classmethod
    def build(cls, examples, schemas: dict[str, SchemaDef]) -> "Vocab":
        words: list[str] = []
        for ex in examples:
            words.extend(t.lower() for t in ex.tokens)
        for schema in schemas.values():
            for t in schema.tables:
                words.extend(t.name_tokens)
            for c in schema.columns:
                words.extend(c.name_tokens)
        return cls(words)


@dataclass
class EmbeddingTables:
    """Learned input embeddings plus the projection into the hidden size."""

    word: Tensor          # (vocab, d_emb)
    relation: Tensor      # (NUM_RELATION_ROWS, d_emb)
    kind: Tensor          # (3, d_emb) word / table / column
    col_type: Tensor      # (len(COLUMN_TYPES), d_emb)
    proj_w: Tensor        # (d_emb, d)
    proj_b: Tensor        # (d,)

    @classmethod
    def create(cls, store: ParameterStore, vocab_size: int, d_emb: int, d: int,
               prefix: str = "emb") -> "EmbeddingTables":
        return cls(
            word=store.add(f"{prefix}.word", (vocab_size, d_emb), "embedding_normal"),
            relation=store.add(f"{prefix}.relation", (NUM_RELATION_ROWS, d_emb), "embedding_normal"),
            kind=store.add(f"{prefix}.kind", (len(NODE_KINDS), d_emb), "embedding_normal"),
            col_type=store.add(f"{prefix}.col_type", (len(COLUMN_TYPES), d_emb), "embedding_normal"),
            proj_w=store.add(f"{prefix}.proj_w", (d_emb, d), "glorot_uniform"),
            proj_b=store.add(f"{prefix}.proj_b", (d,), "zeros"),
        )


def _project(tables: EmbeddingTables, x: Tensor) -> Tensor:
    return ad.linear(x, tables.proj_w, tables.proj_b)


def init_question_states(tokens: list[Token], vocab: Vocab, tables: EmbeddingTables) -> Tensor:
    """Word node features: project(word embedding + word-kind embedding)."""
    ids = np.array([vocab.get(t.lemma) for t in tokens], dtype=np.int64)
    word_vecs = ad.gather(tables.word, ids)
    kind = ad.gather(tables.kind, np.zeros(len(tokens), dtype=np.int64))
    return _project(tables, ad.add(word_vecs, kind))


def schema_name_ids(schema: SchemaDef, vocab: Vocab):
    """Padded (node, token) id grid plus mask and per-node kind/type ids."""
    names = [t.name_tokens for t in schema.tables] + [c.name_tokens for c in schema.columns]
    width = max((len(n) for n in names), default=1) or 1
    ids = np.zeros((len(names), width), dtype=np.int64)
    mask = np.zeros((len(names), width), dtype=np.float64)
    for r, toks in enumerate(names):
        for c, w in enumerate(toks):
            ids[r, c] = vocab.get(w)
            mask[r, c] = 1.0
    kinds = np.array([NODE_KINDS.index("table")] * schema.n_tables
                     + [NODE_KINDS.index("column")] * schema.n_columns, dtype=np.int64)
    type_ids = np.array([COLUMN_TYPES.index(c.col_type) for c in schema.columns], dtype=np.int64)
    return ids, mask, kinds, type_ids


def init_schema_states(schema: SchemaDef, vocab: Vocab, tables: EmbeddingTables) -> Tensor:
    """Table/column node features from mean-pooled name tokens.

    Tables add the table-kind embedding; columns add column-kind plus a
    column-type embedding. A node with no name tokens falls back to the kind
    embedding alone.
    """
    ids, mask, kinds, type_ids = schema_name_ids(schema, vocab)
    counts = np.maximum(mask.sum(axis=1, keepdims=True), 1.0)
    toks = ad.gather(tables.word, ids)                       # (n, width, e)
    pooled = ad.tsum(ad.mul(toks, mask[:, :, None]), axis=1)  # (n, e)
    pooled = ad.mul(pooled, 1.0 / counts)
    vec = ad.add(pooled, ad.gather(tables.kind, kinds))
    d_emb = tables.word.shape[1]
    type_rows = ad.concat([Tensor(np.zeros((schema.n_tables, d_emb))),
                           ad.gather(tables.col_type, type_ids)], axis=0)
    return _project(tables, ad.add(vec, type_rows))


def init_relation_node_states(levi: LeviGraph, tables: EmbeddingTables) -> Tensor:
    """Relation nodes start from the learned vector of their relation."""
    ids = np.array([int(r) for r in levi.relation_nodes], dtype=np.int64)
    return _project(tables, ad.gather(tables.relation, ids))


@dataclass
class GgnnParams:
    """Per-edge-type transforms plus a shared GRU cell, applied ``layers`` times."""

    edge_w: dict[int, Tensor]
    edge_b: dict[int, Tensor]
    gru: dict[str, Tensor]
    layers: int

    @classmethod
    def create(cls, store: ParameterStore, d: int, layers: int, prefix: str,
               edge_types: list[int] | None = None) -> "GgnnParams":
        types = edge_types if edge_types is not None else [int(k) for k in EdgeKind]
        edge_w = {t: store.add(f"{prefix}.edge{t}.w", (d, d), "glorot_uniform") for t in types}
        edge_b = {t: store.add(f"{prefix}.edge{t}.b", (d,), "zeros") for t in types}
        gru = {}
        for gate in ("r", "z", "n"):
            gru[f"wx_{gate}"] = store.add(f"{prefix}.gru.wx_{gate}", (d, d), "glorot_uniform")
            gru[f"wh_{gate}"] = store.add(f"{prefix}.gru.wh_{gate}", (d, d), "glorot_uniform")
            gru[f"b_{gate}"] = store.add(f"{prefix}.gru.b_{gate}", (d,), "zeros")
        return cls(edge_w=edge_w, edge_b=edge_b, gru=gru, layers=layers)


def _gru(h: Tensor, f: Tensor, p: dict[str, Tensor]) -> Tensor:
    """Vanilla GRU cell: h' = (1 - z) * n + z * h."""
    r = ad.sigmoid(ad.add(ad.add(ad.matmul(f, p["wx_r"]), ad.matmul(h, p["wh_r"])), p["b_r"]))
    z = ad.sigmoid(ad.add(ad.add(ad.matmul(f, p["wx_z"]), ad.matmul(h, p["wh_z"])), p["b_z"]))
    n = ad.tanh(ad.add(ad.add(ad.matmul(f, p["wx_n"]), ad.mul(r, ad.matmul(h, p["wh_n"]))),
                       p["b_n"]))
    one_minus_z = ad.add_const(ad.neg(z), 1.0)
    return ad.add(ad.mul(one_minus_z, n), ad.mul(z, h))


def _typed_edge_lists(levi: LeviGraph) -> list[tuple[int, np.ndarray, np.ndarray]]:
    out = []
    for kind in EdgeKind:
        src, dst = levi.edges_of_kind(kind)
        out.append((int(kind), src, dst))
    return out


def _message_step(edge_lists, states: Tensor, params: GgnnParams, node_count: int) -> Tensor:
    if states.shape[0] != node_count:
        raise ContractError(f"states rows {states.shape[0]} != node count {node_count}")
    f: Tensor | None = None
    for etype, src, dst in edge_lists:
        if len(src) == 0:
            continue
        msgs = ad.add(ad.matmul(ad.gather(states, src), params.edge_w[etype]),
                      params.edge_b[etype])
        agg = ad.segment_sum(msgs, dst, node_count)
        f = agg if f is None else ad.add(f, agg)
    if f is None:
        f = Tensor(np.zeros(states.shape))
    return _gru(states, f, params.gru)


def ggnn_step(levi: LeviGraph, states: Tensor, params: GgnnParams) -> Tensor:
    """One message-passing step: f_i sums W_t h_src + b_t over incoming edges,
    then the GRU mixes f_i into the previous state."""
    return _message_step(_typed_edge_lists(levi), states, params, levi.node_count)


def ggnn_encode(levi: LeviGraph, init_states: Tensor, params: GgnnParams,
                layers: int | None = None) -> Tensor:
    """Run the GGNN over a Levi graph; relation-node rows are dropped at the end."""
    n_layers = params.layers if layers is None else layers
    edge_lists = _typed_edge_lists(levi)
    states = init_states
    for _ in range(n_layers):
        states = _message_step(edge_lists, states, params, levi.node_count)
    if levi.node_count == levi.base_node_count:
        return states
    return ad.getitem(states, slice(0, levi.base_node_count))


# ---------------------------------------------------------------------------
# ablation: drop relation nodes, spend an edge type per (relation, direction)
# ---------------------------------------------------------------------------

SELF_LOOP_TYPE = 2 * len(RelationType)


def relation_edge_types() -> list[int]:
    """Edge-type ids for the no-relation-node variant: 2 per relation + self loop."""
    types = []
    for rel in RelationType:
        if rel is RelationType.NO_MATCH:
            continue
        types.append(2 * int(rel))      # low -> high
        types.append(2 * int(rel) + 1)  # high -> low
    types.append(SELF_LOOP_TYPE)
    return types


def base_edge_lists(graph: RelGraph) -> list[tuple[int, np.ndarray, np.ndarray]]:
    by_type: dict[int, tuple[list[int], list[int]]] = {}
    for a, b, rel in graph.edges:
        fwd = by_type.setdefault(2 * int(rel), ([], []))
        fwd[0].append(a)
        fwd[1].append(b)
        bwd = by_type.setdefault(2 * int(rel) + 1, ([], []))
        bwd[0].append(b)
        bwd[1].append(a)
    loops = by_type.setdefault(SELF_LOOP_TYPE, ([], []))
    for v in range(graph.node_count):
        loops[0].append(v)
        loops[1].append(v)
    return [(t, np.asarray(s, dtype=np.int64), np.asarray(d, dtype=np.int64))
            for t, (s, d) in sorted(by_type.items())]


def ggnn_encode_base(graph: RelGraph, init_states: Tensor, params: GgnnParams,
                     layers: int | None = None) -> Tensor:
    """No-relation-node variant: message passing directly on the base graph."""
    n_layers = params.layers if layers is None else layers
    edge_lists = base_edge_lists(graph)
    states = init_states
    for _ in range(n_layers):
        states = _message_step(edge_lists, states, params, graph.node_count)
    return states
