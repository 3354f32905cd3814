"""Relation-aware self-attention over the joint [words; tables; columns] sequence.

Multi-head attention where every (i, j) pair adds a learned key bias and
value bias looked up from the pair's predefined relation. With all relation
embeddings zero the layer collapses to a plain post-norm transformer layer.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import ContractError, ParameterStore, Tensor
from .relations import (
    NUM_RELATION_ROWS,
    CrossRelMatrix,
    RelGraph,
    RelationType,
)

# precedence when several relations share a node pair: later entries win
_QUESTION_PRECEDENCE = [RelationType.DIST2, RelationType.DIST1, RelationType.DEP_PARSE]
_SCHEMA_PRECEDENCE = [
    RelationType.SAME_TABLE,
    RelationType.TABLE_COLUMN_MATCH,
    RelationType.FOREIGN_KEY_COL_TAB,
    RelationType.PRIMARY_KEY_COL_TAB,
    RelationType.TAB_TAB_PKFK,
    RelationType.COL_COL_PKFK,
]
_PRECEDENCE_RANK = {rel: i for i, rel in enumerate(_QUESTION_PRECEDENCE + _SCHEMA_PRECEDENCE)}


def build_relation_matrix(question_graph: RelGraph, schema_graph: RelGraph,
                          cross: CrossRelMatrix) -> np.ndarray:
    """Symmetric (m+t+c) x (m+t+c) grid of relation ids, NO_MATCH elsewhere.

    Word-word cells come from the question graph, schema-schema cells from
    the schema graph, word-schema cells from the cross matrix. Where two
    graph edges share a pair (a dependency on adjacent words, say), a fixed
    precedence keeps the more specific relation.
    """
    m = question_graph.node_count
    n = schema_graph.node_count
    if cross.values.shape != (m, n):
        raise ContractError(f"cross matrix {cross.values.shape} != ({m},{n})")
    size = m + n
    grid = np.full((size, size), int(RelationType.NO_MATCH), dtype=np.int64)

    def place(i, j, rel):
        cur = grid[i, j]
        if cur != int(RelationType.NO_MATCH):
            if _PRECEDENCE_RANK[RelationType(cur)] >= _PRECEDENCE_RANK[rel]:
                return
        grid[i, j] = int(rel)
        grid[j, i] = int(rel)

    for a, b, rel in question_graph.edges:
        place(a, b, rel)
    for a, b, rel in schema_graph.edges:
        place(m + a, m + b, rel)
    grid[:m, m:] = cross.values
    grid[m:, :m] = cross.values.T
    np.fill_diagonal(grid, int(RelationType.NO_MATCH))
    return grid


@dataclass
class RatLayerParams:
    """One layer: per-head projections, shared relation tables, norms, FF."""

    heads: list[dict[str, Tensor]]
    rel_k: Tensor   # (NUM_RELATION_ROWS, d/H)
    rel_v: Tensor   # (NUM_RELATION_ROWS, d/H)
    ln1_g: Tensor
    ln1_b: Tensor
    ln2_g: Tensor
    ln2_b: Tensor
    ff_w1: Tensor
    ff_b1: Tensor
    ff_w2: Tensor
    ff_b2: Tensor

    @classmethod
    def create(cls, store: ParameterStore, d: int, n_heads: int, prefix: str,
               d_ff: int | None = None) -> "RatLayerParams":
        if d % n_heads != 0:
            raise ContractError(f"hidden size {d} not divisible by {n_heads} heads")
        dh = d // n_heads
        d_ff = d_ff or 4 * d
        heads = []
        for h in range(n_heads):
            heads.append({
                "wq": store.add(f"{prefix}.h{h}.wq", (d, dh), "glorot_uniform"),
                "wk": store.add(f"{prefix}.h{h}.wk", (d, dh), "glorot_uniform"),
                "wv": store.add(f"{prefix}.h{h}.wv", (d, dh), "glorot_uniform"),
            })
        ones = np.ones(d)
        ln1_g = store.add(f"{prefix}.ln1_g", (d,), "zeros")
        ln1_g.data[:] = ones
        ln2_g = store.add(f"{prefix}.ln2_g", (d,), "zeros")
        ln2_g.data[:] = ones
        return cls(
            heads=heads,
            rel_k=store.add(f"{prefix}.rel_k", (NUM_RELATION_ROWS, dh), "embedding_normal"),
            rel_v=store.add(f"{prefix}.rel_v", (NUM_RELATION_ROWS, dh), "embedding_normal"),
            ln1_g=ln1_g,
            ln1_b=store.add(f"{prefix}.ln1_b", (d,), "zeros"),
            ln2_g=ln2_g,
            ln2_b=store.add(f"{prefix}.ln2_b", (d,), "zeros"),
            ff_w1=store.add(f"{prefix}.ff_w1", (d, d_ff), "glorot_uniform"),
            ff_b1=store.add(f"{prefix}.ff_b1", (d_ff,), "zeros"),
            ff_w2=store.add(f"{prefix}.ff_w2", (d_ff, d), "glorot_uniform"),
            ff_b2=store.add(f"{prefix}.ff_b2", (d,), "zeros"),
        )


def rat_layer(states: Tensor, rel_ids: np.ndarray, params: RatLayerParams,
              dropout_p: float = 0.0, rng: np.random.Generator | None = None,
              train: bool = False, trace: dict | None = None) -> Tensor:
    """One relation-biased attention layer with residuals and layer norms."""
    L, d = states.shape
    if rel_ids.shape != (L, L):
        raise ContractError(f"relation grid {rel_ids.shape} != ({L},{L})")
    n_heads = len(params.heads)
    dh = d // n_heads
    scaling = 1.0 / np.sqrt(d / n_heads)

    rel_k3 = ad.gather(params.rel_k, rel_ids)   # (L, L, dh)
    rel_v3 = ad.gather(params.rel_v, rel_ids)
    head_outputs = []
    attn_trace = []
    for head in params.heads:
        q = ad.matmul(states, head["wq"])       # (L, dh)
        k = ad.matmul(states, head["wk"])
        v = ad.matmul(states, head["wv"])
        base = ad.matmul(q, ad.transpose(k, (1, 0)))
        bias = ad.tsum(ad.mul(ad.reshape(q, (L, 1, dh)), rel_k3), axis=-1)
        scores = ad.scale(ad.add(base, bias), scaling)
        alpha = ad.softmax(scores, axis=1)
        if trace is not None:
            attn_trace.append(alpha.data)
        if train and dropout_p > 0.0:
            alpha = ad.dropout(alpha, dropout_p, rng, train)
        ctx = ad.matmul(alpha, v)
        ctx_rel = ad.tsum(ad.mul(ad.reshape(alpha, (L, L, 1)), rel_v3), axis=1)
        head_outputs.append(ad.add(ctx, ctx_rel))
    z = ad.concat(head_outputs, axis=1)
    if trace is not None:
        trace["attention"] = attn_trace

    mid = ad.layer_norm(ad.add(states, z), params.ln1_g, params.ln1_b)
    ff = ad.linear(ad.relu(ad.linear(mid, params.ff_w1, params.ff_b1)),
                   params.ff_w2, params.ff_b2)
    if train and dropout_p > 0.0:
        ff = ad.dropout(ff, dropout_p, rng, train)
    return ad.layer_norm(ad.add(mid, ff), params.ln2_g, params.ln2_b)
