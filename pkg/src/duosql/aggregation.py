"""Structure-aware aggregation between the question graph and the schema graph.

One direction treats one graph as the query and the other as the key. The
key states are first blended with a pooled summary of the query graph, then
each query node attends globally over key nodes and locally over each key
node's base-graph neighborhood; gated fusions combine neighbor context with
the key node itself and the aggregated message with the old query state.
Cross-graph string-match relations enter every attention score as learned
bias vectors.

All ablation switches from the fine-grained study are plain booleans on
:class:`AblationFlags` and compose freely.
"""

from __future__ import annotations

from dataclasses import dataclass, fields

import numpy as np

from . import autodiff as ad
from .autodiff import ParameterStore, Tensor
from .encoder import GgnnParams, ggnn_encode, ggnn_encode_base, relation_edge_types
from .relations import NUM_CROSS_ROWS, LeviGraph, RelGraph, levi_transform


@dataclass
class AblationFlags:
    """Switches for the ablation variants; default is the full model."""

    no_local_linking: bool = False      # key node context ignores neighbors
    no_aggregation: bool = False        # bypass aggregation entirely
    no_aggr_to_schema: bool = False     # skip the schema <- question direction
    no_aggr_to_question: bool = False   # skip the question <- schema direction
    no_global_pooling: bool = False     # skip the pooled key-state update
    fixed_gate_half: bool = False       # neighbor gate pinned to 0.5
    no_relation_feature: bool = False   # zero out cross-relation bias vectors
    no_relation_node: bool = False      # encoder uses per-relation edge types

    @classmethod
    def names(cls) -> list[str]:
        return [f.name for f in fields(cls)]

    @classmethod
    def from_names(cls, names) -> "AblationFlags":
        valid = set(cls.names())
        kwargs = {}
        for n in names:
            n = n.strip()
            if not n:
                continue
            if n not in valid:
                raise ValueError(f"unknown ablation flag {n!r}; valid: {sorted(valid)}")
            kwargs[n] = True
        return cls(**kwargs)


@dataclass
class AggregationParams:
    """Trainable weights for one aggregation direction."""

    w_g: Tensor      # pooled-query vs key relevance bilinear form
    w_qg: Tensor     # pooled-query mixing map
    w_kg: Tensor     # key-state mixing map
    w_q: Tensor      # global attention map
    w_nq: Tensor     # local (neighbor) attention map
    w_ng: Tensor     # (2d, d) neighbor gate
    w_gate: Tensor   # (2d, d) query update gate
    rel: Tensor      # (NUM_CROSS_ROWS, d) cross-relation bias vectors

    @classmethod
    def create(cls, store: ParameterStore, d: int, prefix: str,
               rel: Tensor | None = None) -> "AggregationParams":
        if rel is None:
            rel = store.add(f"{prefix}.rel", (NUM_CROSS_ROWS, d), "embedding_normal")
        return cls(
            w_g=store.add(f"{prefix}.w_g", (d, d), "glorot_uniform"),
            w_qg=store.add(f"{prefix}.w_qg", (d, d), "glorot_uniform"),
            w_kg=store.add(f"{prefix}.w_kg", (d, d), "glorot_uniform"),
            w_q=store.add(f"{prefix}.w_q", (d, d), "glorot_uniform"),
            w_nq=store.add(f"{prefix}.w_nq", (d, d), "glorot_uniform"),
            w_ng=store.add(f"{prefix}.w_ng", (2 * d, d), "glorot_uniform"),
            w_gate=store.add(f"{prefix}.w_gate", (2 * d, d), "glorot_uniform"),
            rel=rel,
        )


def pad_neighbors(adjacency: list[list[int]]) -> tuple[np.ndarray, np.ndarray]:
    """Pack ragged neighbor lists into (idx, mask) arrays of width max degree."""
    width = max((len(a) for a in adjacency), default=1) or 1
    idx = np.zeros((len(adjacency), width), dtype=np.int64)
    mask = np.zeros((len(adjacency), width), dtype=bool)
    for r, nbrs in enumerate(adjacency):
        idx[r, :len(nbrs)] = nbrs
        mask[r, :len(nbrs)] = True
    return idx, mask


def _rel_lookup(params: AggregationParams, cross_rows: np.ndarray,
                no_relation_feature: bool) -> Tensor:
    """(m, n, d) bias vectors per query/key pair, or zeros under the ablation."""
    if no_relation_feature:
        d = params.rel.shape[1]
        return Tensor(np.zeros(cross_rows.shape + (d,)))
    return ad.gather(params.rel, cross_rows)


def _pair_scores(proj_query: Tensor, key_states: Tensor, rel3: Tensor) -> Tensor:
    """score[i, j] = proj_query[i] . (key[j] + rel3[i, j])"""
    base = ad.matmul(proj_query, ad.transpose(key_states, (1, 0)))
    m, d = proj_query.shape
    bias = ad.tsum(ad.mul(ad.reshape(proj_query, (m, 1, d)), rel3), axis=-1)
    return ad.add(base, bias)


def _broadcast_rows(states: Tensor, m: int) -> Tensor:
    """Tile key states (n, d) into an (m, n, d) tensor on the tape."""
    n, d = states.shape
    return ad.add(ad.reshape(states, (1, n, d)), Tensor(np.zeros((m, 1, 1))))


def global_pool_update(query_states: Tensor, key_states: Tensor,
                       params: AggregationParams) -> Tensor:
    """Blend each key state with the mean-pooled query-graph embedding.

    e_j = sigmoid(pool . W_g key_j) scores the key node's relevance; the new
    key state interpolates between the mapped pool and the mapped key state.
    """
    pool = ad.tmean(query_states, axis=0, keepdims=True)            # (1, d)
    e = ad.sigmoid(ad.matmul(ad.matmul(pool, params.w_g),
                             ad.transpose(key_states, (1, 0))))      # (1, n)
    e_col = ad.transpose(e, (1, 0))                                  # (n, 1)
    mapped_pool = ad.matmul(pool, params.w_qg)                       # (1, d)
    mapped_key = ad.matmul(key_states, params.w_kg)                  # (n, d)
    one_minus = ad.add_const(ad.neg(e_col), 1.0)
    return ad.add(ad.mul(one_minus, mapped_pool), ad.mul(e_col, mapped_key))


def global_linking(query_states: Tensor, key_states: Tensor, cross_rows: np.ndarray,
                   params: AggregationParams, no_relation_feature: bool = False) -> Tensor:
    """Row-stochastic attention of each query node over all key nodes."""
    rel3 = _rel_lookup(params, cross_rows, no_relation_feature)
    scores = ad.tanh(_pair_scores(ad.matmul(query_states, params.w_q), key_states, rel3))
    return ad.softmax(scores, axis=1)


def local_linking(query_states: Tensor, key_states: Tensor,
                  nbr_idx: np.ndarray, nbr_mask: np.ndarray, cross_rows: np.ndarray,
                  params: AggregationParams, no_relation_feature: bool = False) -> Tensor:
    """Attention of each query node over the neighbors of each key node.

    The raw score depends only on (query node, neighbor); the softmax runs
    within each key node's neighbor set. Rows for key nodes without
    neighbors come back as all zeros.
    """
    rel3 = _rel_lookup(params, cross_rows, no_relation_feature)
    scores = ad.tanh(_pair_scores(ad.matmul(query_states, params.w_nq), key_states, rel3))
    per_nbr = ad.take_cols(scores, nbr_idx)                          # (m, n, deg)
    mask = np.broadcast_to(nbr_mask[None], per_nbr.shape)
    return ad.softmax(per_nbr, axis=-1, mask=mask, zero_empty=True)


def neighbor_aggregate(key_states: Tensor, beta: Tensor,
                       nbr_idx: np.ndarray, params: AggregationParams,
                       flags: AblationFlags, trace: dict | None = None) -> Tensor:
    """Gated fusion of each key node with its attention-weighted neighbor context.

    Returns the (m, n, d) per-query-node view of the key nodes. Key nodes
    with no neighbors keep a zero neighbor context, so their fused state is
    (1 - gate) * self.
    """
    m = beta.shape[0]
    self3 = _broadcast_rows(key_states, m)
    nbr_states = ad.gather(key_states, nbr_idx)                      # (n, deg, d)
    beta_by_key = ad.transpose(beta, (1, 0, 2))                      # (n, m, deg)
    neigh = ad.transpose(ad.bmm(beta_by_key, nbr_states), (1, 0, 2))  # (m, n, d)
    if flags.fixed_gate_half:
        if trace is not None:
            trace["gate_local"] = np.full(self3.shape, 0.5)
        return ad.scale(ad.add(self3, neigh), 0.5)
    n, d = key_states.shape
    both = ad.reshape(ad.concat([self3, neigh], axis=-1), (m * n, 2 * d))
    gate = ad.reshape(ad.sigmoid(ad.matmul(both, params.w_ng)), (m, n, d))
    if trace is not None:
        trace["gate_local"] = gate.data
    one_minus = ad.add_const(ad.neg(gate), 1.0)
    return ad.add(ad.mul(one_minus, self3), ad.mul(gate, neigh))


def query_update(query_states: Tensor, key_view: Tensor, alpha: Tensor,
                 cross_rows: np.ndarray, params: AggregationParams,
                 no_relation_feature: bool = False, trace: dict | None = None) -> Tensor:
    """Aggregate key views under the global attention, then gate against the
    old query state."""
    rel3 = _rel_lookup(params, cross_rows, no_relation_feature)
    mixed = ad.add(key_view, rel3)
    m, n = alpha.shape
    h_new = ad.tsum(ad.mul(ad.reshape(alpha, (m, n, 1)), mixed), axis=1)  # (m, d)
    both = ad.concat([query_states, h_new], axis=1)
    gate = ad.sigmoid(ad.matmul(both, params.w_gate))
    if trace is not None:
        trace["gate_query"] = gate.data
    one_minus = ad.add_const(ad.neg(gate), 1.0)
    return ad.add(ad.mul(one_minus, query_states), ad.mul(gate, h_new))


@dataclass
class GraphSide:
    """Static per-graph structure reused across layers and steps."""

    levi: LeviGraph
    base_graph: RelGraph
    nbr_idx: np.ndarray
    nbr_mask: np.ndarray

    @classmethod
    def build(cls, graph: RelGraph) -> "GraphSide":
        levi = levi_transform(graph)
        idx, mask = pad_neighbors(levi.base_adjacency)
        return cls(levi=levi, base_graph=graph, nbr_idx=idx, nbr_mask=mask)


def graph_aggr(query_states: Tensor, key_states: Tensor, key_side: GraphSide,
               cross_rows: np.ndarray, params: AggregationParams,
               flags: AblationFlags, trace: dict | None = None) -> Tensor:
    """One full aggregation direction: pooled update, global and local linking,
    neighbor fusion and the gated query update."""
    if flags.no_aggregation:
        return query_states
    if not flags.no_global_pooling:
        key_states = global_pool_update(query_states, key_states, params)
    alpha = global_linking(query_states, key_states, cross_rows, params,
                           flags.no_relation_feature)
    if trace is not None:
        trace["alpha"] = alpha.data
    if flags.no_local_linking:
        key_view = _broadcast_rows(key_states, query_states.shape[0])
    else:
        beta = local_linking(query_states, key_states, key_side.nbr_idx,
                             key_side.nbr_mask, cross_rows, params,
                             flags.no_relation_feature)
        if trace is not None:
            trace["beta"] = beta.data
        key_view = neighbor_aggregate(key_states, beta, key_side.nbr_idx,
                                      params, flags, trace)
    return query_update(query_states, key_view, alpha, cross_rows, params,
                        flags.no_relation_feature, trace)


@dataclass
class DualLayerParams:
    """One stacked block: a GGNN re-encode plus both aggregation directions."""

    ggnn: GgnnParams
    q_from_s: AggregationParams
    s_from_q: AggregationParams

    @classmethod
    def create(cls, store: ParameterStore, d: int, ggnn_layers: int, prefix: str,
               no_relation_node: bool = False,
               shared_rel: Tensor | None = None) -> "DualLayerParams":
        edge_types = relation_edge_types() if no_relation_node else None
        return cls(
            ggnn=GgnnParams.create(store, d, ggnn_layers, f"{prefix}.ggnn", edge_types),
            q_from_s=AggregationParams.create(store, d, f"{prefix}.q_from_s", shared_rel),
            s_from_q=AggregationParams.create(store, d, f"{prefix}.s_from_q", shared_rel),
        )


def dual_graph_stack(q_side: GraphSide, s_side: GraphSide,
                     q_states: Tensor, s_states: Tensor,
                     q_rel_init: Tensor | None, s_rel_init: Tensor | None,
                     cross_rows_qs: np.ndarray, layers: list[DualLayerParams],
                     flags: AblationFlags, dropout_p: float = 0.0,
                     rng: np.random.Generator | None = None, train: bool = False,
                     trace: list | None = None) -> tuple[Tensor, Tensor]:
    """Stack of encode-then-aggregate blocks over the two graphs.

    Each block re-encodes both graphs with its own GGNN on the current
    states, then runs both aggregation directions from the freshly encoded
    (pre-aggregation) states so the update is symmetric.
    """
    cross_rows_sq = cross_rows_qs.T
    for li, layer in enumerate(layers):
        if flags.no_relation_node:
            q_enc = ggnn_encode_base(q_side.base_graph, q_states, layer.ggnn)
            s_enc = ggnn_encode_base(s_side.base_graph, s_states, layer.ggnn)
        else:
            q_enc = ggnn_encode(q_side.levi, ad.concat([q_states, q_rel_init], axis=0)
                                if q_rel_init is not None else q_states, layer.ggnn)
            s_enc = ggnn_encode(s_side.levi, ad.concat([s_states, s_rel_init], axis=0)
                                if s_rel_init is not None else s_states, layer.ggnn)
        if flags.no_aggregation:
            q_states, s_states = q_enc, s_enc
        else:
            tq = {} if trace is not None else None
            ts = {} if trace is not None else None
            q_new = (q_enc if flags.no_aggr_to_question else
                     graph_aggr(q_enc, s_enc, s_side, cross_rows_qs,
                                layer.q_from_s, flags, tq))
            s_new = (s_enc if flags.no_aggr_to_schema else
                     graph_aggr(s_enc, q_enc, q_side, cross_rows_sq,
                                layer.s_from_q, flags, ts))
            if trace is not None:
                trace.append({"layer": li, "question_from_schema": tq,
                              "schema_from_question": ts})
            q_states, s_states = q_new, s_new
        if train and dropout_p > 0.0:
            q_states = ad.dropout(q_states, dropout_p, rng, train)
            s_states = ad.dropout(s_states, dropout_p, rng, train)
    return q_states, s_states
