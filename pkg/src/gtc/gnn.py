"""Graph schema view: typed feature projection and relation-typed message passing.

Each node type first maps its raw features into a shared space with its own
affine layer. Message passing then runs over the declared directed relations:
per layer, every node type mixes a self transform with in-neighbor averages,
one weight matrix per relation, synchronously across types. The target
type's final state is the schema-view embedding.

Also hosts the plain GCN used as a depth baseline.
"""

import numpy as np

from . import autodiff as ad
from .errors import ShapeError
from .graph import HeteroGraph, normalize_sym
from .sparse import SparseMatrix


def glorot(rng: np.random.Generator, fan_in: int, fan_out: int, dtype=np.float32) -> "ad.Tensor":
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return ad.parameter(rng.uniform(-limit, limit, size=(fan_in, fan_out)).astype(dtype))


def zeros_param(shape, dtype=np.float32) -> "ad.Tensor":
    return ad.parameter(np.zeros(shape, dtype=dtype))


# -- typed projection ---------------------------------------------------------


def init_projection(rng: np.random.Generator, in_dims: dict, d: int, dtype=np.float32) -> dict:
    """One affine map per node type, raw dim -> shared dim ``d``."""
    params = {}
    for t in sorted(in_dims):
        params[f"proj.{t}.w"] = glorot(rng, in_dims[t], d, dtype)
        params[f"proj.{t}.b"] = zeros_param((d,), dtype)
    return params


def project_features(graph: HeteroGraph, params: dict, drop=ad.NO_DROPOUT, dtype=np.float32) -> dict:
    """Per-type projected states {type: (n_t, d) Tensor}, ELU activated."""
    out = {}
    for t in graph.node_types:
        x = ad.Tensor(graph.features[t].astype(dtype, copy=False))
        h = ad.elu(ad.add(ad.matmul(x, params[f"proj.{t}.w"]), params[f"proj.{t}.b"]))
        out[t] = drop.apply(h, f"proj.{t}")
    return out


# -- relation-typed message passing -------------------------------------------


def message_operator(graph: HeteroGraph, rel_name: str) -> SparseMatrix:
    """In-neighbor mean operator for a relation: rows are dst nodes.

    Transposes the src->dst adjacency and divides each row by its in-degree;
    nodes with no in-edges get an all-zero row. Cached on the graph.
    """

    def build():
        at = graph.relations[rel_name].adj.transpose()
        deg = at.row_sums()
        with np.errstate(divide="ignore"):
            inv = np.where(deg > 0, 1.0 / np.maximum(deg, 1e-300), 0.0)
        return at.scale_rows(inv)

    return graph.cached(("msg", rel_name), build)


def init_message_passing(rng: np.random.Generator, graph: HeteroGraph, d: int,
                         n_layers: int, dtype=np.float32) -> dict:
    """Per layer: one self weight plus one weight per relation, all (d, d)."""
    if n_layers < 1:
        raise ValueError(f"need at least one layer, got {n_layers}")
    params = {}
    for layer in range(n_layers):
        params[f"gnn.{layer}.self.w"] = glorot(rng, d, d, dtype)
        for r in sorted(graph.relations):
            params[f"gnn.{layer}.rel.{r}.w"] = glorot(rng, d, d, dtype)
    return params


def message_passing_forward(graph: HeteroGraph, states: dict, params: dict,
                            n_layers: int, drop=ad.NO_DROPOUT,
                            activation=ad.elu) -> dict:
    """Run ``n_layers`` synchronous relation-typed layers over all types."""
    for layer in range(n_layers):
        w_self = params[f"gnn.{layer}.self.w"]
        nxt = {}
        for t in graph.node_types:
            acc = ad.matmul(states[t], w_self)
            for r_name in sorted(graph.relations):
                rel = graph.relations[r_name]
                if rel.dst != t or rel.adj.nnz == 0:
                    continue
                msg = ad.matmul(states[rel.src], params[f"gnn.{layer}.rel.{r_name}.w"])
                acc = ad.add(acc, ad.spmm(message_operator(graph, r_name), msg))
            nxt[t] = drop.apply(activation(acc), f"gnn.{layer}.{t}")
        states = nxt
    return states


def schema_view_forward(graph: HeteroGraph, params: dict, n_layers: int,
                        drop=ad.NO_DROPOUT, dtype=np.float32) -> "ad.Tensor":
    """Projection + message passing; returns the target type's embedding."""
    states = project_features(graph, params, drop, dtype)
    states = message_passing_forward(graph, states, params, n_layers, drop)
    return states[graph.target_type]


# -- homogeneous GCN baseline --------------------------------------------------


def gcn_normalize(a: SparseMatrix) -> SparseMatrix:
    """Self-loops added, then symmetric degree normalization."""
    if a.n_rows != a.n_cols:
        raise ShapeError(f"gcn_normalize needs a square matrix, got {a.shape}")
    return normalize_sym(a.add(SparseMatrix.identity(a.n_rows)))


def init_gcn(rng: np.random.Generator, d_in: int, d_hidden: int, d_out: int,
             n_layers: int, dtype=np.float32) -> dict:
    """Weights for an ``n_layers``-deep GCN ending in ``d_out`` logits."""
    if n_layers < 1:
        raise ValueError(f"need at least one layer, got {n_layers}")
    dims = [d_in] + [d_hidden] * (n_layers - 1) + [d_out]
    params = {}
    for layer in range(n_layers):
        params[f"gcn.{layer}.w"] = glorot(rng, dims[layer], dims[layer + 1], dtype)
        params[f"gcn.{layer}.b"] = zeros_param((dims[layer + 1],), dtype)
    return params


def gcn_forward(adj_norm: SparseMatrix, x: "ad.Tensor", params: dict, n_layers: int,
                drop=ad.NO_DROPOUT) -> "ad.Tensor":
    """Stacked propagate-transform layers; ReLU between layers, none after last."""
    h = ad.as_tensor(x)
    for layer in range(n_layers):
        h = ad.add(ad.matmul(ad.spmm(adj_norm, h), params[f"gcn.{layer}.w"]),
                   params[f"gcn.{layer}.b"])
        if layer + 1 < n_layers:
            h = drop.apply(ad.relu(h), f"gcn.{layer}")
    return h
