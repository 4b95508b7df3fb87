"""Token sequences from powers of normalized metapath adjacency.

For each metapath the k-th token of node i aggregates its k-hop metapath
neighborhood: x^0 is the node's own feature row and x^k = A_norm @ x^{k-1},
one sparse multiply per hop (cost n_hops * nnz * d per path, no dense
powers). Token sequences feed the transformer branch; ``build_tokens``
returns a plain array for inspection and export, while ``hop_token_tensors``
runs the same recurrence on the autodiff tape so gradients reach the
features that seeded it.
"""

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .errors import ShapeError
from .graph import HeteroGraph, compose_metapath_adjacency, normalize_sym
from .sparse import SparseMatrix


@dataclass(frozen=True)
class TokenSequenceSet:
    """Per-metapath hop token arrays, shape (n_nodes, n_hops + 1, dim)."""

    path_names: tuple
    tokens: dict
    n_hops: int

    def __post_init__(self):
        for name in self.path_names:
            t = self.tokens[name]
            if t.ndim != 3 or t.shape[1] != self.n_hops + 1:
                raise ShapeError(f"token array for {name!r} has shape {t.shape}")

    @property
    def n_nodes(self) -> int:
        return self.tokens[self.path_names[0]].shape[0]

    @property
    def dim(self) -> int:
        return self.tokens[self.path_names[0]].shape[2]


def normalized_metapath_adjacency(graph: HeteroGraph, name: str) -> SparseMatrix:
    """Symmetrically normalized binary metapath adjacency, cached on the graph."""
    path = graph.metapath(name)

    def build():
        return normalize_sym(compose_metapath_adjacency(graph, path, mode="binary"))

    return graph.cached(("norm_adj", name), build)


def build_tokens(adj: SparseMatrix, features: np.ndarray, n_hops: int) -> np.ndarray:
    """Stack [x^0, ..., x^K] for one adjacency; returns (n, K + 1, d).

    K = 0 is allowed and yields just the feature row as a single token.
    The result is a plain array, detached from any gradient recording.
    """
    if n_hops < 0:
        raise ValueError(f"hop count must be non-negative, got {n_hops}")
    features = np.asarray(features)
    if features.ndim != 2 or adj.n_cols != features.shape[0]:
        raise ShapeError(f"features {features.shape} do not match adjacency {adj.shape}")
    if adj.n_rows != adj.n_cols:
        raise ShapeError(f"hop adjacency must be square, got {adj.shape}")
    hops = [features]
    for _ in range(n_hops):
        hops.append(adj.dense_dot(hops[-1]))
    return np.stack(hops, axis=1)


def hop_token_tensors(adj: SparseMatrix, features: "ad.Tensor", n_hops: int) -> list:
    """Same recurrence recorded for autodiff: list of K + 1 (n, d) Tensors."""
    if n_hops < 0:
        raise ValueError(f"hop count must be non-negative, got {n_hops}")
    hops = [ad.as_tensor(features)]
    for _ in range(n_hops):
        hops.append(ad.spmm(adj, hops[-1]))
    return hops


def build_token_set(graph: HeteroGraph, n_hops: int, features=None) -> TokenSequenceSet:
    """Token sequences for every metapath of the graph's target type.

    ``features`` overrides the raw target features (e.g. projected ones);
    tokens come out detached from any autodiff recording.
    """
    if not graph.metapaths:
        raise ValueError("graph declares no metapaths")
    if features is None:
        features = graph.features[graph.target_type]
    features = np.asarray(features, dtype=np.float64)
    if features.shape[0] != graph.n_target:
        raise ShapeError(
            f"features have {features.shape[0]} rows, target type has {graph.n_target} nodes"
        )
    names = tuple(sorted(mp.name for mp in graph.metapaths))
    tokens = {}
    for name in names:
        adj = normalized_metapath_adjacency(graph, name)
        tokens[name] = build_tokens(adj, features, n_hops)
    return TokenSequenceSet(path_names=names, tokens=tokens, n_hops=n_hops)


def batch_tokens(token_set: TokenSequenceSet, ids) -> dict:
    """Row-select every path's token array; order preserved, repeats allowed."""
    ids = np.asarray(ids, dtype=np.int64)
    if ids.ndim != 1:
        raise ValueError(f"node ids must be 1-d, got shape {ids.shape}")
    n = token_set.n_nodes
    if len(ids) and (ids.min() < 0 or ids.max() >= n):
        raise ValueError(f"node id out of range for {n} nodes")
    return {name: token_set.tokens[name][ids] for name in token_set.path_names}
