"""Shared oracles and graph builders for the test suite."""

import numpy as np

from gtc import HeteroGraph, Metapath, Relation, SparseMatrix


def fd_grad(f, x: np.ndarray, eps: float = 1e-6) -> np.ndarray:
    """Central-difference gradient of scalar f with respect to array x."""
    x = np.asarray(x, dtype=np.float64)
    g = np.zeros_like(x)
    flat = x.ravel()
    gflat = g.ravel()
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + eps
        hi = f(x)
        flat[i] = orig - eps
        lo = f(x)
        flat[i] = orig
        gflat[i] = (hi - lo) / (2.0 * eps)
    return g


def max_rel_err(a: np.ndarray, b: np.ndarray) -> float:
    """Max elementwise |a-b| / max(1, |a|, |b|)."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    scale = np.maximum(1.0, np.maximum(np.abs(a), np.abs(b)))
    return float((np.abs(a - b) / scale).max())


def check_param_grads(loss_fn, params: dict, eps: float = 1e-6) -> float:
    """Worst relative error between tape and finite-difference gradients.

    ``loss_fn()`` must recompute the loss from the current params; params
    maps names to Tensors whose .data is perturbed in place.
    """
    import gtc.autodiff as ad

    loss = loss_fn()
    grads = ad.backward(loss)
    worst = 0.0
    for name in sorted(params):
        p = params[name]

        def f(_arr, _p=p):
            return float(loss_fn().data)

        num = fd_grad(f, p.data, eps)
        worst = max(worst, max_rel_err(grads[p], num))
    return worst


def two_path_graph(seed: int = 0) -> HeteroGraph:
    """Six target nodes, two auxiliary types, one metapath through each."""
    rng = np.random.default_rng(seed)
    feats = {
        "t": rng.standard_normal((6, 3)),
        "a": rng.standard_normal((3, 2)),
        "b": rng.standard_normal((4, 2)),
    }
    ta = SparseMatrix.from_edges([0, 1, 1, 2, 3, 4, 5, 0], [0, 0, 1, 1, 2, 2, 0, 1], (6, 3))
    tb = SparseMatrix.from_edges([0, 2, 3, 5, 4, 1], [0, 0, 1, 1, 3, 2], (6, 4))
    rels = [
        Relation("t_a", "t", "a", ta),
        Relation("a_t", "a", "t", ta.transpose()),
        Relation("t_b", "t", "b", tb),
        Relation("b_t", "b", "t", tb.transpose()),
    ]
    paths = [
        Metapath("via_a", ("t_a", "a_t")),
        Metapath("via_b", ("t_b", "b_t")),
    ]
    return HeteroGraph(feats, rels, paths, "t")


def random_three_type_graph(rng: np.random.Generator, max_nodes: int = 10):
    """Random tripartite graph with two-step and four-step metapaths."""
    n_t = int(rng.integers(2, max_nodes + 1))
    n_a = int(rng.integers(1, max_nodes + 1))
    n_b = int(rng.integers(1, max_nodes + 1))
    feats = {
        "t": rng.standard_normal((n_t, 3)),
        "a": rng.standard_normal((n_a, 2)),
        "b": rng.standard_normal((n_b, 2)),
    }

    def bernoulli(n, m, p=0.3):
        mask = rng.random((n, m)) < p
        r, c = np.nonzero(mask)
        return SparseMatrix.from_edges(r, c, (n, m))

    ta = bernoulli(n_t, n_a)
    ab = bernoulli(n_a, n_b)
    rels = [
        Relation("t_a", "t", "a", ta),
        Relation("a_t", "a", "t", ta.transpose()),
        Relation("a_b", "a", "b", ab),
        Relation("b_a", "b", "a", ab.transpose()),
    ]
    paths = [
        Metapath("tat", ("t_a", "a_t")),
        Metapath("tabat", ("t_a", "a_b", "b_a", "a_t")),
    ]
    return HeteroGraph(feats, rels, paths, "t")


def brute_force_path_counts(graph: HeteroGraph, path_name: str) -> np.ndarray:
    """Count metapath instances by explicit nested edge walks."""
    mp = graph.metapath(path_name)
    adjs = [graph.relations[s].adj.to_dense() for s in mp.steps]
    n = graph.n_target
    counts = np.zeros((n, n))
    for i in range(n):
        frontier = {i: 1}
        for adj in adjs:
            nxt = {}
            for u, c in frontier.items():
                for v in np.flatnonzero(adj[u] > 0):
                    nxt[v] = nxt.get(v, 0) + c
            frontier = nxt
        for j, c in frontier.items():
            counts[i, j] = c
    return counts
