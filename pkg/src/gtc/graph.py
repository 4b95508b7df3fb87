"""Heterogeneous graph model, metapath adjacency algebra, and positive mining.

A graph holds per-type dense feature matrices, directed typed relations as
binary sparse adjacency, and named metapaths over the target node type.
Everything is immutable after construction; composed metapath adjacencies
are cached on the graph.
"""

from dataclasses import dataclass, field

import numpy as np

from .errors import ShapeError
from .sparse import SparseMatrix


@dataclass(frozen=True)
class Relation:
    """Directed typed edge set: adj[u, v] = 1 iff u (src type) -> v (dst type)."""

    name: str
    src: str
    dst: str
    adj: SparseMatrix


@dataclass(frozen=True)
class Metapath:
    """Named sequence of relation names starting and ending at the target type."""

    name: str
    steps: tuple[str, ...]

    def __post_init__(self):
        if not self.steps:
            raise ShapeError(f"metapath {self.name!r} has no steps")
        object.__setattr__(self, "steps", tuple(self.steps))


class HeteroGraph:
    """Typed node sets with features, directed relations, and metapaths.

    Parameters
    ----------
    features : dict mapping node-type name to its (n_t, d_t) feature matrix.
    relations : iterable of Relation; reverse directions must be declared
        explicitly, nothing is symmetrized.
    metapaths : iterable of Metapath over the declared relations.
    target_type : the node type whose embeddings are learned and contrasted.
    """

    def __init__(self, features, relations, metapaths, target_type):
        self.features = {t: np.ascontiguousarray(x, dtype=np.float64)
                         for t, x in features.items()}
        relations = list(relations)
        self.relations = {r.name: r for r in relations}
        if len(self.relations) != len(relations):
            raise ShapeError("duplicate relation names")
        self.metapaths = tuple(metapaths)
        self.target_type = target_type
        self._cache: dict = {}
        self._validate()

    def _validate(self):
        if self.target_type not in self.features:
            raise ShapeError(f"target type {self.target_type!r} has no node set")
        for t, x in self.features.items():
            if x.ndim != 2:
                raise ShapeError(f"features of type {t!r} must be 2-d, got {x.shape}")
            if not np.isfinite(x).all():
                raise ShapeError(f"features of type {t!r} contain non-finite values")
        for r in self.relations.values():
            for side, t in (("src", r.src), ("dst", r.dst)):
                if t not in self.features:
                    raise ShapeError(f"relation {r.name!r} {side} type {t!r} unknown")
            want = (self.count(r.src), self.count(r.dst))
            if r.adj.shape != want:
                raise ShapeError(
                    f"relation {r.name!r} adjacency is {r.adj.shape}, want {want}"
                )
        seen = set()
        for mp in self.metapaths:
            if mp.name in seen:
                raise ShapeError(f"duplicate metapath name {mp.name!r}")
            seen.add(mp.name)
            self._check_metapath(mp)

    def _check_metapath(self, mp: Metapath):
        cur = self.target_type
        for i, step in enumerate(mp.steps):
            rel = self.relations.get(step)
            if rel is None:
                raise ShapeError(f"metapath {mp.name!r} step {i} names unknown relation {step!r}")
            if rel.src != cur:
                raise ShapeError(
                    f"metapath {mp.name!r} step {i} ({step!r}) starts at {rel.src!r}, "
                    f"expected {cur!r}"
                )
            cur = rel.dst
        if cur != self.target_type:
            raise ShapeError(
                f"metapath {mp.name!r} ends at {cur!r}, expected target {self.target_type!r}"
            )

    # -- lookups -------------------------------------------------------------

    @property
    def node_types(self) -> tuple[str, ...]:
        return tuple(self.features)

    def count(self, node_type: str) -> int:
        return self.features[node_type].shape[0]

    @property
    def n_target(self) -> int:
        return self.count(self.target_type)

    def metapath(self, name: str) -> Metapath:
        for mp in self.metapaths:
            if mp.name == name:
                return mp
        raise KeyError(f"unknown metapath {name!r}")

    def cached(self, key, build):
        if key not in self._cache:
            self._cache[key] = build()
        return self._cache[key]


def compose_metapath_adjacency(graph: HeteroGraph, path, mode: str = "binary") -> SparseMatrix:
    """Product of the step adjacencies of a metapath (target x target).

    ``counts`` mode keeps path-instance counts; ``binary`` clamps entries
    to 1. The diagonal is kept as produced, self-reachability through the
    metapath is legitimate. Results are cached per (metapath, mode).
    """
    if mode not in ("binary", "counts"):
        raise ValueError(f"mode must be 'binary' or 'counts', got {mode!r}")
    mp = graph.metapath(path) if isinstance(path, str) else path

    def build():
        graph._check_metapath(mp)
        acc = None
        for i, step in enumerate(mp.steps):
            adj = graph.relations[step].adj
            try:
                acc = adj if acc is None else acc @ adj
            except ShapeError as e:
                raise ShapeError(f"metapath {mp.name!r} step {i} ({step!r}): {e}") from e
        return acc

    counts = graph.cached(("compose", mp.name), build)
    return counts.binarize() if mode == "binary" else counts


def normalize_sym(a: SparseMatrix) -> SparseMatrix:
    """Symmetric degree normalization: entry (i,j) -> a_ij / sqrt(d_i * d_j).

    Degrees are row sums. Zero-degree rows and columns come out all zero
    rather than raising; isolated nodes stay representable.
    """
    if a.n_rows != a.n_cols:
        raise ShapeError(f"normalize_sym needs a square matrix, got {a.shape}")
    d = a.row_sums()
    with np.errstate(divide="ignore"):
        inv_sqrt = np.where(d > 0, 1.0 / np.sqrt(np.maximum(d, 1e-300)), 0.0)
    return a.scale_rows(inv_sqrt).scale_cols(inv_sqrt)


@dataclass(frozen=True)
class ContrastiveSets:
    """Per target node: positive ids (always containing self) and the rest.

    ``counts`` is the metapath-instance count matrix the threshold was
    applied to; ``positives[i]`` is sorted and includes i.
    """

    counts: SparseMatrix
    positives: tuple
    theta_pos: int
    n_nodes: int = field(default=0)

    def __post_init__(self):
        object.__setattr__(self, "n_nodes", len(self.positives))

    def negatives(self, i: int) -> np.ndarray:
        mask = np.ones(self.n_nodes, dtype=bool)
        mask[self.positives[i]] = False
        return np.flatnonzero(mask)

    def positive_mask(self) -> np.ndarray:
        """Dense boolean (n, n) mask with mask[i, j] = j in positives[i]."""
        mask = np.zeros((self.n_nodes, self.n_nodes), dtype=bool)
        for i, pos in enumerate(self.positives):
            mask[i, pos] = True
        return mask


def mine_contrastive_sets(graph: HeteroGraph, theta_pos: int, mode: str = "binary") -> ContrastiveSets:
    """Threshold summed metapath adjacency into positive/negative sets.

    C_i(j) sums A_phi(i, j) over all metapaths (binary or raw counts per
    ``mode``); j is positive for i when C_i(j) >= theta_pos, and i is always
    positive for itself.
    """
    if theta_pos < 1:
        raise ValueError("theta_pos must be >= 1; 0 would make every node positive")
    if not graph.metapaths:
        raise ShapeError("graph declares no metapaths")
    n = graph.n_target
    acc = SparseMatrix.zeros(n, n)
    for mp in graph.metapaths:
        acc = acc.add(compose_metapath_adjacency(graph, mp, mode))
    dense = acc.to_dense()
    positives = []
    for i in range(n):
        pos = np.flatnonzero(dense[i] >= theta_pos)
        if i not in pos:
            pos = np.sort(np.append(pos, i))
        positives.append(pos.astype(np.int64))
    return ContrastiveSets(counts=acc, positives=tuple(positives), theta_pos=theta_pos)
