"""Frozen-embedding evaluation: splits, linear probe, clustering, depth sweep.

Embeddings are never fine-tuned here. Classification trains a deterministic
multinomial logistic probe (full-batch gradient descent, zeros init) on a
few labeled nodes per class and reports micro-F1, macro-F1 and one-vs-rest
AUC on held-out nodes, mean and std over several split seeds. Clustering
runs k-means on length-normalized embeddings and reports NMI and ARI. The
depth sweep retrains models at growing receptive field to expose
over-smoothing, with supervised message-passing baselines for contrast.
"""

import csv
from dataclasses import dataclass, field, replace

import numpy as np
from sklearn.cluster import KMeans
from sklearn.metrics import (adjusted_rand_score, f1_score, normalized_mutual_info_score,
                             roc_auc_score)

from . import autodiff as ad
from .errors import ConfigError
from .gnn import (gcn_forward, gcn_normalize, glorot, init_gcn, init_message_passing,
                  init_projection, message_passing_forward, project_features, zeros_param)
from .graph import HeteroGraph, compose_metapath_adjacency
from .sparse import SparseMatrix

# -- splits --------------------------------------------------------------------


@dataclass(frozen=True)
class SplitSpec:
    """Per-class train quota plus pooled validation/test draw."""

    n_labels_per_class: int = 20
    n_val: int = 1000
    n_test: int = 1000
    seed: int = 0


@dataclass(frozen=True)
class Split:
    train: np.ndarray
    val: np.ndarray
    test: np.ndarray


def make_split(labels: np.ndarray, spec: SplitSpec = SplitSpec()) -> Split:
    """Draw a label-budget split; nodes labeled -1 are ignored everywhere.

    Train takes ``n_labels_per_class`` random nodes from every class. The
    remaining labeled nodes are pooled: when at least n_val + n_test remain,
    exactly that many are drawn; otherwise the pool is halved into val and
    test so both stay non-empty on small graphs.
    """
    labels = np.asarray(labels, dtype=np.int64)
    rng = np.random.default_rng(spec.seed)
    classes = np.unique(labels[labels >= 0])
    if len(classes) < 2:
        raise ConfigError(f"need at least 2 labeled classes, got {len(classes)}")
    train_parts = []
    rest_parts = []
    for c in classes:
        ids = np.flatnonzero(labels == c)
        if len(ids) < spec.n_labels_per_class + 2:
            raise ConfigError(
                f"class {c} has {len(ids)} labeled nodes; need at least "
                f"{spec.n_labels_per_class + 2} for train plus held-out"
            )
        ids = rng.permutation(ids)
        train_parts.append(ids[: spec.n_labels_per_class])
        rest_parts.append(ids[spec.n_labels_per_class:])
    train = np.sort(np.concatenate(train_parts))
    pool = rng.permutation(np.concatenate(rest_parts))
    if len(pool) >= spec.n_val + spec.n_test:
        val, test = pool[: spec.n_val], pool[spec.n_val : spec.n_val + spec.n_test]
    else:
        half = len(pool) // 2
        val, test = pool[:half], pool[half:]
    return Split(train=train, val=np.sort(val), test=np.sort(test))


# -- linear probe ---------------------------------------------------------------


def train_linear_probe(z: np.ndarray, labels: np.ndarray, train_ids: np.ndarray,
                       n_steps: int = 500, lr: float = 0.05, weight_decay: float = 1e-4):
    """Deterministic multinomial logistic regression on frozen embeddings.

    Full-batch gradient descent from zero weights, so identical inputs give
    identical probes. Returns (weights, bias) for ``probe_predict``.
    """
    z = np.asarray(z, dtype=np.float64)
    y = np.asarray(labels, dtype=np.int64)[train_ids]
    x = z[train_ids]
    n_classes = int(np.asarray(labels)[np.asarray(labels) >= 0].max()) + 1
    onehot = np.zeros((len(y), n_classes))
    onehot[np.arange(len(y)), y] = 1.0
    w = np.zeros((z.shape[1], n_classes))
    b = np.zeros(n_classes)
    for _ in range(n_steps):
        logits = x @ w + b
        logits -= logits.max(axis=1, keepdims=True)
        p = np.exp(logits)
        p /= p.sum(axis=1, keepdims=True)
        g = (p - onehot) / len(y)
        w -= lr * (x.T @ g + weight_decay * w)
        b -= lr * g.sum(axis=0)
    return w, b


def probe_predict(z: np.ndarray, w: np.ndarray, b: np.ndarray) -> np.ndarray:
    logits = np.asarray(z, dtype=np.float64) @ w + b
    logits -= logits.max(axis=1, keepdims=True)
    p = np.exp(logits)
    return p / p.sum(axis=1, keepdims=True)


def linear_probe_accuracy(z, labels, split: Split, part: str = "val") -> float:
    """Micro-F1 of the probe on one split part."""
    ids = getattr(split, part)
    w, b = train_linear_probe(z, labels, split.train)
    pred = probe_predict(z[ids], w, b).argmax(axis=1)
    return float(f1_score(np.asarray(labels)[ids], pred, average="micro"))


# -- metrics --------------------------------------------------------------------


def _auc(y_true: np.ndarray, probs: np.ndarray) -> float:
    classes = np.arange(probs.shape[1])
    try:
        if probs.shape[1] == 2:
            return float(roc_auc_score(y_true, probs[:, 1]))
        return float(roc_auc_score(y_true, probs, multi_class="ovr",
                                   average="macro", labels=classes))
    except ValueError:
        # a class can be absent from a tiny test part
        return float("nan")


@dataclass
class MetricsReport:
    """Mean/std pairs over evaluation runs plus the protocol settings."""

    micro_f1: tuple
    macro_f1: tuple
    auc: tuple
    nmi: tuple
    ari: tuple
    n_runs: int
    n_labels_per_class: int
    per_run: dict = field(default_factory=dict)

    def as_dict(self) -> dict:
        def pair(p):
            return {"mean": p[0], "std": p[1]}

        return {
            "micro_f1": pair(self.micro_f1),
            "macro_f1": pair(self.macro_f1),
            "auc": pair(self.auc),
            "nmi": pair(self.nmi),
            "ari": pair(self.ari),
            "n_runs": self.n_runs,
            "n_labels_per_class": self.n_labels_per_class,
        }


def _mean_std(values) -> tuple:
    arr = np.asarray(values, dtype=np.float64)
    return (float(arr.mean()), float(arr.std()))


def cluster_eval(z: np.ndarray, labels: np.ndarray, k=None, seed: int = 0) -> tuple:
    """One k-means run on length-normalized embeddings: (nmi, ari).

    Unlabeled nodes (label -1) are excluded. ``k`` defaults to the number
    of distinct labels and may not exceed the number of clustered nodes.
    """
    mask = np.asarray(labels) >= 0
    x = np.asarray(z, dtype=np.float64)[mask]
    norms = np.linalg.norm(x, axis=1, keepdims=True)
    x = x / np.maximum(norms, 1e-12)
    y = np.asarray(labels)[mask]
    if k is None:
        k = len(np.unique(y))
    k = int(k)
    if k < 2:
        raise ValueError(f"need at least 2 clusters, got k={k}")
    if k > len(x):
        raise ValueError(f"k={k} exceeds the {len(x)} labeled nodes")
    pred = KMeans(n_clusters=k, n_init=10, random_state=seed).fit_predict(x)
    nmi = normalized_mutual_info_score(y, pred, average_method="arithmetic")
    return float(nmi), float(adjusted_rand_score(y, pred))


def evaluate_embeddings(z: np.ndarray, labels: np.ndarray, spec: SplitSpec = SplitSpec(),
                        n_runs: int = 10) -> MetricsReport:
    """Full protocol: probe metrics over ``n_runs`` split seeds plus clustering.

    Run r uses split seed ``spec.seed + r`` and k-means seed ``spec.seed + r``,
    so the report is reproducible end to end.
    """
    z = np.asarray(z, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    if z.shape[0] != labels.shape[0]:
        raise ConfigError(f"{z.shape[0]} embeddings vs {labels.shape[0]} labels")
    if n_runs < 1:
        raise ConfigError(f"n_runs must be >= 1, got {n_runs}")
    mi, ma, auc, nmi, ari = [], [], [], [], []
    for r in range(n_runs):
        split = make_split(labels, replace(spec, seed=spec.seed + r))
        w, b = train_linear_probe(z, labels, split.train)
        probs = probe_predict(z[split.test], w, b)
        pred = probs.argmax(axis=1)
        y = labels[split.test]
        mi.append(f1_score(y, pred, average="micro"))
        ma.append(f1_score(y, pred, average="macro"))
        auc.append(_auc(y, probs))
        run_nmi, run_ari = cluster_eval(z, labels, seed=spec.seed + r)
        nmi.append(run_nmi)
        ari.append(run_ari)
    return MetricsReport(
        micro_f1=_mean_std(mi), macro_f1=_mean_std(ma), auc=_mean_std(auc),
        nmi=_mean_std(nmi), ari=_mean_std(ari), n_runs=n_runs,
        n_labels_per_class=spec.n_labels_per_class,
        per_run={"micro_f1": [float(v) for v in mi], "macro_f1": [float(v) for v in ma]},
    )


# -- supervised baselines for the depth sweep -----------------------------------


def _f1_pair(y_true, pred) -> tuple:
    return (float(f1_score(y_true, pred, average="micro")),
            float(f1_score(y_true, pred, average="macro")))


def train_supervised_schema(graph: HeteroGraph, labels: np.ndarray, split: Split,
                            n_layers: int, d: int = 64, seed: int = 0,
                            epochs: int = 150, lr: float = 1e-2) -> tuple:
    """Relation-typed message passing trained end-to-end on the probe's
    train nodes; returns (micro_f1, macro_f1) on the test part at the
    best-validation epoch. Uses the baseline's standard ReLU layers, not
    the self-supervised branch's ELU."""
    labels = np.asarray(labels, dtype=np.int64)
    n_classes = int(labels[labels >= 0].max()) + 1
    rng = np.random.default_rng(seed)
    in_dims = {t: graph.features[t].shape[1] for t in graph.node_types}
    params = init_projection(rng, in_dims, d, np.float64)
    params.update(init_message_passing(rng, graph, d, n_layers, np.float64))
    params["cls.w"] = glorot(rng, d, n_classes, np.float64)
    params["cls.b"] = zeros_param((n_classes,), np.float64)
    state = ad.AdamState(lr=lr)
    y_train = labels[split.train]
    best = (-1.0, None)
    for _ in range(epochs):
        states = project_features(graph, params, dtype=np.float64)
        states = message_passing_forward(graph, states, params, n_layers,
                                         activation=ad.relu)
        logits = ad.add(ad.matmul(states[graph.target_type], params["cls.w"]), params["cls.b"])
        loss = ad.cross_entropy(ad.gather_rows(logits, split.train), y_train)
        grads = ad.backward(loss)
        ad.adam_step(params, {k: grads[p] for k, p in params.items()}, state)
        val_pred = logits.data[split.val].argmax(axis=1)
        val_mi = f1_score(labels[split.val], val_pred, average="micro")
        if val_mi > best[0]:
            best = (val_mi, logits.data.copy())
    pred = best[1][split.test].argmax(axis=1)
    return _f1_pair(labels[split.test], pred)


def metapath_union_adjacency(graph: HeteroGraph) -> SparseMatrix:
    """Binary union of all metapath adjacencies over target nodes."""
    acc = SparseMatrix.zeros(graph.n_target, graph.n_target)
    for mp in graph.metapaths:
        acc = acc.add(compose_metapath_adjacency(graph, mp, "binary"))
    return acc.binarize()


def train_supervised_gcn(graph: HeteroGraph, labels: np.ndarray, split: Split,
                         n_layers: int, d: int = 64, seed: int = 0,
                         epochs: int = 150, lr: float = 1e-2) -> tuple:
    """Plain GCN on the binarized metapath union, same protocol as above."""
    labels = np.asarray(labels, dtype=np.int64)
    n_classes = int(labels[labels >= 0].max()) + 1
    rng = np.random.default_rng(seed)
    adj = gcn_normalize(metapath_union_adjacency(graph))
    x = ad.Tensor(graph.features[graph.target_type])
    params = init_gcn(rng, x.shape[1], d, n_classes, n_layers, np.float64)
    state = ad.AdamState(lr=lr)
    y_train = labels[split.train]
    best = (-1.0, None)
    for _ in range(epochs):
        logits = gcn_forward(adj, x, params, n_layers)
        loss = ad.cross_entropy(ad.gather_rows(logits, split.train), y_train)
        grads = ad.backward(loss)
        ad.adam_step(params, {k: grads[p] for k, p in params.items()}, state)
        val_pred = logits.data[split.val].argmax(axis=1)
        val_mi = f1_score(labels[split.val], val_pred, average="micro")
        if val_mi > best[0]:
            best = (val_mi, logits.data.copy())
    pred = best[1][split.test].argmax(axis=1)
    return _f1_pair(labels[split.test], pred)


# -- depth sweep -----------------------------------------------------------------


def oversmoothing_sweep(graph: HeteroGraph, labels: np.ndarray, depths,
                        methods=("gtc", "rgcn", "gcn"), base_config=None,
                        split_spec: SplitSpec = SplitSpec(), out_csv=None) -> list:
    """Embedding quality as receptive field grows; returns rows of dicts.

    The self-supervised model varies its hop count; the supervised
    baselines vary their layer count. Rows carry depth, method, micro-F1
    and macro-F1; ``out_csv`` (optional) gets a header plus one row each.
    """
    from .training import TrainConfig, fit

    if base_config is None:
        base_config = TrainConfig()
    depths = [int(d) for d in depths]
    if not depths:
        raise ConfigError("depth sweep needs at least one depth")
    if not methods:
        raise ConfigError("depth sweep needs at least one method")
    labels = np.asarray(labels, dtype=np.int64)
    split = make_split(labels, split_spec)
    rows = []
    for depth in depths:
        if depth < 1:
            raise ConfigError(f"depth must be >= 1, got {depth}")
        for method in methods:
            if method == "gtc":
                config = replace(base_config, n_hops=int(depth), allow_deep=True,
                                 seed=split_spec.seed)
                model, _ = fit(graph, config)
                z = model.embed()
                w, b = train_linear_probe(z, labels, split.train)
                pred = probe_predict(z[split.test], w, b).argmax(axis=1)
                mi, ma = _f1_pair(labels[split.test], pred)
            elif method == "rgcn":
                mi, ma = train_supervised_schema(graph, labels, split, int(depth),
                                                 d=base_config.d, seed=split_spec.seed)
            elif method == "gcn":
                mi, ma = train_supervised_gcn(graph, labels, split, int(depth),
                                              d=base_config.d, seed=split_spec.seed)
            else:
                raise ConfigError(f"unknown sweep method {method!r}")
            rows.append({"depth": int(depth), "method": method,
                         "mi_f1": round(mi, 6), "ma_f1": round(ma, 6)})
    if out_csv is not None:
        with open(out_csv, "w", newline="", encoding="utf-8") as f:
            writer = csv.DictWriter(f, fieldnames=["depth", "method", "mi_f1", "ma_f1"])
            writer.writeheader()
            writer.writerows(rows)
    return rows
