"""Self-supervised trainer: two-view model assembly and the fit loop.

The model pairs a schema-view encoder (typed projection + relation message
passing) with a hops-view encoder (hop tokens + transformer + two-level
attention) and trains both against the cross-view contrastive objective
with Adam. Early stopping watches the epoch training loss; the parameters
that produced the best loss are restored at the end.
"""

import time
from dataclasses import dataclass, field, replace

import numpy as np

from . import autodiff as ad
from .contrast import contrastive_loss, init_contrast_heads
from .errors import ConfigError, NumericError
from .gnn import init_message_passing, init_projection, message_passing_forward, project_features
from .graph import ContrastiveSets, HeteroGraph, mine_contrastive_sets
from .tokens import hop_token_tensors, normalized_metapath_adjacency
from .transformer import hops_view_forward, init_encoder

GRID_MAX_GNN_LAYERS = 6
GRID_MAX_TF = 9


@dataclass(frozen=True)
class TrainConfig:
    """Hyperparameters for one training run; ``validate`` checks consistency."""

    d: int = 64
    d_model: int = 64
    d_contrast: int = 64
    d_attn: int = 64
    gnn_layers: int = 2
    tf_layers: int = 1
    n_heads: int = 4
    n_hops: int = 3
    ffn_hidden: int = 0
    lr: float = 5e-3
    tau: float = 0.6
    lam: float = 0.4
    theta_pos: int = 2
    pos_mode: str = "binary"
    max_epochs: int = 200
    patience: int = 30
    dropout: float = 0.1
    seed: int = 0
    token_mode: str = "recorded"
    shared_encoder: bool = False
    contrast_head: bool = True
    mean_pooled_semantic: bool = False
    batch_size: int = 0
    dtype: str = "float32"
    allow_deep: bool = False

    def validate(self) -> "TrainConfig":
        for name in ("d", "d_model", "d_contrast", "d_attn"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be >= 1, got {getattr(self, name)}")
        for name in ("gnn_layers", "tf_layers", "n_heads", "n_hops", "max_epochs", "patience"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be >= 1, got {getattr(self, name)}")
        if not self.allow_deep:
            if self.gnn_layers > GRID_MAX_GNN_LAYERS:
                raise ConfigError(
                    f"gnn_layers {self.gnn_layers} exceeds {GRID_MAX_GNN_LAYERS}; "
                    "set allow_deep for depth studies"
                )
            for name in ("tf_layers", "n_heads", "n_hops"):
                if getattr(self, name) > GRID_MAX_TF:
                    raise ConfigError(
                        f"{name} {getattr(self, name)} exceeds {GRID_MAX_TF}; "
                        "set allow_deep for depth studies"
                    )
        if self.d_model % self.n_heads:
            raise ConfigError(f"d_model {self.d_model} not divisible by {self.n_heads} heads")
        if self.ffn_hidden < 0:
            raise ConfigError("ffn_hidden must be >= 0 (0 means 2 * d_model)")
        if self.lr < 0:
            raise ConfigError(f"lr must be >= 0, got {self.lr}")
        if self.tau <= 0:
            raise ConfigError(f"temperature must be positive, got {self.tau}")
        if not 0.0 <= self.lam <= 1.0:
            raise ConfigError(f"balance weight must be in [0, 1], got {self.lam}")
        if self.theta_pos < 1:
            raise ConfigError(f"theta_pos must be >= 1, got {self.theta_pos}")
        if self.pos_mode not in ("binary", "counts"):
            raise ConfigError(f"pos_mode must be 'binary' or 'counts', got {self.pos_mode!r}")
        if not 0.0 <= self.dropout < 1.0:
            raise ConfigError(f"dropout must be in [0, 1), got {self.dropout}")
        if self.token_mode not in ("recorded", "frozen"):
            raise ConfigError(f"token_mode must be 'recorded' or 'frozen', got {self.token_mode!r}")
        if not self.contrast_head and not (self.d == self.d_model == self.d_contrast):
            raise ConfigError(
                "with the projection head disabled the view widths must already match: "
                f"d={self.d}, d_model={self.d_model}, d_contrast={self.d_contrast}"
            )
        if self.batch_size < 0:
            raise ConfigError("batch_size must be >= 0 (0 means full graph)")
        if self.dtype not in ("float32", "float64"):
            raise ConfigError(f"dtype must be 'float32' or 'float64', got {self.dtype!r}")
        return self

    @property
    def ffn_width(self) -> int:
        return self.ffn_hidden if self.ffn_hidden else 2 * self.d_model

    @property
    def np_dtype(self):
        return np.float32 if self.dtype == "float32" else np.float64


@dataclass
class TrainReport:
    """What a fit produced: per-epoch losses and the early-stopping outcome."""

    losses: list = field(default_factory=list)
    hops_losses: list = field(default_factory=list)
    schema_losses: list = field(default_factory=list)
    best_epoch: int = -1
    best_loss: float = float("inf")
    epochs_run: int = 0
    stopped_early: bool = False
    wall_seconds: float = 0.0


class GtcModel:
    """Both view encoders plus the contrastive heads over one graph."""

    def __init__(self, graph: HeteroGraph, config: TrainConfig):
        config.validate()
        if not graph.metapaths:
            raise ConfigError("model needs a graph with at least one metapath")
        self.graph = graph
        self.config = config
        self.path_names = tuple(sorted(mp.name for mp in graph.metapaths))
        self.sets = mine_contrastive_sets(graph, config.theta_pos, config.pos_mode)
        dtype = config.np_dtype
        rng = np.random.default_rng(config.seed)
        in_dims = {t: graph.features[t].shape[1] for t in graph.node_types}
        self.params = {}
        self.params.update(init_projection(rng, in_dims, config.d, dtype))
        self.params.update(init_message_passing(rng, graph, config.d, config.gnn_layers, dtype))
        token_dim = config.d if config.token_mode == "recorded" else in_dims[graph.target_type]
        self.params.update(init_encoder(
            rng, self.path_names, token_dim, config.d_model, config.tf_layers,
            config.n_heads, config.ffn_width, config.d_attn,
            shared=config.shared_encoder, dtype=dtype))
        if config.contrast_head:
            self.params.update(init_contrast_heads(rng, config.d, config.d_model,
                                                   config.d_contrast, dtype))
        self._adjs = {name: normalized_metapath_adjacency(graph, name)
                      for name in self.path_names}
        self._frozen = None
        if config.token_mode == "frozen":
            raw = graph.features[graph.target_type].astype(dtype)
            self._frozen = {
                name: [raw] + [None] * config.n_hops for name in self.path_names
            }
            for name in self.path_names:
                hops = self._frozen[name]
                for k in range(config.n_hops):
                    hops[k + 1] = self._adjs[name].dense_dot(hops[k]).astype(dtype)

    def forward(self, train: bool = False, step: int = 0, batch_ids=None):
        """One full pass; returns (schema view, hops view, diagnostics)."""
        cfg = self.config
        drop = ad.DropoutCtx(cfg.dropout, cfg.seed, step, train)
        proj = project_features(self.graph, self.params, drop, cfg.np_dtype)
        states = message_passing_forward(self.graph, proj, self.params, cfg.gnn_layers, drop)
        z_schema = states[self.graph.target_type]
        if cfg.token_mode == "recorded":
            # both views share the projected target features
            seed_feats = proj[self.graph.target_type]
            tokens = {name: hop_token_tensors(self._adjs[name], seed_feats, cfg.n_hops)
                      for name in self.path_names}
        else:
            tokens = {name: [ad.Tensor(h) for h in self._frozen[name]]
                      for name in self.path_names}
        if batch_ids is not None:
            z_schema = ad.gather_rows(z_schema, batch_ids)
            tokens = {name: [ad.gather_rows(h, batch_ids) for h in hops]
                      for name, hops in tokens.items()}
        z_hops, diag = hops_view_forward(tokens, self.params, cfg.tf_layers, cfg.n_heads,
                                         shared=cfg.shared_encoder, drop=drop,
                                         mean_pooled=cfg.mean_pooled_semantic)
        return z_schema, z_hops, diag

    def loss(self, train: bool = False, step: int = 0, batch_ids=None, sets=None):
        z_schema, z_hops, _ = self.forward(train=train, step=step, batch_ids=batch_ids)
        head_params = self.params if self.config.contrast_head else None
        return contrastive_loss(z_schema, z_hops, sets if sets is not None else self.sets,
                                self.config.tau, self.config.lam, head_params)

    def embed(self, view: str = "hops") -> np.ndarray:
        """Final node representations with all stochastic parts off."""
        z_schema, z_hops, _ = self.forward(train=False)
        if view == "hops":
            return z_hops.data.astype(np.float64)
        if view == "schema":
            return z_schema.data.astype(np.float64)
        if view == "both":
            return np.hstack([z_hops.data, z_schema.data]).astype(np.float64)
        raise ValueError(f"view must be 'hops', 'schema' or 'both', got {view!r}")

    def snapshot(self) -> dict:
        return {name: p.data.copy() for name, p in self.params.items()}

    def restore(self, snap: dict) -> None:
        for name, p in self.params.items():
            p.data = snap[name].astype(p.dtype, copy=True)


def _subset_sets(sets: ContrastiveSets, ids: np.ndarray) -> ContrastiveSets:
    lookup = np.full(sets.n_nodes, -1, dtype=np.int64)
    lookup[ids] = np.arange(len(ids))
    positives = []
    for gid in ids:
        local = lookup[sets.positives[gid]]
        positives.append(np.sort(local[local >= 0]))
    return ContrastiveSets(counts=sets.counts, positives=tuple(positives),
                           theta_pos=sets.theta_pos)


def _epoch_batches(rng: np.random.Generator, n: int, batch_size: int):
    if batch_size == 0 or batch_size >= n:
        return [None]
    perm = rng.permutation(n).astype(np.int64)
    return np.array_split(perm, int(np.ceil(n / batch_size)))


def train(model: GtcModel, log=None) -> TrainReport:
    """Fit in place; restores the best parameters before returning."""
    cfg = model.config
    report = TrainReport()
    state = ad.AdamState(lr=cfg.lr)
    best_snap = model.snapshot()
    bad_epochs = 0
    step = 0
    t0 = time.perf_counter()
    for epoch in range(cfg.max_epochs):
        pre_epoch = model.snapshot()
        batch_rng = ad.rng_for(cfg.seed, epoch, "epoch_batches")
        totals, hops_terms, schema_terms = [], [], []
        for ids in _epoch_batches(batch_rng, model.graph.n_target, cfg.batch_size):
            step += 1
            sets = model.sets if ids is None else _subset_sets(model.sets, ids)
            loss, comps = model.loss(train=True, step=step, batch_ids=ids, sets=sets)
            if not np.isfinite(loss.data).all():
                bad = ad.first_nonfinite(loss)
                detail = f"; first non-finite op {bad.op!r}" if bad is not None else ""
                raise NumericError(f"training diverged at epoch {epoch}{detail}")
            grads = ad.backward(loss)
            adam_loss_grads = {name: grads[p] for name, p in model.params.items()}
            ad.adam_step(model.params, adam_loss_grads, state)
            totals.append(float(loss.data))
            hops_terms.append(comps["hops_anchor"])
            schema_terms.append(comps["schema_anchor"])
        epoch_loss = float(np.mean(totals))
        report.losses.append(epoch_loss)
        report.hops_losses.append(float(np.mean(hops_terms)))
        report.schema_losses.append(float(np.mean(schema_terms)))
        report.epochs_run = epoch + 1
        if log is not None:
            log(epoch, epoch_loss)
        if epoch_loss < report.best_loss:
            report.best_loss = epoch_loss
            report.best_epoch = epoch
            best_snap = pre_epoch
            bad_epochs = 0
        else:
            bad_epochs += 1
            if bad_epochs >= cfg.patience:
                report.stopped_early = True
                break
    model.restore(best_snap)
    report.wall_seconds = time.perf_counter() - t0
    return report


def fit(graph: HeteroGraph, config: TrainConfig, log=None):
    """Convenience wrapper: build, train, return (model, report)."""
    model = GtcModel(graph, config)
    report = train(model, log=log)
    return model, report


def grid_search(graph: HeteroGraph, labels, base: TrainConfig,
                grid: dict, seeds=(0,), n_labels_per_class: int = 20):
    """Exhaustive search over a small hyperparameter grid.

    Each combination is trained per seed and scored by the frozen-embedding
    probe's validation micro-F1 averaged over seeds; without labels the
    negated best training loss stands in. A combination that diverges to a
    non-finite loss is recorded with a nan score and never wins. Returns
    (best config, rows) where rows are dicts with the combination and its
    mean score.
    """
    from itertools import product

    from .evaluation import SplitSpec, linear_probe_accuracy, make_split

    if not grid or any(not list(vals) for vals in grid.values()):
        raise ConfigError("grid must map at least one field to a non-empty value list")
    names = sorted(grid)
    rows = []
    best = (None, -np.inf)
    for combo in product(*(grid[n] for n in names)):
        overrides = dict(zip(names, combo))
        config = replace(base, **overrides).validate()
        scores = []
        diverged = False
        for seed in seeds:
            try:
                model, rep = fit(graph, replace(config, seed=seed))
            except NumericError:
                diverged = True
                break
            if labels is None:
                scores.append(-rep.best_loss)
            else:
                z = model.embed()
                split = make_split(labels, SplitSpec(n_labels_per_class=n_labels_per_class,
                                                     seed=seed))
                scores.append(linear_probe_accuracy(z, labels, split, part="val"))
        mean_score = float("nan") if diverged else float(np.mean(scores))
        rows.append({**overrides, "score": mean_score})
        if np.isfinite(mean_score) and mean_score > best[1]:
            best = (config, mean_score)
    return best[0], rows
