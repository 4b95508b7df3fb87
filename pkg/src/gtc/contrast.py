"""Cross-view contrastive objective over the two node embeddings.

Both view embeddings pass through their own two-layer projection head into
a shared space and are L2-normalized, so similarity is cosine. For each
anchor node the other view supplies candidates: structure-mined positives
in the numerator, everything in the denominator, scaled by a temperature.
The two anchor directions are blended by a balance weight.
"""

import warnings

import numpy as np

from . import autodiff as ad
from .errors import ConfigError, NumericError, ShapeError
from .gnn import glorot, zeros_param
from .graph import ContrastiveSets


def init_contrast_heads(rng: np.random.Generator, d_schema: int, d_hops: int,
                        d_contrast: int, dtype=np.float32) -> dict:
    """One Linear-ELU-Linear head per view, both ending at ``d_contrast``."""
    params = {}
    for view, d_in in (("schema", d_schema), ("hops", d_hops)):
        params[f"head.{view}.w1"] = glorot(rng, d_in, d_contrast, dtype)
        params[f"head.{view}.b1"] = zeros_param((d_contrast,), dtype)
        params[f"head.{view}.w2"] = glorot(rng, d_contrast, d_contrast, dtype)
        params[f"head.{view}.b2"] = zeros_param((d_contrast,), dtype)
    return params


def project_to_contrast_space(z: "ad.Tensor", params: dict | None, view: str,
                              enabled: bool = True, d_contrast: int | None = None) -> "ad.Tensor":
    """Map a view embedding into the shared contrast space.

    One hidden affine layer with ELU, then an affine output. With the head
    disabled the embedding passes through unchanged, which only works when
    it already has the contrast width.
    """
    if view not in ("schema", "hops"):
        raise ValueError(f"view must be 'schema' or 'hops', got {view!r}")
    if not enabled:
        if d_contrast is not None and z.shape[-1] != d_contrast:
            raise ConfigError(
                f"projection head disabled but {view} width {z.shape[-1]} != {d_contrast}"
            )
        return ad.as_tensor(z)
    h = ad.elu(ad.add(ad.matmul(z, params[f"head.{view}.w1"]), params[f"head.{view}.b1"]))
    return ad.add(ad.matmul(h, params[f"head.{view}.w2"]), params[f"head.{view}.b2"])


def _checked_normalize(z: "ad.Tensor", view: str) -> "ad.Tensor":
    norms = np.sqrt((z.data * z.data).sum(axis=1))
    bad = np.flatnonzero(norms < 1e-12)
    if len(bad):
        raise NumericError(f"{view} view embedding of node {int(bad[0])} has zero norm")
    return ad.l2_normalize_rows(z)


def _anchor_loss(sim: "ad.Tensor", pos_mask: np.ndarray) -> "ad.Tensor":
    """Mean over rows of -log(sum_pos exp / sum_all exp).

    The per-row max is subtracted as a constant before exponentiation; it
    cancels exactly between numerator and denominator, so gradients are
    unchanged.
    """
    shift = ad.Tensor(sim.data.max(axis=1, keepdims=True))
    e = ad.exp(ad.add(sim, ad.scale(shift, -1.0)))
    num = ad.reduce_sum(ad.mul(e, ad.Tensor(pos_mask.astype(sim.dtype))), axis=1)
    den = ad.reduce_sum(e, axis=1)
    return ad.reduce_mean(ad.add(ad.log(den), ad.scale(ad.log(num), -1.0)))


def contrastive_loss(z_schema: "ad.Tensor", z_hops: "ad.Tensor", sets: ContrastiveSets,
                     tau: float, lam: float, params: dict | None = None):
    """Blended two-direction contrastive loss.

    When ``params`` is given the raw view embeddings are first pushed
    through their projection heads. The balance weight multiplies the
    schema-anchored direction; its complement the hops-anchored one.
    Returns (loss Tensor, components) with components holding the two
    anchor-direction means as floats.

    A node whose positives cover every candidate has no negatives; it
    contributes exactly zero and a warning is emitted once per call.
    """
    if not 0.0 < tau:
        raise ValueError(f"temperature must be positive, got {tau}")
    if not 0.0 <= lam <= 1.0:
        raise ValueError(f"balance weight must be in [0, 1], got {lam}")
    if params is not None:
        z_schema = project_to_contrast_space(z_schema, params, "schema")
        z_hops = project_to_contrast_space(z_hops, params, "hops")
    if z_schema.shape != z_hops.shape:
        raise ShapeError(f"view shapes differ: {z_schema.shape} vs {z_hops.shape}")
    n = z_schema.shape[0]
    if sets.n_nodes != n:
        raise ShapeError(f"positive sets cover {sets.n_nodes} nodes, embeddings have {n}")

    saturated = [i for i, pos in enumerate(sets.positives) if len(pos) == n]
    if saturated:
        warnings.warn(
            f"{len(saturated)} node(s) have no negatives (first: {saturated[0]}); "
            "their loss terms are zero",
            RuntimeWarning,
            stacklevel=2,
        )

    u = _checked_normalize(z_hops, "hops")
    v = _checked_normalize(z_schema, "schema")
    sim = ad.scale(ad.matmul(u, ad.transpose(v)), 1.0 / tau)
    mask = sets.positive_mask()
    loss_hops = _anchor_loss(sim, mask)
    loss_schema = _anchor_loss(ad.transpose(sim), mask)
    total = ad.add(ad.scale(loss_schema, lam), ad.scale(loss_hops, 1.0 - lam))
    components = {
        "hops_anchor": float(loss_hops.data),
        "schema_anchor": float(loss_schema.data),
    }
    return total, components
