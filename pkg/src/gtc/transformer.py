"""Hops view: transformer over hop tokens with two-level attention readout.

Per metapath, the hop token sequence [x^0 .. x^K] is projected to the
encoder width and run through pre-norm transformer blocks (self-attention
then feed-forward, each behind layer norm with a residual). Token-level
attention then scores each hop token against the hop-0 token and adds the
weighted hops back onto it; semantic attention finally mixes the per-path
results into one embedding per node, with its own weights per metapath.

Forward functions accept an optional ``probes`` list; when given, every
attention distribution produced (self-attention rows, token weights,
semantic weights) is appended to it as a plain array for inspection.
"""

import numpy as np

from . import autodiff as ad
from .errors import ConfigError


def _stack_tokens(hops: list) -> "ad.Tensor":
    """List of (n, d) tensors -> (n, S, d) sequence tensor."""
    n, d = hops[0].shape
    return ad.concat([ad.reshape(h, (n, 1, d)) for h in hops], axis=1)


def init_encoder(rng: np.random.Generator, path_names, d_in: int, d_model: int,
                 n_layers: int, n_heads: int, ffn_hidden: int, d_attn: int,
                 shared: bool = False, dtype=np.float32) -> dict:
    """Weights for the per-path encoders and attention readouts.

    Encoder blocks are per metapath by default (``shared`` collapses them to
    one set); the token-level score vector and the semantic-level (W, delta)
    pair are always per metapath.
    """
    if d_model % n_heads:
        raise ConfigError(f"model width {d_model} not divisible by {n_heads} heads")
    if n_layers < 1:
        raise ConfigError(f"need at least one encoder layer, got {n_layers}")
    from .gnn import glorot, zeros_param

    def ones_param(shape):
        return ad.parameter(np.ones(shape, dtype=dtype))

    params = {}
    prefixes = ["tf.shared"] if shared else [f"tf.{p}" for p in sorted(path_names)]
    for pre in prefixes:
        params[f"{pre}.in.w"] = glorot(rng, d_in, d_model, dtype)
        params[f"{pre}.in.b"] = zeros_param((d_model,), dtype)
        for layer in range(n_layers):
            lp = f"{pre}.{layer}"
            params[f"{lp}.ln1.g"] = ones_param((d_model,))
            params[f"{lp}.ln1.b"] = zeros_param((d_model,), dtype)
            for which in ("wq", "wk", "wv", "wo"):
                params[f"{lp}.attn.{which}"] = glorot(rng, d_model, d_model, dtype)
            for which in ("bq", "bk", "bv", "bo"):
                params[f"{lp}.attn.{which}"] = zeros_param((d_model,), dtype)
            params[f"{lp}.ln2.g"] = ones_param((d_model,))
            params[f"{lp}.ln2.b"] = zeros_param((d_model,), dtype)
            params[f"{lp}.ffn.w1"] = glorot(rng, d_model, ffn_hidden, dtype)
            params[f"{lp}.ffn.b1"] = zeros_param((ffn_hidden,), dtype)
            params[f"{lp}.ffn.w2"] = glorot(rng, ffn_hidden, d_model, dtype)
            params[f"{lp}.ffn.b2"] = zeros_param((d_model,), dtype)
    for name in sorted(path_names):
        params[f"tokattn.{name}.w"] = glorot(rng, 2 * d_model, 1, dtype)
        params[f"sem.{name}.w"] = glorot(rng, d_model, d_attn, dtype)
        params[f"sem.{name}.delta"] = glorot(rng, d_attn, 1, dtype)
    return params


def multi_head_attention(z: "ad.Tensor", params: dict, prefix: str, n_heads: int,
                         drop=ad.NO_DROPOUT, tag: str = "attn", probes=None) -> "ad.Tensor":
    """Scaled dot-product self-attention over axis 1 of a (n, S, d) tensor."""
    n, s, d = z.shape
    if d % n_heads:
        raise ConfigError(f"model width {d} not divisible by {n_heads} heads")
    dk = d // n_heads

    def split_heads(t):
        return ad.swapaxes(ad.reshape(t, (n, s, n_heads, dk)), 1, 2)

    q = split_heads(ad.add(ad.matmul(z, params[f"{prefix}.attn.wq"]), params[f"{prefix}.attn.bq"]))
    k = split_heads(ad.add(ad.matmul(z, params[f"{prefix}.attn.wk"]), params[f"{prefix}.attn.bk"]))
    v = split_heads(ad.add(ad.matmul(z, params[f"{prefix}.attn.wv"]), params[f"{prefix}.attn.bv"]))
    scores = ad.scale(ad.matmul(q, ad.swapaxes(k, -1, -2)), 1.0 / np.sqrt(dk))
    weights = ad.row_softmax(scores)
    if probes is not None:
        probes.append(weights.data.reshape(-1, s))
    weights = drop.apply(weights, f"{tag}.weights")
    mixed = ad.reshape(ad.swapaxes(ad.matmul(weights, v), 1, 2), (n, s, d))
    return ad.add(ad.matmul(mixed, params[f"{prefix}.attn.wo"]), params[f"{prefix}.attn.bo"])


def encoder_block(z: "ad.Tensor", params: dict, prefix: str, n_heads: int,
                  drop=ad.NO_DROPOUT, tag: str = "block", probes=None) -> "ad.Tensor":
    """Pre-norm block: z + MSA(LN(z)), then + FFN(LN(.))."""
    normed = ad.layer_norm(z, params[f"{prefix}.ln1.g"], params[f"{prefix}.ln1.b"])
    z = ad.add(z, multi_head_attention(normed, params, prefix, n_heads, drop, tag, probes))
    normed = ad.layer_norm(z, params[f"{prefix}.ln2.g"], params[f"{prefix}.ln2.b"])
    hidden = ad.elu(ad.add(ad.matmul(normed, params[f"{prefix}.ffn.w1"]), params[f"{prefix}.ffn.b1"]))
    hidden = drop.apply(hidden, f"{tag}.ffn")
    return ad.add(z, ad.add(ad.matmul(hidden, params[f"{prefix}.ffn.w2"]), params[f"{prefix}.ffn.b2"]))


def encoder_forward(hops: list, params: dict, prefix: str, n_layers: int, n_heads: int,
                    drop=ad.NO_DROPOUT, probes=None) -> "ad.Tensor":
    """Project hop tokens to model width and run the block stack: (n, S, d_model)."""
    z = _stack_tokens([ad.as_tensor(h) for h in hops])
    z = ad.add(ad.matmul(z, params[f"{prefix}.in.w"]), params[f"{prefix}.in.b"])
    for layer in range(n_layers):
        z = encoder_block(z, params, f"{prefix}.{layer}", n_heads, drop,
                          f"{prefix}.{layer}", probes)
    return z


def token_attention(z: "ad.Tensor", w: "ad.Tensor", probes=None):
    """Fuse hop tokens into the hop-0 token.

    Each hop k >= 1 is scored by a linear map of [token_0 ; token_k]; the
    scores softmax over hops (hop 0 stays outside the normalization) and
    the weighted hop tokens are added onto token 0. Returns (fused (n, d),
    weights (n, K)). With a single token the fused output is that token.
    """
    n, s, d = z.shape
    z0 = ad.reshape(ad.narrow(z, 1, 0, 1), (n, d))
    if s == 1:
        return z0, ad.Tensor(np.zeros((n, 0), dtype=z.dtype))
    scores = []
    hop_tokens = []
    for k in range(1, s):
        zk = ad.reshape(ad.narrow(z, 1, k, 1), (n, d))
        hop_tokens.append(zk)
        scores.append(ad.matmul(ad.concat([z0, zk], axis=1), w))
    alphas = ad.row_softmax(ad.concat(scores, axis=1))
    if probes is not None:
        probes.append(alphas.data)
    fused = z0
    for k, zk in enumerate(hop_tokens):
        fused = ad.add(fused, ad.mul(ad.narrow(alphas, 1, k, 1), zk))
    return fused, alphas


def semantic_attention(by_path: dict, params: dict, mean_pooled: bool = False,
                       probes=None):
    """Mix per-metapath embeddings with per-node learned weights.

    Each path's logit for node i is delta_phi . tanh(W_phi z_phi_i), one
    scalar per node per path, softmaxed across paths per node. The
    ``mean_pooled`` compatibility mode averages logits over nodes first so
    every node shares one mixture. Returns (fused (n, d), weights (n, P)).
    """
    names = sorted(by_path)
    cols = []
    for name in names:
        act = ad.tanh(ad.matmul(by_path[name], params[f"sem.{name}.w"]))
        logit = ad.matmul(act, params[f"sem.{name}.delta"])
        if mean_pooled:
            n = by_path[name].shape[0]
            pooled = ad.reshape(ad.reduce_mean(logit, axis=0), (1, 1))
            logit = ad.mul(pooled, ad.Tensor(np.ones((n, 1), dtype=logit.dtype)))
        cols.append(logit)
    alphas = ad.row_softmax(ad.concat(cols, axis=1))
    if probes is not None:
        probes.append(alphas.data)
    fused = None
    for i, name in enumerate(names):
        term = ad.mul(ad.narrow(alphas, 1, i, 1), by_path[name])
        fused = term if fused is None else ad.add(fused, term)
    return fused, alphas


def hops_view_forward(token_tensors: dict, params: dict, n_layers: int, n_heads: int,
                      shared: bool = False, drop=ad.NO_DROPOUT, mean_pooled: bool = False,
                      probes=None):
    """Full hops-view pass: {path: [hop tensors]} -> (n, d_model) embedding.

    Returns (embedding, diagnostics); diagnostics carries the per-path
    token attention weights and the semantic weight matrix.
    """
    fused_by_path = {}
    token_weights = {}
    for name in sorted(token_tensors):
        prefix = "tf.shared" if shared else f"tf.{name}"
        z = encoder_forward(token_tensors[name], params, prefix, n_layers, n_heads,
                            drop, probes)
        fused_by_path[name], token_weights[name] = token_attention(
            z, params[f"tokattn.{name}.w"], probes)
    fused, sem_weights = semantic_attention(fused_by_path, params, mean_pooled, probes)
    return fused, {"token_weights": token_weights, "semantic_weights": sem_weights,
                   "per_path": fused_by_path}
