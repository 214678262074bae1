"""Transformer encoder head: forward and hand-derived backward pass.

Post-norm blocks: x + attention, LayerNorm, feed-forward residual,
LayerNorm.  The sequence is then max-pooled over time, dropped out, and
projected to class logits.  Gradients flow through every parameter,
including the learned positional embedding.
"""
from __future__ import annotations

import numpy as np

from ..errors import ValidationError
from .config import TransformerHeadConfig
from .layers import (
    dense_backward,
    dense_forward,
    dropout_backward,
    dropout_forward,
    layer_norm_backward,
    layer_norm_forward,
    max_pool_time_backward,
    max_pool_time_forward,
    relu_backward,
    relu_forward,
    softmax,
    softmax_backward,
)


def _split_heads(x: np.ndarray, num_heads: int) -> np.ndarray:
    """(B, T, D) -> (B, H, T, D // H)."""
    b, t, d = x.shape
    return x.reshape(b, t, num_heads, d // num_heads).transpose(0, 2, 1, 3)


def _merge_heads(x: np.ndarray) -> np.ndarray:
    """(B, H, T, Dh) -> (B, T, H * Dh)."""
    b, h, t, dh = x.shape
    return x.transpose(0, 2, 1, 3).reshape(b, t, h * dh)


def attention_forward(x: np.ndarray, params: dict, layer: int, config: TransformerHeadConfig):
    prefix = f"enc{layer}.attn."
    q, cache_q = dense_forward(x, params[prefix + "w_q"], params[prefix + "b_q"])
    k, cache_k = dense_forward(x, params[prefix + "w_k"], params[prefix + "b_k"])
    v, cache_v = dense_forward(x, params[prefix + "w_v"], params[prefix + "b_v"])
    qh = _split_heads(q, config.num_heads)
    kh = _split_heads(k, config.num_heads)
    vh = _split_heads(v, config.num_heads)
    scale = 1.0 / np.sqrt(config.head_dim)
    scores = (qh @ kh.swapaxes(-1, -2)) * scale
    attn = softmax(scores, axis=-1)
    context = attn @ vh
    merged = _merge_heads(context)
    out, cache_o = dense_forward(merged, params[prefix + "w_o"], params[prefix + "b_o"])
    cache = (cache_q, cache_k, cache_v, qh, kh, vh, attn, scale, cache_o, config.num_heads)
    return out, cache


def attention_backward(dout: np.ndarray, cache, layer: int):
    cache_q, cache_k, cache_v, qh, kh, vh, attn, scale, cache_o, num_heads = cache
    prefix = f"enc{layer}.attn."
    dmerged, dw_o, db_o = dense_backward(dout, cache_o)
    dcontext = _split_heads(dmerged, num_heads)
    dattn = dcontext @ vh.swapaxes(-1, -2)
    dvh = attn.swapaxes(-1, -2) @ dcontext
    dscores = softmax_backward(dattn, attn) * scale
    dqh = dscores @ kh
    dkh = dscores.swapaxes(-1, -2) @ qh
    dq = _merge_heads(dqh)
    dk = _merge_heads(dkh)
    dv = _merge_heads(dvh)
    dx_q, dw_q, db_q = dense_backward(dq, cache_q)
    dx_k, dw_k, db_k = dense_backward(dk, cache_k)
    dx_v, dw_v, db_v = dense_backward(dv, cache_v)
    grads = {
        prefix + "w_q": dw_q,
        prefix + "b_q": db_q,
        prefix + "w_k": dw_k,
        prefix + "b_k": db_k,
        prefix + "w_v": dw_v,
        prefix + "b_v": db_v,
        prefix + "w_o": dw_o,
        prefix + "b_o": db_o,
    }
    return dx_q + dx_k + dx_v, grads


def encoder_block_forward(x: np.ndarray, params: dict, layer: int, config: TransformerHeadConfig):
    prefix = f"enc{layer}."
    attn_out, attn_cache = attention_forward(x, params, layer, config)
    res1 = x + attn_out
    norm1, ln1_cache = layer_norm_forward(
        res1, params[prefix + "ln1.gamma"], params[prefix + "ln1.beta"]
    )
    ff_pre, ff1_cache = dense_forward(
        norm1, params[prefix + "ff.w1"], params[prefix + "ff.b1"]
    )
    ff_act, relu_cache = relu_forward(ff_pre)
    ff_out, ff2_cache = dense_forward(
        ff_act, params[prefix + "ff.w2"], params[prefix + "ff.b2"]
    )
    res2 = norm1 + ff_out
    out, ln2_cache = layer_norm_forward(
        res2, params[prefix + "ln2.gamma"], params[prefix + "ln2.beta"]
    )
    cache = (attn_cache, ln1_cache, ff1_cache, relu_cache, ff2_cache, ln2_cache)
    return out, cache


def encoder_block_backward(dout: np.ndarray, cache, layer: int):
    attn_cache, ln1_cache, ff1_cache, relu_cache, ff2_cache, ln2_cache = cache
    prefix = f"enc{layer}."
    dres2, dg2, dbeta2 = layer_norm_backward(dout, ln2_cache)
    dff_act, dw2, db2 = dense_backward(dres2, ff2_cache)
    dff_pre = relu_backward(dff_act, relu_cache)
    dnorm1_ff, dw1, db1 = dense_backward(dff_pre, ff1_cache)
    dnorm1 = dres2 + dnorm1_ff
    dres1, dg1, dbeta1 = layer_norm_backward(dnorm1, ln1_cache)
    dx_attn, grads = attention_backward(dres1, attn_cache, layer)
    grads.update(
        {
            prefix + "ln1.gamma": dg1,
            prefix + "ln1.beta": dbeta1,
            prefix + "ff.w1": dw1,
            prefix + "ff.b1": db1,
            prefix + "ff.w2": dw2,
            prefix + "ff.b2": db2,
            prefix + "ln2.gamma": dg2,
            prefix + "ln2.beta": dbeta2,
        }
    )
    return dres1 + dx_attn, grads


def transformer_forward(
    x: np.ndarray,
    params: dict,
    config: TransformerHeadConfig,
    rng: np.random.Generator | None = None,
):
    """(B, T, D) features -> (B, num_classes) logits plus backward cache.

    rng enables dropout (training); None runs inference.
    """
    if x.ndim != 3 or x.shape[2] != config.embed_dim:
        raise ValidationError(
            f"expected input (batch, time, {config.embed_dim}), got {x.shape}"
        )
    if x.shape[1] > config.seq_len:
        raise ValidationError(
            f"sequence length {x.shape[1]} exceeds maximum {config.seq_len}"
        )
    h = x + params["pos_embed"][: x.shape[1]]
    block_caches = []
    for layer in range(config.num_layers):
        h, cache = encoder_block_forward(h, params, layer, config)
        block_caches.append(cache)
    pooled, pool_cache = max_pool_time_forward(h)
    dropped, drop_mask = dropout_forward(pooled, config.dropout, rng)
    logits, head_cache = dense_forward(dropped, params["head.w"], params["head.b"])
    cache = (block_caches, pool_cache, drop_mask, head_cache, config)
    return logits, cache


def transformer_backward(dlogits: np.ndarray, cache):
    """Gradient of every parameter given dLoss/dlogits."""
    block_caches, pool_cache, drop_mask, head_cache, config = cache
    ddropped, dhead_w, dhead_b = dense_backward(dlogits, head_cache)
    dpooled = dropout_backward(ddropped, drop_mask)
    dh = max_pool_time_backward(dpooled, pool_cache)
    grads = {"head.w": dhead_w, "head.b": dhead_b}
    for layer in reversed(range(config.num_layers)):
        dh, block_grads = encoder_block_backward(dh, block_caches[layer], layer)
        grads.update(block_grads)
    dpos = np.zeros((config.seq_len, config.embed_dim))
    dpos[: dh.shape[1]] = dh.sum(axis=0)
    grads["pos_embed"] = dpos
    return dh, grads
