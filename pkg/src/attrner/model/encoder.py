"""Post-LN transformer encoder with an explicit backward pass.

Position 0 of every encoded sequence is a learned classification slot; the
batch columns follow from position 1 on.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..corpus import Batch
from ..errors import EncodingError, GradientError
from ..injection import (
    AttributeSet,
    Injection,
    InjectionMode,
    apply_mode,
    attention_bias,
    embed_with_attributes,
    embed_with_attributes_backward,
)
from .layers import (
    attention,
    attention_backward,
    gelu,
    gelu_grad,
    layer_norm,
    layer_norm_backward,
    linear_backward,
    softmax_scores_backward,
)
from .params import Parameters


@dataclass
class LayerCache:
    x: np.ndarray
    q: np.ndarray
    k: np.ndarray
    v: np.ndarray
    weights: np.ndarray
    weights_used: np.ndarray
    attn_drop: np.ndarray | None
    ctx: np.ndarray
    ln1: tuple
    h1: np.ndarray
    ff_pre: np.ndarray
    ff_act_used: np.ndarray
    ff_drop: np.ndarray | None
    ln2: tuple


@dataclass
class ForwardTrace:
    """Activations cached by :func:`encode` for :func:`encode_backward`."""

    config: object
    mode: InjectionMode
    batch: Batch
    inj: Injection
    key_mask: np.ndarray
    base: np.ndarray
    z: np.ndarray | None
    emb_ln: tuple
    layers: list[LayerCache] = field(default_factory=list)
    output: np.ndarray | None = None


def _split(x, h):
    b, t, d = x.shape
    return x.reshape(b, t, h, d // h).transpose(0, 2, 1, 3)


def _merge(x):
    b, h, t, dh = x.shape
    return x.transpose(0, 2, 1, 3).reshape(b, t, h * dh)


def _dropout(x, rate, rng):
    if rate <= 0.0 or rng is None:
        return x, None
    keep = (rng.random(x.shape) >= rate) / (1.0 - rate)
    return x * keep, keep


def _check_ids(batch: Batch, cfg):
    for name, ids, size in (
        ("token", batch.token_ids, cfg.token_vocab),
        ("POS", batch.pos_ids, cfg.pos_vocab),
        ("position", batch.position_ids, cfg.num_positions),
    ):
        if ids.size and (ids.min() < 0 or ids.max() >= size):
            raise EncodingError(f"{name} id outside [0, {size})")


def encode(
    batch: Batch,
    params: Parameters,
    mode: InjectionMode | None = None,
    attrs: AttributeSet | None = None,
    train: bool = False,
    rng: np.random.Generator | None = None,
):
    """Run the encoder; returns ``H`` of shape ``[B, 1 + W, d_model]`` and a trace.

    Dropout is active only when ``train`` is set and ``rng`` is given.
    """
    cfg = params.config
    mode = params.mode if mode is None else mode
    _check_ids(batch, cfg)
    inj = apply_mode(batch, attrs, params, mode)
    b, w = batch.token_ids.shape
    if w + 1 > cfg.num_positions:
        raise EncodingError(f"batch width {w} exceeds the position budget")
    rate = cfg.dropout_rate if train else 0.0

    base = np.empty((b, w + 1, cfg.d_model))
    base[:, 0] = params["cls_emb"] + params["posn_emb"][0]
    base[:, 1:] = params["tok_emb"][batch.token_ids] + params["posn_emb"][batch.position_ids]
    z = None
    if mode.site == "embedding":
        e, z = embed_with_attributes(base, inj, params)
    elif mode.site == "attention":
        e = base
        if inj.label_vec is not None:
            e = e + inj.label_vec[:, None, :]
        if inj.pos_vec is not None:
            e = e + inj.pos_vec
    else:
        e = base
    x, emb_ln = layer_norm(e, params["emb_ln_g"], params["emb_ln_b"])

    key_mask = np.concatenate([np.ones((b, 1), dtype=bool), batch.attention_mask.astype(bool)], axis=1)
    key_mask4 = key_mask[:, None, None, :]
    trace = ForwardTrace(cfg, mode, batch, inj, key_mask, base, z, emb_ln)
    h = cfg.n_heads
    for layer in range(cfg.n_layers):
        p = f"layer{layer}."
        q = x @ params[p + "q_w"] + params[p + "q_b"]
        k = x @ params[p + "k_w"] + params[p + "k_b"]
        v = x @ params[p + "v_w"] + params[p + "v_b"]
        if mode.site == "attention":
            qb, kb = attention_bias(inj, params, layer)
            if qb is not None:
                q = q + qb
                k = k + kb
        qh, kh, vh = _split(q, h), _split(k, h), _split(v, h)
        _, wts = attention(qh, kh, vh, key_mask4)
        wts_used, attn_drop = _dropout(wts, rate, rng)
        ctx = _merge(wts_used @ vh)
        o = ctx @ params[p + "o_w"] + params[p + "o_b"]
        h1, ln1 = layer_norm(x + o, params[p + "ln1_g"], params[p + "ln1_b"])
        ff_pre = h1 @ params[p + "ff1_w"] + params[p + "ff1_b"]
        ff_act, ff_drop = _dropout(gelu(ff_pre), rate, rng)
        f2 = ff_act @ params[p + "ff2_w"] + params[p + "ff2_b"]
        out, ln2 = layer_norm(h1 + f2, params[p + "ln2_g"], params[p + "ln2_b"])
        trace.layers.append(
            LayerCache(x, qh, kh, vh, wts, wts_used, attn_drop, ctx, ln1, h1, ff_pre, ff_act, ff_drop, ln2)
        )
        x = out
    trace.output = x
    return x, trace


def encode_backward(dH: np.ndarray, trace: ForwardTrace, params: Parameters, grads=None):
    """Accumulate encoder gradients for upstream ``dH`` into ``grads``."""
    cfg = params.config
    if trace.config != cfg:
        raise GradientError("trace was produced under a different configuration")
    if dH.shape != trace.output.shape:
        raise GradientError(f"upstream gradient shape {dH.shape} != output {trace.output.shape}")
    if grads is None:
        grads = params.zeros_like()
    mode, inj = trace.mode, trace.inj
    h = cfg.n_heads
    scale = 1.0 / np.sqrt(cfg.d_head)
    dx = dH
    d_label_vec = np.zeros_like(inj.label_vec) if inj.label_vec is not None else None
    d_pos_vec = np.zeros_like(inj.pos_vec) if inj.pos_vec is not None else None

    for layer in reversed(range(cfg.n_layers)):
        p = f"layer{layer}."
        c = trace.layers[layer]
        dr2, dg, db = layer_norm_backward(dx, c.ln2, params[p + "ln2_g"])
        grads[p + "ln2_g"] += dg
        grads[p + "ln2_b"] += db
        dh1 = dr2.copy()
        d_act = linear_backward(dr2, c.ff_act_used, params[p + "ff2_w"], grads, p + "ff2_w", p + "ff2_b")
        if c.ff_drop is not None:
            d_act = d_act * c.ff_drop
        d_pre = d_act * gelu_grad(c.ff_pre)
        dh1 += linear_backward(d_pre, c.h1, params[p + "ff1_w"], grads, p + "ff1_w", p + "ff1_b")
        dr1, dg, db = layer_norm_backward(dh1, c.ln1, params[p + "ln1_g"])
        grads[p + "ln1_g"] += dg
        grads[p + "ln1_b"] += db
        dx = dr1.copy()
        dctx = linear_backward(dr1, c.ctx, params[p + "o_w"], grads, p + "o_w", p + "o_b")
        dw_used, dvh = attention_backward(_split(dctx, h), c.q, c.k, c.v, c.weights, c.weights_used)
        if c.attn_drop is not None:
            dw_used = dw_used * c.attn_drop
        ds = softmax_scores_backward(dw_used, c.weights, scale)
        dqh = ds @ c.k
        dkh = np.swapaxes(ds, -1, -2) @ c.q
        dq, dk, dv = _merge(dqh), _merge(dkh), _merge(dvh)
        dx += linear_backward(dq, c.x, params[p + "q_w"], grads, p + "q_w", p + "q_b")
        dx += linear_backward(dk, c.x, params[p + "k_w"], grads, p + "k_w", p + "k_b")
        dx += linear_backward(dv, c.x, params[p + "v_w"], grads, p + "v_w", p + "v_b")
        if mode.site == "attention":
            if inj.label_vec is not None:
                dq_s, dk_s = dq.sum(axis=1), dk.sum(axis=1)
                grads[p + "ws_q"] += inj.label_vec.T @ dq_s
                grads[p + "ws_k"] += inj.label_vec.T @ dk_s
                d_label_vec += dq_s @ params[p + "ws_q"].T + dk_s @ params[p + "ws_k"].T
            if inj.pos_vec is not None:
                d = cfg.d_model
                pv = inj.pos_vec.reshape(-1, d)
                grads[p + "wp_q"] += pv.T @ dq.reshape(-1, d)
                grads[p + "wp_k"] += pv.T @ dk.reshape(-1, d)
                d_pos_vec += dq @ params[p + "wp_q"].T + dk @ params[p + "wp_k"].T

    de, dg, db = layer_norm_backward(dx, trace.emb_ln, params["emb_ln_g"])
    grads["emb_ln_g"] += dg
    grads["emb_ln_b"] += db
    if mode.site == "embedding":
        dbase, dlab, dpos = embed_with_attributes_backward(de, trace.z, params, grads)
        if d_label_vec is not None:
            d_label_vec += dlab
        if d_pos_vec is not None:
            d_pos_vec += dpos
    else:
        dbase = de
        if mode.site == "attention":
            if d_label_vec is not None:
                d_label_vec += de.sum(axis=1)
            if d_pos_vec is not None:
                d_pos_vec += de

    batch = trace.batch
    grads["cls_emb"] += dbase[:, 0].sum(axis=0)
    grads["posn_emb"][0] += dbase[:, 0].sum(axis=0)
    np.add.at(grads["posn_emb"], batch.position_ids, dbase[:, 1:])
    np.add.at(grads["tok_emb"], batch.token_ids, dbase[:, 1:])
    if d_label_vec is not None:
        np.add.at(grads["label_emb"], inj.label_ids, d_label_vec)
    if d_pos_vec is not None:
        np.add.at(grads["posattr_emb"], inj.pos_full, d_pos_vec * inj.pos_keep)
    return grads
