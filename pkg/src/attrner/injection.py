"""Attribute injection sites: text, embedding, attention bias, classifier bias.

Every site reads the same two attribute tables, ``label_emb`` (one row per
sentence label) and ``posattr_emb`` (one row per POS id). Each site reduces
exactly to the plain encoder when its attribute weights are zero.
"""
from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .corpus import PAD_ID, Batch, inject_text
from .errors import ConfigError, EncodingError

SITES = ("none", "text", "embedding", "attention", "classifier")

__all__ = [
    "SITES",
    "AttributeSet",
    "InjectionMode",
    "Injection",
    "apply_mode",
    "attention_bias",
    "classifier_bias",
    "embed_with_attributes",
    "embed_with_attributes_backward",
    "inject_text",
    "mute_text_attribute",
]


@dataclass(frozen=True)
class InjectionMode:
    site: str = "none"
    use_label: bool = False
    use_pos: bool = False

    def __post_init__(self):
        if self.site not in SITES:
            raise ConfigError(f"unknown injection site {self.site!r}; expected one of {SITES}")
        if self.site == "none":
            if self.use_label or self.use_pos:
                raise ConfigError("mode 'none' takes no attribute channels")
        elif not (self.use_label or self.use_pos):
            raise ConfigError(f"mode {self.site!r} needs at least one of label/pos")
        if self.site == "text" and (self.use_pos or not self.use_label):
            raise ConfigError("text injection carries the sentence label only (channels=label)")

    @classmethod
    def parse(cls, site: str, channels: str | None = None) -> "InjectionMode":
        if site == "none":
            return cls()
        chans = {c.strip() for c in ("label" if channels is None else channels).split(",") if c.strip()}
        unknown = chans - {"label", "pos"}
        if unknown:
            raise ConfigError(f"unknown channel(s) {sorted(unknown)}")
        return cls(site, "label" in chans, "pos" in chans)

    @property
    def text(self) -> bool:
        return self.site == "text"

    @property
    def channels(self) -> str:
        return ",".join(c for c, on in (("label", self.use_label), ("pos", self.use_pos)) if on) or "-"

    def __str__(self):
        return self.site if self.site == "none" else f"{self.site}(+{self.channels})"


@dataclass
class AttributeSet:
    """Per-batch attributes: sentence label ids and POS ids (``source`` is gold or predicted)."""

    sentence_label_ids: np.ndarray
    pos_ids: np.ndarray
    source: str = "gold"

    @classmethod
    def from_batch(cls, batch: Batch, source: str = "gold") -> "AttributeSet":
        return cls(batch.sentence_label_ids, batch.pos_ids, source)


@dataclass
class Injection:
    """Attribute vectors prepared for one forward pass.

    ``label_vec`` is ``[B, d]``; ``pos_vec`` is ``[B, T, d]`` over encoder
    positions (classification slot included, zero wherever the POS id is
    padding).
    """

    mode: InjectionMode
    label_ids: np.ndarray | None = None
    pos_full: np.ndarray | None = None
    label_vec: np.ndarray | None = None
    pos_vec: np.ndarray | None = None
    pos_keep: np.ndarray | None = None


def apply_mode(batch: Batch, attrs: AttributeSet | None, params, mode: InjectionMode) -> Injection:
    """Validate ``batch`` against ``mode`` and look up attribute vectors."""
    if mode.text != (batch.tag_offset == 1):
        raise ConfigError(
            f"batch was encoded {'with' if batch.tag_offset else 'without'} the text pseudo-token "
            f"but mode is {mode}"
        )
    inj = Injection(mode)
    if mode.site in ("none", "text"):
        return inj
    if attrs is None:
        attrs = AttributeSet.from_batch(batch)
    if mode.use_label:
        lab = np.asarray(attrs.sentence_label_ids)
        n_lab = params["label_emb"].shape[0]
        if lab.min() < 0 or lab.max() >= n_lab:
            raise EncodingError("sentence label id missing or out of range")
        inj.label_ids = lab
        inj.label_vec = params["label_emb"][lab]
    if mode.use_pos:
        pos = np.asarray(attrs.pos_ids)
        n_pos = params["posattr_emb"].shape[0]
        if pos.min() < 0 or pos.max() >= n_pos:
            raise EncodingError("POS id out of range")
        b = pos.shape[0]
        full = np.concatenate([np.full((b, 1), PAD_ID, dtype=pos.dtype), pos], axis=1)
        keep = (full != PAD_ID)[..., None].astype(np.float64)
        inj.pos_full = full
        inj.pos_keep = keep
        inj.pos_vec = params["posattr_emb"][full] * keep
    return inj


def embed_with_attributes(base: np.ndarray, inj: Injection, params):
    """Concatenate token and attribute embeddings, project back to ``d_model``.

    Disabled channels feed a zero block. Returns the projected embeddings and
    the concatenated input needed for the backward pass.
    """
    b, t, d = base.shape
    lab = np.zeros((b, t, d)) if inj.label_vec is None else np.broadcast_to(inj.label_vec[:, None, :], (b, t, d))
    pos = np.zeros((b, t, d)) if inj.pos_vec is None else inj.pos_vec
    z = np.concatenate([base, lab, pos], axis=-1)
    return z @ params["proj_w"] + params["proj_b"], z


def embed_with_attributes_backward(de, z, params, grads):
    """Returns gradients w.r.t. (base, label_vec [B, d], pos_vec [B, T, d])."""
    d = de.shape[-1]
    grads["proj_w"] += z.reshape(-1, z.shape[-1]).T @ de.reshape(-1, d)
    grads["proj_b"] += de.sum(axis=(0, 1))
    dz = de @ params["proj_w"].T
    return dz[..., :d], dz[..., d:2 * d].sum(axis=1), dz[..., 2 * d:]


def attention_bias(inj: Injection, params, layer: int, head: int | None = None, n_heads: int = 1):
    """Attribute part of the query/key biases, ``W_s e(s) + W_p e(p_i)``.

    Returns ``(q_bias, k_bias)`` of shape ``[B, T, d]`` (``[B, 1, d]`` when
    only the label channel is on), or the ``d/n_heads`` slice belonging to
    ``head``. ``(None, None)`` when neither channel is enabled.
    """
    q = k = None
    pre = f"layer{layer}."
    if inj.label_vec is not None:
        q = (inj.label_vec @ params[pre + "ws_q"])[:, None, :]
        k = (inj.label_vec @ params[pre + "ws_k"])[:, None, :]
    if inj.pos_vec is not None:
        qp = inj.pos_vec @ params[pre + "wp_q"]
        kp = inj.pos_vec @ params[pre + "wp_k"]
        q = qp if q is None else q + qp
        k = kp if k is None else k + kp
    if q is None:
        return None, None
    if head is not None:
        dh = q.shape[-1] // n_heads
        sl = slice(head * dh, (head + 1) * dh)
        return q[..., sl], k[..., sl]
    return q, k


def classifier_bias(inj: Injection, params):
    """Additive logit shift ``W_s e(s) + W_p e(p_i)`` over token columns.

    Shape ``[B, 1, K]`` (label only, shared across positions) or ``[B, W, K]``.
    """
    out = None
    if inj.label_vec is not None:
        out = (inj.label_vec @ params["cls_ws"])[:, None, :]
    if inj.pos_vec is not None:
        p = inj.pos_vec[:, 1:] @ params["cls_wp"]
        out = p if out is None else out + p
    return out


def mute_text_attribute(batch: Batch) -> Batch:
    """Hide the text-mode pseudo-token from attention.

    The text site has no attribute weights to zero; its off switch is the
    attention mask. Token positions are unaffected, so a muted text batch
    encodes its tokens exactly like a plain one.
    """
    if batch.tag_offset != 1:
        raise ConfigError("only text-mode batches carry a pseudo-token")
    mask = batch.attention_mask.copy()
    mask[:, 0] = 0
    return replace(batch, attention_mask=mask)
