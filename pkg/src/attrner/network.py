"""Full model: encoder + heads + losses, with the matching backward pass."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .corpus import Batch
from .crf import viterbi
from .errors import ConfigError
from .heads import (
    binary_cross_entropy,
    check_head,
    crf_batch_nll,
    crf_params,
    entailment_logit,
    ner_head,
    ner_head_backward,
    sentence_cross_entropy,
    sentence_head,
    sentence_head_backward,
    token_cross_entropy,
)
from .injection import AttributeSet, InjectionMode
from .model.encoder import ForwardTrace, encode, encode_backward
from .model.layers import linear_backward
from .model.params import Parameters
from .tagging import repair_bio

RUN_KINDS = ("ner-only", "pipeline", "joint")


@dataclass
class LossTrace:
    enc: ForwardTrace
    H: np.ndarray
    batch_size: int
    head_kind: str
    d_em: np.ndarray | None = None
    d_trans: np.ndarray | None = None
    d_start: np.ndarray | None = None
    d_end: np.ndarray | None = None
    d_sent: np.ndarray | None = None
    sentence_weight: float | None = None
    d_ent: np.ndarray | None = None
    emissions: np.ndarray | None = None
    sentence_logits: np.ndarray | None = None
    ner_loss: float = 0.0
    sentence_loss: float = 0.0


def forward_loss(
    params: Parameters,
    batch: Batch,
    head_kind: str = "crf",
    sentence_weight: float | None = None,
    attrs: AttributeSet | None = None,
    mode: InjectionMode | None = None,
    constrained: bool = True,
    train: bool = False,
    rng: np.random.Generator | None = None,
):
    """Mean per-sentence NER loss, plus ``sentence_weight`` x sentence CE in joint runs.

    ``sentence_weight=None`` skips the sentence head entirely (NER-only);
    ``0.0`` computes it but leaves the loss bit-identical to NER-only.
    """
    check_head(head_kind)
    if batch.gold_tag_ids is None:
        raise ConfigError("forward_loss needs gold tags")
    H, enc = encode(batch, params, mode, attrs, train=train, rng=rng)
    b = batch.size
    em = ner_head(H, enc.inj, params)
    tr = LossTrace(enc, H, b, head_kind, emissions=em)
    if head_kind == "crf":
        c = crf_params(params, constrained)
        losses, d_em, tr.d_trans, tr.d_start, tr.d_end = crf_batch_nll(
            em, batch.gold_tag_ids, batch.tag_mask, c
        )
    else:
        losses, d_em = token_cross_entropy(em, batch.gold_tag_ids, batch.tag_mask)
    tr.d_em = d_em
    tr.ner_loss = losses.sum() / b
    loss = tr.ner_loss
    if sentence_weight is not None:
        logits = sentence_head(H[:, 0], params)
        s_losses, tr.d_sent = sentence_cross_entropy(logits, batch.sentence_label_ids)
        tr.sentence_logits = logits
        tr.sentence_weight = float(sentence_weight)
        tr.sentence_loss = s_losses.sum() / b
        loss = loss + tr.sentence_weight * tr.sentence_loss
    return float(loss), tr


def backward(trace: LossTrace, params: Parameters, loss_grad: float = 1.0):
    """Gradients of ``loss_grad * loss`` for every tensor in ``params``."""
    grads = params.zeros_like()
    scale = loss_grad / trace.batch_size
    dH = np.zeros_like(trace.H)
    if trace.d_em is not None:
        dH += ner_head_backward(trace.d_em * scale, trace.H, trace.enc.inj, params, grads)
    if trace.d_trans is not None:
        grads["crf_trans"] += trace.d_trans * scale
        grads["crf_start"] += trace.d_start * scale
        grads["crf_end"] += trace.d_end * scale
    if trace.d_sent is not None:
        dH[:, 0] += sentence_head_backward(
            trace.d_sent * (scale * trace.sentence_weight), trace.H[:, 0], params, grads
        )
    if trace.d_ent is not None:
        dH[:, 0] += linear_backward(
            (trace.d_ent * scale)[:, None], trace.H[:, 0], params["ent_w"], grads, "ent_w", "ent_b"
        )
    encode_backward(dH, trace.enc, params, grads)
    return grads


def entailment_loss(params: Parameters, batch: Batch, targets, train=False, rng=None):
    """Mean BCE of the entailment logit read from the classification slot."""
    H, enc = encode(batch, params, InjectionMode(), train=train, rng=rng)
    logits = entailment_logit(H[:, 0], params)
    losses, d = binary_cross_entropy(logits, targets)
    tr = LossTrace(enc, H, batch.size, "entailment", d_ent=d)
    return float(losses.sum() / batch.size), tr


def entailment_scores(params: Parameters, batch: Batch) -> np.ndarray:
    H, _ = encode(batch, params, InjectionMode())
    return entailment_logit(H[:, 0], params)


def sentence_emissions(params: Parameters, batch: Batch, attrs=None, mode=None) -> list[np.ndarray]:
    """Per-sentence ``[n_i, K]`` emissions over the tagged columns."""
    H, enc = encode(batch, params, mode, attrs)
    em = ner_head(H, enc.inj, params)
    return [em[i, np.flatnonzero(batch.tag_mask[i])] for i in range(batch.size)]


def predict_sentence_labels(params: Parameters, batch: Batch, mode=None) -> np.ndarray:
    H, _ = encode(batch, params, mode)
    return np.argmax(sentence_head(H[:, 0], params), axis=-1)


def decode(em: np.ndarray, params: Parameters, head_kind: str, constrained: bool = True,
           scheme=None) -> list[int]:
    """CRF Viterbi path, or per-token argmax followed by BIO repair."""
    if head_kind == "crf":
        return viterbi(em, crf_params(params, constrained))[0]
    path = np.argmax(em, axis=-1).tolist()
    return repair_bio(path, scheme) if scheme is not None else path


def predict_tags(params: Parameters, batch: Batch, head_kind: str = "crf", attrs=None,
                 mode=None, constrained: bool = True, scheme=None) -> list[list[int]]:
    return [decode(em, params, head_kind, constrained, scheme)
            for em in sentence_emissions(params, batch, attrs, mode)]
