"""Output heads: token NER head, sentence-label head, entailment classifier."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .corpus import NO_LABEL, Sentence
from .crf import CrfParams, bio_constraint_mask, crf_nll
from .errors import ConfigError, TemplateError
from .injection import Injection, classifier_bias
from .model.layers import linear_backward, log_softmax, softmax

HEAD_KINDS = ("softmax", "crf")
SEP, EOS = "[SEP]", "[EOS]"
ENTAIL, NOT_ENTAIL = "entail", "not-entail"


def check_head(head_kind: str):
    if head_kind not in HEAD_KINDS:
        raise ConfigError(f"unknown head kind {head_kind!r}; expected one of {HEAD_KINDS}")


def crf_params(params, constrained: bool = True, scheme=None) -> CrfParams:
    mask = None
    if constrained:
        mask = bio_constraint_mask(scheme if scheme is not None else params.config.tag_vocab)
    return CrfParams(params["crf_trans"], params["crf_start"], params["crf_end"], mask)


# ---------------------------------------------------------------- NER head

def ner_head(H, inj: Injection, params):
    """Per-column tag logits ``[B, W, K]`` from the token positions of ``H``."""
    em = H[:, 1:] @ params["ner_w"] + params["ner_b"]
    if inj.mode.site == "classifier":
        shift = classifier_bias(inj, params)
        if shift is not None:
            em = em + shift
    return em


def ner_head_backward(d_em, H, inj: Injection, params, grads):
    """Accumulate head gradients; returns ``dH`` (zero at the classification slot)."""
    dH = np.zeros_like(H)
    dH[:, 1:] = linear_backward(d_em, H[:, 1:], params["ner_w"], grads, "ner_w", "ner_b")
    if inj.mode.site == "classifier":
        k = d_em.shape[-1]
        if inj.label_vec is not None:
            d_shift = d_em.sum(axis=1)
            grads["cls_ws"] += inj.label_vec.T @ d_shift
            np.add.at(grads["label_emb"], inj.label_ids, d_shift @ params["cls_ws"].T)
        if inj.pos_vec is not None:
            pv = inj.pos_vec[:, 1:]
            d = pv.shape[-1]
            grads["cls_wp"] += pv.reshape(-1, d).T @ d_em.reshape(-1, k)
            d_pv = (d_em @ params["cls_wp"].T) * inj.pos_keep[:, 1:]
            np.add.at(grads["posattr_emb"], inj.pos_full[:, 1:], d_pv)
    return dH


def token_cross_entropy(em, gold, tag_mask):
    """Summed per-sentence token CE and its gradient (masked columns contribute nothing)."""
    logp = log_softmax(em, axis=-1)
    b, w, k = em.shape
    picked = np.take_along_axis(logp, gold[..., None], axis=-1)[..., 0]
    m = tag_mask.astype(np.float64)
    losses = -(picked * m).sum(axis=1)
    d = softmax(em, axis=-1)
    d[np.arange(b)[:, None], np.arange(w)[None, :], gold] -= 1.0
    return losses, d * m[..., None]


def crf_batch_nll(em, gold, tag_mask, c: CrfParams):
    """CRF NLL per sentence over the tagged columns, with all gradients."""
    b = em.shape[0]
    losses = np.zeros(b)
    d_em = np.zeros_like(em)
    k = em.shape[-1]
    d_trans, d_start, d_end = np.zeros((k, k)), np.zeros(k), np.zeros(k)
    for i in range(b):
        cols = np.flatnonzero(tag_mask[i])
        r = crf_nll(em[i, cols], gold[i, cols], c)
        losses[i] = r.loss
        d_em[i, cols] = r.d_emissions
        d_trans += r.d_transitions
        d_start += r.d_start
        d_end += r.d_end
    return losses, d_em, d_trans, d_start, d_end


# ---------------------------------------------------------- sentence heads

def sentence_head(h1, params):
    """Sentence-label logits from the classification-slot vector(s)."""
    return h1 @ params["sent_w"] + params["sent_b"]


def sentence_head_backward(d_logits, h1, params, grads):
    return linear_backward(d_logits, h1, params["sent_w"], grads, "sent_w", "sent_b")


def sentence_cross_entropy(logits, gold):
    gold = np.asarray(gold)
    if gold.min() < 0:
        raise ConfigError("joint training needs a sentence label for every sentence")
    logp = log_softmax(logits, axis=-1)
    b = logits.shape[0]
    losses = -logp[np.arange(b), gold]
    d = softmax(logits, axis=-1)
    d[np.arange(b), gold] -= 1.0
    return losses, d


def entailment_logit(h1, params):
    return (h1 @ params["ent_w"] + params["ent_b"])[..., 0]


def sigmoid(x):
    x = np.asarray(x, dtype=np.float64)
    e = np.exp(-np.abs(x))
    return np.where(x >= 0, 1.0 / (1.0 + e), e / (1.0 + e))


def binary_cross_entropy(logits, targets):
    """Per-instance BCE-with-logits and its gradient."""
    t = np.asarray(targets, dtype=np.float64)
    losses = np.maximum(logits, 0) - logits * t + np.log1p(np.exp(-np.abs(logits)))
    return losses, sigmoid(logits) - t


@dataclass
class JointOutput:
    sentence_logits: np.ndarray
    tag_scores: np.ndarray
    combined_loss: float
    sentence_loss: float
    ner_loss: float


def joint_loss(sentence_logits, gold_label, tag_scores, gold_tags, head_kind="crf",
               crf: CrfParams | None = None, sentence_weight: float = 1.0) -> JointOutput:
    """Sentence CE plus token CE or CRF NLL for one sentence."""
    check_head(head_kind)
    logits = np.asarray(sentence_logits, dtype=np.float64)[None, :]
    s_loss = float(sentence_cross_entropy(logits, [gold_label])[0][0])
    scores = np.asarray(tag_scores, dtype=np.float64)
    gold = np.asarray(gold_tags, dtype=np.int64)
    if head_kind == "crf":
        if crf is None:
            crf = CrfParams.zeros(scores.shape[1])
        n_loss = crf_nll(scores, gold, crf).loss
    else:
        n_loss = float(token_cross_entropy(scores[None], gold[None], np.ones((1, len(gold))))[0][0])
    return JointOutput(logits[0], scores, sentence_weight * s_loss + n_loss, s_loss, n_loss)


# ------------------------------------------------------ entailment classifier

DEFAULT_TEMPLATE = "It contains a {type} mention"
COUNT_TEMPLATES = {
    "one": "It contains one {type} mention",
    "more": "It contains more than one {type} mention",
}
NONE_TEMPLATE = "It contains no entity mention"


@dataclass
class TemplateSet:
    templates: dict[str, str]

    @classmethod
    def default(cls, labels) -> "TemplateSet":
        """Count-aware templates for ``T-one``/``T-more``/``None``; plain types get the single-slot one."""
        out = {}
        for lab in labels:
            if lab == NO_LABEL:
                out[lab] = NONE_TEMPLATE
                continue
            head, _, tail = lab.rpartition("-")
            if head and tail in COUNT_TEMPLATES:
                out[lab] = COUNT_TEMPLATES[tail].format(type=head.lower())
            else:
                out[lab] = DEFAULT_TEMPLATE.format(type=lab.lower())
        return cls(out)

    def render(self, label: str) -> list[str]:
        try:
            return self.templates[label].split()
        except KeyError:
            raise TemplateError(f"no template for label {label!r}") from None

    def dumps(self) -> str:
        return "".join(f"{k}\t{v}\n" for k, v in self.templates.items())

    @classmethod
    def loads(cls, text: str) -> "TemplateSet":
        out = {}
        for lineno, line in enumerate(text.splitlines(), start=1):
            if not line.strip() or line.startswith("#"):
                continue
            parts = line.split("\t")
            if len(parts) != 2 or not parts[0] or not parts[1].strip():
                raise TemplateError(f"line {lineno}: expected 'label<TAB>template'")
            out[parts[0]] = parts[1].strip()
        return cls(out)

    @classmethod
    def load(cls, path) -> "TemplateSet":
        with open(path, encoding="utf-8") as fh:
            return cls.loads(fh.read())

    def vocabulary(self) -> list[str]:
        return sorted({w for t in self.templates.values() for w in t.split()})


@dataclass
class EntailmentInstance:
    premise: tuple[str, ...]
    hypothesis: tuple[str, ...]
    candidate_label: str
    target: str | None = None

    @property
    def tokens(self) -> list[str]:
        return list(self.premise) + [SEP] + list(self.hypothesis) + [EOS]

    def as_sentence(self) -> Sentence:
        toks = self.tokens
        return Sentence(toks, ["X"] * len(toks))


def reformulate_entailment(s: Sentence, templates: TemplateSet, candidates=None) -> list[EntailmentInstance]:
    """One premise/hypothesis pair per candidate label.

    With a gold ``sentence_label`` on ``s``, exactly that candidate targets
    ``entail``; without one, targets are left unset.
    """
    if candidates is None:
        candidates = list(templates.templates)
    out = []
    for lab in candidates:
        hyp = templates.render(lab)
        target = None
        if s.sentence_label is not None:
            target = ENTAIL if lab == s.sentence_label else NOT_ENTAIL
        out.append(EntailmentInstance(tuple(s.tokens), tuple(hyp), lab, target))
    if s.sentence_label is not None and s.sentence_label not in candidates:
        raise TemplateError(f"gold label {s.sentence_label!r} is not among the candidates")
    return out
