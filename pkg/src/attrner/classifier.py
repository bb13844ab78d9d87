"""Sentence-label prediction through entailment reformulation.

Each (sentence, candidate label) pair becomes ``premise [SEP] hypothesis
[EOS]``; a binary logit read from the classification slot scores whether the
sentence entails the candidate's template.
"""
from __future__ import annotations

from dataclasses import replace

import numpy as np

from .corpus import Corpus, Sentence, Vocabulary, encode_batch
from .heads import ENTAIL, EOS, SEP, TemplateSet, reformulate_entailment, sigmoid
from .model.config import ModelConfig
from .network import entailment_scores

__all__ = [
    "classifier_config",
    "classify_sentence",
    "classify_sentences",
    "entailment_batch",
    "entailment_instances",
    "template_tokens",
]


def template_tokens(templates: TemplateSet) -> list[str]:
    """Extra vocabulary needed to encode entailment inputs."""
    return [SEP, EOS] + templates.vocabulary()


def classifier_config(ner_cfg: ModelConfig, templates: TemplateSet) -> ModelConfig:
    """Same widths as the NER model, with room for ``[SEP] hypothesis [EOS]``."""
    longest = max(len(t.split()) for t in templates.templates.values())
    return replace(ner_cfg, max_len=ner_cfg.max_len + longest + 2)


def entailment_instances(sentences, templates: TemplateSet, candidates):
    """Flattened instances and 0/1 targets (1 = entail) for labelled sentences."""
    inst = []
    for s in sentences:
        inst.extend(reformulate_entailment(s, templates, candidates))
    targets = np.array([1.0 if i.target == ENTAIL else 0.0 for i in inst])
    return inst, targets


def entailment_batch(instances, vocab: Vocabulary, max_len=None):
    return encode_batch([i.as_sentence() for i in instances], vocab, max_len=max_len)


def _candidates(vocab: Vocabulary, templates: TemplateSet) -> list[str]:
    # label-id order makes the argmax tie-break (first maximum) pick the lowest id
    return [lab for lab in vocab.id_to_label if lab in templates.templates]


def classify_sentences(
    sentences,
    params,
    templates: TemplateSet,
    vocab: Vocabulary,
    chunk: int = 256,
) -> tuple[list[str], np.ndarray]:
    """Predicted label per sentence and the ``[N, C]`` entailment probabilities.

    Candidates are scored in label-id order, so ties go to the lowest id and
    the result does not depend on the order templates were declared in.
    """
    cands = _candidates(vocab, templates)
    unlabeled = [replace(s, sentence_label=None) for s in sentences]
    inst, _ = entailment_instances(unlabeled, templates, cands)
    logits = np.empty(len(inst))
    for lo in range(0, len(inst), chunk):
        part = inst[lo:lo + chunk]
        logits[lo:lo + len(part)] = entailment_scores(params, entailment_batch(part, vocab))
    probs = sigmoid(logits).reshape(len(sentences), len(cands))
    best = np.argmax(probs, axis=1)
    return [cands[i] for i in best], probs


def classify_sentence(s: Sentence, params, templates: TemplateSet, vocab: Vocabulary):
    """``(label, {candidate: probability})`` for one sentence."""
    labels, probs = classify_sentences([s], params, templates, vocab)
    cands = _candidates(vocab, templates)
    return labels[0], dict(zip(cands, probs[0].tolist()))


def accuracy(corpus: Corpus, predicted) -> float:
    gold = [s.sentence_label for s in corpus]
    if not gold:
        return 0.0
    return sum(g == p for g, p in zip(gold, predicted)) / len(gold)
