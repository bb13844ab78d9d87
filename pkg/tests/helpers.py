"""Shared builders for the injection and acceptance tests."""
import numpy as np

from attrner.corpus import build_vocab, encode_batch
from attrner.injection import InjectionMode, mute_text_attribute
from attrner.model import ModelConfig, init_params
from attrner.model.params import Parameters
from attrner.network import predict_tags
from attrner.synthetic import ambiguous_corpus

ALL_MODES = [
    InjectionMode(),
    InjectionMode.parse("text", "label"),
    InjectionMode.parse("embedding", "label,pos"),
    InjectionMode.parse("attention", "label,pos"),
    InjectionMode.parse("classifier", "label,pos"),
]
PROJECTION = ("proj_w", "proj_b")


def generic_params(cfg, mode, seed, scale=0.3):
    """Random nonzero weights everywhere except the embedding projection, which keeps its
    ``[I; 0; 0]`` initialisation so only its attribute blocks are in play."""
    p = init_params(cfg, seed, mode)
    rng = np.random.default_rng(seed + 1000)
    for name, t in p.items():
        if name not in PROJECTION:
            p[name] = t + rng.normal(0.0, scale, size=t.shape)
    if mode.site == "embedding":
        d = cfg.d_model
        p["proj_w"][d:] = rng.normal(0.0, scale, size=(2 * d, d))
    return p


def reduction_setup(n=100, seed=5):
    corpus = ambiguous_corpus(n, seed, split="test")
    vocab = build_vocab(corpus)
    cfg = ModelConfig(d_model=16, n_heads=2, n_layers=2, d_ff=24).with_vocab(vocab)
    return corpus, vocab, cfg


def reduced_predictions(corpus, vocab, cfg, mode, seed, head_kind="crf"):
    """(baseline tags, tags of ``mode`` with zeroed attribute weights), same shared weights."""
    p = generic_params(cfg, mode, seed).zero_attributes()
    base = Parameters(cfg, InjectionMode(), p.tensors)
    plain = encode_batch(corpus.sentences, vocab)
    want = predict_tags(base, plain, head_kind, scheme=vocab.scheme)
    batch = encode_batch(corpus.sentences, vocab, text_mode=mode.text)
    if mode.text:
        batch = mute_text_attribute(batch)
    got = predict_tags(p, batch, head_kind, mode=mode, scheme=vocab.scheme)
    return want, got
