"""Synthetic corpora for desk-scale checks.

``overfit_fixture`` is a small two-type corpus that a working model should
memorise. ``ambiguous_corpus`` draws entity names from one pool shared by
both types, so only sentence-level context (a cue word in some sentences,
and the sentence label itself) tells the types apart.
"""
from __future__ import annotations

import os

import numpy as np

from .corpus import Corpus, Sentence, with_derived_labels, write_corpus
from .tagging import build_scheme

FIXTURE_TYPES = ("Disease", "Gene")
AMBIGUOUS_TYPES = ("Chemical", "Disease")

_FILLER = {
    "the": "DT", "a": "DT", "patient": "NN", "patients": "NNS", "study": "NN",
    "showed": "VBD", "was": "VBD", "were": "VBD", "linked": "VBN", "observed": "VBN",
    "of": "IN", "in": "IN", "with": "IN", "to": "TO", "and": "CC", "we": "PRP",
    "report": "VBP", "severe": "JJ", "novel": "JJ", "cases": "NNS",
}
_FIXTURE_NAMES = {
    "Disease": [["asthma"], ["sepsis"], ["lupus"], ["breast", "cancer"], ["type", "2", "diabetes"]],
    "Gene": [["BRCA1"], ["TP53"], ["EGFR"], ["KRAS", "G12D"], ["MYC"]],
}
_AMBIGUOUS_NAMES = [["zorin"], ["malex"], ["tivor"], ["quenol"], ["darix"], ["pemba", "acid"],
                    ["lorvate"], ["sunex", "B"]]
_CUES = {"Chemical": "dose", "Disease": "symptoms"}


def _sentence(rng, names_by_type, types, n_ent, length, cue=None):
    """Random filler sentence with ``n_ent`` non-adjacent entities and optional cue word."""
    filler = list(_FILLER)
    words = [[filler[i]] for i in rng.integers(len(filler), size=length)]
    kinds = [None] * length
    slots = sorted(rng.choice(np.arange(0, length, 2), size=n_ent, replace=False).tolist())
    for slot, t in zip(slots, types):
        pool = names_by_type[t]
        words[slot] = list(pool[int(rng.integers(len(pool)))])
        kinds[slot] = t
    if cue is not None:
        free = [i for i in range(length) if kinds[i] is None]
        i = free[int(rng.integers(len(free)))]
        words[i] = [cue]
        kinds[i] = "cue"
    tokens, pos, tags = [], [], []
    for w, k in zip(words, kinds):
        for j, tok in enumerate(w):
            tokens.append(tok)
            if k in (None, "cue"):
                pos.append(_FILLER.get(tok, "NN"))
                tags.append("O")
            else:
                pos.append("NNP" if tok[0].isupper() else "NN")
                tags.append(("B-" if j == 0 else "I-") + k)
    return tokens, pos, tags


def _to_corpus(rows, types, split):
    scheme = build_scheme(types)
    sents = [Sentence(t, p, scheme.encode(g)) for t, p, g in rows]
    return with_derived_labels(Corpus(sents, scheme, split))


def overfit_fixture(n: int = 50, seed: int = 0) -> Corpus:
    """Two entity types with disjoint names; zero to two mentions per sentence."""
    rng = np.random.default_rng(seed)
    rows = []
    for _ in range(n):
        n_ent = int(rng.integers(0, 3))
        types = [FIXTURE_TYPES[int(rng.integers(2))] for _ in range(n_ent)]
        length = int(rng.integers(max(4, 2 * n_ent + 1), 9))
        rows.append(_sentence(rng, _FIXTURE_NAMES, types, n_ent, length))
    return _to_corpus(rows, FIXTURE_TYPES, "fixture")


def ambiguous_corpus(n: int, seed: int, cue_rate: float = 0.5, split: str = "train") -> Corpus:
    """Every sentence mentions one type only, using names shared by both types.

    A type-specific cue word appears in a ``cue_rate`` fraction of the
    sentences; elsewhere the type is recoverable only from the sentence label.
    """
    rng = np.random.default_rng(seed)
    names = {t: _AMBIGUOUS_NAMES for t in AMBIGUOUS_TYPES}
    rows = []
    for _ in range(n):
        t = AMBIGUOUS_TYPES[int(rng.integers(2))]
        n_ent = int(rng.choice([0, 1, 1, 2, 2]))
        cue = _CUES[t] if rng.random() < cue_rate else None
        length = int(rng.integers(max(5, 2 * n_ent + 2), 10))
        rows.append(_sentence(rng, names, [t] * n_ent, n_ent, length, cue))
    return _to_corpus(rows, AMBIGUOUS_TYPES, split)


AMBIGUOUS_SPLITS = {"train": (300, 11), "dev": (100, 12), "test": (100, 13)}


def ambiguous_splits(cue_rate: float = 0.5) -> dict[str, Corpus]:
    return {name: ambiguous_corpus(n, seed, cue_rate, name)
            for name, (n, seed) in AMBIGUOUS_SPLITS.items()}


def write_datasets(root):
    """Regenerate the shipped data files under ``root``."""
    fixture = overfit_fixture()
    os.makedirs(os.path.join(root, "fixture"), exist_ok=True)
    for split in ("train", "dev", "test"):
        write_corpus(Corpus(fixture.sentences, fixture.scheme, split),
                     os.path.join(root, "fixture", f"{split}.txt"))
    os.makedirs(os.path.join(root, "ambiguous"), exist_ok=True)
    for name, corpus in ambiguous_splits().items():
        write_corpus(corpus, os.path.join(root, "ambiguous", f"{name}.txt"))
