"""Column-file corpora, sentence-label derivation, vocabularies and batches.

File format (UTF-8)::

    #scheme: Disease,GENE        optional; otherwise inferred from the tags
    #label: Disease-one          optional; sentence label of the next block
    Torsades<TAB>NNP<TAB>B-Disease
    ...
                                 blank line ends a sentence

Any other line starting with ``#`` is a comment. Unlabelled files put ``_``
in the third column.
"""
from __future__ import annotations

import io
from collections import Counter
from dataclasses import dataclass, field, replace
from typing import Iterable, Sequence, TextIO

import numpy as np

from .errors import DerivationError, EncodingError, ParseError, TruncationError
from .tagging import TagScheme, Violation, build_scheme, spans_from_tags, validate_bio

PAD_ID = 0
UNK_ID = 1
# Encoder position ids: 0 is the classification slot, 1 the text-mode
# pseudo-token, tokens start at 2 whether or not the pseudo-token is present.
CLS_POSITION = 0
ATTR_POSITION = 1
FIRST_TOKEN_POSITION = 2
NO_LABEL = "None"
NO_TAG = "_"
SPLITS = ("train", "dev", "test")


def attr_token(label: str) -> str:
    return f"[ATTR:{label}]"


@dataclass
class Sentence:
    tokens: tuple[str, ...]
    pos: tuple[str, ...]
    gold_tags: tuple[int, ...] | None = None
    sentence_label: str | None = None
    violations: tuple[Violation, ...] = ()

    def __post_init__(self):
        self.tokens = tuple(self.tokens)
        self.pos = tuple(self.pos)
        if self.gold_tags is not None:
            self.gold_tags = tuple(int(t) for t in self.gold_tags)
        n = len(self.tokens)
        if n < 1:
            raise ValueError("a sentence needs at least one token")
        if len(self.pos) != n:
            raise ValueError(f"{n} tokens but {len(self.pos)} POS tags")
        if self.gold_tags is not None and len(self.gold_tags) != n:
            raise ValueError(f"{n} tokens but {len(self.gold_tags)} gold tags")

    def __len__(self):
        return len(self.tokens)

    @property
    def valid_bio(self) -> bool:
        return not self.violations


@dataclass
class Corpus:
    sentences: list[Sentence]
    scheme: TagScheme
    split_name: str = "train"

    def __len__(self):
        return len(self.sentences)

    def __iter__(self):
        return iter(self.sentences)


def _finish_block(block, label, scheme, labelled, start_line):
    tokens = [b[0] for b in block]
    pos = [b[1] for b in block]
    gold = None
    violations = ()
    if labelled:
        gold = []
        for tag, lineno in ((b[2], b[3]) for b in block):
            try:
                gold.append(scheme.index(tag))
            except KeyError:
                raise ParseError(f"unknown tag {tag!r} for scheme {scheme.entity_types}", lineno)
        violations = tuple(validate_bio(gold, scheme))
    return Sentence(tokens, pos, gold, label, violations)


def parse_column_file(
    text: str | TextIO,
    split_name: str = "train",
    scheme: TagScheme | None = None,
) -> Corpus:
    """Parse the 3-column format into a :class:`Corpus`.

    ``scheme`` overrides both the ``#scheme:`` header and inference; when
    neither is available the entity types are collected from the tags and
    sorted.
    """
    if not isinstance(text, str):
        text = text.read()
    lines = text.splitlines()
    header_scheme = None
    raw_blocks = []  # (rows, label, first line number)
    rows = []
    pending_label = None
    label_line = None
    for lineno, line in enumerate(lines, start=1):
        if line.startswith("#"):
            body = line[1:].strip()
            if body.startswith("scheme:"):
                if raw_blocks or rows:
                    raise ParseError("#scheme header must precede all sentences", lineno)
                names = [t.strip() for t in body[len("scheme:"):].split(",")]
                try:
                    header_scheme = build_scheme(names)
                except Exception as exc:
                    raise ParseError(str(exc), lineno) from None
            elif body.startswith("label:"):
                if rows:
                    raise ParseError("#label line inside a sentence block", lineno)
                if pending_label is not None:
                    raise ParseError("empty block: #label without tokens", label_line)
                pending_label = body[len("label:"):].strip()
                label_line = lineno
                if not pending_label:
                    raise ParseError("empty #label value", lineno)
            continue
        if not line.strip():
            if rows:
                raw_blocks.append((rows, pending_label))
                rows, pending_label = [], None
            elif pending_label is not None:
                raise ParseError("empty block: #label without tokens", label_line)
            continue
        cols = line.split("\t")
        if len(cols) != 3:
            raise ParseError(f"expected 3 tab-separated columns, got {len(cols)}", lineno)
        if any(not c.strip() for c in cols):
            raise ParseError("empty column value", lineno)
        rows.append((cols[0], cols[1], cols[2].strip(), lineno))
    if rows:
        raw_blocks.append((rows, pending_label))
    elif pending_label is not None:
        raise ParseError("empty block: #label without tokens", label_line)

    if scheme is None:
        scheme = header_scheme
    if scheme is None:
        types = sorted(
            {r[2][2:] for rows_, _ in raw_blocks for r in rows_ if r[2] not in ("O", NO_TAG)}
        )
        if not types:
            raise ParseError("cannot infer an entity scheme: no entity tags and no #scheme header")
        scheme = build_scheme(types)

    sentences = []
    for rows_, label in raw_blocks:
        flags = {r[2] == NO_TAG for r in rows_}
        if len(flags) > 1:
            raise ParseError("block mixes gold tags with '_'", rows_[0][3])
        sentences.append(_finish_block(rows_, label, scheme, NO_TAG not in {r[2] for r in rows_}, rows_[0][3]))
    return Corpus(sentences, scheme, split_name)


def read_corpus(path, split_name: str = "train", scheme: TagScheme | None = None) -> Corpus:
    with open(path, encoding="utf-8") as fh:
        return parse_column_file(fh, split_name, scheme)


def serialize_corpus(corpus: Corpus, with_labels: bool = True) -> str:
    out = io.StringIO()
    out.write(f"#scheme: {','.join(corpus.scheme.entity_types)}\n")
    for i, s in enumerate(corpus.sentences):
        if i:
            out.write("\n")
        if with_labels and s.sentence_label is not None:
            out.write(f"#label: {s.sentence_label}\n")
        tags = corpus.scheme.decode(s.gold_tags) if s.gold_tags is not None else [NO_TAG] * len(s)
        for tok, pos, tag in zip(s.tokens, s.pos, tags):
            out.write(f"{tok}\t{pos}\t{tag}\n")
    return out.getvalue()


def write_corpus(corpus: Corpus, path, with_labels: bool = True):
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(serialize_corpus(corpus, with_labels))


def label_inventory(scheme: TagScheme) -> list[str]:
    out = [NO_LABEL]
    for t in scheme.entity_types:
        out += [f"{t}-one", f"{t}-more"]
    return out


def derive_sentence_label(s: Sentence, scheme: TagScheme) -> str:
    """Sentence label from gold spans: ``None``, ``T-one`` or ``T-more``.

    With several entity types the most frequent one wins; ties go to the
    lexicographically smallest type name.
    """
    if s.gold_tags is None:
        raise DerivationError("sentence has no gold tags")
    if s.violations:
        raise DerivationError(f"gold tags are not BIO-valid: {s.violations[0]}")
    counts = Counter(sp.entity_type for sp in spans_from_tags(s.gold_tags, scheme))
    if not counts:
        return NO_LABEL
    best = min(counts, key=lambda t: (-counts[t], t))
    return f"{best}-one" if counts[best] == 1 else f"{best}-more"


def with_derived_labels(corpus: Corpus) -> Corpus:
    sents = [replace(s, sentence_label=derive_sentence_label(s, corpus.scheme)) for s in corpus]
    return Corpus(sents, corpus.scheme, corpus.split_name)


def _ranked(counter: Counter) -> list[str]:
    return sorted(counter, key=lambda k: (-counter[k], k))


@dataclass
class Vocabulary:
    """Token, POS and sentence-label id maps.

    Token and POS maps reserve 0 for padding and 1 for unknown; sentence
    labels start at 0.
    """

    token_to_id: dict[str, int]
    pos_to_id: dict[str, int]
    label_to_id: dict[str, int]
    scheme: TagScheme
    specials: tuple[str, ...] = field(default=())

    @property
    def num_tokens(self) -> int:
        return len(self.token_to_id)

    @property
    def num_pos(self) -> int:
        return len(self.pos_to_id)

    @property
    def num_labels(self) -> int:
        return len(self.label_to_id)

    @property
    def id_to_label(self) -> list[str]:
        out = [""] * len(self.label_to_id)
        for k, v in self.label_to_id.items():
            out[v] = k
        return out

    def token_id(self, tok: str) -> int:
        return self.token_to_id.get(tok, UNK_ID)

    def pos_id(self, pos: str) -> int:
        return self.pos_to_id.get(pos, UNK_ID)

    def label_id(self, label: str) -> int:
        try:
            return self.label_to_id[label]
        except KeyError:
            raise EncodingError(f"unknown sentence label {label!r}") from None

    def dumps(self) -> str:
        lines = [f"scheme\t{','.join(self.scheme.entity_types)}\t0"]
        for kind, mapping in (("token", self.token_to_id), ("pos", self.pos_to_id), ("label", self.label_to_id)):
            for surface, i in sorted(mapping.items(), key=lambda kv: kv[1]):
                lines.append(f"{kind}\t{surface}\t{i}")
        return "\n".join(lines) + "\n"

    @classmethod
    def loads(cls, text: str) -> "Vocabulary":
        maps = {"token": {}, "pos": {}, "label": {}}
        scheme = None
        for lineno, line in enumerate(text.splitlines(), start=1):
            if not line:
                continue
            parts = line.split("\t")
            if len(parts) != 3:
                raise ParseError("vocabulary lines need 3 tab-separated fields", lineno)
            kind, surface, idx = parts
            if kind == "scheme":
                scheme = build_scheme(surface.split(","))
            elif kind in maps:
                maps[kind][surface] = int(idx)
            else:
                raise ParseError(f"unknown vocabulary kind {kind!r}", lineno)
        if scheme is None:
            raise ParseError("vocabulary has no scheme line")
        return cls(maps["token"], maps["pos"], maps["label"], scheme)

    def save(self, path):
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(self.dumps())

    @classmethod
    def load(cls, path) -> "Vocabulary":
        with open(path, encoding="utf-8") as fh:
            return cls.loads(fh.read())


def build_vocab(
    corpus: Corpus,
    min_token_freq: int = 1,
    extra_tokens: Sequence[str] = (),
    extra_corpora: Iterable[Sequence[str]] = (),
) -> Vocabulary:
    """Deterministic vocabulary: frequency descending, then lexicographic.

    Text-mode pseudo-tokens for every possible sentence label and any
    ``extra_tokens`` are placed right after the reserved ids.
    ``extra_corpora`` are additional token sequences counted towards
    frequencies (entailment hypotheses, for instance).
    """
    if not corpus.sentences:
        raise ValueError("cannot build a vocabulary from an empty corpus")
    tok_counts = Counter(t for s in corpus for t in s.tokens)
    for seq in extra_corpora:
        tok_counts.update(seq)
    pos_counts = Counter(p for s in corpus for p in s.pos)
    lab_counts = Counter({lab: 0 for lab in label_inventory(corpus.scheme)})
    for s in corpus:
        label = s.sentence_label
        if label is None and s.gold_tags is not None and s.valid_bio:
            label = derive_sentence_label(s, corpus.scheme)
        if label is not None:
            lab_counts[label] += 1

    labels = _ranked(lab_counts)
    specials = [attr_token(lab) for lab in labels] + [t for t in extra_tokens]
    token_to_id = {"[PAD]": PAD_ID, "[UNK]": UNK_ID}
    for t in specials:
        token_to_id.setdefault(t, len(token_to_id))
    for t in _ranked(tok_counts):
        if tok_counts[t] >= min_token_freq and t not in token_to_id:
            token_to_id[t] = len(token_to_id)
    pos_to_id = {"[PAD]": PAD_ID, "[UNK]": UNK_ID}
    for p in _ranked(pos_counts):
        pos_to_id.setdefault(p, len(pos_to_id))
    return Vocabulary(
        token_to_id,
        pos_to_id,
        {lab: i for i, lab in enumerate(labels)},
        corpus.scheme,
        tuple(specials),
    )


@dataclass
class Batch:
    """Right-padded id matrices for one minibatch.

    ``tag_offset`` is 1 in text mode, where column 0 holds the label
    pseudo-token; ``tag_mask`` marks the columns that carry NER targets.
    The encoder prepends its own classification slot, so none of these
    matrices include it.
    """

    token_ids: np.ndarray
    pos_ids: np.ndarray
    position_ids: np.ndarray
    sentence_label_ids: np.ndarray
    attention_mask: np.ndarray
    tag_mask: np.ndarray
    lengths: np.ndarray
    tag_offset: int = 0
    gold_tag_ids: np.ndarray | None = None

    @property
    def size(self) -> int:
        return self.token_ids.shape[0]

    @property
    def width(self) -> int:
        return self.token_ids.shape[1]

    def take(self, idx) -> "Batch":
        idx = np.asarray(idx)
        return Batch(
            self.token_ids[idx],
            self.pos_ids[idx],
            self.position_ids[idx],
            self.sentence_label_ids[idx],
            self.attention_mask[idx],
            self.tag_mask[idx],
            self.lengths[idx],
            self.tag_offset,
            None if self.gold_tag_ids is None else self.gold_tag_ids[idx],
        )


def encode_batch(
    sentences: Sequence[Sentence],
    vocab: Vocabulary,
    text_mode: bool = False,
    max_len: int | None = None,
    labels: Sequence[str | None] | None = None,
    require_labels: bool = False,
) -> Batch:
    """Encode sentences into a padded :class:`Batch`.

    ``labels`` overrides the sentences' own ``sentence_label`` (predicted
    labels at pipeline inference time). Text mode prepends the label
    pseudo-token and therefore needs a label for every sentence.
    """
    if not sentences:
        raise ValueError("cannot encode an empty batch")
    if labels is None:
        labels = [s.sentence_label for s in sentences]
    if len(labels) != len(sentences):
        raise ValueError("labels and sentences differ in length")
    off = 1 if text_mode else 0
    lengths = np.array([len(s) for s in sentences], dtype=np.int64)
    if max_len is not None:
        too_long = [i for i, n in enumerate(lengths) if n > max_len]
        if too_long:
            i = too_long[0]
            raise TruncationError(f"sentence {i} has {lengths[i]} tokens, max_len is {max_len}")
    b, w = len(sentences), int(lengths.max()) + off
    tok = np.zeros((b, w), dtype=np.int64)
    pos = np.zeros((b, w), dtype=np.int64)
    posn = np.zeros((b, w), dtype=np.int64)
    mask = np.zeros((b, w), dtype=np.int64)
    tmask = np.zeros((b, w), dtype=np.int64)
    lab = np.full(b, -1, dtype=np.int64)
    has_gold = all(s.gold_tags is not None for s in sentences)
    gold = np.zeros((b, w), dtype=np.int64) if has_gold else None
    for i, (s, label) in enumerate(zip(sentences, labels)):
        n = len(s)
        if label is not None:
            lab[i] = vocab.label_id(label)
        elif text_mode or require_labels:
            raise EncodingError(f"sentence {i} has no sentence label")
        if text_mode:
            tok[i, 0] = vocab.token_to_id[attr_token(label)]
            posn[i, 0] = ATTR_POSITION
        posn[i, off:off + n] = np.arange(FIRST_TOKEN_POSITION, FIRST_TOKEN_POSITION + n)
        tok[i, off:off + n] = [vocab.token_id(t) for t in s.tokens]
        pos[i, off:off + n] = [vocab.pos_id(p) for p in s.pos]
        mask[i, : off + n] = 1
        tmask[i, off:off + n] = 1
        if has_gold:
            gold[i, off:off + n] = s.gold_tags
    return Batch(tok, pos, posn, lab, mask, tmask, lengths, off, gold)


def inject_text(tokens: Sequence[str], label: str) -> list[str]:
    """Prepend the sentence-label pseudo-token to a token list."""
    if not label:
        raise ValueError("label must be non-empty")
    if not tokens:
        raise ValueError("a sentence needs at least one token")
    return [attr_token(label)] + list(tokens)
