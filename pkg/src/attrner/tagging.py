"""BIO tag scheme, span conversions and span-level evaluation."""
from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field
from typing import Iterable, Sequence

from .errors import ConversionError, EvaluationError, InvalidSchemeError, OverlapError

OUTSIDE = "O"


@dataclass(frozen=True)
class TagScheme:
    """Label inventory ``["O", "B-T1", "I-T1", "B-T2", ...]``.

    Index 0 is always ``"O"``; type ``k`` (0-based) owns ``B`` at ``1 + 2k``
    and ``I`` at ``2 + 2k``.
    """

    entity_types: tuple[str, ...]
    labels: tuple[str, ...] = field(init=False)

    def __post_init__(self):
        types = tuple(self.entity_types)
        if not types:
            raise InvalidSchemeError("scheme needs at least one entity type")
        seen = set()
        for t in types:
            if not isinstance(t, str) or not t.strip():
                raise InvalidSchemeError(f"empty entity type name in {types!r}")
            if t in seen:
                raise InvalidSchemeError(f"duplicate entity type {t!r}")
            if any(c.isspace() for c in t) or "," in t:
                raise InvalidSchemeError(f"entity type {t!r} contains whitespace or ','")
            seen.add(t)
        labels = [OUTSIDE]
        for t in types:
            labels += [f"B-{t}", f"I-{t}"]
        object.__setattr__(self, "entity_types", types)
        object.__setattr__(self, "labels", tuple(labels))
        object.__setattr__(self, "_index", {lab: i for i, lab in enumerate(labels)})

    def __len__(self):
        return len(self.labels)

    @property
    def num_labels(self) -> int:
        return len(self.labels)

    def index(self, label: str) -> int:
        try:
            return self._index[label]
        except KeyError:
            raise KeyError(f"label {label!r} not in scheme {self.entity_types!r}") from None

    def begin(self, entity_type: str) -> int:
        return self.index(f"B-{entity_type}")

    def inside(self, entity_type: str) -> int:
        return self.index(f"I-{entity_type}")

    def type_of(self, idx: int) -> str | None:
        if idx == 0:
            return None
        return self.entity_types[(idx - 1) // 2]

    @staticmethod
    def is_begin(idx: int) -> bool:
        return idx > 0 and idx % 2 == 1

    @staticmethod
    def is_inside(idx: int) -> bool:
        return idx > 0 and idx % 2 == 0

    def decode(self, seq: Iterable[int]) -> list[str]:
        return [self.labels[i] for i in seq]

    def encode(self, labels: Iterable[str]) -> list[int]:
        return [self.index(lab) for lab in labels]


def build_scheme(entity_types: Iterable[str]) -> TagScheme:
    return TagScheme(tuple(entity_types))


@dataclass(frozen=True, order=True)
class Span:
    start: int
    end: int
    entity_type: str

    def __post_init__(self):
        if not 0 <= self.start < self.end:
            raise ValueError(f"invalid span bounds [{self.start}, {self.end})")


@dataclass(frozen=True)
class Violation:
    position: int
    rule: str

    def __str__(self):
        return f"position {self.position}: {self.rule}"


def _check_range(seq: Sequence[int], scheme: TagScheme):
    k = scheme.num_labels
    for i, t in enumerate(seq):
        if not 0 <= int(t) < k:
            raise IndexError(f"tag index {t} at position {i} outside [0, {k})")


def validate_bio(seq: Sequence[int], scheme: TagScheme) -> list[Violation]:
    """Return every BIO rule broken by ``seq``; an empty list means valid."""
    _check_range(seq, scheme)
    out = []
    prev = 0
    for i, t in enumerate(seq):
        t = int(t)
        if scheme.is_inside(t):
            if i == 0 or prev == 0:
                out.append(Violation(i, "I without preceding B/I of same type"))
            elif scheme.type_of(prev) != scheme.type_of(t):
                out.append(
                    Violation(
                        i,
                        f"I-{scheme.type_of(t)} follows a {scheme.type_of(prev)} tag",
                    )
                )
        prev = t
    return out


def repair_bio(seq: Sequence[int], scheme: TagScheme) -> list[int]:
    """Reinterpret every headless ``I-T`` as ``B-T``.

    Used on model output only; gold data goes through strict conversion.
    """
    out = []
    prev = 0
    for t in seq:
        t = int(t)
        if scheme.is_inside(t) and (prev == 0 or scheme.type_of(prev) != scheme.type_of(t)):
            t -= 1
        out.append(t)
        prev = t
    return out


def spans_from_tags(seq: Sequence[int], scheme: TagScheme, strict: bool = True) -> list[Span]:
    """Maximal ``B I*`` runs as spans.

    With ``strict`` an invalid sequence raises :class:`ConversionError`;
    otherwise it is repaired first.
    """
    if strict:
        violations = validate_bio(seq, scheme)
        if violations:
            raise ConversionError(f"invalid BIO sequence: {violations[0]}")
    else:
        _check_range(seq, scheme)
        seq = repair_bio(seq, scheme)
    spans = []
    start = None
    cur_type = None
    for i, t in enumerate(seq):
        t = int(t)
        if scheme.is_inside(t):
            continue
        if start is not None:
            spans.append(Span(start, i, cur_type))
            start = None
        if scheme.is_begin(t):
            start, cur_type = i, scheme.type_of(t)
    if start is not None:
        spans.append(Span(start, len(seq), cur_type))
    return spans


def tags_from_spans(spans: Iterable[Span], n: int, scheme: TagScheme) -> list[int]:
    ordered = sorted(spans)
    for a, b in zip(ordered, ordered[1:]):
        if b.start < a.end:
            raise OverlapError(f"spans {a} and {b} overlap")
    out = [0] * n
    for s in ordered:
        if s.end > n:
            raise ValueError(f"span {s} exceeds sequence length {n}")
        out[s.start] = scheme.begin(s.entity_type)
        for i in range(s.start + 1, s.end):
            out[i] = scheme.inside(s.entity_type)
    return out


@dataclass(frozen=True)
class PRF:
    precision: float
    recall: float
    f1: float
    tp: int = 0
    fp: int = 0
    fn: int = 0


def _prf(tp: int, fp: int, fn: int) -> PRF:
    p = tp / (tp + fp) if tp + fp else 0.0
    r = tp / (tp + fn) if tp + fn else 0.0
    f = 2 * p * r / (p + r) if p + r else 0.0
    return PRF(p, r, f, tp, fp, fn)


def micro_f1(gold: Sequence[Iterable[Span]], pred: Sequence[Iterable[Span]]) -> PRF:
    """Exact-match span micro P/R/F1 pooled over sentences (0/0 -> 0)."""
    if len(gold) != len(pred):
        raise EvaluationError(f"{len(gold)} gold sentences vs {len(pred)} predicted")
    tp = fp = fn = 0
    for g, p in zip(gold, pred):
        gc, pc = Counter(g), Counter(p)
        hit = sum((gc & pc).values())
        tp += hit
        fp += sum(pc.values()) - hit
        fn += sum(gc.values()) - hit
    return _prf(tp, fp, fn)


def token_micro_f1(
    gold: Sequence[Sequence[int]], pred: Sequence[Sequence[int]], scheme: TagScheme
) -> PRF:
    """Token-level micro P/R/F1 over non-``O`` labels."""
    if len(gold) != len(pred):
        raise EvaluationError(f"{len(gold)} gold sentences vs {len(pred)} predicted")
    tp = fp = fn = 0
    for g, p in zip(gold, pred):
        if len(g) != len(p):
            raise EvaluationError("token count mismatch between gold and prediction")
        for a, b in zip(g, p):
            a, b = int(a), int(b)
            if b != 0 and a == b:
                tp += 1
            else:
                fp += b != 0
                fn += a != 0
    return _prf(tp, fp, fn)
