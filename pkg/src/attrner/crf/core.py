"""Linear-chain CRF: scoring, partition function, NLL gradients, decoding."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import InfeasibleGoldError
from ..tagging import TagScheme
from . import backend

# Added to every forbidden move; keeps arithmetic finite. Scores must stay
# well below this in magnitude for the constraint to be exact in float64.
PENALTY = -1.0e4
SCORE_LIMIT = 1.0e3


def bio_constraint_mask(scheme: TagScheme | int) -> np.ndarray:
    """Boolean ``[K+1, K+1]`` matrix of legal moves.

    Row/column ``K`` is the virtual boundary: ``mask[K, j]`` allows starting
    in ``j`` and ``mask[i, K]`` allows ending in ``i``.
    """
    if isinstance(scheme, int):
        if scheme < 3 or scheme % 2 == 0:
            raise ValueError(f"{scheme} labels cannot form a BIO scheme")
        scheme = TagScheme(tuple(f"T{i}" for i in range((scheme - 1) // 2)))
    k = scheme.num_labels
    mask = np.ones((k + 1, k + 1), dtype=bool)
    mask[k, k] = False
    for j in range(k):
        if scheme.is_inside(j):
            mask[k, j] = False
            for i in range(k):
                mask[i, j] = i != 0 and scheme.type_of(i) == scheme.type_of(j)
    return mask


@dataclass
class CrfParams:
    transitions: np.ndarray
    start_scores: np.ndarray
    end_scores: np.ndarray
    constraint_mask: np.ndarray | None = None

    def __post_init__(self):
        self.transitions = np.asarray(self.transitions, dtype=np.float64)
        self.start_scores = np.asarray(self.start_scores, dtype=np.float64)
        self.end_scores = np.asarray(self.end_scores, dtype=np.float64)
        k = self.num_tags
        if self.transitions.shape != (k, k) or self.end_scores.shape != (k,):
            raise ValueError("transition/start/end shapes disagree")
        if self.constraint_mask is not None:
            self.constraint_mask = np.asarray(self.constraint_mask, dtype=bool)
            if self.constraint_mask.shape != (k + 1, k + 1):
                raise ValueError(f"constraint mask must be {(k + 1, k + 1)}")

    @property
    def num_tags(self) -> int:
        return self.start_scores.shape[0]

    @property
    def constrained(self) -> bool:
        return self.constraint_mask is not None

    @classmethod
    def zeros(cls, k: int, constraint_mask=None) -> "CrfParams":
        return cls(np.zeros((k, k)), np.zeros(k), np.zeros(k), constraint_mask)

    def effective(self):
        """Transition, start and end scores with the penalty folded in."""
        if self.constraint_mask is None:
            return self.transitions, self.start_scores, self.end_scores
        k = self.num_tags
        m = self.constraint_mask
        trans = self.transitions + np.where(m[:k, :k], 0.0, PENALTY)
        start = self.start_scores + np.where(m[k, :k], 0.0, PENALTY)
        end = self.end_scores + np.where(m[:k, k], 0.0, PENALTY)
        return np.ascontiguousarray(trans), start, end

    def is_legal(self, tags) -> bool:
        if self.constraint_mask is None:
            return True
        k, m = self.num_tags, self.constraint_mask
        if not m[k, tags[0]] or not m[tags[-1], k]:
            return False
        return all(m[a, b] for a, b in zip(tags, tags[1:]))


def _check(e: np.ndarray, c: CrfParams) -> np.ndarray:
    e = np.ascontiguousarray(e, dtype=np.float64)
    if e.ndim != 2 or e.shape[0] < 1 or e.shape[1] != c.num_tags:
        raise ValueError(f"emissions must be [n>=1, {c.num_tags}], got {e.shape}")
    if c.constrained:
        scale = max(np.abs(e).max(), np.abs(c.transitions).max(), np.abs(c.start_scores).max(),
                    np.abs(c.end_scores).max())
        if not scale < SCORE_LIMIT:
            raise ValueError(
                f"score magnitude {scale:.3g} too close to the constraint penalty {PENALTY:g}"
            )
    return e


def sequence_score(e, tags, c: CrfParams) -> float:
    """Unnormalized path score; ``-inf`` for a path the constraints forbid.

    Accumulates left to right exactly as Viterbi does, so the score of the
    decoded path reproduces Viterbi's returned score bit for bit.
    """
    e = _check(e, c)
    tags = [int(t) for t in tags]
    if len(tags) != e.shape[0]:
        raise ValueError("tag sequence length differs from emissions")
    if not c.is_legal(tags):
        return float("-inf")
    trans, start, end = c.transitions, c.start_scores, c.end_scores
    s = start[tags[0]] + e[0, tags[0]]
    for t in range(1, len(tags)):
        s = s + trans[tags[t - 1], tags[t]] + e[t, tags[t]]
    return float(s + end[tags[-1]])


def log_partition(e, c: CrfParams) -> float:
    e = _check(e, c)
    _, _, log_z = backend.forward_backward(e, *c.effective())
    return float(log_z)


def marginals(e, c: CrfParams) -> np.ndarray:
    e = _check(e, c)
    alpha, beta, log_z = backend.forward_backward(e, *c.effective())
    return np.exp(alpha + beta - log_z)


@dataclass
class CrfNll:
    loss: float
    d_emissions: np.ndarray
    d_transitions: np.ndarray
    d_start: np.ndarray
    d_end: np.ndarray
    marginals: np.ndarray
    log_z: float


def crf_nll(e, tags, c: CrfParams) -> CrfNll:
    """``logZ - score(gold)`` and its gradients via forward-backward."""
    e = _check(e, c)
    tags = np.asarray(tags, dtype=np.int64)
    if not c.is_legal(tags.tolist()):
        raise InfeasibleGoldError(f"gold path {tags.tolist()} violates the transition constraints")
    trans, start, end = c.effective()
    alpha, beta, log_z = backend.forward_backward(e, trans, start, end)
    marg = np.exp(alpha + beta - log_z)
    pair = backend.transition_expectations(e, trans, alpha, beta, log_z)
    n, k = e.shape
    gold = np.zeros((n, k))
    gold[np.arange(n), tags] = 1.0
    d_trans = pair.copy()
    np.add.at(d_trans, (tags[:-1], tags[1:]), -1.0)
    d_start = marg[0].copy()
    d_start[tags[0]] -= 1.0
    d_end = marg[-1].copy()
    d_end[tags[-1]] -= 1.0
    loss = log_z - sequence_score(e, tags, c)
    return CrfNll(float(loss), marg - gold, d_trans, d_start, d_end, marg, float(log_z))


def viterbi(e, c: CrfParams) -> tuple[list[int], float]:
    e = _check(e, c)
    path, score = backend.viterbi(e, *c.effective())
    return [int(t) for t in path], float(score)
