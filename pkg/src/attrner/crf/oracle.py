"""Exhaustive enumeration over tag sequences; a test oracle for small chains."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import OracleRefusal

MAX_PATHS = 100_000


@dataclass
class OracleResult:
    log_z: float
    best_path: list[int]
    best_score: float
    marginals: np.ndarray
    num_paths: int


def enumerate_paths(n: int, k: int) -> np.ndarray:
    if k ** n > MAX_PATHS:
        raise OracleRefusal(f"{k}^{n} = {k ** n} paths exceeds the oracle bound {MAX_PATHS}")
    grids = np.indices((k,) * n).reshape(n, -1).T
    return np.ascontiguousarray(grids)


def brute_force_oracle(e, c) -> OracleResult:
    """Score every legal path of ``c`` directly.

    Uses the raw (unpenalized) parameters and drops illegal paths instead
    of penalizing them.
    """
    e = np.asarray(e, dtype=np.float64)
    n, k = e.shape
    paths = enumerate_paths(n, k)
    if c.constraint_mask is not None:
        m = c.constraint_mask
        legal = m[k, paths[:, 0]] & m[paths[:, -1], k]
        for t in range(1, n):
            legal &= m[paths[:, t - 1], paths[:, t]]
        paths = paths[legal]
    scores = c.start_scores[paths[:, 0]] + e[0, paths[:, 0]]
    for t in range(1, n):
        scores = scores + c.transitions[paths[:, t - 1], paths[:, t]] + e[t, paths[:, t]]
    scores = scores + c.end_scores[paths[:, -1]]

    top = scores.max()
    log_z = float(top + np.log(np.exp(scores - top).sum()))
    probs = np.exp(scores - log_z)
    marg = np.zeros((n, k))
    for t in range(n):
        marg[t] = np.bincount(paths[:, t], weights=probs, minlength=k)
    # first maximal path in lexicographic order
    best = int(np.flatnonzero(scores == top)[0])
    return OracleResult(log_z, paths[best].tolist(), float(top), marg, len(paths))


@dataclass
class SweepReport:
    instances: int
    max_log_z_error: float
    max_grad_error: float
    viterbi_mismatches: int
    score_mismatches: int

    def passed(self, tol: float = 1e-9) -> bool:
        return (self.max_log_z_error <= tol and self.max_grad_error <= tol
                and self.viterbi_mismatches == 0 and self.score_mismatches == 0)


def random_instance(rng, k=None, n=None, constrained=None):
    """Random emissions and CRF scores; BIO constraints only apply to odd ``k``."""
    from .core import CrfParams, bio_constraint_mask

    k = int(rng.choice([3, 4, 5])) if k is None else k
    n = int(rng.integers(1, 7)) if n is None else n
    if constrained is None:
        constrained = k % 2 == 1 and rng.random() < 0.5
    mask = bio_constraint_mask(k) if constrained else None
    c = CrfParams(rng.normal(size=(k, k)), rng.normal(size=k), rng.normal(size=k), mask)
    return rng.normal(scale=2.0, size=(n, k)), c


def oracle_sweep(instances: int = 200, seed: int = 0) -> SweepReport:
    """Dynamic programs vs exhaustive enumeration on random small chains."""
    from .core import crf_nll, log_partition, viterbi

    rng = np.random.default_rng(seed)
    rep = SweepReport(instances, 0.0, 0.0, 0, 0)
    for _ in range(instances):
        e, c = random_instance(rng)
        ref = brute_force_oracle(e, c)
        rep.max_log_z_error = max(rep.max_log_z_error, abs(log_partition(e, c) - ref.log_z))
        path, score = viterbi(e, c)
        rep.viterbi_mismatches += path != ref.best_path
        rep.score_mismatches += score != ref.best_score
        gold = ref.best_path
        expected = ref.marginals.copy()
        expected[np.arange(len(gold)), gold] -= 1.0
        got = crf_nll(e, gold, c).d_emissions
        rep.max_grad_error = max(rep.max_grad_error, float(np.abs(got - expected).max()))
    return rep
