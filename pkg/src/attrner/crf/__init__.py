from . import backend
from .core import (
    PENALTY,
    CrfNll,
    CrfParams,
    bio_constraint_mask,
    crf_nll,
    log_partition,
    marginals,
    sequence_score,
    viterbi,
)
from .oracle import MAX_PATHS, OracleResult, SweepReport, brute_force_oracle, oracle_sweep

__all__ = [
    "PENALTY",
    "MAX_PATHS",
    "CrfNll",
    "CrfParams",
    "OracleResult",
    "backend",
    "bio_constraint_mask",
    "brute_force_oracle",
    "oracle_sweep",
    "SweepReport",
    "crf_nll",
    "log_partition",
    "marginals",
    "sequence_score",
    "viterbi",
]
