"""Analytic vs central-difference gradient comparison on a tiny model."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..corpus import ATTR_POSITION, FIRST_TOKEN_POSITION, Batch
from ..injection import InjectionMode
from .config import ModelConfig
from .params import Parameters, init_params

EPSILON = 1e-5
MAX_COORDS = 64
# Denominator floor: below this magnitude both gradients are compared absolutely.
REL_FLOOR = 1e-5
SPECIAL_TOKENS = 2  # ids reserved for padding / unknown


@dataclass
class GradCheckReport:
    max_rel_error: float
    worst_parameter: str
    tolerance: float
    per_tensor: dict[str, float] = field(default_factory=dict)
    coords_checked: int = 0

    @property
    def passed(self) -> bool:
        return self.max_rel_error < self.tolerance


def rel_error(analytic, numeric):
    a, n = np.abs(analytic), np.abs(numeric)
    return np.abs(analytic - numeric) / np.maximum(np.maximum(a, n), REL_FLOOR)


def _random_tags(n, k, rng):
    n_types = (k - 1) // 2
    tags = []
    while len(tags) < n:
        r = rng.random()
        if r < 0.4 or n_types == 0:
            tags.append(0)
        else:
            t = int(rng.integers(n_types))
            length = int(rng.integers(1, 3))
            tags.append(1 + 2 * t)
            tags.extend([2 + 2 * t] * (length - 1))
    return tags[:n]


def random_batch(cfg: ModelConfig, rng, batch_size=3, max_n=None, text=False) -> Batch:
    """Random ids and BIO-valid gold tags sized for ``cfg``."""
    max_n = max_n or min(cfg.max_len, 5)
    lengths = rng.integers(1, max_n + 1, size=batch_size)
    lengths[0] = max_n
    off = 1 if text else 0
    w = int(lengths.max()) + off
    tok = np.zeros((batch_size, w), dtype=np.int64)
    pos = np.zeros_like(tok)
    posn = np.zeros_like(tok)
    mask = np.zeros_like(tok)
    tmask = np.zeros_like(tok)
    gold = np.zeros_like(tok)
    lab = rng.integers(0, cfg.label_vocab, size=batch_size)
    for i, n in enumerate(lengths):
        if text:
            tok[i, 0] = int(rng.integers(SPECIAL_TOKENS, cfg.token_vocab))
            posn[i, 0] = ATTR_POSITION
        tok[i, off:off + n] = rng.integers(1, cfg.token_vocab, size=n)
        pos[i, off:off + n] = rng.integers(1, cfg.pos_vocab, size=n)
        posn[i, off:off + n] = np.arange(FIRST_TOKEN_POSITION, FIRST_TOKEN_POSITION + n)
        mask[i, : off + n] = 1
        tmask[i, off:off + n] = 1
        gold[i, off:off + n] = _random_tags(int(n), cfg.tag_vocab, rng)
    return Batch(tok, pos, posn, lab, mask, tmask, lengths.astype(np.int64), off, gold)


def perturb(params: Parameters, rng, scale=0.3) -> Parameters:
    """Generic weights: every tensor (biases and zero-initialized blocks included) gets noise."""
    out = params.copy()
    for name, t in out.items():
        out[name] = t + rng.normal(0.0, scale, size=t.shape)
    return out


def tiny_config(**kw) -> ModelConfig:
    base = dict(token_vocab=9, pos_vocab=5, label_vocab=3, tag_vocab=5)
    base.update(kw)
    return ModelConfig.tiny(**base)


def grad_check(
    cfg: ModelConfig | None = None,
    seed: int = 0,
    mode: InjectionMode | None = None,
    tolerance: float = 1e-4,
    run_kind: str = "ner-only",
    head_kind: str = "crf",
    max_coords: int = MAX_COORDS,
    epsilon: float = EPSILON,
) -> GradCheckReport:
    """Compare :func:`network.backward` against central differences.

    Samples at most ``max_coords`` coordinates per tensor. The report passes
    when the worst relative error is strictly below ``tolerance``.
    """
    from ..network import backward, forward_loss

    cfg = cfg or tiny_config()
    mode = mode or InjectionMode()
    rng = np.random.default_rng(seed)
    params = perturb(init_params(cfg, seed, mode), rng)
    batch = random_batch(cfg, rng, text=mode.text)
    weight = 1.0 if run_kind == "joint" else None

    def loss_of(p):
        return forward_loss(p, batch, head_kind, sentence_weight=weight)[0]

    _, trace = forward_loss(params, batch, head_kind, sentence_weight=weight)
    grads = backward(trace, params)

    report = GradCheckReport(0.0, "", tolerance)
    for name in sorted(params.tensors):
        t = params[name]
        size = t.size
        idx = np.arange(size) if size <= max_coords else rng.choice(size, max_coords, replace=False)
        worst = 0.0
        flat = t.reshape(-1)
        for i in idx:
            orig = flat[i]
            flat[i] = orig + epsilon
            up = loss_of(params)
            flat[i] = orig - epsilon
            down = loss_of(params)
            flat[i] = orig
            numeric = (up - down) / (2 * epsilon)
            worst = max(worst, float(rel_error(grads[name].reshape(-1)[i], numeric)))
        report.per_tensor[name] = worst
        report.coords_checked += len(idx)
        if worst >= report.max_rel_error:
            if worst > report.max_rel_error or not report.worst_parameter:
                report.worst_parameter = name
            report.max_rel_error = worst
    return report
