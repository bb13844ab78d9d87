"""Training loop, AdamW with warmup-linear schedule, experiments and reporting."""
from __future__ import annotations

import math
import os
from dataclasses import dataclass, field, fields, replace

import numpy as np

from .classifier import (
    accuracy,
    classifier_config,
    classify_sentences,
    entailment_batch,
    entailment_instances,
    template_tokens,
)
from .corpus import Batch, Corpus, Sentence, Vocabulary, build_vocab, encode_batch, serialize_corpus
from .errors import ConfigError, NonFiniteGradientError, PipelineError
from .heads import HEAD_KINDS, TemplateSet, check_head
from .injection import SITES, InjectionMode
from .model.config import ModelConfig
from .model.params import Parameters, decays, init_params, load_checkpoint, save_checkpoint
from .network import RUN_KINDS, backward, entailment_loss, forward_loss, predict_tags
from .tagging import PRF, micro_f1, spans_from_tags, validate_bio

LABEL_SOURCES = ("gold", "predicted")


# ------------------------------------------------------------------ config

@dataclass(frozen=True)
class TrainConfig:
    """Optimisation and experiment settings.

    ``mode``/``channels`` pick the injection site; ``label_source`` says
    which sentence labels a pipeline run injects at evaluation time (training
    always uses gold-derived labels). ``stop_at_f1`` > 0 ends a run as soon as
    dev F1 reaches it (overfit checks); 0 disables it.
    """

    base_lr: float = 5e-5
    warmup_fraction: float = 0.1
    epochs: int = 30
    patience_epochs: int = 5
    eval_every_steps: int = 500
    batch_size: int = 16
    seeds: tuple[int, ...] = (1, 2, 3)
    mode: str = "none"
    channels: str = "label"
    run_kind: str = "ner-only"
    head_kind: str = "crf"
    weight_decay: float = 0.01
    sentence_weight: float = 1.0
    constrained: bool = True
    label_source: str = "predicted"
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8
    stop_at_f1: float = 0.0

    def __post_init__(self):
        for name in ("epochs", "patience_epochs", "eval_every_steps", "batch_size"):
            v = getattr(self, name)
            if not isinstance(v, int) or isinstance(v, bool) or v < 1:
                raise ConfigError(f"{name} must be an integer >= 1, got {v!r}")
        if not 0.0 <= self.warmup_fraction < 1.0:
            raise ConfigError("warmup_fraction must lie in [0, 1)")
        if not self.seeds:
            raise ConfigError("at least one seed is required")
        if self.base_lr < 0 or self.weight_decay < 0:
            raise ConfigError("base_lr and weight_decay must be non-negative")
        if self.run_kind not in RUN_KINDS:
            raise ConfigError(f"unknown run kind {self.run_kind!r}; expected one of {RUN_KINDS}")
        check_head(self.head_kind)
        if self.mode not in SITES:
            raise ConfigError(f"unknown mode {self.mode!r}; expected one of {SITES}")
        if self.label_source not in LABEL_SOURCES:
            raise ConfigError(f"label_source must be one of {LABEL_SOURCES}")
        self.injection  # validates mode/channels

    @property
    def injection(self) -> InjectionMode:
        return InjectionMode.parse(self.mode, self.channels)

    @property
    def channels_label(self) -> str:
        return self.injection.channels

    @classmethod
    def desk(cls, **kw) -> "TrainConfig":
        """Settings for training the small models from scratch (see README)."""
        base = dict(base_lr=3e-3, epochs=30, patience_epochs=5, batch_size=16)
        base.update(kw)
        return cls(**base)


def _coerce(text: str, default, name: str):
    try:
        if isinstance(default, bool):
            low = text.lower()
            if low not in ("true", "false", "1", "0", "yes", "no"):
                raise ValueError
            return low in ("true", "1", "yes")
        if isinstance(default, int):
            return int(text)
        if isinstance(default, float):
            return float(text)
        if isinstance(default, tuple):
            return tuple(int(x) for x in text.replace(" ", "").split(",") if x)
    except ValueError:
        raise ConfigError(f"bad value {text!r} for {name}") from None
    return text


def parse_config(text: str, train: TrainConfig | None = None, model: ModelConfig | None = None):
    """Apply ``key = value`` lines to a (TrainConfig, ModelConfig) pair.

    Keys must name a field of either dataclass; ``#`` starts a comment.
    Vocabulary sizes are derived from data and cannot be set here.
    """
    train = train or TrainConfig.desk()
    model = model or ModelConfig()
    t_fields = {f.name: getattr(train, f.name) for f in fields(TrainConfig)}
    m_fields = {f.name: getattr(model, f.name) for f in fields(ModelConfig)
                if not f.name.endswith("_vocab")}
    t_upd, m_upd = {}, {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value'")
        key, value = (p.strip() for p in line.split("=", 1))
        if key in t_fields:
            t_upd[key] = _coerce(value, t_fields[key], key)
        elif key in m_fields:
            m_upd[key] = _coerce(value, m_fields[key], key)
        else:
            raise ConfigError(f"line {lineno}: unknown config key {key!r}")
    return replace(train, **t_upd), replace(model, **m_upd)


def load_config(path, train=None, model=None):
    with open(path, encoding="utf-8") as fh:
        return parse_config(fh.read(), train, model)


# --------------------------------------------------------- optimisation

def total_steps(cfg: TrainConfig, n_train: int) -> int:
    return cfg.epochs * math.ceil(n_train / cfg.batch_size)


def warmup_steps(cfg: TrainConfig, total: int) -> int:
    return int(cfg.warmup_fraction * total)


def lr_at(step: int, total: int, cfg: TrainConfig) -> float:
    """Linear ramp from 0 to ``base_lr`` over the warmup, then linear decay to 0."""
    if not 0 <= step <= total:
        raise ValueError(f"step {step} outside [0, {total}]")
    warm = warmup_steps(cfg, total)
    if step < warm:
        return cfg.base_lr * (step / warm)
    if total == warm:
        return cfg.base_lr
    return cfg.base_lr * ((total - step) / (total - warm))


@dataclass
class AdamState:
    step: int = 0
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)


def optimizer_step(params: Parameters, grads, state: AdamState, lr: float, cfg: TrainConfig) -> AdamState:
    """One AdamW update in place; bias-corrected moments, decoupled decay.

    Raises :class:`NonFiniteGradientError` before touching any tensor if a
    gradient holds NaN or infinity.
    """
    for name in sorted(grads):
        g = grads[name]
        if g.shape != params[name].shape:
            raise ConfigError(f"gradient shape {g.shape} != parameter shape for {name}")
        if not np.all(np.isfinite(g)):
            bad = int(np.size(g) - np.isfinite(g).sum())
            raise NonFiniteGradientError(name, f"{bad} non-finite entries")
    state.step += 1
    b1, b2 = cfg.beta1, cfg.beta2
    c1 = 1.0 - b1 ** state.step
    c2 = 1.0 - b2 ** state.step
    for name in sorted(grads):
        g = grads[name]
        p = params[name]
        m = state.m.setdefault(name, np.zeros_like(p))
        v = state.v.setdefault(name, np.zeros_like(p))
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * (g * g)
        update = (m / c1) / (np.sqrt(v / c2) + cfg.adam_eps)
        if cfg.weight_decay and decays(name):
            p -= lr * cfg.weight_decay * p
        p -= lr * update
    return state


# ------------------------------------------------------------- training

@dataclass
class EvalPoint:
    step: int
    epoch: int
    score: float
    train_loss: float
    epoch_end: bool


@dataclass
class FitResult:
    best_params: Parameters
    best_score: float
    best_step: int
    curve: list[EvalPoint]
    epochs_run: int
    total_steps: int


def _trim(batch: Batch) -> Batch:
    w = int(batch.attention_mask.sum(axis=1).max())
    if w == batch.width:
        return batch
    return Batch(
        batch.token_ids[:, :w], batch.pos_ids[:, :w], batch.position_ids[:, :w],
        batch.sentence_label_ids, batch.attention_mask[:, :w], batch.tag_mask[:, :w],
        batch.lengths, batch.tag_offset,
        None if batch.gold_tag_ids is None else batch.gold_tag_ids[:, :w],
    )


def fit(params: Parameters, n_train: int, step_fn, eval_fn, cfg: TrainConfig, seed: int) -> FitResult:
    """Generic minibatch loop with periodic evaluation and early stopping.

    ``step_fn(params, idx, rng)`` returns ``(loss, grads)`` for the training
    items ``idx``; ``eval_fn(params)`` returns the dev score (higher is better).
    Evaluation happens every ``eval_every_steps`` updates and at every epoch
    end; patience counts epochs without a strictly better score.
    """
    if n_train < 1:
        raise ConfigError("empty training set")
    order_rng = np.random.default_rng([seed, 1])
    drop_rng = np.random.default_rng([seed, 2])
    total = total_steps(cfg, n_train)
    state = AdamState()
    curve: list[EvalPoint] = []
    best_score, best_step, best = -math.inf, 0, params.copy()
    stale, step, epochs_run = 0, 0, 0
    losses: list[float] = []

    def evaluate(epoch, epoch_end):
        nonlocal best_score, best_step, best, losses
        score = float(eval_fn(params))
        mean_loss = float(np.mean(losses)) if losses else math.nan
        losses = []
        curve.append(EvalPoint(step, epoch, score, mean_loss, epoch_end))
        if score > best_score:
            best_score, best_step, best = score, step, params.copy()
            return True
        return False

    for epoch in range(1, cfg.epochs + 1):
        epochs_run = epoch
        improved = False
        order = order_rng.permutation(n_train)
        for lo in range(0, n_train, cfg.batch_size):
            idx = order[lo:lo + cfg.batch_size]
            loss, grads = step_fn(params, idx, drop_rng)
            losses.append(loss)
            optimizer_step(params, grads, state, lr_at(step, total, cfg), cfg)
            step += 1
            if step % cfg.eval_every_steps == 0:
                improved |= evaluate(epoch, False)
        improved |= evaluate(epoch, True)
        if cfg.stop_at_f1 > 0 and best_score >= cfg.stop_at_f1:
            break
        stale = 0 if improved else stale + 1
        if stale >= cfg.patience_epochs:
            break
    return FitResult(best, best_score, best_step, curve, epochs_run, total)


# ------------------------------------------------------------ NER tasks

def _labels_for(corpus: Corpus, source: str, predicted=None):
    if source == "gold":
        return [s.sentence_label for s in corpus]
    if predicted is None:
        raise PipelineError("predicted labels requested but none supplied")
    return list(predicted)


def predict_corpus(params: Parameters, sentences, vocab: Vocabulary, head_kind: str,
                   constrained: bool = True, labels=None, chunk: int = 128) -> list[list[int]]:
    """Decoded tag ids per sentence; ``labels`` overrides the injected sentence labels."""
    mode = params.mode
    out = []
    for lo in range(0, len(sentences), chunk):
        part = sentences[lo:lo + chunk]
        lab = None if labels is None else labels[lo:lo + chunk]
        batch = encode_batch(part, vocab, text_mode=mode.text, labels=lab,
                             max_len=params.config.max_len,
                             require_labels=mode.use_label and mode.site != "text")
        out.extend(predict_tags(params, batch, head_kind, mode=mode, constrained=constrained,
                                scheme=vocab.scheme))
    return out


def span_f1(sentences, predictions, scheme) -> PRF:
    gold = [spans_from_tags(s.gold_tags, scheme) for s in sentences]
    pred = [spans_from_tags(p, scheme, strict=False) for p in predictions]
    return micro_f1(gold, pred)


def evaluate_ner(params, corpus: Corpus, vocab, head_kind, constrained=True, labels=None):
    preds = predict_corpus(params, corpus.sentences, vocab, head_kind, constrained, labels)
    return span_f1(corpus.sentences, preds, corpus.scheme), preds


def _check_corpora(train: Corpus, dev: Corpus, vocab: Vocabulary):
    if not train.sentences or not dev.sentences:
        raise ConfigError("training and dev corpora must be non-empty")
    for c in (train, dev):
        if c.scheme != vocab.scheme:
            raise ConfigError(f"{c.split_name} corpus scheme differs from the vocabulary's")


def train_ner(cfg: TrainConfig, model_cfg: ModelConfig, train: Corpus, dev: Corpus,
              vocab: Vocabulary, seed: int) -> FitResult:
    """Train one NER model (gold-derived sentence labels where the mode needs them)."""
    _check_corpora(train, dev, vocab)
    mode = cfg.injection
    model_cfg = model_cfg.with_vocab(vocab)
    params = init_params(model_cfg, seed, mode)
    joint = cfg.run_kind == "joint"
    batch_all = encode_batch(train.sentences, vocab, text_mode=mode.text, max_len=model_cfg.max_len,
                             require_labels=joint or mode.use_label)

    def step_fn(p, idx, rng):
        batch = _trim(batch_all.take(idx))
        loss, trace = forward_loss(p, batch, cfg.head_kind,
                                   sentence_weight=cfg.sentence_weight if joint else None,
                                   constrained=cfg.constrained, train=True, rng=rng)
        return loss, backward(trace, p)

    def eval_fn(p):
        return evaluate_ner(p, dev, vocab, cfg.head_kind, cfg.constrained)[0].f1

    return fit(params, len(train), step_fn, eval_fn, cfg, seed)


def train_classifier(cfg: TrainConfig, model_cfg: ModelConfig, train: Corpus, dev: Corpus,
                     vocab: Vocabulary, templates: TemplateSet, seed: int) -> FitResult:
    """Train the entailment classifier; dev score is sentence-label accuracy."""
    _check_corpora(train, dev, vocab)
    cands = [lab for lab in vocab.id_to_label if lab in templates.templates]
    inst, targets = entailment_instances(train.sentences, templates, cands)
    ccfg = classifier_config(model_cfg.with_vocab(vocab), templates)
    params = init_params(ccfg, seed, InjectionMode())
    batch_all = entailment_batch(inst, vocab, ccfg.max_len)

    def step_fn(p, idx, rng):
        loss, trace = entailment_loss(p, _trim(batch_all.take(idx)), targets[idx], True, rng)
        return loss, backward(trace, p)

    def eval_fn(p):
        return accuracy(dev, classify_sentences(dev.sentences, p, templates, vocab)[0])

    return fit(params, len(inst), step_fn, eval_fn, cfg, seed)


# ---------------------------------------------------------- experiments

@dataclass
class SeedResult:
    seed: int
    dev_f1: float
    test_f1: float
    checkpoint: str | None
    curve: list[EvalPoint]
    epochs_run: int
    test_f1_gold: float | None = None
    classifier_accuracy: float | None = None
    bio_valid: bool = True
    test_counts: tuple[int, int, int] | None = None  # (tp, fp, fn) behind test_f1


@dataclass
class RunResult:
    cfg: TrainConfig
    per_seed: list[SeedResult]

    @property
    def test_scores(self) -> np.ndarray:
        return np.array([r.test_f1 for r in self.per_seed])

    @property
    def mean(self) -> float:
        return float(self.test_scores.mean())

    @property
    def std(self) -> float:
        # population standard deviation over exactly the configured seeds
        return float(self.test_scores.std())

    @property
    def label_source(self) -> str:
        return self.cfg.label_source if self.cfg.run_kind == "pipeline" else "gold"


def mean_std(scores) -> str:
    """Percent-scale ``mean±std`` with two decimals, e.g. ``85.06±0.19``."""
    a = np.asarray(scores, dtype=np.float64) * 100.0
    return f"{a.mean():.2f}±{a.std():.2f}"


def prepare_vocab(train: Corpus, templates: TemplateSet | None = None) -> Vocabulary:
    extra = template_tokens(templates) if templates is not None else ()
    return build_vocab(train, extra_tokens=extra)


def run_experiment(cfg: TrainConfig, model_cfg: ModelConfig, corpora: dict[str, Corpus],
                   out_dir=None, templates: TemplateSet | None = None,
                   vocab: Vocabulary | None = None) -> RunResult:
    """Train and test once per seed; checkpoints go to ``out_dir`` if given."""
    train, dev, test = corpora["train"], corpora["dev"], corpora["test"]
    pipeline = cfg.run_kind == "pipeline"
    if pipeline and templates is None:
        templates = TemplateSet.default(_label_names(train))
    vocab = vocab or prepare_vocab(train, templates)
    results = []
    for seed in cfg.seeds:
        fitted = train_ner(cfg, model_cfg, train, dev, vocab, seed)
        params = fitted.best_params
        ckpt = None
        meta = run_meta(cfg, vocab, "ner", seed)
        gold_f1, preds = evaluate_ner(params, test, vocab, cfg.head_kind, cfg.constrained)
        bio_ok = all(not validate_bio(p, vocab.scheme) for p in preds)
        res = SeedResult(seed, fitted.best_score, gold_f1.f1, None, fitted.curve, fitted.epochs_run,
                         test_counts=(gold_f1.tp, gold_f1.fp, gold_f1.fn))
        if pipeline:
            clf = train_classifier(cfg, model_cfg, train, dev, vocab, templates, seed)
            predicted, _ = classify_sentences(test.sentences, clf.best_params, templates, vocab)
            res.classifier_accuracy = accuracy(test, predicted)
            res.test_f1_gold = gold_f1.f1
            if cfg.label_source == "predicted":
                pf, preds = evaluate_ner(params, test, vocab, cfg.head_kind, cfg.constrained, predicted)
                res.test_f1 = pf.f1
                res.test_counts = (pf.tp, pf.fp, pf.fn)
                bio_ok = bio_ok and all(not validate_bio(p, vocab.scheme) for p in preds)
            if out_dir is not None:
                save_checkpoint(clf.best_params, _ckpt_path(out_dir, cfg, seed, "classifier"),
                                dict(run_meta(cfg, vocab, "classifier", seed), templates=templates.dumps()))
        res.bio_valid = bio_ok
        if out_dir is not None:
            ckpt = _ckpt_path(out_dir, cfg, seed, "ner")
            save_checkpoint(params, ckpt, meta)
            res.checkpoint = os.path.basename(ckpt)
        results.append(res)
    return RunResult(cfg, results)


def _label_names(corpus: Corpus) -> list[str]:
    from .corpus import label_inventory
    return label_inventory(corpus.scheme)


def cell_name(cfg: TrainConfig) -> str:
    return f"{cfg.mode}_{cfg.channels_label.replace(',', '+')}_{cfg.run_kind}_{cfg.head_kind}"


def _ckpt_path(out_dir, cfg, seed, kind):
    os.makedirs(out_dir, exist_ok=True)
    return os.path.join(out_dir, f"{cell_name(cfg)}_seed{seed}.{kind}.ckpt")


def run_meta(cfg: TrainConfig, vocab: Vocabulary, kind: str, seed: int) -> dict:
    return {
        "kind": kind,
        "seed": seed,
        "head_kind": cfg.head_kind,
        "run_kind": cfg.run_kind,
        "constrained": cfg.constrained,
        "train_label_source": "gold",
        "eval_label_source": cfg.label_source if cfg.run_kind == "pipeline" else "gold",
        "vocab": vocab.dumps(),
    }


def format_results(results) -> str:
    """Line-oriented report: one header per cell, one line per seed, one aggregate line."""
    lines = ["# attrner results: span micro-F1 (percent); aggregate is mean±std over seeds"]
    for r in results:
        cfg = r.cfg
        lines.append(f"cell\tmode={cfg.mode}\tchannels={cfg.channels_label}\t"
                     f"run-kind={cfg.run_kind}\thead={cfg.head_kind}\tlabels={r.label_source}")
        for s in r.per_seed:
            extra = ""
            if s.test_f1_gold is not None:
                extra += f"\ttest_gold_labels={100 * s.test_f1_gold:.2f}"
            if s.classifier_accuracy is not None:
                extra += f"\tclassifier_acc={100 * s.classifier_accuracy:.2f}"
            lines.append(f"seed\t{s.seed}\tdev={100 * s.dev_f1:.2f}\ttest={100 * s.test_f1:.2f}"
                         f"\tepochs={s.epochs_run}{extra}")
        lines.append(f"aggregate\tdev={mean_std([s.dev_f1 for s in r.per_seed])}"
                     f"\ttest={mean_std([s.test_f1 for s in r.per_seed])}")
    return "\n".join(lines) + "\n"


def write_results(results, path):
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(format_results(results))


# ------------------------------------------------------------ inference

def _load_ner(path):
    params, meta = load_checkpoint(path)
    if meta.get("kind") != "ner":
        raise PipelineError(f"{path} is not an NER checkpoint")
    return params, meta


def tag_pipeline(sentences, classifier_ckpt, ner_ckpt) -> Corpus:
    """Predict each sentence's label, inject it, decode tags.

    Returns a corpus whose sentences carry predicted tags and labels, ready
    for :func:`serialize_corpus`.
    """
    params, meta = _load_ner(ner_ckpt)
    vocab = Vocabulary.loads(meta["vocab"])
    labels = None
    needs_label = params.mode.use_label
    if classifier_ckpt is not None:
        clf, cmeta = load_checkpoint(classifier_ckpt)
        if cmeta.get("kind") != "classifier":
            raise PipelineError(f"{classifier_ckpt} is not a classifier checkpoint")
        if cmeta.get("vocab") != meta["vocab"]:
            raise PipelineError("classifier and NER checkpoints use different vocabularies")
        templates = TemplateSet.loads(cmeta["templates"])
        labels, _ = classify_sentences(sentences, clf, templates, vocab)
    elif needs_label:
        raise PipelineError(f"mode {params.mode} needs a classifier checkpoint")
    preds = predict_corpus(params, list(sentences), vocab, meta["head_kind"],
                           meta.get("constrained", True), labels)
    out = []
    for i, (s, p) in enumerate(zip(sentences, preds)):
        out.append(replace(s, gold_tags=list(p), sentence_label=labels[i] if labels else None,
                           violations=()))
    return Corpus(out, vocab.scheme, "tagged")


def tag_to_text(sentences, classifier_ckpt, ner_ckpt) -> str:
    return serialize_corpus(tag_pipeline(sentences, classifier_ckpt, ner_ckpt))


__all__ = [
    "TrainConfig", "parse_config", "load_config", "lr_at", "AdamState", "optimizer_step",
    "fit", "FitResult", "EvalPoint", "train_ner", "train_classifier", "evaluate_ner",
    "predict_corpus", "span_f1", "run_experiment", "RunResult", "SeedResult", "mean_std",
    "format_results", "write_results", "tag_pipeline", "tag_to_text", "prepare_vocab",
    "HEAD_KINDS", "Sentence",
]
