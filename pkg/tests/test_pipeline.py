import io
from dataclasses import replace

import numpy as np
import pytest

from attrner.corpus import Corpus, Sentence, build_vocab, parse_column_file, validate_bio
from attrner.errors import ConfigError, NonFiniteGradientError, PipelineError
from attrner.model import ModelConfig, init_params, save_checkpoint
from attrner.model.params import decays
from attrner.pipeline import (AdamState, TrainConfig, fit, format_results, lr_at, mean_std,
                              optimizer_step, parse_config, run_experiment, run_meta, tag_pipeline,
                              tag_to_text, total_steps, train_ner, warmup_steps)

SMALL = ModelConfig(d_model=16, n_heads=2, n_layers=2, d_ff=24)


@pytest.fixture(scope="module")
def fixture_splits():
    from attrner.synthetic import overfit_fixture
    c = overfit_fixture()
    return {name: Corpus(c.sentences, c.scheme, name) for name in ("train", "dev", "test")}


class TestSchedule:
    def test_endpoints_exact(self):
        cfg = TrainConfig(base_lr=5e-5)
        total = 1000
        warm = warmup_steps(cfg, total)
        assert warm == 100
        assert lr_at(0, total, cfg) == 0.0
        assert lr_at(warm, total, cfg) == 5e-5
        assert lr_at(total, total, cfg) == 0.0

    def test_shape(self):
        cfg = TrainConfig(base_lr=1.0)
        lrs = [lr_at(s, 200, cfg) for s in range(201)]
        assert np.all(np.diff(lrs[:21]) > 0) and np.all(np.diff(lrs[20:]) < 0)
        assert lrs[10] == pytest.approx(0.5)

    def test_no_warmup(self):
        cfg = TrainConfig(base_lr=2.0, warmup_fraction=0.0)
        assert lr_at(0, 10, cfg) == 2.0

    def test_out_of_range(self):
        with pytest.raises(ValueError):
            lr_at(11, 10, TrainConfig())

    def test_total_steps(self):
        assert total_steps(TrainConfig(epochs=3, batch_size=16), 50) == 12


class TestAdamW:
    def _setup(self, tiny):
        p = init_params(tiny, 0)
        g = {n: np.full_like(t, 0.5) for n, t in p.items()}
        return p, g

    def test_first_step_by_hand(self, tiny):
        cfg = TrainConfig(weight_decay=0.1)
        p, g = self._setup(tiny)
        before = p.copy()
        optimizer_step(p, g, AdamState(), 1e-2, cfg)
        for name in ("ner_w", "ner_b", "crf_trans", "emb_ln_g"):
            w0 = before[name]
            # bias-corrected moments equal g and g^2 after one step
            upd = 0.5 / (0.5 + cfg.adam_eps)
            want = w0 - (1e-2 * 0.1 * w0 if decays(name) else 0.0) - 1e-2 * upd
            assert np.allclose(p[name], want, rtol=0, atol=1e-12), name

    def test_decay_exclusions(self):
        assert decays("ner_w") and decays("layer0.q_w")
        assert not any(decays(n) for n in ("ner_b", "emb_ln_g", "crf_trans", "crf_start", "crf_end"))

    def test_zero_grads_only_decay(self, tiny):
        cfg = TrainConfig(weight_decay=0.5)
        p = init_params(tiny, 0)
        before = p.copy()
        optimizer_step(p, p.zeros_like(), AdamState(), 0.1, cfg)
        assert np.array_equal(p["ner_b"], before["ner_b"])
        assert np.allclose(p["ner_w"], 0.95 * before["ner_w"], atol=1e-15)

    def test_no_decay_zero_grads_is_identity(self, tiny):
        p = init_params(tiny, 0)
        before = p.copy()
        optimizer_step(p, p.zeros_like(), AdamState(), 0.1, TrainConfig(weight_decay=0.0))
        assert all(np.array_equal(p[n], before[n]) for n in p)

    def test_nonfinite_touches_nothing(self, tiny):
        p, g = self._setup(tiny)
        g["ner_w"][0, 0] = np.nan
        before = p.copy()
        state = AdamState()
        with pytest.raises(NonFiniteGradientError):
            optimizer_step(p, g, state, 0.1, TrainConfig())
        assert state.step == 0
        assert all(np.array_equal(p[n], before[n]) for n in p)


class TestConfig:
    def test_parse(self):
        t, m = parse_config("base_lr = 0.01\n# comment\nepochs=4  # trailing\nd_model = 8\nseeds = 1, 2\n"
                            "constrained = false\nmode = text\n")
        assert (t.base_lr, t.epochs, t.seeds, t.constrained, t.mode) == (0.01, 4, (1, 2), False, "text")
        assert m.d_model == 8

    def test_unknown_key(self):
        with pytest.raises(ConfigError, match="line 2: unknown config key"):
            parse_config("epochs = 3\nlearning_rate = 1\n")

    @pytest.mark.parametrize("text", ["token_vocab = 5", "epochs", "epochs = x", "mode = sideways",
                                      "epochs = 0", "constrained = maybe"])
    def test_rejects(self, text):
        with pytest.raises(ConfigError):
            parse_config(text)

    def test_defaults_follow_recipe(self):
        c = TrainConfig()
        assert (c.base_lr, c.warmup_fraction, c.epochs, c.patience_epochs, c.eval_every_steps,
                c.batch_size, c.seeds) == (5e-5, 0.1, 30, 5, 500, 16, (1, 2, 3))


class TestFit:
    def _zero_step(self, p, idx, rng):
        return 1.0, p.zeros_like()

    def test_frozen_model_stops_after_patience(self, tiny):
        cfg = TrainConfig(epochs=10, patience_epochs=1, weight_decay=0.0)
        r = fit(init_params(tiny, 0), 20, self._zero_step, lambda p: 0.5, cfg, 0)
        assert r.epochs_run == 2
        assert r.best_step == 2 and r.best_score == 0.5

    def test_eval_cadence(self, tiny):
        cfg = TrainConfig(epochs=3, patience_epochs=3, batch_size=16, eval_every_steps=3)
        r = fit(init_params(tiny, 0), 50, self._zero_step, lambda p: 0.0, cfg, 0)
        assert [(e.step, e.epoch_end) for e in r.curve] == [
            (3, False), (4, True), (6, False), (8, True), (9, False), (12, False), (12, True)]

    def test_best_is_first_maximum(self, tiny):
        scores = iter([0.1, 0.4, 0.3, 0.4, 0.2])
        cfg = TrainConfig(epochs=5, patience_epochs=5)
        r = fit(init_params(tiny, 0), 10, self._zero_step, lambda p: next(scores), cfg, 0)
        assert r.best_score == 0.4 and r.best_step == 2

    def test_empty_train(self, tiny):
        with pytest.raises(ConfigError):
            fit(init_params(tiny, 0), 0, self._zero_step, lambda p: 0.0, TrainConfig(), 0)


class TestTraining:
    def test_loss_decreases(self, fixture_splits):
        from attrner.pipeline import prepare_vocab
        c = fixture_splits["train"]
        cfg = TrainConfig.desk(epochs=5, patience_epochs=5)
        r = train_ner(cfg, SMALL, c, c, prepare_vocab(c), 0)
        losses = [e.train_loss for e in r.curve[:5]]
        assert losses[-1] < losses[0]
        assert r.best_score == max(e.score for e in r.curve)

    def test_deterministic(self, fixture_splits):
        cfg = TrainConfig.desk(epochs=2, seeds=(4,), mode="attention", channels="label,pos")
        a = format_results([run_experiment(cfg, SMALL, fixture_splits)])
        b = format_results([run_experiment(cfg, SMALL, fixture_splits)])
        assert a == b

    def test_rejects_scheme_mismatch(self, fixture_splits):
        from attrner.synthetic import ambiguous_corpus
        other = ambiguous_corpus(5, 0)
        with pytest.raises(ConfigError):
            train_ner(TrainConfig.desk(epochs=1), SMALL, fixture_splits["train"], other,
                      build_vocab(fixture_splits["train"]), 0)


class TestReport:
    def test_mean_std(self):
        assert mean_std([0.85, 0.86]) == "85.50±0.50"
        assert mean_std([0.9]) == "90.00±0.00"

    def test_pipeline_report(self, fixture_splits, tmp_path):
        cfg = TrainConfig.desk(epochs=1, seeds=(1, 2), run_kind="pipeline", mode="classifier",
                               channels="label,pos")
        r = run_experiment(cfg, SMALL, fixture_splits, tmp_path)
        text = format_results([r])
        lines = text.splitlines()
        assert lines[1].endswith("labels=predicted")
        assert sum(line.startswith("seed\t") for line in lines) == 2
        assert "test_gold_labels=" in lines[2] and "classifier_acc=" in lines[2]
        agg = lines[-1].split("\t")
        assert agg[0] == "aggregate" and agg[2].startswith("test=") and "±" in agg[2]
        assert all(s.bio_valid for s in r.per_seed)
        assert sorted(p.name for p in tmp_path.iterdir()) == [
            f"classifier_label+pos_pipeline_crf_seed{s}.{k}.ckpt" for s in (1, 2)
            for k in ("classifier", "ner")]

    def test_gold_label_source(self, fixture_splits):
        cfg = TrainConfig.desk(epochs=1, seeds=(1,), run_kind="pipeline", mode="text",
                               label_source="gold")
        r = run_experiment(cfg, SMALL, fixture_splits)
        assert r.per_seed[0].test_f1 == r.per_seed[0].test_f1_gold
        assert "labels=gold" in format_results([r])


@pytest.fixture(scope="module")
def ckpts(fixture_splits, tmp_path_factory):
    out = tmp_path_factory.mktemp("ckpt")
    cfg = TrainConfig.desk(epochs=2, seeds=(1,), run_kind="pipeline", mode="text")
    run_experiment(cfg, SMALL, fixture_splits, out)
    stem = out / "text_label_pipeline_crf_seed1"
    return str(stem) + ".classifier.ckpt", str(stem) + ".ner.ckpt"


class TestTagPipeline:
    def test_round_trip(self, ckpts, fixture_splits):
        clf, ner = ckpts
        raw = [replace(s, gold_tags=None, sentence_label=None) for s in fixture_splits["test"].sentences[:8]]
        tagged = tag_pipeline(raw, clf, ner)
        text = tag_to_text(raw, clf, ner)
        back = parse_column_file(io.StringIO(text), "x", tagged.scheme)
        assert [s.tokens for s in back] == [s.tokens for s in raw]
        assert [s.gold_tags for s in back] == [s.gold_tags for s in tagged]
        assert all(s.sentence_label is not None for s in tagged)
        assert all(not validate_bio(s.gold_tags, tagged.scheme) for s in tagged)

    def test_unknown_tokens(self, ckpts):
        clf, ner = ckpts
        s = Sentence(["qqq", "zzz", "www"], ["FOO", "BAR", "BAZ"])
        out = tag_pipeline([s], clf, ner)
        assert len(out.sentences[0].gold_tags) == 3

    def test_needs_classifier(self, ckpts):
        with pytest.raises(PipelineError):
            tag_pipeline([Sentence(["a"], ["DT"])], None, ckpts[1])

    def test_wrong_kinds(self, ckpts):
        clf, ner = ckpts
        with pytest.raises(PipelineError):
            tag_pipeline([Sentence(["a"], ["DT"])], ner, ner)
        with pytest.raises(PipelineError):
            tag_pipeline([Sentence(["a"], ["DT"])], clf, clf)

    def test_vocab_mismatch(self, ckpts, fixture_splits, tmp_path):
        from attrner.synthetic import ambiguous_corpus
        clf, _ = ckpts
        other = ambiguous_corpus(10, 0)
        v = build_vocab(other)
        cfg = TrainConfig.desk(mode="text", run_kind="pipeline")
        path = tmp_path / "other.ckpt"
        save_checkpoint(init_params(SMALL.with_vocab(v), 0, cfg.injection), path, run_meta(cfg, v, "ner", 0))
        with pytest.raises(PipelineError):
            tag_pipeline([Sentence(["a"], ["DT"])], clf, str(path))
