import numpy as np
import pytest

from attrner.classifier import classifier_config, classify_sentence, classify_sentences, entailment_instances
from attrner.corpus import Sentence, label_inventory
from attrner.crf import CrfParams, crf_nll
from attrner.errors import ConfigError, TemplateError
from attrner.heads import (ENTAIL, NOT_ENTAIL, SEP, EOS, TemplateSet, binary_cross_entropy,
                           joint_loss, reformulate_entailment, sentence_cross_entropy, sigmoid)
from attrner.injection import InjectionMode
from attrner.model import ModelConfig, encode, init_params
from attrner.model.gradcheck import perturb, random_batch
from attrner.network import backward, forward_loss
from attrner.pipeline import TrainConfig, prepare_vocab, train_classifier


@pytest.fixture
def templates():
    return TemplateSet.default(["None", "Disease-one", "Disease-more", "Gene-one", "Gene-more"])


class TestTemplates:
    def test_default_wording(self):
        t = TemplateSet.default(["Disease", "None"])
        assert t.templates["Disease"] == "It contains a disease mention"
        assert t.render("None")[-1] == "mention"

    def test_count_labels(self, templates):
        assert templates.templates["Gene-more"] == "It contains more than one gene mention"

    def test_round_trip(self, templates, tmp_path):
        p = tmp_path / "t.tsv"
        p.write_text(templates.dumps())
        assert TemplateSet.load(p) == templates

    @pytest.mark.parametrize("text", ["Disease\n", "Disease\ta\tb\n", "\tx\n"])
    def test_malformed(self, text):
        with pytest.raises(TemplateError):
            TemplateSet.loads(text)

    def test_missing_template(self, templates):
        with pytest.raises(TemplateError):
            templates.render("Chemical-one")


class TestReformulation:
    def test_worked_example(self):
        t = TemplateSet({"Disease": "It contains a disease mention", "None": "It contains no entity mention"})
        s = Sentence(["Torsades", "de", "Pointes"], ["NNP"] * 3, [1, 2, 2], "Disease")
        inst = reformulate_entailment(s, t)
        assert inst[0].tokens == ["Torsades", "de", "Pointes", SEP, "It", "contains", "a",
                                  "disease", "mention", EOS]
        assert [i.target for i in inst] == [ENTAIL, NOT_ENTAIL]

    def test_exactly_one_entail(self, fixture_corpus, templates):
        for s in fixture_corpus:
            inst = reformulate_entailment(s, templates)
            assert len(inst) == 5
            assert sum(i.target == ENTAIL for i in inst) == 1

    def test_unlabelled_has_no_targets(self, templates):
        s = Sentence(["a"], ["DT"])
        assert all(i.target is None for i in reformulate_entailment(s, templates))

    def test_gold_outside_candidates(self, templates):
        s = Sentence(["a"], ["DT"], sentence_label="Chemical-one")
        with pytest.raises(TemplateError):
            reformulate_entailment(s, templates)

    def test_targets_vector(self, fixture_corpus, templates):
        inst, t = entailment_instances(fixture_corpus.sentences[:4], templates, list(templates.templates))
        assert t.shape == (20,) and t.sum() == 4


class TestClassifier:
    def test_zero_weights_tie_to_lowest_id(self, fixture_corpus, templates):
        v = prepare_vocab(fixture_corpus, templates)
        p = init_params(classifier_config(ModelConfig.tiny().with_vocab(v), templates), 0)
        p["ent_w"][:] = 0.0
        p["ent_b"][:] = 0.0
        lab, probs = classify_sentence(fixture_corpus.sentences[0], p, templates, v)
        assert set(probs.values()) == {0.5}
        assert lab == v.id_to_label[min(v.label_to_id[c] for c in templates.templates)]

    def test_candidate_order_independent(self, fixture_corpus, templates, rng):
        v = prepare_vocab(fixture_corpus, templates)
        p = perturb(init_params(classifier_config(ModelConfig.tiny().with_vocab(v), templates), 0), rng)
        shuffled = TemplateSet(dict(reversed(list(templates.templates.items()))))
        s = fixture_corpus.sentences[:6]
        a, pa = classify_sentences(s, p, templates, v)
        b, pb = classify_sentences(s, p, shuffled, v)
        assert a == b and np.array_equal(pa, pb)

    def test_learns_fixture(self, fixture_corpus):
        t = TemplateSet.default(label_inventory(fixture_corpus.scheme))
        v = prepare_vocab(fixture_corpus, t)
        cfg = TrainConfig.desk(epochs=80, patience_epochs=80, stop_at_f1=0.96)
        r = train_classifier(cfg, ModelConfig(d_model=16, n_heads=2, n_layers=2, d_ff=24),
                             fixture_corpus, fixture_corpus, v, t, 0)
        assert r.best_score >= 0.95


class TestSentenceHead:
    def test_uniform_at_zero_weights(self, tiny, rng):
        p = init_params(tiny, 0)
        p["sent_w"][:] = 0.0
        p["sent_b"][:] = 0.0
        b = random_batch(tiny, rng, batch_size=2)
        loss, tr = forward_loss(p, b, "softmax", sentence_weight=1.0)
        assert np.allclose(tr.sentence_logits, 0.0)
        assert tr.sentence_loss == pytest.approx(np.log(tiny.label_vocab), abs=1e-12)

    def test_reads_only_classification_slot(self, tiny, rng):
        p = perturb(init_params(tiny, 0), rng)
        b = random_batch(tiny, rng, batch_size=2)
        _, tr = forward_loss(p, b, "softmax", sentence_weight=1.0)
        tr.d_em = None
        g = backward(tr, p)
        assert not g["ner_w"].any()
        assert np.abs(g["sent_w"]).max() > 0

    def test_rejects_missing_label(self):
        with pytest.raises(ConfigError):
            sentence_cross_entropy(np.zeros((1, 3)), [-1])

    @pytest.mark.parametrize("head", ["softmax", "crf"])
    def test_weight_zero_is_bit_identical(self, tiny, rng, head):
        p = perturb(init_params(tiny, 0), rng)
        b = random_batch(tiny, rng)
        base, t0 = forward_loss(p, b, head)
        zero, t1 = forward_loss(p, b, head, sentence_weight=0.0)
        assert base == zero
        g0, g1 = backward(t0, p), backward(t1, p)
        assert all(np.array_equal(g0[n], g1[n]) for n in g0)


class TestJointLoss:
    def test_is_sum_of_parts(self, rng):
        logits, scores = rng.normal(size=3), rng.normal(size=(4, 5))
        gold = [1, 2, 0, 3]
        c = CrfParams(rng.normal(size=(5, 5)), rng.normal(size=5), rng.normal(size=5))
        out = joint_loss(logits, 2, scores, gold, "crf", c, sentence_weight=0.7)
        ce = -(logits[2] - np.log(np.exp(logits).sum()))
        assert out.sentence_loss == pytest.approx(ce, abs=1e-12)
        assert out.ner_loss == crf_nll(scores, gold, c).loss
        assert out.combined_loss == pytest.approx(0.7 * ce + out.ner_loss, abs=1e-12)

    def test_softmax_head(self):
        out = joint_loss(np.zeros(2), 0, np.zeros((3, 4)), [0, 1, 2], "softmax")
        assert out.combined_loss == pytest.approx(np.log(2) + 3 * np.log(4), abs=1e-12)

    def test_unknown_head(self):
        with pytest.raises(ConfigError):
            joint_loss(np.zeros(2), 0, np.zeros((1, 3)), [0], "mlp")


class TestBinary:
    def test_sigmoid_stable(self):
        s = sigmoid(np.array([-800.0, 0.0, 800.0]))
        assert s.tolist() == [0.0, 0.5, 1.0]

    def test_bce_gradient(self, rng):
        x, t = rng.normal(size=6), rng.integers(0, 2, 6).astype(float)
        loss, d = binary_cross_entropy(x, t)
        h = 1e-6
        num = (binary_cross_entropy(x + h, t)[0] - binary_cross_entropy(x - h, t)[0]) / (2 * h)
        assert np.allclose(d, num, atol=1e-8)
