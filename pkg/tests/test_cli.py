import pytest

from attrner.cli import main
from attrner.corpus import read_corpus

from conftest import DATA

FIXTURE = DATA / "fixture"


@pytest.fixture(scope="module")
def trained(tmp_path_factory):
    out = tmp_path_factory.mktemp("run")
    cfg = out / "small.cfg"
    cfg.write_text("epochs = 2\nd_model = 16\nn_heads = 2\nd_ff = 24\n")
    rc = main(["train", "--config", str(cfg), "--data", str(FIXTURE), "--out", str(out), "--seed", "3",
               "--mode", "classifier", "--channels", "label,pos", "--run-kind", "pipeline"])
    assert rc == 0
    return out


class TestTrain:
    def test_outputs(self, trained):
        names = {p.name for p in trained.iterdir()}
        assert {"vocab.txt", "templates.txt", "results.txt",
                "classifier_label+pos_pipeline_crf_seed3.ner.ckpt",
                "classifier_label+pos_pipeline_crf_seed3.classifier.ckpt"} <= names
        lines = (trained / "results.txt").read_text().splitlines()
        assert lines[-1].startswith("aggregate\tdev=")

    def test_vocab_file_format(self, trained):
        kinds = {line.split("\t")[0] for line in (trained / "vocab.txt").read_text().splitlines()}
        assert kinds == {"token", "pos", "scheme", "label"}

    def test_unknown_config_key(self, tmp_path, capsys):
        cfg = tmp_path / "bad.cfg"
        cfg.write_text("epochz = 2\n")
        assert main(["train", "--config", str(cfg), "--data", str(FIXTURE), "--out", str(tmp_path)]) == 2
        assert "unknown config key" in capsys.readouterr().err

    def test_missing_data(self, tmp_path):
        assert main(["train", "--out", str(tmp_path)]) == 2


class TestInference:
    def _ckpt(self, trained, kind):
        return str(trained / f"classifier_label+pos_pipeline_crf_seed3.{kind}.ckpt")

    def test_evaluate(self, trained, tmp_path):
        out = tmp_path / "eval.txt"
        assert main(["evaluate", "--checkpoint", self._ckpt(trained, "ner"), "--classifier",
                     self._ckpt(trained, "classifier"), "--data", str(FIXTURE), "--out", str(out)]) == 0
        line = out.read_text()
        assert line.startswith("split=test\tlabels=predicted\tP=") and "F1=" in line

    def test_tag(self, trained, tmp_path):
        out = tmp_path / "tagged.txt"
        assert main(["tag", "--checkpoint", self._ckpt(trained, "ner"), "--classifier",
                     self._ckpt(trained, "classifier"), "--input", str(FIXTURE / "test.txt"),
                     "--out", str(out)]) == 0
        tagged = read_corpus(out)
        assert len(tagged) == len(read_corpus(FIXTURE / "test.txt"))

    def test_tag_without_classifier_fails(self, trained):
        assert main(["tag", "--checkpoint", self._ckpt(trained, "ner"),
                     "--input", str(FIXTURE / "test.txt")]) == 2

    def test_classify(self, trained, tmp_path):
        out = tmp_path / "labels.txt"
        assert main(["classify", "--checkpoint", self._ckpt(trained, "classifier"),
                     "--input", str(FIXTURE / "dev.txt"), "--out", str(out)]) == 0
        rows = out.read_text().splitlines()
        assert rows[0].startswith("#index\tlabel\t") and len(rows[0].split("\t")) == 7
        assert len(rows) == 51

    def test_classify_rejects_ner_checkpoint(self, trained):
        assert main(["classify", "--checkpoint", self._ckpt(trained, "ner"),
                     "--input", str(FIXTURE / "dev.txt")]) == 2


class TestTools:
    def test_derive_labels(self, tmp_path):
        out = tmp_path / "d.txt"
        assert main(["derive-labels", "--input", str(FIXTURE / "train.txt"), "--out", str(out)]) == 0
        assert all(s.sentence_label for s in read_corpus(out))

    def test_oracle(self, capsys):
        assert main(["oracle", "--instances", "20", "--backend", "python"]) == 0
        assert capsys.readouterr().out.startswith("PASS\tbackend=python\tinstances=20")

    def test_gradcheck_single_cell(self, capsys):
        assert main(["gradcheck", "--mode", "classifier", "--run-kind", "joint", "--head", "crf"]) == 0
        out = capsys.readouterr().out.splitlines()
        assert len(out) == 1 and out[0].startswith("PASS\tclassifier(+label,pos)\tjoint\tcrf")

    def test_bad_choice_exits(self):
        with pytest.raises(SystemExit):
            main(["train", "--mode", "sideways"])
