from attrner.corpus import read_corpus, serialize_corpus, spans_from_tags
from attrner.synthetic import AMBIGUOUS_SPLITS, ambiguous_corpus, ambiguous_splits, overfit_fixture, write_datasets

from conftest import DATA


class TestShippedData:
    def test_matches_generator(self, tmp_path):
        write_datasets(tmp_path)
        for sub in ("fixture", "ambiguous"):
            for split in ("train", "dev", "test"):
                assert (tmp_path / sub / f"{split}.txt").read_text() == (DATA / sub / f"{split}.txt").read_text()

    def test_sizes(self):
        assert len(read_corpus(DATA / "fixture" / "train.txt")) == 50
        for name, (n, _) in AMBIGUOUS_SPLITS.items():
            assert len(read_corpus(DATA / "ambiguous" / f"{name}.txt")) == n


class TestGenerators:
    def test_fixture_is_reproducible(self):
        assert serialize_corpus(overfit_fixture(seed=4)) == serialize_corpus(overfit_fixture(seed=4))

    def test_fixture_has_both_types_and_empty_sentences(self):
        c = overfit_fixture()
        kinds = {sp.entity_type for s in c for sp in spans_from_tags(s.gold_tags, c.scheme)}
        assert kinds == {"Disease", "Gene"}
        assert any(s.sentence_label == "None" for s in c)

    def test_ambiguous_one_type_per_sentence(self):
        c = ambiguous_corpus(200, 3)
        for s in c:
            types = {sp.entity_type for sp in spans_from_tags(s.gold_tags, c.scheme)}
            assert len(types) <= 1

    def test_ambiguous_names_are_shared(self):
        c = ambiguous_corpus(300, 0)
        seen = {}
        for s in c:
            for sp in spans_from_tags(s.gold_tags, c.scheme):
                seen.setdefault(" ".join(s.tokens[sp.start:sp.end]), set()).add(sp.entity_type)
        assert any(len(v) == 2 for v in seen.values())

    def test_cue_rate_zero_has_no_cues(self):
        c = ambiguous_corpus(100, 0, cue_rate=0.0)
        assert not any(t in ("dose", "symptoms") for s in c for t in s.tokens)

    def test_splits_disjoint_seeds(self):
        sp = ambiguous_splits()
        assert sp["train"].sentences[0].tokens != sp["dev"].sentences[0].tokens
