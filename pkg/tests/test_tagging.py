import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from attrner.errors import ConversionError, EvaluationError, InvalidSchemeError, OverlapError
from attrner.tagging import (
    Span,
    build_scheme,
    micro_f1,
    repair_bio,
    spans_from_tags,
    tags_from_spans,
    token_micro_f1,
    validate_bio,
)

AB = build_scheme(["A", "B"])
DIS = build_scheme(["Disease"])


class TestScheme:
    def test_single_type_labels(self):
        assert DIS.labels == ("O", "B-Disease", "I-Disease")

    def test_two_types(self):
        assert AB.labels == ("O", "B-A", "I-A", "B-B", "I-B")
        assert AB.num_labels == 5

    @pytest.mark.parametrize("types", [[], ["A", "A"], [""], ["a b"]])
    def test_invalid(self, types):
        with pytest.raises(InvalidSchemeError):
            build_scheme(types)

    def test_encode_decode(self):
        labels = ["O", "B-B", "I-B"]
        assert AB.decode(AB.encode(labels)) == labels


class TestValidate:
    def test_valid_run(self):
        assert validate_bio(DIS.encode(["O", "B-Disease", "I-Disease"]), DIS) == []

    def test_headless_inside(self):
        v = validate_bio(DIS.encode(["I-Disease", "O"]), DIS)
        assert [x.position for x in v] == [0]
        assert "I without preceding B/I" in v[0].rule

    def test_type_mismatch(self):
        v = validate_bio(AB.encode(["B-A", "I-B"]), AB)
        assert [x.position for x in v] == [1]

    def test_out_of_range(self):
        with pytest.raises(IndexError):
            validate_bio([7], AB)

    def test_repair(self):
        assert repair_bio(AB.encode(["I-A", "I-A", "I-B"]), AB) == AB.encode(["B-A", "I-A", "B-B"])


class TestSpans:
    def test_single_run(self):
        assert spans_from_tags(DIS.encode(["O", "B-Disease", "I-Disease", "O"]), DIS) == [Span(1, 3, "Disease")]

    def test_adjacent_begins(self):
        assert spans_from_tags(AB.encode(["B-A", "B-A"]), AB) == [Span(0, 1, "A"), Span(1, 2, "A")]

    def test_no_entities(self):
        assert spans_from_tags([0, 0], AB) == []

    def test_strict_rejects(self):
        with pytest.raises(ConversionError):
            spans_from_tags(AB.encode(["I-A"]), AB)

    def test_lenient_repairs(self):
        assert spans_from_tags(AB.encode(["I-A", "I-A"]), AB, strict=False) == [Span(0, 2, "A")]

    def test_inverse(self):
        assert tags_from_spans([Span(1, 3, "Disease")], 4, DIS) == DIS.encode(["O", "B-Disease", "I-Disease", "O"])
        assert tags_from_spans([], 3, DIS) == [0, 0, 0]

    def test_overlap(self):
        with pytest.raises(OverlapError):
            tags_from_spans([Span(0, 2, "A"), Span(1, 3, "A")], 3, AB)


@st.composite
def span_layouts(draw, max_n=12):
    n = draw(st.integers(1, max_n))
    spans, i = [], 0
    while i < n:
        if draw(st.booleans()):
            length = draw(st.integers(1, n - i))
            spans.append(Span(i, i + length, draw(st.sampled_from(AB.entity_types))))
            i += length
        i += draw(st.integers(0, 2)) if spans and spans[-1].end == i else 1
    return n, spans


valid_seqs = span_layouts().map(lambda x: tags_from_spans(x[1], x[0], AB))
any_seqs = st.lists(st.integers(0, AB.num_labels - 1), min_size=1, max_size=12)


class TestProperties:
    @settings(max_examples=1_000)
    @given(valid_seqs)
    def test_round_trip(self, seq):
        assert validate_bio(seq, AB) == []
        assert tags_from_spans(spans_from_tags(seq, AB), len(seq), AB) == seq

    @settings(max_examples=1_000)
    @given(span_layouts())
    def test_spans_round_trip(self, layout):
        n, spans = layout
        assert spans_from_tags(tags_from_spans(spans, n, AB), AB) == sorted(spans)

    @settings(max_examples=1_000)
    @given(any_seqs)
    def test_validity_matches_generation(self, seq):
        # valid exactly when the sequence is reproducible from its own spans
        valid = validate_bio(seq, AB) == []
        rebuilt = tags_from_spans(spans_from_tags(seq, AB, strict=False), len(seq), AB)
        assert valid == (rebuilt == seq)
        assert validate_bio(repair_bio(seq, AB), AB) == []


class TestMicroF1:
    def test_hand_counted(self):
        gold = [[Span(0, 1, "A"), Span(2, 4, "B")]]
        pred = [[Span(0, 1, "A"), Span(2, 3, "B")]]
        r = micro_f1(gold, pred)
        assert (r.tp, r.fp, r.fn) == (1, 1, 1)
        assert r.precision == 0.5 and r.recall == 0.5 and r.f1 == 0.5

    def test_identity(self):
        g = [[Span(0, 2, "A")], [], [Span(1, 2, "B")]]
        r = micro_f1(g, g)
        assert r.precision == r.recall == r.f1 == 1.0

    def test_empty_prediction(self):
        r = micro_f1([[Span(0, 1, "A")]], [[]])
        assert (r.precision, r.recall, r.f1) == (0.0, 0.0, 0.0)

    def test_type_must_match(self):
        assert micro_f1([[Span(0, 1, "A")]], [[Span(0, 1, "B")]]).f1 == 0.0

    def test_length_mismatch(self):
        with pytest.raises(EvaluationError):
            micro_f1([[]], [[], []])

    @settings(max_examples=500)
    @given(st.lists(st.tuples(span_layouts(), span_layouts()), min_size=1, max_size=4))
    def test_symmetry(self, pairs):
        g = [a[1] for a, _ in pairs]
        p = [b[1] for _, b in pairs]
        assert micro_f1(g, p).precision == micro_f1(p, g).recall

    def test_token_level(self):
        r = token_micro_f1([[1, 2, 0]], [[1, 0, 0]], AB)
        assert (r.tp, r.fp, r.fn) == (1, 0, 1)
