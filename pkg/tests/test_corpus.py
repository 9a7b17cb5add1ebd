import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from geccl.corpus import (
    AnnotatedCorpus,
    AnnotatedSentence,
    CorpusError,
    GoldEdit,
    M2ParseError,
    ParallelExample,
    apply_edits,
    deduplicate,
    parse_m2,
    parse_parallel,
    partition_identical,
    write_m2,
    write_parallel,
)

MINIMAL = "S She go home\nA 1 2|||VERB|||goes|||REQUIRED|||-NONE-|||0\n"
NOOP = "S Hello .\nA -1 -1|||noop|||-NONE-|||REQUIRED|||-NONE-|||0\n"
TWO_ANNOTATORS = (
    "S He go to school\n"
    "A 1 2|||VERB:SVA|||goes|||REQUIRED|||-NONE-|||0\n"
    "A 1 2|||VERB:TENSE|||went|||REQUIRED|||-NONE-|||1\n"
    "A 3 3|||DET|||the|||REQUIRED|||-NONE-|||1\n"
)


class TestParseParallel:
    def test_substitution_pair(self):
        [ex] = parse_parallel("She go home\tShe goes home\n")
        assert ex.id == 0
        assert ex.source == ("She", "go", "home")
        assert ex.target == ("She", "goes", "home")
        assert not ex.identical

    def test_identical_pair(self):
        [ex] = parse_parallel("Hello .\tHello .\n")
        assert ex.identical

    def test_parser_keeps_duplicates(self):
        text = "a\tb\nc\td\na\tb\ne\tf\ng\th\n"
        exs = parse_parallel(text)
        assert len(exs) == 5
        assert [ex.id for ex in exs] == [0, 1, 2, 3, 4]

    @pytest.mark.parametrize("line", ["only source", "a\tb\tc", "\tb", "a\t"])
    def test_malformed_lines_report_line_number(self, line):
        with pytest.raises(CorpusError, match="line 2"):
            parse_parallel(f"ok\tok\n{line}\n")

    def test_blank_lines_skipped(self):
        assert len(parse_parallel("a\tb\n\nc\td\n")) == 2

    def test_case_sensitive_identity(self):
        [ex] = parse_parallel("hello\tHello\n")
        assert not ex.identical

    def test_write_parallel_round_trip(self):
        text = "She go home\tShe goes home\nHello .\tHello .\n"
        assert write_parallel(parse_parallel(text)) == text

    def test_empty_tokens_rejected(self):
        with pytest.raises(ValueError):
            ParallelExample(0, (), ("a",))


class TestDeduplicate:
    def test_exact_duplicate_dropped(self):
        exs = parse_parallel("a\tb\na\tb\n")
        assert [(ex.source_text, ex.target_text) for ex in deduplicate(exs)] == [("a", "b")]

    def test_same_source_different_target_kept(self):
        exs = parse_parallel("a\tb\na\tc\n")
        assert len(deduplicate(exs)) == 2

    def test_order_preserved_and_ids_dense(self):
        exs = parse_parallel("x\ty\na\tb\nx\ty\nc\td\n")
        out = deduplicate(exs)
        assert [ex.source_text for ex in out] == ["x", "a", "c"]
        assert [ex.id for ex in out] == [0, 1, 2]

    @given(st.lists(st.tuples(st.sampled_from("abc"), st.sampled_from("abc")), max_size=30))
    def test_idempotent(self, pairs):
        exs = [ParallelExample(k, (s,), (t,)) for k, (s, t) in enumerate(pairs)]
        once = deduplicate(exs)
        assert deduplicate(once) == once


class TestPartition:
    def test_mixed_split(self):
        exs = parse_parallel("a\tb\nc\tc\nd\te\nf\tf\ng\th\n")
        changed, identical = partition_identical(exs)
        assert (len(changed), len(identical)) == (3, 2)

    def test_all_identical(self):
        exs = parse_parallel("a\ta\nb\tb\n")
        assert partition_identical(exs) == ([], exs)

    @given(st.lists(st.tuples(st.sampled_from("ab"), st.sampled_from("ab")), max_size=20))
    def test_partition_is_exact(self, pairs):
        exs = [ParallelExample(k, (s,), (t,)) for k, (s, t) in enumerate(pairs)]
        changed, identical = partition_identical(exs)
        assert len(changed) + len(identical) == len(exs)
        assert all(ex.identical for ex in identical)
        assert not any(ex.identical for ex in changed)
        assert sorted(ex.id for ex in changed + identical) == [ex.id for ex in exs]


class TestParseM2:
    def test_minimal_block(self):
        corpus = parse_m2(MINIMAL)
        [sent] = corpus.sentences
        [edit] = sent.edits
        assert (edit.start, edit.end, edit.correction) == (1, 2, ("goes",))
        assert edit.etype == "VERB"

    def test_noop_block(self):
        [sent] = parse_m2(NOOP).sentences
        [edit] = sent.edits
        assert edit.is_noop
        assert sent.gold_sets() == {0: frozenset()}

    def test_two_annotators(self):
        [sent] = parse_m2(TWO_ANNOTATORS).sentences
        groups = sent.by_annotator()
        assert sorted(groups) == [0, 1]
        assert len(groups[0]) == 1
        assert len(groups[1]) == 2

    def test_a_line_without_s_line(self):
        with pytest.raises(M2ParseError):
            parse_m2("A 1 2|||VERB|||goes|||REQUIRED|||-NONE-|||0\n")

    @pytest.mark.parametrize(
        "line",
        [
            "A x 2|||VERB|||goes|||REQUIRED|||-NONE-|||0",
            "A 2 1|||VERB|||goes|||REQUIRED|||-NONE-|||0",
            "A 1 9|||VERB|||goes|||REQUIRED|||-NONE-|||0",
            "A -1 -1|||VERB|||goes|||REQUIRED|||-NONE-|||0",
            "A 1 2|||VERB|||goes",
        ],
    )
    def test_malformed_edit_reports_block(self, line):
        text = MINIMAL + "\nS He run\n" + line + "\n"
        with pytest.raises(M2ParseError) as err:
            parse_m2(text)
        assert err.value.block == 1

    def test_annotator_ids_must_be_contiguous(self):
        text = "S a b\nA 0 1|||X|||c|||REQUIRED|||-NONE-|||0\nA 0 1|||X|||d|||REQUIRED|||-NONE-|||2\n"
        with pytest.raises(CorpusError, match="contiguous"):
            parse_m2(text)

    @pytest.mark.parametrize("text", [MINIMAL, NOOP, TWO_ANNOTATORS, MINIMAL + "\n" + NOOP + "\n"])
    def test_round_trip_bytes(self, text):
        assert write_m2(parse_m2(text)) == text

    def test_empty_corpus(self):
        assert write_m2(AnnotatedCorpus((), False)) == ""
        assert len(parse_m2("")) == 0

    def test_deletion_written_as_none(self):
        corpus = AnnotatedCorpus((AnnotatedSentence(("a", "the", "b"), (GoldEdit(1, 2, "U:DET", (), 0),)),), False)
        text = write_m2(corpus)
        assert "|||-NONE-|||REQUIRED" in text
        assert parse_m2(text) == corpus


def _random_block(rng):
    n = rng.randint(1, 8)
    source = tuple(rng.choice(["a", "b", "the", "cat", "."]) for _ in range(n))
    edits = []
    n_ann = rng.randint(1, 3)
    for ann in range(n_ann):
        k = rng.randint(0, 3)
        if k == 0:
            edits.append(GoldEdit(-1, -1, "noop", (), ann))
        for _ in range(k):
            start = rng.randint(0, n)
            end = rng.randint(start, n)
            corr = tuple(rng.choice(["x", "y", "z"]) for _ in range(rng.randint(0, 2)))
            edits.append(GoldEdit(start, end, rng.choice(["R:X", "M:Y", "U:Z"]), corr, ann))
    return AnnotatedSentence(source, tuple(edits))


class TestRoundTripProperty:
    def test_hundred_random_blocks(self):
        rng = random.Random(11)
        corpus = AnnotatedCorpus(tuple(_random_block(rng) for _ in range(100)), True)
        text = write_m2(corpus)
        again = parse_m2(text)
        assert again == corpus
        assert write_m2(again) == text

    @settings(max_examples=60)
    @given(st.integers(0, 10_000))
    def test_offsets_in_bounds_or_error(self, seed):
        rng = random.Random(seed)
        n = rng.randint(1, 5)
        start, end = rng.randint(-2, n + 2), rng.randint(-2, n + 2)
        text = f"S {' '.join(['w'] * n)}\nA {start} {end}|||R|||x|||REQUIRED|||-NONE-|||0\n"
        try:
            corpus = parse_m2(text)
        except M2ParseError:
            assert not (0 <= start <= end <= n)
        else:
            [edit] = corpus.sentences[0].edits
            assert 0 <= edit.start <= edit.end <= n


def test_apply_edits_reconstructs_target():
    src = ("He", "go", "school", ".")
    edits = [(1, 2, ("goes",)), (2, 2, ("to",))]
    assert apply_edits(src, edits) == ("He", "goes", "to", "school", ".")
