"""Vocabulary, tokenization, segmentation, and text cleanup."""

import pytest
from hypothesis import given, strategies as st

from dialectmt.errors import EmptyInputError
from dialectmt.textproc import (
    REP,
    UNK,
    RESERVED_TOKENS,
    build_vocab,
    detokenize,
    load_lexicon,
    preprocess,
    segment_greedy,
    tokenize,
)


class TestBuildVocab:
    def test_reserved_plus_characters(self):
        v = build_vocab([("我们", "我哋")])
        assert len(v) == 8
        assert v.id_to_token[:5] == list(RESERVED_TOKENS)
        assert {"我", "们", "哋"} <= set(v.token_to_id)

    def test_deterministic(self):
        corpus = [("我们", "我哋"), ("去啦", "去喇")]
        assert build_vocab(corpus).id_to_token == build_vocab(corpus).id_to_token

    def test_marker_in_text_not_duplicated(self):
        v = build_vocab([("去⟨rep⟩", "去⟨rep⟩")])
        assert v.id_to_token.count("⟨rep⟩") == 1

    def test_empty_corpus(self):
        with pytest.raises(EmptyInputError):
            build_vocab([])

    def test_file_round_trip(self, tmp_path):
        v = build_vocab([("我们", "我哋")])
        v.save(tmp_path / "vocab.txt")
        loaded = type(v).load(tmp_path / "vocab.txt")
        assert loaded.id_to_token == v.id_to_token


class TestTokenize:
    def test_direct_lookup(self):
        v = build_vocab([("我们", "我哋")])
        assert tokenize("我们", v).ids == [v.id_of("我"), v.id_of("们")]

    def test_marker_collapses_to_one_id(self):
        v = build_vocab([("去啦", "去喇")])
        assert tokenize("去⟨rep⟩啦", v).ids == [v.id_of("去"), REP, v.id_of("啦")]

    def test_unknown_character(self):
        v = build_vocab([("我", "我")])
        assert tokenize("§", v).ids == [UNK]

    @given(st.text(alphabet="我们去哋啦喇", max_size=12))
    def test_round_trip_on_in_vocab_text(self, text):
        v = build_vocab([("我们去啦", "我哋去喇")])
        assert detokenize(tokenize(text, v).ids, v) == text


class TestSegmentGreedy:
    def test_longest_match(self):
        s = segment_greedy("我们去", {"我们"})
        assert s.boundary_flags == [1, 0, 1]
        assert s.words == ["我们", "去"]

    def test_empty_lexicon_gives_singletons(self):
        assert segment_greedy("我们去", set()).boundary_flags == [1, 1, 1]

    def test_longest_match_wins_over_prefix(self):
        assert segment_greedy("我们去", {"我们", "我们去"}).boundary_flags == [1, 0, 0]

    def test_marker_is_its_own_word(self):
        s = segment_greedy("我⟨rep⟩们", {"我们"})
        assert s.words == ["我", "⟨rep⟩", "们"]
        assert s.boundary_flags == [1, 1, 1]

    @given(st.text(alphabet="我们去哋啦", max_size=10))
    def test_concatenation_recovers_input(self, text):
        s = segment_greedy(text, {"我们", "去啦"})
        assert "".join(s.words) == text
        assert len(s.boundary_flags) == len(list(text))
        if text:
            assert s.boundary_flags[0] == 1

    def test_lexicon_file(self, tmp_path):
        path = tmp_path / "lex.txt"
        path.write_text("我们\n去啦\n", encoding="utf-8")
        assert load_lexicon(path) == {"我们", "去啦"}


class TestPreprocess:
    def test_full_width_unified(self):
        assert preprocess("Ａ　Ｂ") == "A B"

    def test_control_characters_removed(self):
        assert preprocess("a\x07b") == "ab"

    def test_whitespace_collapsed(self):
        assert preprocess("a  \t b") == "a b"

    @given(st.text(max_size=30))
    def test_idempotent(self, text):
        once = preprocess(text)
        assert preprocess(once) == once
