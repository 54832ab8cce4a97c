"""Toy-dialect corpus generator: rules, gold links, file round trips."""

import pytest

from dialectmt.errors import ConfigError
from dialectmt.synth import (
    DialectRuleSet,
    default_rules,
    generate,
    lexicon_for,
    load_rules,
    make_inventory,
    read_corpus,
    save_rules,
    verify_pair,
    write_corpus,
)
from dialectmt.textproc import REP_TOKEN


class TestInventory:
    def test_deterministic(self):
        assert make_inventory(20, seed=5) == make_inventory(20, seed=5)

    def test_words_use_disjoint_characters(self):
        words = make_inventory(40, seed=1)
        chars = [c for w in words for c in w]
        assert len(chars) == len(set(chars))

    def test_too_small(self):
        with pytest.raises(ConfigError):
            make_inventory(5, seed=0)


class TestRules:
    def test_empty_rules_are_identity(self):
        rules = DialectRuleSet()
        tgt, gold = rules.apply(["ab", "c"])
        assert tgt == ["ab", "c"]
        assert gold.links == {(0, 0), (1, 1)}

    def test_char_substitution(self):
        rules = DialectRuleSet(char_map={"a": "x"})
        assert rules.apply_word("aba") == "xbx"

    def test_word_rule_beats_char_map(self):
        rules = DialectRuleSet(char_map={"a": "x"}, word_rules={"ab": "zz"})
        assert rules.apply_word("ab") == "zz"

    def test_marker_word_passes_through(self):
        rules = DialectRuleSet(char_map={"r": "!"})
        assert rules.apply_word(REP_TOKEN) == REP_TOKEN

    def test_reorder_swaps_adjacent_pair(self):
        rules = DialectRuleSet(reorder_markers={"m"})
        tgt, gold = rules.apply(["m", "b", "c"])
        assert tgt == ["b", "m", "c"]
        assert gold.links == {(0, 1), (1, 0), (2, 2)}

    def test_reorder_at_sentence_end_is_inert(self):
        rules = DialectRuleSet(reorder_markers={"m"})
        tgt, gold = rules.apply(["a", "m"])
        assert tgt == ["a", "m"]
        assert gold.links == {(0, 0), (1, 1)}


class TestGenerate:
    def _rules(self, **kw):
        inv = make_inventory(30, seed=2)
        return default_rules(inv, seed=2, **kw), inv

    def test_deterministic(self):
        rules, inv = self._rules()
        a = generate(rules, 20, inventory=inv, seed=9)
        b = generate(rules, 20, inventory=inv, seed=9)
        assert [(p.source, p.target) for p in a] == [(p.source, p.target) for p in b]

    def test_every_pair_verifies(self):
        rules, inv = self._rules(reorder_frac=0.2)
        for pair in generate(rules, 50, inventory=inv, seed=3):
            assert verify_pair(rules, pair)

    def test_substitution_only_rules_align_diagonally(self):
        rules, inv = self._rules(reorder_frac=0.0)
        for pair in generate(rules, 30, inventory=inv, seed=4):
            n = len(pair.source_words)
            assert pair.gold.links == {(i, i) for i in range(n)}

    def test_len_range_respected(self):
        rules, inv = self._rules()
        for pair in generate(rules, 40, inventory=inv, seed=5, len_range=(2, 4)):
            assert 2 <= len(pair.source_words) <= 4

    def test_bad_len_range(self):
        rules, inv = self._rules()
        with pytest.raises(ConfigError):
            generate(rules, 1, inventory=inv, len_range=(3, 2))

    def test_no_adjacent_duplicate_target_chars(self):
        rules, inv = self._rules(reorder_frac=0.1)
        for pair in generate(rules, 60, inventory=inv, seed=6, rep_prob=0.1):
            chars = list(pair.target)
            assert all(a != b for a, b in zip(chars, chars[1:]))

    def test_rep_marker_appears_and_is_copied(self):
        rules, inv = self._rules()
        pairs = generate(rules, 200, inventory=inv, seed=7, rep_prob=0.2)
        with_marker = [p for p in pairs if REP_TOKEN in p.source_words]
        assert with_marker
        for p in with_marker:
            assert p.source_words.count(REP_TOKEN) == p.target_words.count(REP_TOKEN)

    def test_verify_pair_rejects_corruption(self):
        rules, inv = self._rules()
        pair = generate(rules, 1, inventory=inv, seed=8)[0]
        pair.target_words[0] = "口"
        assert not verify_pair(rules, pair)


class TestFiles:
    def test_corpus_round_trip(self, tmp_path):
        rules, inv = self._setup()
        pairs = generate(rules, 10, inventory=inv, seed=1)
        path = tmp_path / "corpus.tsv"
        write_corpus(pairs, path)
        loaded = read_corpus(path)
        assert loaded == [(p.source_words, p.target_words) for p in pairs]

    def test_unsegmented_lines_split_to_characters(self, tmp_path):
        path = tmp_path / "c.tsv"
        path.write_text("我们\t我哋\n", encoding="utf-8")
        assert read_corpus(path) == [(["我", "们"], ["我", "哋"])]

    def test_rules_round_trip(self, tmp_path):
        rules = DialectRuleSet(char_map={"a": "x"}, word_rules={"bc": "y"},
                               reorder_markers={"d"})
        path = tmp_path / "rules.tsv"
        save_rules(rules, path)
        loaded = load_rules(path)
        assert loaded.char_map == rules.char_map
        assert loaded.word_rules == rules.word_rules
        assert loaded.reorder_markers == rules.reorder_markers

    def test_bad_rule_line(self, tmp_path):
        path = tmp_path / "rules.tsv"
        path.write_text("swap\ta\tb\n", encoding="utf-8")
        with pytest.raises(ConfigError):
            load_rules(path)

    def test_lexicon_excludes_marker(self):
        rules, inv = self._setup()
        pairs = generate(rules, 50, inventory=inv, seed=2, rep_prob=0.3)
        lex = lexicon_for(pairs)
        assert REP_TOKEN not in lex and lex

    def _setup(self):
        inv = make_inventory(25, seed=3)
        return default_rules(inv, seed=3), inv
