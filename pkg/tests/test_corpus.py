from fractions import Fraction

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from stance_transfer.corpus import (
    OOV,
    CorpusError,
    PhraseModel,
    TweetRecord,
    Vocabulary,
    apply_phrases,
    build_vocabulary,
    decode,
    encode,
    filter_stream,
    iter_tweets,
    learn_phrases,
    phrase_scores,
    tokenize,
)


class TestTokenize:
    def test_empty(self):
        assert tokenize("") == []

    def test_punctuation_detached(self):
        assert tokenize("Al Gore is a politician, not a scientist") == [
            "al", "gore", "is", "a", "politician", ",", "not", "a", "scientist"]

    def test_hashtag_and_url(self):
        assert tokenize("#SemST http://t.co/x") == ["#semst", "<url>"]

    def test_mentions_and_brackets(self):
        assert tokenize("(@User: #Tag!)") == ["(", "@user", ":", "#tag", "!", ")"]

    def test_inner_punctuation_kept(self):
        assert tokenize("don't stop...") == ["don't", "stop", ".", ".", "."]

    def test_www_url(self):
        assert tokenize("see www.example.com now") == ["see", "<url>", "now"]

    @settings(max_examples=300, deadline=None)
    @given(st.text(alphabet=st.characters(blacklist_categories=("Cs",)), max_size=60))
    def test_idempotent(self, text):
        toks = tokenize(text)
        assert tokenize(" ".join(toks)) == toks

    @settings(max_examples=200, deadline=None)
    @given(st.text(max_size=60))
    def test_tokens_have_no_whitespace(self, text):
        for tok in tokenize(text):
            assert tok and not any(ch.isspace() for ch in tok)
            assert tok == tok.lower()


class TestFilterStream:
    def _recs(self, texts):
        return [TweetRecord(str(i), t) for i, t in enumerate(texts)]

    def test_duplicate(self):
        assert [r.text for r in filter_stream(self._recs(["hello", "hello"]))] == ["hello"]

    def test_retweet(self):
        assert filter_stream(self._recs(["rt @user abc"])) == []
        assert filter_stream(self._recs(["RT @user abc"])) == []

    def test_first_occurrence_kept(self):
        out = filter_stream(self._recs(["a", "b", "a"]))
        assert [(r.id, r.text) for r in out] == [("0", "a"), ("1", "b")]

    def test_record_invariants(self):
        with pytest.raises(CorpusError):
            TweetRecord("", "text")
        with pytest.raises(CorpusError):
            TweetRecord("1", "   ")
        assert TweetRecord("1", "go #Team and #win").hashtags == ["#team", "#win"]


def _new_york_corpus():
    # count(new york)=10, count(new)=12, count(york)=10, 100 distinct tokens
    corpus = [["new", "york"] for _ in range(10)] + [["new", "w0"], ["new", "w1"]]
    corpus += [[f"w{i}"] for i in range(2, 98)]
    return corpus


class TestPhrases:
    def test_score_formula(self):
        scores = phrase_scores(_new_york_corpus(), delta=5)
        assert scores["new", "york"] == float(Fraction(10 - 5, 12 * 10) * 100)
        assert scores["new", "york"] == pytest.approx(4.1667, abs=1e-4)

    def test_threshold_merge(self):
        model = learn_phrases(_new_york_corpus(), delta=5, threshold=4.0)
        assert model.merges[0] == {("new", "york"): "new_york"}
        assert learn_phrases(_new_york_corpus(), delta=5, threshold=4.2).merges[0] == {}

    def test_rare_pair_negative(self):
        corpus = [["a", "b"], ["a", "c"]]
        assert phrase_scores(corpus, delta=5)["a", "b"] < 0
        assert learn_phrases(corpus, delta=5, threshold=0.0).merges[0] == {}

    def test_punctuation_pairs_excluded(self):
        scores = phrase_scores([["a", ",", "b"]] * 20, delta=0)
        assert set(scores) == set()

    def test_empty_corpus(self):
        with pytest.raises(CorpusError, match="empty corpus"):
            learn_phrases([], 5, 1.0)

    def test_two_passes_build_four_word_phrase(self):
        sent = ["global", "climate", "change", "policy"]
        corpus = [sent] * 30 + [[f"f{i}", f"g{i}"] for i in range(30)]
        model = learn_phrases(corpus, delta=5, threshold=[1.0, 1.0], passes=2)
        assert ("global", "climate") in model.merges[0]
        out = apply_phrases(sent, model)
        assert out == ["global_climate_change_policy"]

    def test_apply_rules(self):
        model = PhraseModel([{("new", "york"): "new_york"}], [{("new", "york"): 9.0}], 5, [1.0])
        assert apply_phrases(["new", "york"], model) == ["new_york"]
        assert apply_phrases(["new"], model) == ["new"]
        greedy = PhraseModel([{("a", "b"): "a_b", ("b", "c"): "b_c"}],
                             [{("a", "b"): 1.0, ("b", "c"): 1.0}], 5, [1.0])
        assert apply_phrases(["a", "b", "c"], greedy) == ["a_b", "c"]

    @given(st.lists(st.sampled_from(["a", "b", "c", "d"]), max_size=20))
    def test_apply_never_grows(self, seq):
        model = PhraseModel([{("a", "b"): "a_b"}, {("a_b", "c"): "a_b_c"}],
                            [{("a", "b"): 1.0}, {("a_b", "c"): 1.0}], 5, [1.0, 1.0])
        out = apply_phrases(seq, model)
        assert len(out) <= len(seq)
        assert "_".join(out).replace("_", "") == "".join(seq)

    def test_tsv_round_trip(self):
        model = learn_phrases(_new_york_corpus(), delta=5, threshold=[4.0, 4.0], passes=2)
        again = PhraseModel.from_tsv(model.to_tsv())
        assert again.merges == model.merges
        assert again.scores == model.scores
        assert again.thresholds == model.thresholds


class TestVocabulary:
    def test_counts_and_order(self):
        v = build_vocabulary([["a", "a", "b"]], 1)
        assert v.tokens == ["a", "b"] and v.counts == [2, 1]
        assert v.index == {"a": 0, "b": 1}

    def test_cutoff(self):
        assert build_vocabulary([["a", "a", "b"]], 2).tokens == ["a"]

    def test_tie_is_lexicographic(self):
        v = build_vocabulary([["y"] * 5 + ["x"] * 5], 1)
        assert v.tokens == ["x", "y"]

    def test_empty(self):
        with pytest.raises(CorpusError, match="vocabulary empty"):
            build_vocabulary([["a"]], 2)

    def test_file_round_trip(self):
        v = build_vocabulary([["a", "a", "#b", "c"]], 1)
        text = v.to_text()
        assert text.splitlines()[0] == "#min_count=1"
        assert text.splitlines()[1] == "a\t2"
        w = Vocabulary.from_text(text)
        assert (w.tokens, w.counts, w.min_count) == (v.tokens, v.counts, v.min_count)

    @given(st.lists(st.lists(st.sampled_from("abcdefg"), max_size=8), min_size=1, max_size=10),
           st.integers(1, 3))
    def test_count_invariants(self, corpus, min_count):
        total = sum(len(s) for s in corpus)
        try:
            v = build_vocabulary(corpus, min_count)
        except CorpusError:
            return
        assert sum(v.counts) <= total
        assert all(c >= min_count for c in v.counts)
        assert sorted(v.index.values()) == list(range(len(v)))


class TestEncode:
    def test_known_and_unknown(self):
        v = Vocabulary(["a"], [1], 1)
        assert encode(["a"], v) == [0]
        assert encode(["z"], v) == [OOV]

    def test_keeps_final_tokens(self):
        v = Vocabulary([f"t{i}" for i in range(31)], [1] * 31, 1)
        toks = [f"t{i}" for i in range(31)]
        assert encode(toks, v, 30) == list(range(1, 31))

    @given(st.lists(st.sampled_from(["a", "b", "c", "zz"]), max_size=40), st.integers(1, 35))
    def test_length_and_roundtrip(self, seq, max_len):
        v = Vocabulary(["a", "b", "c"], [3, 2, 1], 1)
        ids = encode(seq, v, max_len)
        assert len(ids) <= max_len
        if "zz" not in seq and len(seq) <= max_len:
            assert decode(ids, v) == seq


def test_iter_tweets_reports_bad_line(tmp_path):
    p = tmp_path / "t.jsonl"
    p.write_text('{"id": "1", "text": "ok"}\n{broken\n')
    with pytest.raises(CorpusError, match="line 2"):
        list(iter_tweets(p))
