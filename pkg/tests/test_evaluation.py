import json
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from stance_transfer.evaluation import evaluate, f1_per_class, official_score, r_squared
from stance_transfer.labels import StanceLabel

F, A, N = StanceLabel.FAVOR, StanceLabel.AGAINST, StanceLabel.NONE


def oracle(golds, preds, cls):
    """Exact P/R/F1 from a full 3x3 confusion matrix."""
    m = np.zeros((3, 3), dtype=int)
    for g, p in zip(golds, preds):
        m[int(g), int(p)] += 1
    tp = int(m[cls, cls])
    fp = int(m[:, cls].sum()) - tp
    fn = int(m[cls, :].sum()) - tp
    p = Fraction(tp, tp + fp) if tp + fp else Fraction(0)
    r = Fraction(tp, tp + fn) if tp + fn else Fraction(0)
    f = 2 * p * r / (p + r) if p + r else Fraction(0)
    return float(p), float(r), float(f)


class TestF1:
    def test_perfect(self):
        golds = [F, A, N, A]
        for c in (F, A, N):
            assert f1_per_class(golds, golds, c) == (1.0, 1.0, 1.0)

    def test_hand_example(self):
        assert f1_per_class([F, F, A, N, A], [F, A, A, N, F], F) == (0.5, 0.5, 0.5)

    def test_absent_class(self):
        assert f1_per_class([F, A], [F, A], N) == (0.0, 0.0, 0.0)

    def test_errors(self):
        with pytest.raises(ValueError, match="length mismatch"):
            f1_per_class([F], [F, A], F)
        with pytest.raises(ValueError):
            official_score([], [])

    def test_label_strings_accepted(self):
        assert f1_per_class(["FAVOR", "NONE"], ["FAVOR", "FAVOR"], "FAVOR")[0] == 0.5

    def test_brute_force_oracle(self):
        rng = np.random.default_rng(2016)
        for _ in range(1000):
            n = int(rng.integers(1, 51))
            golds = rng.integers(0, 3, size=n).tolist()
            preds = rng.integers(0, 3, size=n).tolist()
            for c in range(3):
                assert f1_per_class(golds, preds, c) == oracle(golds, preds, c)
            expect = (oracle(golds, preds, 0)[2] + oracle(golds, preds, 1)[2]) / 2
            assert official_score(golds, preds) == expect


class TestOfficial:
    def test_examples(self):
        golds = [F, A, N, F]
        assert official_score(golds, golds) == 1.0
        assert official_score(golds, [N] * 4) == 0.0

    def test_hand_built_065(self):
        golds = [F, F, A, A, A, A, A, N, N, N]
        preds = [F, A, F, A, A, A, A, N, N, N]
        assert f1_per_class(golds, preds, F)[2] == 0.5
        assert f1_per_class(golds, preds, A)[2] == 0.8
        assert official_score(golds, preds) == pytest.approx(0.65, abs=1e-15)

    @given(st.lists(st.tuples(st.integers(0, 2), st.integers(0, 2)), min_size=1, max_size=40),
           st.randoms(use_true_random=False))
    def test_permutation_invariant(self, pairs, rnd):
        shuffled = list(pairs)
        rnd.shuffle(shuffled)
        g, p = zip(*pairs)
        g2, p2 = zip(*shuffled)
        assert official_score(list(g), list(p)) == official_score(list(g2), list(p2))

    @given(st.lists(st.tuples(st.integers(0, 2), st.integers(0, 2)), min_size=1, max_size=40))
    def test_none_none_pairs_irrelevant(self, pairs):
        g, p = (list(x) for x in zip(*pairs))
        base = official_score(g, p)
        assert official_score(g + [2, 2], p + [2, 2]) == base
        kept = [(a, b) for a, b in pairs if not (a == 2 and b == 2)]
        if kept:
            assert official_score([a for a, _ in kept], [b for _, b in kept]) == base

    @given(st.lists(st.tuples(st.integers(0, 2), st.integers(0, 2)), min_size=1, max_size=40))
    def test_harmonic_mean(self, pairs):
        g, p = (list(x) for x in zip(*pairs))
        for c in range(3):
            prec, rec, f = f1_per_class(g, p, c)
            assert 0.0 <= f <= 1.0
            if prec + rec:
                assert f == pytest.approx(2 * prec * rec / (prec + rec), abs=1e-15)


class TestRSquared:
    def test_examples(self):
        assert r_squared([1, 2, 3], [2, 4, 6]) == pytest.approx(1.0)
        assert r_squared([1, 2, 3], [1, 2, 2]) == pytest.approx(0.75, abs=1e-12)

    def test_degenerate(self):
        with pytest.raises(ValueError, match="degenerate"):
            r_squared([1, 1], [1, 2])
        with pytest.raises(ValueError, match="degenerate"):
            r_squared([1, 2], [3, 3])


def test_report():
    golds = [F, A, N, F, A, N]
    preds = [F, A, N, A, A, F]
    topics = ["t1", "t1", "t1", "t2", "t2", "t2"]
    counts = {"t1": {"FAVOR": 30, "AGAINST": 10, "NONE": 5}, "t2": {"FAVOR": 4, "AGAINST": 20, "NONE": 9}}
    rep = evaluate(golds, preds, topics, counts)
    assert rep.official == (rep.f1_favor + rep.f1_against) / 2
    assert rep.official == official_score(golds, preds)
    assert rep.topic_scores["t1"] == 1.0
    assert rep.per_topic["t2"]["AGAINST"].support == 1
    pts = rep.correlation_points()
    assert pts == [(30, 1.0), (10, 1.0), (4, 0.0), (20, rep.per_topic["t2"]["AGAINST"].f1)]
    assert rep.r_squared == pytest.approx(r_squared(*zip(*pts)))
    doc = json.loads(rep.to_json())
    assert doc["official_score"] == rep.official
    assert set(doc["topics"]) == {"t1", "t2"}
    assert "official" in rep.to_table()
    csv_lines = rep.breakdown_csv().splitlines()
    assert csv_lines[0].startswith("topic,class")
    assert len(csv_lines) == 7
