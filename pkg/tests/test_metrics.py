from functools import lru_cache

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from g2plstm.lexicon import LexiconEntry
from g2plstm.metrics import CoverageError, EditResult, edit_distance, evaluate, score_word, write_report_tsv


def brute_distance(a, b):
    """Plain recursive Levenshtein with memoisation over suffixes."""

    @lru_cache(maxsize=None)
    def rec(i, j):
        if i == len(a):
            return len(b) - j
        if j == len(b):
            return len(a) - i
        return min(rec(i + 1, j + 1) + (a[i] != b[j]), rec(i + 1, j) + 1, rec(i, j + 1) + 1)

    return rec(0, 0)


def entry(word, *prons):
    return LexiconEntry(word, tuple(tuple(p.split()) for p in prons))


seqs = st.lists(st.sampled_from("abcde"), max_size=8)


class TestEditDistance:
    @pytest.mark.parametrize(
        "hyp, ref, expected",
        [
            ("K AE T", "K AE T", EditResult(0, 0, 0, 0)),
            ("K AE", "K AE T", EditResult(1, 0, 0, 1)),
            ("K AE T S", "K AE T", EditResult(1, 0, 1, 0)),
            ("A B C", "C B A", EditResult(2, 2, 0, 0)),
            ("", "K AE T", EditResult(3, 0, 0, 3)),
        ],
    )
    def test_examples(self, hyp, ref, expected):
        assert edit_distance(hyp.split(), ref.split()) == expected

    def test_against_recursive_oracle(self):
        rng = np.random.default_rng(0)
        for _ in range(1000):
            a = list(rng.integers(0, 5, size=rng.integers(0, 9)))
            b = list(rng.integers(0, 5, size=rng.integers(0, 9)))
            result = edit_distance(a, b)
            assert result.distance == brute_distance(tuple(a), tuple(b))
            assert result.substitutions + result.insertions + result.deletions == result.distance
            assert result.insertions - result.deletions == len(a) - len(b)

    @settings(max_examples=200, deadline=None)
    @given(seqs, seqs, seqs)
    def test_metric_axioms(self, a, b, c):
        d = lambda x, y: edit_distance(x, y).distance  # noqa: E731
        assert d(a, b) == d(b, a)
        assert (d(a, b) == 0) == (a == b)
        assert d(a, c) <= d(a, b) + d(b, c)


class TestScoreWord:
    def test_exact_variant(self):
        s = score_word("R IY D".split(), ["R EH D".split(), "R IY D".split()])
        assert (s.edits, s.reference, s.error) == (0, ("R", "IY", "D"), False)

    def test_closest_variant(self):
        s = score_word("R IH D".split(), ["R EH D".split(), "R IY D".split()])
        assert (s.edits, s.error) == (1, True)
        assert s.reference == ("R", "EH", "D")

    def test_empty_hypothesis(self):
        assert score_word([], ["K AE T".split()]).edits == 3

    def test_tie_prefers_shorter(self):
        s = score_word(["A", "B"], [["A", "B", "C"], ["A"]])
        assert s.edits == 1 and s.reference == ("A",)

    def test_no_references(self):
        with pytest.raises(ValueError):
            score_word(["A"], [])

    @settings(max_examples=100, deadline=None)
    @given(seqs, st.lists(seqs.filter(bool), min_size=1, max_size=4))
    def test_min_over_references_and_order_invariant(self, hyp, refs):
        s = score_word(hyp, refs)
        assert all(s.edits <= edit_distance(hyp, r).distance for r in refs)
        assert score_word(hyp, refs[::-1]) == s


class TestEvaluate:
    entries = [
        entry("CAT", "K AE T"),
        entry("DOG", "D AO G"),
        entry("READ", "R IY D", "R EH D"),
        entry("EGG", "EH G"),
        entry("HAT", "HH AE T"),
    ]

    def test_all_correct(self):
        hyps = {e.word: e.pronunciations[-1] for e in self.entries}
        report = evaluate(hyps, self.entries)
        assert (report.per, report.wer) == (0.0, 0.0)
        assert report.summary() == "PER 0.00% WER 0.00%"

    def test_one_of_four_wrong(self):
        entries = self.entries[:3] + [self.entries[4]]
        hyps = {"CAT": ("K", "AE", "T"), "DOG": ("D", "AA", "G"), "READ": ("R", "EH", "D"), "HAT": ("HH", "AE", "T")}
        report = evaluate(hyps, entries)
        assert report.reference_phonemes == 12
        assert report.summary() == "PER 8.33% WER 25.00%"
        assert report.phoneme_edits == sum(r.edits for r in report.records)
        assert report.word_errors == sum(r.edits > 0 for r in report.records)

    def test_missing(self):
        with pytest.raises(CoverageError, match="EGG"):
            evaluate({"CAT": ("K", "AE", "T")}, self.entries[:1] + [self.entries[3]])

    def test_duplicate(self):
        with pytest.raises(CoverageError, match="CAT"):
            evaluate([("CAT", ("K",)), ("CAT", ("K", "AE", "T"))], self.entries[:1])

    def test_per_can_exceed_hundred(self):
        report = evaluate({"EGG": ("A", "B", "C", "D", "E")}, [self.entries[3]])
        assert report.per == 250.0 and report.wer == 100.0

    def test_tsv(self, tmp_path):
        report = evaluate({"READ": ("R", "IH", "D")}, [self.entries[2]])
        write_report_tsv(report, tmp_path / "r.tsv")
        assert (tmp_path / "r.tsv").read_text() == "READ\tR IH D\tR EH D\t1\n"
