import random

import numpy as np
import pytest

from nerbench.corpus import IO, TagMatrix, Token
from nerbench.metrics import (
    EvaluationError,
    DocPrediction,
    PredictionSet,
    confusion,
    pr_curve,
    read_predictions,
    score,
    sweep_threshold,
    write_predictions,
)

from helpers import oracle_confusion, oracle_micro_f1, oracle_prf, random_instance


def make_pair(gold_rows, probs, channels=("A", "B")):
    """Single-document gold/prediction pair from plain nested lists."""
    n = len(gold_rows)
    tokens = tuple(Token(2 * i, 2 * i + 1) for i in range(n))
    rows = np.array(gold_rows, dtype=np.int8).reshape(n, len(channels))
    gold = [TagMatrix("d0", IO, tuple(channels), tokens, rows)]
    pred = PredictionSet(
        IO,
        tuple(channels),
        [DocPrediction("d0", tokens, np.array(probs, dtype=float).reshape(n, len(channels)))],
    )
    return gold, pred


class TestConfusion:
    def test_clean_separation(self):
        gold, pred = make_pair([[1, 0], [0, 1]], [[0.9, 0.1], [0.2, 0.8]])
        counts = confusion(gold, pred, 0.5)
        assert counts.tp.sum() == 2 and counts.fp.sum() == 0 and counts.fn.sum() == 0

    def test_false_positive_cell(self):
        gold, pred = make_pair([[1, 0], [0, 1]], [[0.9, 0.6], [0.2, 0.8]])
        counts = confusion(gold, pred, 0.5)
        assert counts.tp.sum() == 2 and counts.fp.sum() == 1 and counts.fn.sum() == 0

    def test_threshold_one_with_no_certain_probs(self):
        gold, pred = make_pair([[1, 0], [0, 1]], [[0.9, 0.1], [0.2, 0.8]])
        counts = confusion(gold, pred, 1.0)
        assert counts.tp.sum() == 0 and counts.fp.sum() == 0 and counts.fn.sum() == 2

    def test_dimension_mismatch_names_document(self):
        gold, pred = make_pair([[1, 0]], [[0.9, 0.1]])
        bad_tokens = (Token(0, 1), Token(2, 3))
        pred.docs[0] = DocPrediction("d0", bad_tokens, np.array([[0.5, 0.5], [0.5, 0.5]]))
        with pytest.raises(EvaluationError, match="d0"):
            confusion(gold, pred, 0.5)

    def test_missing_document(self):
        gold, pred = make_pair([[1, 0]], [[0.9, 0.1]])
        pred.docs[0].doc_id = "other"
        with pytest.raises(EvaluationError, match="other"):
            confusion(gold, pred, 0.5)


class TestScore:
    def test_formula(self):
        gold, pred = make_pair([[1], [1], [0]], [[0.9], [0.8], [0.7]], channels=("A",))
        report = score(confusion(gold, pred, 0.5))
        lab = report.per_label["A"]
        assert (lab.tp, lab.fp, lab.fn) == (2, 1, 0)
        assert lab.precision == pytest.approx(2 / 3)
        assert lab.recall == 1.0
        assert lab.f1 == pytest.approx(0.8)

    def test_macro_is_unweighted_mean(self):
        # channel A perfect, channel B all wrong -> macro F1 = 0.5
        gold, pred = make_pair([[1, 0], [0, 1]], [[0.9, 0.9], [0.1, 0.1]])
        report = score(confusion(gold, pred, 0.5))
        assert report.per_label["A"].f1 == 1.0
        assert report.per_label["B"].f1 == 0.0
        assert report.macro[2] == 0.5

    def test_all_zero_convention(self):
        gold, pred = make_pair([[0, 0]], [[0.1, 0.1]])
        report = score(confusion(gold, pred, 0.5))
        assert report.micro == (0.0, 0.0, 0.0)
        assert report.macro == (0.0, 0.0, 0.0)

    def test_micro_equals_macro_for_single_label(self):
        rng = random.Random(0)
        for trial in range(20):
            gold, pred = random_instance(rng, max_channels=1)
            report = score(confusion(gold, pred, 0.5))
            assert report.micro == pytest.approx(report.macro)

    def test_micro_f1_is_harmonic_mean(self):
        rng = random.Random(1)
        for trial in range(20):
            gold, pred = random_instance(rng)
            report = score(confusion(gold, pred, 0.4))
            p, r, f1 = report.micro
            expected = 2 * p * r / (p + r) if p + r else 0.0
            assert f1 == pytest.approx(expected)


class TestOracleEquivalence:
    def test_confusion_and_score_match_brute_force(self):
        rng = random.Random(42)
        for trial in range(60):
            gold, pred = random_instance(rng)
            threshold = rng.choice([0.0, 0.25, 0.5, 0.9, 1.0, rng.random()])
            counts = confusion(gold, pred, threshold)
            expected = oracle_confusion(gold, pred, threshold)
            for ci, ch in enumerate(counts.channels):
                assert (int(counts.tp[ci]), int(counts.fp[ci]), int(counts.fn[ci])) == expected[ch]
            report = score(counts)
            for ch, (tp, fp, fn) in expected.items():
                assert (
                    report.per_label[ch].precision,
                    report.per_label[ch].recall,
                    report.per_label[ch].f1,
                ) == pytest.approx(oracle_prf(tp, fp, fn))

    def test_order_invariance(self):
        rng = random.Random(9)
        gold, pred = random_instance(rng, max_docs=5)
        report = score(confusion(gold, pred, 0.5)).to_dict()
        shuffled = PredictionSet(pred.scheme, pred.channels, list(reversed(pred.docs)))
        report2 = score(confusion(list(reversed(gold)), shuffled, 0.5)).to_dict()
        assert report == report2


class TestSweep:
    def test_perfectly_separated(self):
        gold, pred = make_pair([[1], [1], [0], [0]], [[0.9], [0.9], [0.1], [0.1]], channels=("A",))
        best, report = sweep_threshold(gold, pred)
        assert best == pytest.approx(0.101)
        assert report.micro[2] == 1.0

    def test_all_zero_probs_degenerate(self):
        gold, pred = make_pair([[1], [0]], [[0.0], [0.0]], channels=("A",))
        best, report = sweep_threshold(gold, pred)
        assert best == 0.0
        assert report.degenerate
        assert report.micro[1] == 1.0  # everything predicted positive -> recall 1

    def test_tie_returns_lowest_threshold(self):
        gold, pred = make_pair([[1]], [[1.0]], channels=("A",))
        best, report = sweep_threshold(gold, pred)
        assert best == 0.0
        assert report.micro[2] == 1.0

    def test_optimal_over_all_candidates(self):
        rng = random.Random(77)
        for trial in range(10):
            gold, pred = random_instance(rng, max_docs=3, max_tokens=6, max_channels=3)
            best, report = sweep_threshold(gold, pred)
            best_f1 = report.micro[2]
            cells = np.concatenate([d.probs.ravel() for d in pred.docs]) if pred.docs else []
            candidates = set(np.arange(1001) / 1000.0) | set(float(x) for x in cells)
            for t in candidates:
                assert best_f1 >= oracle_micro_f1(gold, pred, t) - 1e-12

    def test_empty_prediction_set_rejected(self):
        with pytest.raises(EvaluationError, match="empty"):
            sweep_threshold([], PredictionSet(IO, ("A",), []))


class TestPRCurve:
    def test_perfect_point_present(self):
        gold, pred = make_pair([[1], [0]], [[0.9], [0.1]], channels=("A",))
        curve = pr_curve(gold, pred, "A")
        assert (1.0, 1.0) in {(p, r) for _, p, r in curve.points}

    def test_thresholds_increasing_recall_nonincreasing(self):
        rng = random.Random(8)
        gold, pred = random_instance(rng, max_docs=4, max_tokens=8, max_channels=2)
        curve = pr_curve(gold, pred, pred.channels[0])
        thresholds = [t for t, _, _ in curve.points]
        recalls = [r for _, _, r in curve.points]
        assert thresholds == sorted(set(thresholds))
        assert all(a >= b for a, b in zip(recalls, recalls[1:]))

    def test_zero_gold_label_warns_and_zero_recall(self, caplog):
        gold, pred = make_pair([[0], [0]], [[0.9], [0.1]], channels=("A",))
        with caplog.at_level("WARNING"):
            curve = pr_curve(gold, pred, "A")
        assert "zero gold positives" in caplog.text
        assert all(r == 0.0 for _, _, r in curve.points)

    def test_unknown_label(self):
        gold, pred = make_pair([[1]], [[0.9]], channels=("A",))
        with pytest.raises(EvaluationError, match="unknown label"):
            pr_curve(gold, pred, "Z")

    def test_uniform_probs_precision_approximates_prevalence(self):
        rng = np.random.default_rng(1234)
        n, prevalence = 10_000, 0.3
        tokens = tuple(Token(2 * i, 2 * i + 1) for i in range(n))
        rows = (rng.random(n) < prevalence).astype(np.int8).reshape(n, 1)
        probs = rng.random(n).reshape(n, 1)
        gold = [TagMatrix("d0", IO, ("A",), tokens, rows)]
        pred = PredictionSet(IO, ("A",), [DocPrediction("d0", tokens, probs)])
        curve = pr_curve(gold, pred, "A")
        low = [p for t, p, _ in curve.points if t <= 0.2]
        assert low and all(abs(p - prevalence) <= 0.05 for p in low)

    def test_csv_export(self, tmp_path):
        gold, pred = make_pair([[1], [0]], [[0.9], [0.1]], channels=("A",))
        path = tmp_path / "pr_A.csv"
        pr_curve(gold, pred, "A").to_csv(path)
        lines = path.read_text().strip().splitlines()
        assert lines[0] == "threshold,precision,recall"
        assert len(lines) > 1000


class TestPredictionIO:
    def test_round_trip_with_meta(self, tmp_path):
        rng = random.Random(3)
        _, pred = random_instance(rng, max_docs=3)
        path = tmp_path / "preds.jsonl"
        write_predictions(pred, path, meta={"vocab_hash": "abc123"})
        loaded, meta = read_predictions(path, IO)
        assert meta == {"vocab_hash": "abc123"}
        assert loaded.channels == pred.channels
        assert [d.doc_id for d in loaded.docs] == [d.doc_id for d in pred.docs]
        for a, b in zip(loaded.docs, pred.docs):
            assert np.array_equal(a.probs, b.probs)
            assert a.tokens == b.tokens

    def test_probability_bounds_enforced(self, tmp_path):
        tokens = (Token(0, 1),)
        pred = PredictionSet(IO, ("A",), [DocPrediction("d0", tokens, np.array([[1.5]]))])
        with pytest.raises(EvaluationError, match="outside"):
            pred.validate()
