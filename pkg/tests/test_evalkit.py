"""Scoring, metrics, kappa, and sweep machinery."""

import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from rarephen.corpus import GoldLabel
from rarephen.errors import ValidationError
from rarephen.evalkit import (
    ConfusionCounts,
    cohens_kappa,
    coverage_of,
    dictionary_verdicts,
    kappa_from_files,
    precision_recall_f1,
    score_mentions,
    write_sweep_csv,
)
from rarephen.llmfilter import Verdict


def gold(doc_id, start, end, label):
    return GoldLabel(
        doc_id=doc_id, start=start, end=end, surface="x" * (end - start),
        label=label, source="adjudicated",
    )


def verdict(doc_id, start, end, label, parse_status="clean"):
    return Verdict(
        doc_id=doc_id, start=start, end=end, label=label,
        raw_response="yes" if label == "true_mention" else "no",
        parse_status=parse_status, model_name="m", strategy="zero_shot",
    )


def failed_verdict(doc_id, start, end):
    return Verdict(
        doc_id=doc_id, start=start, end=end, label=None,
        raw_response="unclear", parse_status="failed",
        model_name="m", strategy="zero_shot",
    )


class TestScoreMentions:
    def test_perfect_predictions(self):
        golds = [gold("d", i, i + 1, "true_mention") for i in range(5)]
        verdicts = [verdict("d", i, i + 1, "true_mention") for i in range(5)]
        counts = score_mentions(verdicts, golds)
        assert (counts.tp, counts.fp, counts.fn) == (5, 0, 0)

    def test_empty_predictions_five_gold_positives(self):
        golds = [gold("d", i, i + 1, "true_mention") for i in range(5)]
        counts = score_mentions([], golds)
        assert (counts.tp, counts.fp, counts.fn) == (0, 0, 5)

    def test_hand_enumerated_ten_mention_fixture(self):
        # 6 gold-true, 4 gold-false; verdicts flip gold-true #0 to false and
        # gold-false #6 to true
        golds = [gold("d", i, i + 1, "true_mention") for i in range(6)]
        golds += [gold("d", i, i + 1, "false_mention") for i in range(6, 10)]
        verdicts = []
        for i in range(10):
            want = "true_mention" if i < 6 else "false_mention"
            if i == 0:
                want = "false_mention"
            if i == 6:
                want = "true_mention"
            verdicts.append(verdict("d", i, i + 1, want))
        counts = score_mentions(verdicts, golds)
        # tp: gold-true 1..5 predicted true = 5; fp: key 6 = 1; fn: key 0 = 1
        assert (counts.tp, counts.fp, counts.fn) == (5, 1, 1)

    def test_gold_false_predicted_false_counts_nothing(self):
        golds = [gold("d", 0, 1, "false_mention")]
        counts = score_mentions([verdict("d", 0, 1, "false_mention")], golds)
        assert (counts.tp, counts.fp, counts.fn) == (0, 0, 0)

    def test_parse_failed_costs_recall_only_when_gold_true(self):
        golds = [gold("d", 0, 1, "true_mention"), gold("d", 1, 2, "false_mention")]
        verdicts = [failed_verdict("d", 0, 1), failed_verdict("d", 1, 2)]
        counts = score_mentions(verdicts, golds)
        assert (counts.tp, counts.fp, counts.fn) == (0, 0, 1)

    def test_duplicate_verdict_rejected(self):
        golds = [gold("d", 0, 1, "true_mention")]
        vs = [verdict("d", 0, 1, "true_mention"), verdict("d", 0, 1, "true_mention")]
        with pytest.raises(ValidationError, match="duplicate verdict"):
            score_mentions(vs, golds)

    def test_closed_world_rejects_unmatched_prediction(self):
        with pytest.raises(ValidationError, match="no gold record"):
            score_mentions([verdict("d", 0, 1, "true_mention")], [])

    def test_open_world_counts_unmatched_positive_as_fp(self):
        counts = score_mentions([verdict("d", 0, 1, "true_mention")], [], mode="open")
        assert (counts.tp, counts.fp, counts.fn) == (0, 1, 0)
        counts = score_mentions([verdict("d", 0, 1, "false_mention")], [], mode="open")
        assert (counts.tp, counts.fp, counts.fn) == (0, 0, 0)

    def test_dictionary_verdicts_are_all_positive(self):
        from rarephen.extract import Mention

        mentions = [
            Mention(doc_id="d", start=0, end=1, surface="x", ordo_id="O", cui="C1",
                    term_kind="label"),
        ]
        (v,) = dictionary_verdicts(mentions)
        assert v.label == "true_mention" and v.strategy == "dictionary"


class TestPrecisionRecallF1:
    def test_known_metric_triple_is_internally_consistent(self):
        # a dictionary-stage operating point: high recall, low precision
        counts = ConfusionCounts(tp=3415, fp=6585, fn=623)
        m = precision_recall_f1(counts)
        assert m.precision == pytest.approx(0.3415, abs=1e-4)
        assert m.recall == pytest.approx(0.8458, abs=5e-4)
        assert m.f1 == pytest.approx(0.4866, abs=5e-4)

    def test_all_zero_degenerate(self):
        m = precision_recall_f1(ConfusionCounts(0, 0, 0))
        assert m.precision == m.recall == m.f1 == 0.0
        assert m.degenerate_flags == {"no_predictions", "no_gold"}

    @pytest.mark.parametrize("x", [0.25, 0.5, 1.0])
    def test_f1_equals_x_when_p_equals_r(self, x):
        # choose integer counts with p = r = x
        tp = 100
        fp = fn = int(tp * (1 - x) / x)
        m = precision_recall_f1(ConfusionCounts(tp, fp, fn))
        assert m.f1 == pytest.approx(x, abs=1e-12)

    def test_negative_counts_rejected(self):
        with pytest.raises(ValidationError):
            ConfusionCounts(tp=-1, fp=0, fn=0)

    @given(st.integers(0, 10**6), st.integers(0, 10**6), st.integers(0, 10**6))
    @settings(max_examples=500, deadline=None)
    def test_bounds_and_harmonic_mean(self, tp, fp, fn):
        m = precision_recall_f1(ConfusionCounts(tp, fp, fn))
        assert 0.0 <= m.precision <= 1.0
        assert 0.0 <= m.recall <= 1.0
        assert 0.0 <= m.f1 <= 1.0
        if m.precision + m.recall > 0:
            assert min(m.precision, m.recall) - 1e-12 <= m.f1 <= max(m.precision, m.recall) + 1e-12
            expected = 2 * m.precision * m.recall / (m.precision + m.recall)
            assert m.f1 == pytest.approx(expected, abs=1e-12)


def straight_line_metrics(tp, fp, fn):
    """Independent plain reimplementation used as the metric oracle."""
    p = tp / (tp + fp) if tp + fp else 0.0
    r = tp / (tp + fn) if tp + fn else 0.0
    f = 2 * p * r / (p + r) if p + r else 0.0
    return p, r, f


class TestMetricOracle:
    def test_thousand_random_counts(self):
        rng = random.Random(99)
        for _ in range(1000):
            tp = rng.randint(0, 10_000)
            fp = rng.randint(0, 10_000)
            fn = rng.randint(0, 10_000)
            if rng.random() < 0.05:
                tp = 0
            if rng.random() < 0.05:
                fp = 0
            if rng.random() < 0.05:
                fn = 0
            m = precision_recall_f1(ConfusionCounts(tp, fp, fn))
            p, r, f = straight_line_metrics(tp, fp, fn)
            assert abs(m.precision - p) <= 1e-12
            assert abs(m.recall - r) <= 1e-12
            assert abs(m.f1 - f) <= 1e-12


def brute_force_kappa(labels_a, labels_b):
    """Direct tally oracle for expected agreement."""
    n = len(labels_a)
    agree = sum(a == b for a, b in zip(labels_a, labels_b))
    p_o = agree / n
    cats = set(labels_a) | set(labels_b)
    p_e = 0.0
    for cat in cats:
        p_e += (labels_a.count(cat) / n) * (labels_b.count(cat) / n)
    if p_e == 1.0:
        return 1.0 if p_o == 1.0 else 0.0
    return (p_o - p_e) / (1 - p_e)


class TestCohensKappa:
    def test_identical_vectors(self):
        labels = ["true_mention", "false_mention"] * 10
        assert cohens_kappa(labels, labels).kappa == 1.0

    def test_forty_forty_ten_ten_is_exactly_point_six(self):
        a = ["yes"] * 40 + ["no"] * 40 + ["yes"] * 10 + ["no"] * 10
        b = ["yes"] * 40 + ["no"] * 40 + ["no"] * 10 + ["yes"] * 10
        result = cohens_kappa(a, b)
        assert result.p_observed == 0.8
        assert result.p_expected == 0.5
        assert result.kappa == 0.6  # exact, no float drift

    def test_one_sided_annotator_vs_mixed(self):
        a = ["yes"] * 10
        b = ["yes"] * 5 + ["no"] * 5
        result = cohens_kappa(a, b)
        assert result.kappa == pytest.approx(brute_force_kappa(a, b), abs=1e-12)

    def test_length_mismatch(self):
        with pytest.raises(ValidationError):
            cohens_kappa(["yes"], ["yes", "no"])

    def test_empty_rejected(self):
        with pytest.raises(ValidationError):
            cohens_kappa([], [])

    def test_symmetry_and_permutation_invariance(self):
        rng = random.Random(5)
        for _ in range(200):
            n = rng.randint(1, 60)
            a = [rng.choice(["yes", "no"]) for _ in range(n)]
            b = [rng.choice(["yes", "no"]) for _ in range(n)]
            k_ab = cohens_kappa(a, b).kappa
            k_ba = cohens_kappa(b, a).kappa
            assert k_ab == pytest.approx(k_ba, abs=1e-12)
            assert k_ab <= 1.0 + 1e-12
            order = list(range(n))
            rng.shuffle(order)
            k_perm = cohens_kappa([a[i] for i in order], [b[i] for i in order]).kappa
            assert k_ab == pytest.approx(k_perm, abs=1e-12)
            assert k_ab == pytest.approx(brute_force_kappa(a, b), abs=1e-12)

    def test_kappa_is_one_iff_perfect_agreement(self):
        rng = random.Random(6)
        for _ in range(100):
            n = rng.randint(1, 30)
            a = [rng.choice(["yes", "no"]) for _ in range(n)]
            b = [rng.choice(["yes", "no"]) for _ in range(n)]
            k = cohens_kappa(a, b).kappa
            if a == b:
                assert k == 1.0
            else:
                assert k < 1.0


class TestKappaFromFiles:
    def test_aligned_files(self, tmp_path):
        import json

        a_path = tmp_path / "a.jsonl"
        b_path = tmp_path / "b.jsonl"
        rows = [("d", i, i + 1) for i in range(100)]
        with a_path.open("w") as fa, b_path.open("w") as fb:
            for i, (doc, s, e) in enumerate(rows):
                la = "yes" if i < 50 else "no"
                if i < 40:
                    lb = "yes"
                elif i < 80:
                    lb = "no" if i >= 50 else "yes"
                else:
                    lb = "no" if i < 90 else "yes"
                fa.write(json.dumps({"doc_id": doc, "start": s, "end": e, "label": la}) + "\n")
                fb.write(json.dumps({"doc_id": doc, "start": s, "end": e, "label": lb}) + "\n")
        result = kappa_from_files(a_path, b_path)
        assert result.item_count == 100

    def test_misaligned_files_rejected(self, tmp_path):
        import json

        a_path = tmp_path / "a.jsonl"
        b_path = tmp_path / "b.jsonl"
        a_path.write_text(json.dumps(
            {"doc_id": "d", "start": 0, "end": 1, "label": "yes"}) + "\n")
        b_path.write_text(json.dumps(
            {"doc_id": "d", "start": 5, "end": 6, "label": "yes"}) + "\n")
        with pytest.raises(ValidationError, match="do not align"):
            kappa_from_files(a_path, b_path)


class TestCoverageAndCsv:
    def test_coverage(self):
        vs = [verdict("d", 0, 1, "true_mention"), failed_verdict("d", 1, 2)]
        assert coverage_of(vs, 4) == 0.25

    def test_sweep_csv_shape(self, tmp_path):
        from rarephen.evalkit import MetricsResult, SweepPoint, SweepResult

        result = SweepResult(
            axis="shots",
            points=[
                SweepPoint(1, MetricsResult(0.5, 0.6, 0.5454545454545454), 1.0, "abc"),
                SweepPoint(2, MetricsResult(0.7, 0.8, 0.7466666666666667), 1.0, "abc"),
            ],
        )
        out = tmp_path / "sweep.csv"
        write_sweep_csv(result, out)
        lines = out.read_text().strip().split("\n")
        assert lines[0] == "axis_value,precision,recall,f1,coverage"
        assert lines[1].startswith("1,0.500000,0.600000,0.545455,")
