import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from typoattack import metrics
from typoattack.errors import DataError

from oracles import pair_count_auc


GOLDEN_P = np.array([[0.9, 0.2], [0.6, 0.7], [0.1, 0.4]])
GOLDEN_Y = [{0}, {1}, {0, 1}]


class TestF1:
    def test_golden(self):
        # label 0: tp 1, fp 1, fn 1 -> 1/2; label 1: tp 1, fp 0, fn 1 -> 2/3
        macro, micro, counts = metrics.f1_scores(GOLDEN_P, GOLDEN_Y)
        assert counts.tolist() == [[1, 1, 1], [1, 0, 1]]
        assert macro == (0.5 + 2 / 3) / 2
        assert micro == 4 / 7

    def test_perfect(self):
        Y = np.array([[1, 0, 1], [0, 1, 0]], dtype=bool)
        macro, micro, _ = metrics.f1_scores(Y.astype(float), Y)
        assert macro == 1.0 and micro == 1.0

    def test_all_negative_predictions(self):
        macro, micro, _ = metrics.f1_scores(np.zeros((3, 2)), GOLDEN_Y)
        assert macro == 0.0 and micro == 0.0

    def test_empty_label_scores_zero(self):
        # label 1 is never predicted and never true: 0/0 counts as 0
        macro, micro, _ = metrics.f1_scores(np.array([[0.9, 0.1]]), [{0}])
        assert macro == 0.5 and micro == 1.0

    def test_threshold_inclusive(self):
        _, micro, _ = metrics.f1_scores(np.array([[0.5]]), [{0}])
        assert micro == 1.0


class TestAUC:
    @pytest.mark.parametrize("seed", range(50))
    def test_matches_pair_counting(self, seed):
        rng = np.random.default_rng(seed)
        n = int(rng.integers(2, 40))
        # coarse scores so ties are common
        scores = rng.integers(0, 6, size=n) / 5 if seed % 2 else rng.random(n)
        labels = rng.random(n) < 0.4
        labels[0], labels[1] = True, False
        assert abs(metrics.roc_auc(scores, labels) - pair_count_auc(scores, labels)) <= 1e-12

    def test_all_ties(self):
        assert metrics.roc_auc([0.3] * 6, [1, 0, 1, 0, 0, 1]) == 0.5

    def test_degenerate(self):
        assert math.isnan(metrics.roc_auc([0.1, 0.2], [1, 1]))

    @settings(max_examples=50)
    @given(st.lists(st.integers(0, 1000), min_size=2, max_size=30), st.randoms())
    def test_monotone_transform_invariant(self, scores, rnd):
        # grid scores, so 2s+1 stays strictly monotone in floating point
        labels = [rnd.random() < 0.5 for _ in scores]
        labels[0], labels[1] = True, False
        s = np.array(scores) / 1000
        assert metrics.roc_auc(s, labels) == metrics.roc_auc(2 * s + 1, labels)

    def test_macro_skips_degenerate_labels(self):
        P = np.array([[0.9, 0.5], [0.1, 0.4]])
        macro, micro, per_label = metrics.auc_scores(P, [{0, 1}, {1}])
        assert math.isnan(per_label[1]) and per_label[0] == 1.0
        assert macro == 1.0
        assert micro == pytest.approx(pair_count_auc(P.ravel(), [1, 1, 0, 1]), abs=1e-12)


class TestPrecisionAtK:
    def test_example(self):
        p = np.array([[0.9, 0.8, 0.7, 0.6, 0.5, 0.4]])
        assert metrics.precision_at_k(p, [{0, 1, 5}], 5) == 0.4

    def test_ties_take_lower_index(self):
        p = np.full((1, 7), 0.5)
        assert metrics.top_k(p[0], 5).tolist() == [0, 1, 2, 3, 4]
        assert metrics.precision_at_k(p, [{5, 6}]) == 0.0
        assert metrics.precision_at_k(p, [{0, 6}]) == 0.2

    def test_too_few_labels(self):
        with pytest.raises(ValueError):
            metrics.precision_at_k(np.zeros((1, 3)), [{0}])

    @settings(max_examples=30)
    @given(st.integers(0, 2**31), st.randoms())
    def test_document_permutation_invariant(self, seed, rnd):
        rng = np.random.default_rng(seed)
        P = rng.random((8, 7))
        Y = [set(rng.choice(7, size=3, replace=False).tolist()) for _ in range(8)]
        order = list(range(8))
        rnd.shuffle(order)
        a = metrics.precision_at_k(P, Y)
        b = metrics.precision_at_k(P[order], [Y[i] for i in order])
        assert abs(a - b) <= 1e-15


class TestEvaluate:
    def test_report(self):
        P = np.tile(GOLDEN_P, (1, 3))
        Y = [{0}, {1, 3}, {0, 5}]
        r = metrics.evaluate(P, Y)
        assert r.num_docs == 3 and len(r.counts) == 6
        text = r.table("CNN")
        for row in ("Macro F1 Score", "Micro F1 Score", "Macro AUC", "Micro AUC", "Top 5 Precision"):
            assert row in text
        json.dumps(r.to_json())

    def test_nan_serialised_as_null(self):
        P = np.array([[0.2, 0.3, 0.4, 0.5, 0.6]])
        r = metrics.evaluate(P, [{0}])
        obj = r.to_json()
        assert obj["macro_auc"] is None and obj["per_label_auc"] == [None] * 5
        assert "n/a" in r.table()


def _agg(before, after):
    return {"mean_score_before": before, "mean_score_after": after}


class TestSweepTable:
    def test_rows_ordered_by_budget(self):
        groups = {(8, "random"): _agg(0.9, 0.5), (2, "max_gradient"): _agg(0.9, 0.7),
                  (2, "random"): _agg(0.9, 0.8), (8, "max_gradient"): _agg(0.9, 0.3)}
        t = metrics.sweep_table(groups)
        assert [r["budget"] for r in t.rows] == [2, 8]
        assert t.strategies == ["max_gradient", "random"]
        assert t.rows[1] == {"budget": 8, "max_gradient": 0.3, "random": 0.5}
        assert t.baseline == 0.9

    def test_missing_cell(self):
        t = metrics.sweep_table({(2, "random"): _agg(0.9, 0.8), (4, "max_gradient"): _agg(0.9, 0.6)})
        assert t.rows[0]["max_gradient"] is None
        assert "-" in t.text()

    def test_inconsistent_baselines(self):
        with pytest.raises(DataError, match="baseline"):
            metrics.sweep_table({(2, "random"): _agg(0.9, 0.8), (4, "random"): _agg(0.8, 0.6)})

    def test_empty(self):
        with pytest.raises(DataError):
            metrics.sweep_table({})

    def test_text_layout(self):
        t = metrics.sweep_table({(2, "max_gradient"): _agg(0.988, 0.782), (2, "random"): _agg(0.988, 0.948)})
        lines = t.text().splitlines()
        assert lines[0].strip() == "Top5 precision"
        assert "Max grad strategy" in lines[1] and "Random strategy" in lines[1]
        assert "Baseline (K = 0) -> 0.988" in lines[2]
        assert lines[3].split() == ["2", "0.782", "0.948"]
