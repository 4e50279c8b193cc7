"""Closed-form metric tests."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from pruneforge import metrics as MET
from pruneforge import model as M


def cm(rows):
    return MET.ConfusionMatrix(np.array(rows))


class TestAccuracy:
    def test_diagonal_is_one(self):
        assert MET.accuracy(cm([[5, 0], [0, 7]])) == 1.0

    def test_zero_diagonal_is_zero(self):
        assert MET.accuracy(cm([[0, 5], [7, 0]])) == 0.0

    def test_hand_value(self):
        assert abs(MET.accuracy(cm([[40, 10], [20, 30]])) - 0.70) < 1e-12


class TestCohenKappa:
    def test_perfect_agreement(self):
        assert MET.cohen_kappa(cm([[10, 0], [0, 10]])) == 1.0

    def test_hand_value(self):
        # p_o = 0.7, p_e = 0.5 -> kappa = 0.4
        assert abs(MET.cohen_kappa(cm([[40, 10], [20, 30]])) - 0.4) < 1e-9

    def test_chance_agreement_is_zero(self):
        assert abs(MET.cohen_kappa(cm([[25, 25], [25, 25]]))) < 1e-12

    def test_degenerate_pe_one_returns_zero(self):
        assert MET.cohen_kappa(cm([[7, 0], [0, 0]])) == 0.0

    def test_kappa_one_iff_off_diagonal_zero(self):
        assert MET.cohen_kappa(cm([[3, 0], [0, 9]])) == 1.0
        assert MET.cohen_kappa(cm([[3, 1], [0, 9]])) < 1.0

    @settings(max_examples=30, deadline=None)
    @given(st.lists(st.integers(0, 50), min_size=9, max_size=9), st.permutations([0, 1, 2]))
    def test_invariance_under_class_relabeling(self, counts, perm):
        counts = np.array(counts).reshape(3, 3)
        if counts.sum() == 0:
            counts[0, 0] = 1
        p = np.array(perm)
        relabeled = counts[np.ix_(p, p)]
        a, b = cm(counts.tolist()), cm(relabeled.tolist())
        assert abs(MET.accuracy(a) - MET.accuracy(b)) < 1e-12
        assert abs(MET.cohen_kappa(a) - MET.cohen_kappa(b)) < 1e-12


class TestReductions:
    def test_identity_is_zero(self):
        spec = M.preset_spec("tinyvgg", (1, 16, 16), 3)
        assert MET.reduction_percentages(spec, spec) == (0.0, 0.0)

    def test_vgg16_half_pruned_reductions(self):
        for res, classes, expected in [((3, 200, 200), 9, 74.42), ((3, 96, 96), 10, 74.25)]:
            spec = M.preset_spec("vgg16", res, classes)
            pruned = M.uniformly_pruned_spec(spec, 0.5)
            kernel_pct, gflops_pct = MET.reduction_percentages(spec, pruned)
            assert kernel_pct == 50.0
            assert abs(gflops_pct - expected) <= 1.0

    def test_layer_count_mismatch(self):
        a = M.preset_spec("tinyvgg", (1, 16, 16), 3)
        b = M.preset_spec("vgg16", (3, 96, 96), 3)
        with pytest.raises(ValueError):
            MET.reduction_percentages(a, b)


class TestAggregation:
    def test_single_split_zero_std(self):
        rep = MET.aggregate_splits([0.9], [0.8])
        assert rep.accuracy_std == 0.0

    def test_population_std_hand_value(self):
        rep = MET.aggregate_splits([1.0, 2.0, 3.0], [1.0, 2.0, 3.0])
        assert MET.format_mean_std(rep.accuracies) == "2.00 ± 0.82"

    def test_order_invariant(self):
        a = MET.aggregate_splits([0.1, 0.5, 0.9], [0.2, 0.3, 0.4])
        b = MET.aggregate_splits([0.9, 0.1, 0.5], [0.4, 0.2, 0.3])
        assert a.accuracy_mean == b.accuracy_mean
        assert a.accuracy_std == b.accuracy_std

    def test_mismatched_lengths_rejected(self):
        with pytest.raises(ValueError):
            MET.aggregate_splits([0.9], [0.8, 0.7])


class TestEvaluateModel:
    def test_confusion_total_matches_samples(self, trained_tinyvgg, shapes_small):
        result = MET.evaluate_model(
            trained_tinyvgg, shapes_small["test_images"], shapes_small["test_labels"]
        )
        assert result.total == shapes_small["test_images"].shape[0]

    def test_trained_model_beats_chance(self, trained_tinyvgg, shapes_small):
        result = MET.evaluate_model(
            trained_tinyvgg, shapes_small["test_images"], shapes_small["test_labels"]
        )
        assert MET.accuracy(result) > 0.8
        assert MET.cohen_kappa(result) > 0.6
