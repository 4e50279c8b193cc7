"""Criterion and selection tests, including the structural-removal oracle."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from pruneforge import model as M
from pruneforge import relevance as REL
from pruneforge import tensor as T


@pytest.fixture(scope="module")
def small_model():
    return M.build_preset("tinyvgg", (1, 16, 16), 3, seed=21).astype(np.float64)


@pytest.fixture(scope="module")
def eval_set():
    rng = np.random.default_rng(77)
    images = rng.normal(size=(24, 1, 16, 16))
    labels = rng.integers(0, 3, size=24)
    return images, labels


def brute_force_objective(model, l, images, labels):
    """Structural-removal oracle: prune each kernel for real and re-evaluate."""
    base, _ = T.softmax_cross_entropy_forward(M.forward_logits(model, images), labels)
    out = []
    for k in range(model.spec.conv_layers[l - 1].out_channels):
        pruned = M.prune_layer(model, l, [k])
        loss, _ = T.softmax_cross_entropy_forward(M.forward_logits(pruned, images), labels)
        out.append(loss - base)
    return np.array(out)


class TestObjectiveScores:
    def test_matches_structural_oracle_all_layers(self, small_model, eval_set):
        images, labels = eval_set
        for l in range(1, 5):
            scores = REL.score_objective(small_model, l, images, labels)
            oracle = brute_force_objective(small_model, l, images, labels)
            got = np.array([s.value for s in scores])
            assert np.allclose(got, oracle, atol=1e-6), f"layer {l}"

    def test_dead_kernel_scores_zero(self, eval_set):
        images, labels = eval_set
        model = M.build_preset("tinyvgg", (1, 16, 16), 3, seed=3).astype(np.float64)
        model.conv_kernels[1][:, 5, :, :] = 0.0  # kernel 5 of layer 1 is now dead
        scores = REL.score_objective(model, 1, images, labels)
        assert abs(scores[5].value) < 1e-9

    def test_duplicated_eval_set_identical_scores(self, small_model, eval_set):
        images, labels = eval_set
        once = REL.score_objective(small_model, 2, images, labels)
        twice = REL.score_objective(
            small_model, 2, np.concatenate([images, images]), np.concatenate([labels, labels])
        )
        assert np.allclose([s.value for s in once], [s.value for s in twice], atol=1e-9)

    def test_batching_invariance(self, small_model, eval_set):
        images, labels = eval_set
        a = REL.score_objective(small_model, 1, images, labels, batch_size=5)
        b = REL.score_objective(small_model, 1, images, labels, batch_size=64)
        assert np.allclose([s.value for s in a], [s.value for s in b], atol=1e-9)

    def test_empty_eval_set_rejected(self, small_model):
        with pytest.raises(REL.SelectionError):
            REL.score_objective(small_model, 1, np.zeros((0, 1, 16, 16)), np.zeros(0, dtype=int))


class TestL1Scores:
    def test_zero_kernel_scores_zero_and_ranks_first(self, small_model):
        model = small_model.copy()
        model.conv_kernels[2][4] = 0.0
        scores = REL.score_l1(model, 3)
        assert scores[4].value == 0.0
        removal = REL.select(scores, REL.SelectionPolicy("fixed_fraction", fraction=0.1))
        assert removal.kernels == (4,)

    def test_hand_sum(self):
        model = M.build_preset("tinyvgg", (1, 16, 16), 3, seed=0)
        model = model.copy()
        model.conv_kernels[0][2] = 0.5  # one input channel, nine weights of 0.5
        scores = REL.score_l1(model, 1)
        assert abs(scores[2].value - 4.5) < 1e-6

    def test_negation_invariant(self, small_model):
        model = small_model.copy()
        before = REL.score_l1(model, 2)[3].value
        model.conv_kernels[1][3] *= -1.0
        after = REL.score_l1(model, 2)[3].value
        assert abs(before - after) < 1e-12


class TestApozScores:
    def test_always_negative_channel_is_most_prunable(self, eval_set):
        images, _ = eval_set
        model = M.build_preset("tinyvgg", (1, 16, 16), 3, seed=9)
        model = model.copy()
        model.conv_kernels[0][1] = 0.0
        model.conv_biases[0][1] = -5.0  # channel 1 pre-ReLU is always -5
        model.conv_kernels[0][2] = 0.0
        model.conv_biases[0][2] = +5.0  # channel 2 is always +5
        scores = REL.score_apoz(model, 1, images.astype(np.float32))
        assert scores[1].value == 1.0
        assert scores[2].value == 0.0
        assert REL.relevance_key(scores[1]) < REL.relevance_key(scores[2])

    def test_hand_built_half_zero(self):
        # one conv layer, identity kernel; 2 images: one all positive, one all negative
        spec = M.ArchitectureSpec(
            (M.ConvLayerSpec(1, 1, 3, False),),
            M.ClassifierSpec((), 2),
            (1, 12, 12),
        )
        model = M.init_model(spec, seed=0)
        model.conv_kernels[0][:] = 0.0
        model.conv_kernels[0][0, 0, 1, 1] = 1.0
        imgs = np.stack([np.ones((1, 12, 12)), -np.ones((1, 12, 12))]).astype(np.float32)
        scores = REL.score_apoz(model, 1, imgs)
        assert scores[0].value == 0.5

    def test_empty_eval_rejected(self, small_model):
        with pytest.raises(REL.SelectionError):
            REL.score_apoz(small_model, 1, np.zeros((0, 1, 16, 16)))


class TestSelect:
    def _scores(self, values, layer=1, criterion=REL.OBJECTIVE):
        return [
            REL.KernelScore(layer=layer, kernel=k, value=v, criterion=criterion)
            for k, v in enumerate(values)
        ]

    def test_fifty_percent_of_64(self):
        scores = self._scores(list(np.linspace(0, 1, 64)))
        removal = REL.select(scores, REL.SelectionPolicy("fixed_fraction", fraction=0.5))
        assert len(removal.kernels) == 32

    def test_tie_break_lower_index_first(self):
        scores = self._scores([1.0] * 8)
        removal = REL.select(scores, REL.SelectionPolicy("fixed_fraction", fraction=0.25))
        assert removal.kernels == (0, 1)

    def test_threshold_below_minimum_removes_nothing(self):
        scores = self._scores([0.5, 0.7, 0.9])
        removal = REL.select(scores, REL.SelectionPolicy("threshold", threshold=0.1))
        assert removal.kernels == ()

    def test_threshold_strictness(self):
        scores = self._scores([0.5, 0.7, 0.9])
        removal = REL.select(scores, REL.SelectionPolicy("threshold", threshold=0.7))
        assert removal.kernels == (0,)  # strictly below, 0.7 survives

    def test_threshold_emptying_layer_rejected(self):
        scores = self._scores([0.1, 0.2, 0.3])
        with pytest.raises(REL.SelectionError):
            REL.select(scores, REL.SelectionPolicy("threshold", threshold=99.0))

    def test_apoz_direction_high_removed_first(self):
        scores = self._scores([0.1, 0.9, 0.5], criterion=REL.APOZ)
        removal = REL.select(scores, REL.SelectionPolicy("fixed_fraction", fraction=0.4))
        assert removal.kernels == (1,)  # highest zero fraction = least relevant

    def test_explicit_policy(self):
        scores = self._scores([0.5, 0.7, 0.9, 1.0])
        removal = REL.select(scores, REL.SelectionPolicy("explicit", explicit=(3, 1)))
        assert removal.kernels == (1, 3)

    def test_incomplete_coverage_rejected(self):
        scores = self._scores([0.5, 0.7])[:1] + [
            REL.KernelScore(layer=1, kernel=5, value=0.1, criterion=REL.OBJECTIVE)
        ]
        with pytest.raises(REL.SelectionError):
            REL.select(scores, REL.SelectionPolicy("fixed_fraction", fraction=0.5))

    @settings(max_examples=25, deadline=None)
    @given(
        values=st.lists(st.floats(-10, 10, allow_nan=False), min_size=4, max_size=16),
        frac_step=st.integers(1, 9),
        seed=st.integers(0, 2**31),
    )
    def test_permutation_equivariance(self, values, frac_step, seed):
        fraction = frac_step / 10.0
        scores = self._scores(values)
        base = REL.select(scores, REL.SelectionPolicy("fixed_fraction", fraction=fraction))
        perm = np.random.default_rng(seed).permutation(len(values))
        relabeled = [
            REL.KernelScore(layer=1, kernel=int(perm[s.kernel]), value=s.value, criterion=s.criterion)
            for s in scores
        ]
        # equivariance holds when the relabeled scores are tie-free
        if len(set(values)) == len(values):
            relab = REL.select(relabeled, REL.SelectionPolicy("fixed_fraction", fraction=fraction))
            assert set(relab.kernels) == {int(perm[k]) for k in base.kernels}
