"""Mean activation maps, t-SNE behavior, projections, separation hints."""

import numpy as np
import pytest

from pruneforge import analysis as A
from pruneforge import model as M
from pruneforge import tsne as TS
from pruneforge.gradcheck import finite_difference_gradients, max_relative_error


def fixed_single_layer_model():
    spec = M.ArchitectureSpec(
        (M.ConvLayerSpec(1, 2, 3, False),),
        M.ClassifierSpec((), 2),
        (1, 12, 12),
    )
    model = M.init_model(spec, seed=0).astype(np.float64)
    model.conv_kernels[0][:] = 0.0
    model.conv_kernels[0][0, 0, 1, 1] = 1.0   # kernel 0: identity
    model.conv_kernels[0][1, 0, 1, 1] = -1.0  # kernel 1: negation
    model.conv_biases[0][:] = 0.0
    return model


class TestMeanActivationMaps:
    def test_single_image_class_mean_is_that_map(self):
        model = fixed_single_layer_model()
        rng = np.random.default_rng(3)
        images = rng.uniform(0.1, 1.0, size=(2, 1, 12, 12))
        labels = np.array([0, 1])
        maps = A.compute_mean_activation_maps(model, images, labels, 1)
        # kernel 0 is the identity; post-ReLU equals the image itself
        k0_c0 = [m for m in maps if m.kernel == 0 and m.class_index == 0][0]
        assert np.allclose(k0_c0.values, images[0].reshape(-1), atol=1e-12)

    def test_duplication_invariance(self):
        model = fixed_single_layer_model()
        rng = np.random.default_rng(4)
        images = rng.uniform(0.1, 1.0, size=(4, 1, 12, 12))
        labels = np.array([0, 0, 1, 1])
        once = A.compute_mean_activation_maps(model, images, labels, 1)
        twice = A.compute_mean_activation_maps(
            model, np.concatenate([images, images]), np.concatenate([labels, labels]), 1
        )
        for a, b in zip(once, twice):
            assert np.allclose(a.values, b.values, atol=1e-12)

    def test_hand_average_of_two_images(self):
        model = fixed_single_layer_model()
        img_a = np.full((1, 12, 12), 0.5)
        img_b = np.full((1, 12, 12), 1.0)
        images = np.stack([img_a, img_b, img_a])
        labels = np.array([0, 0, 1])
        maps = A.compute_mean_activation_maps(model, images, labels, 1)
        k0_c0 = [m for m in maps if m.kernel == 0 and m.class_index == 0][0]
        assert np.allclose(k0_c0.values, 0.75, atol=1e-12)
        k1_c0 = [m for m in maps if m.kernel == 1 and m.class_index == 0][0]
        assert np.allclose(k1_c0.values, 0.0, atol=1e-12)  # negated then ReLU

    def test_empty_class_errors_with_class_name(self):
        model = fixed_single_layer_model()
        images = np.zeros((2, 1, 12, 12))
        labels = np.array([0, 0])
        with pytest.raises(A.AnalysisError, match="class 1"):
            A.compute_mean_activation_maps(model, images, labels, 1)

    def test_order_invariance(self):
        model = fixed_single_layer_model()
        rng = np.random.default_rng(5)
        images = rng.uniform(0.1, 1.0, size=(6, 1, 12, 12))
        labels = np.array([0, 1, 0, 1, 0, 1])
        perm = rng.permutation(6)
        a = A.compute_mean_activation_maps(model, images, labels, 1)
        b = A.compute_mean_activation_maps(model, images[perm], labels[perm], 1)
        for x, y in zip(a, b):
            assert np.allclose(x.values, y.values, atol=1e-9)

    def test_mean_operator_linearity_pre_relu(self):
        # the averaging itself is linear: mean(alpha * maps) = alpha * mean(maps),
        # checked on raw arrays since ReLU breaks it at the model level
        rng = np.random.default_rng(6)
        maps = rng.normal(size=(5, 64))
        assert np.allclose((3.0 * maps).mean(axis=0), 3.0 * maps.mean(axis=0), atol=1e-12)


class TestTsne:
    def test_needs_three_vectors(self):
        with pytest.raises(TS.PerplexityError):
            TS.tsne(np.zeros((2, 4)), perplexity=0.5, iterations=10)

    def test_perplexity_feasibility(self):
        with pytest.raises(TS.PerplexityError):
            TS.tsne(np.random.default_rng(0).normal(size=(10, 4)), perplexity=3.0, iterations=10)

    def test_degenerate_identical_inputs_ok(self):
        res = TS.tsne(np.ones((12, 5)), perplexity=2.0, iterations=30, seed=1)
        assert np.all(np.isfinite(res.embedding))
        assert len(res.kl_trace) == 30

    def test_seed_determinism(self):
        x = np.random.default_rng(1).normal(size=(30, 8))
        a = TS.tsne(x, perplexity=5, iterations=60, seed=9)
        b = TS.tsne(x, perplexity=5, iterations=60, seed=9)
        assert np.array_equal(a.embedding, b.embedding)
        assert a.kl_trace == b.kl_trace

    def test_different_seed_different_embedding(self):
        x = np.random.default_rng(1).normal(size=(30, 8))
        a = TS.tsne(x, perplexity=5, iterations=60, seed=1)
        b = TS.tsne(x, perplexity=5, iterations=60, seed=2)
        assert not np.array_equal(a.embedding, b.embedding)

    def test_kl_gradient_matches_finite_differences(self):
        rng = np.random.default_rng(7)
        for _ in range(3):
            pts = rng.normal(size=(5, 3))
            p = TS.joint_probabilities(pts, perplexity=1.2)
            y = rng.normal(size=(5, 2))
            _, grad = TS.kl_divergence_and_grad(p, y)
            numeric = finite_difference_gradients(
                lambda ya: TS.kl_divergence_and_grad(p, ya)[0], [y.copy()]
            )[0]
            assert max_relative_error(grad, numeric) < 1e-4

    def test_conditional_perplexity_is_matched(self):
        rng = np.random.default_rng(8)
        x = rng.normal(size=(40, 6))
        d2 = TS.pairwise_sq_distances(x)
        p = TS._conditional_probabilities(d2, perplexity=7.0)
        logp = np.where(p > 0, np.log(p), 0.0)
        entropy = -(p * logp).sum(axis=1)
        assert np.allclose(np.exp(entropy), 7.0, atol=0.01)

    def test_two_cluster_purity(self):
        rng = np.random.default_rng(9)
        a = rng.normal(0, 0.3, size=(30, 64)) + 2.0
        b = rng.normal(0, 0.3, size=(30, 64)) - 2.0
        x = np.vstack([a, b])
        labels = np.array([0] * 30 + [1] * 30)
        res = TS.tsne(x, perplexity=8, iterations=400, seed=0)
        d2 = TS.pairwise_sq_distances(res.embedding)
        np.fill_diagonal(d2, np.inf)
        nn = np.argsort(d2, axis=1)[:, :2]
        purity = np.mean([np.mean(labels[nn[i]] == labels[i]) for i in range(60)])
        assert purity >= 0.9

    def test_kl_non_increasing_after_exaggeration(self):
        rng = np.random.default_rng(10)
        x = rng.normal(size=(80, 16))
        res = TS.tsne(x, perplexity=10, iterations=400, seed=3)
        kl = res.kl_trace
        for i in range(252, len(kl)):
            assert kl[i] <= kl[i - 1] + 1e-3


class TestProjections:
    def test_point_cardinality(self, trained_tinyvgg, shapes_small):
        proj = A.project_layer(
            trained_tinyvgg,
            shapes_small["train_images"],
            shapes_small["train_labels"],
            1,
            iterations=80,
            seed=0,
        )
        assert len(proj.points) == 8 * 3
        payload = proj.to_payload()
        assert payload["layer"] == 1
        assert len(payload["points"]) == 24
        assert set(payload["points"][0]) == {"kernel", "class", "x", "y"}

    def test_class_relabeling_changes_tags_not_coordinates(self, trained_tinyvgg, shapes_small):
        # coordinates depend only on the embedded vectors (same seed, same
        # vector order); the (kernel, class) tags are attached afterwards
        proj = A.project_layer(trained_tinyvgg, shapes_small["train_images"],
                               shapes_small["train_labels"], 1, iterations=60, seed=4)
        relabeled = A.Projection2D(
            layer=proj.layer,
            points=[
                A.ProjectionPoint(p.kernel, (p.class_index + 1) % 3, p.x, p.y)
                for p in proj.points
            ],
            perplexity=proj.perplexity,
            iterations=proj.iterations,
            seed=proj.seed,
            final_kl=proj.final_kl,
            kl_trace=proj.kl_trace,
        )
        assert [(p.x, p.y) for p in relabeled.points] == [(p.x, p.y) for p in proj.points]
        assert {p.class_index for p in relabeled.points} == {0, 1, 2}
        assert [p.class_index for p in relabeled.points] != [p.class_index for p in proj.points]

    def test_weight_projection_cardinality_and_determinism(self, trained_tinyvgg):
        a = A.project_kernel_weights(trained_tinyvgg, 3, iterations=60, seed=2)
        b = A.project_kernel_weights(trained_tinyvgg, 3, iterations=60, seed=2)
        assert len(a.points) == 16
        assert a.points == b.points

    def test_duplicate_kernels_land_together(self):
        model = M.build_preset("tinyvgg", (1, 16, 16), 3, seed=31)
        model = model.copy()
        model.conv_kernels[2][7] = model.conv_kernels[2][2]  # make 7 a copy of 2
        proj = A.project_kernel_weights(model, 3, iterations=300, seed=0)
        pts = {k: np.array([x, y]) for k, x, y in proj.points}
        dup = np.linalg.norm(pts[2] - pts[7])
        dists = [
            np.linalg.norm(pts[i] - pts[j])
            for i in range(16)
            for j in range(i + 1, 16)
        ]
        assert dup <= np.percentile(dists, 5)


class TestSeparationHint:
    def _proj(self, pts):
        points = [A.ProjectionPoint(0, j, x, y) for j, (x, y) in enumerate(pts)]
        return A.Projection2D(1, points, 5.0, 10, 0, 0.0, [])

    def test_coincident_is_minus_one(self):
        assert A.separation_hint(self._proj([(0, 0), (0, 0), (0, 0)]), 0) == -1.0

    def test_one_class_far_is_positive(self):
        hint = A.separation_hint(self._proj([(10, 0), (0, 0.1), (0, -0.1)]), 0)
        assert hint > 0

    def test_rotation_invariance(self):
        pts = [(3.0, 1.0), (-1.0, 0.5), (0.2, -2.0)]
        th = 1.1
        c, s = np.cos(th), np.sin(th)
        rotated = [(c * x - s * y, s * x + c * y) for x, y in pts]
        a = A.separation_hint(self._proj(pts), 0)
        b = A.separation_hint(self._proj(rotated), 0)
        assert abs(a - b) < 1e-9

    def test_range(self, trained_tinyvgg, shapes_small):
        proj = A.project_layer(
            trained_tinyvgg, shapes_small["train_images"], shapes_small["train_labels"], 2,
            iterations=60, seed=0,
        )
        for k, hint in A.separation_hints(proj).items():
            assert -1.0 <= hint <= 1.0

    def test_absent_kernel_rejected(self):
        with pytest.raises(A.AnalysisError):
            A.separation_hint(self._proj([(0, 0), (1, 1), (2, 2)]), 5)
