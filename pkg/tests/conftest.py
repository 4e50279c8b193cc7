import numpy as np
import pytest

from pruneforge import dataio as D
from pruneforge import model as M
from pruneforge import retraining as R


@pytest.fixture(scope="session")
def shapes_small():
    """90-image, 3-class shapes set with a 50/50 split, normalized."""
    ds = D.synthetic_dataset(class_count=3, per_class=30, resolution=(1, 16, 16), seed=11)
    plan = D.make_splits(ds, split_count=1, train_fraction=0.5, seed=11)
    tr, te = plan.train_test(0)
    record = D.normalization_stats(ds.images[tr])
    return {
        "train_images": D.apply_normalization(ds.images[tr], record),
        "train_labels": ds.labels[tr],
        "test_images": D.apply_normalization(ds.images[te], record),
        "test_labels": ds.labels[te],
        "dataset": ds,
    }


@pytest.fixture(scope="session")
def trained_tinyvgg(shapes_small):
    """A tinyvgg trained to high accuracy on the small shapes set."""
    model = M.build_preset("tinyvgg", (1, 16, 16), 3, seed=5)
    model, _ = R.train_cross_entropy(
        model,
        shapes_small["train_images"],
        shapes_small["train_labels"],
        epochs=15,
        learning_rate=0.05,
        batch_size=16,
        seed=5,
    )
    return model


@pytest.fixture()
def rng():
    return np.random.default_rng(12345)
