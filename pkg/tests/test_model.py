import numpy as np
import pytest

from trustloop.data import Dataset, from_arrays
from trustloop.errors import EmptyDataset, ShapeMismatch
from trustloop.model import (
    Classifier,
    ClassifierConfig,
    accuracy,
    cross_entropy,
    load_classifier,
    loss_gradients,
    predict_proba,
    predict_proba_batch,
    save_classifier,
    train,
    zero_classifier,
)
from trustloop.seeds import generator

from conftest import toy_dataset


def singleton_dataset(label=3, copies=10, dim=16, num_classes=10):
    rng = generator(21)
    image = rng.random(dim)
    images = np.tile(image, (copies, 1))
    labels = np.full(copies, label, dtype=np.int64)
    h = int(np.sqrt(dim))
    return Dataset(images=images, labels=labels, ids=np.arange(copies, dtype=np.int64),
                   num_classes=num_classes, height=h, width=h)


def test_memorizes_singleton():
    ds = singleton_dataset()
    clf = train(ds, ClassifierConfig(hidden_units=32, epochs=300, learning_rate=0.5,
                                     minibatch=10, seed=1))
    probs = predict_proba(clf, ds.images[0])
    assert probs.argmax() == 3
    assert probs.max() > 0.99


def test_train_deterministic():
    ds = toy_dataset(n=90, seed=2)
    cfg = ClassifierConfig(hidden_units=24, epochs=4, seed=5)
    a = train(ds, cfg)
    b = train(ds, cfg)
    for pa, pb in zip(a.params(), b.params()):
        assert np.array_equal(pa, pb)


def test_train_invariant_to_row_order():
    ds = toy_dataset(n=80, seed=3)
    perm = generator(4).permutation(len(ds))
    shuffled = ds.subset(perm)
    cfg = ClassifierConfig(hidden_units=16, epochs=3, seed=9)
    a = train(ds, cfg)
    b = train(shuffled, cfg)
    for pa, pb in zip(a.params(), b.params()):
        assert np.array_equal(pa, pb)


def test_warm_start_zero_epochs_keeps_weights():
    ds = toy_dataset(n=60, seed=1)
    base = train(ds, ClassifierConfig(hidden_units=16, epochs=3, seed=2))
    again = train(ds, ClassifierConfig(hidden_units=16, epochs=0, seed=2), init=base)
    for pa, pb in zip(base.params(), again.params()):
        assert np.array_equal(pa, pb)
    assert again.version == base.version + 1


def test_warm_start_preserves_accuracy():
    ds = toy_dataset(n=200, seed=7)
    cfg = ClassifierConfig(hidden_units=32, epochs=25, seed=3)
    converged = train(ds, cfg)
    before = accuracy(converged, ds)
    refit = train(ds, ClassifierConfig(hidden_units=32, epochs=1, seed=3), init=converged)
    after = accuracy(refit, ds)
    assert after >= before - 0.01


def test_warm_start_shape_mismatch():
    ds = toy_dataset(n=30, seed=1)
    base = train(ds, ClassifierConfig(hidden_units=16, epochs=1, seed=2))
    with pytest.raises(ShapeMismatch):
        train(ds, ClassifierConfig(hidden_units=8, epochs=1, seed=2), init=base)


def test_epoch_losses_non_increasing():
    ds = toy_dataset(n=120, seed=5)
    clf = train(ds, ClassifierConfig(hidden_units=24, epochs=12, seed=8))
    losses = clf.epoch_losses
    assert len(losses) >= 1
    for earlier, later in zip(losses, losses[1:]):
        assert later <= earlier + 1e-6


def test_zero_weight_predicts_uniform():
    clf = zero_classifier(16, 8, 10)
    probs = predict_proba(clf, np.ones(16) * 0.3)
    assert np.allclose(probs, 0.1, atol=1e-12)


def test_probabilities_sum_to_one():
    ds = toy_dataset(n=40, seed=4)
    clf = train(ds, ClassifierConfig(hidden_units=16, epochs=2, seed=1))
    images = generator(6).random((1000, 16))
    probs = predict_proba_batch(clf, images)
    assert probs.min() >= 0.0
    assert np.allclose(probs.sum(axis=1), 1.0, atol=1e-9)


def test_predict_shape_mismatch():
    clf = zero_classifier(16, 8, 4)
    with pytest.raises(ShapeMismatch):
        predict_proba(clf, np.zeros(17))


def test_accuracy_extremes():
    ds = singleton_dataset()
    clf = train(ds, ClassifierConfig(hidden_units=32, epochs=300, learning_rate=0.5,
                                     minibatch=10, seed=1))
    assert accuracy(clf, ds) == 1.0
    shifted = Dataset(images=ds.images, labels=(ds.labels + 1) % ds.num_classes,
                      ids=ds.ids, num_classes=ds.num_classes, height=ds.height, width=ds.width)
    assert accuracy(clf, shifted) == 0.0
    with pytest.raises(EmptyDataset):
        accuracy(clf, ds.subset(np.array([], dtype=np.int64)))


def test_accuracy_uniform_random_predictor():
    # zero weights always predict class 0; labels are uniform over 10 classes
    rng = generator(12)
    ds = from_arrays(rng.random((10_000, 16)), rng.integers(0, 10, 10_000),
                     num_classes=10, height=4, width=4)
    clf = zero_classifier(16, 8, 10)
    assert abs(accuracy(clf, ds) - 0.1) < 0.01


def test_gradient_check_against_finite_differences():
    ds = toy_dataset(n=5, num_classes=3, dim=9, seed=13)
    rng = generator(3)
    clf = Classifier(
        rng.normal(0, 0.5, (9, 7)), rng.normal(0, 0.1, 7),
        rng.normal(0, 0.5, (7, 3)), rng.normal(0, 0.1, 3),
    )
    x, y = ds.images, ds.labels
    analytic = loss_gradients(clf, x, y)
    step = 1e-4
    for param, grad in zip(clf.params(), analytic):
        flat = param.ravel()
        gflat = grad.ravel()
        for idx in range(flat.size):
            keep = flat[idx]
            flat[idx] = keep + step
            up = cross_entropy(clf, x, y)
            flat[idx] = keep - step
            down = cross_entropy(clf, x, y)
            flat[idx] = keep
            numeric = (up - down) / (2 * step)
            denom = max(abs(numeric), abs(gflat[idx]), 1e-8)
            assert abs(numeric - gflat[idx]) / denom < 1e-3


def test_version_increases_on_retrain():
    ds = toy_dataset(n=40, seed=2)
    m0 = train(ds, ClassifierConfig(hidden_units=16, epochs=1, seed=1))
    assert m0.version == 0
    m1 = train(ds, ClassifierConfig(hidden_units=16, epochs=1, seed=1), init=m0)
    m2 = train(ds, ClassifierConfig(hidden_units=16, epochs=1, seed=1), init=m1)
    assert (m1.version, m2.version) == (1, 2)


def test_classifier_save_load_round_trip(tmp_path):
    ds = toy_dataset(n=40, seed=6)
    clf = train(ds, ClassifierConfig(hidden_units=16, epochs=2, seed=4))
    path = tmp_path / "model.tlw"
    save_classifier(clf, path)
    back = load_classifier(path)
    assert back.version == clf.version
    assert back.seed == clf.seed
    for pa, pb in zip(clf.params(), back.params()):
        # weights stored as f32
        assert np.allclose(pa, pb, atol=1e-6)
