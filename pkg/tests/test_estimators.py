import numpy as np
import pytest
from sklearn.base import clone
from sklearn.pipeline import make_pipeline

from qnnstab.data import BUNDLED_IMAGES, BUNDLED_LABELS, load_idx
from qnnstab.estimators import PooledAngleEncoder, QNNClassifier
from qnnstab.exceptions import ContractError


@pytest.fixture(scope="module")
def digits():
    raw = load_idx(BUNDLED_IMAGES, BUNDLED_LABELS)
    keep = np.concatenate([np.flatnonzero(raw.labels == c)[:40] for c in (0, 1)])
    return raw.images[keep], raw.labels[keep]


def test_params_round_trip():
    clf = QNNClassifier(n_layers=3, step_size=0.05)
    assert clf.get_params()["n_layers"] == 3
    clf.set_params(n_iter=7)
    assert clone(clf).get_params()["n_iter"] == 7


def test_fit_predict_score(rng):
    X = rng.uniform(0, np.pi, (20, 2))
    y = np.where(X[:, 0] > np.pi / 2, "big", "small")
    clf = QNNClassifier(n_layers=1, n_iter=30, step_size=0.1).fit(X, y)
    assert clf.theta_.shape == (clf.circuit_.K,) and clf.train_record_.T == 30
    assert set(clf.predict(X)) <= {"big", "small"}
    assert 0 <= clf.score(X, y) <= 1
    assert np.all(np.abs(clf.decision_function(X)) <= 1)


def test_deterministic(rng):
    X = rng.uniform(0, np.pi, (10, 2))
    y = rng.integers(0, 2, 10)
    a = QNNClassifier(n_iter=10, random_state=4).fit(X, y).theta_
    b = QNNClassifier(n_iter=10, random_state=4).fit(X, y).theta_
    assert a.tobytes() == b.tobytes()


def test_rejects_out_of_range_features():
    with pytest.raises(ContractError):
        QNNClassifier().fit(np.array([[4.0], [0.1]]), [0, 1])


def test_rejects_multiclass(rng):
    with pytest.raises(ValueError):
        QNNClassifier().fit(rng.uniform(0, 1, (6, 2)), [0, 1, 2, 0, 1, 2])


def test_unfitted():
    from sklearn.exceptions import NotFittedError

    with pytest.raises(NotFittedError):
        QNNClassifier().predict(np.zeros((1, 2)))


def test_pipeline_on_images(digits):
    images, labels = digits
    pipe = make_pipeline(PooledAngleEncoder(n_features=4), QNNClassifier(n_layers=1, n_iter=40, step_size=0.1))
    pipe.fit(images.reshape(len(images), -1), labels)
    assert pipe.predict(images[:5]).shape == (5,)


def test_encoder_shapes(digits):
    images, _ = digits
    enc = PooledAngleEncoder(n_features=4)
    a = enc.fit_transform(images[:3])
    b = enc.transform(images[:3].reshape(3, -1))
    np.testing.assert_array_equal(a, b)
    assert a.shape == (3, 4)
    with pytest.raises(ValueError):
        enc.transform(np.zeros((2, 10)))
