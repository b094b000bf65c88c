import numpy as np
import pytest
from sklearn.base import clone

from privf.estimators import PrivacyMapper, QuantizedPrivacyMapper
from privf.exceptions import UnknownLabelError


@pytest.fixture
def data():
    rng = np.random.default_rng(0)
    y = rng.integers(0, 2, 400)
    X = np.stack([(rng.random(400) < 0.3 + 0.4 * y), (rng.random(400) < 0.5)], axis=1).astype(int)
    return X, y


def test_fit_transform(data):
    X, y = data
    m = PrivacyMapper(delta=0.0).fit(X, y)
    assert np.array_equal(m.transform(X).astype(int), X)
    priv = PrivacyMapper(delta=2.0).fit(X, y)
    assert priv.leakage_ <= 1e-6
    assert priv.transform(X).shape == X.shape
    assert np.array_equal(priv.transform(X), priv.transform(X))


def test_params_and_clone(data):
    m = PrivacyMapper(delta=0.3, scale=2.0)
    assert clone(m).get_params()["delta"] == 0.3
    with pytest.raises(UnknownLabelError):
        PrivacyMapper(delta=0.1).fit(*data).transform(np.array([[5, 5]]))


def test_quantized_unseen_rows_go_to_nearest_center():
    rng = np.random.default_rng(1)
    X = rng.integers(0, 2, size=(300, 8))
    y = rng.integers(0, 2, 300)
    q = QuantizedPrivacyMapper(k=6, delta=0.1, scale=8).fit(X, y)
    assert q.distortion_ <= 0.1 + q.radius_ + 1e-6
    new = np.ones((3, 8), dtype=int)
    idx = q.assign(new)
    centers = np.array(q._center_rows)
    dist = (centers != 1).sum(axis=1)
    assert np.all(dist[idx] == dist.min())
    assert q.transform(new).shape == (3, 8)
