import numpy as np
import pytest
from sklearn.base import clone

from batchbnb.estimators import ColumnStandardizer, SparseGLMRegressor, SparseLogisticClassifier
from batchbnb.problem import ProblemInstance, generate_synthetic, preprocess


def test_regressor_recovers_signal():
    inst = generate_synthetic(80, 12, 2, seed=0, snr=50)
    model = SparseGLMRegressor(k=2, lambda2=0.01).fit(inst.X, inst.y)
    assert model.certificate_.status == "optimal"
    assert np.count_nonzero(model.coef_) <= 2
    assert model.predict(inst.X).shape == (80,)
    assert model.score(inst.X, inst.y) > 0.5
    assert set(model.support_.tolist()) == {5, 11}
    with pytest.raises(ValueError):
        model.predict(inst.X[:, :5])


def test_classifier_labels_and_probabilities():
    inst = generate_synthetic(80, 10, 2, loss="logistic", seed=1)
    labels = np.where(inst.y > 0, "yes", "no")
    clf = SparseLogisticClassifier(k=2).fit(inst.X, labels)
    assert list(clf.classes_) == ["no", "yes"]
    proba = clf.predict_proba(inst.X)
    assert np.allclose(proba.sum(axis=1), 1.0)
    assert set(clf.predict(inst.X)) <= {"no", "yes"}
    assert clf.score(inst.X, labels) > 0.6
    with pytest.raises(ValueError, match="two classes"):
        SparseLogisticClassifier().fit(inst.X, np.zeros(80))


def test_rashomon_through_estimator():
    inst = generate_synthetic(40, 8, 2, seed=3)
    model = SparseGLMRegressor(k=2, rashomon_epsilon=0.1, rashomon_cap=3).fit(inst.X, inst.y)
    assert 1 <= len(model.rashomon_) <= 3


def test_clone_and_params():
    model = SparseGLMRegressor(k=3, M=1.5)
    twin = clone(model)
    assert twin.get_params()["k"] == 3 and twin.get_params()["M"] == 1.5


def test_standardizer_matches_preprocess():
    rng = np.random.default_rng(0)
    X = rng.normal(size=(20, 4)) * 3 + 1
    X[:, 1] = 2.0
    st = ColumnStandardizer().fit(X)
    Z = st.transform(X)
    assert st.keep_.tolist() == [True, False, True, True]
    inst = generate_synthetic(20, 4, 1, seed=0)
    ref = preprocess(ProblemInstance(X, inst.y, "squared", 1, 1.0, 1.0))
    assert np.allclose(Z, ref.X, atol=1e-14)
