import numpy as np
import pytest

from privf.dist_core import Alphabet, ConditionalMapping, JointDistribution
from privf.exceptions import PreconditionError, UnknownLabelError
from privf.evaluate import (
    apply_mapping,
    binarize_ratings,
    logreg_train,
    majority_rate,
    map_accuracy,
    roc,
    select_columns,
    synth_politics,
    top_informative,
)
from privf.prior_est import SampleTable, empirical_joint


def test_apply_mapping_examples():
    rec = SampleTable((0,) * 6, ("x", "y") * 3)
    det = ConditionalMapping(Alphabet(("x", "y")), Alphabet(("u", "v")), [[0, 1], [1, 0]])
    assert apply_mapping(rec, det, 1).b == apply_mapping(rec, det, 99).b == ("v", "u") * 3
    m = ConditionalMapping(Alphabet(("x", "y")), Alphabet(("u", "v")), [[0.3, 0.7], [0.5, 0.5]])
    assert apply_mapping(rec, m, 5).b == apply_mapping(rec, m, 5).b
    with pytest.raises(UnknownLabelError):
        apply_mapping(SampleTable((0,), ("z",)), m, 0)


def test_apply_mapping_frequencies():
    m = ConditionalMapping(Alphabet(("x",)), Alphabet(("u", "v")), [[0.3, 0.7]])
    errs = []
    for n in (10**3, 10**4, 10**5):
        out = apply_mapping(SampleTable((0,) * n, ("x",) * n), m, 7).b
        errs.append(abs(out.count("u") / n - 0.3))
    assert errs[-1] < 0.01
    # error shrinks roughly like n^(-1/2): within a generous constant
    assert all(e < 5 / np.sqrt(n) for e, n in zip(errs, (10**3, 10**4, 10**5)))


def test_map_accuracy_examples(corr2):
    perfect = JointDistribution.from_array([[0.5, 0], [0, 0.5]])
    assert map_accuracy(perfect) == 1.0
    const = ConditionalMapping(corr2.col_alphabet, corr2.col_alphabet, [[1, 0], [1, 0]])
    assert map_accuracy(corr2, const) == pytest.approx(majority_rate(corr2))


def test_roc_examples():
    assert roc([0, 1, 0, 1], [0, 1, 0, 1]).auc == 1.0
    flat = roc([0.3] * 4, [0, 1, 0, 1])
    assert flat.auc == 0.5 and len(flat.points) == 2
    assert roc([0.1, 0.4, 0.35, 0.8], [0, 0, 1, 1]).auc == pytest.approx(0.75)
    with pytest.raises(PreconditionError):
        roc([0.1, 0.2], [1, 1])


def test_logreg_separable_and_shuffled():
    rng = np.random.default_rng(0)
    X = np.r_[rng.normal(-3, 0.5, (50, 2)), rng.normal(3, 0.5, (50, 2))]
    y = np.r_[np.zeros(50), np.ones(50)]
    assert roc(logreg_train(X, y, seed=0), y).auc == 1.0
    aucs = []
    for s in range(5):
        Xn = rng.normal(size=(400, 3))
        yn = rng.integers(0, 2, 400)
        aucs.append(roc(logreg_train(Xn, yn, seed=s), yn).auc)
    assert abs(np.mean(aucs) - 0.5) < 0.05


def test_logreg_needs_enough_per_class():
    with pytest.raises(PreconditionError):
        logreg_train(np.zeros((12, 1)), [0] * 9 + [1] * 3)


def test_logreg_deterministic():
    rng = np.random.default_rng(3)
    X, y = rng.normal(size=(100, 2)), rng.integers(0, 2, 100)
    assert np.array_equal(logreg_train(X, y, seed=4), logreg_train(X, y, seed=4))


def test_synth_examples():
    flat = synth_politics(n=4000, shows=10, discriminative_fraction=0.0, seed=2)
    for j in range(10):
        col = select_columns(flat, [j])
        from privf.dist_core import mutual_information

        assert mutual_information(empirical_joint(col)) < 0.005
    sep = synth_politics(n=2000, shows=40, discriminative_fraction=1.0, margin=1.0, seed=2)
    assert map_accuracy(empirical_joint(select_columns(sep, top_informative(sep, 8)))) > 0.9


def test_synth_default_top5_mi():
    from privf.dist_core import mutual_information

    d = synth_politics(seed=0)
    mi = mutual_information(empirical_joint(select_columns(d, top_informative(d, 5))))
    assert 0.1 <= mi <= 0.3


def test_binarize():
    assert binarize_ratings([1, 3, 4, 5]).tolist() == [0, 0, 1, 1]
