import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from privf.dist_core import (
    FORBIDDEN,
    Alphabet,
    ConditionalMapping,
    DistortionMatrix,
    JointDistribution,
    compose_output_joint,
    entropy,
    expected_distortion,
    hamming_distortion,
    l1_distance,
    leakage,
    leakage_direct,
    mutual_information,
    pairwise_cost,
    product_of_marginals,
)
from privf.exceptions import (
    AlphabetMismatchError,
    InfeasibleMappingError,
    InvalidDistributionError,
    UnknownLabelError,
)

M = [[0.9, 0.1], [0.2, 0.8]]


def test_entropy_examples():
    assert entropy([0.25] * 4) == pytest.approx(2.0)
    assert entropy([1.0, 0.0]) == 0.0
    assert entropy([0.25, 0.75]) == pytest.approx(0.811278, abs=1e-6)


def test_entropy_rejects_bad_vectors():
    with pytest.raises(InvalidDistributionError):
        entropy([0.5, 0.6])
    with pytest.raises(InvalidDistributionError):
        entropy([-0.1, 1.1])


def test_mutual_information_examples(corr2):
    assert mutual_information(JointDistribution.from_array([[0.5, 0], [0, 0.5]])) == pytest.approx(1.0)
    assert mutual_information(JointDistribution.from_array(np.outer([0.3, 0.7], [0.6, 0.4]))) == pytest.approx(0, abs=1e-15)
    assert mutual_information(corr2) == pytest.approx(0.278072, abs=1e-6)


def test_joint_validation():
    with pytest.raises(InvalidDistributionError):
        JointDistribution.from_array([[0.5, 0.6]])
    with pytest.raises(InvalidDistributionError):
        JointDistribution.from_array([[-0.1, 1.1]])
    with pytest.raises(AlphabetMismatchError):
        JointDistribution.from_array([[0.5, 0.5]], rows=["a", "b"])
    # ingest renormalizes small rounding error only
    p = JointDistribution.ingest([[0.5, 0.5 + 1e-8]])
    assert p.mass.sum() == pytest.approx(1.0, abs=1e-15)


def test_alphabet_lookup():
    a = Alphabet(("x", "y"))
    assert a.index("y") == 1
    with pytest.raises(UnknownLabelError):
        a.index("z")
    with pytest.raises(ValueError):
        Alphabet(("x", "x"))


def test_compose_examples(corr2):
    ident = ConditionalMapping.identity(corr2.col_alphabet)
    np.testing.assert_allclose(compose_output_joint(corr2, ident).mass, corr2.mass)
    const = ConditionalMapping.constant(corr2.col_alphabet, corr2.col_alphabet, 1)
    out = compose_output_joint(corr2, const).mass
    np.testing.assert_allclose(out[:, 0], 0.0)
    np.testing.assert_allclose(out[:, 1], corr2.row_marginal)
    m = ConditionalMapping.from_array(M)
    np.testing.assert_allclose(compose_output_joint(corr2, m).mass, np.array(corr2.mass) @ np.array(M))


def test_leakage_examples(corr2):
    ident = ConditionalMapping.identity(corr2.col_alphabet)
    assert leakage(corr2, ident) == pytest.approx(mutual_information(corr2))
    same = ConditionalMapping.from_array([[0.3, 0.7], [0.3, 0.7]])
    assert leakage(corr2, same) == pytest.approx(0.0, abs=1e-15)
    m = ConditionalMapping.from_array(M)
    # joint through the channel, then MI, by hand
    q = np.array(corr2.mass) @ np.array(M)
    pa, pb = q.sum(1), q.sum(0)
    by_hand = sum(q[i, j] * math.log2(q[i, j] / (pa[i] * pb[j])) for i in range(2) for j in range(2))
    assert leakage(corr2, m) == pytest.approx(by_hand, abs=1e-12)
    assert leakage_direct(corr2, m) == pytest.approx(by_hand, abs=1e-12)


def test_expected_distortion_examples(corr2):
    d = hamming_distortion(corr2.col_alphabet)
    assert expected_distortion(corr2, ConditionalMapping.identity(corr2.col_alphabet), d) == 0.0
    const = ConditionalMapping.constant(corr2.col_alphabet, corr2.col_alphabet, 0)
    assert expected_distortion(corr2, const, d) == pytest.approx(corr2.col_marginal[1])
    uni = JointDistribution.from_array([[0.25, 0.25], [0.25, 0.25]])
    assert expected_distortion(uni, ConditionalMapping.from_array(M), d) == pytest.approx(0.15)


def test_forbidden_pairs():
    d = DistortionMatrix.from_array([[0.0, FORBIDDEN], [1.0, 0.0]])
    p = JointDistribution.from_array([[0.25, 0.25], [0.25, 0.25]])
    with pytest.raises(InfeasibleMappingError):
        expected_distortion(p, ConditionalMapping.from_array([[0.5, 0.5], [0, 1]]), d)
    assert d.d_max == 1.0
    with pytest.raises(ValueError):
        DistortionMatrix.from_array([[FORBIDDEN, FORBIDDEN]])


def test_l1_examples():
    p = JointDistribution.from_array([[0.5, 0.0], [0.0, 0.5]])
    q = JointDistribution.from_array([[0.4, 0.1], [0.1, 0.4]])
    assert l1_distance(p, p) == 0.0
    assert l1_distance(p, q) == pytest.approx(0.4)
    a = JointDistribution.from_array([[1.0, 0.0]])
    b = JointDistribution.from_array([[0.0, 1.0]])
    assert l1_distance(a, b) == pytest.approx(2.0)


def test_pairwise_cost_metrics():
    x = np.array([[0, 0], [1, 1]])
    np.testing.assert_allclose(pairwise_cost(x, x, "hamming"), [[0, 2], [2, 0]])
    np.testing.assert_allclose(pairwise_cost(x, x, "l2", scale=2.0), [[0, math.sqrt(2) / 2], [math.sqrt(2) / 2, 0]])


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 10_000), st.integers(1, 4), st.integers(1, 4), st.integers(1, 4))
def test_leakage_properties(seed, na, nb, nk):
    rng = np.random.default_rng(seed)
    p = JointDistribution.from_array(rng.dirichlet(np.ones(na * nb)).reshape(na, nb))
    m = ConditionalMapping.from_array(rng.dirichlet(np.ones(nk), size=nb))
    j = leakage(p, m)
    # data processing: 0 <= I(A;B_hat) <= I(A;B), and both evaluation paths agree
    assert -1e-12 <= j <= mutual_information(p) + 1e-9
    assert leakage_direct(p, m) == pytest.approx(j, abs=1e-9)
    assert compose_output_joint(p, m).mass.sum() == pytest.approx(1.0, abs=1e-9)
    assert mutual_information(product_of_marginals(p)) == pytest.approx(0.0, abs=1e-12)
