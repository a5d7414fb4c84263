import numpy as np
import pytest

import oracles
from hwrec.svm import (BinarySvmModel, KernelSpec, MulticlassSvmModel, dual_objective,
                       elimination_path, fit_svm_binary, fit_svm_multiclass, kernel_eval,
                       kernel_matrix, smo, svm_decision_binary, svm_predict_index,
                       svm_predict_multiclass)

RBF = KernelSpec("rbf", 2.0)
LIN = KernelSpec("linear")


def test_kernel_examples():
    x = np.array([0.3, -1.2])
    assert kernel_eval(RBF, x, x) == 1.0
    assert kernel_eval(RBF, [0.0, 0.0], [2.0, 0.0]) == pytest.approx(np.exp(-1), abs=1e-15)
    assert kernel_eval(LIN, [1.0, 2.0], [3.0, -1.0]) == 1.0
    with pytest.raises(ValueError):
        kernel_eval(RBF, [0.0], [0.0, 1.0])
    with pytest.raises(ValueError):
        KernelSpec("rbf", 0.0)


def test_rbf_gram_is_psd_and_matches_pointwise():
    rng = np.random.default_rng(0)
    X = rng.normal(size=(40, 5))
    K = kernel_matrix(RBF, X, X)
    assert np.linalg.eigvalsh(K).min() >= -1e-10
    assert K[3, 7] == pytest.approx(kernel_eval(RBF, X[3], X[7]), abs=1e-15)


def test_two_point_linear_problem():
    m = fit_svm_binary([[1.0, 0.0]], [[-1.0, 0.0]], beta=1.0, kernel=LIN, tol=1e-12)
    assert m.alphas.tolist() == pytest.approx([0.5, 0.5], abs=1e-12)
    assert m.bias == pytest.approx(0.0, abs=1e-12)
    assert svm_decision_binary(m, [0.0, 0.0]) == pytest.approx(0.0, abs=1e-12)
    obj, a = oracles.svm_dual_grid(np.array([[1.0, 0.0], [-1.0, 0.0]]), np.array([1.0, -1.0]),
                                   lambda u, v: float(u @ v), 1.0)
    assert np.allclose(m.alphas, a, atol=1e-3)
    K = kernel_matrix(LIN, [[1.0, 0.0], [-1.0, 0.0]], [[1.0, 0.0], [-1.0, 0.0]])
    assert dual_objective(m.alphas, np.array([1.0, -1.0]), K) == pytest.approx(obj, abs=1e-6)


def test_two_point_rbf_against_grid_oracle():
    x = np.array([[0.2, 0.1], [-0.5, 0.4]])
    beta = 0.3
    m = fit_svm_binary(x[:1], x[1:], beta=beta, kernel=RBF, tol=1e-12)
    _, a = oracles.svm_dual_grid(x, np.array([1.0, -1.0]), lambda u, v: kernel_eval(RBF, u, v), beta)
    assert np.allclose(m.alphas, a, atol=beta / 2000 + 1e-12)


def test_conflicting_duplicates_hit_the_box():
    trace = {}
    fit_svm_binary([[1.0, 1.0]], [[1.0, 1.0]], beta=2.5, kernel=RBF, trace=trace)
    assert trace["result"].alphas.tolist() == [2.5, 2.5]


def random_problem(rng, n=60):
    X = rng.normal(size=(n, 3))
    y = np.where(X[:, 0] + 0.3 * rng.normal(size=n) > 0, 1.0, -1.0)
    return X, y


@pytest.mark.parametrize("seed", range(5))
def test_kkt_conditions_and_constraints(seed):
    rng = np.random.default_rng(seed)
    X, y = random_problem(rng)
    beta, tol = 4.0, 1e-6
    K = kernel_matrix(RBF, X, X)
    res = smo(K, y, beta, tol=tol, record=True)
    a = res.alphas
    assert np.all((a >= 0) & (a <= beta))
    assert abs(a @ y) <= 1e-8
    margin = y * (K @ (a * y) + res.bias)
    assert np.all(margin[a == 0] >= 1 - 2 * tol)
    assert np.all(margin[a == beta] <= 1 + 2 * tol)
    free = (a > 0) & (a < beta)
    assert np.all(np.abs(margin[free] - 1) <= 2 * tol)
    obj = np.array(res.objective)
    assert np.all(np.diff(obj) >= -1e-12)
    assert obj[-1] == pytest.approx(dual_objective(a, y, K), abs=1e-9)


def test_nonconvergence_is_reported():
    rng = np.random.default_rng(9)
    X, y = random_problem(rng)
    from hwrec.core import NumericError

    with pytest.raises(NumericError):
        smo(kernel_matrix(RBF, X, X), y, 4.0, tol=1e-9, max_iter=2)


def three_clusters(rng, n=20):
    centres = np.array([[0, 0], [4, 0], [0, 4]], dtype=float)
    return [rng.normal(scale=0.3, size=(n, 2)) + c for c in centres], centres


def test_multiclass_elimination_on_clusters():
    rng = np.random.default_rng(1)
    classes, centres = three_clusters(rng)
    m = fit_svm_multiclass(classes, beta=10.0, kernel=RBF)
    assert sorted(m.pairwise) == [(0, 1), (0, 2), (1, 2)]
    path = elimination_path(m, centres[1])
    assert [(k, j) for k, j, _ in path] == [(0, 1), (1, 2)]
    assert svm_predict_index(m, centres[1]) == 1
    assert svm_predict_multiclass(m, centres[2]).index == 3
    for k, X in enumerate(classes):
        assert [svm_predict_index(m, x) for x in X] == [k] * len(X)


def test_elimination_rules():
    m = MulticlassSvmModel({}, 4)
    # f = 0 counts as a loss for the incumbent
    assert [k for k, _, _ in elimination_path(m, None, lambda k, j: 0.0)] == [0, 1, 2]
    assert [k for k, _, _ in elimination_path(m, None, lambda k, j: 1.0)] == [0, 0, 0]
    assert len(elimination_path(MulticlassSvmModel({}, 2), None, lambda k, j: 1.0)) == 1
    # flipping the sign of every decision makes the last class win
    path = elimination_path(m, None, lambda k, j: -1.0)
    k, j, f = path[-1]
    assert (k if f > 0 else j) == 3


def test_two_class_multiclass_matches_binary_sign():
    rng = np.random.default_rng(2)
    classes, _ = three_clusters(rng)
    m = fit_svm_multiclass(classes[:2], beta=10.0, kernel=RBF)
    for x in rng.normal(scale=2, size=(30, 2)):
        f = svm_decision_binary(m.pairwise[(0, 1)], x)
        assert svm_predict_index(m, x) == (0 if f > 0 else 1)


def test_model_round_trip_and_jobs():
    rng = np.random.default_rng(3)
    classes, _ = three_clusters(rng)
    m = fit_svm_multiclass(classes, beta=10.0, kernel=RBF)
    m2 = MulticlassSvmModel.from_dict(m.to_dict())
    m3 = fit_svm_multiclass(classes, beta=10.0, kernel=RBF, jobs=2)
    X = rng.normal(scale=3, size=(20, 2))
    for pair, b in m.pairwise.items():
        assert np.array_equal(svm_decision_binary(b, X), svm_decision_binary(m2.pairwise[pair], X))
        assert np.array_equal(svm_decision_binary(b, X), svm_decision_binary(m3.pairwise[pair], X))
    assert isinstance(m2.pairwise[(0, 1)], BinarySvmModel)


def test_validation():
    with pytest.raises(ValueError):
        fit_svm_binary(np.zeros((0, 2)), [[1.0, 1.0]])
    with pytest.raises(ValueError):
        fit_svm_binary([[0.0, 0.0]], [[1.0, 1.0]], beta=0)


def test_published_defaults():
    from hwrec.svm import DEFAULT_BETA, DEFAULT_UPSILON

    assert DEFAULT_BETA == 1024.0
    assert [DEFAULT_UPSILON[k] for k in ("st", "dft", "dct", "dwt", "sp", "hog")] == \
        [10, 28, 28, 20, 10, 10]
