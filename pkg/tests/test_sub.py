import itertools

import numpy as np
import pytest

import oracles
from hwrec.baseline import GaussianParams
from hwrec.core import NumericError
from hwrec.sub import (EmConfig, EmTrace, SubCharacter, SubClassifier, SubModelParams,
                       build_sub_character, complete_log_likelihood, e_step, fit_sub, m_step,
                       observed_log_likelihood, sub_log_likelihood, sub_predict)
from hwrec.subunits import extract_subunits

G = GaussianParams.from_moments


def make_params(mu, sigma, gamma, eta, cmu, csig):
    return SubModelParams(G(mu, sigma), np.asarray(gamma, float), np.asarray(eta, float),
                          [G(m, s) for m, s in zip(cmu, csig)])


def random_params(rng, dg=2, dl=2, n_su=2, n_h=2):
    def spd(d):
        a = rng.normal(size=(d, d))
        return a @ a.T + 0.5 * np.eye(d)

    gamma = rng.dirichlet(np.ones(n_su + 1))
    eta = rng.dirichlet(np.ones(n_h), size=n_su + 1)
    return make_params(rng.normal(size=dg), spd(dg), gamma, eta,
                       rng.normal(size=(n_h, dl)), [spd(dl) for _ in range(n_h)])


def random_char(rng, n, dg=2, dl=2):
    return SubCharacter(rng.normal(size=dg), rng.normal(size=(n, dl)))


FROZEN = dict(mu=[0.0, 0.0], sigma=np.eye(2), gamma=[0.5, 0.3, 0.2],
              eta=[[0.5, 0.5], [0.7, 0.3], [0.4, 0.6]], cmu=[(0.0, 1.0), (1.0, 0.0)],
              csig=[0.5 * np.eye(2), np.array([[1.0, 0.2], [0.2, 0.8]])])
FROZEN_X = SubCharacter(np.array([0.1, -0.2]), np.array([[0.2, 0.9], [1.1, 0.1]]))


# --- complete log-likelihood --------------------------------------------------


def test_complete_ll_collapses_with_one_component():
    p = make_params([0.0], [[1.0]], [0.6, 0.4], [[1.0], [1.0]], [[1.0, 2.0]], [np.eye(2)])
    c = SubCharacter(np.array([0.5]), np.array([[1.2, 1.7]]))
    ref = (oracles.gaussian_logpdf([0.5], [0.0], [[1.0]]) + np.log(0.6)
           + oracles.gaussian_logpdf([1.2, 1.7], [1.0, 2.0], np.eye(2)))
    assert complete_log_likelihood([c], [np.ones((1, 1))], p) == pytest.approx(ref, abs=1e-12)
    assert sub_log_likelihood(c, p) == pytest.approx(ref, abs=1e-12)


def test_complete_ll_doubles_under_duplication():
    rng = np.random.default_rng(0)
    p = random_params(rng)
    data = [random_char(rng, 1), random_char(rng, 2)]
    z = [rng.dirichlet([1, 1], size=d.n_subunits) for d in data]
    once = complete_log_likelihood(data, z, p)
    assert complete_log_likelihood(data + data, z + z, p) == pytest.approx(2 * once, abs=1e-10)


def test_complete_ll_matches_hand_accumulation():
    rng = np.random.default_rng(1)
    p = random_params(rng)
    data = [random_char(rng, 2), random_char(rng, 3)]
    z = [rng.dirichlet([1, 1], size=d.n_subunits) for d in data]
    ref = 0.0
    for d, zm in zip(data, z):
        row = min(d.n_subunits, len(p.gamma)) - 1
        ref += oracles.gaussian_logpdf(d.x_global, p.mu, p.sigma) + np.log(p.gamma[row])
        for x, w in zip(d.x_locals, zm):
            for c in range(2):
                ref += w[c] * np.log(p.eta[row][c])
                ref += w[c] * oracles.gaussian_logpdf(x, p.comp_mu[c], p.comp_sigma[c])
    assert abs(complete_log_likelihood(data, z, p) - ref) <= 1e-10


def test_complete_ll_errors():
    p = make_params([0.0], [[1.0]], [1.0, 0.0], [[0.0, 1.0], [0.5, 0.5]],
                    [[0.0], [1.0]], [np.eye(1)] * 2)
    c = SubCharacter(np.zeros(1), np.zeros((2, 1)))
    with pytest.raises(NumericError):
        complete_log_likelihood([c], [np.ones((2, 2)) / 2], p)
    one = SubCharacter(np.zeros(1), np.zeros((1, 1)))
    with pytest.raises(NumericError):
        complete_log_likelihood([one], [np.array([[1.0, 0.0]])], p)
    assert np.isfinite(complete_log_likelihood([one], [np.array([[0.0, 1.0]])], p))
    with pytest.raises(ValueError):
        complete_log_likelihood([one], [np.ones((1, 3))], p)


# --- E step ---------------------------------------------------------------------


def test_e_step_examples():
    rng = np.random.default_rng(2)
    data = [random_char(rng, n) for n in (1, 2, 3)]
    single = make_params([0, 0], np.eye(2), [0.2, 0.3, 0.5], [[1.0]] * 3, [[0.0, 0.0]], [np.eye(2)])
    assert all(np.array_equal(r, np.ones((d.n_subunits, 1))) for r, d in zip(e_step(data, single), data))
    far = make_params([0, 0], np.eye(2), [0.5, 0.5], [[0.5, 0.5]] * 2,
                      [[0.0, 0.0], [10.0, 10.0]], [np.eye(2)] * 2)
    (r,) = e_step([SubCharacter(np.zeros(2), np.array([[0.0, 0.0]]))], far)
    ratio = np.exp(oracles.gaussian_logpdf([0, 0], [0, 0], np.eye(2))
                   - oracles.gaussian_logpdf([0, 0], [10, 10], np.eye(2)))
    assert r[0, 0] > 0.999 and r[0, 0] == pytest.approx(ratio / (1 + ratio), abs=1e-12)
    p = random_params(rng)
    for rho in e_step(data, p):
        assert np.all(rho >= 0) and np.allclose(rho.sum(axis=1), 1, atol=1e-10)


def test_e_step_survives_underflow():
    p = make_params([0, 0], np.eye(2), [1.0, 0.0], [[0.5, 0.5]] * 2,
                    [[0.0, 0.0], [1.0, 0.0]], [1e-3 * np.eye(2)] * 2)
    (r,) = e_step([SubCharacter(np.zeros(2), np.array([[500.0, 0.0]]))], p)
    assert np.all(np.isfinite(r)) and r[0].sum() == pytest.approx(1.0) and r[0, 1] == 1.0


# --- M step ---------------------------------------------------------------------


def test_m_step_pooled_moments_and_count_frequencies():
    rng = np.random.default_rng(3)
    data = [random_char(rng, n) for n in (1, 1, 2)]
    rho = [np.ones((d.n_subunits, 1)) for d in data]
    p = m_step(data, rho, 2, EmConfig(smoothing=0.0), floor=0.0)
    X = np.vstack([d.x_locals for d in data])
    assert np.allclose(p.comp_mu[0], X.mean(axis=0), atol=1e-12)
    assert p.gamma == pytest.approx([2 / 3, 1 / 3, 0.0], abs=1e-15)


def test_m_step_matches_weighted_moment_oracle():
    rng = np.random.default_rng(4)
    data = [random_char(rng, n, dg=3, dl=2) for n in (1, 2, 2, 3, 1, 4)]
    rho = [rng.dirichlet([1, 1, 1], size=d.n_subunits) for d in data]
    cfg = EmConfig(smoothing=1.0, eta_smoothing=1.0, ridge=0.0)
    p = m_step(data, rho, 3, cfg, floor=0.0)
    X = [x for d in data for x in d.x_locals]
    R = np.vstack(rho)
    for c in range(3):
        mu, cov = oracles.weighted_moments(X, list(R[:, c]))
        assert np.max(np.abs(p.comp_mu[c] - mu)) <= 1e-10
        assert np.max(np.abs(p.comp_sigma[c] - cov)) <= 1e-10
    gmu, gcov = oracles.weighted_moments([d.x_global for d in data], [1.0] * len(data))
    assert np.max(np.abs(p.mu - gmu)) <= 1e-10 and np.max(np.abs(p.sigma - gcov)) <= 1e-10
    # counts 1..3 plus one tail row (the character with 4 sub-units)
    gamma_ref = np.array([2, 2, 1, 1], float) + 1
    assert np.allclose(p.gamma, gamma_ref / gamma_ref.sum(), atol=1e-12)
    eta_ref = np.ones((4, 3))
    for d, r in zip(data, rho):
        row = min(d.n_subunits, 4) - 1
        for w in r:
            eta_ref[row] += w
    eta_ref /= eta_ref.sum(axis=1, keepdims=True)
    assert np.max(np.abs(p.eta - eta_ref)) <= 1e-10
    assert abs(p.gamma.sum() - 1) <= 1e-10 and np.allclose(p.eta.sum(axis=1), 1, atol=1e-10)


def test_m_step_eigenvalue_floor():
    data = [SubCharacter(np.zeros(1), np.array([[0.0, 0.0], [1.0, 0.0]])),
            SubCharacter(np.ones(1), np.array([[2.0, 0.0]]))]
    rho = [np.ones((2, 1)), np.ones((1, 1))]
    p = m_step(data, rho, 2, EmConfig(), floor=0.1)
    vals = np.linalg.eigvalsh(p.comp_sigma[0])
    assert vals[0] == pytest.approx(0.1) and vals[1] == pytest.approx(2 / 3)
    assert np.array_equal(p.comp_sigma[0], p.comp_sigma[0].T)


# --- fitting --------------------------------------------------------------------


def two_gaussian_class(rng, n=200, sd=0.2):
    means = np.array([[0.0, 0.0], [3.0, 2.0]])
    data = []
    for _ in range(n):
        k = int(rng.integers(1, 4))
        comp = rng.integers(0, 2, size=k)
        data.append(SubCharacter(rng.normal(size=2), means[comp] + rng.normal(scale=sd, size=(k, 2))))
    return data, means


def test_single_component_is_pooled_after_one_iteration():
    rng = np.random.default_rng(5)
    data, _ = two_gaussian_class(rng, 30)
    X = np.vstack([d.x_locals for d in data])
    p = fit_sub(data, EmConfig(n_h_su=1, max_iters=1, ridge=0.0))
    mu, cov = oracles.weighted_moments(list(X), [1.0] * len(X))
    assert np.allclose(p.comp_mu[0], mu, atol=1e-12) and np.allclose(p.comp_sigma[0], cov, atol=1e-12)
    tr = EmTrace()
    fit_sub(data, EmConfig(n_h_su=1), trace=tr)
    assert tr.converged and tr.n_iter <= 2


def test_two_gaussian_recovery_and_monotonicity():
    rng = np.random.default_rng(6)
    data, means = two_gaussian_class(rng)
    tr = EmTrace()
    p = fit_sub(data, EmConfig(n_h_su=2, seed=1), trace=tr)
    got = p.comp_mu
    best = min(np.max(np.abs(got[list(perm)] - means)) for perm in itertools.permutations(range(2)))
    assert best <= 0.05
    assert tr.converged and np.all(np.diff(tr.log_likelihood) >= -1e-8)
    assert np.all(np.diff(tr.objective) >= -1e-8)
    assert tr.log_likelihood[-1] == pytest.approx(observed_log_likelihood(data, p), abs=1e-9)


@pytest.mark.parametrize("seed", range(4))
def test_em_monotone_on_random_data(seed):
    rng = np.random.default_rng(10 + seed)
    data = [random_char(rng, int(rng.integers(1, 5)), dg=3, dl=4) for _ in range(25)]
    tr = EmTrace()
    p = fit_sub(data, EmConfig(n_h_su=4, seed=seed), trace=tr)
    assert np.all(np.diff(tr.log_likelihood) >= -1e-8)
    assert tr.n_iter <= 200
    assert abs(p.gamma.sum() - 1) <= 1e-10 and np.allclose(p.eta.sum(axis=1), 1, atol=1e-10)
    assert np.all(p.gamma >= 0) and np.all(p.eta >= 0)


def test_components_reduced_when_few_vectors():
    rng = np.random.default_rng(7)
    data = [random_char(rng, 1), random_char(rng, 2)]
    tr = EmTrace()
    p = fit_sub(data, EmConfig(n_h_su=8), trace=tr)
    assert p.n_h_su == tr.n_h_su == 3
    with pytest.raises(ValueError):
        fit_sub(data[:1])


def test_fit_is_deterministic():
    rng = np.random.default_rng(8)
    data, _ = two_gaussian_class(rng, 40)
    a = fit_sub(data, EmConfig(n_h_su=3, seed=4))
    b = fit_sub(data, EmConfig(n_h_su=3, seed=4))
    for key, val in a.to_dict().items():
        assert np.array_equal(val, b.to_dict()[key])


# --- scoring --------------------------------------------------------------------


def test_marginal_frozen_value():
    p = make_params(**FROZEN)
    ref = oracles.sub_marginal_bruteforce(FROZEN_X.x_global, FROZEN_X.x_locals, **FROZEN)
    assert ref == pytest.approx(-7.011474437743194, abs=1e-12)
    assert abs(sub_log_likelihood(FROZEN_X, p) - ref) <= 1e-9


@pytest.mark.parametrize("n_sub,n_h", [(1, 2), (2, 2), (3, 2), (1, 8), (1, 3), (2, 1)])
def test_marginal_matches_enumeration(n_sub, n_h):
    rng = np.random.default_rng(20 + n_sub * 10 + n_h)
    for _ in range(5):
        p = random_params(rng, n_su=2, n_h=n_h)
        c = random_char(rng, n_sub)
        ref = oracles.sub_marginal_bruteforce(c.x_global, c.x_locals, p.mu, p.sigma, p.gamma, p.eta,
                                              p.comp_mu, p.comp_sigma)
        assert abs(sub_log_likelihood(c, p) - ref) <= 1e-9
        joint = [complete_log_likelihood([c], [np.eye(n_h)[list(z)]], p)
                 for z in itertools.product(range(n_h), repeat=n_sub)]
        assert abs(np.logaddexp.reduce(joint) - ref) <= 1e-9


def test_label_switching_invariance():
    rng = np.random.default_rng(9)
    data, _ = two_gaussian_class(rng, 30)
    p = fit_sub(data, EmConfig(n_h_su=3))
    for order in itertools.permutations(range(3)):
        q = p.permuted(order)
        for c in data[:5]:
            assert abs(sub_log_likelihood(c, q) - sub_log_likelihood(c, p)) <= 1e-12


def count_classes(rng, n):
    out = []
    for k in (1, 2, 3):
        out.append([SubCharacter(rng.normal(size=2), rng.normal(size=(k, 2))) for _ in range(n)])
    return out


def test_count_term_separates_classes():
    rng = np.random.default_rng(11)
    train, test = count_classes(rng, 60), count_classes(rng, 30)
    params = [fit_sub(t, EmConfig(n_h_su=2)) for t in train]
    hits = [sub_predict(c, params).index == k + 1 for k, cs in enumerate(test) for c in cs]
    assert np.mean(hits) >= 0.95


def test_own_class_preferred_and_shift_invariance():
    rng = np.random.default_rng(12)
    a = [SubCharacter(rng.normal(scale=0.1, size=2), rng.normal(scale=0.1, size=(2, 2))) for _ in range(20)]
    b = [SubCharacter(5 + rng.normal(scale=0.1, size=2), 5 + rng.normal(scale=0.1, size=(2, 2)))
         for _ in range(20)]
    pa, pb = fit_sub(a, EmConfig(n_h_su=2)), fit_sub(b, EmConfig(n_h_su=2))
    assert sub_log_likelihood(a[0], pa) > sub_log_likelihood(a[0], pb)
    s = np.array([sub_log_likelihood(a[0], p) for p in (pa, pb)])
    assert np.argmax(s) == np.argmax(s + 1e3)


def test_unseen_count_gets_tail_mass():
    rng = np.random.default_rng(13)
    data = [random_char(rng, 1) for _ in range(10)]
    p = fit_sub(data, EmConfig(n_h_su=2))
    assert p.n_su == 1 and p.gamma[1] > 0
    assert np.isfinite(sub_log_likelihood(random_char(rng, 5), p))


def test_save_load_agrees_with_oracle():
    rng = np.random.default_rng(14)
    data, _ = two_gaussian_class(rng, 30)
    p = fit_sub(data, EmConfig(n_h_su=2))
    q = SubModelParams.from_dict({k: np.array(v).tolist() for k, v in p.to_dict().items()})
    for c in data[:5]:
        ref = oracles.sub_marginal_bruteforce(c.x_global, c.x_locals, q.mu, q.sigma, q.gamma, q.eta,
                                              q.comp_mu, q.comp_sigma)
        assert abs(sub_log_likelihood(c, q) - ref) <= 1e-9
        assert sub_log_likelihood(c, q) == pytest.approx(sub_log_likelihood(c, p), abs=1e-12)


# --- full classifier ------------------------------------------------------------


def test_build_sub_character_layout(small_corpus):
    train, _ = small_corpus
    c = train.classes[1][0]
    W = np.random.default_rng(0).normal(size=(722, 4))
    sc = build_sub_character(c, W)
    units = extract_subunits(c)
    assert sc.x_global.shape == (4,) and sc.n_subunits == len(units)
    for row, u in zip(sc.x_locals, units):
        assert row.shape == (134,) and np.allclose(row[-4:], u.bbox)


def test_classifier_end_to_end(small_corpus):
    train, test = small_corpus
    classes = [train.classes[k] for k in range(1, train.n_classes + 1)]
    chars = [c for c, _ in test.samples()]
    truth = np.array([k - 1 for _, k in test.samples()])
    traces = []
    clf = SubClassifier.fit(classes, EmConfig(n_h_su=3), traces=traces)
    assert clf.fisher_w.shape == (722, train.n_classes - 1)
    assert len(traces) == train.n_classes
    assert all(np.all(np.diff(t.log_likelihood) >= -1e-8) for t in traces)
    assert np.mean(clf.predict(chars) == truth) >= 0.9
    again = SubClassifier.from_dict(clf.to_dict())
    assert np.array_equal(again.scores(chars), clf.scores(chars))
    par = SubClassifier.fit(classes, EmConfig(n_h_su=3), jobs=2)
    assert np.array_equal(par.scores(chars), clf.scores(chars))
