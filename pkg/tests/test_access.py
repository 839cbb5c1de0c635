import math
import threading

import numpy as np
import pytest

from idp_guard._random import stream
from idp_guard.access import (DETERMINISTIC, MEMO, NOISED, AccessGuard, exponential_mechanism, family_agreement,
                              mechanism_probabilities, naive_idp_query, naive_noise_query)
from idp_guard.bab import compute_bounds
from idp_guard.exceptions import ShapeError
from idp_guard.milp import NO_LEAKING_INPUTS
from idp_guard.network import Dataset, Network, predict, scores_confidence
from idp_guard.training import TrainConfig, train_loo_family

from conftest import EXACT, small_family


def score_net(scores):
    """Two inputs; the scores are the output bias whatever the input."""
    k = len(scores)
    return Network((np.zeros((2, 2)), np.zeros((k, 2))), (np.zeros(2), np.array(scores, dtype=float)))


def test_probability_examples():
    np.testing.assert_allclose(mechanism_probabilities(0, 2, 0.0), [0.5, 0.5])
    assert mechanism_probabilities(1, 2, 2.0)[1] == pytest.approx(math.e / (math.e + 1))
    assert mechanism_probabilities(1, 2, 2.0)[1] == pytest.approx(0.731059, abs=1e-6)
    assert mechanism_probabilities(0, 3, 1.0)[0] == pytest.approx(0.451862, abs=1e-6)


@pytest.mark.parametrize("eps", [0.0, 0.3, 1.0, 5.0])
@pytest.mark.parametrize("k", [2, 3, 7])
def test_probabilities_closed_form(eps, k):
    p = mechanism_probabilities(k - 1, k, eps)
    z = math.exp(eps / 2) + k - 1
    assert p[k - 1] == pytest.approx(math.exp(eps / 2) / z)
    np.testing.assert_allclose(p[:-1], 1.0 / z)
    assert p.sum() == pytest.approx(1.0)


def test_huge_budget_is_stable():
    p = mechanism_probabilities(0, 2, 50.0)
    assert p[0] >= 1 - 1e-8
    assert np.all(np.isfinite(mechanism_probabilities(0, 3, 1e6)))
    with pytest.raises(ValueError):
        mechanism_probabilities(0, 2, -1.0)


def test_sampling_frequencies():
    rng = stream(0, "test")
    n = 100_000
    draws = np.bincount([exponential_mechanism(2, 3, 1.0, rng) for _ in range(n)], minlength=3) / n
    np.testing.assert_allclose(draws, mechanism_probabilities(2, 3, 1.0), atol=0.01)


def test_confident_query_is_deterministic():
    guard = AccessGuard(score_net([0.6, 0.4]), {0: 0.05, 1: 0.05}, epsilon=1.0)
    assert guard.query_with_path([0.3, 0.3]) == (0, DETERMINISTIC)
    assert not guard.memo


def test_borderline_query_is_noised_and_memoized():
    guard = AccessGuard(score_net([0.52, 0.48]), {0: 0.05, 1: 0.05}, epsilon=1.0)
    label, path = guard.query_with_path([0.3, 0.3])
    assert path == NOISED and label in (0, 1)
    for _ in range(5):
        assert guard.query_with_path([0.3, 0.3]) == (label, MEMO)


def test_threshold_is_strict():
    scores = [0.6, 0.4]
    beta = float(scores_confidence(scores, 0))
    guard = AccessGuard(score_net(scores), {0: beta, 1: 0.0}, epsilon=1.0)
    assert guard.query_with_path([0.1, 0.1])[1] == NOISED
    guard = AccessGuard(score_net(scores), {0: np.nextafter(beta, -1), 1: 0.0}, epsilon=1.0)
    assert guard.query_with_path([0.1, 0.1])[1] == DETERMINISTIC


def test_no_leak_bound_never_noises():
    guard = AccessGuard(score_net([0.5, 0.5]), {0: NO_LEAKING_INPUTS, 1: NO_LEAKING_INPUTS}, epsilon=0.0)
    for x in np.random.default_rng(0).uniform(size=(50, 2)):
        assert guard.query_with_path(x) == (0, DETERMINISTIC)


def test_memo_evicts_oldest():
    guard = AccessGuard(score_net([0.5, 0.5]), {0: 1.0, 1: 1.0}, epsilon=0.0, memo_capacity=2)
    xs = [np.array([0.1 * i, 0.0]) for i in range(1, 4)]
    for x in xs:
        guard.query(x)
    assert len(guard.memo) == 2
    assert xs[0].tobytes() not in guard.memo
    assert guard.query_with_path(xs[2])[1] == MEMO
    assert guard.query_with_path(xs[0])[1] == NOISED


def test_memo_key_is_bit_exact():
    guard = AccessGuard(score_net([0.5, 0.5]), {0: 1.0, 1: 1.0}, epsilon=0.0)
    guard.query([0.1, 0.2])
    assert guard.query_with_path(np.array([0.1, 0.2]))[1] == MEMO
    assert guard.query_with_path([np.nextafter(0.1, 1), 0.2])[1] == NOISED


def test_query_validation():
    guard = AccessGuard(score_net([0.5, 0.5]), {0: 0.0, 1: 0.0}, epsilon=1.0)
    with pytest.raises(ShapeError):
        guard.query([0.1, 0.2, 0.3])
    with pytest.raises(ValueError):
        guard.query([1.2, 0.0])
    with pytest.raises(ValueError):
        AccessGuard(score_net([0.5, 0.5]), {0: 0.0}, epsilon=1.0)
    with pytest.raises(ValueError):
        AccessGuard(score_net([0.5, 0.5]), {0: 0.0, 1: 0.0}, epsilon=-1.0)


def test_same_seed_same_answers():
    X = np.random.default_rng(1).uniform(size=(200, 2))
    runs = [AccessGuard(score_net([0.5, 0.5]), {0: 1.0, 1: 1.0}, 0.5, seed=3).query_batch(X)[0] for _ in range(2)]
    np.testing.assert_array_equal(runs[0], runs[1])
    other = AccessGuard(score_net([0.5, 0.5]), {0: 1.0, 1: 1.0}, 0.5, seed=4).query_batch(X)[0]
    assert not np.array_equal(runs[0], other)


def test_concurrent_queries_agree():
    guard = AccessGuard(score_net([0.5, 0.5]), {0: 1.0, 1: 1.0}, epsilon=0.0)
    x = np.array([0.25, 0.75])
    out = []

    def worker():
        for _ in range(200):
            out.append(guard.query(x))

    threads = [threading.Thread(target=worker) for _ in range(4)]
    for t in threads:
        t.start()
    for t in threads:
        t.join()
    assert len(set(out)) == 1 and len(guard.memo) == 1


def test_naive_noise_behaviour():
    net = score_net([0.9, 0.1])
    rng = stream(1, "naive")
    n = 100_000
    freq = np.mean([naive_noise_query(net, [0.5, 0.5], 0.0, rng) for _ in range(n)])
    assert freq == pytest.approx(0.5, abs=0.01)
    freq = np.mean([naive_noise_query(net, [0.5, 0.5], 1.0, rng) == 0 for _ in range(n)])
    assert freq == pytest.approx(mechanism_probabilities(0, 2, 1.0)[0], abs=0.01)
    assert all(naive_noise_query(net, [0.5, 0.5], 50.0, rng) == 0 for _ in range(1000))


def test_naive_idp_agreement_consumes_no_randomness():
    fam = small_family(5, (2, 4, 2), 0)
    X = np.random.default_rng(2).uniform(size=(300, 2))
    agree = family_agreement(fam, X)
    assert agree.any()
    rng = stream(0, "idp")
    before = repr(rng.bit_generator.state)
    for x in X[agree][:20]:
        assert naive_idp_query(fam, x, 0.0, rng) == predict(fam.full, x)
    assert repr(rng.bit_generator.state) == before


def test_naive_idp_disagreement_invokes_mechanism():
    data = Dataset(np.array([[0.1, 0.1], [0.9, 0.9]]), np.array([0, 1]), 2)
    fam = train_loo_family(data, (2, 4, 2), TrainConfig(epochs=200, batch_size=1, learning_rate=0.5))
    probes = np.random.default_rng(0).uniform(size=(200, 2))
    split = probes[~family_agreement(fam, probes)]
    assert len(split), "the two leave-one-out models should disagree somewhere"
    x = split[0]
    assert {predict(n, x) for n in fam.networks()} == {0, 1}
    rng = stream(0, "idp")
    before = repr(rng.bit_generator.state)
    labels = [naive_idp_query(fam, x, 0.0, rng) for _ in range(4000)]
    assert repr(rng.bit_generator.state) != before
    assert np.mean(labels) == pytest.approx(0.5, abs=0.05)


def test_guard_matches_naive_idp_above_bound():
    fam = small_family(6, (2, 4, 2), 4)
    bounds = {c: r.beta for c, r in compute_bounds(fam, None, EXACT).items()}
    guard = AccessGuard(fam.full, bounds, epsilon=0.0)
    X = np.random.default_rng(5).uniform(size=(2000, 2))
    rng = stream(0, "idp")
    for x in X:
        label, path = guard.query_with_path(x)
        if path == DETERMINISTIC:
            assert naive_idp_query(fam, x, 0.0, rng) == label
