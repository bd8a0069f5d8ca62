import itertools

import numpy as np
import pytest

from weightedgames.evaluation import Evaluation, make_discounted, make_n_stage
from weightedgames.game_model import GameSpec, corpus, random_game
from weightedgames.matrix_game import solve
from weightedgames.shapley_operator import ShapleyOperator
from weightedgames.strategies import (
    HorizonShortfall,
    MarkovStrategy,
    best_response,
    discounted_pair,
    discounted_strategy,
    exploitability,
    optimal_actions,
    payoff,
)
from weightedgames.values import v_discounted, v_theta


def random_markov(rng, H, K, A, player, tail=False):
    st = rng.dirichlet(np.ones(A), size=(H, K))
    tl = rng.dirichlet(np.ones(A), size=K) if tail else None
    return MarkovStrategy(st, tl, player)


def path_payoff(game, theta, sigma, tau, k1, H):
    """Sum over every play of length H of its probability times its weighted payoff."""
    q = game.transition_dense()
    w = theta.weights(H)
    nK, nI, nJ = game.payoff.shape
    total = 0.0
    for play in itertools.product(range(nI), range(nJ), range(nK), repeat=H):
        prob, k, acc = 1.0, k1, 0.0
        for m in range(H):
            i, j, nxt = play[3 * m: 3 * m + 3]
            prob *= sigma.at(m + 1)[k, i] * tau.at(m + 1)[k, j]
            acc += w[m] * game.payoff[k, i, j]
            prob *= q[k, i, j, nxt]
            k = nxt
            if prob == 0:
                break
        total += prob * acc
    return total


def expectimax(game, theta, strategy, responder, k1, H):
    """Best reply over all history-dependent pure replies, by search over the game tree."""
    q = game.transition_dense()
    w = theta.weights(H)
    nK, nI, nJ = game.payoff.shape
    best = max if responder == 1 else min

    def node(m, k, history):
        if m == H:
            return 0.0
        other = strategy.at(m + 1)[k]
        outcomes = []
        for a in range(nI if responder == 1 else nJ):
            val = 0.0
            for b, pb in enumerate(other):
                if pb == 0:
                    continue
                i, j = (a, b) if responder == 1 else (b, a)
                cont = sum(q[k, i, j, n] * node(m + 1, n, history + ((i, j, n),))
                           for n in range(nK) if q[k, i, j, n] > 0)
                val += pb * (w[m] * game.payoff[k, i, j] + cont)
            outcomes.append(val)
        return best(outcomes)

    return node(0, k1, ())


@pytest.fixture(scope="module")
def small():
    return ShapleyOperator(random_game(21, 3, 2, 2))


def test_discounted_theta_gives_stationary_strategy(small):
    lam = 0.2
    sigma, tau = discounted_pair(small, make_discounted(lam))
    X, Y, _ = optimal_actions(small, lam)
    for m in (1, 5, 50):
        np.testing.assert_allclose(sigma.at(m), X)
        np.testing.assert_allclose(tau.at(m), Y)


def test_n_stage_is_myopic_at_last_stage(small):
    n = 4
    sigma = discounted_strategy(small, make_n_stage(n), n, 1)
    for k in range(3):
        sol = solve(small.game.payoff[k])
        assert float(sigma.at(n)[k] @ small.game.payoff[k] @ sol.y_star) == pytest.approx(sol.value, abs=1e-10)
    with pytest.raises(HorizonShortfall):
        sigma.at(n + 1)


def test_stage_lambdas_follow_remaining_mass(small):
    th = Evaluation(np.array([0.5, 0.25, 0.25]))
    sigma = discounted_strategy(small, th, 3, 1)
    for m, lam in zip((1, 2, 3), (0.5, 0.5, 1.0)):
        np.testing.assert_allclose(sigma.at(m), optimal_actions(small, lam)[0])


def test_zero_weight_stage_uses_floor(small):
    th = Evaluation(np.array([0.5, 0.0, 0.5]))
    sigma = discounted_strategy(small, th, 3, 1)
    np.testing.assert_allclose(sigma.at(1), optimal_actions(small, 0.5)[0])
    np.testing.assert_allclose(sigma.at(2), optimal_actions(small, 2.0 ** -10)[0])


def test_payoff_examples():
    op = ShapleyOperator(corpus("absorbing"))
    s, t = discounted_pair(op, make_discounted(0.3))
    val, bound = payoff(op, make_discounted(0.3), s, t, 0)
    assert val == pytest.approx(1.0, abs=bound + 1e-12)
    op = ShapleyOperator(corpus("cycle2"))
    th = Evaluation(np.array([0.5, 0.5]))
    s, t = discounted_pair(op, th)
    assert payoff(op, th, s, t, 0)[0] == pytest.approx(0.5)


def test_payoff_matches_path_enumeration():
    rng = np.random.default_rng(3)
    game = random_game(5, 3, 2, 2)
    op = ShapleyOperator(game)
    for H in (1, 3, 4):
        w = rng.exponential(size=H)
        th = Evaluation(w / w.sum())
        sigma = random_markov(rng, H, 3, 2, 1)
        tau = random_markov(rng, H, 3, 2, 2)
        for k1 in range(3):
            val, bound = payoff(op, th, sigma, tau, k1)
            assert val == pytest.approx(path_payoff(game, th, sigma, tau, k1, H), abs=bound + 1e-12)


def test_payoff_geometric_tail_against_truncation():
    rng = np.random.default_rng(8)
    game = random_game(6, 3, 2, 2)
    op = ShapleyOperator(game)
    th = make_discounted(0.3)
    sigma = random_markov(rng, 2, 3, 2, 1, tail=True)
    tau = random_markov(rng, 2, 3, 2, 2, tail=True)
    val, _ = payoff(op, th, sigma, tau, 1)
    # truncated forward recursion, remainder below 0.7**200
    mu = np.eye(3)[1]
    acc = 0.0
    q = game.transition_dense()
    for m in range(1, 201):
        X, Y = sigma.at(m), tau.at(m)
        r = np.einsum("ki,kij,kj->k", X, game.payoff, Y)
        P = np.einsum("ki,kijn,kj->kn", X, q, Y)
        acc += th.weight(m) * mu @ r
        mu = mu @ P
    assert val == pytest.approx(acc, abs=1e-12)


@pytest.mark.parametrize("responder", [1, 2])
def test_best_response_matches_game_tree(responder):
    rng = np.random.default_rng(10 + responder)
    game = random_game(13, 2, 2, 2)
    op = ShapleyOperator(game)
    H = 4
    th = make_n_stage(H)
    other = random_markov(rng, H, 2, 2, 3 - responder)
    reply, vals = best_response(op, th, other, responder)
    for k1 in range(2):
        oracle = expectimax(game, th, other, responder, k1, H)
        assert vals[k1] == pytest.approx(oracle, abs=1e-12)
        pair = (reply, other) if responder == 1 else (other, reply)
        assert payoff(op, th, *pair, k1)[0] == pytest.approx(oracle, abs=1e-12)


def test_best_response_tail_policy_iteration():
    rng = np.random.default_rng(2)
    game = random_game(4, 3, 2, 3)
    op = ShapleyOperator(game)
    th = make_discounted(0.25)
    tau = random_markov(rng, 0, 3, 3, 2, tail=True)
    reply, vals = best_response(op, th, tau, 1)
    # value iteration on the one-player problem as the oracle
    q = game.transition_dense()
    r = np.einsum("kij,kj->ki", game.payoff, tau.tail)
    P = np.einsum("kijn,kj->kin", q, tau.tail)
    V = np.zeros(3)
    for _ in range(400):
        V = (0.25 * r + 0.75 * P @ V).max(axis=1)
    np.testing.assert_allclose(vals, V, atol=1e-10)
    np.testing.assert_allclose([payoff(op, th, reply, tau, k)[0] for k in range(3)], V, atol=1e-10)


def test_mdp_minimizer_reply_is_vacuous():
    rng = np.random.default_rng(1)
    payoff_arr = rng.uniform(0, 1, size=(2, 3, 1))
    q = rng.dirichlet(np.ones(2), size=(2, 3, 1))
    game = GameSpec.from_arrays(payoff_arr, q)
    op = ShapleyOperator(game)
    th = make_n_stage(5)
    sigma = random_markov(rng, 5, 2, 3, 1)
    reply, vals = best_response(op, th, sigma, 2)
    assert np.all(reply.stages == 1.0)
    for k in range(2):
        assert vals[k] == pytest.approx(payoff(op, th, sigma, reply, k)[0], abs=1e-14)


def test_payoff_linear_in_weights(small):
    rng = np.random.default_rng(5)
    sigma = random_markov(rng, 6, 3, 2, 1)
    tau = random_markov(rng, 6, 3, 2, 2)
    a = Evaluation(rng.dirichlet(np.ones(6)))
    b = Evaluation(rng.dirichlet(np.ones(6)))
    mix = Evaluation(0.3 * a.weights(6) + 0.7 * b.weights(6))
    lhs = payoff(small, mix, sigma, tau, 0)[0]
    rhs = 0.3 * payoff(small, a, sigma, tau, 0)[0] + 0.7 * payoff(small, b, sigma, tau, 0)[0]
    assert lhs == pytest.approx(rhs, abs=1e-13)


@pytest.mark.parametrize("theta", [make_discounted(0.3), make_n_stage(6), Evaluation(np.array([0.1, 0.6, 0.3]))])
def test_security_bracket(small, theta):
    v = v_theta(small, theta, 1e-11).values
    sigma, tau = discounted_pair(small, theta)
    _, low = best_response(small, theta, sigma, 2)
    _, high = best_response(small, theta, tau, 1)
    assert np.all(low <= v + 1e-9)
    assert np.all(high >= v - 1e-9)


def test_discounted_pair_is_optimal_for_discounted_weights(small):
    lam = 0.15
    th = make_discounted(lam)
    v = v_discounted(small, lam, 1e-12).values
    sigma, tau = discounted_pair(small, th)
    _, low = best_response(small, th, sigma, 2)
    _, high = best_response(small, th, tau, 1)
    np.testing.assert_allclose(low, v, atol=1e-8)
    np.testing.assert_allclose(high, v, atol=1e-8)


def test_exploitability_corpus():
    op = ShapleyOperator(corpus("absorbing"))
    th = make_n_stage(8)
    s, t = discounted_pair(op, th)
    g1, g2 = exploitability(op, th, s, t, 0, v_star=[1.0])
    assert abs(g1) <= 1e-12 and abs(g2) <= 1e-12
    op = ShapleyOperator(corpus("cycle2"))
    for n in (2, 7, 8):
        th = make_n_stage(n)
        s, t = discounted_pair(op, th)
        v = v_theta(op, th).values
        for k in range(2):
            g1, g2 = exploitability(op, th, s, t, k, v_star=v)
            assert g1 <= 1e-9 and g2 <= 1e-9


def test_big_match_gap_trend():
    op = ShapleyOperator(corpus("big_match"))
    gaps = []
    for n in (4, 16, 64):
        th = make_n_stage(n)
        s, t = discounted_pair(op, th)
        gaps.append(max(exploitability(op, th, s, t, 0, v_star=[0.5, 1.0, 0.0])))
    assert gaps[-1] <= 0.05
    assert all(b <= a + 1e-9 for a, b in zip(gaps, gaps[1:]))


def test_horizon_shortfall(small):
    sigma = discounted_strategy(small, make_n_stage(2), 2, 1)
    tau = discounted_strategy(small, make_n_stage(5), 5, 2)
    with pytest.raises(HorizonShortfall):
        payoff(small, make_n_stage(5), sigma, tau, 0)
    with pytest.raises(HorizonShortfall):
        best_response(small, make_discounted(0.5), sigma, 2)
    with pytest.raises(ValueError):
        best_response(small, make_n_stage(2), sigma, 1)
