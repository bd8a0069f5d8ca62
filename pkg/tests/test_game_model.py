import json

import numpy as np
import pytest

from weightedgames.game_model import (
    CORPUS,
    GameSpec,
    GameValidationError,
    ValueFunction,
    certify_counterexample_cap,
    check_mixed_action,
    corpus,
    counterexample_index,
    counterexample_mdp,
    expected_next,
    expected_payoff,
    random_game,
    survival_function,
    validate,
)


def test_corpus_games_are_valid():
    for name in CORPUS:
        if name in ("random", "counterexample"):
            continue
        g = corpus(name)
        assert validate(g) is g
        np.testing.assert_allclose(g.transition.sum(axis=1), 1.0)
    assert corpus("random:3:2:2:2").nK == 2
    assert corpus("counterexample", max_count=10).nK == 21


def test_big_match_structure():
    g = corpus("big_match")
    assert g.states == ("active", "absorbed1", "absorbed0")
    np.testing.assert_array_equal(g.payoff[0], [[1, 0], [0, 1]])
    q = g.transition_dense()
    assert q[0, 0, 0, 1] == 1 and q[0, 0, 1, 2] == 1
    assert q[0, 1, 0, 0] == 1 and q[0, 1, 1, 0] == 1


def test_validation_reports_locations():
    payoff = np.zeros((2, 1, 1))
    q = np.array([[[[0.5, 0.4]]], [[[1.0, 0.0]]]])
    with pytest.raises(GameValidationError) as err:
        validate(GameSpec.from_arrays(payoff, q))
    assert "sum" in str(err.value) and "0.9" in str(err.value)
    q_neg = np.array([[[[1.2, -0.2]]], [[[1.0, 0.0]]]])
    with pytest.raises(GameValidationError):
        validate(GameSpec.from_arrays(payoff, q_neg))
    bad = payoff.copy()
    bad[1, 0, 0] = np.nan
    with pytest.raises(GameValidationError):
        validate(GameSpec.from_arrays(bad, np.array([[[[1.0, 0.0]]], [[[1.0, 0.0]]]])))


def test_json_roundtrip():
    for g in (corpus("big_match"), random_game(5, 3, 2, 3), counterexample_mdp(150, "log", c=0.9)):
        back = GameSpec.from_dict(json.loads(json.dumps(g.to_dict())))
        np.testing.assert_array_equal(back.payoff, g.payoff)
        assert (back.transition != g.transition).nnz == 0
        assert back.states == g.states
    assert "transition_sparse" in counterexample_mdp(150, "log", c=0.9).to_dict()


def test_expected_payoff_and_next():
    g = corpus("big_match")
    x, y = np.array([0.5, 0.5]), np.array([0.25, 0.75])
    assert expected_payoff(g, 0, x, y) == pytest.approx(0.5 * 0.25 + 0.5 * 0.75)
    f = np.array([0.0, 1.0, 0.0])
    assert expected_next(g, 0, x, y, f) == pytest.approx(0.5 * 0.25)
    with pytest.raises(ValueError):
        check_mixed_action([0.7, 0.7], 2)


def test_value_function_checks():
    with pytest.raises(ValueError):
        ValueFunction(np.array([np.inf]))
    with pytest.raises(ValueError):
        ValueFunction(np.array([0.0]), -1.0)
    assert ValueFunction(np.array([-2.0, 1.0])).norm() == 2.0


def test_survival_families():
    phi = survival_function("triple_log", M0=1e7)
    assert 0 < float(phi(1)) < 1
    assert float(phi(10**6)) < float(phi(1))
    log = survival_function({"family": "log", "c": 0.9, "m0": 1.0})
    assert float(log(1)) == 1.0
    assert float(log(100)) == pytest.approx(0.9 / np.log(101))
    assert float(survival_function("zero")(5)) == 0.0
    with pytest.raises(ValueError):
        counterexample_mdp(10, "constant", p=1.5)
    with pytest.raises(ValueError):
        counterexample_mdp(10, "triple_log", M0=2)


def test_counterexample_transitions():
    c = 20
    g = counterexample_mdp(c, "constant", p=0.25)
    q = g.transition_dense()
    s01 = counterexample_index(c, (0, 1))
    s03 = counterexample_index(c, (0, 3))
    assert q[s03, 0, 0, counterexample_index(c, (0, 4))] == 1.0
    assert q[s03, 1, 0, counterexample_index(c, (1, 9))] == 0.75
    assert q[s03, 1, 0, counterexample_index(c, "0*")] == 0.25
    assert q[counterexample_index(c, (1, 1)), 0, 0, s01] == 1.0
    assert q[counterexample_index(c, (1, 5)), 1, 0, counterexample_index(c, (1, 4))] == 1.0
    star = counterexample_index(c, "0*")
    assert q[star, :, 0, star].tolist() == [1.0, 1.0]
    assert g.payoff[counterexample_index(c, (1, 7)), :, 0].tolist() == [1.0, 1.0]
    assert g.payoff[s03].max() == 0.0
    # saturation: counter 5 jumps to the capped (1, 20)
    assert q[counterexample_index(c, (0, 5)), 1, 0, counterexample_index(c, (1, 20))] == 0.75


def test_cap_certificate():
    n = 60
    cert = certify_counterexample_cap(counterexample_mdp(n + 1, "constant", p=0.1), n)
    assert cert["c_cap_stage"] is None and cert["exact"]
    assert cert["q_cap_events"] > 0 and cert["q_cap_harmful"] == 0
    tight = certify_counterexample_cap(counterexample_mdp(20, "constant", p=0.1), n)
    assert tight["c_cap_stage"] is not None and not tight["exact"]
    assert certify_counterexample_cap(counterexample_mdp(400, "constant", p=0.1), 10)["cap_unreachable"]
