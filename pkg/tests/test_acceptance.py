"""Acceptance criteria: one test per criterion, each printed as PASS/FAIL in the terminal summary."""

import json
import math
import os
import subprocess
import sys
import time

import numpy as np
import pytest

from weightedgames.evaluation import approx_discounted_by_pwc, make_n_stage
from weightedgames.game_model import corpus
from weightedgames.harness import reproduce_counterexample
from weightedgames.properties import (
    SLACK,
    check_iterate_bound,
    check_iterate_lipschitz,
    check_iterate_weights,
    check_matrix_oracle,
    check_shapley_equation,
    check_value_lipschitz,
    random_operator,
)
from weightedgames.shapley_operator import ShapleyOperator
from weightedgames.strategies import best_response, discounted_pair
from weightedgames.values import asymptotic_value_estimate, v_discounted, v_n_stage

ROOT = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))
SEED = 2024

# frozen thresholds
EXPLOIT_TOL = 0.05
NOISE_FLOOR = 1e-9  # rounding noise allowed between consecutive exploitability gaps
BIG_MATCH_TOL = 0.02
CE_VN_MIN = 0.8
CE_VTHETA_MAX = 0.5


def _operator_cases(check, count, salt):
    failures = []
    for idx in range(count):
        rng = np.random.default_rng([SEED, salt, idx])
        op = random_operator(rng)
        res = check(op, rng)
        if not res["ok"]:
            failures.append(res)
    return failures


def test_matrix_game_correctness():
    """Matrix games: 500 random matrices inside the oracle bracket, certificates <= 1e-10, under 10 s."""
    t0 = time.perf_counter()
    failures = [i for i in range(500) if not check_matrix_oracle(np.random.default_rng([SEED, 1, i]))["ok"]]
    elapsed = time.perf_counter() - t0
    assert failures == []
    assert elapsed < 10.0, f"{elapsed:.1f}s"


def test_iterate_inequalities():
    """Iterate inequalities (i)(ii)(iii) on 200 random finite-support tuples, slack 1e-8, under 60 s."""
    assert SLACK == 1e-8
    t0 = time.perf_counter()
    failures = []
    for salt, check in enumerate((check_iterate_lipschitz, check_iterate_bound, check_iterate_weights)):
        failures += _operator_cases(check, 200, 10 + salt)
    elapsed = time.perf_counter() - t0
    assert failures == []
    assert elapsed < 60.0, f"{elapsed:.1f}s"


def test_value_lipschitz_in_weights():
    """Value Lipschitz in the weights: ||v_theta - v_theta'|| <= C ||theta - theta'||_1 on 100 random pairs."""
    assert _operator_cases(check_value_lipschitz, 100, 20) == []


def test_shapley_equation_residual():
    """Shapley equation: ||v_theta - Psi(theta_1, v_shift)|| within certified error on 100 random finite theta."""
    assert _operator_cases(check_shapley_equation, 100, 30) == []


def test_big_match_limits():
    """Big Match: |v_1024(active) - 1/2| <= 0.02 and |v_lambda(active) - 1/2| <= 0.02 at lambda = 2^-10, under 5 min."""
    t0 = time.perf_counter()
    op = ShapleyOperator(corpus("big_match"))
    vn = v_n_stage(op, 1024).values[0]
    lam = 2.0 ** -10
    v_lam = v_discounted(op, lam, 1e-12).values[0]
    # the plain fixed-point iteration, run to 1e-12, is the oracle for the exact value 1/2
    op_plain = ShapleyOperator(corpus("big_match"))
    plain = v_discounted(op_plain, lam, 1e-12, accelerate=False).values[0]
    elapsed = time.perf_counter() - t0
    assert abs(plain - 0.5) <= 1e-9
    assert abs(v_lam - plain) <= 2e-12
    assert abs(vn - 0.5) <= BIG_MATCH_TOL
    assert abs(v_lam - 0.5) <= BIG_MATCH_TOL
    assert elapsed < 300.0, f"{elapsed:.1f}s"


def _independent_l1(lam, theta):
    """sum_m |lam (1-lam)^(m-1) - theta_m| with an exact geometric remainder past the head."""
    H = theta.horizon
    m = np.arange(H, dtype=float)
    target = lam * np.power(1.0 - lam, m)
    head = math.fsum(np.abs(target - theta.weights(H)).tolist())
    return head + (1.0 - lam) ** H


@pytest.mark.parametrize("eps", [0.1, 0.05])
@pytest.mark.parametrize("lam", [0.5, 0.1, 1e-3, 1e-5])
def test_pwc_approximation_grid(lam, eps):
    """Piecewise-constant approximation of theta(lambda) within its certified eps, by independent l1 summation."""
    approx = approx_discounted_by_pwc(lam, eps)
    theta = approx.evaluation
    assert theta.tail is None
    assert abs(theta.mass - 1.0) <= 1e-9
    w = theta.weights(theta.horizon)
    runs = 1 + int(np.count_nonzero(np.diff(w)))
    assert runs <= approx.pieces <= math.ceil(1 / eps - 1e-9) ** 3
    dist = _independent_l1(lam, theta)
    assert dist <= approx.bound + 1e-9
    assert approx.bound <= approx.eps <= eps


def build_exploitability_table():
    """Largest gap over start states per n, for both players, relative to the estimated asymptotic value."""
    table = {}
    for name in ("big_match", "cycle2", "random:7:4:3:3"):
        op = ShapleyOperator(corpus(name))
        v_star, _ = asymptotic_value_estimate(op)
        rows = []
        for n in (4, 16, 64, 256):
            theta = make_n_stage(n)
            sigma, tau = discounted_pair(op, theta)
            _, low = best_response(op, theta, sigma, 2)
            _, high = best_response(op, theta, tau, 1)
            rows.append((float(np.max(v_star.values - low)), float(np.max(high - v_star.values))))
        table[name] = rows
    return table


def _non_increasing_after_max(seq):
    peak = int(np.argmax(seq))
    return all(b <= a + NOISE_FLOOR for a, b in zip(seq[peak:], seq[peak + 1:]))


def test_asymptotic_optimality():
    """Asymptotic optimality: both theta(n) exploitability gaps <= 0.05 at n = 256, non-increasing after the peak, under 10 min."""
    t0 = time.perf_counter()
    exploitability_table = build_exploitability_table()
    assert len(exploitability_table) >= 3 and "big_match" in exploitability_table
    for name, rows in exploitability_table.items():
        for player in (0, 1):
            seq = [r[player] for r in rows]
            assert seq[-1] <= EXPLOIT_TOL, (name, player, seq)
            assert _non_increasing_after_max(seq), (name, player, seq)
    assert time.perf_counter() - t0 < 600.0


def test_counterexample_at_scale():
    """Counterexample: v_n(0,1) >= 0.8 while v_thetaN(0,1) <= 0.5 under the frozen repo config."""
    with open(os.path.join(ROOT, "configs", "counterexample.json"), encoding="utf-8") as fh:
        params = json.load(fh)
    (run,) = reproduce_counterexample(params)["runs"]
    assert abs(run["theta_mass"] - 1.0) <= 1e-9
    assert run["cap"]["exact"]
    assert run["v_n"] - run["error_bound"] >= CE_VN_MIN
    assert run["v_theta"] + run["error_bound"] <= CE_VTHETA_MAX
    assert run["gap"] >= 0.3


CLI_RUNS = [
    ("gen", ["gen", "--game", "big_match"], "json"),
    ("solve", ["solve", "--game", "random:7:4:3:3", "--eval", "n:16"], "json"),
    ("sweep", ["sweep", "--config", "configs/sweep_big_match.json"], "csv"),
    ("strategy", ["strategy", "--game", "cycle2", "--eval", "n:8"], "json"),
    ("counterexample", ["counterexample", "--config", "configs/counterexample_small.json"], "json"),
    ("proptest", ["proptest", "--seed", "5", "--budget", "27"], "json"),
]


def test_cli_determinism(tmp_path):
    """Determinism: every CLI command reproduces byte-identical output across two runs."""
    for name, argv, ext in CLI_RUNS:
        outputs = []
        for rep in range(2):
            out = tmp_path / f"{name}{rep}.{ext}"
            subprocess.run([sys.executable, "-m", "weightedgames", *argv, "--out", str(out)],
                           cwd=ROOT, check=True, capture_output=True)
            outputs.append(out.read_bytes())
        assert outputs[0] == outputs[1], name
        assert outputs[0], name
