"""Randomized checks of the operator and value inequalities.

Every check draws one case from ``rng`` and returns a dict with ``ok``, the
two sides of the inequality, the allowed tolerance and a JSON-safe dump of
the case, so failures can be replayed.
"""

from __future__ import annotations

import numpy as np

from . import matrix_game
from .evaluation import Evaluation, l1_distance, shift, tail_mass
from .game_model import ValueFunction, random_game
from .shapley_operator import ShapleyOperator, iterate
from .values import v_theta

SLACK = 1e-8


class ExpandingOperator:
    """Fault injection: Psi(lam, f) + factor (1-lam) f, which breaks nonexpansiveness."""

    def __init__(self, base, factor: float = 0.5):
        self.base = base
        self.factor = factor
        self.game = base.game
        self.C = base.C
        self.cache: dict = {}

    def apply(self, lam, f):
        f = f if isinstance(f, ValueFunction) else ValueFunction(f)
        out = self.base.apply(lam, f)
        # long iterations blow up by design; the resulting inf is reported as a failure
        with np.errstate(over="ignore", invalid="ignore"):
            vals = out.values + self.factor * (1 - lam) * f.values
        return ValueFunction(vals, out.error_bound)


def random_operator(rng, max_states: int = 4, max_actions: int = 3) -> ShapleyOperator:
    nK = int(rng.integers(1, max_states + 1))
    nI = int(rng.integers(1, max_actions + 1))
    nJ = int(rng.integers(1, max_actions + 1))
    seed = int(rng.integers(2**31))
    return ShapleyOperator(random_game(seed, nK, nI, nJ))


def random_finite_theta(rng, max_horizon: int = 30) -> Evaluation:
    """Random finite-support evaluation, sometimes with interior zero weights."""
    h = int(rng.integers(1, max_horizon + 1))
    w = rng.exponential(size=h)
    if h > 2 and rng.random() < 0.3:
        w[rng.random(h) < 0.3] = 0.0
        w[-1] = max(w[-1], 0.1)
    return Evaluation(w / w.sum())


def random_theta(rng, max_horizon: int = 30) -> Evaluation:
    """Finite support most of the time, else a head followed by a geometric tail."""
    if rng.random() < 0.7:
        return random_finite_theta(rng, max_horizon)
    h = int(rng.integers(0, max_horizon + 1))
    rho = float(rng.uniform(0.1, 0.9))
    head = rng.exponential(size=h)
    a = float(rng.exponential())
    total = head.sum() + a / (1 - rho)
    return Evaluation(head / total, (a / total, rho))


def _vec(rng, n, scale=None):
    scale = float(10 ** rng.uniform(-1, 1)) if scale is None else scale
    return rng.uniform(-scale, scale, size=n)


def _dump(**kw):
    out = {}
    for k, v in kw.items():
        if isinstance(v, Evaluation):
            v = v.to_dict()
        elif isinstance(v, np.ndarray):
            v = v.tolist()
        out[k] = v
    return out


def _result(lhs, rhs, tol, **case):
    lhs, rhs, tol = float(lhs), float(rhs), float(tol)
    return {"ok": bool(lhs <= rhs + tol), "lhs": lhs, "rhs": rhs, "tol": tol, "case": _dump(**case)}


def check_nonexpansive(op, rng):
    """||Psi(lam,f) - Psi(lam,g)|| <= (1-lam)||f - g||."""
    n = op.game.nK
    lam = float(rng.random())
    f, g = _vec(rng, n), _vec(rng, n)
    a, b = op.apply(lam, f), op.apply(lam, g)
    lhs = np.abs(a.values - b.values).max()
    rhs = (1 - lam) * np.abs(f - g).max()
    return _result(lhs, rhs, a.error_bound + b.error_bound + SLACK, lam=lam, f=f, g=g)


def check_regularity(op, rng):
    """||Psi(lam,f)|| <= C lam + (1-lam)||f||."""
    n = op.game.nK
    lam = float(rng.random())
    f = _vec(rng, n)
    a = op.apply(lam, f)
    rhs = op.C * lam + (1 - lam) * np.abs(f).max()
    return _result(a.norm(), rhs, a.error_bound + SLACK, lam=lam, f=f)


def check_assumption(op, rng):
    """||alpha Psi(lam,f) - beta Psi(lam',g)|| <= C|alpha lam - beta lam'| + ||alpha(1-lam)f - beta(1-lam')g||."""
    n = op.game.nK
    alpha, beta, lam, lam2 = (float(x) for x in rng.random(4))
    f, g = _vec(rng, n), _vec(rng, n)
    a, b = op.apply(lam, f), op.apply(lam2, g)
    lhs = np.abs(alpha * a.values - beta * b.values).max()
    rhs = op.C * abs(alpha * lam - beta * lam2) + np.abs(alpha * (1 - lam) * f - beta * (1 - lam2) * g).max()
    tol = alpha * a.error_bound + beta * b.error_bound + SLACK
    return _result(lhs, rhs, tol, alpha=alpha, beta=beta, lam=lam, lam2=lam2, f=f, g=g)


def check_iterate_lipschitz(op, rng):
    """||Psi^n_theta f - Psi^n_theta g|| <= (sum_{m>n} theta_m) ||f - g||."""
    theta = random_finite_theta(rng)
    n = int(rng.integers(1, theta.horizon + 1))
    f, g = _vec(rng, op.game.nK), _vec(rng, op.game.nK)
    a, b = iterate(op, theta, n, f), iterate(op, theta, n, g)
    lhs = np.abs(a.values - b.values).max()
    rhs = tail_mass(theta, n + 1) * np.abs(f - g).max()
    return _result(lhs, rhs, a.error_bound + b.error_bound + SLACK, theta=theta, n=n, f=f, g=g)


def check_iterate_bound(op, rng):
    """||Psi^n_theta f|| <= C sum_{m<=n} theta_m + (sum_{m>n} theta_m) ||f||."""
    theta = random_finite_theta(rng)
    n = int(rng.integers(1, theta.horizon + 1))
    f = _vec(rng, op.game.nK)
    a = iterate(op, theta, n, f)
    rest = tail_mass(theta, n + 1)
    rhs = op.C * (1 - rest) + rest * np.abs(f).max()
    return _result(a.norm(), rhs, a.error_bound + SLACK, theta=theta, n=n, f=f)


def check_iterate_weights(op, rng):
    """||Psi^n_theta f - Psi^n_theta' f|| <= C sum_{m<=n}|theta_m - theta'_m| + |sum_{m>n}(theta_m - theta'_m)| ||f||."""
    theta, other = random_finite_theta(rng), random_finite_theta(rng)
    n = int(rng.integers(1, max(theta.horizon, other.horizon) + 1))
    f = _vec(rng, op.game.nK)
    a, b = iterate(op, theta, n, f), iterate(op, other, n, f)
    lhs = np.abs(a.values - b.values).max()
    head = np.abs(theta.weights(n) - other.weights(n)).sum()
    rhs = op.C * head + abs(tail_mass(theta, n + 1) - tail_mass(other, n + 1)) * np.abs(f).max()
    return _result(lhs, rhs, a.error_bound + b.error_bound + SLACK, theta=theta, other=other, n=n, f=f)


def check_value_lipschitz(op, rng):
    """||v_theta - v_theta'|| <= C ||theta - theta'||_1, and ||v_theta|| <= C."""
    theta, other = random_theta(rng), random_theta(rng)
    a, b = v_theta(op, theta, 1e-10), v_theta(op, other, 1e-10)
    lhs = max(np.abs(a.values - b.values).max(), a.norm() - op.C, b.norm() - op.C)
    rhs = op.C * l1_distance(theta, other)
    return _result(lhs, rhs, a.error_bound + b.error_bound + SLACK, theta=theta, other=other)


def check_shapley_equation(op, rng):
    """v_theta = Psi(theta_1, v_shift(theta)) up to the certified errors."""
    theta = random_finite_theta(rng)
    v = v_theta(op, theta, 1e-10)
    cont = v_theta(op, shift(theta), 1e-10)
    w = op.apply(theta.weight(1), cont)
    lhs = np.abs(v.values - w.values).max()
    return _result(lhs, 0.0, v.error_bound + w.error_bound + SLACK, theta=theta)


def check_matrix_oracle(rng):
    """Simplex value inside the grid oracle's bracket, certificate residuals <= 1e-10."""
    m, n = (int(x) for x in rng.integers(1, 5, size=2))
    A = rng.uniform(-10, 10, size=(m, n))
    sol = matrix_game.solve(A)
    grid = 60 if max(m, n) <= 3 else 40
    orc = matrix_game.value_oracle(A, grid)
    outside = max(orc.lower - sol.value, sol.value - orc.upper, 0.0)
    worst = max(outside, max(sol.certificate) - 1e-10)
    return _result(worst, 0.0, 1e-12, A=A)


OPERATOR_CHECKS = {
    "nonexpansive": check_nonexpansive,
    "regularity": check_regularity,
    "assumption": check_assumption,
    "iterate_lipschitz": check_iterate_lipschitz,
    "iterate_bound": check_iterate_bound,
    "iterate_weights": check_iterate_weights,
    "value_lipschitz": check_value_lipschitz,
    "shapley_equation": check_shapley_equation,
}


def run_check(name: str, rng, wrap=None):
    """Run one named check on a fresh random case; ``wrap`` may replace the operator."""
    if name == "matrix_oracle":
        return check_matrix_oracle(rng)
    op = random_operator(rng)
    game = op.game.name
    if wrap is not None:
        op = wrap(op)
    res = OPERATOR_CHECKS[name](op, rng)
    res["case"]["game"] = game
    return res


ALL_CHECKS = tuple(OPERATOR_CHECKS) + ("matrix_oracle",)

