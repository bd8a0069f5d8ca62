"""Shapley operators Psi(lam, f) and their weighted iterates."""

from __future__ import annotations

from typing import Callable

import numpy as np

from . import matrix_game
from .evaluation import Evaluation, stage_discounts
from .game_model import GameSpec, ValueFunction, as_value_function, validate

# Below this discount the nonexpansive-map adapter is evaluated at the threshold.
LAMBDA_GUARD = 1e-12


class NotNonexpansive(ValueError):
    """A map offered as 1-Lipschitz failed the spot check."""


def _check_lambda(lam: float) -> float:
    lam = float(lam)
    if not 0 <= lam <= 1:
        raise ValueError(f"lambda must lie in [0,1], got {lam!r}")
    return lam


class ShapleyOperator:
    """Psi(lam, f)(k) = val[lam g(k,.,.) + (1-lam) E_k f] for a finite game.

    Each state's auxiliary matrix game is solved independently.  One-player
    games (a single row or column) skip the LP and take a max or min.
    """

    def __init__(self, game: GameSpec, tol: float = 1e-10):
        self.game = validate(game)
        self.tol = tol
        self.C = game.C
        self.cache: dict = {}

    def __repr__(self):
        return f"ShapleyOperator({self.game.name or 'game'}, nK={self.game.nK})"

    def auxiliary(self, lam: float, f) -> np.ndarray:
        """Matrices lam g + (1-lam) E f, shape (K, I, J)."""
        f = as_value_function(f).values
        return lam * self.game.payoff + (1 - lam) * self.game.continuation(f)

    def apply_with_strategies(self, lam: float, f):
        """Psi(lam, f) together with optimal mixed actions (K x I, K x J) and solver gaps."""
        lam = _check_lambda(lam)
        f = as_value_function(f)
        if f.values.size != self.game.nK:
            raise ValueError(f"value vector of length {f.values.size} for {self.game.nK} states")
        A = self.auxiliary(lam, f)
        nK, nI, nJ = A.shape
        X = np.zeros((nK, nI))
        Y = np.zeros((nK, nJ))
        if nJ == 1:
            col = A[:, :, 0]
            best = np.argmax(col, axis=1)
            vals = col[np.arange(nK), best]
            X[np.arange(nK), best] = 1.0
            Y[:] = 1.0
            gaps = np.zeros(nK)
        elif nI == 1:
            row = A[:, 0, :]
            best = np.argmin(row, axis=1)
            vals = row[np.arange(nK), best]
            Y[np.arange(nK), best] = 1.0
            X[:] = 1.0
            gaps = np.zeros(nK)
        else:
            vals = np.empty(nK)
            gaps = np.empty(nK)
            for k in range(nK):
                sol = matrix_game.solve(A[k], tol=self.tol)
                vals[k] = sol.value
                X[k] = sol.x_star
                Y[k] = sol.y_star
                gaps[k] = max(sol.certificate)
        gap = float(gaps.max())
        out = ValueFunction(vals, (1 - lam) * f.error_bound + gap)
        return out, X, Y, gap

    def apply(self, lam: float, f) -> ValueFunction:
        return self.apply_with_strategies(lam, f)[0]


class NonexpansiveOperator:
    """Psi(lam, f) = lam * Phi((1-lam)/lam * f) built from a 1-Lipschitz map Phi.

    For lam below LAMBDA_GUARD the formula is evaluated at the guard, which
    stands in for the continuous extension at lam = 0.
    """

    def __init__(self, phi: Callable[[np.ndarray], np.ndarray], C0: float):
        self.phi = phi
        self.C = float(C0)
        self.cache: dict = {}

    def apply(self, lam: float, f) -> ValueFunction:
        lam = _check_lambda(lam)
        f = as_value_function(f)
        lam_eff = max(lam, LAMBDA_GUARD)
        vals = lam_eff * np.asarray(self.phi((1 - lam) / lam_eff * f.values), dtype=float)
        return ValueFunction(vals, (1 - lam) * f.error_bound)


def from_nonexpansive(phi, C0: float, dim: int, checks: int = 64, seed: int = 0) -> NonexpansiveOperator:
    """Wrap Phi after spot-checking ||Phi(a) - Phi(b)|| <= ||a - b|| on random pairs."""
    rng = np.random.default_rng(seed)
    for _ in range(checks):
        scale = 10.0 ** rng.uniform(-3, 3)
        a = rng.normal(size=dim) * scale
        b = a + rng.normal(size=dim) * scale * rng.uniform(0, 1)
        lhs = float(np.abs(np.asarray(phi(a)) - np.asarray(phi(b))).max())
        rhs = float(np.abs(a - b).max())
        if lhs > rhs * (1 + 1e-9) + 1e-9:
            raise NotNonexpansive(f"|Phi(a)-Phi(b)| = {lhs:.6g} exceeds |a-b| = {rhs:.6g}")
    return NonexpansiveOperator(phi, C0)


def one_shot_map(game: GameSpec, tol: float = 1e-10) -> Callable[[np.ndarray], np.ndarray]:
    """Phi(f)(k) = val[g(k,.,.) + E_k f], the undiscounted one-stage map of a game."""
    op = ShapleyOperator(game, tol)

    def phi(f):
        A = game.payoff + game.continuation(f)
        out = np.empty(game.nK)
        for k in range(game.nK):
            out[k] = matrix_game.solve(A[k], tol=op.tol).value
        return out

    return phi


def apply(op, lam: float, f) -> ValueFunction:
    return op.apply(lam, f)


def iterate(op, theta: Evaluation, n: int, f) -> ValueFunction:
    """Psi^n_theta(f) = Psi(theta_1, Psi^{n-1}_{shift theta}(f)), Psi^0 = identity.

    Evaluated from the innermost stage outward: stage m uses the relative
    weight lam_m = theta_m / sum_{m' >= m} theta_m', for m = n down to 1.
    """
    if n < 0:
        raise ValueError("n must be >= 0")
    f = as_value_function(f)
    if n == 0:
        return f
    lams = stage_discounts(theta, n)
    for lam in lams[::-1]:
        f = op.apply(float(lam), f)
    return f
