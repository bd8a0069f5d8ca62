"""theta-discounted Markov strategies, their exact payoffs, best responses and exploitability."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np
import scipy.sparse as sp

from .evaluation import Evaluation, stage_discounts
from .game_model import GameSpec, ValueFunction
from .values import _solve_linear, stationary_pair_matrices, v_discounted

# Stages with zero relative weight play the optimum at this small discount.
ZERO_LAMBDA_FLOOR = 2.0 ** -10
POLICY_ITERATION_MAX = 10_000


class HorizonShortfall(ValueError):
    """A strategy stops before the evaluation's weights do."""


@dataclass(frozen=True, eq=False)
class MarkovStrategy:
    """Mixed action per (stage, state); ``tail`` is played at every stage past the table.

    ``stages`` has shape (H, K, A) and ``tail`` shape (K, A) or None.
    """

    stages: np.ndarray
    tail: Optional[np.ndarray] = None
    player: int = 1

    def __post_init__(self):
        st = np.array(self.stages, dtype=float)
        if st.ndim != 3:
            raise ValueError(f"stage table must be 3-d (H, K, A), got shape {st.shape}")
        tables = [st] if self.tail is None else [st, np.asarray(self.tail, dtype=float)[None]]
        for t in tables:
            if t.size and (t.min() < -1e-12 or np.abs(t.sum(axis=2) - 1).max() > 1e-9):
                raise ValueError("every entry must be a probability vector")
        st.setflags(write=False)
        object.__setattr__(self, "stages", st)
        if self.tail is not None:
            tail = np.array(self.tail, dtype=float)
            tail.setflags(write=False)
            object.__setattr__(self, "tail", tail)

    @property
    def horizon(self) -> int:
        return self.stages.shape[0]

    def at(self, m: int) -> np.ndarray:
        """Mixed actions (K, A) used at stage m >= 1."""
        if m < 1:
            raise ValueError("stages start at 1")
        if m <= self.horizon:
            return self.stages[m - 1]
        if self.tail is None:
            raise HorizonShortfall(f"strategy covers {self.horizon} stages, stage {m} requested")
        return self.tail

    def covers(self, m: int) -> bool:
        return m <= self.horizon or self.tail is not None

    @classmethod
    def stationary(cls, table, player: int = 1) -> "MarkovStrategy":
        table = np.asarray(table, dtype=float)
        return cls(np.zeros((0,) + table.shape), table, player)


def optimal_actions(op, lam: float, eps: float = 1e-10):
    """Canonical optimal mixed actions in the lam-discounted game, per state.

    Returns (X, Y, gaps): X is (K, I), Y is (K, J) and ``gaps`` the largest
    certificate residual of the auxiliary games lam g + (1-lam) E v_lam.
    """
    lam = float(lam)
    if not 0 <= lam <= 1:
        raise ValueError(f"lambda must lie in [0,1], got {lam!r}")
    if lam == 0:
        lam = ZERO_LAMBDA_FLOOR
    key = ("optimal_actions", lam)
    if key in op.cache:
        return op.cache[key]
    v = np.zeros(op.game.nK) if lam == 1 else v_discounted(op, lam, eps)
    _, X, Y, gap = op.apply_with_strategies(lam, v)
    out = (X, Y, gap)
    op.cache[key] = out
    return out


def discounted_strategy(op, theta: Evaluation, horizon: int, player: int = 1) -> MarkovStrategy:
    """Stage m plays the optimal action for the stage discount theta_m / sum_{m' >= m} theta_m'.

    A geometric tail adds the stationary optimum of the tail's discount for
    every stage past ``horizon`` (which must then reach the end of the head).
    """
    if player not in (1, 2):
        raise ValueError("player must be 1 or 2")
    lams = stage_discounts(theta, horizon)
    pick = 0 if player == 1 else 1
    stages = [optimal_actions(op, float(lam))[pick] for lam in lams]
    n_act = op.game.nI if player == 1 else op.game.nJ
    table = np.array(stages) if stages else np.zeros((0, op.game.nK, n_act))
    tail = None
    if theta.tail is not None and horizon >= theta.horizon:
        tail = optimal_actions(op, 1.0 - theta.tail[1])[pick]
    return MarkovStrategy(table, tail, player)


def discounted_pair(op, theta: Evaluation, horizon: Optional[int] = None):
    """(sigma^theta, tau^theta) covering the whole evaluation."""
    if horizon is None:
        horizon = theta.horizon if theta.tail is not None else theta.support_end
    return discounted_strategy(op, theta, horizon, 1), discounted_strategy(op, theta, horizon, 2)


def _coverage(theta: Evaluation, *strats: MarkovStrategy) -> int:
    """Number of stages handled explicitly before a stationary geometric tail (if any)."""
    if theta.tail is None:
        end = theta.support_end or 0
        for s in strats:
            if not s.covers(end):
                raise HorizonShortfall(f"player {s.player} strategy covers {s.horizon} of {end} weighted stages")
        return end
    for s in strats:
        if s.tail is None:
            raise HorizonShortfall(f"player {s.player} strategy has no stationary tail for the geometric weights")
    return max([theta.horizon] + [s.horizon for s in strats])


def payoff(op, theta: Evaluation, sigma: MarkovStrategy, tau: MarkovStrategy, k1: int):
    """gamma_theta(k1, sigma, tau) = E[sum_m theta_m g_m] by forward recursion on the state law.

    Returns (value, bound); past the explicit stages a geometric tail is
    summed in closed form, b * mu (I - rho P)^-1 r.
    """
    game = op.game
    M = _coverage(theta, sigma, tau)
    weights = theta.weights(M)
    mu = np.zeros(game.nK)
    mu[k1] = 1.0
    total = 0.0
    for m in range(1, M + 1):
        r, P = stationary_pair_matrices(game, sigma.at(m), tau.at(m))
        total += weights[m - 1] * float(mu @ r)
        mu = P.T @ mu
    if theta.tail is not None:
        b, rho = theta.weight(M + 1), theta.tail[1]
        r, P = stationary_pair_matrices(game, sigma.tail, tau.tail)
        A = sp.identity(game.nK, format="csr") - rho * P
        h = _solve_linear(A, r)
        total += b * float(mu @ h)
    bound = 1e-12 * max(op.C, 1.0) * (M + 1)
    return total, bound


def _reduced(game: GameSpec, other: np.ndarray, responder: int):
    """Responder's one-player stage game against fixed mixed actions ``other``.

    Returns r (K, A) and a sparse transition with one row per (k, a).
    """
    nK, nI, nJ = game.payoff.shape
    if responder == 1:
        r = np.einsum("kij,kj->ki", game.payoff, other)
        # row (k, i, j) -> (k, i) with weight y[k, j]
        src = np.arange(nK * nI * nJ)
        dst = src // nJ
        w = np.broadcast_to(other[:, None, :], (nK, nI, nJ)).ravel()
        n_act = nI
    else:
        r = np.einsum("ki,kij->kj", other, game.payoff)
        src = np.arange(nK * nI * nJ)
        k, rest = np.divmod(src, nI * nJ)
        i, j = np.divmod(rest, nJ)
        dst = k * nJ + j
        w = np.broadcast_to(other[:, :, None], (nK, nI, nJ)).ravel()
        n_act = nJ
    W = sp.csr_matrix((w, (dst, src)), shape=(nK * n_act, nK * nI * nJ))
    return r, (W @ game.transition).tocsr(), n_act


def _pick(q: np.ndarray, responder: int) -> np.ndarray:
    """Best pure action per row (lowest index on ties)."""
    return np.argmax(q, axis=1) if responder == 1 else np.argmin(q, axis=1)


def _policy_iteration(r, P, n_act, rho, responder):
    """Optimal stationary policy and values for sum_j rho^j r_j (max for P1, min for P2)."""
    nK = r.shape[0]
    sign = 1.0 if responder == 1 else -1.0
    idx = np.arange(nK)
    policy = _pick(r, responder)
    for _ in range(POLICY_ITERATION_MAX):
        rows = idx * n_act + policy
        Ppi = P[rows]
        V = _solve_linear(sp.identity(nK, format="csr") - rho * Ppi, r[idx, policy])
        Q = r + rho * (P @ V).reshape(nK, n_act)
        cur = Q[idx, policy]
        best = _pick(Q, responder)
        # switch only on strict improvement, which rules out cycling on ties
        improve = sign * (Q[idx, best] - cur) > 1e-12 * (1 + np.abs(cur))
        if not improve.any():
            return policy, V
        policy = np.where(improve, best, policy)
    raise RuntimeError("policy iteration did not stabilize")


def best_response(op, theta: Evaluation, strategy: MarkovStrategy, responder: int, k1: Optional[int] = None):
    """Exact best reply in the theta-weighted game by backward induction over (stage, state).

    Against a Markov strategy a Markov reply is optimal, so pure Markov
    replies suffice.  Returns (reply, value): ``value`` is the value vector
    over start states when ``k1`` is None, else its k1 entry.
    """
    if responder not in (1, 2):
        raise ValueError("responder must be 1 or 2")
    if strategy.player == responder:
        raise ValueError("the responder must be the other player")
    game = op.game
    nK = game.nK
    M = _coverage(theta, strategy)
    weights = theta.weights(M)
    idx = np.arange(nK)
    tail_policy = None
    W = np.zeros(nK)
    if theta.tail is not None:
        r, P, n_act = _reduced(game, strategy.tail, responder)
        b, rho = theta.weight(M + 1), theta.tail[1]
        tail_policy, V = _policy_iteration(r, P, n_act, rho, responder)
        W = b * V
    n_act = game.nI if responder == 1 else game.nJ
    table = np.zeros((M, nK, n_act))
    for m in range(M, 0, -1):
        r, P, _ = _reduced(game, strategy.at(m), responder)
        Q = weights[m - 1] * r + (P @ W).reshape(nK, n_act)
        a = _pick(Q, responder)
        table[m - 1, idx, a] = 1.0
        W = Q[idx, a]
    tail = None
    if tail_policy is not None:
        tail = np.zeros((nK, n_act))
        tail[idx, tail_policy] = 1.0
    reply = MarkovStrategy(table, tail, responder)
    return reply, (W if k1 is None else float(W[k1]))


def exploitability(op, theta: Evaluation, sigma: MarkovStrategy, tau: MarkovStrategy, k1: int,
                   v_star=None):
    """(v*(k1) - min_tau gamma(sigma, tau), max_sigma gamma(sigma, tau) - v*(k1)).

    Gaps are signed: a negative entry means the strategy secures more than
    v* in this particular weighted game.  Without ``v_star`` the measured
    asymptotic value is used.
    """
    if v_star is None:
        from .values import asymptotic_value_estimate
        v_star = asymptotic_value_estimate(op)[0]
    if isinstance(v_star, ValueFunction):
        v_star = v_star.values
    vs = float(np.asarray(v_star, dtype=float)[k1]) if np.ndim(v_star) else float(v_star)
    _, low = best_response(op, theta, sigma, 2, k1)
    _, high = best_response(op, theta, tau, 1, k1)
    return vs - low, high - vs
