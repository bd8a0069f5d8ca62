"""Values of weighted games: v_theta, v_n, v_lambda and the asymptotic value."""

from __future__ import annotations

import logging
import math

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .evaluation import Evaluation, make_n_stage, tail_mass
from .game_model import GameSpec, ValueFunction
from .shapley_operator import iterate

log = logging.getLogger(__name__)


class FixedPointNotReached(RuntimeError):
    def __init__(self, lam, achieved, iterations):
        self.achieved = achieved
        super().__init__(
            f"v_lambda at lambda={lam:g}: bound {achieved:.3g} after {iterations} iterations"
        )


def stationary_pair_matrices(game: GameSpec, X: np.ndarray, Y: np.ndarray):
    """Expected stage payoff r[k] and transition matrix P[k, k'] under stationary (X, Y)."""
    nK, nI, nJ = game.payoff.shape
    r = np.einsum("ki,kij,kj->k", X, game.payoff, Y)
    w = (X[:, :, None] * Y[:, None, :]).reshape(nK, nI * nJ)
    rows = np.repeat(np.arange(nK), nI * nJ)
    cols = np.arange(nK * nI * nJ)
    W = sp.csr_matrix((w.ravel(), (rows, cols)), shape=(nK, nK * nI * nJ))
    P = (W @ game.transition).tocsr()
    return r, P


def _solve_linear(M, b):
    if M.shape[0] <= 400:
        return np.linalg.solve(M.toarray(), b)
    return spla.spsolve(M.tocsc(), b)


def evaluate_stationary(game: GameSpec, X, Y, lam: float) -> np.ndarray:
    """Normalized lam-discounted payoff of a stationary pair: (I - (1-lam) P)^-1 lam r."""
    r, P = stationary_pair_matrices(game, X, Y)
    M = sp.identity(game.nK, format="csr") - (1 - lam) * P
    return _solve_linear(M, lam * r)


def v_discounted(op, lam: float, eps: float = 1e-10, max_iter: int = 1_000_000,
                 accelerate: bool = True) -> ValueFunction:
    """Fixed point v = Psi(lam, v) to sup-norm accuracy eps.

    Plain iteration from 0 is stopped through the contraction estimate
    ||Psi f - v|| <= delta + (1-lam)(||Psi f - f|| + delta)/lam, with delta
    the solver error.  With ``accelerate`` each round also evaluates the
    stationary strategies optimal against the current iterate exactly
    (strategy iteration) and keeps whichever candidate has the smaller
    residual, so the residual still shrinks at least as fast as plain
    iteration.
    """
    lam = float(lam)
    if not 0 < lam <= 1:
        raise ValueError(f"lambda must lie in (0,1], got {lam!r}")
    if eps <= 0:
        raise ValueError("eps must be > 0")
    key = ("v_lambda", lam)
    cached = op.cache.get(key)
    if cached is not None and cached.error_bound <= eps:
        return cached
    game = getattr(op, "game", None)
    nK = game.nK if game is not None else None
    f = np.zeros(nK) if nK is not None else None
    if f is None:
        raise ValueError("v_discounted needs an operator with a finite game or an explicit dimension")
    zero = ValueFunction(f)

    def step(vec):
        if hasattr(op, "apply_with_strategies"):
            g, X, Y, gap = op.apply_with_strategies(lam, ValueFunction(vec))
        else:
            g = op.apply(lam, ValueFunction(vec))
            X = Y = None
            gap = g.error_bound
        return g.values, X, Y, gap

    g, X, Y, gap = step(zero.values)
    for it in range(1, max_iter + 1):
        res = float(np.abs(g - f).max())
        # ||g - v|| <= delta + (1 - lam) ||f - v||, and ||f - v|| <= (res + delta) / lam
        bound = gap + (1 - lam) * (res + gap) / lam
        if bound <= eps:
            out = ValueFunction(g, bound)
            op.cache[key] = out
            log.debug("v_lambda(%g): %d rounds, bound %.3g", lam, it, bound)
            return out
        cand_f, cand = g, step(g)
        if accelerate and X is not None:
            h = evaluate_stationary(game, X, Y, lam)
            hstep = step(h)
            if np.abs(hstep[0] - h).max() < np.abs(cand[0] - cand_f).max():
                cand_f, cand = h, hstep
        f = cand_f
        g, X, Y, gap = cand
    raise FixedPointNotReached(lam, bound, max_iter)


def v_theta(op, theta: Evaluation, eps: float = 1e-9, method: str = "auto") -> ValueFunction:
    """Value of the theta-weighted game, v_theta = Psi(theta_1, v_{shift theta}).

    Finite support: backward induction from 0 beyond the last stage.  A
    geometric tail is seeded with the exact discounted value of the tail's
    discount factor, since the shift past the head is itself discounted.
    ``method="truncate"`` instead cuts at the first n with C * sum_{m>n} theta_m <= eps/2.
    """
    if eps <= 0:
        raise ValueError("eps must be > 0")
    nK = op.game.nK
    if theta.is_zero:
        return ValueFunction(np.zeros(nK))
    if method == "truncate" or (method == "auto" and theta.tail is None):
        if theta.tail is None:
            return iterate(op, theta, theta.support_end, np.zeros(nK))
        n = truncation_horizon(theta, eps / 2 / max(op.C, 1e-300))
        out = iterate(op, theta, n, np.zeros(nK))
        return ValueFunction(out.values, out.error_bound + op.C * tail_mass(theta, n + 1))
    if method != "auto":
        raise ValueError(f"unknown method {method!r}")
    lam_tail = 1.0 - theta.tail[1]
    seed = v_discounted(op, lam_tail, eps / 2)
    return iterate(op, theta, theta.horizon, seed)


def truncation_horizon(theta: Evaluation, mass: float) -> int:
    """Smallest n with sum_{m > n} theta_m <= mass."""
    H = theta.horizon
    if tail_mass(theta, H + 1) <= mass:
        lo, hi = 0, H
        while lo < hi:
            mid = (lo + hi) // 2
            if tail_mass(theta, mid + 1) <= mass:
                hi = mid
            else:
                lo = mid + 1
        return lo
    a, rho = theta.tail
    # a rho^k / (1 - rho) <= mass
    k = math.ceil(math.log(mass * (1 - rho) / a) / math.log(rho)) if rho > 0 else 1
    return H + max(k, 0)


def v_n_sequence(op, n_max: int) -> list[ValueFunction]:
    """[v_1, ..., v_{n_max}] via v_k = Psi(1/k, v_{k-1}), v_0 = 0."""
    f = ValueFunction(np.zeros(op.game.nK))
    out = []
    for k in range(1, n_max + 1):
        f = op.apply(1.0 / k, f)
        out.append(f)
    return out


def v_n_stage(op, n: int) -> ValueFunction:
    """Value of the n-stage game by backward induction."""
    if n < 1:
        raise ValueError("n must be >= 1")
    return iterate(op, make_n_stage(n), n, np.zeros(op.game.nK))


def asymptotic_value_estimate(op, tol: float = 1e-3, max_j: int = 12, eps: float = 1e-9):
    """Track v_n (n = 2^j) and v_lambda (lambda = 2^-j) until they agree and settle.

    Returns (estimate, diagnostics).  The estimate is the midpoint of the last
    v_n and v_lambda; its ``error_bound`` is the measured spread, not a proof.
    """
    vns = v_n_sequence(op, 2 ** max_j)
    history = []
    prev_n = prev_l = None
    estimate = None
    converged = False
    for j in range(max_j + 1):
        vn = vns[2 ** j - 1].values
        vl = v_discounted(op, 2.0 ** -j, eps).values
        gap = float(np.abs(vn - vl).max())
        dn = float(np.abs(vn - prev_n).max()) if prev_n is not None else math.inf
        dl = float(np.abs(vl - prev_l).max()) if prev_l is not None else math.inf
        history.append({"j": j, "n": 2 ** j, "lambda": 2.0 ** -j, "gap": gap, "diff_n": dn, "diff_lambda": dl})
        spread = max(gap, dn, dl)
        estimate = ValueFunction(0.5 * (vn + vl), spread / 2 + gap / 2 if math.isfinite(spread) else gap)
        prev_n, prev_l = vn, vl
        if spread <= tol:
            converged = True
            break
    diagnostics = {"converged": converged, "inconclusive": not converged, "certified": False,
                   "tol": tol, "history": history}
    return estimate, diagnostics


def holder_fit(op, lambdas, exponents=(1.0, 1 / 2, 1 / 3, 1 / 4), eps: float = 1e-12):
    """Fit ||v_l - v_l'|| <= C |l^s - l'^s| over all pairs of a discount grid.

    Candidate exponents are 1/M, the shapes a Puiseux expansion allows; the
    one with the smallest constant wins.  Returns (s, C).
    """
    vals = [v_discounted(op, l, eps).values for l in lambdas]
    best = None
    for s in exponents:
        C = 0.0
        for a in range(len(lambdas)):
            for b in range(a + 1, len(lambdas)):
                den = abs(lambdas[a] ** s - lambdas[b] ** s)
                num = float(np.abs(vals[a] - vals[b]).max())
                if den > 0:
                    C = max(C, num / den)
        if best is None or C < best[1] - 1e-12:
            best = (s, C)
    return best
