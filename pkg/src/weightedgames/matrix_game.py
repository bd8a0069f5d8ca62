"""Minimax solver for finite zero-sum matrix games (row player maximizes)."""

from __future__ import annotations

import itertools
import logging
from fractions import Fraction
from math import comb
from typing import NamedTuple

import numpy as np

log = logging.getLogger(__name__)

PIVOT_EPS = 1e-12
ORACLE_MAX_POINTS = 2_000_000


class MatrixGameSolution(NamedTuple):
    """Value, optimal strategies and their certificate.

    ``certificate`` holds (value - min_j (x_star A)_j, max_i (A y_star)_i - value):
    how much either player could gain by deviating from the reported value.
    """

    value: float
    x_star: np.ndarray
    y_star: np.ndarray
    certificate: tuple[float, float]

    @property
    def gap(self) -> float:
        return self.certificate[0] + self.certificate[1]


def _as_matrix(A) -> np.ndarray:
    A = np.asarray(A, dtype=float)
    if A.ndim != 2 or 0 in A.shape:
        raise ValueError(f"expected a non-empty 2-d payoff matrix, got shape {A.shape}")
    if not np.all(np.isfinite(A)):
        raise ValueError("payoff matrix contains NaN or infinite entries")
    return A


def _certify(A, x, y) -> MatrixGameSolution:
    lower = float((x @ A).min())
    upper = float((A @ y).max())
    value = 0.5 * (lower + upper)
    return MatrixGameSolution(value, x, y, (value - lower, upper - value))


def _simplex(B, exact=False, verbose=False):
    """Solve max 1'w s.t. B w <= 1, w >= 0 for B > 0 with Bland's rule.

    Returns (w, u): the primal optimum and the dual optimum read off the
    slack columns of the final objective row.
    """
    m, n = B.shape
    if exact:
        T = np.empty((m + 1, n + m + 1), dtype=object)
        T[:, :] = Fraction(0)
        for i in range(m):
            for j in range(n):
                T[i, j] = Fraction(float(B[i, j]))
            T[i, n + i] = Fraction(1)
            T[i, -1] = Fraction(1)
        for j in range(n):
            T[m, j] = Fraction(-1)
        eps = 0
    else:
        T = np.zeros((m + 1, n + m + 1))
        T[:m, :n] = B
        T[:m, n:n + m] = np.eye(m)
        T[:m, -1] = 1.0
        T[m, :n] = -1.0
        eps = PIVOT_EPS
    basis = list(range(n, n + m))
    while True:
        # Bland: lowest-index column with negative reduced cost enters
        entering = next((j for j in range(n + m) if T[m, j] < -eps), None)
        if entering is None:
            break
        col = T[:m, entering]
        best = None
        for i in range(m):
            if col[i] > eps:
                ratio = T[i, -1] / col[i]
                key = (ratio, basis[i])
                if best is None or key < best[0]:
                    best = (key, i)
        if best is None:
            raise RuntimeError("unbounded LP; payoff shift failed")
        row = best[1]
        T[row, :] = T[row, :] / T[row, entering]
        for i in range(m + 1):
            if i != row and T[i, entering] != 0:
                T[i, :] = T[i, :] - T[i, entering] * T[row, :]
        basis[row] = entering
        if verbose:
            log.debug("pivot row=%d col=%d\n%s", row, entering, T)
    w = np.zeros(n)
    for i, b in enumerate(basis):
        if b < n:
            w[b] = float(T[i, -1])
    u = np.array([float(T[m, n + i]) for i in range(m)])
    return w, u


def _normalize(p):
    p = np.clip(p, 0.0, None)
    s = p.sum()
    return p / s


def solve(A, tol: float = 1e-10, verbose: bool = False) -> MatrixGameSolution:
    """Value and optimal mixed strategies of the zero-sum game with payoff A to the row player.

    Pure saddle points are detected first (lowest row, then lowest column);
    otherwise the LP is solved by a dense simplex with Bland's rule, which
    makes the returned strategies a deterministic function of A.  If the
    float tableau misses ``tol``, the LP is re-solved in exact rationals.
    """
    A = _as_matrix(A)
    m, n = A.shape
    row_min = A.min(axis=1)
    col_max = A.max(axis=0)
    lower, upper = row_min.max(), col_max.min()
    if lower == upper:
        x = np.zeros(m)
        y = np.zeros(n)
        x[int(np.argmax(row_min))] = 1.0
        y[int(np.argmin(col_max))] = 1.0
        return MatrixGameSolution(float(lower), x, y, (0.0, 0.0))
    shift = 1.0 - A.min()
    sol = None
    for exact in (False, True):
        w, u = _simplex(A + shift, exact=exact, verbose=verbose)
        sol = _certify(A, _normalize(u), _normalize(w))
        if max(sol.certificate) <= tol:
            return sol
        log.debug("float simplex certificate %s above tol, retrying exactly", sol.certificate)
    return sol


def best_response_value(A, x) -> float:
    """Worst case over columns of the row strategy x: min_j (x A)_j."""
    A = _as_matrix(A)
    x = np.asarray(x, dtype=float)
    if x.shape != (A.shape[0],):
        raise ValueError(f"strategy of length {x.size} does not match {A.shape[0]} rows")
    return float((x @ A).min())


def simplex_grid(k: int, grid_n: int) -> np.ndarray:
    """All points of the k-simplex with coordinates in multiples of 1/grid_n."""
    if k == 1:
        return np.ones((1, 1))
    rows = []
    for bars in itertools.combinations(range(grid_n + k - 1), k - 1):
        edges = (-1,) + bars + (grid_n + k - 1,)
        rows.append([edges[i + 1] - edges[i] - 1 for i in range(k)])
    return np.array(rows, dtype=float) / grid_n


class OracleValue(NamedTuple):
    value: float
    bound: float
    lower: float
    upper: float
    lipschitz_bound: float


def value_oracle(A, grid_n: int) -> OracleValue:
    """Brute-force value bracket from simplex grids of resolution 1/grid_n.

    ``lower`` is the best grid maximin and ``upper`` the best grid minimax, so
    the true value lies in [lower, upper]; ``value`` is the midpoint and
    ``bound`` half the bracket width.  ``lipschitz_bound`` is the a priori
    estimate (rows + cols) * max|A| / grid_n.
    """
    A = _as_matrix(A)
    m, n = A.shape
    npts = comb(grid_n + m - 1, m - 1) + comb(grid_n + n - 1, n - 1)
    if max(m, n) > 4 or npts > ORACLE_MAX_POINTS:
        raise ValueError(f"oracle grid too large for shape {A.shape} at grid_n={grid_n}")
    X = simplex_grid(m, grid_n)
    Y = simplex_grid(n, grid_n)
    lower = float((X @ A).min(axis=1).max())
    upper = float((A @ Y.T).max(axis=0).min())
    lip = (m + n) * float(np.abs(A).max()) / grid_n
    return OracleValue(0.5 * (lower + upper), 0.5 * (upper - lower), lower, upper, lip)
