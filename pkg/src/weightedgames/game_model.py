"""Finite zero-sum stochastic games, value vectors, and the test corpus."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
import scipy.sparse as sp

PROB_TOL = 1e-12
# Games with more states than this serialize transitions as sparse triplets.
DENSE_JSON_MAX_STATES = 200


class GameValidationError(ValueError):
    def __init__(self, issues: list[str]):
        self.issues = issues
        shown = "; ".join(issues[:10])
        more = f" (+{len(issues) - 10} more)" if len(issues) > 10 else ""
        super().__init__(f"invalid game: {shown}{more}")


@dataclass(frozen=True, eq=False)
class GameSpec:
    """Payoff g[k, i, j] to player 1 and transitions q[k, i, j, k'].

    Transitions are held as a sparse matrix with one row per (k, i, j), in
    C order, and one column per next state.
    """

    payoff: np.ndarray
    transition: sp.csr_matrix
    states: tuple[str, ...]
    name: str = ""
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        payoff = np.array(self.payoff, dtype=float)
        if payoff.ndim != 3:
            raise GameValidationError([f"payoff must be 3-d (K, I, J), got shape {payoff.shape}"])
        payoff.setflags(write=False)
        object.__setattr__(self, "payoff", payoff)
        object.__setattr__(self, "transition", sp.csr_matrix(self.transition, dtype=float))
        object.__setattr__(self, "states", tuple(str(s) for s in self.states))

    @classmethod
    def from_arrays(cls, payoff, transition, states=None, name="", meta=None) -> "GameSpec":
        payoff = np.asarray(payoff, dtype=float)
        q = np.asarray(transition, dtype=float)
        nK = payoff.shape[0]
        if states is None:
            states = [str(k) for k in range(nK)]
        return cls(payoff, sp.csr_matrix(q.reshape(-1, q.shape[-1])), tuple(states), name, meta or {})

    @property
    def nK(self) -> int:
        return self.payoff.shape[0]

    @property
    def nI(self) -> int:
        return self.payoff.shape[1]

    @property
    def nJ(self) -> int:
        return self.payoff.shape[2]

    @property
    def C(self) -> float:
        """Payoff bound max |g|."""
        return float(np.abs(self.payoff).max())

    def transition_dense(self) -> np.ndarray:
        return self.transition.toarray().reshape(self.nK, self.nI, self.nJ, self.nK)

    def continuation(self, f) -> np.ndarray:
        """E[f(k')] for every (k, i, j), shape (K, I, J)."""
        return (self.transition @ np.asarray(f, dtype=float)).reshape(self.payoff.shape)

    def to_dict(self) -> dict:
        d = {
            "name": self.name,
            "states": list(self.states),
            "nI": self.nI,
            "nJ": self.nJ,
            "payoff": self.payoff.tolist(),
        }
        if self.nK <= DENSE_JSON_MAX_STATES:
            d["transition"] = self.transition_dense().tolist()
        else:
            coo = self.transition.tocoo()
            order = np.lexsort((coo.col, coo.row))
            d["transition_sparse"] = {
                "rows": coo.row[order].tolist(),
                "cols": coo.col[order].tolist(),
                "probs": coo.data[order].tolist(),
            }
        if self.meta:
            d["meta"] = self.meta
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "GameSpec":
        payoff = np.asarray(d["payoff"], dtype=float)
        if payoff.ndim != 3 or payoff.shape[1:] != (d["nI"], d["nJ"]):
            raise GameValidationError([f"payoff shape {payoff.shape} does not match nI={d['nI']}, nJ={d['nJ']}"])
        nK = payoff.shape[0]
        if "transition" in d:
            q = np.asarray(d["transition"], dtype=float)
            if q.shape != (nK, d["nI"], d["nJ"], nK):
                raise GameValidationError([f"transition shape {q.shape} does not match the payoff"])
            T = sp.csr_matrix(q.reshape(-1, nK))
        else:
            s = d["transition_sparse"]
            T = sp.csr_matrix((s["probs"], (s["rows"], s["cols"])), shape=(payoff.size, nK))
        return cls(payoff, T, tuple(d["states"]), d.get("name", ""), d.get("meta", {}))


@dataclass(frozen=True, eq=False)
class ValueFunction:
    """A vector over states plus a guaranteed sup-norm error to the exact target."""

    values: np.ndarray
    error_bound: float = 0.0

    def __post_init__(self):
        v = np.array(self.values, dtype=float).reshape(-1)
        v.setflags(write=False)
        object.__setattr__(self, "values", v)
        object.__setattr__(self, "error_bound", float(self.error_bound))
        if self.error_bound < 0:
            raise ValueError("error bound must be nonnegative")
        if not np.all(np.isfinite(v)):
            raise ValueError("value vector has non-finite entries")

    def __len__(self):
        return self.values.size

    def __getitem__(self, k):
        return self.values[k]

    def norm(self) -> float:
        return float(np.abs(self.values).max()) if self.values.size else 0.0


def as_value_function(f) -> ValueFunction:
    return f if isinstance(f, ValueFunction) else ValueFunction(f)


def check_mixed_action(p, n: int) -> np.ndarray:
    p = np.asarray(p, dtype=float)
    if p.shape != (n,):
        raise ValueError(f"mixed action of shape {p.shape} over {n} actions")
    if not np.all(np.isfinite(p)) or p.min() < 0 or abs(p.sum() - 1) > PROB_TOL:
        raise ValueError(f"not a probability vector: {p}")
    return p


def validate(spec: GameSpec) -> GameSpec:
    """Return ``spec`` unchanged or raise GameValidationError listing every bad cell."""
    issues = []
    nK, nI, nJ = spec.payoff.shape
    if len(spec.states) != nK:
        issues.append(f"{len(spec.states)} state labels for {nK} states")
    T = spec.transition
    if T.shape != (nK * nI * nJ, nK):
        issues.append(f"transition matrix shape {T.shape}, expected {(nK * nI * nJ, nK)}")
        raise GameValidationError(issues)

    def where(row):
        k, rest = divmod(int(row), nI * nJ)
        i, j = divmod(rest, nJ)
        return f"(k={spec.states[k] if k < len(spec.states) else k}, i={i}, j={j})"

    for k, i, j in zip(*np.nonzero(~np.isfinite(spec.payoff))):
        issues.append(f"payoff at (k={spec.states[k]}, i={i}, j={j}) is {spec.payoff[k, i, j]}")
    coo = T.tocoo()
    bad = ~np.isfinite(coo.data)
    for r, c in zip(coo.row[bad], coo.col[bad]):
        issues.append(f"transition {where(r)} -> {c} is not finite")
    neg = coo.data < 0
    for r, c, v in zip(coo.row[neg], coo.col[neg], coo.data[neg]):
        issues.append(f"negative probability {v} at {where(r)} -> {spec.states[c]}")
    sums = np.asarray(T.sum(axis=1)).ravel()
    for r in np.flatnonzero(~(np.abs(sums - 1) <= PROB_TOL)):
        issues.append(f"transition row {where(r)} sums to {sums[r]!r}")
    if issues:
        raise GameValidationError(issues)
    return spec


def expected_payoff(spec: GameSpec, k: int, x, y) -> float:
    """g(k, x, y) = sum_ij x_i y_j g[k, i, j]."""
    if not 0 <= k < spec.nK:
        raise IndexError(f"state {k} out of range")
    x = check_mixed_action(x, spec.nI)
    y = check_mixed_action(y, spec.nJ)
    return float(x @ spec.payoff[k] @ y)


def expected_next(spec: GameSpec, k: int, x, y, f) -> float:
    """E^k_{x,y}(f): expected value of f at the next state."""
    if not 0 <= k < spec.nK:
        raise IndexError(f"state {k} out of range")
    f = as_value_function(f).values
    if f.size != spec.nK:
        raise ValueError(f"value vector of length {f.size} for {spec.nK} states")
    x = check_mixed_action(x, spec.nI)
    y = check_mixed_action(y, spec.nJ)
    rows = spec.transition[k * spec.nI * spec.nJ:(k + 1) * spec.nI * spec.nJ]
    return float(x @ (rows @ f).reshape(spec.nI, spec.nJ) @ y)


# ---------------------------------------------------------------- example in which weighted values fail to converge

def survival_function(family: str | dict | Callable = "triple_log", **params) -> Callable:
    """Absorption probability phi(m) when quitting from count m.

    Families: ``triple_log`` 1/ln ln ln(m + M0); ``log`` min(1, c/ln(m + m0));
    ``constant`` p; ``zero``.
    """
    if callable(family):
        return family
    if isinstance(family, dict):
        params = {**{k: v for k, v in family.items() if k != "family"}, **params}
        family = family["family"]
    if family == "triple_log":
        M0 = float(params.get("M0", 1e7))
        return lambda m: 1.0 / np.log(np.log(np.log(np.asarray(m, dtype=float) + M0)))
    if family == "log":
        c, m0 = float(params["c"]), float(params.get("m0", 1.0))
        return lambda m: np.minimum(1.0, c / np.log(np.asarray(m, dtype=float) + m0))
    if family == "constant":
        p = float(params["p"])
        return lambda m: np.full(np.shape(m), p)
    if family == "zero":
        return lambda m: np.zeros(np.shape(m))
    raise ValueError(f"unknown survival family {family!r}")


def counterexample_index(max_count: int, state) -> int:
    """Index of (0, m), (1, m) or '0*' in counterexample_mdp."""
    if state == "0*":
        return 2 * max_count
    side, m = state
    if not 1 <= m <= max_count or side not in (0, 1):
        raise IndexError(f"no state {state!r} with max_count={max_count}")
    return (m - 1) + side * max_count


def counterexample_mdp(max_count: int, survival="triple_log", M0: float = 1e7, **family_params) -> GameSpec:
    """One-player game: wait (C) to raise a counter, then quit (Q) for a long run of payoff 1.

    From (0, m), C moves to (0, m+1) and Q is absorbed in 0* with
    probability phi(m), otherwise jumps to (1, m**2).  States (1, m) pay 1
    and count down to (0, 1).  Counters saturate at ``max_count``.
    """
    if max_count < 2:
        raise ValueError("max_count must be >= 2")
    if isinstance(survival, str) and survival == "triple_log":
        if M0 < 3:
            raise ValueError("M0 must be >= 3")
        family_params.setdefault("M0", M0)
    phi = survival_function(survival, **family_params)
    c = max_count
    ms = np.arange(1, c + 1)
    absorb = np.asarray(phi(ms), dtype=float)
    if not np.all(np.isfinite(absorb)) or absorb.min() < 0 or absorb.max() > 1:
        badm = int(ms[~((absorb >= 0) & (absorb <= 1))][0])
        raise ValueError(f"absorption probability phi({badm}) = {float(phi(badm))!r} is outside [0,1]")
    nK = 2 * c + 1
    star = 2 * c
    rows, cols, probs = [], [], []

    def add(k, i, target, p):
        rows.append(k * 2 + i)
        cols.append(target)
        probs.append(p)

    for m in range(1, c + 1):
        k0 = m - 1
        add(k0, 0, min(m + 1, c) - 1, 1.0)  # C
        jump = c + min(m * m, c) - 1
        if absorb[m - 1] > 0:
            add(k0, 1, star, absorb[m - 1])
        if absorb[m - 1] < 1:
            add(k0, 1, jump, 1.0 - absorb[m - 1])
        k1 = c + m - 1
        nxt = 0 if m == 1 else c + m - 2
        add(k1, 0, nxt, 1.0)
        add(k1, 1, nxt, 1.0)
    add(star, 0, star, 1.0)
    add(star, 1, star, 1.0)
    T = sp.csr_matrix((probs, (rows, cols)), shape=(2 * nK, nK))
    payoff = np.zeros((nK, 2, 1))
    payoff[c:2 * c] = 1.0
    states = [f"(0,{m})" for m in ms] + [f"(1,{m})" for m in ms] + ["0*"]
    meta = {"kind": "counterexample", "max_count": c}
    return validate(GameSpec(payoff, T, tuple(states), "counterexample", meta))


def certify_counterexample_cap(spec: GameSpec, horizon: int, start=(0, 1)) -> dict:
    """Track reachable supports for ``horizon`` stages and classify saturated transitions.

    A C-move out of (0, max_count) is never harmless.  A Q-move whose counter
    m**2 is cut to max_count is harmless when max_count covers every stage
    still to be played, since both counters then pay 1 until the end.
    """
    c = spec.meta["max_count"]
    reach = np.zeros(spec.nK, dtype=bool)
    reach[counterexample_index(c, start)] = True
    union = (spec.transition[0::2] + spec.transition[1::2]).T.tocsr()
    c_cap_stage = None
    q_cap_events = 0
    q_cap_harmful = 0
    for t in range(1, horizon + 1):
        zeros = np.flatnonzero(reach[:c]) + 1  # counters m of reachable (0, m)
        if c_cap_stage is None and zeros.size and zeros.max() >= c:
            c_cap_stage = t
        capped = zeros[zeros * zeros > c]
        if capped.size:
            q_cap_events += int(capped.size)
            if c < horizon - t:
                q_cap_harmful += int(capped.size)
        reach = (union @ reach.astype(float)) > 0
    return {
        "horizon": int(horizon),
        "max_count": int(c),
        "c_cap_stage": c_cap_stage,
        "q_cap_events": q_cap_events,
        "q_cap_harmful": q_cap_harmful,
        "cap_unreachable": c_cap_stage is None and q_cap_events == 0,
        "exact": c_cap_stage is None and q_cap_harmful == 0,
    }


# ---------------------------------------------------------------- corpus

def _cycle2() -> GameSpec:
    payoff = np.array([[[0.0]], [[1.0]]])
    q = np.zeros((2, 1, 1, 2))
    q[0, 0, 0, 1] = 1.0
    q[1, 0, 0, 0] = 1.0
    return GameSpec.from_arrays(payoff, q, ("A", "B"), "cycle2")


def _big_match() -> GameSpec:
    """Top ends the game (1 against Left, 0 against Right); Bottom continues."""
    payoff = np.zeros((3, 2, 2))
    payoff[0] = [[1.0, 0.0], [0.0, 1.0]]
    payoff[1] = 1.0
    q = np.zeros((3, 2, 2, 3))
    q[0, 0, 0, 1] = 1.0
    q[0, 0, 1, 2] = 1.0
    q[0, 1, :, 0] = 1.0
    q[1, :, :, 1] = 1.0
    q[2, :, :, 2] = 1.0
    return GameSpec.from_arrays(payoff, q, ("active", "absorbed1", "absorbed0"), "big_match")


def _absorbing(c: float = 1.0) -> GameSpec:
    return GameSpec.from_arrays(np.full((1, 1, 1), float(c)), np.ones((1, 1, 1, 1)), ("absorbed",), "absorbing")


def _matching_pennies() -> GameSpec:
    payoff = np.array([[[1.0, -1.0], [-1.0, 1.0]]])
    return GameSpec.from_arrays(payoff, np.ones((1, 2, 2, 1)), ("s",), "matching_pennies")


def random_game(seed: int, nK: int, nI: int, nJ: int) -> GameSpec:
    """Payoffs uniform on [-1, 1], transition rows drawn from a flat Dirichlet."""
    rng = np.random.default_rng(seed)
    payoff = rng.uniform(-1.0, 1.0, size=(nK, nI, nJ))
    q = rng.dirichlet(np.ones(nK), size=(nK, nI, nJ))
    q /= q.sum(axis=-1, keepdims=True)
    name = f"random:{seed}:{nK}:{nI}:{nJ}"
    return GameSpec.from_arrays(payoff, q, None, name, {"seed": seed})


CORPUS = ("cycle2", "big_match", "absorbing", "matching_pennies", "random", "counterexample")


def corpus(name: str, **params) -> GameSpec:
    """Named test games; ``random:seed:nK:nI:nJ`` is accepted as a name."""
    if name.startswith("random:"):
        seed, nK, nI, nJ = (int(x) for x in name.split(":")[1:])
        return validate(random_game(seed, nK, nI, nJ))
    if name == "cycle2":
        return validate(_cycle2())
    if name == "big_match":
        return validate(_big_match())
    if name == "absorbing":
        return validate(_absorbing(params.get("c", 1.0)))
    if name == "matching_pennies":
        return validate(_matching_pennies())
    if name == "random":
        return validate(random_game(params.get("seed", 0), params.get("nK", 3), params.get("nI", 2), params.get("nJ", 2)))
    if name == "counterexample":
        return counterexample_mdp(**params)
    raise KeyError(f"unknown corpus game {name!r}; known: {', '.join(CORPUS)}")
