"""Stage-weight evaluations and their algebra.

An evaluation is a probability distribution over stages 1, 2, ... (or the
all-zero sequence).  It is stored as a finite head of explicit weights
followed by an optional geometric tail, which represents the n-stage,
discounted, piecewise-constant and piecewise-discounted families exactly.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import NamedTuple, Sequence

import numpy as np

MASS_TOL = 1e-12
# Hard cap on materialized heads (about 400 MB of float64).
MAX_HEAD = 50_000_000


class InvalidEvaluation(ValueError):
    """Weights are negative, non-finite, or do not sum to 0 or 1."""


class PreconditionError(ValueError):
    """An operation's input falls outside its domain."""


@dataclass(frozen=True, eq=False)
class Evaluation:
    """Weights ``head[0..H-1]`` for stages 1..H, then ``a * rho**(m-1)`` for stage H+m.

    ``tail`` is ``None`` for finite support.  Total mass is 1, or 0 for the
    zero evaluation.
    """

    head: np.ndarray
    tail: tuple[float, float] | None = None

    def __post_init__(self):
        head = np.array(self.head, dtype=float).reshape(-1)
        head.setflags(write=False)
        object.__setattr__(self, "head", head)
        if not np.all(np.isfinite(head)):
            raise InvalidEvaluation("non-finite weight in head")
        if head.size and head.min() < 0:
            raise InvalidEvaluation(f"negative weight {head.min()!r} in head")
        tail = self.tail
        if tail is not None:
            a, rho = float(tail[0]), float(tail[1])
            if not (math.isfinite(a) and a >= 0):
                raise InvalidEvaluation(f"tail coefficient must be >= 0, got {a!r}")
            if not 0 <= rho < 1:
                raise InvalidEvaluation(f"tail ratio must lie in [0,1), got {rho!r}")
            tail = None if a == 0 else (a, rho)
            object.__setattr__(self, "tail", tail)
        mass = self.mass
        if not (abs(mass - 1) <= MASS_TOL or abs(mass) <= MASS_TOL):
            raise InvalidEvaluation(f"total mass is {mass!r}, expected 0 or 1")

    @property
    def horizon(self) -> int:
        """Length of the explicit head."""
        return int(self.head.size)

    @property
    def mass(self) -> float:
        return float(self.head.sum()) + self._tail_total()

    @property
    def is_zero(self) -> bool:
        return self.tail is None and not np.any(self.head)

    @property
    def support_end(self) -> int | None:
        """Last stage with positive weight, ``None`` for infinite support."""
        if self.tail is not None:
            return None
        nz = np.flatnonzero(self.head)
        return int(nz[-1]) + 1 if nz.size else 0

    def _tail_total(self) -> float:
        if self.tail is None:
            return 0.0
        a, rho = self.tail
        return a / (1 - rho)

    def weight(self, m: int) -> float:
        if m < 1:
            raise IndexError("stages start at 1")
        if m <= self.horizon:
            return float(self.head[m - 1])
        if self.tail is None:
            return 0.0
        a, rho = self.tail
        return a * rho ** (m - self.horizon - 1)

    def weights(self, n: int, start: int = 1) -> np.ndarray:
        """Weights of stages ``start .. start+n-1`` as an array."""
        if start < 1:
            raise IndexError("stages start at 1")
        out = np.zeros(n)
        stop = start + n - 1
        if start <= self.horizon:
            k = min(stop, self.horizon) - start + 1
            out[:k] = self.head[start - 1:start - 1 + k]
        if self.tail is not None and stop > self.horizon:
            a, rho = self.tail
            first = max(start, self.horizon + 1)
            exps = np.arange(first - self.horizon - 1, stop - self.horizon)
            out[first - start:] = a * rho ** exps
        return out

    def __eq__(self, other):
        """Exact equality of the stored representation."""
        if not isinstance(other, Evaluation):
            return NotImplemented
        return self.tail == other.tail and np.array_equal(self.head, other.head)

    def __hash__(self):
        return hash((self.head.tobytes(), self.tail))

    def __repr__(self):
        tail = "" if self.tail is None else f", tail=(a={self.tail[0]:.6g}, rho={self.tail[1]:.6g})"
        if self.horizon <= 6:
            head = ", ".join(f"{w:.6g}" for w in self.head)
        else:
            head = f"{self.head[0]:.6g}, ..., {self.head[-1]:.6g} ({self.horizon} weights)"
        return f"Evaluation(head=[{head}]{tail})"

    # serialization
    def to_dict(self) -> dict:
        tail = None if self.tail is None else {"a": self.tail[0], "rho": self.tail[1]}
        return {"head": [float(w) for w in self.head], "tail": tail}


ZERO = Evaluation(np.zeros(0))


def _check_head_size(n: int) -> None:
    if n > MAX_HEAD:
        raise PreconditionError(f"evaluation head of {n} stages exceeds MAX_HEAD={MAX_HEAD}")


# ---------------------------------------------------------------- families

def make_n_stage(n: int) -> Evaluation:
    """Uniform weight 1/n on stages 1..n."""
    if int(n) != n or n < 1:
        raise PreconditionError(f"n must be a positive integer, got {n!r}")
    n = int(n)
    _check_head_size(n)
    return Evaluation(np.full(n, 1.0 / n))


def make_discounted(lam: float) -> Evaluation:
    """Weights lam * (1-lam)**(m-1)."""
    lam = float(lam)
    if not 0 < lam <= 1:
        raise PreconditionError(f"discount factor must lie in (0,1], got {lam!r}")
    return Evaluation(np.zeros(0), (lam, 1.0 - lam))


def make_piecewise_constant(levels: Sequence[float], breakpoints: Sequence[int]) -> Evaluation:
    """Level ``levels[p]`` on stages ``breakpoints[p] .. breakpoints[p+1]-1``, zero afterwards."""
    levels = [float(x) for x in levels]
    bps = [int(b) for b in breakpoints]
    if len(bps) != len(levels) + 1 or not levels:
        raise PreconditionError("need len(breakpoints) == len(levels) + 1 >= 2")
    if bps[0] != 1:
        raise PreconditionError("first breakpoint must be stage 1")
    if any(b2 <= b1 for b1, b2 in zip(bps, bps[1:])):
        raise PreconditionError(f"breakpoints must be strictly increasing, got {bps}")
    if min(levels) < 0:
        raise PreconditionError("levels must be nonnegative")
    _check_head_size(bps[-1] - 1)
    head = np.repeat(levels, np.diff(bps))
    mass = float(head.sum())
    if abs(mass - 1) > MASS_TOL:
        raise InvalidEvaluation(f"piecewise-constant weights have mass {mass!r}, expected 1")
    return Evaluation(head)


def make_piecewise_discounted(pieces: Sequence[tuple[float, float, int]]) -> Evaluation:
    """Pieces ``(a, lam, start)``: weight ``a*(1-lam)**(m-start)`` from ``start`` on.

    Every piece but the last ends where the next one starts; the last piece
    becomes the geometric tail.
    """
    pieces = [(float(a), float(lam), int(s)) for a, lam, s in pieces]
    if not pieces:
        raise PreconditionError("need at least one piece")
    starts = [s for _, _, s in pieces]
    if starts[0] != 1 or any(s2 <= s1 for s1, s2 in zip(starts, starts[1:])):
        raise PreconditionError(f"piece starts must increase strictly from 1, got {starts}")
    for a, lam, _ in pieces:
        if a < 0 or not 0 <= lam <= 1:
            raise PreconditionError(f"bad piece coefficients a={a!r}, lam={lam!r}")
    _check_head_size(starts[-1] - 1)
    chunks = []
    for (a, lam, s), (_, _, s_next) in zip(pieces, pieces[1:]):
        chunks.append(a * (1 - lam) ** np.arange(s_next - s))
    head = np.concatenate(chunks) if chunks else np.zeros(0)
    a, lam, _ = pieces[-1]
    if a > 0 and lam == 0:
        raise InvalidEvaluation("last piece with lam=0 has infinite mass")
    tail = (a, 1 - lam) if a > 0 else None
    mass = float(head.sum()) + (a / lam if a > 0 else 0.0)
    if abs(mass - 1) > MASS_TOL:
        raise InvalidEvaluation(f"piecewise-discounted weights have mass {mass!r}, expected 1")
    return Evaluation(head, tail)


def from_dict(d: dict) -> Evaluation:
    """Build an evaluation from its JSON form or a constructor descriptor."""
    kind = d.get("kind")
    if kind is None:
        unknown = set(d) - {"head", "tail", "label"}
        if unknown:
            raise PreconditionError(f"unknown evaluation keys {sorted(unknown)}; expected head/tail or kind")
        tail = d.get("tail")
        return Evaluation(d.get("head", []), None if tail is None else (tail["a"], tail["rho"]))
    if kind == "n_stage":
        return make_n_stage(d["n"])
    if kind == "discounted":
        return make_discounted(d["lambda"])
    if kind == "pwc":
        return make_piecewise_constant(d["levels"], d["breakpoints"])
    if kind == "pwd":
        return make_piecewise_discounted([tuple(p) for p in d["pieces"]])
    raise PreconditionError(f"unknown evaluation kind {kind!r}")


# ---------------------------------------------------------------- algebra

def tail_mass(theta: Evaluation, r: int) -> float:
    """Remaining mass sum_{m >= r} theta_m."""
    if r < 1:
        raise IndexError("stages start at 1")
    H = theta.horizon
    if r <= H:
        # summing the small end first keeps relative precision for tiny tails
        return float(np.sum(theta.head[r - 1:][::-1])) + theta._tail_total()
    if theta.tail is None:
        return 0.0
    a, rho = theta.tail
    return a * rho ** (r - H - 1) / (1 - rho)


def tail_masses(theta: Evaluation, n: int) -> np.ndarray:
    """Vector of ``tail_mass(theta, r)`` for r = 1..n."""
    H = theta.horizon
    out = np.empty(n)
    tot = theta._tail_total()
    k = min(n, H)
    if k:
        suffix = np.cumsum(theta.head[::-1])[::-1] + tot
        out[:k] = suffix[:k]
    if n > H:
        if theta.tail is None:
            out[H:] = 0.0
        else:
            a, rho = theta.tail
            out[H:] = a * rho ** np.arange(n - H) / (1 - rho)
    return out


def r_shift(theta: Evaluation, r: int) -> Evaluation:
    """The evaluation seen from stage r on, renormalized; zero once mass is exhausted."""
    if r < 1:
        raise PreconditionError("r must be >= 1")
    if r == 1:
        return theta
    H = theta.horizon
    if H == 0 and theta.tail is not None:
        # a normalized pure geometric sequence is its own shift
        a, rho = theta.tail
        return ZERO if rho == 0 else theta
    remaining = tail_mass(theta, r)
    if remaining <= 0:
        return ZERO
    if r > H:
        rho = theta.tail[1]
        return Evaluation(np.zeros(0), (1 - rho, rho))
    head = theta.head[r - 1:] / remaining
    tail = None if theta.tail is None else (theta.tail[0] / remaining, theta.tail[1])
    return Evaluation(head, tail)


def shift(theta: Evaluation) -> Evaluation:
    """One-step shift; zero when all mass sits on stage 1 (and for the zero evaluation)."""
    return r_shift(theta, 2)


def stage_discount(theta: Evaluation, m: int) -> float:
    """Relative weight theta_m / sum_{m' >= m} theta_m', or 0 when theta_m = 0."""
    w = theta.weight(m)
    if w == 0:
        return 0.0
    if m > theta.horizon:
        return 1.0 - theta.tail[1]
    return min(1.0, w / tail_mass(theta, m))


def stage_discounts(theta: Evaluation, n: int) -> np.ndarray:
    """``stage_discount(theta, m)`` for m = 1..n."""
    w = theta.weights(n)
    pi = tail_masses(theta, n)
    out = np.zeros(n)
    pos = w > 0
    out[pos] = np.minimum(1.0, w[pos] / pi[pos])
    H = theta.horizon
    if theta.tail is not None and n > H:
        out[H:] = np.where(w[H:] > 0, 1.0 - theta.tail[1], 0.0)
    return out


def sup_weight(theta: Evaluation) -> float:
    head_max = float(theta.head.max()) if theta.horizon else 0.0
    tail_first = theta.tail[0] if theta.tail is not None else 0.0
    return max(head_max, tail_first)


def _geom_abs_diff(a1: float, r1: float, a2: float, r2: float) -> float:
    """Closed form of sum_{k>=0} |a1 r1^k - a2 r2^k| (a_i >= 0, r_i in [0,1))."""
    if a1 == 0 or a2 == 0:
        return a1 / (1 - r1) + a2 / (1 - r2)
    if r1 == r2:
        return abs(a1 - a2) / (1 - r1)
    if r1 == 0 or r2 == 0:
        return abs(a1 - a2) + _geom_abs_diff(a1 * r1, r1, a2 * r2, r2)

    def d(k):
        return a1 * r1 ** k - a2 * r2 ** k

    s0 = math.copysign(1.0, d(0)) if d(0) != 0 else (1.0 if r1 > r2 else -1.0)
    # the ratio a1 r1^k / (a2 r2^k) is monotone in k, so d changes sign at most once
    crossing = math.log(a2 / a1) / math.log(r1 / r2)
    if not (math.isfinite(crossing) and crossing > 0):
        return s0 * (a1 / (1 - r1) - a2 / (1 - r2))
    # K = first k whose term has left the initial sign
    K = int(math.ceil(crossing))
    while K > 0 and s0 * d(K - 1) <= 0:
        K -= 1
    while s0 * d(K) > 0:
        K += 1
    head1 = a1 * (1 - r1 ** K) / (1 - r1)
    head2 = a2 * (1 - r2 ** K) / (1 - r2)
    tail1 = a1 * r1 ** K / (1 - r1)
    tail2 = a2 * r2 ** K / (1 - r2)
    return s0 * (head1 - head2) - s0 * (tail1 - tail2)


def l1_distance(theta: Evaluation, other: Evaluation) -> float:
    """sum_m |theta_m - other_m|, exact up to rounding (geometric tails in closed form)."""
    L = max(theta.horizon, other.horizon)
    explicit = float(np.abs(theta.weights(L) - other.weights(L)).sum()) if L else 0.0

    def rebased(ev):
        if ev.tail is None:
            return 0.0, 0.0
        a, rho = ev.tail
        return a * rho ** (L - ev.horizon), rho

    a1, r1 = rebased(theta)
    a2, r2 = rebased(other)
    return explicit + _geom_abs_diff(a1, r1, a2, r2)


# ---------------------------------------------------------------- piecewise-constant approximation

class PwcApproximation(NamedTuple):
    evaluation: Evaluation
    bound: float
    eps: float
    pieces: int
    case: str


def approx_discounted_by_pwc(lam: float, eps: float) -> PwcApproximation:
    """Piecewise-constant evaluation with at most eps**-3 pieces within eps of theta(lam).

    ``eps`` is rounded down to 1/ceil(1/eps).  Large discount factors are
    truncated after eps**-3 stages with the remaining mass lumped on the
    last stage; small ones are approximated by constant blocks of length
    floor(eps**2/lam) holding the block's average weight.
    """
    lam = float(lam)
    if not 0 < eps <= 0.1:
        raise PreconditionError(f"eps must lie in (0, 1/10], got {eps!r}")
    if not 0 < lam <= 1:
        raise PreconditionError(f"discount factor must lie in (0,1], got {lam!r}")
    N = math.ceil(1 / eps - 1e-9)
    eps_used = 1.0 / N
    p = N ** 3
    if lam == 1:
        return PwcApproximation(Evaluation([1.0]), 0.0, eps_used, 1, "dirac")
    if lam >= eps_used ** 2:
        head = lam * (1 - lam) ** np.arange(p)
        head[p - 1] = (1 - lam) ** (p - 1)
        bound = 2 * (1 - lam) ** (p - 1)
        return PwcApproximation(Evaluation(head), bound, eps_used, p, "truncate")
    # relative slack so that e.g. 0.01/1e-5 floors to 1000 despite binary rounding
    L = int(math.floor(eps_used ** 2 / lam * (1 + 1e-12)))
    nblocks = p - 1
    _check_head_size(nblocks * L + 1)
    q = 1 - lam
    starts = np.arange(nblocks) * L  # zero-based stage offsets of block starts
    block_mass = q ** starts * (1 - q ** L)
    head = np.repeat(block_mass / L, L)
    lump = max(0.0, 1.0 - float(head.sum()))
    head = np.append(head, lump)
    start_weights = lam * q ** starts
    spread = 1 - q ** (L - 1)
    bound = spread * L * float(start_weights.sum()) + 2 * q ** (nblocks * L)
    return PwcApproximation(Evaluation(head), bound, eps_used, p, "blocks")


# ---------------------------------------------------------------- distance to piecewise-constant families

def _allocate_levels(segments: list[np.ndarray]) -> tuple[float, np.ndarray]:
    """Best constant levels on segments so that the induced mass is exactly 1.

    Minimizes sum_s sum_{m in s} |theta_m - a_s| subject to sum_s len_s a_s = 1,
    a_s >= 0.  The objective is separable, convex and piecewise linear in the
    segment masses, so filling mass greedily by increasing marginal cost is
    exact.  Returns (cost, levels).
    """
    rates, caps, owners = [], [], []
    base = 0.0
    for s, seg in enumerate(segments):
        v = np.sort(seg)
        L = v.size
        base += float(v.sum())
        lo = np.concatenate(([0.0], v))
        hi = np.concatenate((v, [np.inf]))
        j = np.arange(L + 1)
        rates.append((2 * j - L) / L)
        caps.append(L * (hi - lo))
        owners.append(np.full(L + 1, s))
    rates = np.concatenate(rates)
    caps = np.concatenate(caps)
    owners = np.concatenate(owners)
    order = np.lexsort((owners, rates))
    rates, caps, owners = rates[order], caps[order], owners[order]
    before = np.concatenate(([0.0], np.cumsum(caps)[:-1]))
    take = np.clip(1.0 - before, 0.0, caps)
    cost = base + float(np.dot(take[take > 0], rates[take > 0]))
    filled = np.bincount(owners, weights=take, minlength=len(segments))
    lengths = np.array([seg.size for seg in segments], dtype=float)
    return cost, filled / lengths


def distance_to_pwc(theta: Evaluation, p: int, mode: str = "upper-bound") -> float:
    """Distance from theta to the set of p-piecewise-constant evaluations.

    ``exact-tiny`` enumerates every breakpoint placement (finite support of at
    most 20 stages, p <= 4) and solves the level allocation exactly.
    ``upper-bound`` returns the exact distance to the candidate built by
    ``pwc_upper_bound_fit``, or the exact value when the support is that small.
    """
    if p < 1:
        raise PreconditionError("p must be >= 1")
    if theta.is_zero:
        return 1.0
    if mode not in ("exact-tiny", "upper-bound"):
        raise PreconditionError(f"unknown mode {mode!r}")
    end = theta.support_end
    tiny = end is not None and end <= 20 and p <= 4
    if mode == "exact-tiny" and not tiny:
        raise PreconditionError("exact-tiny mode needs finite support of <= 20 stages and p <= 4")
    if tiny:
        w = theta.head[:end]
        suffix = np.concatenate((np.cumsum(w[::-1])[::-1], [0.0]))
        best = math.inf
        for q in range(1, p + 1):
            for cuts in itertools.combinations(range(1, end + 1), q):
                bounds = (0,) + cuts
                segs = [w[b0:b1] for b0, b1 in zip(bounds, bounds[1:])]
                cost, _ = _allocate_levels(segs)
                best = min(best, cost + float(suffix[cuts[-1]]))
        return max(best, 0.0)
    approx = pwc_upper_bound_fit(theta, p)
    return l1_distance(theta, approx)


def _cut_cost(w: np.ndarray, suffix: np.ndarray, cuts: tuple) -> float:
    bounds = (0,) + cuts
    cost, _ = _allocate_levels([w[b0:b1] for b0, b1 in zip(bounds, bounds[1:])])
    return cost + float(suffix[cuts[-1]])


def _local_cut_search(w: np.ndarray, suffix: np.ndarray, cuts: tuple, max_rounds: int = 60) -> tuple:
    """Move one cut at a time by relative steps while the fitted cost drops."""
    end = w.size
    best = _cut_cost(w, suffix, cuts)
    factors = (0.5, 0.7, 0.85, 0.95, 1.05, 1.2, 1.4, 2.0)
    for _ in range(max_rounds):
        improved = False
        for i in range(len(cuts)):
            lo = cuts[i - 1] + 1 if i else 1
            hi = cuts[i + 1] - 1 if i + 1 < len(cuts) else end
            moves = {min(max(int(round(cuts[i] * f)), lo), hi) for f in factors}
            moves |= {min(max(cuts[i] + d, lo), hi) for d in (-1, 1)}
            for c in sorted(moves - {cuts[i]}):
                cand = cuts[:i] + (c,) + cuts[i + 1:]
                cost = _cut_cost(w, suffix, cand)
                if cost < best - 1e-15:
                    best, cuts, improved = cost, cand, True
        if not improved:
            break
    return cuts


def pwc_upper_bound_fit(theta: Evaluation, p: int) -> Evaluation:
    """A feasible p-piecewise-constant evaluation close to theta in l1.

    Starting from equal-mass cuts of several truncations, the cut positions
    are improved by a deterministic local search; levels on every piece are
    the exact optimum for the chosen cuts.
    """
    end = theta.support_end
    if end is None:
        # truncate where the geometric tail carries negligible mass
        a, rho = theta.tail
        extra = 0
        if rho > 0:
            extra = max(0, math.ceil(math.log(1e-14 * (1 - rho) / a) / math.log(rho)))
        end = theta.horizon + extra + 1
    _check_head_size(end)
    w = theta.weights(end)
    cum = np.cumsum(w)
    suffix = np.concatenate(([cum[-1]], cum[-1] - cum))
    best = None
    for q in range(1, p + 1):
        for keep in (0.5, 0.8, 0.95, 0.999, 1.0):
            last = min(int(np.searchsorted(cum, keep * cum[-1] * (1 - 1e-12))) + 1, end)
            if last < q:
                continue
            inner = [int(np.searchsorted(cum, k / q * cum[last - 1])) + 1 for k in range(1, q)]
            cuts = tuple(sorted(set(min(max(c, 1), last - 1) for c in inner) | {last}))
            cuts = _local_cut_search(w, suffix, cuts)
            cost = _cut_cost(w, suffix, cuts)
            if best is None or cost < best[0] - 1e-15:
                best = (cost, cuts)
    cuts = best[1]
    bounds = (0,) + cuts
    segs = [w[b0:b1] for b0, b1 in zip(bounds, bounds[1:])]
    _, levels = _allocate_levels(segs)
    head = np.repeat(levels, [s.size for s in segs])
    head /= head.sum()
    return Evaluation(head)


def impatience(theta: Evaluation, p: int, mode: str = "upper-bound") -> float:
    """max(largest stage weight, distance to p-piecewise-constant evaluations)."""
    return max(sup_weight(theta), distance_to_pwc(theta, p, mode))


# ---------------------------------------------------------------- block decomposition

class Block(NamedTuple):
    start: int
    discount: float
    tail_mass: float


@dataclass(frozen=True)
class BlockDecomposition:
    """Consecutive stretches on which theta follows its own geometric envelope.

    Each block starts at ``start`` with discount factor ``stage_discount(theta, start)``;
    ``cutoff`` is the last stage whose remaining mass is still >= ``epsilon``.
    """

    blocks: tuple[Block, ...]
    epsilon: float
    cutoff: int


def _cutoff(theta: Evaluation, eps: float) -> int:
    """max{m : sum_{m' >= m} theta_m' >= eps}."""
    H = theta.horizon
    pis = tail_masses(theta, H + 1) if H else np.array([tail_mass(theta, 1)])
    idx = np.flatnonzero(pis >= eps)
    last = int(idx[-1]) + 1 if idx.size else 0
    if last == H + 1 and theta.tail is not None:
        a, rho = theta.tail
        if rho == 0:
            return H + 1
        # a rho^k / (1-rho) >= eps  <=>  k <= log(eps (1-rho)/a) / log(rho)
        k = math.floor(math.log(eps * (1 - rho) / a) / math.log(rho) + 1e-12)
        return H + 1 + max(k, 0)
    return last


def block_decomposition(theta: Evaluation, eps: float) -> BlockDecomposition:
    """Cut a decreasing evaluation into stretches matching a discounted envelope.

    Starting at stage t with lam = stage_discount(theta, t), a block extends
    while (1-eps) theta^t_m <= lam (1-lam)^(m-1) <= (1+eps) theta^t_m holds
    for every offset m so far; the next block starts at the first failure.
    Blocks are only produced up to the mass cutoff.
    """
    if not 0 < eps <= 0.1:
        raise PreconditionError(f"eps must lie in (0, 1/10], got {eps!r}")
    if theta.is_zero:
        raise PreconditionError("zero evaluation has no block decomposition")
    h = theta.head
    if h.size > 1 and np.any(h[1:] > h[:-1] * (1 + 1e-15)):
        raise PreconditionError("theta must be non-increasing")
    if theta.tail is not None and h.size and theta.tail[0] > h[-1] * (1 + 1e-15):
        raise PreconditionError("theta must be non-increasing")
    cutoff = _cutoff(theta, eps)
    if cutoff >= 1 and theta.weight(cutoff) <= 0:
        raise PreconditionError(f"zero weight at stage {cutoff} before the mass cutoff")
    blocks = []
    t = 1
    while t <= cutoff:
        pi = tail_mass(theta, t)
        lam = min(1.0, theta.weight(t) / pi)
        blocks.append(Block(t, lam, pi))
        # scan offsets 1..K with K = cutoff - t + 1, in doubling windows
        K = cutoff - t + 1
        done = 0
        span = None
        window = 64
        while done < K:
            n = min(window, K - done)
            offs = np.arange(done + 1, done + n + 1)
            local = theta.weights(n, start=t + done) / pi
            if lam < 1:
                geom = lam * np.exp((offs - 1) * math.log1p(-lam))
            else:
                geom = np.where(offs == 1, 1.0, 0.0)
            ok = ((1 - eps) * local <= geom) & (geom <= (1 + eps) * local)
            bad = np.flatnonzero(~ok)
            if bad.size:
                span = done + int(bad[0])
                break
            done += n
            window *= 2
        if span is None:
            break
        t += span
    return BlockDecomposition(tuple(blocks), float(eps), cutoff)
