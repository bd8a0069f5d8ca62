"""Batch experiments: value sweeps, the counterexample reproduction and the property suite."""

from __future__ import annotations

import csv
import io
import logging
import time

import numpy as np

from .evaluation import (
    Evaluation,
    from_dict,
    impatience,
    make_discounted,
    make_n_stage,
    make_piecewise_constant,
    make_piecewise_discounted,
    sup_weight,
)
from .game_model import certify_counterexample_cap, counterexample_index, counterexample_mdp
from .properties import ALL_CHECKS, ExpandingOperator, run_check
from .shapley_operator import ShapleyOperator, iterate
from .values import v_theta

log = logging.getLogger(__name__)

FAMILIES = ("n_stage", "discounted", "pwc", "pwd", "custom")
DEFAULT_MAX_STATES = 500_000


def theta_family(family: str, schedule) -> list[tuple[str, Evaluation]]:
    """(descriptor, evaluation) for each point of a schedule, in schedule order."""
    out = []
    for item in schedule:
        if family == "n_stage":
            out.append((f"n={int(item)}", make_n_stage(int(item))))
        elif family == "discounted":
            out.append((f"lambda={float(item)!r}", make_discounted(float(item))))
        elif family == "pwc":
            out.append((f"pwc:{list(item['levels'])}@{list(item['breakpoints'])}",
                        make_piecewise_constant(item["levels"], item["breakpoints"])))
        elif family == "pwd":
            pieces = [tuple(p) for p in item["pieces"]]
            out.append((f"pwd:{pieces}", make_piecewise_discounted(pieces)))
        elif family == "custom":
            out.append((item.get("label", f"custom{len(out)}"), from_dict(item)))
        else:
            raise ValueError(f"unknown family {family!r}; expected one of {FAMILIES}")
    return out


def sweep_values(game, family: str, schedule, p: int = 2, eps: float = 1e-9) -> list[dict]:
    """One row per schedule point: descriptor, sup weight, impatience bound, values, error bound.

    The impatience column is an upper bound on max(sup_m theta_m, D(theta, Theta^p)).
    """
    op = game if isinstance(game, ShapleyOperator) else ShapleyOperator(game)
    rows = []
    for desc, theta in theta_family(family, schedule):
        v = v_theta(op, theta, eps)
        row = {
            "theta": desc,
            "sup_weight": sup_weight(theta),
            f"impatience_p{p}": impatience(theta, p),
            "error_bound": v.error_bound,
        }
        for name, val in zip(op.game.states, v.values):
            row[f"v[{name}]"] = float(val)
        rows.append(row)
        log.info("sweep %s: %s", desc, v.values)
    return rows


def _fmt(x):
    return repr(float(x)) if isinstance(x, (float, np.floating)) else x


def write_csv(rows: list[dict], path=None) -> str:
    """Write rows with a header from the first row's keys; returns the text."""
    buf = io.StringIO()
    if rows:
        w = csv.DictWriter(buf, fieldnames=list(rows[0]), lineterminator="\n")
        w.writeheader()
        for row in rows:
            w.writerow({k: _fmt(v) for k, v in row.items()})
    text = buf.getvalue()
    if path is not None:
        try:
            with open(path, "w", encoding="utf-8", newline="") as fh:
                fh.write(text)
        except OSError as exc:
            raise OSError(f"cannot write CSV to {path}: {exc}") from exc
    return text


# ---------------------------------------------------------------- counterexample

def counterexample_blocks(N: int, R: int) -> list[int]:
    """Block lengths N**(3**r) for r = 1..R."""
    if N < 2 or R < 1:
        raise ValueError("need N >= 2 and R >= 1")
    return [N ** (3 ** r) for r in range(1, R + 1)]


def counterexample_theta(N: int, R: int, max_stages: int = DEFAULT_MAX_STATES) -> Evaluation:
    """Decreasing piecewise-constant weights: R blocks of lengths N**(3**r), mass 1/R each."""
    lengths = counterexample_blocks(N, R)
    total = sum(lengths)
    if total > max_stages:
        raise ValueError(f"infeasible: N={N}, R={R} needs {total} stages, cap is {max_stages}")
    bps = [1]
    for L in lengths:
        bps.append(bps[-1] + L)
    return make_piecewise_constant([1.0 / (R * L) for L in lengths], bps)


def reproduce_counterexample(params: dict, N_list=None) -> dict:
    """Compare v_n(0,1) with v_{theta^N}(0,1) at the matched horizon n = support of theta^N.

    ``params`` holds ``survival`` (family dict), ``R`` and optionally ``N``
    (used when N_list is None) and ``max_states``.  The counter cap is set
    to horizon + 1, and the cap certificate is reported with each run.
    """
    survival = dict(params.get("survival", {"family": "triple_log"}))
    R = int(params.get("R", 2))
    cap = int(params.get("max_states", DEFAULT_MAX_STATES))
    if N_list is None:
        N_list = [int(params.get("N", 3))]
    runs = []
    for N in N_list:
        t0 = time.perf_counter()
        theta = counterexample_theta(int(N), R, cap)
        n = theta.support_end
        max_count = n + 1
        if 2 * max_count + 1 > cap:
            raise ValueError(f"infeasible: {2 * max_count + 1} states exceed the cap {cap}")
        game = counterexample_mdp(max_count, survival)
        op = ShapleyOperator(game)
        k1 = counterexample_index(max_count, (0, 1))
        zero = np.zeros(game.nK)
        vn = iterate(op, make_n_stage(n), n, zero)
        vt = iterate(op, theta, n, zero)
        cert = certify_counterexample_cap(game, n)
        runs.append({
            "N": int(N),
            "R": R,
            "block_lengths": counterexample_blocks(int(N), R),
            "horizon": n,
            "max_count": max_count,
            "theta_mass": float(theta.mass),
            "theta_1": theta.weight(1),
            "v_n": float(vn.values[k1]),
            "v_theta": float(vt.values[k1]),
            "gap": float(vn.values[k1] - vt.values[k1]),
            "error_bound": max(vn.error_bound, vt.error_bound),
            "cap": cert,
        })
        log.info("counterexample N=%d: %.1fs", N, time.perf_counter() - t0)
    return {"survival": survival, "R": R, "runs": runs}


# ---------------------------------------------------------------- property suite

CORRUPTIONS = {"expand": ExpandingOperator}


def run_property_suite(seed: int, budget: int, checks=ALL_CHECKS, corrupt=None) -> dict:
    """Run ``budget`` random cases spread round-robin over ``checks``.

    ``corrupt`` (a name from CORRUPTIONS or a callable op -> op) replaces
    every operator before it is checked, for fault-injection runs.
    Failures keep a dump of the offending case.
    """
    if isinstance(corrupt, str):
        corrupt = CORRUPTIONS[corrupt]
    results = {}
    for idx in range(int(budget)):
        name = checks[idx % len(checks)]
        rng = np.random.default_rng([int(seed), idx])
        try:
            res = run_check(name, rng, corrupt)
        except (ArithmeticError, ValueError, RuntimeError) as exc:
            res = {"ok": False, "error": f"{type(exc).__name__}: {exc}", "case": {}}
        entry = results.setdefault(name, {"invariant": name, "cases": 0, "passed": 0, "failures": []})
        entry["cases"] += 1
        if res["ok"]:
            entry["passed"] += 1
        else:
            entry["failures"].append({"index": idx, **res})
    report = [results[c] for c in checks if c in results]
    return {
        "seed": int(seed),
        "budget": int(budget),
        "ok": all(not r["failures"] for r in report),
        "results": report,
    }
