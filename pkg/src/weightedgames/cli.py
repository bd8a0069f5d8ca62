"""Command line entry point: ``weightedgames <command> ...``."""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys

import numpy as np

from .evaluation import from_dict, make_discounted, make_n_stage, stage_discounts
from .game_model import GameSpec, corpus
from .harness import reproduce_counterexample, run_property_suite, sweep_values, write_csv
from .shapley_operator import ShapleyOperator
from .strategies import best_response, discounted_pair
from .values import asymptotic_value_estimate, v_theta

log = logging.getLogger("weightedgames")


def load_game(spec: str) -> GameSpec:
    """A JSON file path, ``corpus:NAME`` or a bare corpus name (``random:SEED:K:I:J`` too)."""
    if os.path.isfile(spec):
        with open(spec, encoding="utf-8") as fh:
            return GameSpec.from_dict(json.load(fh))
    name = spec[len("corpus:"):] if spec.startswith("corpus:") else spec
    return corpus(name)


def load_eval(spec: str):
    """A JSON file, inline JSON, ``n:N`` or ``lambda:L``."""
    if os.path.isfile(spec):
        with open(spec, encoding="utf-8") as fh:
            return from_dict(json.load(fh))
    if spec.lstrip().startswith("{"):
        return from_dict(json.loads(spec))
    kind, _, arg = spec.partition(":")
    if kind == "n":
        return make_n_stage(int(arg))
    if kind in ("lambda", "lam"):
        return make_discounted(float(arg))
    raise argparse.ArgumentTypeError(f"cannot read evaluation {spec!r}")


def load_config(path):
    if path is None:
        return {}
    with open(path, encoding="utf-8") as fh:
        return json.load(fh)


def _emit_json(obj, out):
    text = json.dumps(obj, sort_keys=True, indent=2) + "\n"
    if out:
        with open(out, "w", encoding="utf-8") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def _parse_schedule(text: str, family: str):
    if family == "n_stage":
        return [int(x) for x in text.split(",")]
    if family == "discounted":
        return [float(x) for x in text.split(",")]
    return json.loads(text)


def cmd_gen(args):
    cfg = load_config(args.config)
    game = load_game(args.game or cfg.get("game", "cycle2"))
    _emit_json(game.to_dict(), args.out)


def cmd_solve(args):
    game = load_game(args.game)
    theta = load_eval(args.eval)
    op = ShapleyOperator(game)
    v = v_theta(op, theta, args.eps)
    _emit_json({
        "values": dict(zip(game.states, v.values.tolist())),
        "error_bound": v.error_bound,
        "meta": {"game": game.name, "eval": theta.to_dict(), "eps": args.eps},
    }, args.out)


def cmd_sweep(args):
    cfg = load_config(args.config)
    game = load_game(args.game or cfg["game"])
    family = args.family or cfg.get("family", "n_stage")
    if args.schedule is not None:
        schedule = _parse_schedule(args.schedule, family)
    else:
        schedule = cfg["schedule"]
    p = args.p if args.p is not None else int(cfg.get("p", 2))
    rows = sweep_values(game, family, schedule, p=p, eps=args.eps)
    text = write_csv(rows, args.out)
    if not args.out:
        sys.stdout.write(text)


def cmd_strategy(args):
    if args.measure != "exploitability":
        raise SystemExit(f"unknown measure {args.measure!r}")
    game = load_game(args.game)
    theta = load_eval(args.eval)
    op = ShapleyOperator(game)
    sigma, tau = discounted_pair(op, theta)
    est, diag = asymptotic_value_estimate(op, tol=args.tol)
    _, low = best_response(op, theta, sigma, 2)
    _, high = best_response(op, theta, tau, 1)
    states = list(game.states)
    horizon = sigma.horizon
    report = {
        "game": game.name,
        "eval": theta.to_dict(),
        "stage_lambdas": stage_discounts(theta, horizon).tolist(),
        "tail_lambda": None if theta.tail is None else 1.0 - theta.tail[1],
        "v_star": dict(zip(states, est.values.tolist())),
        "v_star_diagnostics": {"converged": diag["converged"], "spread": est.error_bound},
        "secured_by_sigma": dict(zip(states, np.asarray(low).tolist())),
        "conceded_by_tau": dict(zip(states, np.asarray(high).tolist())),
        "gap_p1": dict(zip(states, (est.values - low).tolist())),
        "gap_p2": dict(zip(states, (high - est.values).tolist())),
        "certificates": {repr(k[1]): float(v[2]) for k, v in op.cache.items() if k[0] == "optimal_actions"},
    }
    _emit_json(report, args.out)


def cmd_counterexample(args):
    cfg = load_config(args.config)
    params = dict(cfg)
    if args.R is not None:
        params["R"] = args.R
    N_list = args.N or cfg.get("N_list")
    report = reproduce_counterexample(params, N_list)
    _emit_json(report, args.out)


def cmd_proptest(args):
    report = run_property_suite(args.seed, args.budget, corrupt=args.corrupt)
    _emit_json(report, args.out)
    if not report["ok"]:
        return 1
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="weightedgames", description="Weighted-average stochastic games")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, game=True, ev=False):
        if game:
            p.add_argument("--game", help="JSON file, corpus:NAME or random:SEED:K:I:J")
        if ev:
            p.add_argument("--eval", required=True, help="JSON file, inline JSON, n:N or lambda:L")
        p.add_argument("--eps", type=float, default=1e-9)
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--out", help="output file (default stdout)")
        p.add_argument("--config", help="JSON config file")

    p = sub.add_parser("gen", help="write a game as JSON")
    common(p)
    p.set_defaults(func=cmd_gen)

    p = sub.add_parser("solve", help="value of a weighted game")
    common(p, ev=True)
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("sweep", help="values along a family of evaluations (CSV)")
    common(p)
    p.add_argument("--family", choices=("n_stage", "discounted", "pwc", "pwd", "custom"))
    p.add_argument("--schedule", help="comma list for n_stage/discounted, JSON list otherwise")
    p.add_argument("--p", type=int, help="number of pieces for the impatience column")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("strategy", help="exploitability of the theta-discounted strategies")
    common(p, ev=True)
    p.add_argument("--measure", default="exploitability")
    p.add_argument("--tol", type=float, default=1e-3, help="tolerance of the asymptotic value estimate")
    p.set_defaults(func=cmd_strategy)

    p = sub.add_parser("counterexample", help="n-stage value against blockwise weights")
    common(p, game=False)
    p.add_argument("--N", type=int, nargs="+")
    p.add_argument("--R", type=int)
    p.set_defaults(func=cmd_counterexample)

    p = sub.add_parser("proptest", help="randomized invariant suite (JSON report)")
    common(p, game=False)
    p.add_argument("--budget", type=int, default=90)
    p.add_argument("--corrupt", choices=("expand",), help="inject a fault into every operator")
    p.set_defaults(func=cmd_proptest)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    if getattr(args, "game", "") is None and args.command in ("solve", "strategy"):
        raise SystemExit("--game is required")
    return args.func(args) or 0


if __name__ == "__main__":
    sys.exit(main())
