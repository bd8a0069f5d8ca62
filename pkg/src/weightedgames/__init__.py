"""Zero-sum stochastic games and nonexpansive operators under general stage weights."""

from .evaluation import (
    ZERO,
    Evaluation,
    InvalidEvaluation,
    PreconditionError,
    approx_discounted_by_pwc,
    block_decomposition,
    distance_to_pwc,
    impatience,
    l1_distance,
    make_discounted,
    make_n_stage,
    make_piecewise_constant,
    make_piecewise_discounted,
    r_shift,
    shift,
    stage_discount,
    sup_weight,
)
from .game_model import GameSpec, GameValidationError, ValueFunction, corpus, counterexample_mdp, validate
from .matrix_game import MatrixGameSolution, solve, value_oracle
from .shapley_operator import NonexpansiveOperator, ShapleyOperator, from_nonexpansive, iterate
from .strategies import MarkovStrategy, best_response, discounted_strategy, exploitability, payoff
from .values import asymptotic_value_estimate, v_discounted, v_n_stage, v_theta

__version__ = "0.1.0"
