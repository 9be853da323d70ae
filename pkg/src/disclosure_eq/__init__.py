"""Equilibrium outcomes of verifiable-disclosure games over sampled data.

A sender privately observes a dataset of categorical observations drawn under
a hidden state and may disclose any subset of it; the receiver best-responds
with the posterior-mean action. The package computes the unique
truth-leaning equilibrium outcome of the finite-sample game, its
continuum/limit counterpart where disclosure reduces to a one-dimensional
burden of proof per state, the convergence of the former to the latter, and
Monte-Carlo simulations of solved games.
"""

__version__ = "0.1.0"

from .density import (MassDensity, Piece, density_from_config, double_peaked,
                      triangular, triangular_window)
from .finite import (AnnouncementReport, EquilibriumOutcome, ImitationDAG,
                     PoolStep, SolverError, StrategyProfile, best_pool,
                     brute_force_best_pool, build_dag, emit_outcome_csv,
                     emit_pool_summary_csv, load_outcome_csv,
                     max_weight_closure, outcome_query, pool_strategy,
                     solve_truth_leaning, verify_announcement_proof)
from .game import (FiniteMass, GameSpec, GameValidationError, OutcomeModel,
                   StateSpace, enumerate_types, expected_state,
                   full_info_outcome, imitation_ratio, is_subset, load_game,
                   type_posterior, type_prob, validate_game)
from .limit import (CurveSegment, Frontier, LimitGame, LimitSolution,
                    PayoffCurves, PoolRegion, ThresholdTable, bayes_gap,
                    emit_frontier_csv, emit_payoff_csv, emit_thresholds_csv,
                    gcm_iron, imitation_ratios, limit_strategy, rho_binary,
                    solve_binary, solve_limit, thresholds)
from .converge import (ConvergenceReport, GridPointRecord, LadderEntry,
                       SandwichRecord, SandwichReport, StrategyProximityReport,
                       WidthLadderReport, convergence_curve,
                       discretization_cdf_gap, discretize_density,
                       discretized_config, emit_convergence_csv,
                       emit_width_csv, solve_limit_auto,
                       strategy_distance_check, variance_shrink_experiment)
from .simulate import (BucketStat, SimConfig, SimReport, WelfareCell,
                       build_strategy_tables, emit_calibration_csv,
                       emit_welfare_csv, play, sample_type, simulate,
                       tercile_edges)
from .cli import main as cli_main

__all__ = [
    "AnnouncementReport", "BucketStat", "ConvergenceReport", "CurveSegment",
    "EquilibriumOutcome", "FiniteMass", "Frontier", "GameSpec",
    "GameValidationError", "GridPointRecord", "ImitationDAG", "LadderEntry",
    "LimitGame", "LimitSolution", "MassDensity", "OutcomeModel",
    "PayoffCurves", "Piece", "PoolRegion", "PoolStep", "SandwichRecord",
    "SandwichReport", "SimConfig", "SimReport", "SolverError", "StateSpace",
    "StrategyProfile", "StrategyProximityReport", "ThresholdTable",
    "WelfareCell", "WidthLadderReport", "bayes_gap", "best_pool",
    "brute_force_best_pool", "build_dag", "build_strategy_tables", "cli_main",
    "convergence_curve", "density_from_config", "discretization_cdf_gap",
    "discretize_density", "discretized_config", "double_peaked",
    "emit_calibration_csv", "emit_convergence_csv", "emit_frontier_csv",
    "emit_outcome_csv", "emit_payoff_csv", "emit_pool_summary_csv",
    "emit_thresholds_csv", "emit_welfare_csv", "emit_width_csv",
    "enumerate_types", "expected_state", "full_info_outcome", "gcm_iron",
    "imitation_ratio", "imitation_ratios", "is_subset", "limit_strategy",
    "load_game", "load_outcome_csv", "max_weight_closure", "outcome_query",
    "play", "pool_strategy", "rho_binary", "sample_type", "simulate",
    "solve_binary", "solve_limit", "solve_limit_auto", "solve_truth_leaning",
    "strategy_distance_check", "tercile_edges", "thresholds", "triangular",
    "triangular_window", "type_posterior", "type_prob", "validate_game",
    "variance_shrink_experiment", "verify_announcement_proof", "__version__",
]
