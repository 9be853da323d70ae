"""Finite-to-continuum convergence diagnostics.

Three experiments link the two solvers:

* ``convergence_curve`` discretizes a continuum game's data-mass density at a
  ladder of sample sizes N, solves each finite game, and measures the sup-grid
  error between finite equilibrium payoffs (queried at rounded grid types) and
  the continuum payoffs, together with a two-sided payoff sandwich at the
  largest N (nearby continuum types must bracket each finite payoff up to a
  measured slack).
* ``variance_shrink_experiment`` re-solves the continuum game under data-mass
  densities of shrinking width and tracks the sup-distance between equilibrium
  payoffs and the full-information benchmark on an equal-mass quantile grid.
* ``strategy_distance_check`` measures how much probability mass of finite
  types far from every honest payoff level sends messages whose empirical
  shape lies near some on-path continuum message.
"""

from __future__ import annotations

import csv
import math
import time
from dataclasses import dataclass

import numpy as np

from .density import MassDensity, triangular_window
from .finite import (EquilibriumOutcome, outcome_query, pool_strategy,
                     solve_truth_leaning)
from .game import GameSpec, GameValidationError, validate_game
from .limit import LimitGame, LimitSolution, solve_binary, solve_limit

__all__ = [
    "ConvergenceReport",
    "GridPointRecord",
    "LadderEntry",
    "SandwichRecord",
    "SandwichReport",
    "StrategyProximityReport",
    "WidthLadderReport",
    "convergence_curve",
    "discretization_cdf_gap",
    "discretize_density",
    "discretized_config",
    "emit_convergence_csv",
    "emit_width_csv",
    "solve_limit_auto",
    "strategy_distance_check",
    "variance_shrink_experiment",
]

#: floor added to the top dataset-size cell so maximal datasets always occur
_TOP_CELL_FLOOR = 1e-6

#: default mass-level grid for the convergence ladder (both states, per level)
_DEFAULT_MUS = (0.1, 0.3, 0.5, 0.7, 0.9)

_DEFAULT_N_LADDER = (10, 20, 40, 80)

_DEFAULT_WIDTHS = (1.0, 0.5, 0.25, 0.125)


# ---------------------------------------------------------------------------
# Density discretization


def discretize_density(density: MassDensity, N: int) -> tuple[float, ...]:
    """Dataset-size pmf over 0..N induced by a continuum mass density.

    Cell n < N collects the density mass on [n/(N+1), (n+1)/(N+1)); the top
    cell keeps the remaining mass plus a small floor (renormalized) so that
    full-size datasets occur with positive probability, which the finite
    model requires.
    """
    if N < 1:
        raise GameValidationError("N", "discretization needs N >= 1")
    edges = np.arange(N + 1, dtype=float) / (N + 1)
    cdf = np.array([density.cdf(x) for x in edges])
    pmf = np.empty(N + 1)
    pmf[:N] = np.diff(cdf)
    pmf[N] = 1.0 - cdf[-1]
    pmf[N] += _TOP_CELL_FLOOR
    pmf = np.maximum(pmf, 0.0)
    pmf /= pmf.sum()
    return tuple(float(p) for p in pmf)


def discretization_cdf_gap(density: MassDensity, pmf: tuple[float, ...],
                           n_grid: int = 2048) -> float:
    """sup over mass levels of |finite CDF at the rounded size - density CDF|."""
    N = len(pmf) - 1
    cum = np.concatenate([[0.0], np.cumsum(pmf)])
    worst = 0.0
    for mu in np.linspace(0.0, 1.0, n_grid + 1):
        fin = cum[min(int(math.floor(N * mu)), N) + 1]
        worst = max(worst, abs(fin - density.cdf(mu)))
    return worst


def discretized_config(game: GameSpec, N: int) -> dict:
    """Raw finite-game config replacing a continuum game's density by its
    size-N discretization (states and outcome rows carried over)."""
    if not isinstance(game.mass, MassDensity):
        raise GameValidationError("mass", "discretized_config needs a limit game")
    pmf = discretize_density(game.mass, N)
    return {
        "states": [{"value": v, "prior": b}
                   for v, b in zip(game.states.values, game.states.priors)],
        "outcomes": [list(row) for row in game.outcomes.frequencies],
        "mass": {"finite": {"N": N, "pmf": list(pmf)}},
    }


def solve_limit_auto(game: LimitGame) -> LimitSolution:
    """Continuum solve through the fast two-state path when applicable."""
    if game.n_states == 2:
        return solve_binary(game)
    return solve_limit(game)


# ---------------------------------------------------------------------------
# Finite -> limit convergence ladder


@dataclass(frozen=True)
class GridPointRecord:
    """One evaluated grid type: state index, mass level, the rounded finite
    dataset, and the two payoffs being compared."""

    state: int
    mu: float
    finite_type: tuple[int, ...]
    finite_value: float
    limit_value: float

    @property
    def error(self) -> float:
        return abs(self.finite_value - self.limit_value)


@dataclass(frozen=True)
class LadderEntry:
    N: int
    sup_error: float
    runtime_ms: float
    records: tuple[GridPointRecord, ...]


@dataclass(frozen=True)
class SandwichRecord:
    """Two-sided bound at one grid type: the finite payoff must lie between
    the continuum payoffs of nearby lower/upper mass levels up to slack."""

    state: int
    mu: float
    finite_value: float
    lower: float
    upper: float

    @property
    def slack(self) -> float:
        return max(0.0, self.lower - self.finite_value,
                   self.finite_value - self.upper)


@dataclass(frozen=True)
class SandwichReport:
    N: int
    delta: tuple[float, ...]          # per-state mass-level uncertainty
    epsilon_required: float           # smallest slack making every record pass
    records: tuple[SandwichRecord, ...]

    def holds(self, epsilon: float) -> bool:
        return all(r.slack <= epsilon for r in self.records)


@dataclass(frozen=True)
class ConvergenceReport:
    grid_mus: tuple[float, ...]
    entries: tuple[LadderEntry, ...]
    sandwich: SandwichReport
    #: per-N finite outcomes, kept only on request (large)
    outcomes: tuple[EquilibriumOutcome, ...] = ()
    limit_solution: LimitSolution | None = None

    @property
    def sup_errors(self) -> tuple[float, ...]:
        return tuple(e.sup_error for e in self.entries)

    def strictly_decreasing(self) -> bool:
        errs = self.sup_errors
        return all(b < a for a, b in zip(errs, errs[1:]))


def _rounded_type(N: int, mu: float, row: tuple[float, ...]) -> tuple[int, ...]:
    t = np.rint(N * mu * np.asarray(row)).astype(np.int64)
    return tuple(int(x) for x in t)


def convergence_curve(config: dict, n_ladder=_DEFAULT_N_LADDER,
                      mus=_DEFAULT_MUS, cap: int | None = None,
                      keep_outcomes: bool = False) -> ConvergenceReport:
    """Solve a continuum game and its size-N discretizations along a ladder,
    returning per-N sup-grid errors, runtimes, and the largest-N sandwich.

    Grid types are count vectors round(N * mu * f_state) evaluated through
    ``outcome_query`` (they need not be reachable datasets); the continuum
    payoff is evaluated at the same state and mass level. The sandwich bound
    at each grid point brackets the finite payoff between continuum payoffs
    at mass levels mu -/+ D*delta_state, where delta_state is the largest
    level shift consistent with rounding each count to an integer.
    """
    spec = validate_game(config)
    if spec.kind != "limit":
        raise GameValidationError("mass", "convergence_curve needs a limit game")
    lg = LimitGame.from_config(config)
    sol = solve_limit_auto(lg)
    rows = lg.rows
    J = lg.n_states

    entries: list[LadderEntry] = []
    kept: list[EquilibriumOutcome] = []
    last_outcome: EquilibriumOutcome | None = None
    for N in n_ladder:
        fin_spec = validate_game(discretized_config(spec, N))
        t0 = time.perf_counter()
        outcome = solve_truth_leaning(fin_spec, cap=cap)
        runtime_ms = (time.perf_counter() - t0) * 1e3
        recs = []
        for j in range(J):
            for mu in mus:
                t = _rounded_type(N, mu, rows[j])
                recs.append(GridPointRecord(
                    state=j, mu=float(mu), finite_type=t,
                    finite_value=outcome_query(t, outcome),
                    limit_value=sol.curves.type_payoff(j, mu)))
        sup_err = max(r.error for r in recs)
        entries.append(LadderEntry(N=N, sup_error=sup_err,
                                   runtime_ms=runtime_ms,
                                   records=tuple(recs)))
        last_outcome = outcome
        if keep_outcomes:
            kept.append(outcome)

    N_max = n_ladder[-1]
    deltas = []
    for j in range(J):
        fmin = min(f for f in rows[j] if f > 0)
        deltas.append(1.0 / (2.0 * N_max * fmin))
    D = lg.n_outcomes
    sand_recs = []
    for j in range(J):
        for mu in mus:
            t = _rounded_type(N_max, mu, rows[j])
            fin_v = outcome_query(t, last_outcome)
            lo = sol.curves.type_payoff(j, max(mu - D * deltas[j], 0.0))
            hi = sol.curves.type_payoff(j, min(mu + D * deltas[j], 1.0))
            sand_recs.append(SandwichRecord(state=j, mu=float(mu),
                                            finite_value=fin_v,
                                            lower=lo, upper=hi))
    eps_req = max(r.slack for r in sand_recs)
    sandwich = SandwichReport(N=N_max, delta=tuple(deltas),
                              epsilon_required=eps_req,
                              records=tuple(sand_recs))
    return ConvergenceReport(grid_mus=tuple(float(m) for m in mus),
                             entries=tuple(entries), sandwich=sandwich,
                             outcomes=tuple(kept),
                             limit_solution=sol if keep_outcomes else None)


# ---------------------------------------------------------------------------
# Shrinking-width experiment


@dataclass(frozen=True)
class WidthLadderReport:
    """Sup-distance to full information per data-mass width.

    The grid is an equal-mass (quantile) grid per state: mass levels at the
    central quantiles of each width's density. ``point_mass_gap`` records the
    analytic degenerate-width limit: with a known dataset size, withholding
    is detectable, disclosure is fully verifiable, and every supported type
    earns exactly its state value.
    """

    widths: tuple[float, ...]
    sup_gaps: tuple[float, ...]
    quantiles: tuple[float, ...]
    point_mass_gap: float = 0.0

    def nonincreasing(self) -> bool:
        return all(b <= a + 1e-12 for a, b in
                   zip(self.sup_gaps, self.sup_gaps[1:]))


def _quantile_levels(density: MassDensity, qs) -> list[float]:
    out = []
    for q in qs:
        lo, hi = density.support[0], 1.0
        for _ in range(80):
            mid = 0.5 * (lo + hi)
            if density.cdf(mid) < q:
                lo = mid
            else:
                hi = mid
        out.append(hi)
    return out


def variance_shrink_experiment(config: dict, widths=_DEFAULT_WIDTHS,
                               quantiles=None) -> WidthLadderReport:
    """Re-solve a continuum game under recentred triangular data-mass
    densities of the given widths; report the sup over a central-quantile
    grid of |equilibrium payoff - state value| per width."""
    base = LimitGame.from_config(config)
    if quantiles is None:
        quantiles = tuple(np.linspace(0.10, 0.90, 33))
    gaps = []
    for w in widths:
        dens = triangular_window(w)
        game = LimitGame(values=base.values, priors=base.priors,
                         rows=base.rows, density=dens, name=base.name)
        sol = solve_limit_auto(game)
        levels = _quantile_levels(dens, quantiles)
        gap = max(abs(sol.curves.type_payoff(j, mu) - theta)
                  for j, theta in enumerate(game.values)
                  for mu in levels)
        gaps.append(float(gap))
    return WidthLadderReport(widths=tuple(float(w) for w in widths),
                             sup_gaps=tuple(gaps),
                             quantiles=tuple(float(q) for q in quantiles))


# ---------------------------------------------------------------------------
# Strategy proximity


@dataclass(frozen=True)
class StrategyProximityReport:
    """Probability mass of far-from-honest finite types whose sent message
    lies within ``delta`` (sup norm, empirical shapes) of some on-path
    continuum message, as a fraction of the far-from-honest mass.

    Sent-message probabilities come from the extracted pool mixing
    strategies, so ``close_mass`` sums x(t, m) over pairs whose announcement
    shape m/N is close to a continuum burden ray or pool announcement. When
    no type qualifies (every payoff within ``eta`` of a state value), the
    fraction is vacuously 1.
    """

    N: int
    eta: float
    delta: float
    qualifying_mass: float
    close_mass: float
    n_qualifying_pools: int

    @property
    def fraction(self) -> float:
        if self.qualifying_mass <= 0.0:
            return 1.0
        return self.close_mass / self.qualifying_mass


def _onpath_message_rays(sol: LimitSolution) -> list[tuple[np.ndarray, float, float]]:
    """(direction row, lo, hi) families covering every on-path limit message:
    burden messages along each state's solved curve plus pool announcements."""
    rays = []
    rows = [np.asarray(r, dtype=float) for r in sol.game.rows]
    for k, curve in enumerate(sol.curves.curves):
        for seg in curve.segments:
            rays.append((rows[k], float(seg.mu_lo), float(seg.mu_hi)))
    for pool in sol.pools:
        for k, mu_k in pool.message.items():
            rays.append((rows[k], float(mu_k), float(mu_k)))
    return rays


def _ray_distance(x: np.ndarray, ray: tuple[np.ndarray, float, float],
                  n_grid: int = 257) -> float:
    row, lo, hi = ray
    mus = np.linspace(lo, hi, n_grid) if hi > lo else np.array([lo])
    diffs = np.abs(x[None, :] - mus[:, None] * row[None, :])
    return float(diffs.max(axis=1).min())


def strategy_distance_check(outcome: EquilibriumOutcome, sol: LimitSolution,
                            eta: float = 0.05, delta: float = 0.1,
                            ) -> StrategyProximityReport:
    """Compare finite equilibrium announcements against on-path continuum
    messages; see StrategyProximityReport for the exact statistic."""
    game = outcome.game
    if game.kind != "finite":
        raise GameValidationError("mass", "strategy_distance_check needs a "
                                  "solved finite game")
    N = game.mass.N
    values = game.states.values
    rays = _onpath_message_rays(sol)

    qual_mass = close_mass = 0.0
    n_qual = 0
    for step in outcome.steps:
        if any(abs(step.value - th) <= eta for th in values):
            continue
        mass = float(outcome.q[outcome.member_idx[step.index]].sum())
        if mass <= 0.0:
            continue
        n_qual += 1
        qual_mass += mass
        profile = pool_strategy(step, game, outcome)
        is_close: dict[tuple, bool] = {}
        for (_, m), x in profile.x.items():
            hit = is_close.get(m)
            if hit is None:
                shape = np.asarray(m, dtype=float) / float(N)
                hit = min(_ray_distance(shape, ray) for ray in rays) <= delta
                is_close[m] = hit
            if hit:
                close_mass += x
    return StrategyProximityReport(N=N, eta=eta, delta=delta,
                                   qualifying_mass=qual_mass,
                                   close_mass=close_mass,
                                   n_qualifying_pools=n_qual)


# ---------------------------------------------------------------------------
# CSV emission


def emit_convergence_csv(report: ConvergenceReport, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        wtr = csv.writer(fh)
        wtr.writerow(["N", "sup_error", "runtime_ms"])
        for e in report.entries:
            wtr.writerow([e.N, repr(float(e.sup_error)),
                          repr(float(e.runtime_ms))])


def emit_width_csv(report: WidthLadderReport, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        wtr = csv.writer(fh)
        wtr.writerow(["width", "sup_gap"])
        for w, gap in zip(report.widths, report.sup_gaps):
            wtr.writerow([repr(float(w)), repr(float(gap))])
