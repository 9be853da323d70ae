"""Core model for strategic data-disclosure games.

A game couples an ordered state space (real payoff value + prior per state),
an outcome model (one distribution over D outcome categories per state), and a
data-mass distribution: either a finite pmf over dataset sizes 0..N or a
continuum density on [a, 1] (see density.MassDensity).

Datasets are count vectors over the D categories. A dataset t can be disclosed
as any componentwise sub-vector m <= t; state j needs r_{j,k} = max_d
f_k(d)/f_j(d) units of its own data per unit of state-k data it wants to
imitate, which is the single number the solvers run on.
"""

from __future__ import annotations

import json
import math
import os
from dataclasses import dataclass, field
from itertools import combinations

import numpy as np

from .density import MassDensity, density_from_config

__all__ = [
    "GameValidationError",
    "StateSpace",
    "OutcomeModel",
    "FiniteMass",
    "GameSpec",
    "validate_game",
    "load_game",
    "enumerate_types",
    "type_prob",
    "type_posterior",
    "expected_state",
    "is_subset",
    "imitation_ratio",
    "full_info_outcome",
    "max_types_cap",
]

_PROB_TOL = 1e-9


class GameValidationError(ValueError):
    """Config violates a model invariant; carries the offending field path."""

    def __init__(self, path: str, message: str):
        self.path = path
        super().__init__(f"{path}: {message}")


def max_types_cap() -> int:
    """Enumeration guard; override with DISCLOSURE_EQ_MAX_TYPES."""
    raw = os.environ.get("DISCLOSURE_EQ_MAX_TYPES")
    if raw is None:
        return 2_000_000
    return int(raw)


@dataclass(frozen=True)
class StateSpace:
    values: tuple[float, ...]   # strictly ascending
    priors: tuple[float, ...]   # strictly positive, sum 1

    @property
    def J(self) -> int:
        return len(self.values)


@dataclass(frozen=True)
class OutcomeModel:
    frequencies: tuple[tuple[float, ...], ...]  # row j = distribution f_j

    @property
    def D(self) -> int:
        return len(self.frequencies[0])


@dataclass(frozen=True)
class FiniteMass:
    N: int
    pmf: tuple[float, ...]  # pmf[n] = probability of dataset size n, length N+1

    @property
    def support(self) -> tuple[int, ...]:
        return tuple(n for n, p in enumerate(self.pmf) if p > 0)


@dataclass(frozen=True)
class GameSpec:
    states: StateSpace
    outcomes: OutcomeModel
    mass: FiniteMass | MassDensity
    imitation: np.ndarray = field(compare=False, repr=False)  # J x J, inf allowed

    @property
    def kind(self) -> str:
        return "finite" if isinstance(self.mass, FiniteMass) else "limit"

    @property
    def J(self) -> int:
        return self.states.J

    @property
    def D(self) -> int:
        return self.outcomes.D

    def state_mean(self) -> float:
        return float(np.dot(self.states.priors, self.states.values))


def _imitation_matrix(freq: tuple[tuple[float, ...], ...]) -> np.ndarray:
    f = np.asarray(freq, dtype=float)
    J = f.shape[0]
    r = np.empty((J, J))
    for j in range(J):
        for k in range(J):
            with np.errstate(divide="ignore", invalid="ignore"):
                ratios = np.where(f[k] > 0, f[k] / f[j], 0.0)
            r[j, k] = float(np.max(ratios))
    return r


def validate_game(raw: dict) -> GameSpec:
    """Check a raw config dict against every model invariant.

    Raises GameValidationError naming the first violated field. On success the
    returned GameSpec carries the precomputed imitation-ratio matrix.
    """
    if not isinstance(raw, dict):
        raise GameValidationError("$", "config must be a mapping")
    states_raw = raw.get("states")
    if not isinstance(states_raw, list) or not states_raw:
        raise GameValidationError("states", "need a non-empty list of states")
    values, priors = [], []
    for i, s in enumerate(states_raw):
        try:
            values.append(float(s["value"]))
            priors.append(float(s["prior"]))
        except (KeyError, TypeError, ValueError):
            raise GameValidationError(
                f"states[{i}]", "each state needs numeric 'value' and 'prior'")
    for i in range(1, len(values)):
        if not values[i] > values[i - 1]:
            raise GameValidationError(
                f"states[{i}].value", "state values must be strictly ascending")
    for i, b in enumerate(priors):
        if not b > 0:
            raise GameValidationError(
                f"states[{i}].prior", "priors must be strictly positive")
    if abs(sum(priors) - 1.0) > _PROB_TOL:
        raise GameValidationError("states", f"priors sum to {sum(priors)}, not 1")

    out_raw = raw.get("outcomes")
    if not isinstance(out_raw, list) or len(out_raw) != len(states_raw):
        raise GameValidationError(
            "outcomes", "need one frequency row per state")
    D = None
    rows = []
    for j, row in enumerate(out_raw):
        if not isinstance(row, list) or not row:
            raise GameValidationError(f"outcomes[{j}]", "empty frequency row")
        if D is None:
            D = len(row)
        elif len(row) != D:
            raise GameValidationError(
                f"outcomes[{j}]", f"row length {len(row)} != {D}")
        vals = [float(x) for x in row]
        if any(x < 0 for x in vals):
            raise GameValidationError(f"outcomes[{j}]", "negative frequency")
        if abs(sum(vals) - 1.0) > _PROB_TOL:
            raise GameValidationError(
                f"outcomes[{j}]", f"frequencies sum to {sum(vals)}, not 1")
        rows.append(tuple(vals))

    mass_raw = raw.get("mass")
    if not isinstance(mass_raw, dict) or len(mass_raw) != 1:
        raise GameValidationError(
            "mass", "need exactly one of {'finite': …} or {'density': …}")
    if "finite" in mass_raw:
        fin = mass_raw["finite"]
        try:
            N = int(fin["N"])
            pmf = [float(p) for p in fin["pmf"]]
        except (KeyError, TypeError, ValueError):
            raise GameValidationError("mass.finite", "need integer N and pmf list")
        if N < 0:
            raise GameValidationError("mass.finite.N", "N must be >= 0")
        if len(pmf) != N + 1:
            raise GameValidationError(
                "mass.finite.pmf", f"pmf length {len(pmf)} != N+1 = {N + 1}")
        if any(p < 0 for p in pmf):
            raise GameValidationError("mass.finite.pmf", "negative probability")
        if abs(sum(pmf) - 1.0) > _PROB_TOL:
            raise GameValidationError(
                "mass.finite.pmf", f"pmf sums to {sum(pmf)}, not 1")
        mass: FiniteMass | MassDensity = FiniteMass(N, tuple(pmf))
    elif "density" in mass_raw:
        try:
            mass = density_from_config(mass_raw["density"])
        except ValueError as exc:
            raise GameValidationError("mass.density", str(exc))
    else:
        raise GameValidationError("mass", "unknown mass kind")

    states = StateSpace(tuple(values), tuple(priors))
    outcomes = OutcomeModel(tuple(rows))
    return GameSpec(states, outcomes, mass, _imitation_matrix(outcomes.frequencies))


def load_game(source) -> GameSpec:
    """Load and validate a game from a dict, JSON string, or file path."""
    if isinstance(source, dict):
        return validate_game(source)
    if isinstance(source, (str, os.PathLike)):
        text = None
        if isinstance(source, str) and source.lstrip().startswith("{"):
            text = source
        else:
            with open(source, "r", encoding="utf-8") as fh:
                text = fh.read()
        return validate_game(json.loads(text))
    raise GameValidationError("$", f"cannot load a game from {type(source)!r}")


# -- dataset combinatorics ---------------------------------------------------

def enumerate_types(game: GameSpec, cap: int | None = None) -> list[tuple[int, ...]]:
    """All dataset count vectors whose size lies in the pmf support, lex order."""
    if game.kind != "finite":
        raise GameValidationError("mass", "enumerate_types needs a finite game")
    support = set(game.mass.support)
    D = game.D
    cap = max_types_cap() if cap is None else cap
    total = sum(math.comb(n + D - 1, D - 1) for n in support)
    if total > cap:
        raise GameValidationError(
            "mass.finite", f"{total} types exceeds cap {cap}")
    types: list[tuple[int, ...]] = []
    for n in sorted(support):
        types.extend(_compositions(n, D))
    types.sort()
    return types


def _compositions(n: int, D: int) -> list[tuple[int, ...]]:
    """All count vectors of length D summing to n."""
    if D == 1:
        return [(n,)]
    out = []
    for first in range(n + 1):
        for rest in _compositions(n - first, D - 1):
            out.append((first, *rest))
    return out


def is_subset(m, t) -> bool:
    """Componentwise m <= t; disclosed data must be part of the dataset."""
    if len(m) != len(t):
        raise GameValidationError(
            "message", f"dimension mismatch: {len(m)} vs {len(t)}")
    return all(a <= b for a, b in zip(m, t))


def _log_multinomial(t) -> float:
    n = sum(t)
    return math.lgamma(n + 1) - sum(math.lgamma(td + 1) for td in t)


def _log_likelihoods(game: GameSpec, t) -> np.ndarray:
    """log of prod_d f_j(d)^{t_d} per state (-inf where impossible)."""
    out = np.empty(game.J)
    for j, row in enumerate(game.outcomes.frequencies):
        acc = 0.0
        for td, fd in zip(t, row):
            if td:
                if fd == 0.0:
                    acc = -math.inf
                    break
                acc += td * math.log(fd)
        out[j] = acc
    return out


def type_prob(game: GameSpec, t) -> float:
    """Unconditional probability of drawing dataset t."""
    if len(t) != game.D:
        raise GameValidationError("type", "dimension mismatch")
    n = sum(t)
    if game.kind != "finite":
        raise GameValidationError("mass", "type_prob needs a finite game")
    if n > game.mass.N or game.mass.pmf[n] == 0.0:
        return 0.0
    ll = _log_likelihoods(game, t)
    finite = ll > -math.inf
    if not finite.any():
        return 0.0
    log_beta = np.log(game.states.priors)
    mix = ll[finite] + log_beta[finite]
    peak = mix.max()
    s = peak + math.log(np.exp(mix - peak).sum())
    return math.exp(_log_multinomial(t) + math.log(game.mass.pmf[n]) + s)


def type_posterior(game: GameSpec, t) -> np.ndarray:
    """Posterior over states given dataset t (prior x likelihood, normalized)."""
    ll = _log_likelihoods(game, t)
    finite = ll > -math.inf
    if not finite.any():
        raise GameValidationError("type", "impossible dataset: no state "
                                  "assigns positive probability to these counts")
    post = np.zeros(game.J)
    mix = ll[finite] + np.log(np.asarray(game.states.priors)[finite])
    peak = mix.max()
    w = np.exp(mix - peak)
    post[finite] = w / w.sum()
    return post


def expected_state(belief, states: StateSpace) -> float:
    """Action induced by a belief: the belief-weighted mean state value."""
    b = np.asarray(belief, dtype=float)
    if b.shape != (states.J,):
        raise GameValidationError("belief", "belief length != number of states")
    return float(np.dot(b, states.values))


def imitation_ratio(game: GameSpec, j: int, k: int) -> float:
    """Units of state-j data needed per unit of state-k data imitated."""
    return float(game.imitation[j, k])


def full_info_outcome(game: GameSpec) -> dict[tuple[int, ...], float]:
    """Posterior-mean payoff per type: the no-strategic-disclosure benchmark."""
    out = {}
    for t in enumerate_types(game):
        out[t] = expected_state(type_posterior(game, t), game.states)
    return out


# -- vectorized internals shared by the finite solver and harness ------------

def types_matrix(game: GameSpec, cap: int | None = None) -> np.ndarray:
    return np.array(enumerate_types(game, cap), dtype=np.int64)


def log_state_weights(game: GameSpec, tmat: np.ndarray) -> np.ndarray:
    """(T, J) array of log beta_j + sum_d t_d log f_j(d)."""
    f = np.asarray(game.outcomes.frequencies, dtype=float)
    logb = np.log(np.asarray(game.states.priors))
    T = tmat.shape[0]
    out = np.empty((T, game.J))
    for j in range(game.J):
        row = f[j]
        with np.errstate(divide="ignore"):
            logf = np.log(row)
        contrib = np.zeros(T)
        bad = np.zeros(T, dtype=bool)
        for d in range(game.D):
            td = tmat[:, d]
            if row[d] == 0.0:
                bad |= td > 0
            else:
                contrib = contrib + td * logf[d]
        contrib[bad] = -np.inf
        out[:, j] = logb[j] + contrib
    return out


def type_probs_and_means(game: GameSpec, tmat: np.ndarray):
    """Vectorized q(t) and posterior-mean arrays for all rows of tmat."""
    from scipy.special import gammaln

    lw = log_state_weights(game, tmat)
    peak = np.max(np.where(np.isfinite(lw), lw, -np.inf), axis=1, keepdims=True)
    dead = ~np.isfinite(peak[:, 0])  # impossible under every state
    peak[dead, 0] = 0.0
    with np.errstate(divide="ignore", invalid="ignore"):
        w = np.exp(lw - peak)
        tot = w.sum(axis=1)
        post = w / tot[:, None]
        means = post @ np.asarray(game.states.values)

        n = tmat.sum(axis=1)
        logmult = gammaln(n + 1) - gammaln(tmat + 1).sum(axis=1)
        pmf = np.asarray(game.mass.pmf)
        logpmf = np.log(pmf)
        q = np.exp(logmult + logpmf[n] + peak[:, 0] + np.log(tot))
    q[dead] = 0.0
    means[dead] = np.nan
    return q, means
