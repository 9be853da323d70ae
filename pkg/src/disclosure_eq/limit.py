"""Continuum-data equilibrium solver.

Computes the disclosure-game equilibrium outcome when dataset sizes follow a
continuous mass density: each sender type is a scaled outcome frequency
vector ``mu * f_state`` with mass ``mu`` drawn from the density.  The solver
builds, from the top payoff level downward, the minimum data mass (the
"burden of proof") a message shaped like each state's outcome distribution
must carry to secure every payoff level.  Three regimes alternate:

* strict descent -- the marginal types of the active states trade off
  imitation targets so the per-state burdens shrink together inside
  partition elements, each element scaling along a ray;
* honest plateaus -- from some mass upward a state's own data shape is too
  expensive to imitate, so those types separate exactly at the state value;
* pooling -- when a whole band of types would raise the pooled posterior
  above the current level, the band shares one payoff (a flat segment); a
  pool whose message requirement hits zero mass absorbs every remaining
  type (the bottom pool, anchored at the empty message).

A closed-form two-state path (:func:`rho_binary`, :func:`gcm_iron`,
:func:`solve_binary`) provides an independent construction used to
cross-validate the general engine on binary games.
"""

from __future__ import annotations

import bisect
import csv
import itertools
import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Iterable, Sequence

import numpy as np
from scipy import integrate

from .density import MassDensity, density_from_config
from .finite import SolverError
from .game import GameValidationError, validate_game

__all__ = [
    "LimitGame",
    "CurveSegment",
    "StateCurve",
    "PayoffCurves",
    "Frontier",
    "PartitionState",
    "PoolRegion",
    "ThresholdTable",
    "LimitSolution",
    "imitation_ratios",
    "partition_states",
    "delta_n",
    "putative_payoff",
    "invert_putative",
    "detect_events",
    "pooling_search",
    "solve_limit",
    "rho_binary",
    "gcm_iron",
    "solve_binary",
    "thresholds",
    "limit_strategy",
    "bayes_gap",
    "emit_payoff_csv",
    "emit_frontier_csv",
    "emit_thresholds_csv",
]

# Payoff-level comparison tolerance (ties, event detection).
_VALUE_TIE = 1e-9
# Bisection tolerance for event locations measured in payoff units.
_EVENT_TOL = 1e-8
# Bisection tolerance for burden inversion, in mass-scale units.
_ALPHA_TOL = 1e-12
# Pool coordinate-ascent tolerance.
_POOL_TOL = 1e-8
# Minimum type mass a candidate pool must recruit.  The pooled posterior of
# a band shrinking onto the current frontier tends to the frontier level
# itself, so the unconstrained supremum is degenerately attained at zero
# width; requiring a positive recruited mass keeps the search away from
# that boundary (pools smaller than this are treated as degenerate).
_POOL_MIN_MASS = 1e-4
# Largest number of states allowed inside one partition component
# (subset enumeration is exponential in this count).
_MAX_COMPONENT = 12
# Hard cap on the number of states in a limit game.
_MAX_STATES = 8


# ---------------------------------------------------------------------------
# Game container


@dataclass(frozen=True)
class LimitGame:
    """A disclosure game in the continuum-data regime.

    ``values``/``priors`` list the state values and prior weights in strictly
    increasing value order; ``rows[j]`` is state j's outcome distribution;
    ``density`` is the data-mass density on [0, 1] (its cdf gives the measure
    of types below a mass level).
    """

    values: tuple[float, ...]
    priors: tuple[float, ...]
    rows: tuple[tuple[float, ...], ...]
    density: MassDensity
    name: str = ""

    def __post_init__(self) -> None:
        j = len(self.values)
        if j == 0:
            raise GameValidationError("states", "at least one state required")
        if j > _MAX_STATES:
            raise GameValidationError(
                "states", f"limit solver supports at most {_MAX_STATES} states")
        if len(self.priors) != j or len(self.rows) != j:
            raise GameValidationError("states", "values/priors/rows length mismatch")
        for a, b in zip(self.values, self.values[1:]):
            if not (b > a + 1e-12):
                raise GameValidationError(
                    "states", "state values must be strictly increasing")
        if abs(sum(self.priors) - 1.0) > 1e-9 or min(self.priors) <= 0:
            raise GameValidationError("states", "priors must be positive and sum to 1")
        for r in self.rows:
            if abs(sum(r) - 1.0) > 1e-9 or min(r) < 0:
                raise GameValidationError(
                    "outcomes", "outcome rows must be distributions")

    @classmethod
    def from_config(cls, cfg: dict) -> "LimitGame":
        validate_game(cfg)
        mass = cfg["mass"]
        if "density" not in mass:
            raise GameValidationError(
                "mass", "limit solver requires a density mass model")
        states = sorted(cfg["states"], key=lambda s: s["value"])
        order = sorted(range(len(cfg["states"])),
                       key=lambda i: cfg["states"][i]["value"])
        rows = [tuple(cfg["outcomes"][i]) for i in order]
        return cls(
            values=tuple(s["value"] for s in states),
            priors=tuple(s["prior"] for s in states),
            rows=tuple(rows),
            density=density_from_config(mass["density"]),
            name=cfg.get("name", ""),
        )

    @property
    def n_states(self) -> int:
        return len(self.values)

    @property
    def n_outcomes(self) -> int:
        return len(self.rows[0])

    def prior_mean(self) -> float:
        return float(sum(b * t for b, t in zip(self.priors, self.values)))


def _snap_fraction(x: float) -> Fraction:
    """Exact rational form of x when one exists with a small denominator."""
    fr = Fraction(x).limit_denominator(10 ** 6)
    if abs(float(fr) - x) <= 1e-12 * max(1.0, abs(x)):
        return fr
    return Fraction(x)


def imitation_ratios(game: LimitGame) -> np.ndarray:
    """Mass premium matrix R: R[j, k] is the factor by which state j's types
    must scale down their mass to reshape their data as state k's outcome
    distribution (np.inf when impossible because k puts weight on an outcome
    j never produces).  Ratios of rationally-representable frequencies are
    computed exactly, so e.g. 0.6/0.4 comes out as exactly 1.5.
    """
    j_n = game.n_states
    out = np.ones((j_n, j_n))
    frac_rows = [[_snap_fraction(x) for x in row] for row in game.rows]
    for j in range(j_n):
        for k in range(j_n):
            if j == k:
                continue
            best: Fraction | None = Fraction(0)
            for fj, fk in zip(frac_rows[j], frac_rows[k]):
                if fk == 0:
                    continue
                if fj == 0:
                    best = None
                    break
                q = fk / fj
                if best is not None and q > best:
                    best = q
            out[j, k] = np.inf if best is None else float(best)
    return out


# ---------------------------------------------------------------------------
# Payoff curves


@dataclass
class CurveSegment:
    """One maximal piece of a state's message-value curve.

    ``kind`` is "strict" (value strictly increasing in mass, evaluated by an
    exact local-series closure), "pool" (flat, shared pooled value) or
    "honest" (flat at the state value, fully separating).
    """

    mu_lo: float
    mu_hi: float
    v_lo: float
    v_hi: float
    kind: str
    _eval: Callable[[float], float] | None = None

    def value(self, mu: float) -> float:
        if self.kind != "strict" or self._eval is None:
            return self.v_hi if self.kind == "honest" else self.v_lo
        v = self._eval(mu)
        return min(max(v, min(self.v_lo, self.v_hi)), max(self.v_lo, self.v_hi))

    def burden(self, v: float) -> float:
        """Smallest mass in this segment achieving value >= v."""
        if v <= self.v_lo + _VALUE_TIE:
            return self.mu_lo
        if self.kind != "strict":
            return self.mu_lo if v <= self.v_hi + _VALUE_TIE else math.inf
        if v > self.v_hi + _VALUE_TIE:
            return math.inf
        lo, hi = self.mu_lo, self.mu_hi
        for _ in range(80):
            mid = 0.5 * (lo + hi)
            if self.value(mid) >= v:
                hi = mid
            else:
                lo = mid
            if hi - lo <= _ALPHA_TOL:
                break
        return hi


@dataclass
class StateCurve:
    """Message-value curve of one state: value of sending mass mu shaped as
    this state's outcome distribution, as a function of mu in [0, 1]."""

    state: int
    segments: list[CurveSegment]
    floor: float  # bottom-pool value; applies below/without any segment

    def value(self, mu: float) -> float:
        if mu <= 0:
            return self.floor
        best = self.floor
        for seg in self.segments:
            if seg.mu_lo - 1e-12 <= mu <= seg.mu_hi + 1e-12:
                return max(best, seg.value(min(max(mu, seg.mu_lo), seg.mu_hi)))
            if seg.mu_hi < mu:
                best = max(best, seg.v_hi)
        return best

    def burden(self, v: float) -> float:
        """Smallest mass whose message value reaches v (inf if unreachable)."""
        if v <= self.floor + _VALUE_TIE:
            return 0.0
        for seg in self.segments:
            if v <= seg.v_hi + _VALUE_TIE:
                return seg.burden(v)
        return math.inf

    def top_value(self) -> float:
        return self.segments[-1].v_hi if self.segments else self.floor


@dataclass
class PayoffCurves:
    """Equilibrium payoff data: per-state message-value curves plus the
    imitation premium matrix, giving every type's equilibrium payoff."""

    game: LimitGame
    curves: list[StateCurve]
    ratios: np.ndarray
    bottom_value: float

    def message_value(self, k: int, mu: float) -> float:
        return self.curves[k].value(mu)

    def type_payoff(self, j: int, mu: float) -> float:
        best = self.bottom_value
        for k in range(self.game.n_states):
            r = self.ratios[j, k]
            if not math.isfinite(r):
                continue
            best = max(best, self.curves[k].value(mu / r))
        return best

    def targets(self, j: int, mu: float) -> list[int]:
        vals = []
        for k in range(self.game.n_states):
            r = self.ratios[j, k]
            vals.append(-math.inf if not math.isfinite(r)
                        else self.curves[k].value(mu / r))
        best = max(max(vals), self.bottom_value)
        return [k for k, v in enumerate(vals) if v >= best - _VALUE_TIE]


@dataclass
class Frontier:
    """Burden-of-proof table sampled on a descending grid of payoff levels.

    ``mu_hat[i, k]`` is the minimum mass of a k-shaped message securing at
    least ``levels[i]`` (inf when level exceeds the curve's top value);
    ``mu_tilde[i, j]`` is the minimum own mass state j needs to secure the
    level through its cheapest target.
    """

    levels: np.ndarray
    mu_hat: np.ndarray
    mu_tilde: np.ndarray

    @property
    def top(self) -> np.ndarray:
        return self.mu_tilde[0]


@dataclass
class PoolRegion:
    """A pooled (flat) region: pooled value, the minimal message mass per
    active state, and the per-state bands of types joining the pool."""

    value: float
    message: dict[int, float]
    bands: dict[int, tuple[float, float]]
    is_bottom: bool


@dataclass
class ThresholdTable:
    """Per state: mass above which types earn exactly the state value
    (z_star) and mass above which they earn at least it (z_star_star)."""

    z_star: np.ndarray
    z_star_star: np.ndarray


@dataclass
class LimitSolution:
    """Full output of the continuum solver."""

    game: LimitGame
    curves: PayoffCurves
    pools: list[PoolRegion]
    bottom_value: float

    def frontier(self, n_levels: int = 257) -> Frontier:
        g = self.game
        top = g.values[-1]
        levels = np.linspace(top, 0.0, n_levels)
        j_n = g.n_states
        mu_hat = np.full((n_levels, j_n), np.inf)
        mu_tilde = np.full((n_levels, j_n), np.inf)
        for i, v in enumerate(levels):
            for k in range(j_n):
                mu_hat[i, k] = self.curves.curves[k].burden(v)
            for j in range(j_n):
                best = math.inf
                for k in range(j_n):
                    r = self.curves.ratios[j, k]
                    if math.isfinite(r):
                        best = min(best, r * mu_hat[i, k])
                mu_tilde[i, j] = min(best, 1.0) if best <= 1.0 + 1e-12 else best
        return Frontier(levels=levels, mu_hat=mu_hat, mu_tilde=mu_tilde)


# ---------------------------------------------------------------------------
# Local series machinery

_SHIFT_EPS = 1e-11


def _ratio_series(g: MassDensity, lam: Sequence[float], num_w: Sequence[float],
                  den_w: Sequence[float], alpha: float) -> tuple[float, ...] | None:
    """Taylor coefficients (orders 0..3) of the pooled-posterior ratio

        N(a)/D(a),  N(a) = sum_i num_w[i] * g(a * lam[i]),
                    D(a) = sum_i den_w[i] * g(a * lam[i]),

    expanded one-sidedly from the left at ``a = alpha``.  Leading zeros of
    both series cancel (l'Hopital), which resolves 0/0 anchors such as the
    top of the frontier where the density vanishes at mass 1.  Returns None
    when the denominator has no data mass at all near the point.
    """
    n = [0.0, 0.0, 0.0, 0.0]
    d = [0.0, 0.0, 0.0, 0.0]
    scale_n = scale_d = 0.0
    for lm, aw, bw in zip(lam, num_w, den_w):
        x = alpha * lm
        c = g.taylor(x, side="left")
        if c == (0.0, 0.0, 0.0, 0.0):
            continue
        csum = abs(c[0]) + abs(c[1]) + abs(c[2]) + abs(c[3])
        scale_n += abs(aw) * csum
        scale_d += abs(bw) * csum
        p = 1.0
        for i in range(4):
            n[i] += aw * p * c[i]
            d[i] += bw * p * c[i]
            p *= lm
    tol_n = _SHIFT_EPS * max(scale_n, 1e-300)
    tol_d = _SHIFT_EPS * max(scale_d, 1e-300)
    for _ in range(3):
        if abs(n[0]) <= tol_n and abs(d[0]) <= tol_d:
            n = n[1:] + [0.0]
            d = d[1:] + [0.0]
        else:
            break
    if abs(d[0]) <= tol_d:
        return None
    v0 = n[0] / d[0]
    v1 = (n[1] - v0 * d[1]) / d[0]
    v2 = (n[2] - v0 * d[2] - v1 * d[1]) / d[0]
    v3 = (n[3] - v0 * d[3] - v1 * d[2] - v2 * d[1]) / d[0]
    return (v0, v1, v2, v3)


# ---------------------------------------------------------------------------
# Frontier context and partition elements


@dataclass
class _Element:
    """One partition element: member states whose burdens scale together
    along a ray, plus the imitating lower states feeding their frontier."""

    members: tuple[int, ...]
    support: tuple[int, ...]
    lam: np.ndarray
    num_w: np.ndarray
    den_w: np.ndarray
    anchor_mu: dict[int, float]
    anchor_v: float
    alpha: float = 1.0

    def series(self, g: MassDensity, alpha: float) -> tuple[float, ...] | None:
        return _ratio_series(g, self.lam, self.num_w, self.den_w, alpha)


@dataclass
class FrontierContext:
    """Snapshot of the construction at one payoff level: which states have
    entered, their current burdens, and the level itself."""

    game: LimitGame
    ratios: np.ndarray
    active: tuple[int, ...]
    mu_hat: np.ndarray
    v: float


@dataclass
class PartitionState:
    """Partition of the active states into elements, with the indifference
    edges that tied them together."""

    elements: list[_Element]
    edges: list[tuple[int, int]]
    v: float


def _imitation_cost(ctx: FrontierContext, j: int,
                    exclude_self: bool = False) -> tuple[float, tuple[int, ...]]:
    """Cheapest mass for state j to reach the current frontier, and the set
    of targets attaining it (relative tie tolerance)."""
    best = math.inf
    costs: list[tuple[int, float]] = []
    for k in ctx.active:
        if exclude_self and k == j:
            continue
        r = ctx.ratios[j, k]
        if not math.isfinite(r):
            continue
        c = r * ctx.mu_hat[k]
        costs.append((k, c))
        best = min(best, c)
    if not costs:
        return math.inf, ()
    tol = _VALUE_TIE * max(1.0, best)
    return best, tuple(k for k, c in costs if c <= best + tol)


def _element_data(ctx: FrontierContext, members: Sequence[int],
                  lower_map: dict[int, tuple[float, tuple[int, ...]]],
                  ) -> tuple[tuple[int, ...], np.ndarray, np.ndarray, np.ndarray]:
    """Assemble the support, anchor masses and posterior weights for a
    candidate element with the given member set.  ``lower_map`` gives each
    non-active state's cheapest imitation cost and argmin target set; a
    lower state feeds every candidate that intersects its argmin set."""
    game = ctx.game
    sup: list[int] = []
    lam: list[float] = []
    for k in members:
        sup.append(k)
        lam.append(ctx.mu_hat[k])
    mset = set(members)
    for j, (cost, targets) in lower_map.items():
        if not math.isfinite(cost):
            continue
        if mset.intersection(targets):
            sup.append(j)
            lam.append(cost)
    lam_a = np.asarray(lam)
    pri = np.asarray([game.priors[s] for s in sup])
    val = np.asarray([game.values[s] for s in sup])
    return tuple(sup), lam_a, pri * val * lam_a, pri * lam_a


def _lower_map(ctx: FrontierContext) -> dict[int, tuple[float, tuple[int, ...]]]:
    out = {}
    for j in range(ctx.game.n_states):
        if j in ctx.active:
            continue
        out[j] = _imitation_cost(ctx, j)
    return out


def delta_n(ctx: FrontierContext, members: Sequence[int], alpha: float,
            n: int) -> float:
    """n-th one-sided derivative (scaled ray parameter) of the pooled
    posterior of the candidate element ``members`` at ray position alpha."""
    if not 0 <= n <= 3:
        raise ValueError("derivative order must be 0..3")
    sup, lam, aw, bw = _element_data(ctx, members, _lower_map(ctx))
    ser = _ratio_series(ctx.game.density, lam, aw, bw, alpha)
    if ser is None:
        return math.nan
    return ser[n] * math.factorial(n)


def _lex_key(ctx: FrontierContext, members: Sequence[int],
             lower_map: dict[int, tuple[float, tuple[int, ...]]]
             ) -> tuple[float, ...] | None:
    sup, lam, aw, bw = _element_data(ctx, members, lower_map)
    ser = _ratio_series(ctx.game.density, lam, aw, bw, 1.0)
    if ser is None:
        return None
    # Elements peel first when the value is higher, then when it falls more
    # slowly (derivatives of odd order enter with a minus sign because the
    # ray moves downward).
    return (ser[0], -ser[1], ser[2] * 2.0, -ser[3] * 6.0)


def partition_states(ctx: FrontierContext) -> PartitionState:
    """Split the active states into elements that step down together.

    States joined by an indifference edge (a shared-argmin lower imitator,
    or an active state indifferent between its own frontier and a foreign
    one) belong to one component; inside each component the subset with the
    lexicographically largest payoff expansion peels off first, repeatedly.
    """
    active = ctx.active
    lower_map = _lower_map(ctx)
    parent = {k: k for k in active}

    def find(a: int) -> int:
        while parent[a] != a:
            parent[a] = parent[parent[a]]
            a = parent[a]
        return a

    def union(a: int, b: int) -> None:
        ra, rb = find(a), find(b)
        if ra != rb:
            parent[ra] = rb

    edges: list[tuple[int, int]] = []
    for j, (cost, targets) in lower_map.items():
        for a, b in itertools.combinations(sorted(targets), 2):
            edges.append((a, b))
            union(a, b)
    for k in active:
        own = ctx.mu_hat[k]
        foreign, ftargets = _imitation_cost(ctx, k, exclude_self=True)
        if math.isfinite(foreign) and foreign <= own * (1.0 + _VALUE_TIE) + 1e-15:
            if foreign < own * (1.0 - 1e-7) - 1e-12:
                raise SolverError(
                    f"state {k} strictly prefers a foreign frontier at level "
                    f"{ctx.v:.6g}; missed assignment event")
            for m in ftargets:
                edges.append((min(k, m), max(k, m)))
                union(k, m)

    comps: dict[int, list[int]] = {}
    for k in active:
        comps.setdefault(find(k), []).append(k)

    elements: list[_Element] = []
    for root in sorted(comps, key=lambda r: min(comps[r])):
        remaining = sorted(comps[root])
        if len(remaining) > _MAX_COMPONENT:
            raise SolverError(
                f"partition component of size {len(remaining)} exceeds the "
                f"supported maximum {_MAX_COMPONENT}")
        avail_lower = dict(lower_map)
        while remaining:
            best_key: tuple[float, ...] | None = None
            best_members: tuple[int, ...] | None = None
            # Size-descending then lexicographic order makes the first
            # encountered full tie the largest subset with smallest members.
            for size in range(len(remaining), 0, -1):
                for cand in itertools.combinations(remaining, size):
                    key = _lex_key(ctx, cand, avail_lower)
                    if key is None:
                        continue
                    if best_key is None:
                        best_key, best_members = key, cand
                        continue
                    for a, b in zip(key, best_key):
                        tol = _VALUE_TIE * max(1.0, abs(a), abs(b))
                        if a > b + tol:
                            best_key, best_members = key, cand
                            break
                        if a < b - tol:
                            break
            if best_members is None:
                # No data mass anywhere near this component's frontier.
                best_members = tuple(remaining)
            sup, lam, aw, bw = _element_data(ctx, best_members, avail_lower)
            elements.append(_Element(
                members=tuple(best_members), support=sup, lam=lam,
                num_w=aw, den_w=bw,
                anchor_mu={k: ctx.mu_hat[k] for k in best_members},
                anchor_v=ctx.v))
            for j in list(avail_lower):
                if set(best_members).intersection(avail_lower[j][1]):
                    del avail_lower[j]
            remaining = [k for k in remaining if k not in best_members]
    return PartitionState(elements=elements, edges=sorted(set(edges)), v=ctx.v)


def putative_payoff(ctx: FrontierContext, element: _Element,
                    alpha: float) -> float:
    """Pooled posterior of the element's marginal types at ray position
    alpha (alpha = 1 is the element's anchor)."""
    ser = element.series(ctx.game.density, alpha)
    return math.nan if ser is None else ser[0]


def invert_putative(ctx: FrontierContext, element: _Element,
                    v_target: float) -> tuple[float | None, float]:
    """Largest ray position alpha <= element.alpha at which the element's
    pooled posterior equals ``v_target``.

    Returns (alpha, achieved_value); alpha is None when the value stalls
    above the target all the way down (the second entry is then the lowest
    value seen, signalling a forced pooling event).
    """
    g = ctx.game.density
    hi = element.alpha
    ser = element.series(g, hi)
    if ser is None:
        raise SolverError("element has no data mass at its anchor")
    v_hi = ser[0]
    if v_hi <= v_target + _VALUE_TIE:
        return hi, v_hi
    lo = hi
    v_lo = v_hi
    v_min = v_hi
    step = max(hi * 0.05, 1e-6)
    while lo > 1e-12:
        nxt = max(lo - step, 1e-12)
        ser = element.series(g, nxt)
        val = math.inf if ser is None else ser[0]
        v_min = min(v_min, val)
        lo, v_lo = nxt, val
        if val <= v_target:
            break
        step *= 1.7
    if v_lo > v_target:
        return None, v_min
    for _ in range(90):
        mid = 0.5 * (lo + hi)
        ser = element.series(g, mid)
        val = math.inf if ser is None else ser[0]
        if val > v_target:
            hi = mid
        else:
            lo, v_lo = mid, val
        if hi - lo <= _ALPHA_TOL * max(1.0, hi):
            break
    if abs(v_lo - v_target) > 1e-6 * max(1.0, abs(v_target)):
        raise SolverError(
            f"payoff level {v_target:.9g} unreachable continuously (nearest "
            f"{v_lo:.9g}); the data-mass support appears to have a gap")
    return lo, v_lo


# ---------------------------------------------------------------------------
# Pooling search


def _pool_value(ctx: FrontierContext, message: np.ndarray,
                min_mass: float = 0.0,
                ) -> tuple[float | None, dict[int, tuple[float, float]]]:
    """Pooled posterior if each active state k's message requirement were
    lowered to message[k]: every type whose cheapest way onto the current
    frontier costs more than its cheapest way into the pool joins.  Returns
    None when the recruited prior-weighted mass falls below min_mass."""
    game = ctx.game
    g = game.density
    num = den = 0.0
    bands: dict[int, tuple[float, float]] = {}
    for j in range(game.n_states):
        if j in ctx.active:
            hi = min(ctx.mu_hat[j], 1.0)
        else:
            cost, _ = _imitation_cost(ctx, j)
            hi = min(cost, 1.0)
        lo = math.inf
        for idx, k in enumerate(ctx.active):
            r = ctx.ratios[j, k]
            if math.isfinite(r):
                lo = min(lo, r * message[idx])
        lo = min(lo, 1.0)
        if not math.isfinite(lo) or hi <= lo:
            continue
        mass = g.cdf(hi) - g.cdf(lo)
        if mass <= 0:
            continue
        bands[j] = (lo, hi)
        num += game.priors[j] * game.values[j] * mass
        den += game.priors[j] * mass
    if den <= 0 or den < min_mass:
        return None, {}
    return num / den, bands


def _pool_marginal_value(ctx: FrontierContext, message: np.ndarray,
                         idx: int) -> float | None:
    """Posterior of the marginal types recruited by lowering coordinate idx
    of the pool message (the tangency condition at an interior optimum)."""
    game = ctx.game
    g = game.density
    k = ctx.active[idx]
    num = den = 0.0
    for j in range(game.n_states):
        r = ctx.ratios[j, k]
        if not math.isfinite(r):
            continue
        entry = r * message[idx]
        best = math.inf
        for i2, k2 in enumerate(ctx.active):
            r2 = ctx.ratios[j, k2]
            if math.isfinite(r2):
                best = min(best, r2 * message[i2])
        if entry > best * (1.0 + 1e-9) + 1e-15 or entry >= 1.0:
            continue
        flux = game.priors[j] * g(entry) * r
        num += flux * game.values[j]
        den += flux
    if den <= 0:
        return None
    return num / den


def pooling_search(ctx: FrontierContext,
                   min_mass: float = _POOL_MIN_MASS) -> PoolRegion | None:
    """Best pooled deviation at the current level: maximize the pooled
    posterior over per-state message masses in [0, mu_hat], requiring the
    pool to recruit at least min_mass of prior-weighted type mass; among
    maximizers prefer the smallest message (largest pool)."""
    n = len(ctx.active)
    caps = np.asarray([min(ctx.mu_hat[k], 1.0) for k in ctx.active])

    def U(msg: np.ndarray) -> float:
        val, _ = _pool_value(ctx, msg, min_mass)
        return -math.inf if val is None else val

    # Multi-start coordinate ascent on a deterministic start set.
    starts = [caps.copy(), caps * 0.5, np.zeros(n)]
    for s in (0.25, 0.75, 0.9):
        starts.append(caps * s)
    best_val = -math.inf
    best_msg = caps.copy()
    for start in starts:
        msg = start.clip(0.0, caps)
        cur = U(msg)
        for _ in range(200):
            improved = False
            for i in range(n):
                lo_b, hi_b = 0.0, caps[i]
                # dense scan then golden-section refine
                grid = np.linspace(lo_b, hi_b, 65)
                vals = []
                for x in grid:
                    msg[i] = x
                    vals.append(U(msg))
                gi = int(np.argmax(vals))
                lo = grid[max(gi - 1, 0)]
                hi = grid[min(gi + 1, 64)]
                phi = (math.sqrt(5.0) - 1.0) / 2.0
                a, b = lo, hi
                c1 = b - phi * (b - a)
                c2 = a + phi * (b - a)
                msg[i] = c1
                f1 = U(msg)
                msg[i] = c2
                f2 = U(msg)
                for _ in range(60):
                    if b - a <= _POOL_TOL * 0.01:
                        break
                    if f1 < f2:
                        a, c1, f1 = c1, c2, f2
                        c2 = a + phi * (b - a)
                        msg[i] = c2
                        f2 = U(msg)
                    else:
                        b, c2, f2 = c2, c1, f1
                        c1 = b - phi * (b - a)
                        msg[i] = c1
                        f1 = U(msg)
                x_new = 0.5 * (a + b)
                msg[i] = x_new
                v_new = U(msg)
                if v_new > cur + 1e-14:
                    cur = v_new
                    improved = True
            if not improved:
                break
        if cur > best_val + 1e-12:
            best_val = cur
            best_msg = msg.copy()
    if not math.isfinite(best_val):
        return None

    # Tangency refinement: at an interior optimum the marginal recruits at
    # each lowered coordinate have posterior equal to the pooled value.
    for _ in range(40):
        moved = 0.0
        for i in range(n):
            if best_msg[i] <= 1e-12:
                continue
            mv = _pool_marginal_value(ctx, best_msg, i)
            if mv is None:
                continue
            target = best_val
            lo_b, hi_b = 0.0, caps[i]

            def resid(x: float) -> float | None:
                best_msg[i] = x
                return _pool_marginal_value(ctx, best_msg, i)

            # marginal value is (weakly) increasing in the entry mass near
            # the optimum; bisect marginal == pooled value
            x0 = best_msg[i]
            lo, hi = lo_b, min(hi_b, 1.0 / max(
                min(ctx.ratios[j, ctx.active[i]]
                    for j in range(ctx.game.n_states)
                    if math.isfinite(ctx.ratios[j, ctx.active[i]])), 1e-12))
            hi = min(hi, hi_b)
            f_lo = resid(lo)
            f_hi = resid(hi)
            if f_lo is None or f_hi is None or not (f_lo <= target <= f_hi):
                best_msg[i] = x0
                continue
            for _ in range(70):
                mid = 0.5 * (lo + hi)
                fm = resid(mid)
                if fm is None or fm < target:
                    lo = mid
                else:
                    hi = mid
            best_msg[i] = 0.5 * (lo + hi)
            moved = max(moved, abs(best_msg[i] - x0))
            v2, _ = _pool_value(ctx, best_msg)
            if v2 is not None and v2 >= best_val - 1e-12:
                best_val = max(best_val, v2)
            else:
                best_msg[i] = x0
        best_val = max(best_val, U(best_msg))
        if moved <= _POOL_TOL * 0.01:
            break

    # Prefer the smallest message among ties: push coordinates down while
    # the value does not drop.
    for i in range(n):
        lo, hi = 0.0, best_msg[i]
        if U(np.where(np.arange(n) == i, 0.0, best_msg)) >= best_val - 1e-12:
            best_msg[i] = 0.0
            continue
        for _ in range(60):
            mid = 0.5 * (lo + hi)
            trial = best_msg.copy()
            trial[i] = mid
            if U(trial) >= best_val - 1e-12:
                hi = mid
            else:
                lo = mid
        best_msg[i] = hi
    best_val = U(best_msg)
    val, bands = _pool_value(ctx, best_msg, min_mass)
    if val is None:
        return None
    message = {k: float(best_msg[i]) for i, k in enumerate(ctx.active)}
    return PoolRegion(value=float(val), message=message, bands=bands,
                      is_bottom=bool(min(best_msg) <= 1e-10))


# ---------------------------------------------------------------------------
# Event detection


@dataclass
class _Event:
    v: float
    kind: str  # "assignment", "split", "pool"
    payload: object = None


def detect_events(ctx: FrontierContext, partition: PartitionState,
                  v_next: float,
                  frontier_at: Callable[[float], np.ndarray]) -> list[_Event]:
    """Scan (v_next, ctx.v) for structural events: assignment flips of
    imitating states (cheapest-target changes), element splits (a proper
    subset's pooled posterior rising above the common level), and pooling
    onsets (the best pooled deviation reaching the current level)."""
    events: list[_Event] = []
    game = ctx.game

    def ctx_at(v: float) -> FrontierContext:
        return FrontierContext(game=game, ratios=ctx.ratios, active=ctx.active,
                               mu_hat=frontier_at(v), v=v)

    # -- assignment flips ---------------------------------------------------
    def assign_margin(c: FrontierContext) -> float:
        worst = math.inf
        for el in partition.elements:
            mset = set(el.members)
            for j in el.support:
                if j in mset:
                    continue
                best_in = min(c.ratios[j, k] * c.mu_hat[k]
                              for k in el.members
                              if math.isfinite(c.ratios[j, k]))
                best_out = math.inf
                for k in c.active:
                    if k in mset:
                        continue
                    r = c.ratios[j, k]
                    if math.isfinite(r):
                        best_out = min(best_out, r * c.mu_hat[k])
                if math.isfinite(best_out):
                    worst = min(worst, best_out - best_in)
            for k in el.members:
                best_out = math.inf
                for m in c.active:
                    if m in mset:
                        continue
                    r = c.ratios[k, m]
                    if math.isfinite(r):
                        best_out = min(best_out, r * c.mu_hat[m])
                if math.isfinite(best_out):
                    worst = min(worst, best_out - c.mu_hat[k])
        return worst

    m_next = assign_margin(ctx_at(v_next))
    if m_next < -1e-12:
        lo, hi = v_next, ctx.v
        for _ in range(60):
            mid = 0.5 * (lo + hi)
            if assign_margin(ctx_at(mid)) < -1e-12:
                lo = mid
            else:
                hi = mid
            if hi - lo <= _EVENT_TOL:
                break
        events.append(_Event(v=hi, kind="assignment"))

    # -- element splits -----------------------------------------------------
    for ei, el in enumerate(partition.elements):
        if len(el.members) < 2:
            continue

        def split_gain(c: FrontierContext) -> float:
            lm = _lower_map(c)
            gain = -math.inf
            for size in range(1, len(el.members)):
                for cand in itertools.combinations(el.members, size):
                    sup, lam, aw, bw = _element_data(c, cand, lm)
                    ser = _ratio_series(game.density, lam, aw, bw, 1.0)
                    if ser is not None:
                        gain = max(gain, ser[0] - c.v)
            return gain

        if split_gain(ctx_at(v_next)) > _VALUE_TIE:
            lo, hi = v_next, ctx.v
            for _ in range(60):
                mid = 0.5 * (lo + hi)
                if split_gain(ctx_at(mid)) > _VALUE_TIE:
                    lo = mid
                else:
                    hi = mid
                if hi - lo <= _EVENT_TOL:
                    break
            events.append(_Event(v=hi, kind="split", payload=ei))

    # -- pooling onset --------------------------------------------------------
    def pool_gain(c: FrontierContext) -> tuple[float, PoolRegion | None]:
        # cheap ray pre-test along the scaled frontier
        best = -math.inf
        for s in np.linspace(0.0, 1.0, 17):
            msg = np.asarray([s * min(c.mu_hat[k], 1.0) for k in c.active])
            val, _ = _pool_value(c, msg, _POOL_MIN_MASS)
            if val is not None:
                best = max(best, val)
        if best < c.v - 1e-3:
            return best - c.v, None
        region = pooling_search(c)
        if region is None:
            return -math.inf, None
        return region.value - c.v, region

    gain_next, region_next = pool_gain(ctx_at(v_next))
    if gain_next >= -_EVENT_TOL:
        lo, hi = v_next, ctx.v
        region = region_next
        for _ in range(60):
            if hi - lo <= _EVENT_TOL:
                break
            mid = 0.5 * (lo + hi)
            gm, rm = pool_gain(ctx_at(mid))
            if gm >= -_EVENT_TOL:
                lo, region = mid, rm
            else:
                hi = mid
        if region is None:
            _, region = pool_gain(ctx_at(lo))
        if region is not None:
            events.append(_Event(v=lo, kind="pool", payload=region))
    return events


# ---------------------------------------------------------------------------
# The construction engine


class _LimitEngine:
    def __init__(self, game: LimitGame):
        self.game = game
        self.g = game.density
        self.R = imitation_ratios(game)
        self.theta = np.asarray(game.values)
        self.beta = np.asarray(game.priors)
        self.J = game.n_states
        self.mu_hat = np.full(self.J, np.nan)
        self.active: list[int] = []
        self.segments: list[list[CurveSegment]] = [[] for _ in range(self.J)]
        self.pools: list[PoolRegion] = []
        self.bottom_value: float | None = None
        self.partition: PartitionState | None = None
        self.v = float(self.theta[-1])

    # -- helpers ------------------------------------------------------------

    def ctx(self, v: float | None = None,
            mu_hat: np.ndarray | None = None) -> FrontierContext:
        return FrontierContext(
            game=self.game, ratios=self.R, active=tuple(self.active),
            mu_hat=self.mu_hat if mu_hat is None else mu_hat,
            v=self.v if v is None else v)

    def _frontier_at(self, v: float) -> np.ndarray:
        """Per-state burdens at level v within the current strict stretch."""
        out = self.mu_hat.copy()
        assert self.partition is not None
        for el in self.partition.elements:
            alpha, _ = invert_putative(self.ctx(), el, v)
            if alpha is None:
                raise SolverError(
                    f"level {v:.9g} not reachable while locating an event")
            for k in el.members:
                out[k] = alpha * el.anchor_mu[k]
        return out

    def _advance(self, v_next: float) -> None:
        """Commit one descent step: move every element's ray position to the
        new common level without recording segments."""
        assert self.partition is not None
        for el in self.partition.elements:
            alpha, _ = invert_putative(self.ctx(), el, v_next)
            if alpha is None:
                raise SolverError(
                    f"strict stretch cannot reach level {v_next:.9g}")
            el.alpha = alpha
            for k in el.members:
                self.mu_hat[k] = alpha * el.anchor_mu[k]
        self.v = v_next

    def _emit_strict(self, v_end: float) -> None:
        """Finalize the current element incarnations at v_end: record one
        strict segment per member state spanning anchor level -> v_end."""
        assert self.partition is not None
        for el in self.partition.elements:
            if v_end >= el.anchor_v - 1e-15:
                continue
            alpha, _ = invert_putative(self.ctx(), el, v_end)
            if alpha is None:
                raise SolverError(
                    f"strict stretch cannot reach level {v_end:.9g}")
            g = self.g
            lam, aw, bw = el.lam, el.num_w, el.den_w
            for k in el.members:
                anchor_k = el.anchor_mu[k]
                mu_end = alpha * anchor_k

                def make_eval(anchor_mu_k: float) -> Callable[[float], float]:
                    def _eval(mu: float) -> float:
                        ser = _ratio_series(g, lam, aw, bw, mu / anchor_mu_k)
                        if ser is None:
                            raise SolverError("no data mass inside segment")
                        return ser[0]
                    return _eval

                if anchor_k - mu_end > 1e-15:
                    self.segments[k].append(CurveSegment(
                        mu_lo=mu_end, mu_hi=anchor_k,
                        v_lo=v_end, v_hi=el.anchor_v, kind="strict",
                        _eval=make_eval(anchor_k)))
                self.mu_hat[k] = mu_end
            el.alpha = alpha

    def _repartition(self, v: float) -> None:
        self.v = v
        self.partition = partition_states(self.ctx())
        # Condition check: every element's pooled posterior at its anchor
        # must equal the common level.
        for el in self.partition.elements:
            ser = el.series(self.g, 1.0)
            if ser is not None and abs(ser[0] - v) > 1e-5 * max(1.0, abs(v)):
                raise SolverError(
                    f"element {el.members} anchors at value {ser[0]:.9g} "
                    f"instead of the common level {v:.9g}")

    # -- pooling ------------------------------------------------------------

    def _apply_pool(self, region: PoolRegion) -> bool:
        """Record the pool's flat segments; returns True when it is the
        bottom pool (construction finished)."""
        v_star = region.value
        for k in self.active:
            lo = region.message[k]
            hi = min(self.mu_hat[k], 1.0)
            if hi - lo > 1e-12:
                self.segments[k].append(CurveSegment(
                    mu_lo=lo, mu_hi=hi, v_lo=v_star, v_hi=v_star, kind="pool"))
            self.mu_hat[k] = lo
        self.pools.append(region)
        if region.is_bottom:
            self.bottom_value = v_star
            return True
        return False

    def _finish_bottom(self, v: float) -> None:
        """Terminal pool at the empty message: everyone left joins."""
        msg = np.zeros(len(self.active))
        val, bands = _pool_value(self.ctx(v), msg)
        if val is None:
            val = v
            bands = {}
        region = PoolRegion(
            value=float(val),
            message={k: 0.0 for k in self.active},
            bands=bands, is_bottom=True)
        self._apply_pool(region)

    # -- stage machinery ------------------------------------------------------

    def _stage_entry(self, l: int) -> None:
        """State l's types start separating at level theta_l: record its
        honest plateau and put it on the frontier."""
        v = float(self.theta[l])
        mu_check = 0.0
        for j in range(self.J):
            if j == l:
                continue
            r = self.R[j, l]
            if not math.isfinite(r):
                continue
            if j in self.active:
                tilde = self.mu_hat[j]
                # j could also reach the frontier via a third state
                c, _ = _imitation_cost(self.ctx(v), j)
                tilde = min(tilde, c)
            else:
                tilde, _ = _imitation_cost(self.ctx(v), j)
            if math.isfinite(tilde):
                mu_check = max(mu_check, tilde / r)
        mu_check = min(mu_check, 1.0)
        if mu_check < 1.0 - 1e-12:
            self.segments[l].append(CurveSegment(
                mu_lo=mu_check, mu_hi=1.0, v_lo=v, v_hi=v, kind="honest"))
        self.mu_hat[l] = mu_check
        self.active.append(l)
        self.active.sort()

    def _run_stage(self, floor: float) -> bool:
        """Descend the common level from self.v to floor; returns True when
        the bottom pool fired (construction complete)."""
        self._repartition(self.v)
        gaps = np.diff(self.theta)
        h0 = float(gaps[-1]) / 256.0 if len(gaps) else self.theta[-1] / 256.0
        h = h0
        guard = 0
        last_signature: tuple | None = None
        while self.v > floor + 1e-12:
            guard += 1
            if guard > 200_000:
                raise SolverError("stage descent failed to terminate")
            v_next = max(self.v - h, floor)
            stall_level: float | None = None
            assert self.partition is not None
            for el in self.partition.elements:
                alpha, vmin = invert_putative(self.ctx(), el, v_next)
                if alpha is None:
                    stall_level = vmin if stall_level is None else max(
                        stall_level, vmin)
            if stall_level is not None:
                # The level cannot be pushed further: a pool must fire at or
                # above the stall value.
                region = self._locate_stall_pool(max(stall_level, floor))
                self._emit_strict(max(region.value, floor))
                if self._apply_pool(region):
                    return True
                self._repartition(region.value)
                h = h0 / 4.0
                continue
            events = detect_events(self.ctx(), self.partition, v_next,
                                    self._frontier_at)
            if not events:
                self._advance(v_next)
                h = min(h * 1.25, h0 * 4.0)
                continue
            ev = max(events, key=lambda e: e.v)
            if ev.kind == "pool":
                region: PoolRegion = ev.payload  # type: ignore[assignment]
                self._emit_strict(min(max(region.value, floor), self.v))
                if self._apply_pool(region):
                    return True
                self._repartition(region.value)
                h = h0 / 4.0
                continue
            v_ev = min(max(ev.v, floor), self.v)
            self._emit_strict(v_ev)
            self._repartition(v_ev)
            sig = (round(v_ev / max(_EVENT_TOL, 1e-12)),
                   tuple(el.members for el in self.partition.elements))
            if sig == last_signature:
                raise SolverError(
                    f"event loop did not advance below level {v_ev:.9g}")
            last_signature = sig
            h = max(h / 2.0, 1e-9)
        self._emit_strict(floor)
        return False

    def _locate_stall_pool(self, stall_level: float) -> PoolRegion:
        """The strict descent stalls at stall_level: find the highest level
        at which the best pooled deviation reaches the common level."""
        def gain(v: float) -> tuple[float, PoolRegion | None]:
            mu = self._frontier_at(max(v, stall_level))
            c = self.ctx(v=v, mu_hat=mu)
            region = pooling_search(c)
            if region is None:
                return -math.inf, None
            return region.value - v, region

        lo, hi = stall_level, self.v
        g_lo, r_lo = gain(lo)
        if g_lo < -1e-6:
            raise SolverError(
                f"strict descent stalled at level {stall_level:.9g} but no "
                f"pooled deviation reaches it")
        for _ in range(60):
            if hi - lo <= _EVENT_TOL:
                break
            mid = 0.5 * (lo + hi)
            gm, rm = gain(mid)
            if gm >= -_EVENT_TOL:
                lo, r_lo = mid, rm
            else:
                hi = mid
        if r_lo is None:
            raise SolverError("failed to locate the pooling level")
        return r_lo

    # -- main ----------------------------------------------------------------

    def run(self) -> None:
        if self.J == 1:
            self.segments[0].append(CurveSegment(
                mu_lo=0.0, mu_hi=1.0, v_lo=self.theta[0], v_hi=self.theta[0],
                kind="honest"))
            self.mu_hat[0] = 0.0
            self.bottom_value = float(self.theta[0])
            return
        top = self.J - 1
        finite = [self.R[k, top] for k in range(self.J)
                  if k != top and math.isfinite(self.R[k, top])]
        alpha_star = 1.0 / min(finite) if finite else 0.0
        if alpha_star < 1.0 - 1e-12:
            self.segments[top].append(CurveSegment(
                mu_lo=alpha_star, mu_hi=1.0, v_lo=self.theta[top],
                v_hi=self.theta[top], kind="honest"))
        self.mu_hat[top] = alpha_star
        self.active = [top]
        self.v = float(self.theta[top])
        if alpha_star <= 1e-12:
            # No state can imitate the top state at all: everyone separates
            # at their own value, one stage per state.
            self.mu_hat[top] = 0.0
        for l in range(self.J - 2, -1, -1):
            if self._run_stage(float(self.theta[l])):
                return
            self._stage_entry(l)
        if self._run_stage(0.0):
            return
        if self.bottom_value is None:
            self._finish_bottom(0.0)


def _assemble(engine: _LimitEngine) -> LimitSolution:
    game = engine.game
    bottom = engine.bottom_value if engine.bottom_value is not None else 0.0
    curves = []
    for k in range(game.n_states):
        segs = sorted(engine.segments[k], key=lambda s: (s.mu_lo, s.mu_hi))
        curves.append(StateCurve(state=k, segments=segs, floor=bottom))
    pc = PayoffCurves(game=game, curves=curves, ratios=engine.R,
                      bottom_value=bottom)
    sol = LimitSolution(game=game, curves=pc, pools=engine.pools,
                        bottom_value=bottom)
    _validate_solution(sol)
    return sol


def _validate_solution(sol: LimitSolution, n_grid: int = 10_000) -> None:
    """Structural invariants: message-value curves are nondecreasing and
    continuous in mass, capped by the state value; every recorded pool is
    locally optimal; posterior values integrate back to the prior mean."""
    game = sol.game
    grid = np.linspace(0.0, 1.0, n_grid + 1)
    for k in range(game.n_states):
        curve = sol.curves.curves[k]
        prev = -math.inf
        prev_mu = 0.0
        for mu in grid:
            v = curve.value(mu)
            if v < prev - 1e-7:
                raise SolverError(
                    f"message value of state {k} decreases near mass {mu:.6g}")
            if mu - prev_mu <= 2.5e-4 and abs(v - prev) > 0.05 and prev > -math.inf:
                # re-check with a fine probe: jump vs steep slope
                vm = curve.value(0.5 * (prev_mu + mu))
                if not (min(prev, v) - 1e-7 <= vm <= max(prev, v) + 1e-7):
                    raise SolverError(
                        f"message value of state {k} discontinuous near mass "
                        f"{mu:.6g}")
            prev, prev_mu = v, mu
        if curve.segments:
            top = max(seg.v_hi for seg in curve.segments)
            if top > game.values[k] + 1e-7:
                raise SolverError(
                    f"state {k} message value {top:.9g} exceeds the state "
                    f"value")
    gap = bayes_gap(sol)
    if gap > 1e-4:
        raise SolverError(
            f"posterior values integrate to a gap of {gap:.3g} from the "
            f"prior mean")


def solve_limit(game: LimitGame) -> LimitSolution:
    """Equilibrium outcome of the continuum-data disclosure game.

    Returns the per-state message-value curves, the pooled regions and the
    bottom-pool level.  Raises SolverError when the construction's internal
    consistency checks fail (e.g. a data-mass density whose support has an
    interior gap the strict descent cannot cross).
    """
    engine = _LimitEngine(game)
    engine.run()
    return _assemble(engine)


# ---------------------------------------------------------------------------
# Binary-state closed form


def _binary_parts(game: LimitGame) -> tuple[float, float, float, float, float]:
    if game.n_states != 2:
        raise GameValidationError("states", "binary path requires two states")
    r = imitation_ratios(game)[0, 1]
    if not math.isfinite(r):
        raise GameValidationError(
            "outcomes", "binary path requires the low state to be able to "
                        "imitate the high state")
    bl, bh = game.priors
    tl, th = game.values
    return r, bl, bh, tl, th


def rho_binary(mu: float, game: LimitGame) -> float:
    """Separating posterior of a high-shaped message of mass mu in a
    two-state game: the prior-weighted share of high-state types at mass mu
    against low-state imitators at mass r*mu."""
    r, bl, bh, tl, th = _binary_parts(game)
    g = game.density
    x = r * mu
    hi = bh * g(mu)
    lo = bl * r * (g(x) if x <= 1.0 else 0.0)
    if hi + lo > 0:
        share = hi / (hi + lo)
        return tl + (th - tl) * share
    # 0/0: expand one-sidedly toward the interior
    lam = [1.0, r]
    aw = [bh * th, bl * r * tl]
    bw = [bh, bl * r]
    ser = _ratio_series(g, lam, aw, bw, mu)
    if ser is not None:
        return ser[0]
    return game.prior_mean()


def _binary_phi_s(game: LimitGame, mu: float) -> tuple[float, float]:
    """Cumulative posterior weight and cumulative mass of the pool of types
    at or below the high-burden mu (low types enter at mass r*mu)."""
    r, bl, bh, tl, th = _binary_parts(game)
    G = game.density.cdf
    x = min(r * mu, 1.0)
    s = bh * G(mu) + bl * G(x)
    phi = th * bh * G(mu) + tl * bl * G(x)
    return phi, s


def gcm_iron(game: LimitGame, n_grid: int = 4096) -> StateCurve:
    """High-state message-value curve of a two-state game via the greatest
    convex minorant of cumulative posterior weight against cumulative mass.

    Intervals where the separating posterior decreases are replaced by flat
    stretches (chords of the minorant); strict stretches evaluate through
    the exact separating posterior.
    """
    r, bl, bh, tl, th = _binary_parts(game)
    g = game.density
    # Breakpoint-aware grid in the high-burden coordinate.
    knots = set(np.linspace(0.0, 1.0, n_grid + 1))
    for b in g.breakpoints:
        knots.add(b)
        if b / r <= 1.0:
            knots.add(b / r)
    xs = np.asarray(sorted(knots))
    phi_s = [_binary_phi_s(game, x) for x in xs]
    dphi = np.asarray([phi_s[i + 1][0] - phi_s[i][0]
                       for i in range(len(xs) - 1)])
    ds = np.asarray([phi_s[i + 1][1] - phi_s[i][1]
                     for i in range(len(xs) - 1)])
    live = ds > 1e-15
    # Pool adjacent violators on the live intervals (greatest convex
    # minorant of phi as a function of s == isotonic slopes).
    idx = np.flatnonzero(live)
    blocks: list[list[float]] = []  # [slope_num, slope_den, i_start, i_end]
    for i in idx:
        blocks.append([float(dphi[i]), float(ds[i]), int(i), int(i)])
        while len(blocks) >= 2:
            a = blocks[-2]
            b = blocks[-1]
            if a[0] * b[1] <= b[0] * a[1] + 1e-18:
                break
            a[0] += b[0]
            a[1] += b[1]
            a[3] = b[3]
            blocks.pop()
    def rho_at(x: float) -> float:
        return rho_binary(x, game)

    def chord_value(a: float, b: float) -> float:
        pa, sa = _binary_phi_s(game, a)
        pb, sb = _binary_phi_s(game, b)
        return (pb - pa) / max(sb - sa, 1e-300)

    if not blocks:
        return StateCurve(state=1, segments=[], floor=tl)
    x_first = float(xs[int(blocks[0][2])])

    # Refine merged blocks: an interior chord satisfies the tangency
    # conditions rho(a) = V(a, b) = rho(b); the bottom chord pins a at the
    # start of the data mass and satisfies rho(b) = V only.
    chords: list[tuple[float, float, float]] = []
    for bi, (num, den, i0, i1) in enumerate(blocks):
        if not (i1 > i0 and _block_was_merged(dphi, ds, int(i0), int(i1))):
            continue
        lo = float(xs[int(i0)])
        hi = float(xs[int(i1) + 1])
        pin_a = bi == 0 and lo <= x_first + 1e-12
        a, b = lo, hi
        for _ in range(150):
            v = chord_value(a, b)
            b_new = _cross_upward(rho_at, b, v, max(a + 1e-12, 1e-12), 1.0)
            v = chord_value(a, b_new)
            a_new = a if pin_a else _cross_upward(
                rho_at, a, v, 0.0, b_new * (1.0 - 1e-9))
            if abs(a_new - a) <= 1e-14 and abs(b_new - b) <= 1e-14:
                a, b = a_new, b_new
                break
            a, b = a_new, b_new
        chords.append((a, b, chord_value(a, b)))

    # Assemble: chords become flat pool segments; the space between them is
    # strictly separating and evaluates through the exact posterior.
    segs: list[CurveSegment] = []
    cursor = x_first
    for a, b, val in chords:
        a = max(a, cursor)
        if a - cursor > 1e-12:
            segs.append(_strict_gap_segment(rho_at, cursor, a))
        if b - a > 1e-12:
            segs.append(CurveSegment(mu_lo=a, mu_hi=b, v_lo=val, v_hi=val,
                                     kind="pool"))
        cursor = max(cursor, b)
    if 1.0 - cursor > 1e-12:
        segs.append(_strict_gap_segment(rho_at, cursor, 1.0))
    floor_val = segs[0].v_lo if segs else tl
    if floor_val < tl - _VALUE_TIE:
        raise SolverError(
            "two-state convex-minorant path assumes the low state never "
            "separates; its bottom value fell below the low state value")
    return StateCurve(state=1, segments=segs, floor=floor_val)


def _cross_upward(f: Callable[[float], float], x0: float, level: float,
                  lo_lim: float, hi_lim: float) -> float:
    """Nearest point to x0 where f crosses ``level`` upward (f below to the
    left, above to the right), found by a short bracketing walk followed by
    bisection.  Falls back to the nearest limit when no crossing exists."""
    step = 2.5e-4
    if f(x0) > level:
        hi = x0
        lo = x0
        while lo > lo_lim + 1e-15:
            lo = max(lo - step, lo_lim)
            if f(lo) <= level:
                break
            step *= 1.4
        else:
            return lo_lim
        if f(lo) > level:
            return lo_lim
    else:
        lo = x0
        hi = x0
        while hi < hi_lim - 1e-15:
            hi = min(hi + step, hi_lim)
            if f(hi) > level:
                break
            step *= 1.4
        else:
            return hi_lim
        if f(hi) <= level:
            return hi_lim
    for _ in range(90):
        mid = 0.5 * (lo + hi)
        if f(mid) > level:
            hi = mid
        else:
            lo = mid
        if hi - lo <= 1e-15 * max(1.0, hi):
            break
    return hi


def _strict_gap_segment(rho_at: Callable[[float], float], lo: float,
                        hi: float) -> CurveSegment:
    v_lo = rho_at(min(lo + 1e-9, 0.5 * (lo + hi)))
    v_hi = rho_at(hi)
    return CurveSegment(mu_lo=lo, mu_hi=hi, v_lo=min(v_lo, v_hi),
                        v_hi=max(v_lo, v_hi), kind="strict", _eval=rho_at)


def _block_was_merged(dphi: np.ndarray, ds: np.ndarray, i0: int, i1: int) -> bool:
    """True when the block [i0, i1] merged intervals with non-monotone
    slopes (i.e. actual ironing rather than a constant-posterior run)."""
    num = den = 0.0
    slopes = []
    for i in range(i0, i1 + 1):
        if ds[i] > 1e-15:
            slopes.append(dphi[i] / ds[i])
    if len(slopes) < 2:
        return False
    v = sum(s * w for s, w in zip(slopes, [1.0] * len(slopes))) / len(slopes)
    return (max(slopes) - min(slopes)) > 1e-9 * max(1.0, abs(v))


def solve_binary(game: LimitGame) -> LimitSolution:
    """Equilibrium outcome of a two-state game via the convex-minorant
    construction; returns the same structure as solve_limit."""
    r, bl, bh, tl, th = _binary_parts(game)
    high = gcm_iron(game)
    bottom = high.floor
    high.floor = bottom
    low = StateCurve(state=0, segments=[], floor=bottom)
    pc = PayoffCurves(game=game, curves=[low, high],
                      ratios=imitation_ratios(game), bottom_value=bottom)
    pools = [PoolRegion(value=seg.v_lo,
                        message={1: seg.mu_lo},
                        bands={1: (seg.mu_lo, seg.mu_hi)},
                        is_bottom=bool(seg.mu_lo <= 1e-12))
             for seg in high.segments if seg.kind == "pool"]
    return LimitSolution(game=game, curves=pc, pools=pools,
                         bottom_value=bottom)


# ---------------------------------------------------------------------------
# Post-processing


def thresholds(sol: LimitSolution, tol: float = 1e-9) -> ThresholdTable:
    """Honesty thresholds per state, splitting [0, 1] into three ordered
    mass regions: doubted types below z_star_star (payoff below the state
    value), honestly-known types on [z_star_star, z_star] (payoff equal),
    and masquerading types above z_star (payoff strictly above).  Empty
    regions collapse: z_star = 1 when no type masquerades, z_star_star = 0
    when no type is doubted."""
    game = sol.game
    j_n = game.n_states
    z_star = np.zeros(j_n)
    z_ss = np.zeros(j_n)
    grid = np.linspace(0.0, 1.0, 4097)
    for j in range(j_n):
        pay = np.asarray([sol.curves.type_payoff(j, m) for m in grid])
        th_j = game.values[j]
        below = pay < th_j - tol
        above = pay > th_j + tol
        idx_b = np.flatnonzero(below)
        if len(idx_b) == 0:
            z_ss[j] = 0.0
        else:
            i = idx_b[-1]
            z_ss[j] = _cross(sol, j, grid[i], grid[min(i + 1, len(grid) - 1)],
                             lambda p: p >= th_j - tol)
        idx_k = np.flatnonzero(~above)
        if len(idx_k) == 0:
            z_star[j] = 0.0
        else:
            i = idx_k[-1]
            if i == len(grid) - 1:
                z_star[j] = 1.0
            else:
                z_star[j] = _cross(sol, j, grid[i], grid[i + 1],
                                   lambda p: p > th_j + tol)
        z_star[j] = max(z_star[j], z_ss[j])
    return ThresholdTable(z_star=z_star, z_star_star=z_ss)


def _cross(sol: LimitSolution, j: int, lo: float, hi: float,
           pred) -> float:
    """Boundary in (lo, hi] where pred(payoff) switches from False to True."""
    for _ in range(60):
        mid = 0.5 * (lo + hi)
        if pred(sol.curves.type_payoff(j, mid)):
            hi = mid
        else:
            lo = mid
    return hi


def limit_strategy(sol: LimitSolution, j: int, mu: float,
                   ) -> list[tuple[int | None, float, float]]:
    """Equilibrium message mixture of the type with mass mu in state j:
    list of (target state, message mass, weight).  A None target denotes
    the empty message (bottom pool); a truthful type reports (j, mu)."""
    game = sol.game
    u = sol.curves.type_payoff(j, mu)
    if u <= sol.bottom_value + _VALUE_TIE:
        tg = sol.curves.targets(j, mu)
        if not (j in tg and abs(u - game.values[j]) <= _VALUE_TIE):
            return [(None, 0.0, 1.0)]
    targets = sol.curves.targets(j, mu)
    if j in targets and abs(u - game.values[j]) <= 1e-7:
        return [(j, mu, 1.0)]
    msgs: list[tuple[int | None, float, float]] = []
    for k in targets:
        m = sol.curves.curves[k].burden(u - _VALUE_TIE)
        if math.isfinite(m):
            msgs.append((k, float(m), 0.0))
    if not msgs:
        return [(None, 0.0, 1.0)]
    w = 1.0 / len(msgs)
    return [(k, m, w) for k, m, _ in msgs]


def bayes_gap(sol: LimitSolution) -> float:
    """Absolute gap between the prior mean and the integral of equilibrium
    payoffs over all types (zero in exact equilibrium)."""
    game = sol.game
    g = game.density
    total = 0.0
    for j in range(game.n_states):
        pts = set(g.breakpoints)
        for k in range(game.n_states):
            r = sol.curves.ratios[j, k]
            if not math.isfinite(r):
                continue
            for seg in sol.curves.curves[k].segments:
                for m in (seg.mu_lo, seg.mu_hi):
                    x = m * r
                    if 0.0 < x < 1.0:
                        pts.add(x)
        pts = sorted(p for p in pts if 0.0 < p < 1.0)

        def integrand(m: float, jj: int = j) -> float:
            return sol.curves.type_payoff(jj, m) * g(m)

        val, _ = integrate.quad(integrand, 0.0, 1.0, points=pts,
                                limit=200 + 10 * len(pts))
        total += game.priors[j] * val
    return abs(total - game.prior_mean())


# ---------------------------------------------------------------------------
# CSV emitters


def emit_payoff_csv(sol: LimitSolution, path: str, n_grid: int = 1000) -> None:
    """Type payoffs on a uniform mass grid: state, mu, payoff, segment_kind."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["state", "mu", "payoff", "segment_kind"])
        for j in range(sol.game.n_states):
            for i in range(n_grid + 1):
                mu = i / n_grid
                pay = float(sol.curves.type_payoff(j, mu))
                kind = _dominant_kind(sol, j, mu, pay)
                w.writerow([j, repr(mu), repr(pay), kind])


def _dominant_kind(sol: LimitSolution, j: int, mu: float, pay: float) -> str:
    if pay <= sol.bottom_value + _VALUE_TIE:
        return "pool"
    for k in sol.curves.targets(j, mu):
        curve = sol.curves.curves[k]
        r = sol.curves.ratios[j, k]
        if not math.isfinite(r):
            continue
        m = mu / r
        for seg in curve.segments:
            if seg.mu_lo - 1e-12 <= m <= seg.mu_hi + 1e-12:
                return seg.kind
    return "pool"


def emit_frontier_csv(sol: LimitSolution, path: str, n_levels: int = 257) -> None:
    """Burden-of-proof frontier on a descending level grid:
    v, mu_hat_1..J (the induced minimum own-mass per state)."""
    fr = sol.frontier(n_levels)
    j_n = sol.game.n_states
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["v"] + [f"mu_hat_{j + 1}" for j in range(j_n)])
        for i, v in enumerate(fr.levels):
            row = [repr(float(v))]
            for j in range(j_n):
                x = fr.mu_tilde[i, j]
                row.append("inf" if not math.isfinite(x) else repr(float(x)))
            w.writerow(row)


def emit_thresholds_csv(sol: LimitSolution, path: str) -> None:
    """Honesty thresholds per state: state, z_star, z_star_star."""
    tab = thresholds(sol)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["state", "z_star", "z_star_star"])
        for j in range(sol.game.n_states):
            w.writerow([j, repr(float(tab.z_star[j])),
                        repr(float(tab.z_star_star[j]))])
