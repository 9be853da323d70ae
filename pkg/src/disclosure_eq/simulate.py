"""Seeded Monte-Carlo play of a solved finite disclosure game.

Replications are partitioned into fixed 1024-draw subchunks; subchunk s uses
the generator seeded by (master seed, s), so the sampled plays depend only on
the master seed and the draw index, never on how subchunks are distributed
over workers. All cross-replication aggregation is carried in integer count
tables keyed by (message | state, data-size tercile, dataset), merged
commutatively; floating-point statistics are derived once from the merged
integers in sorted key order. Reports are therefore bitwise identical for
any worker count.

The report has two sections: calibration (per on-path message bucket, the
empirical mean state value against the pool value the receiver asserts) and
welfare (mean payoff minus the full-information posterior mean, by state and
data-size tercile), plus aggregate receiver action-error statistics.
"""

from __future__ import annotations

import csv
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .finite import EquilibriumOutcome, StrategyProfile, _encode, pool_strategy
from .game import GameSpec, GameValidationError

__all__ = [
    "BucketStat",
    "SimConfig",
    "SimReport",
    "WelfareCell",
    "build_strategy_tables",
    "emit_calibration_csv",
    "emit_welfare_csv",
    "play",
    "sample_type",
    "simulate",
    "tercile_edges",
]

_SUBCHUNK = 1024


@dataclass(frozen=True)
class SimConfig:
    """Replication count, master seed, and worker count for one run."""

    replications: int
    master_seed: int
    workers: int = 1

    def __post_init__(self) -> None:
        if self.replications < 1:
            raise GameValidationError("replications", "need at least 1")
        if not 0 <= self.master_seed < 2 ** 64:
            raise GameValidationError("master_seed", "need a 64-bit seed")
        if self.workers < 1:
            raise GameValidationError("workers", "need at least 1 worker")


# ---------------------------------------------------------------------------
# Single-draw operations (reference semantics for the vectorized bulk path)


def sample_type(game: GameSpec, rng: np.random.Generator):
    """One draw of nature: (state index, dataset size, dataset counts)."""
    if game.kind != "finite":
        raise GameValidationError("mass", "sampling needs a finite game")
    j = int(rng.choice(game.J, p=game.states.priors))
    n = int(rng.choice(game.mass.N + 1, p=game.mass.pmf))
    counts = rng.multinomial(n, game.outcomes.frequencies[j])
    return j, n, tuple(int(c) for c in counts)


def play(t, profile: StrategyProfile, rng: np.random.Generator) -> tuple[int, ...]:
    """Sample the disclosed message for dataset t from an equilibrium
    strategy profile; the message is always contained in the dataset."""
    msgs, p = profile.conditional(t)
    m = msgs[int(rng.choice(len(msgs), p=p))]
    if any(md > td for md, td in zip(m, t)):
        raise AssertionError(f"message {m} not contained in dataset {tuple(t)}")
    return m


# ---------------------------------------------------------------------------
# Strategy tables (per-type message distributions, built once per outcome)


@dataclass(frozen=True)
class _TypeTable:
    msg_rows: np.ndarray   # (M, D) message count vectors
    cum: np.ndarray        # (M,) cumulative conditional probabilities


def build_strategy_tables(game: GameSpec, outcome: EquilibriumOutcome,
                          ) -> dict[int, _TypeTable]:
    """Per-type message mixing for every positive-probability dataset, keyed
    by the lattice encoding of the dataset."""
    base = outcome.dag._base
    tables: dict[int, _TypeTable] = {}
    for step in outcome.steps:
        profile = pool_strategy(step, game, outcome)
        per_type: dict[tuple, list[tuple[tuple, float]]] = {}
        for (t, m), mass in profile.x.items():
            per_type.setdefault(t, []).append((m, mass))
        for t, rows in per_type.items():
            rows.sort(key=lambda r: r[0])
            masses = np.array([mass for _, mass in rows])
            tot = masses.sum()
            if tot <= 0.0:
                rows, masses, tot = rows[:1], np.array([1.0]), 1.0
            code = int(_encode(np.asarray(t, dtype=np.int64)[None, :], base)[0])
            tables[code] = _TypeTable(
                msg_rows=np.asarray([m for m, _ in rows], dtype=np.int64),
                cum=np.cumsum(masses / tot))
    return tables


def tercile_edges(game: GameSpec) -> tuple[int, int]:
    """Dataset sizes splitting the size distribution into terciles: the
    smallest n with CDF >= 1/3 and the smallest with CDF >= 2/3."""
    cdf = np.cumsum(game.mass.pmf)
    t1 = int(np.searchsorted(cdf, 1.0 / 3.0))
    t2 = int(np.searchsorted(cdf, 2.0 / 3.0))
    return t1, t2


# ---------------------------------------------------------------------------
# Bulk simulation


@dataclass
class _Shard:
    bucket_counts: dict[int, np.ndarray]   # msg code -> int64[J] state counts
    welfare_counts: np.ndarray             # int64[3, J, n_slab]
    n: int

    def merge(self, other: "_Shard") -> None:
        for code, arr in other.bucket_counts.items():
            cur = self.bucket_counts.get(code)
            if cur is None:
                self.bucket_counts[code] = arr.copy()
            else:
                cur += arr
        self.welfare_counts += other.welfare_counts
        self.n += other.n


def _run_subchunk(game: GameSpec, outcome: EquilibriumOutcome,
                  tables: dict[int, _TypeTable], master_seed: int,
                  sub_index: int, count: int, shard: _Shard) -> None:
    rng = np.random.default_rng([master_seed, sub_index])
    J, D, N = game.J, game.D, game.mass.N
    states = rng.choice(J, size=count, p=game.states.priors)
    sizes = rng.choice(N + 1, size=count, p=game.mass.pmf)
    counts = np.zeros((count, D), dtype=np.int64)
    for j in range(J):
        row = game.outcomes.frequencies[j]
        for n in range(1, N + 1):
            sel = np.where((states == j) & (sizes == n))[0]
            if sel.size:
                counts[sel] = rng.multinomial(n, row, size=sel.size)
    u = rng.random(count)

    dag = outcome.dag
    type_codes = _encode(counts, dag._base)
    slab_idx = np.searchsorted(dag._keys, type_codes)
    if not bool(np.all(dag._keys[slab_idx] == type_codes)):
        raise AssertionError("sampled dataset missing from solved lattice")

    msg_rows = np.empty((count, D), dtype=np.int64)
    for i in range(count):
        table = tables[int(type_codes[i])]
        pick = int(np.searchsorted(table.cum, u[i], side="right"))
        pick = min(pick, len(table.cum) - 1)
        msg_rows[i] = table.msg_rows[pick]
    if not bool(np.all(msg_rows <= counts)):
        raise AssertionError("sampled message not contained in its dataset")

    msg_codes = _encode(msg_rows, dag._base)
    for j in range(J):
        codes_j, cnts = np.unique(msg_codes[states == j], return_counts=True)
        for code, c in zip(codes_j, cnts):
            arr = shard.bucket_counts.setdefault(
                int(code), np.zeros(J, dtype=np.int64))
            arr[j] += int(c)

    terc = np.digitize(sizes, tercile_edges(game), right=True)
    np.add.at(shard.welfare_counts, (terc, states, slab_idx), 1)
    shard.n += count


def _empty_shard(game: GameSpec, outcome: EquilibriumOutcome) -> _Shard:
    return _Shard(bucket_counts={},
                  welfare_counts=np.zeros(
                      (3, game.J, outcome.dag.n_nodes), dtype=np.int64),
                  n=0)


# ---------------------------------------------------------------------------
# Report assembly


@dataclass(frozen=True)
class BucketStat:
    """Calibration row for one on-path message."""

    message: tuple[int, ...]
    asserted_value: float
    n_obs: int
    state_counts: tuple[int, ...]
    empirical_mean: float
    stderr: float

    def within(self, k_se: float = 3.0, abs_tol: float = 1e-12) -> bool:
        return abs(self.empirical_mean - self.asserted_value) <= (
            k_se * self.stderr + abs_tol)


@dataclass(frozen=True)
class WelfareCell:
    """Mean sender payoff minus full-information posterior mean for one
    (state, data-size tercile) cell."""

    state: int
    tercile: int
    n_obs: int
    mean_gap: float
    stderr: float


@dataclass(frozen=True)
class SimReport:
    config: SimConfig
    buckets: tuple[BucketStat, ...]
    welfare: tuple[WelfareCell, ...]
    mean_payoff: float
    mean_payoff_stderr: float
    prior_mean: float
    receiver_mse: float          # mean squared (action - state value)
    receiver_mse_floor: float    # same for the full-information action

    def worst_bucket_z(self) -> float:
        worst = 0.0
        for b in self.buckets:
            dev = abs(b.empirical_mean - b.asserted_value)
            worst = max(worst, dev / b.stderr if b.stderr > 0
                        else (0.0 if dev <= 1e-12 else math.inf))
        return worst


def _bucket_value_map(outcome: EquilibriumOutcome) -> dict[int, float]:
    base = outcome.dag._base
    out: dict[int, float] = {}
    for step in outcome.steps:
        midx = outcome.message_idx[step.index]
        if len(midx) == 0:
            continue
        for code in _encode(outcome.dag.tmat[midx], base):
            out[int(code)] = step.value
    return out


def _pool_state_sd(game: GameSpec, outcome: EquilibriumOutcome) -> dict[int, float]:
    """Per message code: the pool-level spread of state values (used as a
    floor for calibration standard errors in nearly-empty buckets)."""
    from .game import type_probs_and_means

    base = outcome.dag._base
    values = np.asarray(game.states.values)
    out: dict[int, float] = {}
    from .game import log_state_weights
    for step in outcome.steps:
        midx = outcome.member_idx[step.index]
        if len(midx) == 0:
            continue
        tmat = outcome.dag.tmat[midx]
        q, _ = type_probs_and_means(game, tmat)
        q = np.nan_to_num(q)
        lw = log_state_weights(game, tmat)
        with np.errstate(invalid="ignore"):
            w = np.exp(lw - lw.max(axis=1, keepdims=True))
            post = w / w.sum(axis=1, keepdims=True)
        state_mass = q @ np.nan_to_num(post)
        tot = state_mass.sum()
        if tot <= 0:
            sd = 0.0
        else:
            p = state_mass / tot
            sd = float(math.sqrt(max(p @ values ** 2 - (p @ values) ** 2, 0.0)))
        for code in _encode(outcome.dag.tmat[outcome.message_idx[step.index]],
                            base):
            out[int(code)] = sd
    return out


def simulate(game: GameSpec, outcome: EquilibriumOutcome,
             config: SimConfig) -> SimReport:
    """Run the full Monte-Carlo pipeline and assemble the report."""
    if game.kind != "finite":
        raise GameValidationError("mass", "simulate needs a finite game")
    tables = build_strategy_tables(game, outcome)
    R = config.replications
    n_sub = (R + _SUBCHUNK - 1) // _SUBCHUNK

    def run_worker(w: int) -> _Shard:
        shard = _empty_shard(game, outcome)
        for s in range(w, n_sub, config.workers):
            count = min(_SUBCHUNK, R - s * _SUBCHUNK)
            _run_subchunk(game, outcome, tables, config.master_seed, s,
                          count, shard)
        return shard

    if config.workers == 1:
        total = run_worker(0)
    else:
        with ThreadPoolExecutor(max_workers=config.workers) as pool:
            shards = list(pool.map(run_worker, range(config.workers)))
        total = shards[0]
        for sh in shards[1:]:
            total.merge(sh)
    if total.n != R:
        raise AssertionError("replication count mismatch after merge")

    values = np.asarray(game.states.values)
    value_of = _bucket_value_map(outcome)
    sd_floor = _pool_state_sd(game, outcome)

    buckets = []
    n_bucket_total = 0
    dag = outcome.dag
    for code in sorted(total.bucket_counts):
        sc = total.bucket_counts[code]
        n = int(sc.sum())
        n_bucket_total += n
        mean = float(sc @ values) / n
        var_emp = float(sc @ values ** 2) / n - mean ** 2
        sd = max(math.sqrt(max(var_emp, 0.0)), sd_floor.get(code, 0.0))
        row = dag.tmat[int(np.searchsorted(dag._keys, code))]
        buckets.append(BucketStat(
            message=tuple(int(x) for x in row),
            asserted_value=value_of[code], n_obs=n,
            state_counts=tuple(int(x) for x in sc),
            empirical_mean=mean, stderr=sd / math.sqrt(n)))
    if n_bucket_total != R:
        raise AssertionError("bucket counts do not sum to replications")

    step_value = np.zeros(outcome.dag.n_nodes)
    for step in outcome.steps:
        step_value[outcome.member_idx[step.index]] = step.value
    full_info = np.nan_to_num(outcome.means)

    welfare = []
    pay_sum = pay2_sum = 0.0
    mse = mse_floor = 0.0
    for terc in range(3):
        for j in range(game.J):
            cnt = total.welfare_counts[terc, j]
            hit = np.nonzero(cnt)[0]
            n = int(cnt[hit].sum())
            pay_sum += float(cnt[hit] @ step_value[hit])
            pay2_sum += float(cnt[hit] @ step_value[hit] ** 2)
            mse += float(cnt[hit] @ (step_value[hit] - values[j]) ** 2)
            mse_floor += float(cnt[hit] @ (full_info[hit] - values[j]) ** 2)
            if n == 0:
                welfare.append(WelfareCell(j, terc, 0, 0.0, 0.0))
                continue
            gaps = step_value[hit] - full_info[hit]
            mean = float(cnt[hit] @ gaps) / n
            var = float(cnt[hit] @ gaps ** 2) / n - mean ** 2
            welfare.append(WelfareCell(
                state=j, tercile=terc, n_obs=n, mean_gap=mean,
                stderr=math.sqrt(max(var, 0.0) / n)))

    mean_pay = pay_sum / R
    pay_var = max(pay2_sum / R - mean_pay ** 2, 0.0)
    return SimReport(config=config, buckets=tuple(buckets),
                     welfare=tuple(welfare),
                     mean_payoff=mean_pay,
                     mean_payoff_stderr=math.sqrt(pay_var / R),
                     prior_mean=game.state_mean(),
                     receiver_mse=mse / R,
                     receiver_mse_floor=mse_floor / R)


# ---------------------------------------------------------------------------
# CSV emission


def emit_calibration_csv(report: SimReport, path) -> None:
    D = len(report.buckets[0].message) if report.buckets else 0
    with open(path, "w", newline="", encoding="utf-8") as fh:
        wtr = csv.writer(fh)
        wtr.writerow(["message_id"] + [f"count_{d}" for d in range(D)]
                     + ["asserted_value", "empirical_mean", "stderr", "n_obs"])
        for i, b in enumerate(report.buckets):
            wtr.writerow([i] + list(b.message)
                         + [repr(float(b.asserted_value)),
                            repr(float(b.empirical_mean)),
                            repr(float(b.stderr)), b.n_obs])


def emit_welfare_csv(report: SimReport, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        wtr = csv.writer(fh)
        wtr.writerow(["state", "tercile", "mean_gap", "stderr"])
        for cell in report.welfare:
            wtr.writerow([cell.state, cell.tercile,
                          repr(float(cell.mean_gap)),
                          repr(float(cell.stderr))])
