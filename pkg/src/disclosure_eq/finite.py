"""Finite-data equilibrium solver.

The unique equilibrium outcome is computed by repeatedly extracting, from the
set of still-unassigned types, the feasible announcement pool with the highest
q-weighted mean posterior value. A pool is always "a message set plus every
type able to send one of its messages", i.e. an upward-closed set in the
componentwise order on count vectors, so the inner maximization is a
maximum-weight closure problem on the imitation DAG solved by max-flow/min-cut
inside a Dinkelbach fractional-programming loop.

solve_truth_leaning peels all pools at once with a divide-and-conquer variant:
splitting the node set at the maximal optimal closure for the region's mean
value separates the steps above the mean from those below, because a pool
feasible in a remainder set is exactly a closure containing the removed
prefix. best_pool keeps the plain Dinkelbach loop and doubles as the
re-verification route.
"""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, field

import numpy as np

from .game import (GameSpec, GameValidationError, enumerate_types,
                   is_subset, max_types_cap, type_probs_and_means)

__all__ = [
    "ImitationDAG",
    "PoolStep",
    "EquilibriumOutcome",
    "SolverError",
    "build_dag",
    "max_weight_closure",
    "best_pool",
    "solve_truth_leaning",
    "pool_strategy",
    "outcome_query",
    "verify_announcement_proof",
    "brute_force_best_pool",
    "emit_outcome_csv",
    "emit_pool_summary_csv",
]

STEP_MERGE_TOL = 1e-9
_DENSE_FLOW_LIMIT = 1500  # below this node count use the exact float solver


class SolverError(RuntimeError):
    pass


# ---------------------------------------------------------------------------
# Imitation DAG over the dataset lattice
# ---------------------------------------------------------------------------

@dataclass
class ImitationDAG:
    """Covering structure of the disclosure order on count vectors.

    Nodes are all count vectors with total in [n_min, N] ("slab"), of which
    those whose total has positive size probability are `real`. Zero-mass
    intermediate levels are kept as zero-weight pass-through nodes so that
    reachability among real types equals the componentwise subset order even
    when the size distribution skips levels.
    """
    game: GameSpec
    tmat: np.ndarray         # (S, D) slab count vectors, lex sorted
    real: np.ndarray         # (S,) bool, size in pmf support
    succ: np.ndarray         # (S, D) int32 index of t + e_d, -1 if absent
    level: np.ndarray        # (S,) totals
    n_min: int
    _key_cache: dict = field(default_factory=dict, repr=False)

    @property
    def n_nodes(self) -> int:
        return self.tmat.shape[0]

    @property
    def n_types(self) -> int:
        return int(self.real.sum())

    def index_of(self, t) -> int:
        key = _encode(np.asarray(t, dtype=np.int64)[None, :], self._base)
        i = int(np.searchsorted(self._keys, key[0]))
        if i >= len(self._keys) or self._keys[i] != key[0]:
            raise KeyError(f"type {tuple(t)} not in lattice")
        return i

    def covering_edges(self) -> list[tuple[tuple, tuple]]:
        out = []
        for i in range(self.n_nodes):
            for d in range(self.tmat.shape[1]):
                j = self.succ[i, d]
                if j >= 0:
                    out.append((tuple(int(x) for x in self.tmat[i]),
                                tuple(int(x) for x in self.tmat[j])))
        return out

    def types(self) -> list[tuple[int, ...]]:
        return [tuple(int(x) for x in row) for row in self.tmat[self.real]]


def _encode(tmat: np.ndarray, base: int) -> np.ndarray:
    keys = np.zeros(tmat.shape[0], dtype=np.int64)
    for d in range(tmat.shape[1]):
        keys = keys * base + tmat[:, d]
    return keys


def build_dag(game: GameSpec, cap: int | None = None) -> ImitationDAG:
    """Enumerate the slab lattice and its covering edges t -> t + e_d."""
    if game.kind != "finite":
        raise GameValidationError("mass", "build_dag needs a finite game")
    support = game.mass.support
    if not support:
        raise GameValidationError("mass.finite.pmf", "empty size support")
    n_min, N = min(support), game.mass.N
    D = game.D
    cap = max_types_cap() if cap is None else cap
    slab_size = sum(math.comb(n + D - 1, D - 1) for n in range(n_min, N + 1))
    if slab_size > cap:
        raise GameValidationError(
            "mass.finite", f"lattice size {slab_size} exceeds cap {cap}")

    rows = []
    for n in range(n_min, N + 1):
        rows.extend(_compositions_np(n, D))
    tmat = np.vstack(rows) if rows else np.zeros((0, D), dtype=np.int64)
    order = np.lexsort(tmat.T[::-1])
    tmat = tmat[order]
    base = N + 2
    keys = _encode(tmat, base)

    level = tmat.sum(axis=1)
    pmf = np.asarray(game.mass.pmf)
    real = pmf[level] > 0

    succ = np.full((tmat.shape[0], D), -1, dtype=np.int64)
    can_grow = level < N
    for d in range(D):
        target = keys[can_grow] + base ** (D - 1 - d)
        pos = np.searchsorted(keys, target)
        ok = (pos < len(keys)) & (keys[np.minimum(pos, len(keys) - 1)] == target)
        idx = np.where(can_grow)[0]
        succ[idx[ok], d] = pos[ok]

    dag = ImitationDAG(game, tmat, real, succ, level, n_min)
    dag._keys = keys
    dag._base = base
    return dag


def _compositions_np(n: int, D: int) -> list[np.ndarray]:
    if D == 1:
        return [np.array([[n]], dtype=np.int64)]
    out = []
    for first in range(n + 1):
        for rest in _compositions_np(n - first, D - 1):
            block = np.empty((rest.shape[0], D), dtype=np.int64)
            block[:, 0] = first
            block[:, 1:] = rest
            out.append(block)
    return out


# ---------------------------------------------------------------------------
# Maximum-weight closure via min-cut
# ---------------------------------------------------------------------------

class _Dinic:
    """Exact float max-flow for small closure instances."""

    def __init__(self, n: int):
        self.n = n
        self.to: list[int] = []
        self.cap: list[float] = []
        self.head: list[list[int]] = [[] for _ in range(n)]

    def add(self, u: int, v: int, c: float):
        self.head[u].append(len(self.to))
        self.to.append(v)
        self.cap.append(c)
        self.head[v].append(len(self.to))
        self.to.append(u)
        self.cap.append(0.0)

    def max_flow(self, s: int, t: int) -> float:
        flow = 0.0
        INF = float("inf")
        while True:
            dist = [-1] * self.n
            dist[s] = 0
            dq = deque([s])
            while dq:
                u = dq.popleft()
                for e in self.head[u]:
                    if self.cap[e] > 1e-300 and dist[self.to[e]] < 0:
                        dist[self.to[e]] = dist[u] + 1
                        dq.append(self.to[e])
            if dist[t] < 0:
                return flow
            it = [0] * self.n

            def dfs(u: int, f: float) -> float:
                if u == t:
                    return f
                while it[u] < len(self.head[u]):
                    e = self.head[u][it[u]]
                    v = self.to[e]
                    if self.cap[e] > 1e-300 and dist[v] == dist[u] + 1:
                        d = dfs(v, min(f, self.cap[e]))
                        if d > 0:
                            self.cap[e] -= d
                            self.cap[e ^ 1] += d
                            return d
                    it[u] += 1
                return 0.0

            while True:
                pushed = dfs(s, INF)
                if pushed <= 0:
                    break
                flow += pushed

    def reaches_sink(self, t: int) -> np.ndarray:
        """Nodes with a residual path to t (reverse BFS on residual > 0)."""
        seen = np.zeros(self.n, dtype=bool)
        seen[t] = True
        dq = deque([t])
        while dq:
            u = dq.popleft()
            for e in self.head[u]:
                # edge e goes u -> to[e]; its partner e^1 is to[e] -> u.
                # v reaches t through u if residual cap of (v -> u) > 0.
                v = self.to[e]
                if not seen[v] and self.cap[e ^ 1] > 1e-300:
                    seen[v] = True
                    dq.append(v)
        return seen


def _closure_small(nodes: np.ndarray, w: np.ndarray, succ_local: np.ndarray) -> np.ndarray:
    n = len(nodes)
    din = _Dinic(n + 2)
    s, t = n, n + 1
    INF = float(np.abs(w).sum()) * 4 + 1.0
    for i in range(n):
        if w[i] > 0:
            din.add(s, i, float(w[i]))
        elif w[i] < 0:
            din.add(i, t, float(-w[i]))
        for j in succ_local[i]:
            din.add(i, int(j), INF)
    din.max_flow(s, t)
    reach = din.reaches_sink(t)
    keep = ~reach[:n]
    return keep


def _closure_scipy(n: int, w: np.ndarray, edge_u: np.ndarray,
                   edge_v: np.ndarray) -> np.ndarray:
    from scipy.sparse import csr_matrix
    from scipy.sparse.csgraph import breadth_first_order, maximum_flow

    absw = np.abs(w)
    wsum = float(absw.sum())
    if wsum == 0.0:
        return np.ones(n, dtype=bool)
    # scipy's max-flow runs on int32 capacities; budget the total positive
    # mass to 1e9 so the infinite lattice edges at INT32_MAX are never cut
    scale = 1.0e9 / wsum
    iw = np.rint(w * scale).astype(np.int64)
    pos = np.where(iw > 0)[0]
    neg = np.where(iw < 0)[0]
    INF = np.int64(2**31 - 1)
    s, t = n, n + 1

    us = np.concatenate([np.full(len(pos), s), neg, edge_u])
    vs = np.concatenate([pos, np.full(len(neg), t), edge_v])
    cs = np.concatenate([iw[pos], -iw[neg], np.full(len(edge_u), INF)])
    # include explicit reverse zero-capacity edges so the flow/residual
    # matrices share one sparsity pattern
    rows = np.concatenate([us, vs])
    cols = np.concatenate([vs, us])
    caps = np.concatenate([cs, np.zeros(len(cs), dtype=np.int64)])
    g = csr_matrix((caps, (rows, cols)), shape=(n + 2, n + 2))
    g.sum_duplicates()
    g.data = np.minimum(g.data, INF)  # parallel edges must not wrap int32
    g = g.astype(np.int32)
    res = maximum_flow(g, s, t)
    residual = g - res.flow
    residual.data = np.maximum(residual.data, 0)
    residual.eliminate_zeros()
    order = breadth_first_order(residual.T, t, directed=True,
                                return_predecessors=False)
    reach = np.zeros(n + 2, dtype=bool)
    reach[order] = True
    return ~reach[:n]


def _max_closure_local(dag: ImitationDAG, nodes: np.ndarray,
                       w_local: np.ndarray) -> np.ndarray:
    """Maximal max-weight closure on the sub-DAG induced by `nodes`.

    The node set must be order-convex (every lattice chain between two of its
    nodes stays inside) so dropping outside nodes keeps the up-closure
    constraints intact. Returns a bool keep-mask aligned with `nodes`.
    """
    n = len(nodes)
    if n == 0:
        return np.zeros(0, dtype=bool)
    local = np.full(dag.n_nodes, -1, dtype=np.int64)
    local[nodes] = np.arange(n)
    succs = dag.succ[nodes]
    valid = succs >= 0
    tgt = np.full(succs.shape, -1, dtype=np.int64)
    tgt[valid] = local[succs[valid]]
    edge_u, dcol = np.where(tgt >= 0)
    edge_v = tgt[edge_u, dcol]

    if n <= _DENSE_FLOW_LIMIT:
        cuts = np.searchsorted(edge_u, np.arange(n + 1))
        succ_local = [edge_v[cuts[i]:cuts[i + 1]] for i in range(n)]
        return _closure_small(nodes, w_local, succ_local)
    return _closure_scipy(n, w_local, edge_u, edge_v)


def _max_closure_mask(dag: ImitationDAG, w_slab: np.ndarray,
                      node_sel: np.ndarray) -> np.ndarray:
    """Mask-in, mask-out wrapper around _max_closure_local."""
    nodes = np.where(node_sel)[0]
    out = np.zeros(dag.n_nodes, dtype=bool)
    if len(nodes):
        keep = _max_closure_local(dag, nodes, w_slab[nodes])
        out[nodes[keep]] = True
    return out


def _upset_sums(dag: ImitationDAG, values: np.ndarray,
                node_sel: np.ndarray) -> np.ndarray:
    """sum of `values` over {t' >= t} within node_sel, per selected node."""
    acc = np.where(node_sel, values, 0.0)
    levels = _levels_desc(dag)
    for d in range(dag.tmat.shape[1]):
        for idx in levels:
            idx = idx[node_sel[idx]]
            nxt = dag.succ[idx, d]
            ok = nxt >= 0
            ok[ok] &= node_sel[nxt[ok]]
            acc[idx[ok]] += acc[nxt[ok]]
    return acc


def _levels_desc(dag: ImitationDAG) -> list[np.ndarray]:
    out = []
    for n in range(dag.level.max(), dag.n_min - 1, -1):
        out.append(np.where(dag.level == n)[0])
    return out


def max_weight_closure(dag: ImitationDAG, weights: dict,
                       require_nonempty: bool = False) -> set:
    """Maximal upward-closed set maximizing the summed weights.

    `weights` maps real types (tuples) to finite reals; zero-mass pass-through
    nodes participate with weight 0. Ties are resolved upward: the returned
    set is the union of all optimal closures. With require_nonempty, an empty
    optimum is replaced by the best single principal up-set.
    """
    w = np.zeros(dag.n_nodes)
    sel = np.zeros(dag.n_nodes, dtype=bool)
    sel |= ~dag.real  # pass-through nodes always available
    for t, wt in weights.items():
        i = dag.index_of(t)
        if not dag.real[i]:
            raise GameValidationError("weights", f"{t} is not a valid type")
        w[i] = wt
        sel[i] = True
    closure = _max_closure_mask(dag, w, sel)
    members = {tuple(map(int, row)) for row in dag.tmat[closure & dag.real]}
    members = {t for t in members if t in weights}
    if members or not require_nonempty:
        return members
    ups = _upset_sums(dag, w, sel)
    cand = np.where(sel & dag.real)[0]
    best = cand[int(np.argmax(ups[cand]))]
    # principal up-set of the best generator, via forward sweep
    mask = np.zeros(dag.n_nodes, dtype=bool)
    mask[best] = True
    frontier = [best]
    while frontier:
        nxt = []
        for i in frontier:
            for d in range(dag.tmat.shape[1]):
                j = dag.succ[i, d]
                if j >= 0 and sel[j] and not mask[j]:
                    mask[j] = True
                    nxt.append(j)
        frontier = nxt
    return {tuple(map(int, row)) for row in dag.tmat[mask & dag.real] if tuple(map(int, row)) in weights}


# ---------------------------------------------------------------------------
# Pool extraction
# ---------------------------------------------------------------------------

@dataclass
class PoolStep:
    index: int
    value: float
    message_set: list[tuple]
    members: list[tuple]


#: lattices larger than this keep members/messages as index arrays only;
#: PoolStep tuple lists stay empty and members_of()/messages_of() materialize
#: rows on demand (building millions of python tuples eagerly is wasteful)
_EAGER_TUPLE_LIMIT = 300_000


@dataclass
class EquilibriumOutcome:
    game: GameSpec
    steps: list[PoolStep]
    dag: ImitationDAG
    q: np.ndarray            # over slab nodes (0 for pass-through)
    means: np.ndarray        # posterior means (nan where q = 0)
    step_of: np.ndarray      # per slab node, -1 for non-types
    member_idx: list[np.ndarray]   # slab indices per step
    message_idx: list[np.ndarray]  # slab indices of minimal members per step

    def payoff(self, t) -> tuple[int, float]:
        """(step index, equilibrium payoff) for a type."""
        i = self.dag.index_of(t)
        s = int(self.step_of[i])
        if s < 0:
            raise KeyError(f"{tuple(t)} is not an assigned type")
        return s, self.steps[s].value

    def members_of(self, s: int) -> list[tuple]:
        return [tuple(map(int, row)) for row in self.dag.tmat[self.member_idx[s]]]

    def messages_of(self, s: int) -> list[tuple]:
        return [tuple(map(int, row)) for row in self.dag.tmat[self.message_idx[s]]]

    def payoff_map(self) -> dict[tuple, tuple[int, float]]:
        out = {}
        for s in self.steps:
            for idx in self.member_idx[s.index]:
                out[tuple(map(int, self.dag.tmat[idx]))] = (s.index, s.value)
        return out


def _precompute(game: GameSpec, cap=None):
    dag = build_dag(game, cap)
    q = np.zeros(dag.n_nodes)
    means = np.full(dag.n_nodes, np.nan)
    real_idx = np.where(dag.real)[0]
    qs, ms = type_probs_and_means(game, dag.tmat[real_idx])
    q[real_idx] = qs
    means[real_idx] = ms
    return dag, q, means


def best_pool(remaining, game: GameSpec, _pre=None, trace: list | None = None):
    """Highest-mean feasible announcement pool within `remaining`.

    Dinkelbach iteration: repeatedly solve the closure problem with weights
    q(t)(mean(t) - lam) and push lam to the returned pool's mean. Returns
    (members, message_set, value) with ties unioned. `trace`, if given,
    collects the nondecreasing lam sequence.
    """
    dag, q, means = _pre if _pre is not None else _precompute(game)
    sel = np.zeros(dag.n_nodes, dtype=bool)
    sel |= ~dag.real
    rem = list(remaining)
    if not rem:
        raise SolverError("best_pool on empty remainder")
    idx = np.array([dag.index_of(t) for t in rem])
    sel[idx] = True
    live = np.zeros(dag.n_nodes, dtype=bool)
    live[idx] = q[idx] > 0
    if not live.any():
        raise SolverError("best_pool: no positive-probability types remain")

    lam = float(np.dot(q[live], means[live]) / q[live].sum())
    scale = max(1.0, float(np.abs(q[live] * means[live]).sum()))
    if trace is not None:
        trace.append(lam)
    for _ in range(100):
        w = np.zeros(dag.n_nodes)
        w[live] = q[live] * (means[live] - lam)
        closure = _max_closure_mask(dag, w, sel)
        memb = closure & live
        val = float(w[memb].sum())
        if not memb.any():
            raise SolverError("best_pool: empty optimal closure")
        new_lam = float(np.dot(q[memb], means[memb]) / q[memb].sum())
        if trace is not None:
            trace.append(new_lam)
        if val <= 1e-13 * scale or new_lam <= lam + 1e-15:
            members = [tuple(map(int, row)) for row in dag.tmat[memb]]
            msgs = _minimal_members(dag, memb)
            return members, msgs, (new_lam if new_lam > lam else lam)
        lam = new_lam
    raise SolverError("best_pool: Dinkelbach failed to converge in 100 iterations")


def _minimal_members(dag: ImitationDAG, member_mask: np.ndarray) -> list[tuple]:
    """Member types with no strict member subset (the pool's message set)."""
    has_below = np.zeros(dag.n_nodes, dtype=bool)
    for idx in reversed(_levels_desc(dag)):  # ascending levels
        push = member_mask[idx] | has_below[idx]
        for d in range(dag.tmat.shape[1]):
            nxt = dag.succ[idx, d]
            ok = nxt >= 0
            tgt = nxt[ok]
            np.logical_or.at(has_below, tgt, push[ok])
    minimal = member_mask & ~has_below
    return [tuple(map(int, row)) for row in dag.tmat[minimal]]


def solve_truth_leaning(game: GameSpec, cap: int | None = None) -> EquilibriumOutcome:
    """Full equilibrium outcome: ordered pools, payoffs, message sets.

    Divide-and-conquer peeling (see module docstring). Regions are index
    arrays carrying their pass-through interiors, so chains between region
    members never leave the region. Steps come out of the recursion already in
    value order; a final isotonic pass merges any adjacent pair closer than
    1e-9 (and absorbs ordering noise from the integer-capacity flow solver on
    large lattices) using probability-weighted means, which keeps the overall
    Bayes identity exact.

    On lattices above ~1.5k nodes, types whose probability is below 1e-11 of
    the average are excluded from the flow problems (they sit below the
    capacity quantization floor and would only add noise); they are assigned
    afterwards to the first step at or below their own posterior mean, clamped
    between their subsets' and supersets' steps so every imitation constraint
    still holds exactly.
    """
    dag, q, means = _precompute(game, cap)
    D = dag.tmat.shape[1]
    q = np.nan_to_num(q)
    live = dag.real & (q > 0)
    if not live.any():
        raise SolverError("game has no positive-probability types")

    tiny = np.zeros(dag.n_nodes, dtype=bool)
    if dag.n_nodes > _DENSE_FLOW_LIMIT:
        tau = 1e-11 * q[live].sum() / live.sum()
        tiny = live & (q <= tau)
    pooled = live & ~tiny
    if not pooled.any():
        raise SolverError("all types fall below the mass resolution floor")
    means_f = np.where(np.isnan(means), 0.0, means)
    qm = q * means_f

    # high-first depth-first peeling over index-array regions
    emitted: list[tuple[float, float, np.ndarray]] = []  # (A, B, member idx)
    stack = [np.arange(dag.n_nodes, dtype=np.int64)]
    while stack:
        nodes = stack.pop()
        sel = pooled[nodes]
        members = nodes[sel]
        if members.size == 0:
            continue
        B = float(q[members].sum())
        A = float(qm[members].sum())
        lam = A / B
        w_local = np.zeros(len(nodes))
        w_local[sel] = q[members] * (means[members] - lam)
        keep = _max_closure_local(dag, nodes, w_local)
        high = keep & sel
        val = float(w_local[high].sum())
        scale = max(1.0, float(np.abs(w_local).sum()))
        nh = int(high.sum())
        if val <= 1e-13 * scale or nh == 0 or nh == int(sel.sum()):
            emitted.append((A, B, members))
            continue
        stack.append(nodes[~keep])   # processed after the high side
        stack.append(nodes[keep])

    # isotonic repair: exact runs arrive strictly decreasing and fall straight
    # through; quantized runs may carry local inversions, which pool here
    groups: list[list] = []  # [sum q*mean, sum q, [index chunks]]
    for A, B, members in emitted:
        cur = [A, B, [members]]
        while groups and cur[0] / cur[1] >= groups[-1][0] / groups[-1][1] - STEP_MERGE_TOL:
            prev = groups.pop()
            cur = [prev[0] + cur[0], prev[1] + cur[1], prev[2] + cur[2]]
        groups.append(cur)

    step_of = np.full(dag.n_nodes, -1, dtype=np.int64)
    vals = np.empty(len(groups))
    member_idx: list[np.ndarray] = []
    for s, (A, B, chunks) in enumerate(groups):
        idx = np.concatenate(chunks) if len(chunks) > 1 else chunks[0]
        step_of[idx] = s
        vals[s] = A / B
        member_idx.append(idx)
    n_steps = len(vals)
    if np.any(np.diff(vals) >= 0):
        raise SolverError("step values not strictly decreasing")

    # Remaining real nodes: types below the resolution floor and
    # zero-probability types (impossible datasets). Each takes the first step
    # whose value has dropped to its own posterior mean (bottom step if it
    # has no mean), but never later than a subset's step and never earlier
    # than a superset's — processed top level down so supersets are final.
    tail = dag.real & (step_of < 0)
    if tail.any():
        flow = step_of >= 0
        sub = np.full(dag.n_nodes, n_steps, dtype=np.int64)
        for idx in reversed(_levels_desc(dag)):  # ascending levels
            push = np.minimum(sub[idx],
                              np.where(flow[idx], step_of[idx], n_steps))
            for d in range(D):
                nxt = dag.succ[idx, d]
                ok = nxt >= 0
                np.minimum.at(sub, nxt[ok], push[ok])
        sup = np.full(dag.n_nodes, -1, dtype=np.int64)
        for idx in _levels_desc(dag):            # descending levels
            cand = np.full(len(idx), -1, dtype=np.int64)
            for d in range(D):
                nxt = dag.succ[idx, d]
                ok = nxt >= 0
                up = np.full(len(idx), -1, dtype=np.int64)
                up[ok] = np.maximum(step_of[nxt[ok]], sup[nxt[ok]])
                cand = np.maximum(cand, up)
            sup[idx] = cand
            here = tail[idx]
            if here.any():
                ti = idx[here]
                m = np.where(np.isnan(means[ti]), -np.inf, means[ti])
                pref = np.searchsorted(-vals, -m, side="left")
                pref = np.minimum(np.minimum(pref, sub[ti]), n_steps - 1)
                step_of[ti] = np.maximum(pref, sup[ti])
        for s in range(n_steps):
            extra = np.where(tail & (step_of == s))[0]
            if extra.size:
                member_idx[s] = np.concatenate([member_idx[s], extra])

    # messages: members with no strict member subset in the same step; under
    # monotonicity that is exactly sub_all(t) > step(t)
    sub_all = np.full(dag.n_nodes, n_steps, dtype=np.int64)
    for idx in reversed(_levels_desc(dag)):
        push = np.minimum(sub_all[idx],
                          np.where(step_of[idx] >= 0, step_of[idx], n_steps))
        for d in range(D):
            nxt = dag.succ[idx, d]
            ok = nxt >= 0
            np.minimum.at(sub_all, nxt[ok], push[ok])

    eager = dag.n_nodes <= _EAGER_TUPLE_LIMIT
    steps: list[PoolStep] = []
    message_idx: list[np.ndarray] = []
    for s in range(n_steps):
        midx = np.sort(member_idx[s])
        member_idx[s] = midx
        msg = midx[sub_all[midx] > s]
        message_idx.append(msg)
        steps.append(PoolStep(
            s, float(vals[s]),
            [tuple(map(int, row)) for row in dag.tmat[msg]] if eager else [],
            [tuple(map(int, row)) for row in dag.tmat[midx]] if eager else []))

    _check_assignment_monotone(dag, step_of)
    out = EquilibriumOutcome(game, steps, dag, q, means, step_of,
                             member_idx, message_idx)
    _check_bayes(out)
    return out


def _check_assignment_monotone(dag: ImitationDAG, step_of: np.ndarray):
    """Supersets must sit in the same or an earlier (higher-value) step.

    Equivalent to the no-profitable-deviation condition: a type able to
    imitate another type's message never faces a lower equilibrium value.
    Verified through pass-through nodes by a descending-level sweep.
    """
    ms = np.where(step_of >= 0, step_of, -1)
    for idx in _levels_desc(dag):
        own = ms[idx].copy()
        for d in range(dag.tmat.shape[1]):
            nxt = dag.succ[idx, d]
            ok = nxt >= 0
            ms_above = np.full(len(idx), -1, dtype=np.int64)
            ms_above[ok] = ms[nxt[ok]]
            bad = (step_of[idx] >= 0) & (ms_above > step_of[idx])
            if bad.any():
                raise SolverError("pool assignment not upward-monotone")
            own = np.maximum(own, ms_above)
        ms[idx] = own


def _check_bayes(out: EquilibriumOutcome):
    vals = np.array([s.value for s in out.steps])
    assigned = out.step_of >= 0
    tot = float(np.dot(out.q[assigned], vals[out.step_of[assigned]]))
    prior_mean = out.game.state_mean()
    if abs(tot - prior_mean) > 1e-9:
        raise SolverError(
            f"Bayes plausibility violated: {tot} vs {prior_mean}")


# ---------------------------------------------------------------------------
# Queries, verification, strategies
# ---------------------------------------------------------------------------

def outcome_query(m, outcome: EquilibriumOutcome) -> float:
    """Receiver response to an arbitrary disclosure (need not be a type).

    Value of the highest pool with a message contained in m; disclosures below
    every message fall through to the last pool, which is also the response
    the containment-minimal off-path belief induces.
    """
    m = np.asarray(m, dtype=np.int64)
    if m.shape != (outcome.game.D,):
        raise GameValidationError("message", "dimension mismatch")
    for step in outcome.steps:
        midx = outcome.message_idx[step.index]
        if midx.size and bool(
                np.any(np.all(outcome.dag.tmat[midx] <= m, axis=1))):
            return step.value
    return outcome.steps[-1].value


@dataclass
class StrategyProfile:
    """Sparse map (type, message) -> probability mass x(t, m).

    Row sums over messages equal q(t); within a pool each message's
    conditional posterior mean equals the pool value up to ``mixing_gap``,
    the worst per-message deviation achievable over the minimal-message
    containment pattern at float precision (0 for singleton-message pools).
    """
    x: dict[tuple[tuple, tuple], float]
    mixing_gap: float = 0.0

    def conditional(self, t) -> tuple[list[tuple], np.ndarray]:
        t = tuple(t)
        rows = [(m, v) for (tt, m), v in self.x.items() if tt == t]
        if not rows:
            raise KeyError(f"type {t} not covered by strategy profile")
        msgs = [m for m, _ in rows]
        p = np.array([v for _, v in rows])
        return msgs, p / p.sum()

    def merge(self, other: "StrategyProfile") -> "StrategyProfile":
        z = dict(self.x)
        z.update(other.x)
        return StrategyProfile(z, max(self.mixing_gap, other.mixing_gap))


@dataclass
class AnnouncementReport:
    passed: bool
    worst_value_gap: float
    first_mismatch_step: int | None


def verify_announcement_proof(outcome: EquilibriumOutcome,
                              game: GameSpec) -> AnnouncementReport:
    """Re-solve each step's pool on its remainder and compare."""
    pre = (outcome.dag, outcome.q, outcome.means)
    live_members = [
        {t for t, alive in zip(outcome.members_of(s.index),
                               np.nan_to_num(outcome.q[outcome.member_idx[s.index]]) > 0)
         if alive}
        for s in outcome.steps]
    remaining = set().union(*live_members)
    worst = 0.0
    mismatch = None
    for s in outcome.steps:
        if not live_members[s.index]:
            continue  # steps holding only zero-probability types re-solve empty
        members, _msgs, value = best_pool(remaining, game, _pre=pre)
        gap = abs(value - s.value)
        worst = max(worst, gap)
        if gap > 1e-9 or set(members) != live_members[s.index]:
            mismatch = s.index
            break
        remaining -= live_members[s.index]
    return AnnouncementReport(mismatch is None, worst, mismatch)


def pool_strategy(step: PoolStep, game: GameSpec,
                  outcome: EquilibriumOutcome | None = None) -> StrategyProfile:
    """Feasible message mixing for one pool.

    Each member spreads its probability mass q(t) over contained messages so
    every message's conditional posterior mean equals the pool value (receiver
    indifference). Existence is guaranteed by pool maximality; infeasibility
    trips an assertion. Pass `outcome` for steps whose tuple lists were left
    empty (very large lattices). Members carrying a negligible share of the
    pool mass are routed to one contained message up front; they cannot move
    any message's conditional mean but would destabilize the LP scaling.
    """
    members = step.members
    msgs = step.message_set
    if not members and outcome is not None:
        members = outcome.members_of(step.index)
        msgs = outcome.messages_of(step.index)
    tmat = np.asarray(members, dtype=np.int64)
    q, means = type_probs_and_means(game, tmat)
    q = np.nan_to_num(q)
    if len(msgs) == 1:
        m = msgs[0]
        return StrategyProfile({(t, m): float(q[i])
                                for i, t in enumerate(members)})

    from scipy.optimize import linprog
    from scipy.sparse import csr_matrix

    mmat = np.asarray(msgs, dtype=np.int64)

    def first_message(row) -> tuple:
        ok = np.where(np.all(mmat <= row, axis=1))[0]
        if len(ok) == 0:
            raise AssertionError(f"pool member {tuple(map(int, row))} has no message")
        return msgs[int(ok[0])]

    out: dict[tuple[tuple, tuple], float] = {}
    main = q > 1e-12 * q.sum()
    for i in np.where(~main)[0]:
        out[(members[i], first_message(tmat[i]))] = float(q[i])
    keep = np.where(main)[0]
    members = [members[i] for i in keep]
    tmat, q, means = tmat[keep], q[keep], means[keep]

    pairs_t, pairs_m = [], []
    for i in range(len(members)):
        ok = np.where(np.all(mmat <= tmat[i], axis=1))[0]
        if len(ok) == 0:
            raise AssertionError(f"pool member {members[i]} has no message")
        pairs_t.extend([i] * len(ok))
        pairs_m.extend(ok.tolist())
    pairs_t = np.array(pairs_t)
    pairs_m = np.array(pairs_m)
    nvar = len(pairs_t)
    nT, nM = len(members), len(msgs)

    # variables y = x(t,m)/q(t): rows sum to 1 per type, mean rows per
    # message. The mean rows carry minimized slack instead of hard zeros:
    # members below the mass cutoff were routed outside the LP, which shifts
    # the exactly-balanced system by their (negligible) contribution, and
    # HiGHS rejects equalities inconsistent at any magnitude.
    rows = np.concatenate([pairs_t, nT + pairs_m,
                           nT + np.arange(nM), nT + np.arange(nM)])
    cols = np.concatenate([np.arange(nvar), np.arange(nvar),
                           nvar + np.arange(nM), nvar + nM + np.arange(nM)])
    mean_coef = q[pairs_t] * (means[pairs_t] - step.value)
    mscale = np.abs(mean_coef).max()
    if mscale > 0:
        mean_coef = mean_coef / mscale
    data = np.concatenate([np.ones(nvar), mean_coef,
                           np.ones(nM), -np.ones(nM)])
    A = csr_matrix((data, (rows, cols)), shape=(nT + nM, nvar + 2 * nM))
    b = np.concatenate([np.ones(nT), np.zeros(nM)])
    cost = np.concatenate([np.zeros(nvar), np.ones(2 * nM)])
    res = linprog(cost, A_eq=A, b_eq=b, bounds=(0, None), method="highs")
    assert res.status == 0, f"pool strategy LP failed: {res.message}"
    # Truth-leaning tiebreak: among mixings attaining the minimum slack,
    # prefer disclosing as much of the dataset as possible (mass-weighted
    # disclosed share), the same preference that selects the equilibrium.
    slack_opt = float(res.x[nvar:].sum())
    disclose = (mmat.sum(axis=1)[pairs_m]
                / np.maximum(tmat.sum(axis=1)[pairs_t], 1))
    cost2 = np.concatenate([-disclose * q[pairs_t], np.zeros(2 * nM)])
    cap_row = csr_matrix(np.concatenate([np.zeros(nvar), np.ones(2 * nM)])
                         [None, :])
    res2 = linprog(cost2, A_ub=cap_row,
                   b_ub=[slack_opt + 1e-12 * max(1.0, slack_opt)],
                   A_eq=A, b_eq=b, bounds=(0, None), method="highs")
    if res2.status == 0:
        res = res2
    y = res.x[:nvar]
    # worst per-message conditional-mean deviation in value units; bounded
    # above by the pool's own member-mean spread (convexity), recorded for
    # diagnostics rather than asserted — the minimal-message containment
    # pattern can be lopsided at float scale even though the exact system
    # balances.
    err = (res.x[nvar:nvar + nM] + res.x[nvar + nM:]) * (
        mscale if mscale > 0 else 1.0)
    mass_m = np.zeros(nM)
    np.add.at(mass_m, pairs_m, y * q[pairs_t])
    with np.errstate(divide="ignore", invalid="ignore"):
        gaps = np.where(mass_m > 0, err / mass_m, 0.0)
    mixing_gap = float(gaps.max()) if nM else 0.0
    covered = np.zeros(nT, dtype=bool)
    for v in range(nvar):
        if y[v] > 1e-15:
            key = (members[pairs_t[v]], msgs[pairs_m[v]])
            out[key] = out.get(key, 0.0) + float(y[v] * q[pairs_t[v]])
            covered[pairs_t[v]] = True
    for i in np.where(~covered)[0]:  # numerically all-zero row: pin one arc
        j = int(pairs_m[np.where(pairs_t == i)[0][0]])
        out[(members[i], msgs[j])] = float(q[i])
    return StrategyProfile(out, mixing_gap)


# ---------------------------------------------------------------------------
# Brute-force oracle (kept independent of the flow machinery)
# ---------------------------------------------------------------------------

def brute_force_best_pool(remaining, game: GameSpec):
    """Exhaustive best pool over all nonempty upward-closed subsets (≤ 20).

    Zero-probability types are skipped: they cannot carry posterior mass and
    the solver likewise never pools them.
    """
    rem = sorted(remaining)
    tmat = np.asarray(rem, dtype=np.int64)
    q, means = type_probs_and_means(game, tmat)
    live = np.nan_to_num(q) > 0
    rem = [t for t, ok in zip(rem, live) if ok]
    tmat, q, means = tmat[live], q[live], means[live]
    k = len(rem)
    if k > 20:
        raise SolverError("brute force capped at 20 types")
    if k == 0:
        raise SolverError("no positive-probability types to pool")

    # per-type masks of weak supersets within the remainder
    up_mask = np.zeros(k, dtype=np.int64)
    for i in range(k):
        ge = np.all(tmat >= tmat[i], axis=1)
        up_mask[i] = int(np.bitwise_or.reduce(
            (np.int64(1) << np.where(ge)[0]).astype(np.int64)))

    # a subset s is upward-closed iff the union of its members' superset
    # masks equals s; accumulate union/q-mass/value sums bit by bit
    size = 1 << k
    s_arr = np.arange(size, dtype=np.int64)
    closure = np.zeros(size, dtype=np.int64)
    A = np.zeros(size)
    B = np.zeros(size)
    for i in range(k):
        has = (s_arr >> i & 1).astype(bool)
        closure[has] |= up_mask[i]
        A[has] += q[i] * means[i]
        B[has] += q[i]
    valid = (closure == s_arr) & (B > 0)
    valid[0] = False
    vals = np.full(size, -np.inf)
    vals[valid] = A[valid] / B[valid]
    best_v = vals.max()
    tied = vals >= best_v - 1e-12
    union = int(np.bitwise_or.reduce(s_arr[tied]))
    members = [rem[i] for i in range(k) if union >> i & 1]
    sel = [i for i in range(k) if union >> i & 1]
    return members, float(np.dot(q[sel], means[sel]) / q[sel].sum())


# ---------------------------------------------------------------------------
# CSV artifacts
# ---------------------------------------------------------------------------

def emit_outcome_csv(outcome: EquilibriumOutcome, path):
    import csv
    D = outcome.game.D
    with open(path, "w", newline="", encoding="utf-8") as fh:
        wtr = csv.writer(fh)
        wtr.writerow([f"count_{d}" for d in range(D)]
                     + ["n", "posterior_mean", "payoff", "step",
                        "is_message_min"])
        for s in outcome.steps:
            midx = outcome.member_idx[s.index]
            is_min = np.zeros(len(midx), dtype=bool)
            pos = np.searchsorted(midx, outcome.message_idx[s.index])
            is_min[pos] = True
            rows = outcome.dag.tmat[midx]
            for t, i, mark in zip(rows, midx, is_min):
                wtr.writerow(list(map(int, t))
                             + [int(t.sum()), repr(float(outcome.means[i])),
                                repr(float(s.value)), s.index, int(mark)])


def emit_pool_summary_csv(outcome: EquilibriumOutcome, path):
    import csv
    with open(path, "w", newline="", encoding="utf-8") as fh:
        wtr = csv.writer(fh)
        wtr.writerow(["step", "value", "n_members", "n_messages"])
        for s in outcome.steps:
            wtr.writerow([s.index, repr(float(s.value)),
                          len(outcome.member_idx[s.index]),
                          len(outcome.message_idx[s.index])])


def load_outcome_csv(game: GameSpec, path, cap: int | None = None
                     ) -> EquilibriumOutcome:
    """Rebuild an equilibrium outcome from an emit_outcome_csv artifact.

    The lattice, probabilities, and posterior means are recomputed from the
    game; only the pool structure (step assignment, values, minimal-message
    flags) comes from the file. The loaded outcome is re-checked against the
    no-deviation and Bayes invariants, so a file produced from a different
    configuration is rejected rather than silently trusted.
    """
    import csv
    dag, q, means = _precompute(game, cap)
    D = game.D
    step_rows: dict[int, list[int]] = {}
    msg_rows: dict[int, list[int]] = {}
    vals: dict[int, float] = {}
    with open(path, newline="", encoding="utf-8") as fh:
        rdr = csv.reader(fh)
        header = next(rdr)
        want = [f"count_{d}" for d in range(D)] + [
            "n", "posterior_mean", "payoff", "step", "is_message_min"]
        if header != want:
            raise SolverError(f"unexpected outcome file header in {path}")
        for row in rdr:
            t = tuple(int(x) for x in row[:D])
            i = dag.index_of(t)
            s = int(row[D + 3])
            step_rows.setdefault(s, []).append(i)
            if int(row[D + 4]):
                msg_rows.setdefault(s, []).append(i)
            v = float(row[D + 2])
            if abs(vals.setdefault(s, v) - v) > 1e-12:
                raise SolverError("inconsistent step values in outcome file")
            if abs(float(row[D + 1]) - means[i]) > 1e-9:
                raise SolverError(
                    "outcome file does not match this configuration "
                    f"(posterior mean mismatch for type {t})")
    n_steps = len(step_rows)
    if sorted(step_rows) != list(range(n_steps)):
        raise SolverError("outcome file has missing step indices")
    step_of = np.full(dag.n_nodes, -1, dtype=np.int64)
    member_idx, message_idx, steps = [], [], []
    eager = dag.n_nodes <= _EAGER_TUPLE_LIMIT
    for s in range(n_steps):
        if s and vals[s] > vals[s - 1] + 1e-12:
            raise SolverError("outcome file steps not in descending order")
        midx = np.sort(np.asarray(step_rows[s], dtype=np.int64))
        msg = np.sort(np.asarray(msg_rows.get(s, []), dtype=np.int64))
        if len(msg) == 0:
            raise SolverError(f"step {s} has no minimal announcement")
        step_of[midx] = s
        member_idx.append(midx)
        message_idx.append(msg)
        steps.append(PoolStep(
            s, vals[s],
            [tuple(map(int, row)) for row in dag.tmat[msg]] if eager else [],
            [tuple(map(int, row)) for row in dag.tmat[midx]] if eager else []))
    missing = dag.real & (step_of < 0) & (q > 0)
    if missing.any():
        raise SolverError("outcome file does not cover every possible type")
    out = EquilibriumOutcome(game, steps, dag, q, means, step_of,
                             member_idx, message_idx)
    _check_assignment_monotone(dag, step_of)
    _check_bayes(out)
    return out
