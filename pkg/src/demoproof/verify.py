"""Probabilistic model checking of Markov chains and MDPs.

Reach-avoid values are the least fixed point of

    x(s) = 1                      on goal states,
    x(s) = 0                      on bad states and states that cannot reach
                                  the goal while avoiding bad (graph-based
                                  zero classification),
    x(s) = sum_t P(s, t) x(t)     elsewhere (max over actions for MDPs),

iterated from below to an absolute residual. The default Gauss-Seidel mode
runs as colored sweeps: states are partitioned so that no two states in one
group read each other, which makes every group update vectorizable while
remaining exactly the sequential Gauss-Seidel iteration for the group order.
States are ordered goal-outward (reverse reachability) so values propagate
far in each sweep. The Jacobi mode is a plain synchronous fixed-point
iteration; both modes converge to the same least fixed point.

The conditional expected cost re-uses the reach probabilities w: the success
cost mass z(s) = E[steps * 1{success}] satisfies z = P z + P w on states with
w > 0, and the conditional cost is z(initial) / w(initial).
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, replace
from typing import Iterable, List, Optional, Sequence, Tuple

import numpy as np
from scipy import sparse
from scipy.sparse import csgraph
from scipy.sparse.linalg import spsolve

from demoproof.gridworld import ScenarioModel, GridState
from demoproof.models import (
    EXPECTED_COST,
    REACH_AVOID,
    InvalidSpec,
    Mc,
    Mdp,
    ModelError,
    ObservationStrategy,
    Spec,
    induce_mc,
)

DEFAULT_TOL = 1e-10
DEFAULT_MAX_ITER = 1_000_000
GAUSS_SEIDEL = "gauss-seidel"
JACOBI = "jacobi"

SAT = "SAT"
UNSAT = "UNSAT"


class NoConvergence(ModelError):
    def __init__(self, residual: float, iterations: int):
        super().__init__(f"no convergence after {iterations} iterations "
                         f"(residual {residual:.3e})")
        self.residual = residual
        self.iterations = iterations


@dataclass(frozen=True)
class CheckResult:
    """Outcome of one model-checking run.

    per_state_prob is indexed by state id; goal states carry exactly 1 and
    graph-classified zero states exactly 0. conditional_expected_cost is None
    when the goal is unreachable from the initial state ("undefined").
    """

    per_state_prob: np.ndarray
    value_at_initial: float
    conditional_expected_cost: Optional[float]
    verdict: Optional[str]
    residual: float
    iterations: int
    method: str


def _mc_matrix(mc: Mc) -> sparse.csr_array:
    rows: List[int] = []
    cols: List[int] = []
    data: List[float] = []
    for s, dist in enumerate(mc.transitions):
        for t, p in dist.entries:
            rows.append(s)
            cols.append(t)
            data.append(p)
    n = mc.num_states
    return sparse.csr_array((data, (rows, cols)), shape=(n, n))


def _action_matrices(mdp: Mdp) -> List[sparse.csr_array]:
    n = mdp.num_states
    mats = []
    for a in range(len(mdp.actions)):
        rows: List[int] = []
        cols: List[int] = []
        data: List[float] = []
        for s in range(n):
            dist = mdp.transitions[s].get(a)
            if dist is None:
                continue
            for t, p in dist.entries:
                rows.append(s)
                cols.append(t)
                data.append(p)
        mats.append(sparse.csr_array((data, (rows, cols)), shape=(n, n)))
    return mats


def _check_sets(n: int, bad: Iterable[int], goal: Iterable[int]) -> Tuple[set, set]:
    bad, goal = set(bad), set(goal)
    if bad & goal:
        raise InvalidSpec("bad and goal sets overlap")
    for s in bad | goal:
        if not (0 <= s < n):
            raise InvalidSpec(f"state {s} out of range")
    return bad, goal


def _reach_levels(mats: Sequence[sparse.csr_array], bad: set, goal: set,
                  n: int) -> np.ndarray:
    """Reverse BFS from the goal through non-bad states over the union graph.

    Returns per-state BFS level; -1 marks states that cannot reach the goal
    while avoiding bad states (their value is exactly 0).
    """
    union = mats[0] if len(mats) == 1 else sum(mats[1:], start=mats[0])
    pred = union.T.tocsr()
    indptr, indices = pred.indptr, pred.indices
    level = np.full(n, -1, dtype=np.int64)
    dq: deque = deque()
    for g in sorted(goal):
        level[g] = 0
        dq.append(g)
    while dq:
        t = dq.popleft()
        for s in indices[indptr[t]:indptr[t + 1]]:
            if level[s] == -1 and s not in bad and s not in goal:
                level[s] = level[t] + 1
                dq.append(s)
    return level


def _color_groups(mats_tt: Sequence[sparse.csr_array],
                  order: np.ndarray) -> List[np.ndarray]:
    """Greedy coloring of the (symmetrized) dependency graph in the given
    order; within one color no state reads another of the same color."""
    m = mats_tt[0].shape[0]
    structure = mats_tt[0] if len(mats_tt) == 1 else sum(mats_tt[1:], start=mats_tt[0])
    sym = (structure + structure.T).tocsr()
    indptr, indices = sym.indptr, sym.indices
    color = np.full(m, -1, dtype=np.int64)
    for node in order:
        taken = {color[t] for t in indices[indptr[node]:indptr[node + 1]]}
        c = 0
        while c in taken:
            c += 1
        color[node] = c
    return [np.where(color == c)[0] for c in range(int(color.max()) + 1)] if m else []


def _solve_lfp(mats_tt: Sequence[sparse.csr_array], bs: Sequence[np.ndarray],
               order: np.ndarray, method: str, tol: float,
               max_iter: int) -> Tuple[np.ndarray, int, float]:
    """Iterate x = max_a (b_a + P_a x) from 0 up to the least fixed point."""
    m = mats_tt[0].shape[0]
    x = np.zeros(m)
    if m == 0:
        return x, 0, 0.0
    residual = float("inf")
    if method == JACOBI:
        for sweep in range(1, max_iter + 1):
            best = np.full(m, -np.inf)
            for mat, b in zip(mats_tt, bs):
                np.maximum(best, b + mat @ x, out=best)
            np.maximum(best, 0.0, out=best)
            residual = float(np.max(np.abs(best - x)))
            x = best
            if residual <= tol:
                return x, sweep, residual
        raise NoConvergence(residual, max_iter)
    if method != GAUSS_SEIDEL:
        raise ModelError(f"unknown solver method {method!r}")

    groups = _color_groups(mats_tt, order)
    sliced = []
    for idx in groups:
        per_action = []
        for mat, b in zip(mats_tt, bs):
            rows = mat[idx]
            diag = np.asarray(mat.diagonal())[idx]
            denom = 1.0 - diag
            per_action.append((rows, diag, np.where(denom > 1e-12, denom, 1.0),
                               denom > 1e-12, b[idx]))
        sliced.append((idx, per_action))
    for sweep in range(1, max_iter + 1):
        residual = 0.0
        for idx, per_action in sliced:
            best = np.full(len(idx), -np.inf)
            old = x[idx]
            for rows, diag, denom, solvable, b in per_action:
                val = (b + rows @ x - diag * old) / denom
                val = np.where(solvable, val, 0.0)
                np.maximum(best, val, out=best)
            np.maximum(best, 0.0, out=best)
            delta = float(np.max(np.abs(best - old))) if len(idx) else 0.0
            residual = max(residual, delta)
            x[idx] = best
        if residual <= tol:
            return x, sweep, residual
    raise NoConvergence(residual, max_iter)


def _max_reach(mats: Sequence[sparse.csr_array], bad: set, goal: set, n: int,
               method: str, tol: float, max_iter: int
               ) -> Tuple[np.ndarray, int, float]:
    level = _reach_levels(mats, bad, goal, n)
    maybe = np.where(level > 0)[0]
    x = np.zeros(n)
    for g in goal:
        x[g] = 1.0
    if len(maybe) == 0:
        return x, 0, 0.0
    order = np.argsort(level[maybe], kind="stable")
    goal_idx = np.array(sorted(goal), dtype=np.int64)
    mats_tt = [mat[maybe][:, maybe] for mat in mats]
    bs = [np.asarray(mat[maybe][:, goal_idx].sum(axis=1)).ravel() for mat in mats]
    sol, iters, residual = _solve_lfp(mats_tt, bs, order, method, tol, max_iter)
    x[maybe] = sol
    return x, iters, residual


def reach_avoid_prob(mc: Mc, bad: Iterable[int], goal: Iterable[int], *,
                     method: str = GAUSS_SEIDEL, tol: float = DEFAULT_TOL,
                     max_iter: int = DEFAULT_MAX_ITER) -> CheckResult:
    """Per-state probability of reaching `goal` while avoiding `bad`."""
    bad, goal = _check_sets(mc.num_states, bad, goal)
    mats = [_mc_matrix(mc)]
    x, iters, residual = _max_reach(mats, bad, goal, mc.num_states,
                                    method, tol, max_iter)
    return CheckResult(per_state_prob=x, value_at_initial=float(x[mc.initial]),
                       conditional_expected_cost=None, verdict=None,
                       residual=residual, iterations=iters, method=method)


def mdp_max_reach(mdp: Mdp, bad: Iterable[int], goal: Iterable[int], *,
                  method: str = GAUSS_SEIDEL, tol: float = DEFAULT_TOL,
                  max_iter: int = DEFAULT_MAX_ITER) -> CheckResult:
    """Maximal reach-avoid probability over all strategies of the MDP.

    For a POMDP this bounds what any observation-based strategy can achieve.
    """
    bad, goal = _check_sets(mdp.num_states, bad, goal)
    mats = _action_matrices(mdp)
    x, iters, residual = _max_reach(mats, bad, goal, mdp.num_states,
                                    method, tol, max_iter)
    return CheckResult(per_state_prob=x, value_at_initial=float(x[mdp.initial]),
                       conditional_expected_cost=None, verdict=None,
                       residual=residual, iterations=iters, method=method)


def conditional_expected_cost(mc: Mc, bad: Iterable[int], goal: Iterable[int], *,
                              reach: Optional[CheckResult] = None,
                              method: str = GAUSS_SEIDEL, tol: float = DEFAULT_TOL,
                              max_iter: int = DEFAULT_MAX_ITER) -> Optional[float]:
    """Expected steps to reach the goal, conditioned on safe success.

    Returns None ("undefined") when the initial state cannot reach the goal
    at all. Each transition costs 1.
    """
    cost, _, _ = _cost_with_stats(mc, bad, goal, reach=reach, method=method,
                                  tol=tol, max_iter=max_iter)
    return cost


def _cost_with_stats(mc: Mc, bad: Iterable[int], goal: Iterable[int], *,
                     reach: Optional[CheckResult], method: str, tol: float,
                     max_iter: int) -> Tuple[Optional[float], int, float]:
    bad, goal = _check_sets(mc.num_states, bad, goal)
    if reach is None:
        reach = reach_avoid_prob(mc, bad, goal, method=method, tol=tol,
                                 max_iter=max_iter)
    w = reach.per_state_prob
    if w[mc.initial] <= 0.0:
        return None, 0, 0.0
    n = mc.num_states
    goal_mask = np.zeros(n, dtype=bool)
    goal_mask[sorted(goal)] = True
    maybe = np.where((w > 0.0) & ~goal_mask)[0]
    if len(maybe) == 0:
        return 0.0, 0, 0.0
    P = _mc_matrix(mc)
    c_full = P @ w
    level = _reach_levels([P], bad, goal, n)
    order = np.argsort(level[maybe], kind="stable")
    mats_tt = [P[maybe][:, maybe]]
    bs = [c_full[maybe]]
    sol, iters, residual = _solve_lfp(mats_tt, bs, order, method, tol, max_iter)
    z = np.zeros(n)
    z[maybe] = sol
    return float(z[mc.initial] / w[mc.initial]), iters, residual


def check_spec(mc: Mc, spec: Spec, *, method: str = GAUSS_SEIDEL,
               tol: float = DEFAULT_TOL, max_iter: int = DEFAULT_MAX_ITER,
               with_cost: Optional[bool] = None) -> CheckResult:
    """Verdict of an induced chain against a requirement.

    Probability specs compare the reach-avoid value at the initial state to
    the threshold; cost specs compare the conditional expected cost (an
    undefined cost cannot satisfy any bound).
    """
    res = reach_avoid_prob(mc, spec.bad, spec.goal, method=method, tol=tol,
                           max_iter=max_iter)
    want_cost = with_cost if with_cost is not None else spec.kind == EXPECTED_COST
    cost = None
    iters, residual = res.iterations, res.residual
    if want_cost:
        cost, it2, r2 = _cost_with_stats(mc, spec.bad, spec.goal, reach=res,
                                         method=method, tol=tol, max_iter=max_iter)
        iters += it2
        residual = max(residual, r2)
    if spec.kind == REACH_AVOID:
        verdict = SAT if res.value_at_initial >= spec.threshold else UNSAT
    else:
        verdict = SAT if cost is not None and cost <= spec.threshold else UNSAT
    return replace(res, conditional_expected_cost=cost, verdict=verdict,
                   iterations=iters, residual=residual)


def occupancy(mc: Mc, stop: Iterable[int]) -> np.ndarray:
    """Expected visits per state from the initial state, stopping at `stop`.

    States inside a recurrent class of the stopped chain that is reachable
    from the initial state are visited infinitely often and get numpy.inf;
    the transient part is solved exactly as a sparse linear system.
    """
    n = mc.num_states
    stop = set(stop)
    eta = np.zeros(n)
    if mc.initial in stop:
        return eta
    alive = np.array([s not in stop for s in range(n)], dtype=bool)
    alive_idx = np.where(alive)[0]
    pos = {int(s): i for i, s in enumerate(alive_idx)}
    P = _mc_matrix(mc)
    sub = P[alive_idx][:, alive_idx].tocsr()

    # reachability from the initial state inside the stopped chain
    m = len(alive_idx)
    reachable = np.zeros(m, dtype=bool)
    dq: deque = deque([pos[mc.initial]])
    reachable[pos[mc.initial]] = True
    indptr, indices = sub.indptr, sub.indices
    while dq:
        s = dq.popleft()
        for t in indices[indptr[s]:indptr[s + 1]]:
            if not reachable[t]:
                reachable[t] = True
                dq.append(t)

    # recurrent classes: strongly connected components with no leak
    ncomp, comp = csgraph.connected_components(sub, directed=True,
                                               connection="strong")
    leaks = np.zeros(ncomp, dtype=bool)
    stop_idx = np.where(~alive)[0]
    if len(stop_idx):
        to_stop = np.asarray(P[alive_idx][:, stop_idx].sum(axis=1)).ravel()
        for i in np.where(to_stop > 0.0)[0]:
            leaks[comp[i]] = True
    rows_nz, cols_nz = sub.nonzero()
    for i, j in zip(rows_nz, cols_nz):
        if comp[i] != comp[j]:
            leaks[comp[i]] = True
    recurrent = ~leaks[comp]

    transient = np.where(~recurrent)[0]
    if len(transient):
        trans_sub = sub[transient][:, transient]
        e = np.zeros(len(transient))
        init_local = pos[mc.initial]
        where = np.where(transient == init_local)[0]
        if len(where):
            e[where[0]] = 1.0
        a_mat = (sparse.identity(len(transient), format="csc")
                 - trans_sub.T.tocsc())
        sol = spsolve(a_mat, e)
        sol = np.maximum(np.atleast_1d(sol), 0.0)
        eta[alive_idx[transient]] = sol
    eta[alive_idx[recurrent & reachable]] = np.inf
    eta[alive_idx[~reachable]] = 0.0
    return eta


def heatmap(model: ScenarioModel, strategy: ObservationStrategy, *,
            method: str = GAUSS_SEIDEL, tol: float = DEFAULT_TOL,
            max_iter: int = DEFAULT_MAX_ITER) -> List[List[Optional[float]]]:
    """Reach-avoid value for every legal start cell, as grid[y][x].

    Cells where the agent cannot start (landmarks, the obstacle's start cell)
    are None. One per-state check covers all starts because the value from a
    state does not depend on where the chain is rooted.
    """
    mc = induce_mc(model.pomdp, strategy)
    res = reach_avoid_prob(mc, model.bad, model.goal, method=method, tol=tol,
                           max_iter=max_iter)
    config = model.config
    free = set(config.free_positions())
    grid: List[List[Optional[float]]] = []
    for y in range(config.height):
        row: List[Optional[float]] = []
        for x in range(config.width):
            if (x, y) not in free:
                row.append(None)
            else:
                sid = model.state_id(GridState(agent=(x, y),
                                               obstacle=config.obstacle_start))
                row.append(float(res.per_state_prob[sid]))
        grid.append(row)
    return grid
